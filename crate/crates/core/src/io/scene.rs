use std::path::{Path, PathBuf};

use super::{format_err, read_camera, read_pairs, read_pfm, read_ppm, write_camera, write_pairs, write_pfm, write_ppm, PairList};
use crate::error::{bail_arg, Result};
use crate::mvs::CameraView;

/// Calibrated views plus the source ranking for each reference.
///
/// On disk: `images/NNNNNNNN.ppm`, `cams/NNNNNNNN_cam.txt`, optional
/// `depths/NNNNNNNN.pfm` and `pair.txt`.
#[derive(Clone, Debug)]
pub struct Scene {
    pub views: Vec<CameraView>,
    pub pairs: PairList,
}

impl Scene {
    pub fn image_path(dir: &Path, i: usize) -> PathBuf {
        dir.join("images").join(format!("{i:08}.ppm"))
    }

    pub fn camera_path(dir: &Path, i: usize) -> PathBuf {
        dir.join("cams").join(format!("{i:08}_cam.txt"))
    }

    pub fn depth_path(dir: &Path, i: usize) -> PathBuf {
        dir.join("depths").join(format!("{i:08}.pfm"))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        for (i, v) in self.views.iter().enumerate() {
            write_ppm(&Self::image_path(dir, i), &v.image)?;
            write_camera(&Self::camera_path(dir, i), &v.camera)?;
            if let Some(d) = &v.gt_depth {
                write_pfm(&Self::depth_path(dir, i), d)?;
            }
        }
        write_pairs(&dir.join("pair.txt"), &self.pairs)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let pairs = read_pairs(&dir.join("pair.txt"))?;
        let n = pairs.len();
        let mut views = Vec::with_capacity(n);
        for i in 0..n {
            let dp = Self::depth_path(dir, i);
            views.push(CameraView {
                camera: read_camera(&Self::camera_path(dir, i))?,
                image: read_ppm(&Self::image_path(dir, i))?,
                gt_depth: if dp.exists() { Some(read_pfm(&dp)?) } else { None },
            });
        }
        let scene = Self { views, pairs };
        scene.validate().map_err(|e| format_err("scene", dir, e.to_string()))?;
        Ok(scene)
    }

    /// Pair-list references, image extents and depth-map extents are consistent.
    pub fn validate(&self) -> Result<()> {
        let n = self.views.len();
        if n == 0 {
            bail_arg!("scene has no views");
        }
        for (r, srcs) in &self.pairs {
            if let Some(bad) = std::iter::once(r).chain(srcs.iter().map(|(v, _)| v)).find(|&&v| v >= n) {
                bail_arg!("pair list refers to view {bad} but the scene has {n}");
            }
        }
        let (h, w) = (self.views[0].height(), self.views[0].width());
        if h % 16 != 0 || w % 16 != 0 {
            bail_arg!("image extents {h}x{w} are not multiples of 16");
        }
        for (i, v) in self.views.iter().enumerate() {
            if v.image.shape() != [3, h, w] {
                bail_arg!("view {i} image {:?} differs from [3,{h},{w}]", v.image.shape());
            }
            if v.gt_depth.as_ref().is_some_and(|d| d.shape() != [h, w]) {
                bail_arg!("view {i} depth map does not match its image");
            }
        }
        Ok(())
    }

    /// The reference followed by its `count − 1` best-ranked sources.
    pub fn select(&self, reference: usize, count: usize) -> Result<Vec<CameraView>> {
        let Some((_, srcs)) = self.pairs.iter().find(|(r, _)| *r == reference) else {
            bail_arg!("view {reference} has no pair-list entry");
        };
        if count < 2 || srcs.len() + 1 < count {
            bail_arg!("view {reference} has {} sources; {count} views requested", srcs.len());
        }
        let mut out = vec![self.views[reference].clone()];
        out.extend(srcs.iter().take(count - 1).map(|&(v, _)| self.views[v].clone()));
        Ok(out)
    }
}
