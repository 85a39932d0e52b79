//! File formats: PFM/PPM/PGM images, MVSNet-style camera and pair files,
//! binary checkpoints and scene bundles. Writers are atomic.

mod camera;
mod checkpoint;
mod image;
mod scene;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use camera::{read_camera, read_pairs, write_camera, write_pairs, PairList};
pub use checkpoint::{load_model, read_checkpoint, save_model, write_checkpoint, CHECKPOINT_MAGIC};
pub use image::{read_pfm, read_ppm, write_pgm, write_pfm, write_ppm};
pub use scene::Scene;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().ok_or_else(|| Error::Argument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn format_err(kind: &'static str, path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { kind, path: path.to_path_buf(), reason: reason.into() }
}
