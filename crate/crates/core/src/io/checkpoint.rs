use std::path::{Path, PathBuf};

use super::{format_err, write_atomic};
use crate::config::RunConfig;
use crate::error::Result;
use crate::mvs::MvsModel;
use crate::numeric::{ParamStore, Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MVSMCKP1";
const TAG_F64: u8 = 0;
const TAG_F32: u8 = 1;

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

/// Binary layout: magic, `u32` count, then per tensor `u32` name length,
/// UTF-8 name, `u8` dtype tag, `u32` rank, `u64` extents and raw
/// little-endian scalars. The config manifest goes to `<path>.cfg`.
pub fn write_checkpoint(path: &Path, store: &ParamStore, manifest: &str) -> Result<()> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    let tag = if std::mem::size_of::<Real>() == 8 { TAG_F64 } else { TAG_F32 };
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(tag);
        out.extend_from_slice(&(p.value.ndim() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &out)?;
    write_atomic(&manifest_path(path), manifest.as_bytes())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Named tensors in file order and the manifest text, if present.
pub fn read_checkpoint(path: &Path) -> Result<(Vec<(String, Tensor)>, Option<String>)> {
    let bytes = std::fs::read(path)?;
    let err = |r: &str| format_err("checkpoint", path, r);
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(err("bad magic"));
    }
    let count = r.u32().ok_or_else(|| err("truncated count"))?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let parsed = (|| {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec()).ok()?;
            let tag = r.take(1)?[0];
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Option<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data: Vec<Real> = match tag {
                TAG_F64 => r.take(8 * numel)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Real).collect(),
                TAG_F32 => r.take(4 * numel)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as Real).collect(),
                _ => return None,
            };
            Some((name, shape, data))
        })();
        let (name, shape, data) = parsed.ok_or_else(|| err("truncated or malformed tensor record"))?;
        out.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(err("trailing bytes"));
    }
    let mp = manifest_path(path);
    let manifest = if mp.exists() { Some(std::fs::read_to_string(mp)?) } else { None };
    Ok((out, manifest))
}

/// Writes the model parameters with `cfg` as the manifest.
pub fn save_model(path: &Path, store: &ParamStore, cfg: &RunConfig) -> Result<()> {
    write_checkpoint(path, store, &cfg.to_text())
}

/// Rebuilds the model described by the manifest and loads its parameters.
/// Every model parameter must be present exactly once.
pub fn load_model(path: &Path) -> Result<(RunConfig, MvsModel, ParamStore)> {
    let (tensors, manifest) = read_checkpoint(path)?;
    let manifest = manifest.ok_or_else(|| format_err("checkpoint", path, "missing .cfg manifest"))?;
    let cfg = RunConfig::parse(&manifest)?;
    let mut store = ParamStore::new();
    let model = MvsModel::new(&mut store, cfg.model.clone(), cfg.train.seed)?;
    if tensors.len() != store.len() {
        return Err(format_err("checkpoint", path, format!("{} tensors for a model with {}", tensors.len(), store.len())));
    }
    let mut seen = std::collections::HashSet::new();
    for (name, t) in tensors {
        if !seen.insert(name.clone()) {
            return Err(format_err("checkpoint", path, format!("duplicate tensor {name}")));
        }
        store.load(&name, t).map_err(|e| format_err("checkpoint", path, e.to_string()))?;
    }
    Ok((cfg, model, store))
}
