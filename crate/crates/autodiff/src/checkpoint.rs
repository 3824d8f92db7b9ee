//! Parameter checkpoints: a flat little-endian `f64` blob (`<base>.bin`)
//! plus a JSON manifest (`<base>.json`) giving name, shape and byte offset
//! of each parameter, and free-form metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::tensor::{ParamStore, Tensor};
use crate::{Error, Result};

pub const FORMAT: &str = "ecgbench-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub total_bytes: u64,
    pub params: Vec<ParamEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn bin_path(base: &Path) -> PathBuf {
    with_suffix(base, "bin")
}

pub fn manifest_path(base: &Path) -> PathBuf {
    with_suffix(base, "json")
}

fn with_suffix(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn save(store: &ParamStore, base: &Path, meta: serde_json::Value) -> Result<Manifest> {
    let mut blob = Vec::with_capacity(store.numel() * 8);
    let mut params = Vec::with_capacity(store.len());
    for (_, name, t) in store.iter() {
        params.push(ParamEntry {
            name: name.to_string(),
            shape: t.shape.clone(),
            offset: blob.len() as u64,
        });
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        total_bytes: blob.len() as u64,
        params,
        meta,
    };
    if let Some(dir) = base.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(bin_path(base), &blob)?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(manifest_path(base), text + "\n")?;
    Ok(manifest)
}

pub fn load(base: &Path) -> Result<(ParamStore, Manifest)> {
    let text = fs::read_to_string(manifest_path(base))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
        Error::Checkpoint(format!(
            "{}: line {} column {}: {e}",
            manifest_path(base).display(),
            e.line(),
            e.column()
        ))
    })?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format `{}`", manifest.format)));
    }
    let blob = fs::read(bin_path(base))?;
    if blob.len() as u64 != manifest.total_bytes {
        return Err(Error::Checkpoint(format!(
            "blob is {} bytes, manifest says {}",
            blob.len(),
            manifest.total_bytes
        )));
    }
    let mut store = ParamStore::new();
    for entry in &manifest.params {
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + n * 8;
        if end > blob.len() {
            return Err(Error::Checkpoint(format!(
                "`{}` at byte {start} runs past end of blob",
                entry.name
            )));
        }
        let data = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        store.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?)?;
    }
    Ok((store, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("model");
        let mut s = ParamStore::new();
        s.insert("a", Tensor::new(vec![2, 2], vec![1.0, -0.1, 1e-300, 3.5]).unwrap())
            .unwrap();
        s.insert("b", Tensor::scalar(std::f64::consts::PI)).unwrap();
        let m = save(&s, &base, serde_json::json!({"step": 3})).unwrap();
        assert_eq!(m.params[1].offset, 32);
        let (back, manifest) = load(&base).unwrap();
        assert_eq!(manifest.meta["step"], 3);
        for ((_, n1, t1), (_, n2, t2)) in s.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape, t2.shape);
            assert_eq!(t1.data, t2.data);
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("m");
        let mut s = ParamStore::new();
        s.insert("a", Tensor::zeros(vec![4])).unwrap();
        save(&s, &base, serde_json::Value::Null).unwrap();
        fs::write(bin_path(&base), [0u8; 8]).unwrap();
        assert!(matches!(load(&base), Err(Error::Checkpoint(_))));
    }
}
