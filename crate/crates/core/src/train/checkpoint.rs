//! Checkpoint container: magic "LVCK", version, a JSON header (kind,
//! kind-specific metadata, tensor index), then the parameter table as
//! concatenated LVT records in index order. Writes are atomic and
//! round-trips are bit-exact.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::{read_tensor_from, write_tensor_to};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    index: Vec<IndexEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: serde_json::Value,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn new(kind: &str, meta: serde_json::Value, params: ParamSet) -> Self {
        Checkpoint { kind: kind.to_string(), meta, params }
    }

    pub fn meta_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.meta.clone()).map_err(|e| Error::Format {
            path: "<checkpoint meta>".into(),
            detail: e.to_string(),
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let index: Vec<IndexEntry> = ckpt
        .params
        .iter()
        .map(|(name, e)| IndexEntry { name: name.to_string(), shape: e.shape.clone() })
        .collect();
    let header = Header { kind: ckpt.kind.clone(), meta: ckpt.meta.clone(), index };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| Error::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;

    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for (name, e) in ckpt.params.iter() {
        let t = crate::tensor::Tensor::new(&e.shape, e.values.clone()).map_err(|err| {
            Error::Format {
                path: path.display().to_string(),
                detail: format!("parameter {name}: {err}"),
            }
        })?;
        write_tensor_to(&mut buf, &t).expect("vec write");
    }
    crate::fsutil::atomic_write(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let display = path.display().to_string();
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic).map_err(|e| Error::io(&display, e))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format { path: display, detail: format!("bad magic {magic:?}") });
    }
    let mut u32buf = [0u8; 4];
    f.read_exact(&mut u32buf).map_err(|e| Error::io(&display, e))?;
    let version = u32::from_le_bytes(u32buf);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            path: display,
            detail: format!("version {version} != supported {CHECKPOINT_VERSION}"),
        });
    }
    let mut u64buf = [0u8; 8];
    f.read_exact(&mut u64buf).map_err(|e| Error::io(&display, e))?;
    let header_len = u64::from_le_bytes(u64buf) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes).map_err(|e| Error::io(&display, e))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format { path: display.clone(), detail: e.to_string() })?;

    let mut params = ParamSet::new();
    for entry in &header.index {
        let t = read_tensor_from(&mut f, &display)?;
        if t.shape() != entry.shape.as_slice() {
            return Err(Error::Format {
                path: display,
                detail: format!("{}: shape {:?} != index {:?}", entry.name, t.shape(), entry.shape),
            });
        }
        params.insert(&entry.name, t.shape(), t.to_vec());
    }
    Ok(Checkpoint { kind: header.kind, meta: header.meta, params })
}
