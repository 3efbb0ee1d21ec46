//! Checkpoint archive.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "VCNETCKP"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      8     header length N, u64 little-endian
//! 20      N     UTF-8 JSON header (CheckpointHeader)
//! 20+N    ...   tensor payload: f64 little-endian values, tensors
//!               concatenated in header order
//! ```
//!
//! The header lists every tensor (name = module path, shape, kind, offset
//! and length in values), the model configuration, the training
//! configuration and its SHA-256, the epoch and the class centres. The
//! centres are also stored bit-exactly in the payload as `vqcl.centers`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, Network};
use crate::error::{Error, Result};
use crate::nn::{Kind, Visit};
use crate::vqcl::ClassCenters;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VCNETCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
const CENTERS_TENSOR: &str = "vqcl.centers";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentersRecord {
    pub iteration: u64,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub model: ModelConfig,
    pub train_config: serde_json::Value,
    pub config_hash: String,
    pub epoch: usize,
    pub centers: CentersRecord,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub payload: Vec<f64>,
}

/// Hex SHA-256 of the canonical (sorted-key) JSON of `config`.
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).expect("JSON value serialises");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    /// Snapshot of the network tensors and class centres.
    pub fn capture(
        network: &mut Network,
        centers: &ClassCenters,
        epoch: usize,
        train_config: serde_json::Value,
    ) -> Self {
        let mut tensors = Vec::new();
        let mut payload = Vec::new();
        network.visit("", &mut |name, p, kind| {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: p.shape.clone(),
                kind: match kind {
                    Kind::Learnable => "learnable".into(),
                    Kind::Buffer => "buffer".into(),
                },
                offset: payload.len(),
                len: p.value.len(),
            });
            payload.extend_from_slice(&p.value);
        });
        tensors.push(TensorEntry {
            name: CENTERS_TENSOR.into(),
            shape: vec![centers.num_classes(), centers.dim()],
            kind: "buffer".into(),
            offset: payload.len(),
            len: centers.num_classes() * centers.dim(),
        });
        for v in centers.vectors() {
            payload.extend_from_slice(v);
        }
        Checkpoint {
            header: CheckpointHeader {
                version: CHECKPOINT_VERSION,
                model: network.config().clone(),
                config_hash: config_hash(&train_config),
                train_config,
                epoch,
                centers: CentersRecord { iteration: centers.iteration(), vectors: centers.vectors().to_vec() },
                tensors,
            },
            payload,
        }
    }

    fn entry(&self, name: &str) -> Option<&TensorEntry> {
        self.header.tensors.iter().find(|t| t.name == name)
    }

    /// Rebuilds the network described by the header and loads its tensors.
    pub fn network(&self) -> Result<Network> {
        const OP: &str = "model::Checkpoint::network";
        let mut net = Network::new(self.header.model.clone(), 0)?;
        let mut err = None;
        let mut seen = 0usize;
        net.visit("", &mut |name, p, _| {
            if err.is_some() {
                return;
            }
            match self.entry(name) {
                Some(t) if t.shape == p.shape && t.len == p.value.len() => {
                    p.value.copy_from_slice(&self.payload[t.offset..t.offset + t.len]);
                    seen += 1;
                }
                Some(t) => {
                    err = Some(Error::shape(
                        OP,
                        format!("{name}: checkpoint shape {:?} vs model {:?}", t.shape, p.shape),
                    ));
                }
                None => err = Some(Error::invalid(OP, format!("checkpoint lacks tensor {name}"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let expected = self.header.tensors.iter().filter(|t| t.name != CENTERS_TENSOR).count();
        if seen != expected {
            return Err(Error::invalid(OP, format!("checkpoint has {expected} model tensors, model uses {seen}")));
        }
        Ok(net)
    }

    pub fn centers(&self) -> Result<ClassCenters> {
        let t = self
            .entry(CENTERS_TENSOR)
            .ok_or_else(|| Error::invalid("model::Checkpoint::centers", "checkpoint lacks class centres"))?;
        let (l, d) = (t.shape[0], t.shape[1]);
        let vectors = (0..l).map(|k| self.payload[t.offset + k * d..t.offset + (k + 1) * d].to_vec()).collect();
        // stored vectors are already unit norm; bypass renormalisation to stay bit-exact
        ClassCenters::from_raw(vectors, self.header.centers.iteration)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serialises");
        let mut out = Vec::with_capacity(20 + header.len() + self.payload.len() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        const OP: &str = "model::Checkpoint::load";
        let bad = |msg: &str| Error::format(OP, path, msg);
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[20..header_end]).map_err(|e| Error::format(OP, path, e))?;
        let body = &bytes[header_end..];
        if body.len() % 8 != 0 {
            return Err(bad("payload is not a whole number of f64 values"));
        }
        let payload: Vec<f64> =
            body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if let Some(t) = header
            .tensors
            .iter()
            .find(|t| t.offset + t.len > payload.len() || t.shape.iter().product::<usize>() != t.len)
        {
            return Err(bad(&format!("tensor {} out of bounds or inconsistent", t.name)));
        }
        Ok(Checkpoint { header, payload })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        const OP: &str = "model::Checkpoint::save";
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(OP, parent, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(OP, path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io("model::Checkpoint::load", path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
