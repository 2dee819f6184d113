//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "RSFMCKPT"
//! version  u32 LE
//! hlen     u64 LE   length of the JSON header in bytes
//! header   hlen bytes of UTF-8 JSON
//! blobs    f32 LE values, one blob per header tensor, in header order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelKind};
use crate::autograd::Module;
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"RSFMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: ModelKind,
    config: ModelConfig,
    stats: NormStats,
    tensors: Vec<TensorEntry>,
}

/// A trained model together with the normalization it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub stats: NormStats,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, stats: NormStats) -> Self {
        Checkpoint {
            kind: model.kind(),
            config: model.config().clone(),
            stats,
            tensors: model
                .params()
                .into_iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Rebuild the model and load the stored parameters into it.
    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut model = Model::init(self.kind, &self.config, 0)?;
        model.load_params(&self.tensors)?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind,
            config: self.config.clone(),
            stats: self.stats,
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let n_values: usize = self.tensors.iter().map(|(_, t)| t.numel()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 4 * n_values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8, "magic")? != MAGIC {
            return Err(Error::format("magic", "not a checkpoint file"));
        }
        let version = u32::from_le_bytes(cur.take(4, "version")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported checkpoint version {version} (expected {FORMAT_VERSION})"),
            ));
        }
        let hlen = u64::from_le_bytes(cur.take(8, "header length")?.try_into().unwrap());
        let hlen =
            usize::try_from(hlen).map_err(|_| Error::format("header length", "too large"))?;
        let header: Header = serde_json::from_slice(cur.take(hlen, "header")?)
            .map_err(|e| Error::format("header", e.to_string()))?;

        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let numel: usize = entry.shape.iter().product();
            if entry.shape.is_empty() || numel == 0 {
                return Err(Error::format(
                    entry.name,
                    format!("invalid shape {:?}", entry.shape),
                ));
            }
            let raw = cur.take(4 * numel, &entry.name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((entry.name, Tensor::new(entry.shape, data)?));
        }
        if cur.pos != bytes.len() {
            return Err(Error::format(
                "blobs",
                format!(
                    "{} trailing bytes after the last tensor",
                    bytes.len() - cur.pos
                ),
            ));
        }
        Ok(Checkpoint {
            kind: header.kind,
            config: header.config,
            stats: header.stats,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    field,
                    format!("truncated: needs {n} bytes at offset {}", self.pos),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ChannelStats;

    fn toy_checkpoint(kind: ModelKind) -> (Model<f32>, Checkpoint) {
        let cfg = ModelConfig {
            input_len: 8,
            horizon: 3,
            width: 8,
            heads: 2,
            dilations: vec![1, 2],
            head_hidden: 4,
            ..Default::default()
        };
        let model = Model::init(kind, &cfg, 17).unwrap();
        let stats = NormStats {
            mg_rpm: ChannelStats {
                mean: 2387.123456789,
                std: 31.5,
            },
            ds_torque: ChannelStats {
                mean: -0.1,
                std: 1.0 / 3.0,
            },
        };
        let ck = Checkpoint::from_model(&model, stats);
        (model, ck)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in ModelKind::ALL {
            let (model, ck) = toy_checkpoint(kind);
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            assert_eq!(back, ck);
            let restored = back.to_model().unwrap();
            assert_eq!(restored, model);
            let x = Tensor::from_fn(&[2, 8], |i| (i as f32 * 0.3).sin());
            assert_eq!(restored.predict(&x).unwrap(), model.predict(&x).unwrap());
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let (_, ck) = toy_checkpoint(ModelKind::Lstm);
        let mut bytes = ck.to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(
            matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { field, .. }) if field == "magic")
        );
        let mut bytes = ck.to_bytes().unwrap();
        bytes[8] = 9;
        assert!(
            matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { field, .. }) if field == "version")
        );
    }

    #[test]
    fn rejects_truncation_naming_the_tensor() {
        let (_, ck) = toy_checkpoint(ModelKind::Tcn);
        let bytes = ck.to_bytes().unwrap();
        let last = ck.tensors.last().unwrap().0.clone();
        match Checkpoint::from_bytes(&bytes[..bytes.len() - 2]) {
            Err(Error::Format { field, .. }) => assert_eq!(field, last),
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(Checkpoint::from_bytes(&bytes[..5]).is_err());
    }

    #[test]
    fn rejects_header_shape_inconsistent_with_blobs() {
        let (_, mut ck) = toy_checkpoint(ModelKind::Lstm);
        // A header claiming a larger first tensor than the model has.
        let (name, t) = ck.tensors[0].clone();
        let mut shape = t.shape().to_vec();
        shape[0] += 1;
        ck.tensors[0] = (name.clone(), Tensor::zeros(&shape));
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        match back.to_model() {
            Err(Error::Format { field, .. }) => assert_eq!(field, name),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0, 0, 0, 0]);
        assert!(
            matches!(Checkpoint::from_bytes(&extra), Err(Error::Format { field, .. }) if field == "blobs")
        );
    }
}
