//! Binary checkpoint container.
//!
//! ```text
//! magic        8 bytes   "EAPCRCK\0"
//! version      u32 LE
//! header_len   u64 LE
//! header       JSON: model config, feature encoder, target scaler, target
//! n_tensors    u32 LE
//! per tensor:  name_len u32, name (UTF-8), ndim u32, dims u64 × ndim,
//!              byte_len u64, data (f64 LE × numel)
//! digest       SHA-256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureEncoder, RowTable};
use crate::model::{self, EapcrParams, ModelConfig, PermutationSpec};
use crate::tensor::Tensor;
use crate::trainer::TargetScaler;

pub const MAGIC: &[u8; 8] = b"EAPCRCK\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// A trained model together with the fitted pipeline needed to use it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub target: String,
    pub encoder: FeatureEncoder,
    pub scaler: TargetScaler,
    pub params: EapcrParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    target: String,
    model: ModelConfig,
    encoder: FeatureEncoder,
    scaler: TargetScaler,
}

impl Checkpoint {
    pub fn model_config(&self) -> &ModelConfig {
        self.params.config()
    }

    /// Encodes raw rows and predicts on the original target scale.
    pub fn predict(&self, table: &RowTable) -> Result<Vec<f64>> {
        let x = self.encoder.transform(&table.rows)?;
        let spec = PermutationSpec::new(self.params.config().n_features())?;
        let raw = model::predict(&x, &self.params, &spec)?;
        Ok(raw.into_iter().map(|y| self.scaler.inverse(y)).collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            target: self.target.clone(),
            model: self.params.config().clone(),
            encoder: self.encoder.clone(),
            scaler: self.scaler,
        })?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.tensors().len() as u32).to_le_bytes());
        for (name, t) in self.params.named() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&((t.numel() * 8) as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len(), "magic")? != MAGIC {
            return Err(Error::Format("not an EAPCR checkpoint (bad magic bytes)".into()));
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        if bytes.len() < r.pos + DIGEST_LEN {
            return Err(Error::Integrity("file is truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Integrity(
                "checksum mismatch: file is corrupt or truncated".into(),
            ));
        }
        let mut r = Reader {
            bytes: body,
            pos: r.pos,
        };

        let header_len = r.u64("header length")? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        let n_tensors = r.u32("tensor count")? as usize;
        let mut named = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = r.u32("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_owned();
            let ndim = r.u32("tensor rank")? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64("tensor dimension").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let byte_len = r.u64("tensor byte length")? as usize;
            let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            if numel.and_then(|n| n.checked_mul(8)) != Some(byte_len) {
                return Err(Error::Integrity(format!(
                    "tensor `{name}` declares {byte_len} bytes for shape {shape:?}"
                )));
            }
            let data = r
                .take(byte_len, "tensor data")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let tensor = Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?;
            named.push((name, tensor));
        }
        if r.pos != body.len() {
            return Err(Error::Integrity(format!(
                "{} unexpected trailing bytes",
                body.len() - r.pos
            )));
        }
        if header.model.cardinalities != header.encoder.cardinalities() {
            return Err(Error::Format(
                "model cardinalities disagree with the stored encoder".into(),
            ));
        }
        let params = EapcrParams::from_named(header.model, named)?;
        Ok(Self {
            target: header.target,
            encoder: header.encoder,
            scaler: header.scaler,
            params,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Integrity(format!("truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// Facts about a checkpoint that passed every structural check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckpointSummary {
    pub format_version: u32,
    pub target: String,
    pub n_features: usize,
    pub embed_dim: usize,
    pub tensors: usize,
    pub parameters: usize,
    pub bytes: usize,
}

/// Loads a checkpoint, validating magic, version, digest, tensor lengths
/// and shapes, and finiteness of every parameter.
pub fn verify_checkpoint(path: impl AsRef<Path>) -> Result<CheckpointSummary> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck = Checkpoint::from_bytes(&bytes)?;
    Ok(CheckpointSummary {
        format_version: FORMAT_VERSION,
        target: ck.target.clone(),
        n_features: ck.model_config().n_features(),
        embed_dim: ck.model_config().arch.embed_dim,
        tensors: ck.params.tensors().len(),
        parameters: ck.params.parameter_count(),
        bytes: bytes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ColumnSpec, FeatureSchema, Row, Value};
    use crate::model::ArchConfig;

    fn checkpoint() -> Checkpoint {
        let schema = FeatureSchema::new(
            vec![
                ColumnSpec::categorical("a"),
                ColumnSpec::numerical("b", 3),
                ColumnSpec::categorical("c"),
            ],
            vec!["y".into()],
        )
        .unwrap();
        let rows: Vec<Row> = (0..9)
            .map(|i| Row {
                id: i,
                features: vec![
                    Value::Text(format!("k{}", i % 3)),
                    Value::Number(i as f64 * 0.1),
                    Value::Text(format!("m{}", i % 2)),
                ],
                targets: vec![Some(i as f64)],
            })
            .collect();
        let encoder = FeatureEncoder::fit(&rows, &schema).unwrap();
        let arch = ArchConfig {
            embed_dim: 3,
            mlp_hidden: vec![4],
            ..Default::default()
        };
        let config = ModelConfig::new(arch, encoder.cardinalities()).unwrap();
        Checkpoint {
            target: "y".into(),
            encoder,
            scaler: TargetScaler {
                mean: 0.1 + 0.2,
                std: 1.0 / 3.0,
            },
            params: EapcrParams::init(&config, 5).unwrap(),
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = checkpoint();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.params.tensors().iter().zip(ck.params.tensors()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn bumped_version_is_a_format_error() {
        let mut bytes = checkpoint().to_bytes().unwrap();
        bytes[8] += 1;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut bytes = checkpoint().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_and_corruption_are_integrity_errors() {
        let bytes = checkpoint().to_bytes().unwrap();
        for cut in [20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::Integrity(_))
            ));
        }
        let mut flipped = bytes.clone();
        let at = bytes.len() - DIGEST_LEN - 5;
        flipped[at] ^= 0x01;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Integrity(_))));
    }
}
