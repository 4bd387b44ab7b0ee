//! Binary parameter checkpoints.
//!
//! Layout: magic string, u32 format version, model identifier
//! (u32 length + UTF-8 bytes), u32 parameter count, then per parameter:
//! u32 name length + name bytes, u32 shape rank, u32 extents, and the raw
//! values as little-endian f64. Round trips are bit-exact.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;

const MAGIC: &[u8] = b"SEMREDUCE-CKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint is for model {found:?}, expected {expected:?}")]
    WrongModel { expected: String, found: String },
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    WrongShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// An in-memory snapshot of named parameters. Plain data: freely clonable
/// and sendable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_id: String,
    pub params: Vec<NamedParam>,
}

impl Checkpoint {
    pub fn new(model_id: impl Into<String>) -> Checkpoint {
        Checkpoint { model_id: model_id.into(), params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: &Tensor) {
        self.params.push(NamedParam {
            name: name.into(),
            shape: tensor.shape().to_vec(),
            values: tensor.to_vec(),
        });
    }

    pub fn push_raw(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) {
        self.params.push(NamedParam { name: name.into(), shape, values });
    }

    pub fn get(&self, name: &str) -> Result<&NamedParam, CheckpointError> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| CheckpointError::MissingParam(name.to_string()))
    }

    /// Copy a stored parameter into an existing tensor of the same shape.
    pub fn load_into(&self, name: &str, tensor: &Tensor) -> Result<(), CheckpointError> {
        let param = self.get(name)?;
        if param.shape != tensor.shape() {
            return Err(CheckpointError::WrongShape {
                name: name.to_string(),
                expected: tensor.shape().to_vec(),
                found: param.shape.clone(),
            });
        }
        tensor.set_data(param.values.clone()).expect("shape checked");
        Ok(())
    }

    pub fn expect_model(&self, model_id: &str) -> Result<(), CheckpointError> {
        if self.model_id != model_id {
            return Err(CheckpointError::WrongModel {
                expected: model_id.to_string(),
                found: self.model_id.clone(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.model_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.model_id.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
            for &d in &p.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &p.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::BadVersion(version));
        }
        let id_len = r.u32()? as usize;
        let model_id = String::from_utf8(r.take(id_len)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("model id is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Malformed("param name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut values = Vec::with_capacity(numel);
            for _ in 0..numel {
                values.push(f64::from_le_bytes(r.take(8)?.try_into().expect("take returned 8 bytes")));
            }
            params.push(NamedParam { name, shape, values });
        }
        Ok(Checkpoint { model_id, params })
    }

    pub fn write(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Checkpoint, CheckpointError> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Malformed("unexpected end of file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("take returned 4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut ckpt = Checkpoint::new("steernet-seg13");
        // values that stress binary fidelity: negative zero, subnormal, huge
        ckpt.push_raw(
            "conv1.weight",
            vec![2, 1, 2, 2],
            vec![0.1, -0.0, f64::MIN_POSITIVE, 0.12345678901234567, 1e300, -7.25, 0.0, 42.0],
        );
        ckpt.push_raw("conv1.bias", vec![2], vec![1.0 / 3.0, -2.0 / 7.0]);
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.model_id, "steernet-seg13");
        assert_eq!(back.params.len(), 2);
        for (a, b) in ckpt.params.iter().zip(&back.params) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let abits: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
            let bbits: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(abits, bbits);
        }
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join("semreduce_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        let mut ckpt = Checkpoint::new("control");
        ckpt.push_raw("fc.weight", vec![1, 3], vec![1.5, -2.5, 0.125]);
        ckpt.write(&path).unwrap();
        assert_eq!(Checkpoint::read(&path).unwrap(), ckpt);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_corruption() {
        let ckpt = Checkpoint::new("x");
        let mut bytes = ckpt.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::BadMagic)));

        let mut bytes = ckpt.to_bytes();
        bytes[MAGIC.len()] = 99;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::BadVersion(_))));

        let bytes = ckpt.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn expect_model_guards_identity() {
        let ckpt = Checkpoint::new("steernet-rgb");
        assert!(ckpt.expect_model("steernet-rgb").is_ok());
        assert!(matches!(ckpt.expect_model("perception-13"), Err(CheckpointError::WrongModel { .. })));
    }
}
