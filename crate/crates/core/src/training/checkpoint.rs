//! Binary checkpoints:
//!
//! ```text
//! "AMN1" | version u8 | config digest u64
//! then per parameter: name len u16 | name | rank u8 | dims u32.. | f32 payload
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::cells::ModelConfig;
use crate::engine::{ParamStore, Scalar, Tensor};

const MAGIC: &[u8; 4] = b"AMN1";
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u8 },
    #[error("checkpoint truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("config digest mismatch: expected {expected:016x} ({layout}), found {found:016x}")]
    Digest { expected: u64, found: u64, layout: String },
    #[error("checkpoint parameters do not match the model: {0}")]
    Layout(String),
}

/// FNV-1a over the model's layout key.
pub fn config_digest(config: &ModelConfig) -> u64 {
    config
        .layout_key()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    config: &ModelConfig,
    params: &ParamStore<T>,
) -> Result<(), CheckpointError> {
    let mut buf = Vec::with_capacity(16 + params.scalar_count() * 4);
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&config_digest(config).to_le_bytes());
    for (_, name, t) in params.iter() {
        let len = u16::try_from(name.len())
            .map_err(|_| CheckpointError::Layout(format!("parameter name too long: {name}")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.rank() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated { offset: self.bytes.len() })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Reads every tensor of a checkpoint written for `config`. Nothing is
/// returned unless the whole file parses.
pub fn load_checkpoint<T: Scalar>(
    path: &Path,
    config: &ModelConfig,
) -> Result<Vec<(String, Tensor<T>)>, CheckpointError> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4).map_err(|_| CheckpointError::Magic)? != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = r.array::<1>()?[0];
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let found = u64::from_le_bytes(r.array()?);
    let expected = config_digest(config);
    if found != expected {
        return Err(CheckpointError::Digest {
            expected,
            found,
            layout: config.layout_key(),
        });
    }
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let len = u16::from_le_bytes(r.array()?) as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Layout("parameter name is not UTF-8".into()))?;
        let rank = r.array::<1>()?[0] as usize;
        if rank > 2 {
            return Err(CheckpointError::Layout(format!("{name}: rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| Ok(u32::from_le_bytes(r.array()?) as usize))
            .collect::<Result<Vec<_>, CheckpointError>>()?;
        let count: usize = shape.iter().product();
        let payload = r.take(count.checked_mul(4).ok_or(CheckpointError::Truncated { offset: r.pos })?)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| CheckpointError::Layout(format!("{name}: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

/// Copies loaded tensors into `params`, requiring the same names, order
/// and shapes. `params` is untouched on error.
pub fn restore_checkpoint<T: Scalar>(
    params: &mut ParamStore<T>,
    loaded: Vec<(String, Tensor<T>)>,
) -> Result<(), CheckpointError> {
    if loaded.len() != params.len() {
        return Err(CheckpointError::Layout(format!(
            "{} tensors in file, model has {}",
            loaded.len(),
            params.len()
        )));
    }
    for ((_, name, t), (lname, lt)) in params.iter().zip(&loaded) {
        if name != lname || t.shape() != lt.shape() {
            return Err(CheckpointError::Layout(format!(
                "expected {name} {:?}, found {lname} {:?}",
                t.shape(),
                lt.shape()
            )));
        }
    }
    let ids: Vec<_> = params.ids().collect();
    for (id, (_, t)) in ids.into_iter().zip(loaded) {
        params.set(id, t).expect("shape checked");
    }
    Ok(())
}
