//! Weight file container.
//!
//! ```text
//! magic      4 bytes  "BDW1"
//! version    u16      1
//! dtype      u8       bytes per real (4 or 8)
//! reserved   u8       0
//! digest     u64      FNV-1a 64 of the config JSON bytes
//! config     u32 length + UTF-8 JSON of the model config
//! metadata   u32 length + UTF-8 JSON object of string pairs
//! count      u32      number of tensors
//! tensor     count × { name u16 length + UTF-8, ndim u8, dims u32 × ndim, reals }
//! ```
//! Little-endian throughout.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::network::Network;
use super::params::{Tensor, Weights};
use crate::error::{Error, Result};
use crate::rng::fnv1a64;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"BDW1";
const VERSION: u16 = 1;

pub type Metadata = BTreeMap<String, String>;

pub fn config_digest(cfg: &ModelConfig) -> u64 {
    fnv1a64(cfg.to_json().as_bytes())
}

pub fn encode_weights<S: Scalar>(net: &Network<S>, meta: &Metadata) -> Vec<u8> {
    let cfg_json = net.config().to_json();
    let meta_json = serde_json::to_string(meta).expect("metadata serializes");
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(S::DTYPE);
    buf.push(0);
    buf.extend_from_slice(&fnv1a64(cfg_json.as_bytes()).to_le_bytes());
    for s in [&cfg_json, &meta_json] {
        buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
        buf.extend_from_slice(s.as_bytes());
    }
    let w = net.weights();
    buf.extend_from_slice(&(w.tensors.len() as u32).to_le_bytes());
    for t in &w.tensors {
        buf.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.push(t.shape.len() as u8);
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            v.write_le(&mut buf);
        }
    }
    buf
}

pub fn save_weights<S: Scalar>(path: impl AsRef<Path>, net: &Network<S>, meta: &Metadata) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_weights(net, meta))?;
    f.flush()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("weight file truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8".into()))
    }
}

/// Parsed container before shape validation.
pub struct WeightFile<S> {
    pub config: ModelConfig,
    pub metadata: Metadata,
    pub weights: Weights<S>,
}

pub fn decode_weights<S: Scalar>(bytes: &[u8]) -> Result<WeightFile<S>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a weight file (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let dtype = r.u8()?;
    r.u8()?;
    if dtype != S::DTYPE {
        return Err(Error::Format(format!(
            "weights stored as {dtype}-byte reals, expected {}",
            S::DTYPE
        )));
    }
    let digest = r.u64()?;
    let len = r.u32()? as usize;
    let cfg_json = r.string(len)?;
    if fnv1a64(cfg_json.as_bytes()) != digest {
        return Err(Error::Format("config digest mismatch".into()));
    }
    let config: ModelConfig = serde_json::from_str(&cfg_json).map_err(|e| Error::Format(format!("config: {e}")))?;
    let len = r.u32()? as usize;
    let metadata: Metadata =
        serde_json::from_str(&r.string(len)?).map_err(|e| Error::Format(format!("metadata: {e}")))?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = r.string(len)?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(S::DTYPE as usize))
            .ok_or_else(|| Error::Format(format!("tensor {name}: size overflow")))?;
        let raw = r.take(n)?;
        let data = raw.chunks_exact(S::DTYPE as usize).map(S::read_le).collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok(WeightFile {
        config,
        metadata,
        weights: Weights { tensors },
    })
}

/// Loads a network using the config stored in the file.
pub fn load_network<S: Scalar>(path: impl AsRef<Path>) -> Result<(Network<S>, Metadata)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let f = decode_weights::<S>(&bytes)?;
    Ok((Network::new(f.config, f.weights)?, f.metadata))
}

/// Loads weights into an expected config, failing with the name of the first
/// layer whose shape differs.
pub fn load_weights<S: Scalar>(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Network<S>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let f = decode_weights::<S>(&bytes)?;
    f.weights.check(expected)?;
    Network::new(expected.clone(), f.weights)
}
