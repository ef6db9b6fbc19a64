//! Flat binary window cache.
//!
//! ```text
//! magic      4 bytes  "BDL1"
//! version    u16      1
//! dtype      u8       bytes per real (4 or 8)
//! reserved   u8       0
//! count      u64      number of windows
//! rows       u32      timesteps per window
//! cols       u32      features per row (40)
//! meta       count × { day_id u32, anchor_index u32, anchor_timestamp i64, label i8 }
//! values     count × rows × cols reals, window-major then row-major
//! ```
//! All integers and reals little-endian.

use std::io::{Read, Write};

use super::snapshot::FEATURES;
use super::window::{FeatureWindow, Movement};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"BDL1";
const VERSION: u16 = 1;
const META_BYTES: usize = 4 + 4 + 8 + 1;

pub fn write_window_cache<S: Scalar, W: Write>(mut out: W, windows: &[FeatureWindow<S>]) -> Result<()> {
    let rows = windows.first().map_or(0, |w| w.rows);
    if windows
        .iter()
        .any(|w| w.rows != rows || w.values.len() != rows * FEATURES)
    {
        return Err(Error::Validation("windows must share one shape".into()));
    }
    let mut buf = Vec::with_capacity(24 + windows.len() * (META_BYTES + rows * FEATURES * S::DTYPE as usize));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(S::DTYPE);
    buf.push(0);
    buf.extend_from_slice(&(windows.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(FEATURES as u32).to_le_bytes());
    for w in windows {
        buf.extend_from_slice(&w.day_id.to_le_bytes());
        buf.extend_from_slice(&(w.anchor_index as u32).to_le_bytes());
        buf.extend_from_slice(&w.anchor_timestamp.to_le_bytes());
        buf.push(w.label.sign() as u8);
    }
    for w in windows {
        for v in &w.values {
            v.write_le(&mut buf);
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }
}

pub fn read_window_cache<S: Scalar, R: Read>(mut input: R) -> Result<Vec<FeatureWindow<S>>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(c.array()?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dtype = c.take(2)?[0];
    if dtype != S::DTYPE {
        return Err(Error::Format(format!(
            "cache holds {dtype}-byte reals, reader expects {}",
            S::DTYPE
        )));
    }
    let count = u64::from_le_bytes(c.array()?) as usize;
    let rows = u32::from_le_bytes(c.array()?) as usize;
    let cols = u32::from_le_bytes(c.array()?) as usize;
    if cols != FEATURES {
        return Err(Error::Format(format!("expected {FEATURES} columns, found {cols}")));
    }
    let per_window = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(S::DTYPE as usize))
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    let needed = count
        .checked_mul(META_BYTES + per_window)
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    if bytes.len() - c.pos != needed {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {needed}",
            bytes.len() - c.pos
        )));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let day_id = u32::from_le_bytes(c.array()?);
        let anchor_index = u32::from_le_bytes(c.array()?) as usize;
        let anchor_timestamp = i64::from_le_bytes(c.array()?);
        let sign = c.take(1)?[0] as i8;
        let label = Movement::from_sign(sign).ok_or_else(|| Error::Format(format!("bad label byte {sign}")))?;
        out.push(FeatureWindow {
            values: Vec::new(),
            rows,
            label,
            anchor_index,
            anchor_timestamp,
            day_id,
        });
    }
    let width = S::DTYPE as usize;
    for w in &mut out {
        let raw = c.take(per_window)?;
        w.values = raw.chunks_exact(width).map(S::read_le).collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, rows: usize) -> Vec<FeatureWindow<f64>> {
        (0..n)
            .map(|i| FeatureWindow {
                values: (0..rows * FEATURES)
                    .map(|j| (i * 1000 + j) as f64 * 0.125 - 3.0)
                    .collect(),
                rows,
                label: Movement::ALL[i % 3],
                anchor_index: rows - 1 + i,
                anchor_timestamp: 1_000 + i as i64,
                day_id: 7,
            })
            .collect()
    }

    #[test]
    fn round_trip() {
        let w = sample(5, 3);
        let mut buf = Vec::new();
        write_window_cache(&mut buf, &w).unwrap();
        assert_eq!(&buf[..4], b"BDL1");
        let back: Vec<FeatureWindow<f64>> = read_window_cache(&buf[..]).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn truncated_and_wrong_dtype() {
        let mut buf = Vec::new();
        write_window_cache(&mut buf, &sample(2, 2)).unwrap();
        for cut in [0, 3, 10, buf.len() - 1] {
            assert!(read_window_cache::<f64, _>(&buf[..cut]).is_err());
        }
        assert!(matches!(read_window_cache::<f32, _>(&buf[..]), Err(Error::Format(_))));
    }
}
