use super::snapshot::{Day, Snapshot, FEATURES};
use crate::error::{Error, Result};

/// Per-column z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: [f64; FEATURES],
    pub std: [f64; FEATURES],
}

impl NormStats {
    /// Statistics over every snapshot of the last `trailing` days in `prior`.
    pub fn from_days(prior: &[Day], trailing: usize) -> Result<Self> {
        if trailing == 0 {
            return Err(Error::Config("trailing window must be at least one day".into()));
        }
        if prior.len() < trailing {
            return Err(Error::InsufficientHistory {
                needed: trailing,
                available: prior.len(),
            });
        }
        let window = &prior[prior.len() - trailing..];
        Self::from_snapshots(window.iter().flat_map(|d| d.snapshots.iter()))
    }

    pub fn from_snapshots<'a, I>(snapshots: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Snapshot>,
    {
        // Welford accumulation per column
        let mut n = 0u64;
        let mut mean = [0.0; FEATURES];
        let mut m2 = [0.0; FEATURES];
        for s in snapshots {
            n += 1;
            let row = s.feature_row();
            for c in 0..FEATURES {
                let delta = row[c] - mean[c];
                mean[c] += delta / n as f64;
                m2[c] += delta * (row[c] - mean[c]);
            }
        }
        if n == 0 {
            return Err(Error::Empty("no snapshots in normalization window".into()));
        }
        let mut std = [0.0; FEATURES];
        for c in 0..FEATURES {
            let var = m2[c] / n as f64;
            if !(var > 0.0) {
                return Err(Error::ZeroVariance {
                    column: Snapshot::feature_name(c),
                });
            }
            std[c] = var.sqrt();
        }
        Ok(Self { mean, std })
    }

    #[inline]
    pub fn normalize(&self, col: usize, raw: f64) -> f64 {
        (raw - self.mean[col]) / self.std[col]
    }

    #[inline]
    pub fn denormalize(&self, col: usize, z: f64) -> f64 {
        z * self.std[col] + self.mean[col]
    }

    pub fn normalize_row(&self, row: &[f64; FEATURES]) -> [f64; FEATURES] {
        let mut out = [0.0; FEATURES];
        for c in 0..FEATURES {
            out[c] = self.normalize(c, row[c]);
        }
        out
    }
}
