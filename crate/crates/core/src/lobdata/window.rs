use serde::{Deserialize, Serialize};

use super::norm::NormStats;
use super::snapshot::{Day, FEATURES};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Three-way mid-price movement. Class indices follow the probability vector
/// layout `[up, neutral, down]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Movement {
    Up,
    Neutral,
    Down,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::Up, Movement::Neutral, Movement::Down];

    pub fn class_index(self) -> usize {
        match self {
            Movement::Up => 0,
            Movement::Neutral => 1,
            Movement::Down => 2,
        }
    }

    pub fn from_class_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn sign(self) -> i8 {
        match self {
            Movement::Up => 1,
            Movement::Neutral => 0,
            Movement::Down => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Movement::Up),
            0 => Some(Movement::Neutral),
            -1 => Some(Movement::Down),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Movement::Up => Movement::Down,
            Movement::Neutral => Movement::Neutral,
            Movement::Down => Movement::Up,
        }
    }
}

/// Relative return of the mean of the next `k` mids against the anchor mid.
pub fn horizon_return(mids: &[f64], anchor: usize, k: usize) -> Result<f64> {
    if k == 0 || anchor + k >= mids.len() {
        return Err(Error::OutOfRange {
            index: anchor,
            len: mids.len(),
            horizon: k,
        });
    }
    let future: f64 = mids[anchor + 1..=anchor + k].iter().sum::<f64>() / k as f64;
    Ok((future - mids[anchor]) / mids[anchor])
}

pub fn label_from_return(r: f64, gamma: f64) -> Movement {
    if r > gamma {
        Movement::Up
    } else if r < -gamma {
        Movement::Down
    } else {
        Movement::Neutral
    }
}

/// Smoothed label at `anchor`: mean of the next `k` mids compared with the
/// anchor mid against the relative threshold `gamma`.
pub fn label_horizon(mids: &[f64], anchor: usize, k: usize, gamma: f64) -> Result<Movement> {
    if !(gamma >= 0.0) {
        return Err(Error::Config(format!("gamma must be non-negative, got {gamma}")));
    }
    Ok(label_from_return(horizon_return(mids, anchor, k)?, gamma))
}

/// Threshold that labels roughly a third of the given horizon returns neutral.
pub fn balanced_gamma(returns: &[f64]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Empty("no returns to calibrate gamma".into()));
    }
    let mut abs: Vec<f64> = returns.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let idx = (abs.len() - 1) / 3;
    Ok(abs[idx])
}

/// Number of windows a day of `len` events yields.
pub fn window_count(len: usize, window: usize, horizon: usize) -> usize {
    (len + 1).saturating_sub(window + horizon)
}

/// A `rows × 40` normalized input with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow<S> {
    /// Row-major, chronological.
    pub values: Vec<S>,
    pub rows: usize,
    pub label: Movement,
    pub anchor_index: usize,
    pub anchor_timestamp: i64,
    pub day_id: u32,
}

impl<S: Scalar> FeatureWindow<S> {
    pub fn row(&self, t: usize) -> &[S] {
        &self.values[t * FEATURES..(t + 1) * FEATURES]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowMeta {
    pub anchor_index: usize,
    pub anchor_timestamp: i64,
    pub label: Movement,
}

/// All windows of one day sharing a single normalized feature matrix; window
/// `j` is a contiguous slice of it.
#[derive(Debug, Clone, PartialEq)]
pub struct DayWindows<S> {
    pub day_id: u32,
    pub rows: usize,
    pub features: Vec<S>,
    pub windows: Vec<WindowMeta>,
}

impl<S: Scalar> DayWindows<S> {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn values(&self, j: usize) -> &[S] {
        let end = self.windows[j].anchor_index + 1;
        &self.features[(end - self.rows) * FEATURES..end * FEATURES]
    }

    pub fn window(&self, j: usize) -> FeatureWindow<S> {
        let m = self.windows[j];
        FeatureWindow {
            values: self.values(j).to_vec(),
            rows: self.rows,
            label: m.label,
            anchor_index: m.anchor_index,
            anchor_timestamp: m.anchor_timestamp,
            day_id: self.day_id,
        }
    }

    pub fn to_windows(&self) -> Vec<FeatureWindow<S>> {
        (0..self.len()).map(|j| self.window(j)).collect()
    }
}

fn check_params(rows: usize, horizon: usize, gamma: f64) -> Result<()> {
    if rows == 0 || horizon == 0 {
        return Err(Error::Config("window length and horizon must be positive".into()));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Config(format!("gamma must be non-negative, got {gamma}")));
    }
    Ok(())
}

/// Windows for anchors `rows-1 ..= len-horizon-1`. A day too short yields none.
pub fn build_day_windows<S: Scalar>(
    day: &Day,
    stats: &NormStats,
    rows: usize,
    horizon: usize,
    gamma: f64,
) -> Result<DayWindows<S>> {
    check_params(rows, horizon, gamma)?;
    let n = window_count(day.len(), rows, horizon);
    let mut features = Vec::new();
    let mut windows = Vec::with_capacity(n);
    if n > 0 {
        features.reserve(day.len() * FEATURES);
        for s in &day.snapshots {
            let z = stats.normalize_row(&s.feature_row());
            for (c, v) in z.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "non-finite normalized value in column {}",
                        super::snapshot::Snapshot::feature_name(c)
                    )));
                }
                features.push(S::from_f64_lossy(*v));
            }
        }
        let mids = day.mids();
        for anchor in rows - 1..rows - 1 + n {
            windows.push(WindowMeta {
                anchor_index: anchor,
                anchor_timestamp: day.snapshots[anchor].timestamp,
                label: label_horizon(&mids, anchor, horizon, gamma)?,
            });
        }
    }
    Ok(DayWindows {
        day_id: day.day_id,
        rows,
        features,
        windows,
    })
}

pub fn build_windows<S: Scalar>(
    day: &Day,
    stats: &NormStats,
    rows: usize,
    horizon: usize,
    gamma: f64,
) -> Result<Vec<FeatureWindow<S>>> {
    Ok(build_day_windows(day, stats, rows, horizon, gamma)?.to_windows())
}

#[cfg(test)]
mod tests {
    use super::super::snapshot::test_support::book;
    use super::*;

    fn stats_for(day: &Day) -> NormStats {
        NormStats::from_days(std::slice::from_ref(day), 1).unwrap()
    }

    fn walk_day(len: usize) -> Day {
        let mut p = 1000i64;
        let snapshots = (0..len)
            .map(|i| {
                p += [1, -1, 0, 2, -2, 1][i % 6];
                book(i as i64, 3, p - 1, p + 1, 10 + (i % 7) as u64)
            })
            .collect();
        Day { day_id: 3, snapshots }
    }

    #[test]
    fn constant_mids_label_neutral() {
        let mids = vec![100.0; 30];
        for gamma in [1e-6, 0.01, 1.0] {
            assert_eq!(label_horizon(&mids, 5, 10, gamma).unwrap(), Movement::Neutral);
        }
    }

    #[test]
    fn rising_mids_label_up() {
        let mut mids = vec![100.0];
        mids.extend(std::iter::repeat_n(101.0, 5));
        assert_eq!(label_horizon(&mids, 0, 5, 0.002).unwrap(), Movement::Up);
        let mut down = vec![100.0];
        down.extend(std::iter::repeat_n(99.0, 5));
        assert_eq!(label_horizon(&down, 0, 5, 0.002).unwrap(), Movement::Down);
    }

    #[test]
    fn out_of_range_anchor() {
        let mids = vec![1.0; 10];
        assert!(matches!(label_horizon(&mids, 5, 5, 0.0), Err(Error::OutOfRange { .. })));
        assert!(label_horizon(&mids, 4, 5, 0.0).is_ok());
        assert!(label_horizon(&mids, 0, 0, 0.0).is_err());
    }

    #[test]
    fn window_counts_at_boundaries() {
        let (t, k) = (5, 3);
        let d = walk_day(t + k);
        let st = stats_for(&walk_day(40));
        assert_eq!(build_windows::<f64>(&d, &st, t, k, 0.0).unwrap().len(), 1);
        let d = walk_day(t + k + 9);
        let w = build_windows::<f64>(&d, &st, t, k, 0.0).unwrap();
        assert_eq!(w.len(), 10);
        assert_eq!(w[0].anchor_index, t - 1);
        assert_eq!(w[9].anchor_index, d.len() - k - 1);
        let d = walk_day(t + k - 1);
        assert!(build_windows::<f64>(&d, &st, t, k, 0.0).unwrap().is_empty());
        assert_eq!(window_count(0, t, k), 0);
    }

    #[test]
    fn windows_are_zscored_rows() {
        let d = walk_day(30);
        let st = stats_for(&d);
        let w = build_windows::<f64>(&d, &st, 4, 2, 0.0).unwrap();
        let win = &w[3];
        assert_eq!(win.values.len(), 4 * FEATURES);
        let first = win.anchor_index + 1 - 4;
        for t in 0..4 {
            let raw = d.snapshots[first + t].feature_row();
            for c in 0..FEATURES {
                let back = st.denormalize(c, win.row(t)[c]);
                assert!((back - raw[c]).abs() <= 1e-9 * raw[c].abs().max(1.0));
            }
        }
        assert_eq!(win.anchor_timestamp, d.snapshots[win.anchor_index].timestamp);
    }

    #[test]
    fn balanced_gamma_splits_thirds() {
        let r: Vec<f64> = (1..=9)
            .map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) })
            .collect();
        let g = balanced_gamma(&r).unwrap();
        let neutral = r.iter().filter(|x| x.abs() <= g).count();
        assert_eq!(neutral, 3);
    }
}
