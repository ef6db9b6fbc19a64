//! Instrument-level data preparation: trailing normalization, chronological
//! train/validation/test split by day, and per-instrument label threshold.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lobdata::{balanced_gamma, build_day_windows, group_days, horizon_return, parse_snapshots, window_count};
use crate::lobdata::{Day, DayWindows, NormStats};
use crate::neuralnet::Sample;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Events per input window.
    pub window: usize,
    /// Events averaged for the label.
    pub horizon: usize,
    /// Label threshold; calibrated on the training days when absent.
    pub gamma: Option<f64>,
    /// Days of history feeding each day's normalization.
    pub norm_trailing_days: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            window: 100,
            horizon: 20,
            gamma: None,
            norm_trailing_days: 5,
            train_fraction: 0.5,
            val_fraction: 0.25,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.horizon == 0 || self.norm_trailing_days == 0 {
            return Err(Error::Config(
                "window, horizon and norm_trailing_days must be positive".into(),
            ));
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be finite and non-negative, got {g}")));
            }
        }
        let (t, v) = (self.train_fraction, self.val_fraction);
        if !(t > 0.0 && v > 0.0 && t + v < 1.0) {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum below 1, got {t} and {v}"
            )));
        }
        Ok(())
    }

    /// Day counts `(train, validation, test)` for `usable` days after the
    /// normalization warm-up. Each part gets at least one day.
    pub fn split_counts(&self, usable: usize) -> Result<(usize, usize, usize)> {
        let train = ((usable as f64 * self.train_fraction).floor() as usize).max(1);
        let val = ((usable as f64 * self.val_fraction).floor() as usize).max(1);
        if train + val >= usable {
            return Err(Error::InsufficientHistory {
                needed: self.norm_trailing_days + train + val + 1,
                available: self.norm_trailing_days + usable,
            });
        }
        Ok((train, val, usable - train - val))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDay<S> {
    pub day: Day,
    pub windows: DayWindows<S>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instrument<S> {
    pub name: String,
    pub gamma: f64,
    /// Days after the normalization warm-up, chronological.
    pub days: Vec<PreparedDay<S>>,
}

impl<S: Scalar> Instrument<S> {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &PreparedDay<S>> {
        self.days.iter().filter(move |d| d.split == split)
    }

    pub fn samples(&self, split: Split) -> Vec<Sample<'_, S>> {
        samples_of(self.split(split))
    }
}

pub fn samples_of<'a, S: Scalar>(days: impl IntoIterator<Item = &'a PreparedDay<S>>) -> Vec<Sample<'a, S>> {
    days.into_iter()
        .flat_map(|d| {
            (0..d.windows.len()).map(move |j| Sample {
                input: d.windows.values(j),
                label: d.windows.windows[j].label,
            })
        })
        .collect()
}

/// Horizon returns at every window anchor of `day`.
pub fn anchor_returns(day: &Day, window: usize, horizon: usize) -> Result<Vec<f64>> {
    let n = window_count(day.len(), window, horizon);
    let mids = day.mids();
    (window - 1..window - 1 + n)
        .map(|a| horizon_return(&mids, a, horizon))
        .collect()
}

/// Normalizes, splits and labels one instrument's days.
pub fn prepare_instrument<S: Scalar>(name: &str, days: Vec<Day>, cfg: &DataConfig) -> Result<Instrument<S>> {
    cfg.validate()?;
    let warm = cfg.norm_trailing_days;
    if days.len() <= warm {
        return Err(Error::InsufficientHistory {
            needed: warm + 3,
            available: days.len(),
        });
    }
    let (n_train, n_val, _) = cfg.split_counts(days.len() - warm)?;
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => {
            let mut rets = Vec::new();
            for d in &days[warm..warm + n_train] {
                rets.extend(anchor_returns(d, cfg.window, cfg.horizon)?);
            }
            balanced_gamma(&rets).map_err(|_| Error::Empty(format!("{name}: training days yield no windows")))?
        }
    };
    let split_of = |i: usize| {
        if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        }
    };
    let prepared = (warm..days.len())
        .into_par_iter()
        .map(|i| {
            let stats = NormStats::from_days(&days[..i], warm)?;
            let windows = build_day_windows(&days[i], &stats, cfg.window, cfg.horizon, gamma)?;
            Ok((windows, split_of(i - warm)))
        })
        .collect::<Result<Vec<_>>>()?;
    let days = days
        .into_iter()
        .skip(warm)
        .zip(prepared)
        .map(|(day, (windows, split))| PreparedDay { day, windows, split })
        .collect();
    Ok(Instrument {
        name: name.to_string(),
        gamma,
        days,
    })
}

/// Reads every `*.csv` file of `dir` (sorted by name) as one instrument.
pub fn read_instrument_dir(dir: &Path) -> Result<Vec<Day>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty(format!("no csv files in {}", dir.display())));
    }
    let mut snaps = Vec::new();
    for f in &files {
        let parsed = parse_snapshots(BufReader::new(File::open(f)?)).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", f.display()),
            },
            other => other,
        })?;
        snaps.extend(parsed);
    }
    let days = group_days(snaps);
    if days.windows(2).any(|w| w[0].day_id >= w[1].day_id) {
        return Err(Error::Validation(format!(
            "{}: day ids must increase across files",
            dir.display()
        )));
    }
    Ok(days)
}

/// Instruments under `root`: each subdirectory holding csv files, or `root`
/// itself when it holds csv files directly. Sorted by name.
pub fn discover_instruments(root: &Path) -> Result<Vec<(String, Vec<Day>)>> {
    let has_csv = |p: &Path| -> Result<bool> {
        Ok(std::fs::read_dir(p)?
            .filter_map(|e| e.ok())
            .any(|e| e.path().is_file() && e.path().extension().is_some_and(|x| x == "csv")))
    };
    if has_csv(root)? {
        let name = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".into());
        return Ok(vec![(name, read_instrument_dir(root)?)]);
    }
    let mut dirs: Vec<_> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut out = Vec::new();
    for d in dirs {
        if has_csv(&d)? {
            let name = d
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.push((name, read_instrument_dir(&d)?));
        }
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("no instrument data under {}", root.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, SynthConfig};

    fn small_cfg() -> DataConfig {
        DataConfig {
            window: 10,
            horizon: 5,
            norm_trailing_days: 2,
            ..DataConfig::default()
        }
    }

    #[test]
    fn split_counts_cover_all_days() {
        let cfg = DataConfig::default();
        assert_eq!(cfg.split_counts(15).unwrap(), (7, 3, 5));
        assert_eq!(cfg.split_counts(3).unwrap(), (1, 1, 1));
        assert!(cfg.split_counts(2).is_err());
    }

    #[test]
    fn prepared_days_are_chronological_and_split() {
        let syn = SynthConfig {
            n_days: 8,
            events_per_day: 60,
            ..SynthConfig::default()
        };
        let days = generate(&syn).unwrap();
        let inst = prepare_instrument::<f64>("x", days.clone(), &small_cfg()).unwrap();
        assert_eq!(inst.days.len(), 6);
        let splits: Vec<_> = inst.days.iter().map(|d| d.split).collect();
        assert_eq!(
            splits,
            [
                Split::Train,
                Split::Train,
                Split::Train,
                Split::Validation,
                Split::Test,
                Split::Test
            ]
        );
        assert_eq!(inst.days[0].day.day_id, days[2].day_id);
        assert!(inst.gamma > 0.0);
        assert_eq!(inst.samples(Split::Train).len(), 3 * window_count(60, 10, 5));
    }

    #[test]
    fn fixed_gamma_is_kept() {
        let syn = SynthConfig {
            n_days: 6,
            events_per_day: 40,
            ..SynthConfig::default()
        };
        let cfg = DataConfig {
            gamma: Some(0.0),
            ..small_cfg()
        };
        let inst = prepare_instrument::<f32>("x", generate(&syn).unwrap(), &cfg).unwrap();
        assert_eq!(inst.gamma, 0.0);
    }

    #[test]
    fn too_few_days() {
        let syn = SynthConfig {
            n_days: 3,
            events_per_day: 40,
            ..SynthConfig::default()
        };
        let r = prepare_instrument::<f64>("x", generate(&syn).unwrap(), &small_cfg());
        assert!(matches!(r, Err(Error::InsufficientHistory { .. })));
    }
}
