//! Seeded synthetic LOB days driven by a regime-switching drift + noise walk.
//!
//! Each day is generated independently from its own substreams of the
//! `"synth"` stream: child `2d` drives the regime trace of day `d`, child
//! `2d + 1` the price noise, volumes and timestamp jitter. Regimes persist for
//! geometric holding times (switch probability `1 / mean_duration` per event,
//! to a uniformly chosen different regime).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lobdata::{Day, Level, Snapshot, LEVELS};
use crate::rng::CounterRng;

const NS_PER_DAY: i64 = 86_400_000_000_000;
const OPEN_NS: i64 = 8 * 3_600_000_000_000;
const EVENT_SPACING_NS: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    /// Mean mid-price change per event, in ticks.
    pub drift: f64,
    /// Standard deviation of the per-event change, in ticks.
    pub noise: f64,
    /// Mean run length in events.
    pub mean_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub seed: u64,
    pub n_days: usize,
    pub events_per_day: usize,
    pub regimes: Vec<Regime>,
    #[serde(default = "default_spread")]
    pub spread: i64,
    #[serde(default = "default_volume")]
    pub level_volume_mean: u64,
    #[serde(default = "default_price")]
    pub initial_price: i64,
}

fn default_spread() -> i64 {
    2
}
fn default_volume() -> u64 {
    500
}
fn default_price() -> i64 {
    10_000
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_days: 10,
            events_per_day: 2_000,
            regimes: vec![
                Regime {
                    drift: 0.25,
                    noise: 0.5,
                    mean_duration: 300.0,
                },
                Regime {
                    drift: -0.25,
                    noise: 0.5,
                    mean_duration: 300.0,
                },
                Regime {
                    drift: 0.0,
                    noise: 0.5,
                    mean_duration: 300.0,
                },
            ],
            spread: default_spread(),
            level_volume_mean: default_volume(),
            initial_price: default_price(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(Error::Config("at least one regime is required".into()));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if !r.drift.is_finite() || !(r.noise >= 0.0) || !r.noise.is_finite() {
                return Err(Error::Config(format!(
                    "regime {i}: drift must be finite and noise >= 0"
                )));
            }
            if !(r.mean_duration >= 1.0) {
                return Err(Error::Config(format!("regime {i}: mean duration must be >= 1")));
            }
        }
        if self.events_per_day < 2 {
            return Err(Error::Config("events_per_day must be at least 2".into()));
        }
        if self.spread < 1 {
            return Err(Error::Config("spread must be at least one tick".into()));
        }
        if self.level_volume_mean < 1 {
            return Err(Error::Config("level_volume_mean must be positive".into()));
        }
        if self.initial_price <= self.spread + LEVELS as i64 {
            return Err(Error::Config("initial_price too low for a ten-level book".into()));
        }
        Ok(())
    }

    /// Checks that every day yields at least one window of `window` rows and
    /// horizon `horizon`.
    pub fn check_fits(&self, window: usize, horizon: usize) -> Result<()> {
        if self.events_per_day <= window + horizon {
            return Err(Error::Config(format!(
                "events_per_day ({}) must exceed window + horizon ({})",
                self.events_per_day,
                window + horizon
            )));
        }
        Ok(())
    }

    fn base(&self) -> CounterRng {
        CounterRng::stream(self.seed, "synth")
    }
}

fn day_regimes(cfg: &SynthConfig, day: usize) -> Vec<usize> {
    let mut rng = cfg.base().child(2 * day as u64);
    let n = cfg.regimes.len();
    let mut trace = Vec::with_capacity(cfg.events_per_day);
    let mut current = rng.below(n as u64) as usize;
    trace.push(current);
    for _ in 1..cfg.events_per_day {
        let switch = rng.bernoulli(1.0 / cfg.regimes[current].mean_duration);
        if switch && n > 1 {
            let k = rng.below(n as u64 - 1) as usize;
            current = if k >= current { k + 1 } else { k };
        }
        trace.push(current);
    }
    trace
}

/// Per-event regime index for every day.
pub fn regime_trace(cfg: &SynthConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    Ok((0..cfg.n_days).map(|d| day_regimes(cfg, d)).collect())
}

fn volume(rng: &mut CounterRng, mean: u64) -> u64 {
    let v = (mean as f64 * (0.5 + rng.uniform())).round() as u64;
    v.max(1)
}

/// Latent (unrounded) mid path of one day.
pub fn latent_path(cfg: &SynthConfig, day: usize, regimes: &[usize]) -> Vec<f64> {
    let mut rng = cfg.base().child(2 * day as u64 + 1);
    let mut x = cfg.initial_price as f64;
    let mut out = Vec::with_capacity(regimes.len());
    for (t, &r) in regimes.iter().enumerate() {
        let z = rng.normal();
        if t > 0 {
            let reg = cfg.regimes[r];
            x += reg.drift + reg.noise * z;
        }
        out.push(x);
    }
    out
}

fn generate_day(cfg: &SynthConfig, day: usize) -> Result<Day> {
    let regimes = day_regimes(cfg, day);
    let path = latent_path(cfg, day, &regimes);
    // separate stream for the book cosmetics so the path is reproducible alone
    let mut rng = cfg.base().child(2 * day as u64 + 1).child(u64::MAX);
    let half = cfg.spread as f64 / 2.0;
    let day_start = day as i64 * NS_PER_DAY + OPEN_NS;
    let mut snapshots = Vec::with_capacity(cfg.events_per_day);
    for (t, &x) in path.iter().enumerate() {
        let best_bid = (x - half).floor() as i64;
        let best_ask = best_bid + cfg.spread;
        let mut asks = [Level::default(); LEVELS];
        let mut bids = [Level::default(); LEVELS];
        for l in 0..LEVELS {
            asks[l] = Level::new(best_ask + l as i64, volume(&mut rng, cfg.level_volume_mean));
            bids[l] = Level::new(best_bid - l as i64, volume(&mut rng, cfg.level_volume_mean));
        }
        let ts = day_start + t as i64 * EVENT_SPACING_NS + rng.below(EVENT_SPACING_NS as u64) as i64;
        snapshots.push(Snapshot::new(ts, day as u32, asks, bids)?);
    }
    Ok(Day {
        day_id: day as u32,
        snapshots,
    })
}

/// Generates `n_days` days. Output depends only on the config.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<Day>> {
    use rayon::prelude::*;
    cfg.validate()?;
    (0..cfg.n_days).into_par_iter().map(|d| generate_day(cfg, d)).collect()
}
