//! Trading decisions from class probabilities (and predictive entropy).
//!
//! All decision functions are pure: the position is passed in and the
//! returned [`Action`] is applied by the backtester.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lobdata::Snapshot;
use crate::scalar::Scalar;
use crate::uncertainty::{LogBase, CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Normal,
    Softmax,
    Bayesian,
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyKind::Normal => "normal",
            StrategyKind::Softmax => "softmax",
            StrategyKind::Bayesian => "bayesian",
        })
    }
}

/// When the Bayesian strategy leaves a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitRule {
    /// Opposite-direction signal and entropy below `beta2`.
    #[default]
    OppositeAndConfident,
    /// Entropy below `beta2`, whatever the predicted direction.
    EntropyOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    /// Share of the level-1 volume on the entered side used as the base size.
    #[serde(default = "default_fraction")]
    pub size_fraction: f64,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub exit_rule: ExitRule,
    #[serde(default)]
    pub entropy_base: LogBase,
}

fn default_alpha() -> f64 {
    0.7
}
fn default_beta1() -> f64 {
    0.1
}
fn default_beta2() -> f64 {
    0.9
}
fn default_fraction() -> f64 {
    0.3
}
fn default_mc() -> usize {
    100
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            alpha: default_alpha(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            size_fraction: default_fraction(),
            mc_samples: default_mc(),
            exit_rule: ExitRule::default(),
            entropy_base: LogBase::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.beta1.is_nan() || self.beta2.is_nan() || !(self.beta1 < self.beta2) {
            return Err(Error::Config(format!(
                "beta1 ({}) must be below beta2 ({})",
                self.beta1, self.beta2
            )));
        }
        if !(self.size_fraction > 0.0 && self.size_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "size_fraction must lie in (0, 1], got {}",
                self.size_fraction
            )));
        }
        if self.kind == StrategyKind::Bayesian && self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Long,
    Short,
}

impl Side {
    pub fn sign(self) -> i64 {
        match self {
            Side::Long => 1,
            Side::Short => -1,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Side::Long => Side::Short,
            Side::Short => Side::Long,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Long => "long",
            Side::Short => "short",
        })
    }
}

/// The single open position, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionState {
    side: Option<Side>,
    size: u64,
    entry_timestamp: i64,
}

impl PositionState {
    pub const fn flat() -> Self {
        Self {
            side: None,
            size: 0,
            entry_timestamp: 0,
        }
    }

    pub fn open(side: Side, size: u64, entry_timestamp: i64) -> Result<Self> {
        if size == 0 {
            return Err(Error::IllegalAction("cannot open a zero-size position".into()));
        }
        Ok(Self {
            side: Some(side),
            size,
            entry_timestamp,
        })
    }

    pub fn side(&self) -> Option<Side> {
        self.side
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn entry_timestamp(&self) -> i64 {
        self.entry_timestamp
    }

    pub fn is_flat(&self) -> bool {
        self.side.is_none()
    }
}

impl Default for PositionState {
    fn default() -> Self {
        Self::flat()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Hold,
    Enter { side: Side, size: u64 },
    Exit,
}

/// `floor(fraction × level-1 volume)` on the ask side for longs and the bid
/// side for shorts, at least one share.
pub fn base_size(book: &Snapshot, side: Side, fraction: f64) -> Result<u64> {
    let volume = match side {
        Side::Long => book.best_ask().volume,
        Side::Short => book.best_bid().volume,
    };
    if volume == 0 {
        return Err(Error::Validation("level-1 volume is zero".into()));
    }
    // absorb representation error such as 0.3 * 10 = 2.9999...
    let raw = (fraction * volume as f64 + 1e-9).floor() as u64;
    Ok(raw.max(1))
}

/// Directional call of a probability vector. Any tie at the maximum, and a
/// neutral maximum, give `None`.
pub fn direction<S: Scalar>(p: &[S; CLASSES]) -> Option<Side> {
    let max = p[0].max(p[1]).max(p[2]);
    if p[1] == max || (p[0] == max && p[2] == max) {
        None
    } else if p[0] == max {
        Some(Side::Long)
    } else {
        Some(Side::Short)
    }
}

fn max_prob<S: Scalar>(p: &[S; CLASSES]) -> f64 {
    p[0].max(p[1]).max(p[2]).as_f64()
}

fn exit_on_opposite<S: Scalar>(p: &[S; CLASSES], state: &PositionState) -> Action {
    match (state.side, direction(p)) {
        (Some(held), Some(signal)) if signal == held.opposite() => Action::Exit,
        _ => Action::Hold,
    }
}

pub fn normal_decide<S: Scalar>(p: &[S; CLASSES], state: &PositionState, mu: impl Fn(Side) -> u64) -> Action {
    if !state.is_flat() {
        return exit_on_opposite(p, state);
    }
    match direction(p) {
        Some(side) => Action::Enter { side, size: mu(side) },
        None => Action::Hold,
    }
}

/// Normal rule with entries restricted to `max(p) > alpha`.
pub fn softmax_decide<S: Scalar>(
    p: &[S; CLASSES],
    alpha: f64,
    state: &PositionState,
    mu: impl Fn(Side) -> u64,
) -> Action {
    if !state.is_flat() {
        return exit_on_opposite(p, state);
    }
    match direction(p) {
        Some(side) if max_prob(p) > alpha => Action::Enter { side, size: mu(side) },
        _ => Action::Hold,
    }
}

/// Size multiplier band from the entropy: `3/2` below `beta1`, `1/2` above
/// `beta2`, otherwise one.
fn scaled_size(mu: u64, entropy: f64, beta1: f64, beta2: f64) -> u64 {
    let size = if entropy < beta1 {
        mu * 3 / 2
    } else if entropy > beta2 {
        mu / 2
    } else {
        mu
    };
    size.max(1)
}

pub fn bayesian_decide<S: Scalar>(
    p_bar: &[S; CLASSES],
    entropy: S,
    cfg: &StrategyConfig,
    state: &PositionState,
    mu: impl Fn(Side) -> u64,
) -> Action {
    let h = entropy.as_f64();
    if let Some(held) = state.side {
        let confident = h < cfg.beta2;
        let leave = match cfg.exit_rule {
            ExitRule::OppositeAndConfident => confident && direction(p_bar) == Some(held.opposite()),
            ExitRule::EntropyOnly => confident,
        };
        return if leave { Action::Exit } else { Action::Hold };
    }
    match direction(p_bar) {
        Some(side) if max_prob(p_bar) > cfg.alpha => Action::Enter {
            side,
            size: scaled_size(mu(side), h, cfg.beta1, cfg.beta2),
        },
        _ => Action::Hold,
    }
}

/// Model output at one decision point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signal<S> {
    pub probs: [S; CLASSES],
    /// Predictive entropy; required by the Bayesian strategy.
    pub entropy: Option<S>,
}

/// Dispatches on `cfg.kind`, sizing from `book`.
pub fn decide<S: Scalar>(
    cfg: &StrategyConfig,
    signal: &Signal<S>,
    state: &PositionState,
    book: &Snapshot,
) -> Result<Action> {
    let long = base_size(book, Side::Long, cfg.size_fraction)?;
    let short = base_size(book, Side::Short, cfg.size_fraction)?;
    let mu = |side| match side {
        Side::Long => long,
        Side::Short => short,
    };
    Ok(match cfg.kind {
        StrategyKind::Normal => normal_decide(&signal.probs, state, mu),
        StrategyKind::Softmax => softmax_decide(&signal.probs, cfg.alpha, state, mu),
        StrategyKind::Bayesian => {
            let h = signal
                .entropy
                .ok_or_else(|| Error::Config("bayesian strategy needs predictive entropy".into()))?;
            bayesian_decide(&signal.probs, h, cfg, state, mu)
        }
    })
}
