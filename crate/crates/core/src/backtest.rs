//! Day-by-day mid-price replay of strategy decisions.
//!
//! Prices are carried as twice the mid-price in integer ticks ("half-ticks"),
//! so every profit figure is an exact integer until it is converted to GBX for
//! reporting. There are no transaction costs, and open positions are closed at
//! the last snapshot of the day.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lobdata::{Day, DayWindows};
use crate::neuralnet::Network;
use crate::rng::CounterRng;
use crate::scalar::Scalar;
use crate::strategy::{decide, Action, PositionState, Side, Signal, StrategyConfig, StrategyKind};
use crate::uncertainty::{UncertaintySummary, CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Signal,
    EndOfDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trade {
    pub side: Side,
    pub size: u64,
    pub entry_index: usize,
    pub exit_index: usize,
    pub entry_timestamp: i64,
    pub exit_timestamp: i64,
    pub entry_mid_half_ticks: i64,
    pub exit_mid_half_ticks: i64,
    /// `sign(side) × size × (exit_mid − entry_mid)` in half-ticks.
    pub pnl_half_ticks: i64,
    pub exit_reason: ExitReason,
}

impl Trade {
    pub fn entry_mid(&self) -> f64 {
        self.entry_mid_half_ticks as f64 / 2.0
    }

    pub fn exit_mid(&self) -> f64 {
        self.exit_mid_half_ticks as f64 / 2.0
    }

    pub fn pnl_gbx(&self, tick_gbx: f64) -> f64 {
        half_ticks_to_gbx(self.pnl_half_ticks, tick_gbx)
    }

    /// Holding period in events.
    pub fn holding_events(&self) -> usize {
        self.exit_index - self.entry_index
    }
}

pub fn half_ticks_to_gbx(v: i64, tick_gbx: f64) -> f64 {
    v as f64 * tick_gbx / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayResult {
    pub day_id: u32,
    pub trades: Vec<Trade>,
    /// Action taken at each decision point, in order.
    pub actions: Vec<Action>,
    pub raw_profit_half_ticks: i64,
    /// Entry plus exit sizes of every trade.
    pub executed_volume: u64,
    pub tick_gbx: f64,
}

impl DayResult {
    pub fn raw_profit_gbx(&self) -> f64 {
        half_ticks_to_gbx(self.raw_profit_half_ticks, self.tick_gbx)
    }

    /// Profit per executed share; zero on a day without trades.
    pub fn normalized_return(&self) -> f64 {
        if self.executed_volume == 0 {
            0.0
        } else {
            self.raw_profit_gbx() / self.executed_volume as f64
        }
    }

    pub fn entries(&self) -> usize {
        self.trades.len()
    }
}

/// Model output at one window anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision<S> {
    pub anchor_index: usize,
    pub timestamp: i64,
    pub signal: Signal<S>,
}

fn check_alignment<S>(day: &Day, decisions: &[Decision<S>]) -> Result<()> {
    let mut prev: Option<usize> = None;
    for d in decisions {
        let Some(snap) = day.snapshots.get(d.anchor_index) else {
            return Err(Error::Misaligned(format!(
                "anchor {} beyond day {} of length {}",
                d.anchor_index,
                day.day_id,
                day.len()
            )));
        };
        if snap.timestamp != d.timestamp {
            return Err(Error::Misaligned(format!(
                "anchor {} has timestamp {}, snapshot has {}",
                d.anchor_index, d.timestamp, snap.timestamp
            )));
        }
        if prev.is_some_and(|p| p >= d.anchor_index) {
            return Err(Error::Misaligned("anchors must strictly increase".into()));
        }
        prev = Some(d.anchor_index);
    }
    Ok(())
}

/// Replays one day's decisions through the strategy.
pub fn run_day<S: Scalar>(
    day: &Day,
    decisions: &[Decision<S>],
    cfg: &StrategyConfig,
    tick_gbx: f64,
) -> Result<DayResult> {
    check_alignment(day, decisions)?;
    let mut state = PositionState::flat();
    let mut entry_index = 0usize;
    let mut entry_mid = 0i64;
    let mut trades = Vec::new();
    let mut actions = Vec::with_capacity(decisions.len());

    let close = |state: &PositionState, entry_index: usize, entry_mid: i64, exit_index: usize, reason| {
        let side = state.side().expect("open position");
        let exit = &day.snapshots[exit_index];
        let exit_mid = exit.mid_half_ticks();
        Trade {
            side,
            size: state.size(),
            entry_index,
            exit_index,
            entry_timestamp: state.entry_timestamp(),
            exit_timestamp: exit.timestamp,
            entry_mid_half_ticks: entry_mid,
            exit_mid_half_ticks: exit_mid,
            pnl_half_ticks: side.sign() * state.size() as i64 * (exit_mid - entry_mid),
            exit_reason: reason,
        }
    };

    for d in decisions {
        let book = &day.snapshots[d.anchor_index];
        let action = decide(cfg, &d.signal, &state, book)?;
        match action {
            Action::Hold => {}
            Action::Enter { side, size } => {
                if !state.is_flat() {
                    return Err(Error::IllegalAction(format!(
                        "enter {side} at anchor {} while holding a position",
                        d.anchor_index
                    )));
                }
                state = PositionState::open(side, size, book.timestamp)?;
                entry_index = d.anchor_index;
                entry_mid = book.mid_half_ticks();
            }
            Action::Exit => {
                if state.is_flat() {
                    return Err(Error::IllegalAction(format!(
                        "exit at anchor {} while flat",
                        d.anchor_index
                    )));
                }
                trades.push(close(
                    &state,
                    entry_index,
                    entry_mid,
                    d.anchor_index,
                    ExitReason::Signal,
                ));
                state = PositionState::flat();
            }
        }
        actions.push(action);
    }
    if !state.is_flat() {
        let last = day
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::Empty(format!("day {} has no snapshots", day.day_id)))?;
        trades.push(close(&state, entry_index, entry_mid, last, ExitReason::EndOfDay));
    }
    let raw_profit_half_ticks = trades.iter().map(|t| t.pnl_half_ticks).sum();
    let executed_volume = trades.iter().map(|t| 2 * t.size).sum();
    Ok(DayResult {
        day_id: day.day_id,
        trades,
        actions,
        raw_profit_half_ticks,
        executed_volume,
        tick_gbx,
    })
}

/// Deterministic probabilities and, when sampled, the MC summary at one anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<S> {
    pub anchor_index: usize,
    pub timestamp: i64,
    pub probs: [S; CLASSES],
    pub summary: Option<UncertaintySummary<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayPredictions<S> {
    pub day_id: u32,
    pub points: Vec<Prediction<S>>,
}

impl<S: Scalar> DayPredictions<S> {
    /// Signals the given strategy consumes: the MC mean and entropy for the
    /// Bayesian strategy, deterministic probabilities otherwise.
    pub fn decisions(&self, cfg: &StrategyConfig) -> Result<Vec<Decision<S>>> {
        self.points
            .iter()
            .map(|p| {
                let signal = match cfg.kind {
                    StrategyKind::Bayesian => {
                        let s = p
                            .summary
                            .ok_or_else(|| Error::Config("bayesian strategy needs Monte-Carlo predictions".into()))?;
                        let entropy = match cfg.entropy_base {
                            crate::uncertainty::LogBase::Nats => s.entropy,
                            crate::uncertainty::LogBase::Bits => {
                                crate::uncertainty::predictive_entropy_in(&s.p_bar, cfg.entropy_base)
                            }
                        };
                        Signal {
                            probs: s.p_bar,
                            entropy: Some(entropy),
                        }
                    }
                    _ => Signal {
                        probs: p.probs,
                        entropy: None,
                    },
                };
                Ok(Decision {
                    anchor_index: p.anchor_index,
                    timestamp: p.timestamp,
                    signal,
                })
            })
            .collect()
    }
}

/// A day of snapshots with its prepared windows.
#[derive(Debug, Clone, Copy)]
pub struct BacktestDay<'a, S> {
    pub day: &'a Day,
    pub windows: &'a DayWindows<S>,
}

/// Runs the network on every window. With `mc_passes`, each window also gets
/// a Monte-Carlo summary drawn from `rng.child(day_id).child(anchor_index)`,
/// so results do not depend on evaluation order or thread count.
pub fn predict_days<S: Scalar>(
    net: &Network<S>,
    days: &[BacktestDay<'_, S>],
    mc_passes: Option<usize>,
    rng: &CounterRng,
) -> Result<Vec<DayPredictions<S>>> {
    days.iter()
        .map(|bd| {
            let w = bd.windows;
            if w.day_id != bd.day.day_id {
                return Err(Error::Misaligned(format!(
                    "windows of day {} paired with day {}",
                    w.day_id, bd.day.day_id
                )));
            }
            let day_rng = rng.child(w.day_id as u64);
            let points = (0..w.len())
                .into_par_iter()
                .map(|j| {
                    let meta = w.windows[j];
                    let x = w.values(j);
                    let probs = net.predict(x)?;
                    let summary = match mc_passes {
                        Some(m) => {
                            let mut r = day_rng.child(meta.anchor_index as u64);
                            Some(UncertaintySummary::from_samples(&net.mc_forward(x, m, &mut r)?))
                        }
                        None => None,
                    };
                    Ok(Prediction {
                        anchor_index: meta.anchor_index,
                        timestamp: meta.anchor_timestamp,
                        probs,
                        summary,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DayPredictions {
                day_id: w.day_id,
                points,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub strategy: StrategyConfig,
    pub days: Vec<DayResult>,
}

impl BacktestReport {
    pub fn returns(&self) -> Vec<f64> {
        self.days.iter().map(DayResult::normalized_return).collect()
    }

    pub fn total_profit_half_ticks(&self) -> i64 {
        self.days.iter().map(|d| d.raw_profit_half_ticks).sum()
    }

    pub fn trades(&self) -> impl Iterator<Item = &Trade> {
        self.days.iter().flat_map(|d| d.trades.iter())
    }

    pub fn entries(&self) -> usize {
        self.days.iter().map(DayResult::entries).sum()
    }

    pub fn mean_holding_events(&self) -> Option<f64> {
        let n = self.entries();
        (n > 0).then(|| self.trades().map(|t| t.holding_events() as f64).sum::<f64>() / n as f64)
    }
}

/// Replays precomputed predictions; several strategies can share one set.
pub fn replay<S: Scalar>(
    days: &[&Day],
    predictions: &[DayPredictions<S>],
    cfg: &StrategyConfig,
    tick_gbx: f64,
) -> Result<BacktestReport> {
    cfg.validate()?;
    if days.len() != predictions.len() {
        return Err(Error::Misaligned(format!(
            "{} days but {} prediction sets",
            days.len(),
            predictions.len()
        )));
    }
    let results = days
        .iter()
        .zip(predictions)
        .map(|(day, p)| {
            if day.day_id != p.day_id {
                return Err(Error::Misaligned(format!(
                    "day {} paired with predictions of day {}",
                    day.day_id, p.day_id
                )));
            }
            run_day(day, &p.decisions(cfg)?, cfg, tick_gbx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BacktestReport {
        strategy: cfg.clone(),
        days: results,
    })
}

/// Predicts with the network (MC sampling only for the Bayesian strategy) and
/// replays every day.
pub fn run_backtest<S: Scalar>(
    net: &Network<S>,
    days: &[BacktestDay<'_, S>],
    cfg: &StrategyConfig,
    tick_gbx: f64,
    rng: &CounterRng,
) -> Result<BacktestReport> {
    cfg.validate()?;
    let mc = (cfg.kind == StrategyKind::Bayesian).then_some(cfg.mc_samples);
    let preds = predict_days(net, days, mc, rng)?;
    let plain: Vec<&Day> = days.iter().map(|d| d.day).collect();
    replay(&plain, &preds, cfg, tick_gbx)
}

/// Running total of daily raw profit in GBX.
pub fn cumulative_profits(report: &BacktestReport) -> Vec<f64> {
    let mut acc = 0i64;
    report
        .days
        .iter()
        .map(|d| {
            acc += d.raw_profit_half_ticks;
            half_ticks_to_gbx(acc, d.tick_gbx)
        })
        .collect()
}
