use lob_uncertainty::backtest::{cumulative_profits, run_day, Decision, ExitReason};
use lob_uncertainty::lobdata::{Day, Level, Snapshot, LEVELS};
use lob_uncertainty::rng::CounterRng;
use lob_uncertainty::strategy::{Action, Side, Signal, StrategyConfig, StrategyKind};
use lob_uncertainty::synthgen::{generate, SynthConfig};
use lob_uncertainty::uncertainty::predictive_entropy;

fn random_signals(day: &Day, rng: &mut CounterRng, every: usize) -> Vec<Decision<f64>> {
    (0..day.len())
        .step_by(every)
        .map(|i| {
            let raw = [rng.uniform() + 1e-3, rng.uniform() + 1e-3, rng.uniform() + 1e-3];
            let s: f64 = raw.iter().sum();
            let probs = raw.map(|v| v / s);
            Decision {
                anchor_index: i,
                timestamp: day.snapshots[i].timestamp,
                signal: Signal {
                    probs,
                    entropy: Some(predictive_entropy(&probs)),
                },
            }
        })
        .collect()
}

/// Mirror image of a book around `c`: prices `c − p`, with the bid prices
/// becoming ask prices. With `swap_volumes` the volumes travel with their
/// prices; otherwise each side keeps its own volumes, so sizing is unchanged.
fn mirror(day: &Day, c: i64, swap_volumes: bool) -> Day {
    let snapshots = day
        .snapshots
        .iter()
        .map(|s| {
            let (av, bv) = if swap_volumes {
                (&s.bids, &s.asks)
            } else {
                (&s.asks, &s.bids)
            };
            let asks: [Level; LEVELS] = std::array::from_fn(|l| Level::new(c - s.bids[l].price, av[l].volume));
            let bids: [Level; LEVELS] = std::array::from_fn(|l| Level::new(c - s.asks[l].price, bv[l].volume));
            Snapshot::new(s.timestamp, s.day_id, asks, bids).unwrap()
        })
        .collect();
    Day {
        day_id: day.day_id,
        snapshots,
    }
}

fn flip(d: &Decision<f64>) -> Decision<f64> {
    let [u, n, dn] = d.signal.probs;
    Decision {
        signal: Signal {
            probs: [dn, n, u],
            entropy: d.signal.entropy,
        },
        ..*d
    }
}

fn days() -> Vec<Day> {
    generate(&SynthConfig {
        seed: 4,
        n_days: 20,
        events_per_day: 400,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn configs() -> Vec<StrategyConfig> {
    let mut out = vec![
        StrategyConfig::new(StrategyKind::Normal),
        StrategyConfig {
            alpha: 0.5,
            ..StrategyConfig::new(StrategyKind::Softmax)
        },
    ];
    for beta2 in [0.5, 0.9] {
        out.push(StrategyConfig {
            alpha: 0.45,
            beta1: 0.8,
            beta2,
            ..StrategyConfig::new(StrategyKind::Bayesian)
        });
    }
    out
}

#[test]
fn mirrored_prices_negate_every_trade() {
    let mut rng = CounterRng::from_key(77);
    for day in days().iter().take(6) {
        let sig = random_signals(day, &mut rng, 3);
        let mirrored = mirror(day, 30_000, false);
        for cfg in configs() {
            let a = run_day(day, &sig, &cfg, 1.0).unwrap();
            let b = run_day(&mirrored, &sig, &cfg, 1.0).unwrap();
            assert!(!a.trades.is_empty());
            assert_eq!(a.trades.len(), b.trades.len());
            for (x, y) in a.trades.iter().zip(&b.trades) {
                assert_eq!(x.pnl_half_ticks, -y.pnl_half_ticks);
                assert_eq!((x.side, x.size, x.exit_index), (y.side, y.size, y.exit_index));
            }
            assert_eq!(a.raw_profit_half_ticks, -b.raw_profit_half_ticks);
        }
    }
}

#[test]
fn mirrored_market_with_flipped_signals_is_the_same_trade_book() {
    let mut rng = CounterRng::from_key(76);
    for day in days().iter().take(6) {
        let sig = random_signals(day, &mut rng, 3);
        let mirrored = mirror(day, 30_000, true);
        let flipped: Vec<_> = sig.iter().map(flip).collect();
        for cfg in configs() {
            let a = run_day(day, &sig, &cfg, 1.0).unwrap();
            let b = run_day(&mirrored, &flipped, &cfg, 1.0).unwrap();
            assert_eq!(a.trades.len(), b.trades.len());
            for (x, y) in a.trades.iter().zip(&b.trades) {
                assert_eq!(x.pnl_half_ticks, y.pnl_half_ticks);
                assert_eq!(x.side, y.side.opposite());
                assert_eq!(x.size, y.size);
            }
        }
    }
}

/// Straight-line replay with its own position bookkeeping.
fn oracle_replay(day: &Day, sig: &[Decision<f64>], actions: &[Action]) -> (i64, u64) {
    let mut open: Option<(Side, u64, i64)> = None;
    let (mut pnl, mut volume) = (0i64, 0u64);
    let mid2 = |i: usize| day.snapshots[i].asks[0].price + day.snapshots[i].bids[0].price;
    let close = |(side, size, entry): (Side, u64, i64), exit: i64| {
        let sign = if side == Side::Long { 1 } else { -1 };
        sign * size as i64 * (exit - entry)
    };
    for (d, a) in sig.iter().zip(actions) {
        match *a {
            Action::Enter { side, size } => {
                assert!(open.is_none());
                open = Some((side, size, mid2(d.anchor_index)));
                volume += size;
            }
            Action::Exit => {
                let o = open.take().unwrap();
                pnl += close(o, mid2(d.anchor_index));
                volume += o.1;
            }
            Action::Hold => {}
        }
    }
    if let Some(o) = open {
        pnl += close(o, mid2(day.len() - 1));
        volume += o.1;
    }
    (pnl, volume)
}

#[test]
fn accounting_is_exact_and_days_end_flat() {
    let mut rng = CounterRng::from_key(78);
    let days = days();
    for cfg in configs() {
        let mut results = Vec::new();
        for day in &days {
            let sig = random_signals(day, &mut rng, 2);
            let r = run_day(day, &sig, &cfg, 0.5).unwrap();
            let (pnl, vol) = oracle_replay(day, &sig, &r.actions);
            assert_eq!(r.raw_profit_half_ticks, pnl);
            assert_eq!(r.executed_volume, vol);
            assert_eq!(
                r.raw_profit_half_ticks,
                r.trades.iter().map(|t| t.pnl_half_ticks).sum::<i64>()
            );
            // at most the last trade is closed by the session end, at the final snapshot
            for t in &r.trades[..r.trades.len().saturating_sub(1)] {
                assert_eq!(t.exit_reason, ExitReason::Signal);
            }
            if let Some(t) = r.trades.last() {
                if t.exit_reason == ExitReason::EndOfDay {
                    assert_eq!(t.exit_index, day.len() - 1);
                }
            }
            results.push(r);
        }
        let report = lob_uncertainty::backtest::BacktestReport {
            strategy: cfg.clone(),
            days: results,
        };
        let total: i64 = report.trades().map(|t| t.pnl_half_ticks).sum();
        assert_eq!(report.total_profit_half_ticks(), total);
        let cum = cumulative_profits(&report);
        assert_eq!(*cum.last().unwrap(), total as f64 * 0.5 / 2.0);
    }
}

#[test]
fn alpha_one_softmax_never_enters() {
    let mut rng = CounterRng::from_key(79);
    let day = &days()[0];
    let sig = random_signals(day, &mut rng, 1);
    let cfg = StrategyConfig {
        alpha: 1.0,
        ..StrategyConfig::new(StrategyKind::Softmax)
    };
    assert!(run_day(day, &sig, &cfg, 1.0).unwrap().trades.is_empty());
}
