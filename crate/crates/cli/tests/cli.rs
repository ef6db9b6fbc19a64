use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lob_uncertainty::lobdata::parse_snapshots;
use lob_uncertainty::neuralnet::{load_network, ModelConfig, TrainRngs};
use lob_uncertainty::{Network, Real};
use tempfile::TempDir;

const CONFIG: &str = r#"
seed = 11

[synth]
n_days = 12
events_per_day = 60
regimes = [
  { drift = 0.5, noise = 0.5, mean_duration = 100.0 },
  { drift = -0.5, noise = 0.5, mean_duration = 100.0 },
]

[data]
window = 20
horizon = 5
norm_trailing_days = 2

[model]
window = 20
conv_blocks = [{ kernel = [1, 2], stride = [1, 2], filters = 3 }]
inception = [{ kind = "conv", time_kernel = 1, filters = 3 }, { kind = "pool_conv", pool = 3, filters = 3 }]
recurrent_units = 6

[train]
epochs = 1
batch_size = 32

[strategy]
kind = "bayesian"
mc_samples = 8
"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
        let f = Fixture { dir };
        f.ok(&["synth", "--out", "data", "--instruments", "2"]);
        f
    }

    fn trained() -> Self {
        let f = Self::new();
        f.ok(&["train", "--data", "data", "--out", "w.bin"]);
        f
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        lobu(self.dir.path(), &[&["--config", "run.toml"], args].concat())
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "lobu {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn rows(&self, rel: &str) -> Vec<BTreeMap<String, String>> {
        csv::Reader::from_path(self.path(rel))
            .unwrap()
            .deserialize()
            .map(|r| r.unwrap())
            .collect()
    }
}

fn lobu(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobu"))
        .current_dir(cwd)
        .env_remove("LOBU_DATA_DIR")
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .unwrap()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn help_lists_every_subcommand() {
    let out = lobu(Path::new("."), &["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["synth", "train", "backtest", "sweep", "evaluate", "report"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = lobu(dir.path(), &["--config", "absent.toml", "synth", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "[synth]\nunknown_key = 1\n").unwrap();
    let out = lobu(dir.path(), &["--config", "bad.toml", "synth", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = lobu(dir.path(), &["--threads", "0", "synth", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = lobu(dir.path(), &["train", "--out", "w.bin"]);
    assert_eq!(out.status.code(), Some(2), "no data directory");
    let out = lobu(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_weights_exit_with_two() {
    let f = Fixture::new();
    let out = f.run(&["backtest", "--data", "data", "--weights", "absent.bin", "--out", "bt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.bin"));
}

#[test]
fn synth_is_deterministic_and_parses() {
    let a = Fixture::new();
    let b = Fixture::new();
    let ta = read_tree(&a.path("data"));
    assert_eq!(ta.len(), 24);
    assert_eq!(ta, read_tree(&b.path("data")));
    for (name, bytes) in &ta {
        let snaps = parse_snapshots(bytes.as_slice()).unwrap();
        assert_eq!(snaps.len(), 60, "{}", name.display());
    }
    // instruments draw from distinct streams
    assert_ne!(ta[Path::new("inst0/day0000.csv")], ta[Path::new("inst1/day0000.csv")]);
    let c = Fixture::new();
    c.ok(&["--seed", "12", "synth", "--out", "data"]);
    assert_ne!(
        read_tree(&c.path("data"))[Path::new("day0000.csv")],
        ta[Path::new("inst0/day0000.csv")]
    );
}

#[test]
fn zero_epoch_training_writes_initial_weights() {
    let f = Fixture::new();
    f.ok(&["train", "--data", "data", "--out", "w.bin", "--epochs", "0"]);
    let (net, meta) = load_network::<Real>(f.path("w.bin")).unwrap();
    let cfg: ModelConfig = net.config().clone();
    let init = Network::init(cfg, &mut TrainRngs::from_seed(11).init.clone()).unwrap();
    assert!(net.weights().bits_eq(init.weights()));
    assert_eq!(meta["best_epoch"], "0");
    assert!(meta.contains_key("gamma.inst0") && meta.contains_key("gamma.inst1"));
    assert_eq!(f.rows("w.bin.log.csv").len(), 0);
}

#[test]
fn training_log_has_one_row_per_epoch() {
    let f = Fixture::new();
    f.ok(&[
        "train",
        "--data",
        "data",
        "--out",
        "w.bin",
        "--epochs",
        "2",
        "--log",
        "logs/train.csv",
    ]);
    let rows = f.rows("logs/train.csv");
    assert_eq!(rows.len(), 2);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r["epoch"], (i + 1).to_string());
        assert!(num(r, "train_loss").is_finite());
        assert!((0.0..=1.0).contains(&num(r, "val_accuracy")));
    }
}

#[test]
fn normal_strategy_warns_about_threshold_flags() {
    let f = Fixture::trained();
    let out = f.ok(&[
        "backtest",
        "--data",
        "data",
        "--weights",
        "w.bin",
        "--out",
        "bt",
        "--strategy",
        "normal",
        "--alpha",
        "0.9",
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ignores --alpha"), "{err}");
}

#[test]
fn softmax_at_alpha_one_never_trades() {
    let f = Fixture::trained();
    f.ok(&[
        "backtest",
        "--data",
        "data",
        "--weights",
        "w.bin",
        "--out",
        "bt",
        "--strategy",
        "softmax",
        "--alpha",
        "1",
    ]);
    assert!(f.rows("bt/trades.csv").is_empty());
    for r in f.rows("bt/metrics.csv") {
        assert_eq!(r["entries"], "0");
        assert_eq!(num(&r, "total_profit_gbx"), 0.0);
    }
}

#[test]
fn backtest_outputs_agree_with_each_other_and_report() {
    let f = Fixture::trained();
    f.ok(&[
        "backtest",
        "--data",
        "data",
        "--weights",
        "w.bin",
        "--out",
        "bt",
        "--strategy",
        "normal",
    ]);
    f.ok(&["report", "--backtest", "bt", "--out", "rep"]);
    let trades = f.rows("bt/trades.csv");
    let days = f.rows("bt/days.csv");
    assert!(!trades.is_empty(), "the normal strategy should trade");

    // per-day profit and volume rebuilt from the trade list
    let mut by_day: BTreeMap<(String, String), (f64, f64, usize)> = BTreeMap::new();
    for t in &trades {
        let e = by_day.entry((t["instrument"].clone(), t["day"].clone())).or_default();
        e.0 += num(t, "pnl_gbx");
        e.1 += 2.0 * num(t, "size");
        e.2 += 1;
        let sign = if t["side"] == "long" { 1.0 } else { -1.0 };
        let expect = sign * num(t, "size") * (num(t, "exit_mid") - num(t, "entry_mid"));
        assert!((num(t, "pnl_gbx") - expect).abs() < 1e-9);
    }
    for d in &days {
        let (p, v, n) = by_day
            .get(&(d["instrument"].clone(), d["day"].clone()))
            .copied()
            .unwrap_or_default();
        assert!((num(d, "raw_profit_gbx") - p).abs() < 1e-9);
        assert_eq!(num(d, "executed_volume"), v);
        assert_eq!(d["entries"], n.to_string());
        let r = if v > 0.0 { p / v } else { 0.0 };
        assert!((num(d, "normalized_return") - r).abs() < 1e-12);
    }

    let metrics = f.rows("bt/metrics.csv");
    let all = metrics.iter().find(|r| r["instrument"] == "all").unwrap();
    let total: f64 = days.iter().map(|d| num(d, "raw_profit_gbx")).sum();
    assert!((num(all, "total_profit_gbx") - total).abs() < 1e-9);
    assert_eq!(num(all, "entries") as usize, trades.len());

    let xy = f.rows("rep/cumulative_xy.csv");
    for inst in ["inst0", "inst1"] {
        let last = xy.iter().rev().find(|r| r["instrument"] == inst).unwrap();
        let sum: f64 = days
            .iter()
            .filter(|d| d["instrument"] == inst)
            .map(|d| num(d, "raw_profit_gbx"))
            .sum();
        assert!((num(last, "y") - sum).abs() < 1e-9);
        let cum = f.rows("bt/cumulative.csv");
        let last_cum = cum.iter().rev().find(|r| r["instrument"] == inst).unwrap();
        assert!((num(last_cum, "cumulative_profit_gbx") - sum).abs() < 1e-9);
    }
    let boxes = f.rows("rep/boxplot.csv");
    assert_eq!(boxes.len(), 2);
    for b in &boxes {
        assert!(num(b, "min") <= num(b, "q1") && num(b, "q1") <= num(b, "median"));
        assert!(num(b, "median") <= num(b, "q3") && num(b, "q3") <= num(b, "max"));
    }
}

#[test]
fn evaluate_pooled_row_sums_instruments() {
    let f = Fixture::trained();
    f.ok(&["evaluate", "--data", "data", "--weights", "w.bin", "--out", "ev"]);
    f.ok(&[
        "evaluate",
        "--data",
        "data",
        "--weights",
        "w.bin",
        "--out",
        "ev_micro",
        "--auc",
        "micro",
    ]);
    let m = f.rows("ev/metrics.csv");
    assert_eq!(
        m.iter().map(|r| r["scope"].as_str()).collect::<Vec<_>>(),
        ["pooled", "inst0", "inst1"]
    );
    let samples = |i: usize| num(&m[i], "samples");
    assert_eq!(samples(0), samples(1) + samples(2));
    let correct = |i: usize| num(&m[i], "accuracy") * samples(i);
    assert!((correct(0) - correct(1) - correct(2)).abs() < 1e-6);

    let cm = f.rows("ev/confusion.csv");
    assert_eq!(cm.len(), 9);
    for class in 0..3 {
        for col in ["pred_up", "pred_neutral", "pred_down"] {
            let v = |s: usize| num(&cm[s * 3 + class], col);
            assert_eq!(v(0), v(1) + v(2));
        }
    }
    let daily = f.rows("ev/daily_accuracy.csv");
    let n: f64 = daily.iter().map(|r| num(r, "samples")).sum();
    assert_eq!(n, samples(0));
    let micro = f.rows("ev_micro/metrics.csv");
    assert_eq!(micro[0]["accuracy"], m[0]["accuracy"]);

    f.ok(&["backtest", "--data", "data", "--weights", "w.bin", "--out", "bt"]);
    f.ok(&["report", "--backtest", "bt", "--evaluate", "ev", "--out", "rep"]);
    let boxes = f.rows("rep/boxplot.csv");
    assert_eq!(boxes.iter().filter(|b| b["series"] == "daily_accuracy").count(), 2);
}

#[test]
fn sweep_grid_has_every_cell_and_matches_single_backtests() {
    let f = Fixture::trained();
    f.ok(&[
        "sweep",
        "--data",
        "data",
        "--weights",
        "w.bin",
        "--out",
        "grid.csv",
        "--alphas",
        "0.4,0.9",
        "--beta2s",
        "0.8,1.05",
    ]);
    let grid = f.rows("grid.csv");
    assert_eq!(grid.len(), 2 + 4);
    let cell = grid
        .iter()
        .find(|r| r["strategy"] == "bayesian" && r["alpha"] == "0.4" && r["beta2"] == "1.05")
        .unwrap();
    f.ok(&[
        "backtest",
        "--data",
        "data",
        "--weights",
        "w.bin",
        "--out",
        "bt",
        "--alpha",
        "0.4",
        "--beta1",
        "0.1",
        "--beta2",
        "1.05",
    ]);
    let all = f
        .rows("bt/metrics.csv")
        .into_iter()
        .find(|r| r["instrument"] == "all")
        .unwrap();
    assert_eq!(cell["entries"], all["entries"]);
    assert_eq!(cell["total_profit_gbx"], all["total_profit_gbx"]);

    let out = f.run(&[
        "sweep",
        "--data",
        "data",
        "--weights",
        "w.bin",
        "--out",
        "g.csv",
        "--alphas",
        "",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
