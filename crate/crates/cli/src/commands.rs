use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use lob_uncertainty::backtest::{predict_days, replay, BacktestDay, BacktestReport, DayPredictions};
use lob_uncertainty::dataset::{discover_instruments, prepare_instrument, DataConfig, Instrument, Split};
use lob_uncertainty::lobdata::{write_snapshots, Movement};
use lob_uncertainty::metrics::{
    auc, confusion_matrix, daily_accuracy, ddr, precision_recall_f1, quartiles, sharpe, AucAverage, ConfusionMatrix,
    DayLabels,
};
use lob_uncertainty::neuralnet::{
    encode_weights, load_network, save_weights, train, Metadata, Optimizer, Sample, TrainRngs,
};
use lob_uncertainty::rng::{fnv1a64, CounterRng};
use lob_uncertainty::strategy::{Action, ExitRule, StrategyConfig, StrategyKind};
use lob_uncertainty::synthgen::generate;
use lob_uncertainty::uncertainty::argmax;
use lob_uncertainty::Network;
use log::{info, warn};
use serde::Deserialize;

use crate::config::FileConfig;
use crate::output::{self, num, opt_num};
use crate::{
    AucArg, BacktestArgs, Cli, Command, DataArg, EvaluateArgs, ExitRuleArg, KindArg, ModelInput, ReportArgs, SplitArg,
    SweepArgs, SynthArgs, TrainArgs, UsageError,
};

struct Ctx {
    file: FileConfig,
    seed: u64,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Config problems are usage errors; everything else is a runtime failure.
fn core(e: lob_uncertainty::Error) -> anyhow::Error {
    match e {
        lob_uncertainty::Error::Config(m) => usage(m),
        other => anyhow!(other),
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let file = FileConfig::load_opt(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            warn!("thread pool already initialised; --threads ignored");
        }
    }
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let ctx = Ctx { file, seed };
    match cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Backtest(a) => backtest(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Report(a) => report(a),
    }
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let mut cfg = ctx.file.synth.clone().unwrap_or_default();
    if let Some(d) = a.days {
        cfg.n_days = d;
    }
    if let Some(e) = a.events {
        cfg.events_per_day = e;
    }
    if a.instruments == 0 {
        return Err(usage("--instruments must be positive"));
    }
    cfg.validate().map_err(core)?;
    let streams = CounterRng::stream(ctx.seed, "data");
    let mut rows = 0;
    for i in 0..a.instruments {
        let mut c = cfg.clone();
        c.seed = streams.child(i as u64).key();
        let dir = if a.instruments == 1 {
            a.out.clone()
        } else {
            a.out.join(format!("inst{i}"))
        };
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for day in generate(&c).map_err(core)? {
            let path = dir.join(format!("day{:04}.csv", day.day_id));
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_snapshots(BufWriter::new(f), &day.snapshots)?;
            rows += day.len();
        }
    }
    println!(
        "wrote {} instrument(s) x {} days, {rows} snapshots to {}",
        a.instruments,
        cfg.n_days,
        a.out.display()
    );
    Ok(())
}

fn data_dir(ctx: &Ctx, arg: &DataArg) -> Result<PathBuf> {
    let dir = arg
        .data
        .clone()
        .or_else(|| ctx.file.data_dir.clone())
        .ok_or_else(|| usage("no data directory: pass --data or set LOBU_DATA_DIR"))?;
    if !dir.is_dir() {
        return Err(usage(format!("data directory {} does not exist", dir.display())));
    }
    Ok(dir)
}

fn load_instruments(dir: &Path, cfg: &DataConfig, gammas: &BTreeMap<String, f64>) -> Result<Vec<Instrument<f64>>> {
    discover_instruments(dir)
        .map_err(core)?
        .into_iter()
        .map(|(name, days)| {
            let mut c = cfg.clone();
            if let Some(&g) = gammas.get(&name) {
                c.gamma = Some(g);
            }
            prepare_instrument(&name, days, &c)
                .map_err(core)
                .with_context(|| format!("preparing instrument {name}"))
        })
        .collect()
}

const META_DATA_CONFIG: &str = "data_config";
const META_GAMMA_PREFIX: &str = "gamma.";

fn train_cmd(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let data_cfg = ctx.file.data.clone();
    let model = ctx.file.model();
    if model.window != data_cfg.window {
        return Err(usage(format!(
            "model window ({}) differs from data window ({})",
            model.window, data_cfg.window
        )));
    }
    model.shapes().map_err(core)?;
    let mut opt = ctx.file.train.clone();
    if let Some(e) = a.epochs {
        opt.epochs = e;
    }
    if let Some(b) = a.batch_size {
        opt.batch_size = b;
    }
    if let Some(lr) = a.lr {
        match &mut opt.optimizer {
            Optimizer::Adam { lr: l, .. } | Optimizer::Sgd { lr: l } => *l = lr,
        }
    }
    let dir = data_dir(ctx, &a.data)?;
    let insts = load_instruments(&dir, &data_cfg, &BTreeMap::new())?;
    let train_set: Vec<Sample<'_, f64>> = insts.iter().flat_map(|i| i.samples(Split::Train)).collect();
    let val_set: Vec<Sample<'_, f64>> = insts.iter().flat_map(|i| i.samples(Split::Validation)).collect();
    info!("{} training and {} validation windows", train_set.len(), val_set.len());

    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log.csv");
        PathBuf::from(p)
    });
    let mut log = output::create(&log_path, &["epoch", "train_loss", "val_loss", "val_accuracy"])?;
    let mut log_err = None;
    let outcome = train(
        &model,
        &train_set,
        &val_set,
        &opt,
        &TrainRngs::from_seed(ctx.seed),
        |e| {
            let r = log.write_record([
                e.epoch.to_string(),
                num(e.train_loss),
                num(e.val_loss),
                num(e.val_accuracy),
            ]);
            if let Err(err) = r {
                log_err.get_or_insert(err);
            }
            info!("epoch {} val loss {:.5} acc {:.4}", e.epoch, e.val_loss, e.val_accuracy);
        },
    )
    .map_err(core)?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    log.flush()?;

    let mut meta = Metadata::new();
    meta.insert(META_DATA_CONFIG.into(), serde_json::to_string(&data_cfg)?);
    for i in &insts {
        meta.insert(format!("{META_GAMMA_PREFIX}{}", i.name), i.gamma.to_string());
    }
    meta.insert("seed".into(), ctx.seed.to_string());
    meta.insert("best_epoch".into(), outcome.best_epoch.to_string());
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_weights(&a.out, &outcome.network, &meta)?;
    let digest = fnv1a64(&encode_weights(&outcome.network, &meta));
    let best = outcome.best_epoch.checked_sub(1).map(|i| &outcome.history[i]);
    println!(
        "trained {} epochs on {} windows; best epoch {} (val accuracy {}); weights {} digest {digest:016x}",
        outcome.history.len(),
        train_set.len(),
        outcome.best_epoch,
        best.map_or("n/a".into(), |b| format!("{:.4}", b.val_accuracy)),
        a.out.display()
    );
    Ok(())
}

struct Loaded {
    net: Network,
    insts: Vec<Instrument<f64>>,
    split: Split,
}

fn load_model_input(ctx: &Ctx, input: &ModelInput, default_split: Split) -> Result<Loaded> {
    if !input.weights.is_file() {
        return Err(usage(format!("weight file {} not found", input.weights.display())));
    }
    let (net, meta) = load_network::<f64>(&input.weights)
        .map_err(|e| anyhow!(e))
        .with_context(|| format!("loading {}", input.weights.display()))?;
    let data_cfg: DataConfig = match meta.get(META_DATA_CONFIG) {
        Some(json) => serde_json::from_str(json).context("weight metadata holds an invalid data config")?,
        None => ctx.file.data.clone(),
    };
    if data_cfg.window != net.config().window {
        return Err(usage(format!(
            "network window ({}) differs from data window ({})",
            net.config().window,
            data_cfg.window
        )));
    }
    let gammas = meta
        .iter()
        .filter_map(|(k, v)| Some((k.strip_prefix(META_GAMMA_PREFIX)?.to_string(), v.parse().ok()?)))
        .collect();
    let dir = data_dir(ctx, &input.data)?;
    let insts = load_instruments(&dir, &data_cfg, &gammas)?;
    let split = match input.split {
        Some(SplitArg::Train) => Split::Train,
        Some(SplitArg::Validation) => Split::Validation,
        Some(SplitArg::Test) => Split::Test,
        None => default_split,
    };
    Ok(Loaded { net, insts, split })
}

fn backtest_days(inst: &Instrument<f64>, split: Split) -> Vec<BacktestDay<'_, f64>> {
    inst.split(split)
        .map(|d| BacktestDay {
            day: &d.day,
            windows: &d.windows,
        })
        .collect()
}

/// Predictions per instrument; Monte-Carlo streams are `mc.child(instrument)`.
fn predictions(ctx: &Ctx, l: &Loaded, mc: Option<usize>) -> Result<Vec<Vec<DayPredictions<f64>>>> {
    let base = CounterRng::stream(ctx.seed, "mc");
    l.insts
        .iter()
        .enumerate()
        .map(|(i, inst)| predict_days(&l.net, &backtest_days(inst, l.split), mc, &base.child(i as u64)).map_err(core))
        .collect()
}

fn replay_all(
    l: &Loaded,
    preds: &[Vec<DayPredictions<f64>>],
    cfg: &StrategyConfig,
    tick: f64,
) -> Result<Vec<BacktestReport>> {
    l.insts
        .iter()
        .zip(preds)
        .map(|(inst, p)| {
            let days: Vec<_> = inst.split(l.split).map(|d| &d.day).collect();
            replay(&days, p, cfg, tick).map_err(core)
        })
        .collect()
}

fn exit_rule(e: ExitRuleArg) -> ExitRule {
    match e {
        ExitRuleArg::OppositeAndConfident => ExitRule::OppositeAndConfident,
        ExitRuleArg::EntropyOnly => ExitRule::EntropyOnly,
    }
}

fn strategy_from(ctx: &Ctx, a: &BacktestArgs) -> Result<StrategyConfig> {
    let mut cfg = ctx.file.strategy();
    if let Some(k) = a.strategy {
        cfg.kind = match k {
            KindArg::Normal => StrategyKind::Normal,
            KindArg::Softmax => StrategyKind::Softmax,
            KindArg::Bayesian => StrategyKind::Bayesian,
        };
    }
    let mut ignored = Vec::new();
    let mut set = |v: Option<f64>, name: &str, used: bool, slot: &mut f64| {
        if let Some(x) = v {
            if used {
                *slot = x;
            } else {
                ignored.push(name.to_string());
            }
        }
    };
    let kind = cfg.kind;
    set(a.alpha, "--alpha", kind != StrategyKind::Normal, &mut cfg.alpha);
    set(a.beta1, "--beta1", kind == StrategyKind::Bayesian, &mut cfg.beta1);
    set(a.beta2, "--beta2", kind == StrategyKind::Bayesian, &mut cfg.beta2);
    set(a.size_fraction, "--size-fraction", true, &mut cfg.size_fraction);
    if !ignored.is_empty() {
        warn!("the {kind} strategy ignores {}", ignored.join(", "));
    }
    if let Some(m) = a.mc_samples {
        cfg.mc_samples = m;
    }
    if let Some(e) = a.exit_rule {
        cfg.exit_rule = exit_rule(e);
    }
    cfg.validate().map_err(core)?;
    Ok(cfg)
}

fn action_fields(a: &Action) -> [String; 3] {
    match a {
        Action::Hold => ["hold".into(), String::new(), String::new()],
        Action::Enter { side, size } => ["enter".into(), side.to_string(), size.to_string()],
        Action::Exit => ["exit".into(), String::new(), String::new()],
    }
}

/// Summary row of a set of daily results.
struct Summary {
    days: usize,
    entries: usize,
    volume: u64,
    profit_half_ticks: i64,
    returns: Vec<f64>,
    holding_sum: usize,
}

impl Summary {
    fn of<'a>(reports: impl IntoIterator<Item = &'a BacktestReport>) -> Self {
        let mut s = Summary {
            days: 0,
            entries: 0,
            volume: 0,
            profit_half_ticks: 0,
            returns: Vec::new(),
            holding_sum: 0,
        };
        for r in reports {
            for d in &r.days {
                s.days += 1;
                s.entries += d.entries();
                s.volume += d.executed_volume;
                s.profit_half_ticks += d.raw_profit_half_ticks;
                s.returns.push(d.normalized_return());
                s.holding_sum += d.trades.iter().map(|t| t.holding_events()).sum::<usize>();
            }
        }
        s
    }

    fn mean_return(&self) -> Option<f64> {
        (!self.returns.is_empty()).then(|| lob_uncertainty::metrics::mean(&self.returns))
    }

    fn mean_holding(&self) -> Option<f64> {
        (self.entries > 0).then(|| self.holding_sum as f64 / self.entries as f64)
    }
}

fn backtest(ctx: &Ctx, a: BacktestArgs) -> Result<()> {
    let l = load_model_input(ctx, &a.input, ctx.file.backtest.split)?;
    let cfg = strategy_from(ctx, &a)?;
    let tick = a.tick_gbx.unwrap_or(ctx.file.backtest.tick_gbx);
    if !(tick > 0.0 && tick.is_finite()) {
        return Err(usage("tick value must be positive"));
    }
    let mc = (cfg.kind == StrategyKind::Bayesian).then_some(cfg.mc_samples);
    let preds = predictions(ctx, &l, mc)?;
    let reports = replay_all(&l, &preds, &cfg, tick)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let mut days = output::create(
        &a.out.join("days.csv"),
        &[
            "instrument",
            "day",
            "entries",
            "executed_volume",
            "raw_profit_gbx",
            "normalized_return",
        ],
    )?;
    let mut trades = output::create(
        &a.out.join("trades.csv"),
        &[
            "instrument",
            "day",
            "side",
            "size",
            "entry_index",
            "exit_index",
            "entry_timestamp",
            "exit_timestamp",
            "entry_mid",
            "exit_mid",
            "holding_events",
            "pnl_gbx",
            "exit_reason",
        ],
    )?;
    let mut decisions = output::create(
        &a.out.join("decisions.csv"),
        &[
            "instrument",
            "day",
            "anchor_index",
            "timestamp",
            "p_up",
            "p_neutral",
            "p_down",
            "mc_p_up",
            "mc_p_neutral",
            "mc_p_down",
            "entropy",
            "mutual_info",
            "variation_ratio",
            "action",
            "side",
            "size",
        ],
    )?;
    let mut cumulative = output::create(
        &a.out.join("cumulative.csv"),
        &["instrument", "step", "day", "cumulative_profit_gbx"],
    )?;
    let mut pooled: BTreeMap<u32, i64> = BTreeMap::new();
    for ((inst, report), preds) in l.insts.iter().zip(&reports).zip(&preds) {
        let mut acc = 0i64;
        for (step, (d, p)) in report.days.iter().zip(preds).enumerate() {
            days.write_record([
                inst.name.clone(),
                d.day_id.to_string(),
                d.entries().to_string(),
                d.executed_volume.to_string(),
                num(d.raw_profit_gbx()),
                num(d.normalized_return()),
            ])?;
            for t in &d.trades {
                trades.write_record([
                    inst.name.clone(),
                    d.day_id.to_string(),
                    t.side.to_string(),
                    t.size.to_string(),
                    t.entry_index.to_string(),
                    t.exit_index.to_string(),
                    t.entry_timestamp.to_string(),
                    t.exit_timestamp.to_string(),
                    num(t.entry_mid()),
                    num(t.exit_mid()),
                    t.holding_events().to_string(),
                    num(t.pnl_gbx(tick)),
                    match t.exit_reason {
                        lob_uncertainty::backtest::ExitReason::Signal => "signal".into(),
                        lob_uncertainty::backtest::ExitReason::EndOfDay => "end_of_day".to_string(),
                    },
                ])?;
            }
            for (pt, act) in p.points.iter().zip(&d.actions) {
                let s = pt.summary.as_ref();
                let mut row = vec![
                    inst.name.clone(),
                    d.day_id.to_string(),
                    pt.anchor_index.to_string(),
                    pt.timestamp.to_string(),
                    num(pt.probs[0]),
                    num(pt.probs[1]),
                    num(pt.probs[2]),
                    opt_num(s.map(|s| s.p_bar[0])),
                    opt_num(s.map(|s| s.p_bar[1])),
                    opt_num(s.map(|s| s.p_bar[2])),
                    opt_num(s.map(|s| s.entropy)),
                    opt_num(s.map(|s| s.mutual_info)),
                    opt_num(s.map(|s| s.variation_ratio)),
                ];
                row.extend(action_fields(act));
                decisions.write_record(&row)?;
            }
            acc += d.raw_profit_half_ticks;
            *pooled.entry(d.day_id).or_default() += d.raw_profit_half_ticks;
            cumulative.write_record([
                inst.name.clone(),
                (step + 1).to_string(),
                d.day_id.to_string(),
                num(lob_uncertainty::backtest::half_ticks_to_gbx(acc, tick)),
            ])?;
        }
    }
    let mut acc = 0i64;
    for (step, (day, v)) in pooled.iter().enumerate() {
        acc += v;
        cumulative.write_record([
            "all".to_string(),
            (step + 1).to_string(),
            day.to_string(),
            num(lob_uncertainty::backtest::half_ticks_to_gbx(acc, tick)),
        ])?;
    }

    let mut metrics = output::create(
        &a.out.join("metrics.csv"),
        &[
            "instrument",
            "strategy",
            "days",
            "entries",
            "executed_volume",
            "total_profit_gbx",
            "mean_normalized_return",
            "ddr",
            "sharpe",
            "mean_holding_events",
        ],
    )?;
    let mut rows: Vec<(String, Summary)> = l
        .insts
        .iter()
        .zip(&reports)
        .map(|(i, r)| (i.name.clone(), Summary::of([r])))
        .collect();
    rows.push(("all".into(), Summary::of(&reports)));
    for (name, s) in &rows {
        metrics.write_record([
            name.clone(),
            cfg.kind.to_string(),
            s.days.to_string(),
            s.entries.to_string(),
            s.volume.to_string(),
            num(lob_uncertainty::backtest::half_ticks_to_gbx(s.profit_half_ticks, tick)),
            opt_num(s.mean_return()),
            opt_num(ddr(&s.returns).ok()),
            opt_num(sharpe(&s.returns).ok()),
            opt_num(s.mean_holding()),
        ])?;
    }
    for w in [&mut days, &mut trades, &mut decisions, &mut cumulative, &mut metrics] {
        w.flush()?;
    }
    let all = &rows.last().unwrap().1;
    println!(
        "{} strategy on {} days: {} entries, profit {} GBX, DDR {}; reports in {}",
        cfg.kind,
        all.days,
        all.entries,
        num(lob_uncertainty::backtest::half_ticks_to_gbx(
            all.profit_half_ticks,
            tick
        )),
        opt_num(ddr(&all.returns).ok()),
        a.out.display()
    );
    Ok(())
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let l = load_model_input(ctx, &a.input, ctx.file.backtest.split)?;
    let alphas = a.alphas.clone().unwrap_or_else(|| ctx.file.sweep.alphas.clone());
    let beta2s = a.beta2s.clone().unwrap_or_else(|| ctx.file.sweep.beta2s.clone());
    if alphas.is_empty() {
        return Err(usage("empty sweep grid: no alpha values"));
    }
    let mut base = ctx.file.strategy();
    base.beta1 = a.beta1.unwrap_or(ctx.file.sweep.beta1);
    if let Some(m) = a.mc_samples {
        base.mc_samples = m;
    }
    if let Some(f) = a.size_fraction {
        base.size_fraction = f;
    }
    if let Some(e) = a.exit_rule {
        base.exit_rule = exit_rule(e);
    }
    let tick = a.tick_gbx.unwrap_or(ctx.file.backtest.tick_gbx);
    let mut cells = Vec::new();
    for &alpha in &alphas {
        cells.push(StrategyConfig {
            kind: StrategyKind::Softmax,
            alpha,
            ..base.clone()
        });
    }
    for &alpha in &alphas {
        for &beta2 in &beta2s {
            cells.push(StrategyConfig {
                kind: StrategyKind::Bayesian,
                alpha,
                beta2,
                ..base.clone()
            });
        }
    }
    for c in &cells {
        c.validate().map_err(core)?;
    }
    // one set of Monte-Carlo samples shared by every cell
    let preds = predictions(ctx, &l, Some(base.mc_samples))?;
    let mut grid = output::create(
        &a.out,
        &[
            "strategy",
            "alpha",
            "beta1",
            "beta2",
            "days",
            "entries",
            "entries_per_day",
            "total_profit_gbx",
            "mean_normalized_return",
            "ddr",
            "mean_holding_events",
        ],
    )?;
    for c in &cells {
        let reports = replay_all(&l, &preds, c, tick)?;
        let s = Summary::of(&reports);
        let bayes = c.kind == StrategyKind::Bayesian;
        grid.write_record([
            c.kind.to_string(),
            num(c.alpha),
            if bayes { num(c.beta1) } else { String::new() },
            if bayes { num(c.beta2) } else { String::new() },
            s.days.to_string(),
            s.entries.to_string(),
            opt_num((s.days > 0).then(|| s.entries as f64 / s.days as f64)),
            num(lob_uncertainty::backtest::half_ticks_to_gbx(s.profit_half_ticks, tick)),
            opt_num(s.mean_return()),
            opt_num(ddr(&s.returns).ok()),
            opt_num(s.mean_holding()),
        ])?;
    }
    grid.flush()?;
    println!("{} sweep cells written to {}", cells.len(), a.out.display());
    Ok(())
}

const CLASS_NAMES: [&str; 3] = ["up", "neutral", "down"];

fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let l = load_model_input(ctx, &a.input, Split::Test)?;
    let preds = predictions(ctx, &l, None)?;
    let average = match a.auc {
        AucArg::Macro => AucAverage::Macro,
        AucArg::Micro => AucAverage::Micro,
    };
    std::fs::create_dir_all(&a.out)?;
    let mut header = vec!["scope", "samples", "accuracy", "precision", "recall", "f1", "auc"];
    let per_class: Vec<String> = ["precision", "recall", "f1", "auc"]
        .iter()
        .flat_map(|m| CLASS_NAMES.iter().map(move |c| format!("{m}_{c}")))
        .collect();
    header.extend(per_class.iter().map(String::as_str));
    let mut metrics = output::create(&a.out.join("metrics.csv"), &header)?;
    let mut confusion = output::create(
        &a.out.join("confusion.csv"),
        &["scope", "true_class", "pred_up", "pred_neutral", "pred_down"],
    )?;
    let mut daily = output::create(
        &a.out.join("daily_accuracy.csv"),
        &["instrument", "day", "samples", "accuracy"],
    )?;

    struct Scope {
        name: String,
        labels: Vec<Movement>,
        predicted: Vec<Movement>,
        scores: Vec<[f64; 3]>,
    }
    let mut scopes = Vec::new();
    for (inst, p) in l.insts.iter().zip(&preds) {
        let mut s = Scope {
            name: inst.name.clone(),
            labels: vec![],
            predicted: vec![],
            scores: vec![],
        };
        let mut per_day = Vec::new();
        for (d, dp) in inst.split(l.split).zip(p) {
            let labels: Vec<Movement> = d.windows.windows.iter().map(|w| w.label).collect();
            let predicted: Vec<Movement> = dp
                .points
                .iter()
                .map(|pt| Movement::from_class_index(argmax(&pt.probs)).expect("class index"))
                .collect();
            s.scores.extend(dp.points.iter().map(|pt| pt.probs));
            s.labels.extend(&labels);
            s.predicted.extend(&predicted);
            per_day.push(DayLabels {
                day_id: d.day.day_id,
                labels,
                predictions: predicted,
            });
        }
        let sizes: BTreeMap<u32, usize> = per_day.iter().map(|d| (d.day_id, d.labels.len())).collect();
        for (day, acc) in daily_accuracy(&per_day)? {
            daily.write_record([inst.name.clone(), day.to_string(), sizes[&day].to_string(), num(acc)])?;
        }
        scopes.push(s);
    }
    let pooled = Scope {
        name: "pooled".into(),
        labels: scopes.iter().flat_map(|s| s.labels.clone()).collect(),
        predicted: scopes.iter().flat_map(|s| s.predicted.clone()).collect(),
        scores: scopes.iter().flat_map(|s| s.scores.clone()).collect(),
    };
    scopes.insert(0, pooled);
    let mut pooled_cm = ConfusionMatrix::default();
    for (i, s) in scopes.iter().enumerate() {
        let cm = confusion_matrix(&s.labels, &s.predicted)?;
        if i > 0 {
            pooled_cm.add(&cm);
        }
        let prf = precision_recall_f1(&cm);
        let auc_report = match auc(&s.labels, &s.scores, average) {
            Ok(r) => Some(r),
            Err(e) => {
                warn!("{}: {e}", s.name);
                None
            }
        };
        let mut row = vec![
            s.name.clone(),
            cm.total().to_string(),
            num(cm.accuracy()),
            num(prf.macro_avg.precision),
            num(prf.macro_avg.recall),
            num(prf.macro_avg.f1),
            opt_num(auc_report.map(|r| r.value)),
        ];
        row.extend(prf.per_class.iter().map(|c| num(c.precision)));
        row.extend(prf.per_class.iter().map(|c| num(c.recall)));
        row.extend(prf.per_class.iter().map(|c| num(c.f1)));
        row.extend((0..3).map(|c| opt_num(auc_report.and_then(|r| r.per_class[c]))));
        metrics.write_record(&row)?;
        for (t, counts) in cm.0.iter().enumerate() {
            confusion.write_record([
                s.name.clone(),
                CLASS_NAMES[t].to_string(),
                counts[0].to_string(),
                counts[1].to_string(),
                counts[2].to_string(),
            ])?;
        }
    }
    debug_assert_eq!(pooled_cm, confusion_matrix(&scopes[0].labels, &scopes[0].predicted)?);
    for w in [&mut metrics, &mut confusion, &mut daily] {
        w.flush()?;
    }
    let cm = confusion_matrix(&scopes[0].labels, &scopes[0].predicted)?;
    println!(
        "{} windows, accuracy {:.4}, macro F1 {:.4}; metrics in {}",
        cm.total(),
        cm.accuracy(),
        precision_recall_f1(&cm).macro_avg.f1,
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DayRow {
    instrument: String,
    day: u32,
    raw_profit_gbx: f64,
    normalized_return: f64,
}

#[derive(Debug, Deserialize)]
struct AccuracyRow {
    instrument: String,
    accuracy: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.is_file() {
        return Err(usage(format!("{} not found", path.display())));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn report(a: ReportArgs) -> Result<()> {
    let days: Vec<DayRow> = read_rows(&a.backtest.join("days.csv"))?;
    std::fs::create_dir_all(&a.out)?;
    let mut by_inst: BTreeMap<&str, Vec<&DayRow>> = BTreeMap::new();
    for d in &days {
        by_inst.entry(&d.instrument).or_default().push(d);
    }
    let mut xy = output::create(&a.out.join("cumulative_xy.csv"), &["instrument", "x", "day", "y"])?;
    let mut boxes = output::create(
        &a.out.join("boxplot.csv"),
        &["series", "instrument", "n", "min", "q1", "median", "q3", "max"],
    )?;
    let mut write_box = |series: &str, inst: &str, values: &[f64]| -> Result<()> {
        let q = quartiles(values).map_err(core)?;
        boxes.write_record([
            series.to_string(),
            inst.to_string(),
            values.len().to_string(),
            num(q.min),
            num(q.q1),
            num(q.median),
            num(q.q3),
            num(q.max),
        ])?;
        Ok(())
    };
    for (inst, rows) in &by_inst {
        let mut acc = 0.0;
        for (x, d) in rows.iter().enumerate() {
            acc += d.raw_profit_gbx;
            xy.write_record([inst.to_string(), (x + 1).to_string(), d.day.to_string(), num(acc)])?;
        }
        let returns: Vec<f64> = rows.iter().map(|d| d.normalized_return).collect();
        write_box("normalized_return", inst, &returns)?;
    }
    if let Some(eval) = &a.evaluate {
        let acc: Vec<AccuracyRow> = read_rows(&eval.join("daily_accuracy.csv"))?;
        let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in &acc {
            by.entry(&r.instrument).or_default().push(r.accuracy);
        }
        for (inst, v) in &by {
            write_box("daily_accuracy", inst, v)?;
        }
    }
    xy.flush()?;
    boxes.flush()?;
    println!("figure series written to {}", a.out.display());
    Ok(())
}
