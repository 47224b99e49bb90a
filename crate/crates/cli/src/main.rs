use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use pbsim_core::harness::{run_experiment, sweep, ExperimentConfig, ExperimentSummary, Runner};
use pbsim_core::pipeline::{dp_utilization, fill_drain_report, pipeline_utilization, Consistency};
use pbsim_core::quadratic::{
    log_grid, momentum_grid, momentum_horizon_sweep, optimal_halflife, stability_heatmap, QuadMethod, QuadMethodSpec,
    SearchSpec,
};

#[derive(Parser)]
#[command(name = "pbsim", version, about = "Pipelined-backprop and delayed momentum experiments")]
struct Cli {
    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true, env = "PBSIM_OUT_DIR", default_value = "pbsim-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dominant root magnitude over a (momentum, eta*lambda) grid.
    QuadHeatmap(HeatmapArgs),
    /// Optimal half-life per method and delay at a fixed condition number.
    QuadHalflife(HalflifeArgs),
    /// Half-life over momentum and prediction-horizon scale.
    QuadSweep(QuadSweepArgs),
    /// Sequential (undelayed) training.
    Train(RunArgs),
    /// Pipelined backpropagation with per-stage delays.
    PbTrain(RunArgs),
    /// Training with one uniform gradient delay for every stage.
    DelayTrain(DelayArgs),
    /// Repeat a run over values of one config key.
    Sweep(SweepArgs),
    /// Utilization formulas.
    Util(UtilArgs),
}

#[derive(Args)]
struct MethodArgs {
    /// gdm, gsc, lwp or lwp_w_plus_gsc
    #[arg(long, default_value = "gdm", value_parser = parse_method)]
    method: QuadMethod,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Fixed prediction horizon; defaults to horizon-scale times the delay.
    #[arg(long = "horizon")]
    horizon: Option<f64>,
    #[arg(long)]
    horizon_scale: Option<f64>,
}

impl MethodArgs {
    fn spec(&self) -> QuadMethodSpec {
        QuadMethodSpec {
            method: self.method,
            a: self.a,
            b: self.b,
            horizon: self.horizon,
            horizon_scale: self.horizon_scale,
        }
    }
}

#[derive(Args)]
struct HeatmapArgs {
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, default_value_t = 0)]
    delay: usize,
    #[arg(long, default_value_t = 100)]
    m_points: usize,
    /// Largest momentum is `1 - m_gap`.
    #[arg(long, default_value_t = 1e-3)]
    m_gap: f64,
    #[arg(long, default_value_t = 1e-3)]
    el_min: f64,
    #[arg(long, default_value_t = 10.0)]
    el_max: f64,
    #[arg(long, default_value_t = 100)]
    el_points: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 1000.0)]
    kappa: f64,
    /// Momenta searched, evenly spaced in log(1 - m).
    #[arg(long, default_value_t = 100)]
    m_points: usize,
}

impl SearchArgs {
    fn search(&self) -> SearchSpec {
        SearchSpec {
            m_grid: momentum_grid(1e-4, self.m_points),
            ..SearchSpec::default()
        }
    }
}

#[derive(Args)]
struct HalflifeArgs {
    #[command(flatten)]
    search: SearchArgs,
    /// Methods to compare; all four when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<QuadMethod>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,5,10")]
    delays: Vec<usize>,
}

#[derive(Args)]
struct QuadSweepArgs {
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value_t = 5)]
    delay: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2,2.5,3")]
    t_scales: Vec<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON); the built-in toy task when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
}

#[derive(Args)]
struct DelayArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    delay: Option<usize>,
    #[arg(long, value_parser = parse_consistency)]
    consistency: Option<Consistency>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Dotted config key, e.g. optimizer.mitigation.gamma
    #[arg(long)]
    param: String,
    /// Values as JSON literals; bare words are taken as strings.
    #[arg(long, num_args = 1.., required = true)]
    values: Vec<String>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct UtilArgs {
    /// Fill-and-drain bound N / (N + 2S), given as N=.. S=..
    #[arg(long, num_args = 2, value_names = ["N=", "S="])]
    pipeline: Option<Vec<String>>,
    /// Fill-and-drain step counts, given as N=.. S=..
    #[arg(long, num_args = 2, value_names = ["N=", "S="])]
    fill_drain: Option<Vec<String>>,
    /// Data-parallel utilization, given as flop=.. rate=.. peak=..
    #[arg(long, num_args = 3, value_names = ["flop=", "rate=", "peak="])]
    dp: Option<Vec<String>>,
}

fn parse_method(s: &str) -> Result<QuadMethod, String> {
    s.parse().map_err(|e: pbsim_core::Error| e.to_string())
}

fn parse_consistency(s: &str) -> Result<Consistency, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| format!("unknown consistency `{s}` (expected inconsistent, consistent or stashed)"))
}

/// Errors the user can fix by changing the invocation.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn key_values(raw: &[String], keys: &[&str]) -> anyhow::Result<Vec<f64>> {
    keys.iter()
        .map(|k| {
            let hit = raw.iter().find_map(|kv| {
                let (name, value) = kv.split_once('=')?;
                name.eq_ignore_ascii_case(k).then_some(value)
            });
            let value = hit.ok_or_else(|| usage(format!("missing {k}=<value>")))?;
            value.parse::<f64>().map_err(|_| usage(format!("{k}: not a number: {value:?}")))
        })
        .collect()
}

fn count(x: f64, name: &str) -> anyhow::Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(usage(format!("{name} must be a nonnegative integer, got {x}")))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn show(x: Option<f64>) -> String {
    x.map_or("n/a".to_string(), |v| format!("{v:.6}"))
}

fn quad_heatmap(out: &Path, args: &HeatmapArgs) -> anyhow::Result<bool> {
    let spec = args.method.spec();
    let ms = momentum_grid(args.m_gap, args.m_points);
    let els = log_grid(args.el_min, args.el_max, args.el_points);
    let heat = stability_heatmap(&spec, args.delay, &ms, &els)?;
    let stem = format!("heatmap_{}_d{}", spec.method.name(), args.delay);
    let csv_path = out.join(format!("{stem}.csv"));
    let mut w = csv_writer(&csv_path)?;
    w.write_record(["m", "eta_lambda", "r_max", "stable"])?;
    let mut stable = 0;
    for (i, m) in ms.iter().enumerate() {
        for (j, el) in els.iter().enumerate() {
            let ok = heat.is_stable(i, j);
            stable += ok as usize;
            w.write_record([m.to_string(), el.to_string(), heat.r_max[i][j].to_string(), ok.to_string()])?;
        }
    }
    w.flush()?;
    write_json(
        &out.join(format!("{stem}.json")),
        &json!({ "method": spec, "delay": args.delay, "m_grid": ms, "eta_lambda_grid": els }),
    )?;
    println!(
        "{} D={}: {stable}/{} cells stable -> {}",
        spec.method.name(),
        args.delay,
        ms.len() * els.len(),
        csv_path.display()
    );
    Ok(true)
}

fn quad_halflife(out: &Path, args: &HalflifeArgs) -> anyhow::Result<bool> {
    let search = args.search.search();
    let methods = if args.methods.is_empty() { QuadMethod::ALL.to_vec() } else { args.methods.clone() };
    let csv_path = out.join("halflife.csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record(["method", "kappa", "delay", "r_star", "half_life", "eta_star", "m_star"])?;
    for &method in &methods {
        for &delay in &args.delays {
            let r = optimal_halflife(&QuadMethodSpec::defaults(method), args.search.kappa, delay, &search)?;
            w.write_record([
                method.name().to_string(),
                r.kappa.to_string(),
                delay.to_string(),
                r.r_star.to_string(),
                r.half_life.to_string(),
                r.eta_star.to_string(),
                r.m_star.to_string(),
            ])?;
        }
    }
    w.flush()?;
    write_json(
        &out.join("halflife.json"),
        &json!({ "kappa": args.search.kappa, "methods": methods, "delays": args.delays, "search": search }),
    )?;
    println!("{} methods x {} delays -> {}", methods.len(), args.delays.len(), csv_path.display());
    Ok(true)
}

fn quad_sweep(out: &Path, args: &QuadSweepArgs) -> anyhow::Result<bool> {
    let search = args.search.search();
    let spec = QuadMethodSpec::defaults(QuadMethod::Lwp);
    let cells = momentum_horizon_sweep(&spec, args.search.kappa, args.delay, &search.m_grid, &args.t_scales, &search)?;
    let csv_path = out.join("quad_sweep.csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record(["m", "t_scale", "r_star", "half_life", "eta_star"])?;
    for c in &cells {
        w.write_record([c.m.to_string(), c.t_scale.to_string(), opt(c.r_star), opt(c.half_life), opt(c.eta_star)])?;
    }
    w.flush()?;
    write_json(
        &out.join("quad_sweep.json"),
        &json!({ "method": spec, "kappa": args.search.kappa, "delay": args.delay, "t_scales": args.t_scales, "search": search }),
    )?;
    let best = cells
        .iter()
        .filter_map(|c| c.half_life.map(|h| (h, c)))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((h, c)) => println!(
            "best half-life {h:.3} at m={:.4}, T={}D -> {}",
            c.m,
            c.t_scale,
            csv_path.display()
        ),
        None => println!("no stable cell -> {}", csv_path.display()),
    }
    Ok(true)
}

fn load_config(run: &RunArgs, out: &Path) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &run.config {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("config file not found: {}", path.display())));
            }
            ExperimentConfig::load(path).map_err(|e| match e {
                pbsim_core::Error::Config(msg) => usage(msg),
                other => other.into(),
            })?
        }
        None => ExperimentConfig::toy(),
    };
    if let Some(seed) = run.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(steps) = run.steps {
        cfg.steps = steps;
    }
    cfg.output_dir = Some(out.to_path_buf());
    Ok(cfg)
}

fn finish(cfg: &ExperimentConfig, summary: &ExperimentSummary) -> anyhow::Result<bool> {
    let dir = cfg.output_dir.as_ref().unwrap();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), cfg)?;
    println!(
        "{}: {} runs, final loss {} (std {}), accuracy {}, {} diverged",
        serde_json::to_value(summary.runner)?.as_str().unwrap_or("run"),
        summary.runs.len(),
        show(summary.mean_final_loss),
        show(summary.std_final_loss),
        show(summary.mean_final_accuracy),
        summary.diverged
    );
    Ok(!summary.any_diverged())
}

fn train(out: &Path, run: &RunArgs, runner: Runner, tweak: impl FnOnce(&mut ExperimentConfig)) -> anyhow::Result<bool> {
    let mut cfg = load_config(run, out)?;
    cfg.pipeline.runner = runner;
    tweak(&mut cfg);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let res = run_experiment(&cfg)?;
    finish(&cfg, &res.summary)
}

fn run_sweep(out: &Path, args: &SweepArgs) -> anyhow::Result<bool> {
    let cfg = load_config(&args.run, out)?;
    let values: Vec<Value> = args
        .values
        .iter()
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone())))
        .collect();
    let res = sweep(&cfg, &args.param, &values).map_err(|e| match e {
        pbsim_core::Error::Config(msg) => usage(msg),
        other => other.into(),
    })?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), &cfg)?;
    for row in &res.rows {
        println!(
            "{}={}: loss {} (std {}), {} of {} diverged",
            res.param_path,
            row.value,
            show(row.mean_final_loss),
            show(row.std_final_loss),
            row.diverged,
            row.seeds
        );
    }
    Ok(res.rows.iter().all(|r| r.diverged == 0))
}

fn util(args: &UtilArgs) -> anyhow::Result<bool> {
    if let Some(raw) = &args.pipeline {
        let v = key_values(raw, &["N", "S"])?;
        let u = pipeline_utilization(count(v[0], "N")?, count(v[1], "S")?).map_err(|e| usage(e.to_string()))?;
        println!("{u:.6}");
    } else if let Some(raw) = &args.fill_drain {
        let v = key_values(raw, &["N", "S"])?;
        let r = fill_drain_report(count(v[0], "N")?, count(v[1], "S")?).map_err(|e| usage(e.to_string()))?;
        println!("steps={} steps_alt={} utilization={:.6}", r.steps, r.steps_alt, r.utilization_bound);
    } else if let Some(raw) = &args.dp {
        let v = key_values(raw, &["flop", "rate", "peak"])?;
        let u = dp_utilization(v[0], v[1], v[2]).map_err(|e| usage(e.to_string()))?;
        if !u.consistent {
            eprintln!("warning: inputs exceed peak throughput");
        }
        println!("{:.6}", u.value);
    }
    Ok(true)
}

fn dispatch(cli: &Cli) -> anyhow::Result<bool> {
    let out = cli.out.as_path();
    // Training commands create the directory themselves once the config is valid.
    if matches!(cli.command, Command::QuadHeatmap(_) | Command::QuadHalflife(_) | Command::QuadSweep(_)) {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    match &cli.command {
        Command::QuadHeatmap(a) => quad_heatmap(out, a),
        Command::QuadHalflife(a) => quad_halflife(out, a),
        Command::QuadSweep(a) => quad_sweep(out, a),
        Command::Train(a) => train(out, a, Runner::Sequential, |_| {}),
        Command::PbTrain(a) => train(out, a, Runner::Pipelined, |_| {}),
        Command::DelayTrain(a) => train(out, &a.run, Runner::UniformDelay, |cfg| {
            if let Some(d) = a.delay {
                cfg.pipeline.delays = None;
                cfg.pipeline.uniform_delay = Some(d);
            }
            if let Some(c) = a.consistency {
                cfg.pipeline.consistency = c;
            }
        }),
        Command::Sweep(a) => run_sweep(out, a),
        Command::Util(a) => util(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one run diverged");
            ExitCode::from(1)
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn key_value_pairs() {
        let raw = vec!["S=50".to_string(), "n=1".to_string()];
        assert_eq!(key_values(&raw, &["N", "S"]).unwrap(), vec![1.0, 50.0]);
        assert!(key_values(&raw[..1], &["N", "S"]).is_err());
        assert!(count(1.5, "N").is_err());
    }

    #[test]
    fn method_names() {
        assert_eq!(parse_method("lwp_w_plus_gsc").unwrap(), QuadMethod::LwpWPlusGsc);
        assert!(parse_method("adam").is_err());
        assert_eq!(parse_consistency("stashed").unwrap(), Consistency::Stashed);
    }
}
