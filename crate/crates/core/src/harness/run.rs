use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Runner};
use super::dataset::{gen_dataset, Dataset};
use super::stats::{mean, std_dev};
use crate::error::{Error, Result};
use crate::pipeline::{pb_train, sequential_train, uniform_delay_train, RunOptions, RunTrace, ShuffledStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub steps: u64,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub diverged: bool,
}

impl RunSummary {
    pub fn from_trace(run_id: &str, trace: &RunTrace) -> Self {
        RunSummary {
            run_id: run_id.to_string(),
            seed: trace.seed,
            steps: trace.records.len() as u64,
            final_loss: trace.final_loss(),
            final_accuracy: trace.final_accuracy(),
            diverged: trace.diverged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub runner: Runner,
    pub steps: u64,
    /// Sorted by seed.
    pub runs: Vec<RunSummary>,
    /// Over runs that did not diverge.
    pub mean_final_loss: Option<f64>,
    pub std_final_loss: Option<f64>,
    pub mean_final_accuracy: Option<f64>,
    pub diverged: usize,
}

impl ExperimentSummary {
    /// Aggregates per-seed results; input order does not matter.
    pub fn aggregate(runner: Runner, steps: u64, mut runs: Vec<RunSummary>) -> Self {
        runs.sort_by(|a, b| a.seed.cmp(&b.seed).then_with(|| a.run_id.cmp(&b.run_id)));
        let ok: Vec<&RunSummary> = runs.iter().filter(|r| !r.diverged).collect();
        let losses: Vec<f64> = ok.iter().filter_map(|r| r.final_loss).collect();
        let accs: Vec<f64> = ok.iter().filter_map(|r| r.final_accuracy).collect();
        ExperimentSummary {
            runner,
            steps,
            mean_final_loss: mean(&losses),
            std_final_loss: std_dev(&losses),
            mean_final_accuracy: mean(&accs),
            diverged: runs.iter().filter(|r| r.diverged).count(),
            runs,
        }
    }

    pub fn final_losses(&self) -> Vec<f64> {
        self.runs.iter().filter(|r| !r.diverged).filter_map(|r| r.final_loss).collect()
    }

    pub fn any_diverged(&self) -> bool {
        self.diverged > 0
    }
}

/// Trains one seed of `cfg` on `data` without touching the filesystem.
pub fn run_seed(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<RunTrace> {
    let model = cfg.build_model(data, seed)?;
    let mut stream = ShuffledStream::new(&data.samples, seed)?;
    let opts = RunOptions::new(cfg.steps)
        .with_eval(cfg.eval_every, &data.samples)
        .with_seed(seed);
    let opt = cfg.optimizer_config()?;
    let mut trace = match cfg.pipeline.runner {
        Runner::Sequential => sequential_train(&model, &mut stream, &opt, cfg.pipeline.micro_batch, &opts)?,
        Runner::Pipelined => pb_train(&model, &mut stream, &cfg.pipeline_spec()?, &opt, &opts)?,
        Runner::UniformDelay => uniform_delay_train(
            &model,
            &mut stream,
            &cfg.delay_spec()?,
            &opt,
            cfg.pipeline.micro_batch,
            &opts,
        )?,
    };
    trace.config = serde_json::to_value(cfg)?;
    Ok(trace)
}

pub fn run_id(cfg: &ExperimentConfig, seed: u64) -> String {
    let runner = match cfg.pipeline.runner {
        Runner::Sequential => "sequential",
        Runner::Pipelined => "pipelined",
        Runner::UniformDelay => "uniform_delay",
    };
    format!("{runner}-seed{seed}")
}

/// Outcome of [`run_experiment`]: in-memory summary and the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub traces: Vec<RunTrace>,
    pub summary_path: Option<PathBuf>,
}

/// Runs every seed; with an output directory, writes one trace and config
/// snapshot per seed plus `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let data = gen_dataset(&cfg.dataset)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    let mut traces = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let trace = run_seed(cfg, &data, seed)?;
        let id = run_id(cfg, seed);
        if let Some(dir) = &cfg.output_dir {
            trace.save(dir, &id)?;
        }
        runs.push(RunSummary::from_trace(&id, &trace));
        traces.push(trace);
    }
    let summary = ExperimentSummary::aggregate(cfg.pipeline.runner, cfg.steps, runs);
    let summary_path = match &cfg.output_dir {
        Some(dir) => Some(write_json(dir, "summary.json", &summary)?),
        None => None,
    };
    Ok(ExperimentOutput {
        summary,
        traces,
        summary_path,
    })
}

pub(crate) fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::DatasetSpec;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::toy();
        cfg.dataset = DatasetSpec::blobs(60, 4, 2, 0.5, 3);
        cfg.model.hidden = vec![6];
        cfg.steps = 120;
        cfg.eval_every = 40;
        cfg.seeds = vec![0, 1];
        cfg
    }

    #[test]
    fn zero_steps() {
        let mut cfg = small();
        cfg.steps = 0;
        cfg.seeds = vec![0];
        let out = run_experiment(&cfg).unwrap();
        assert!(out.traces[0].records.is_empty());
        assert_eq!(out.summary.runs[0].steps, 0);
        assert_eq!(out.traces[0].evals.len(), 1);
    }

    #[test]
    fn deterministic_and_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.output_dir = Some(dir.path().to_path_buf());
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.traces, b.traces);
        assert!(dir.path().join("pipelined-seed1.trace.csv").exists());
        assert!(dir.path().join("pipelined-seed1.config.json").exists());
        let text = fs::read_to_string(a.summary_path.unwrap()).unwrap();
        let back: ExperimentSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a.summary);
    }

    #[test]
    fn snapshot_reproduces_the_run() {
        let cfg = small();
        let data = gen_dataset(&cfg.dataset).unwrap();
        let trace = run_seed(&cfg, &data, 1).unwrap();
        let again = ExperimentConfig::from_value(trace.config.clone()).unwrap();
        assert_eq!(run_seed(&again, &data, 1).unwrap(), trace);
    }

    #[test]
    fn sequential_equals_zero_delay_pipeline() {
        let mut seq = small();
        seq.pipeline.runner = Runner::Sequential;
        let mut pb = small();
        pb.pipeline.delays = Some(vec![0; 4]);
        let a = run_experiment(&seq).unwrap().summary;
        let b = run_experiment(&pb).unwrap().summary;
        for (x, y) in a.runs.iter().zip(&b.runs) {
            let (x, y) = (x.final_loss.unwrap(), y.final_loss.unwrap());
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn aggregation_ignores_order() {
        let runs: Vec<RunSummary> = (0..4)
            .map(|s| RunSummary {
                run_id: format!("r{s}"),
                seed: s,
                steps: 5,
                final_loss: Some(0.1 * (s as f64 + 1.0)),
                final_accuracy: None,
                diverged: s == 3,
            })
            .collect();
        let mut rev = runs.clone();
        rev.reverse();
        let a = ExperimentSummary::aggregate(Runner::Pipelined, 5, runs);
        assert_eq!(a, ExperimentSummary::aggregate(Runner::Pipelined, 5, rev));
        assert_eq!(a.diverged, 1);
        assert!((a.mean_final_loss.unwrap() - 0.2).abs() < 1e-15);
    }
}
