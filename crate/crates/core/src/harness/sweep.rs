use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ExperimentConfig;
use super::dataset::gen_dataset;
use super::run::{run_seed, write_json, ExperimentSummary, RunSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: Value,
    pub mean_final_loss: Option<f64>,
    pub std_final_loss: Option<f64>,
    pub mean_final_accuracy: Option<f64>,
    pub diverged: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param_path: String,
    pub rows: Vec<SweepRow>,
    /// Full per-seed results, one per row.
    pub summaries: Vec<ExperimentSummary>,
}

/// Returns `base` with the dotted `path` replaced by `value`. Every segment
/// must already exist in the serialized config.
pub fn set_param(base: &ExperimentConfig, path: &str, value: &Value) -> Result<ExperimentConfig> {
    let mut tree = serde_json::to_value(base)?;
    let mut node = &mut tree;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) if map.contains_key(key) => map.get_mut(key).unwrap(),
            Value::Array(items) => match key.parse::<usize>().ok().and_then(|i| items.get_mut(i)) {
                Some(item) => item,
                None => return Err(Error::Config(format!("unknown parameter path `{path}`"))),
            },
            _ => return Err(Error::Config(format!("unknown parameter path `{path}`"))),
        };
    }
    *node = value.clone();
    ExperimentConfig::from_value(tree)
}

fn label(value: &Value) -> String {
    let raw = match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

/// Runs `cfg` once per value of `param_path`, each over every seed.
pub fn sweep(cfg: &ExperimentConfig, param_path: &str, values: &[Value]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|v| set_param(cfg, param_path, v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(values.len());
    let mut summaries = Vec::with_capacity(values.len());
    for (value, point) in values.iter().zip(&configs) {
        let data = gen_dataset(&point.dataset)?;
        let mut runs = Vec::with_capacity(point.seeds.len());
        for &seed in &point.seeds {
            let trace = run_seed(point, &data, seed)?;
            let id = format!("{param_path}={}-seed{seed}", label(value));
            if let Some(dir) = &cfg.output_dir {
                trace.save(dir, &id)?;
            }
            runs.push(RunSummary::from_trace(&id, &trace));
        }
        let summary = ExperimentSummary::aggregate(point.pipeline.runner, point.steps, runs);
        rows.push(SweepRow {
            value: value.clone(),
            mean_final_loss: summary.mean_final_loss,
            std_final_loss: summary.std_final_loss,
            mean_final_accuracy: summary.mean_final_accuracy,
            diverged: summary.diverged,
            seeds: point.seeds.len(),
        });
        summaries.push(summary);
    }
    let result = SweepResult {
        param_path: param_path.to_string(),
        rows,
        summaries,
    };
    if let Some(dir) = &cfg.output_dir {
        let file = std::fs::File::create(dir.join("sweep.csv")).map_err(|e| Error::io(dir.join("sweep.csv"), e))?;
        result.write_csv(file)?;
        write_json(dir, "sweep.json", &result)?;
    }
    Ok(result)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl SweepResult {
    /// Columns: param, value (JSON), mean_final_loss, std_final_loss,
    /// mean_final_accuracy, diverged, seeds. Missing statistics are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "param",
            "value",
            "mean_final_loss",
            "std_final_loss",
            "mean_final_accuracy",
            "diverged",
            "seeds",
        ])?;
        for r in &self.rows {
            w.write_record([
                self.param_path.clone(),
                r.value.to_string(),
                opt(r.mean_final_loss),
                opt(r.std_final_loss),
                opt(r.mean_final_accuracy),
                r.diverged.to_string(),
                r.seeds.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<sweep csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, source: &Path) -> Result<(String, Vec<SweepRow>)> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut param = String::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| Error::Input {
                path: source.to_path_buf(),
                line: i as u64 + 2,
                message,
            };
            if rec.len() != 7 {
                return Err(bad(format!("expected 7 columns, found {}", rec.len())));
            }
            let num = |k: usize| -> Result<Option<f64>> {
                if rec[k].is_empty() {
                    Ok(None)
                } else {
                    rec[k].parse().map(Some).map_err(|_| bad(format!("not a number: {:?}", &rec[k])))
                }
            };
            param = rec[0].to_string();
            rows.push(SweepRow {
                value: serde_json::from_str(&rec[1]).map_err(|e| bad(format!("value: {e}")))?,
                mean_final_loss: num(2)?,
                std_final_loss: num(3)?,
                mean_final_accuracy: num(4)?,
                diverged: rec[5].parse().map_err(|_| bad("bad diverged count".into()))?,
                seeds: rec[6].parse().map_err(|_| bad("bad seed count".into()))?,
            });
        }
        Ok((param, rows))
    }
}
