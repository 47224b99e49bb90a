use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One optimizer update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// Id of the first sample in the micro-batch.
    pub sample_id: usize,
    /// Mean training loss of the micro-batch at its forward weights.
    pub loss: f64,
    /// Correct predictions in the micro-batch; absent for regression.
    pub correct: Option<u32>,
    /// Per-stage weight norms after the update.
    pub stage_wnorms: Vec<f64>,
}

/// Full-dataset metrics at the master weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Number of updates applied so far.
    pub step: u64,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    /// Everything needed to reproduce the run.
    pub config: serde_json::Value,
    pub records: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    pub diverged: bool,
}

/// Paths written by [`RunTrace::save`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFiles {
    pub trace_csv: PathBuf,
    pub eval_csv: PathBuf,
    pub config_json: PathBuf,
}

impl RunTrace {
    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.evals.last()
    }

    /// Last full-dataset loss, or the last training loss without evaluations.
    pub fn final_loss(&self) -> Option<f64> {
        self.final_eval()
            .map(|e| e.loss)
            .or_else(|| self.records.last().map(|r| r.loss))
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.final_eval().and_then(|e| e.accuracy)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let stages = self.records.first().map_or(0, |r| r.stage_wnorms.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "sample_id".into(), "loss".into(), "correct".into()];
        header.extend((0..stages).map(|s| format!("stage{s}_wnorm")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.step.to_string(),
                r.sample_id.to_string(),
                r.loss.to_string(),
                r.correct.map(|c| c.to_string()).unwrap_or_default(),
            ];
            row.extend(r.stage_wnorms.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<trace csv>"),
            source: e,
        })?;
        Ok(())
    }

    /// Parses records written by [`RunTrace::write_csv`].
    pub fn read_csv<R: Read>(input: R, source: &Path) -> Result<Vec<StepRecord>> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut out = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            let bad = |message: String| Error::Input {
                path: source.to_path_buf(),
                line,
                message,
            };
            if row.len() < 4 {
                return Err(bad(format!("expected at least 4 columns, found {}", row.len())));
            }
            let num = |k: usize| -> Result<f64> {
                row[k].parse().map_err(|_| bad(format!("column {k}: not a number: {:?}", &row[k])))
            };
            out.push(StepRecord {
                step: row[0].parse().map_err(|_| bad(format!("bad step {:?}", &row[0])))?,
                sample_id: row[1].parse().map_err(|_| bad(format!("bad sample_id {:?}", &row[1])))?,
                loss: num(2)?,
                correct: if row[3].is_empty() {
                    None
                } else {
                    Some(row[3].parse().map_err(|_| bad(format!("bad correct {:?}", &row[3])))?)
                },
                stage_wnorms: (4..row.len()).map(num).collect::<Result<_>>()?,
            });
        }
        Ok(out)
    }

    pub fn write_eval_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "loss", "accuracy"])?;
        for e in &self.evals {
            w.write_record([
                e.step.to_string(),
                e.loss.to_string(),
                e.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<eval csv>"),
            source: e,
        })?;
        Ok(())
    }

    pub fn read_eval_csv<R: Read>(input: R, source: &Path) -> Result<Vec<EvalRecord>> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut out = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let bad = |message: String| Error::Input {
                path: source.to_path_buf(),
                line: i as u64 + 2,
                message,
            };
            if row.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", row.len())));
            }
            out.push(EvalRecord {
                step: row[0].parse().map_err(|_| bad(format!("bad step {:?}", &row[0])))?,
                loss: row[1].parse().map_err(|_| bad(format!("bad loss {:?}", &row[1])))?,
                accuracy: if row[2].is_empty() {
                    None
                } else {
                    Some(row[2].parse().map_err(|_| bad(format!("bad accuracy {:?}", &row[2])))?)
                },
            });
        }
        Ok(out)
    }

    /// Writes `{run_id}.trace.csv`, `{run_id}.eval.csv` and `{run_id}.config.json`.
    pub fn save(&self, dir: &Path, run_id: &str) -> Result<TraceFiles> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = TraceFiles {
            trace_csv: dir.join(format!("{run_id}.trace.csv")),
            eval_csv: dir.join(format!("{run_id}.eval.csv")),
            config_json: dir.join(format!("{run_id}.config.json")),
        };
        let create = |p: &Path| fs::File::create(p).map_err(|e| Error::io(p, e));
        self.write_csv(create(&files.trace_csv)?)?;
        self.write_eval_csv(create(&files.eval_csv)?)?;
        let snapshot = serde_json::json!({
            "seed": self.seed,
            "diverged": self.diverged,
            "config": self.config,
        });
        let text = serde_json::to_string_pretty(&snapshot)?;
        fs::write(&files.config_json, text + "\n").map_err(|e| Error::io(&files.config_json, e))?;
        Ok(files)
    }
}
