use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::modelkit::{Activation, LossKind, Model};
use crate::optim::{scale_hyperparams, MitigationSpec, OptimizerConfig};
use crate::pipeline::{stage_delays, Consistency, DelaySpec, PipelineSpec, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Hidden layer widths; input and output widths come from the dataset.
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Defaults to cross-entropy for classification data, MSE otherwise.
    #[serde(default)]
    pub loss: Option<LossKind>,
}

fn default_activation() -> Activation {
    Activation::Relu
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    /// Learning rate. Give this or `effective_lr`, not both.
    #[serde(default)]
    pub eta: Option<f64>,
    pub momentum: f64,
    /// Sets `eta = effective_lr * (1 - momentum)`, which keeps the long-run
    /// step size fixed while momentum is swept.
    #[serde(default)]
    pub effective_lr: Option<f64>,
    #[serde(default)]
    pub mitigation: MitigationSpec,
    /// When set, `eta` and `momentum` were tuned at this batch size and are
    /// rescaled to `pipeline.micro_batch`.
    #[serde(default)]
    pub reference_batch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Runner {
    Sequential,
    #[default]
    Pipelined,
    UniformDelay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default)]
    pub runner: Runner,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "one")]
    pub micro_batch: usize,
    /// Per-stage delays. Defaults to `2 (S - 1 - s)` for the pipelined
    /// runner and to `uniform_delay` for the delayed-gradient runner.
    #[serde(default)]
    pub delays: Option<Vec<usize>>,
    #[serde(default)]
    pub uniform_delay: Option<usize>,
    #[serde(default)]
    pub consistency: Consistency,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            runner: Runner::Pipelined,
            schedule: Schedule::PipelinedBackprop,
            micro_batch: 1,
            delays: None,
            uniform_delay: None,
            consistency: Consistency::Inconsistent,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    pub steps: u64,
    #[serde(default)]
    pub eval_every: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses JSON, reporting the dotted path of any offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Desk-scale task: 8-32-2 ReLU MLP on noisy two-class blobs.
    pub fn toy() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::blobs(2000, 8, 2, 0.5, 1234),
            model: ModelSpec {
                hidden: vec![32],
                activation: Activation::Relu,
                loss: Some(LossKind::SoftmaxCrossEntropy),
            },
            optimizer: OptimizerSection {
                eta: Some(0.0025),
                momentum: 0.99,
                effective_lr: None,
                mitigation: MitigationSpec::plain(),
                reference_batch: None,
            },
            pipeline: PipelineSection::default(),
            steps: 10_000,
            eval_every: 1000,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("model.hidden widths must be >= 1".into()));
        }
        if self.pipeline.micro_batch == 0 {
            return Err(Error::Config("pipeline.micro_batch must be >= 1".into()));
        }
        if self.optimizer.reference_batch == Some(0) {
            return Err(Error::Config("optimizer.reference_batch must be >= 1".into()));
        }
        self.optimizer_config()?.validate()?;
        if let Some(d) = &self.pipeline.delays {
            if d.len() != self.num_stages() {
                return Err(Error::Config(format!(
                    "pipeline.delays has {} entries but the model has {} stages",
                    d.len(),
                    self.num_stages()
                )));
            }
        }
        if self.pipeline.delays.is_some() && self.pipeline.uniform_delay.is_some() {
            return Err(Error::Config("give pipeline.delays or pipeline.uniform_delay, not both".into()));
        }
        Ok(())
    }

    /// Dense, activation and loss-head stages each count as one.
    pub fn num_stages(&self) -> usize {
        2 * self.model.hidden.len() + 2
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        let o = &self.optimizer;
        let eta = match (o.eta, o.effective_lr) {
            (Some(eta), None) => eta,
            (None, Some(elr)) => elr * (1.0 - o.momentum),
            _ => return Err(Error::Config("optimizer needs exactly one of eta and effective_lr".into())),
        };
        let (eta, momentum) = match o.reference_batch {
            Some(n_r) => scale_hyperparams(eta, o.momentum, n_r, self.pipeline.micro_batch),
            None => (eta, o.momentum),
        };
        let cfg = OptimizerConfig::new(eta, momentum, o.mitigation.clone());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn delays(&self) -> Result<Vec<usize>> {
        let s = self.num_stages();
        Ok(match (&self.pipeline.delays, self.pipeline.uniform_delay, self.pipeline.runner) {
            (Some(d), _, _) => d.clone(),
            (None, Some(d), _) => vec![d; s],
            (None, None, Runner::Pipelined) => stage_delays(s)?,
            (None, None, _) => vec![0; s],
        })
    }

    pub fn pipeline_spec(&self) -> Result<PipelineSpec> {
        let spec = PipelineSpec {
            stages: self.num_stages(),
            micro_batch: self.pipeline.micro_batch,
            schedule: self.pipeline.schedule,
            delays: self.delays()?,
            consistency: self.pipeline.consistency,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn delay_spec(&self) -> Result<DelaySpec> {
        Ok(DelaySpec {
            delays: self.delays()?,
            consistency: self.pipeline.consistency,
        })
    }

    /// Fresh model for `seed`, shaped to `data`.
    pub fn build_model(&self, data: &Dataset, seed: u64) -> Result<Model> {
        let mut dims = vec![data.n_features];
        dims.extend(&self.model.hidden);
        dims.push(data.output_dim());
        let loss = self.model.loss.unwrap_or(if data.is_classification() {
            LossKind::SoftmaxCrossEntropy
        } else {
            LossKind::MeanSquaredError
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Model::mlp(&dims, self.model.activation, loss, &mut rng)
    }
}
