use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    PipelinedBackprop,
    FillAndDrain,
}

/// Which weights the backward pass of a sample sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    /// Backward at the stage's current weights.
    #[default]
    Inconsistent,
    /// Backward at the same delayed weights as the forward pass.
    Consistent,
    /// Backward at the weights stashed during the forward pass.
    Stashed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub stages: usize,
    #[serde(default = "one")]
    pub micro_batch: usize,
    #[serde(default)]
    pub schedule: Schedule,
    pub delays: Vec<usize>,
    #[serde(default)]
    pub consistency: Consistency,
}

fn one() -> usize {
    1
}

impl PipelineSpec {
    /// Standard fine-grained pipeline over `stages` stages.
    pub fn pipelined(stages: usize) -> Result<Self> {
        Ok(PipelineSpec {
            stages,
            micro_batch: 1,
            schedule: Schedule::PipelinedBackprop,
            delays: stage_delays(stages)?,
            consistency: Consistency::Inconsistent,
        })
    }

    pub fn with_delays(delays: Vec<usize>) -> Self {
        PipelineSpec {
            stages: delays.len(),
            micro_batch: 1,
            schedule: Schedule::PipelinedBackprop,
            delays,
            consistency: Consistency::Inconsistent,
        }
    }

    pub fn fill_and_drain(stages: usize, micro_batch: usize) -> Self {
        PipelineSpec {
            stages,
            micro_batch,
            schedule: Schedule::FillAndDrain,
            delays: vec![0; stages],
            consistency: Consistency::Inconsistent,
        }
    }

    pub fn with_consistency(mut self, consistency: Consistency) -> Self {
        self.consistency = consistency;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::Config("pipeline.stages must be >= 1".into()));
        }
        if self.micro_batch == 0 {
            return Err(Error::Config("pipeline.micro_batch must be >= 1".into()));
        }
        if self.delays.len() != self.stages {
            return Err(Error::Config(format!(
                "pipeline.delays has {} entries for {} stages",
                self.delays.len(),
                self.stages
            )));
        }
        Ok(())
    }

    /// Delays in effect at update time. Fill-and-drain never has any.
    pub fn effective_delays(&self) -> Vec<usize> {
        match self.schedule {
            Schedule::PipelinedBackprop => self.delays.clone(),
            Schedule::FillAndDrain => vec![0; self.stages],
        }
    }

    pub fn max_delay(&self) -> usize {
        self.effective_delays().into_iter().max().unwrap_or(0)
    }
}

/// `D^s = 2 (S - 1 - s)` for a pipeline of `S` single-sample stages.
pub fn stage_delays(stages: usize) -> Result<Vec<usize>> {
    if stages == 0 {
        return Err(Error::Config("stage count must be >= 1".into()));
    }
    Ok((0..stages).map(|s| 2 * (stages - 1 - s)).collect())
}

/// `(forward, backward)` prediction horizons that make every stage predict
/// to the step at which the sample's last gradient lands.
pub fn spectrain_horizons(stages: usize) -> Result<Vec<(usize, usize)>> {
    if stages == 0 {
        return Err(Error::Config("stage count must be >= 1".into()));
    }
    Ok((0..stages).map(|s| (2 * (stages - 1) - s, s)).collect())
}

/// Upper bound `N / (N + 2S)` on fill-and-drain utilization.
pub fn pipeline_utilization(n: usize, stages: usize) -> Result<f64> {
    if n == 0 || stages == 0 {
        return Err(Error::Domain("N and S must be >= 1".into()));
    }
    Ok(n as f64 / (n + 2 * stages) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpUtilization {
    pub value: f64,
    /// False when the inputs imply more than peak throughput.
    pub consistent: bool,
}

/// Achieved over peak floating point throughput.
pub fn dp_utilization(flop_per_sample: f64, samples_per_sec: f64, peak_flops: f64) -> Result<DpUtilization> {
    for (name, v) in [
        ("flop_per_sample", flop_per_sample),
        ("samples_per_sec", samples_per_sec),
        ("peak_flops", peak_flops),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let value = flop_per_sample * samples_per_sec / peak_flops;
    Ok(DpUtilization {
        value,
        consistent: value <= 1.0,
    })
}

/// Step counts for one fill-and-drain mini-batch of `n` micro-batches over
/// `stages` stages. Both common estimates are reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillDrainReport {
    pub n: usize,
    pub stages: usize,
    /// `N + 2S - 2`
    pub steps: usize,
    /// `N + S`
    pub steps_alt: usize,
    pub utilization_bound: f64,
}

pub fn fill_drain_report(n: usize, stages: usize) -> Result<FillDrainReport> {
    Ok(FillDrainReport {
        n,
        stages,
        steps: n + 2 * stages - 2,
        steps_alt: n + stages,
        utilization_bound: pipeline_utilization(n, stages)?,
    })
}
