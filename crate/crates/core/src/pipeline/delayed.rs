use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::data::{DataStream, Sample};
use super::sim::{batch_gradient, drive, RunOptions};
use super::spec::Consistency;
use super::trace::{RunTrace, StepRecord};
use crate::error::{Error, Result};
use crate::modelkit::{Model, ParamVector};
use crate::optim::{Method, OptimizerConfig, PredictionForm};

/// Per-stage gradient delays applied against a single set of master weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub delays: Vec<usize>,
    pub consistency: Consistency,
}

impl DelaySpec {
    pub fn uniform(delay: usize, stages: usize, consistency: Consistency) -> Self {
        DelaySpec {
            delays: vec![delay; stages],
            consistency,
        }
    }
}

#[derive(Clone)]
struct Version {
    w: Vec<ParamVector>,
    v: Vec<ParamVector>,
}

/// Delayed-gradient training from a buffer of past parameter versions.
///
/// Each update evaluates the gradient with stage `s` reading the weights
/// from `delays[s]` updates ago (clamped to the initial weights) and applies
/// it to the current master weights. When `consistency` is inconsistent the
/// backward pass propagates through the current weights instead.
pub fn uniform_delay_train(
    model: &Model,
    data: &mut dyn DataStream,
    delays: &DelaySpec,
    cfg: &OptimizerConfig,
    micro_batch: usize,
    opts: &RunOptions,
) -> Result<RunTrace> {
    cfg.validate()?;
    if delays.delays.len() != model.num_stages() {
        return Err(Error::Config(format!(
            "{} delays given for {} stages",
            delays.delays.len(),
            model.num_stages()
        )));
    }
    if micro_batch == 0 {
        return Err(Error::Config("micro_batch must be >= 1".into()));
    }
    if cfg.mitigation.method == Method::SpecTrain {
        return Err(Error::Config("spec_train needs the pipelined runner".into()));
    }
    let consistent =
        delays.consistency != Consistency::Inconsistent || cfg.mitigation.method == Method::WeightStash;
    let depth = delays.delays.iter().copied().max().unwrap_or(0) + 2;
    let w0 = model.weights();
    let v0: Vec<ParamVector> = w0.iter().map(|w| ParamVector::zeros(w.len())).collect();
    let mut buffer: VecDeque<Version> = VecDeque::with_capacity(depth);
    buffer.push_front(Version { w: w0, v: v0 });
    let (eta, m) = (cfg.eta, cfg.momentum);

    let config = serde_json::json!({
        "runner": "uniform_delay",
        "delays": delays,
        "optimizer": cfg,
        "micro_batch": micro_batch,
    });
    drive(model, opts, config, |i| {
        let batch: Vec<Sample> = data.batch(micro_batch)?;
        let at = |k: usize| &buffer[k.min(buffer.len() - 1)];
        let fwd: Vec<ParamVector> = delays
            .delays
            .iter()
            .enumerate()
            .map(|(s, &d)| {
                let rule = cfg.stage_rule(d);
                let base = &at(d).w[s];
                if rule.horizon == 0.0 {
                    return base.clone();
                }
                match rule.form {
                    PredictionForm::Velocity => {
                        let mut out = base.clone();
                        out.axpy(-eta * rule.horizon, &at(d).v[s]);
                        out
                    }
                    PredictionForm::WeightDifference => {
                        let prev = &at(d + 1).w[s];
                        ParamVector::from_vec(
                            base.iter()
                                .zip(prev.iter())
                                .map(|(b, p)| b + rule.horizon * (b - p))
                                .collect(),
                        )
                    }
                }
            })
            .collect();
        let current = &buffer[0];
        let res = if consistent {
            batch_gradient(model, &batch, &fwd, &fwd)?
        } else {
            batch_gradient(model, &batch, &fwd, &current.w)?
        };
        if !res.loss.is_finite() {
            let rec = StepRecord {
                step: i,
                sample_id: res.first_id,
                loss: res.loss,
                correct: res.correct,
                stage_wnorms: current.w.iter().map(ParamVector::norm).collect(),
            };
            return Ok((rec, current.w.clone()));
        }

        let mut next = current.clone();
        for (s, &d) in delays.delays.iter().enumerate() {
            let rule = cfg.stage_rule(d);
            let g = if rule.shrink != 1.0 {
                res.grads[s].scaled(rule.shrink)
            } else {
                res.grads[s].clone()
            };
            let plain = rule.a == 1.0 && rule.b == 0.0;
            let (w, v) = (next.w[s].as_mut_slice(), next.v[s].as_mut_slice());
            for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
                *vi = m * *vi + gi;
                if plain {
                    *wi -= eta * *vi;
                } else {
                    *wi -= eta * (rule.a * *vi + rule.b * gi);
                }
            }
        }
        buffer.push_front(next);
        buffer.truncate(depth);
        let w = buffer[0].w.clone();
        let rec = StepRecord {
            step: i,
            sample_id: res.first_id,
            loss: res.loss,
            correct: res.correct,
            stage_wnorms: w.iter().map(ParamVector::norm).collect(),
        };
        Ok((rec, w))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelkit::{LossKind, Stage, Target};
    use crate::pipeline::{sequential_train, CyclicStream};

    /// `f(w) = (w x)^2 / 2` through a bias-free-looking dense stage with the
    /// bias pinned by the data: input 1, target 0, so `loss = (w + b)^2`.
    fn scalar_model(w: f64) -> Model {
        let dense = Stage::dense(1, 1, ParamVector::from_vec(vec![w, 0.0])).unwrap();
        Model::new(vec![dense, Stage::loss_head(LossKind::MeanSquaredError, 1)]).unwrap()
    }

    fn one_sample() -> Vec<Sample> {
        vec![Sample {
            id: 0,
            input: vec![1.0],
            target: Target::Values(vec![0.0]),
        }]
    }

    #[test]
    fn three_steps_by_hand() {
        // loss = (w + b)^2, so dL/dw = dL/db = 2 (w + b). With m = 0, D = 1:
        // g_t is evaluated at the weights from one step earlier.
        let model = scalar_model(1.0);
        let data = one_sample();
        let eta = 0.1;
        let spec = DelaySpec::uniform(1, 2, Consistency::Consistent);
        let trace = uniform_delay_train(
            &model,
            &mut CyclicStream::new(&data).unwrap(),
            &spec,
            &OptimizerConfig::sgdm(eta, 0.0),
            1,
            &RunOptions::new(3),
        )
        .unwrap();
        // Hand unroll on s = w + b (both entries move by the same amount).
        let mut s = [1.0f64; 4];
        let ds = |s_delayed: f64| -2.0 * eta * 2.0 * s_delayed;
        s[1] = s[0] + ds(s[0]);
        s[2] = s[1] + ds(s[0]);
        s[3] = s[2] + ds(s[1]);
        let expected_losses = [s[0] * s[0], s[0] * s[0], s[1] * s[1]];
        for (r, e) in trace.records.iter().zip(expected_losses) {
            assert!((r.loss - e).abs() < 1e-12, "{} vs {e}", r.loss);
        }
        assert_eq!(trace.records.len(), 3);
    }

    #[test]
    fn zero_delay_modes_agree_with_sequential() {
        let model = scalar_model(0.7);
        let data = one_sample();
        let cfg = OptimizerConfig::sgdm(0.05, 0.9);
        let run = |c| {
            uniform_delay_train(
                &model,
                &mut CyclicStream::new(&data).unwrap(),
                &DelaySpec::uniform(0, 2, c),
                &cfg,
                1,
                &RunOptions::new(50),
            )
            .unwrap()
            .losses()
        };
        let seq = sequential_train(&model, &mut CyclicStream::new(&data).unwrap(), &cfg, 1, &RunOptions::new(50))
            .unwrap()
            .losses();
        assert_eq!(run(Consistency::Consistent), seq);
        assert_eq!(run(Consistency::Inconsistent), seq);
    }

    #[test]
    fn rejects_bad_shapes() {
        let model = scalar_model(1.0);
        let data = one_sample();
        let err = uniform_delay_train(
            &model,
            &mut CyclicStream::new(&data).unwrap(),
            &DelaySpec::uniform(1, 3, Consistency::Consistent),
            &OptimizerConfig::sgdm(0.1, 0.0),
            1,
            &RunOptions::new(1),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
