use std::collections::VecDeque;

use super::data::{evaluate, DataStream, Sample};
use super::spec::{Consistency, PipelineSpec};
use super::trace::{EvalRecord, RunTrace, StepRecord};
use crate::error::{Error, Result};
use crate::modelkit::{Model, ParamVector};
use crate::optim::{Method, OptState, OptimizerConfig, PredictionForm};

/// Run length, evaluation cadence and bookkeeping shared by every trainer.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions<'a> {
    pub steps: u64,
    /// Evaluate on `eval_set` every this many updates (0: only at the end).
    pub eval_every: u64,
    pub eval_set: Option<&'a [Sample]>,
    /// Recorded in the trace; randomness lives in the model and stream.
    pub seed: u64,
}

impl<'a> RunOptions<'a> {
    pub fn new(steps: u64) -> Self {
        RunOptions {
            steps,
            eval_every: 0,
            eval_set: None,
            seed: 0,
        }
    }

    pub fn with_eval(mut self, every: u64, set: &'a [Sample]) -> Self {
        self.eval_every = every;
        self.eval_set = Some(set);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub(crate) struct BatchResult {
    pub grads: Vec<ParamVector>,
    pub loss: f64,
    pub correct: Option<u32>,
    pub first_id: usize,
}

/// Mean gradient of a micro-batch: forward at `fwd`, backward through `bwd`.
pub(crate) fn batch_gradient(
    model: &Model,
    batch: &[Sample],
    fwd: &[ParamVector],
    bwd: &[ParamVector],
) -> Result<BatchResult> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Usage("empty micro-batch".into()))?;
    let mut grads: Option<Vec<ParamVector>> = None;
    let mut loss = 0.0;
    let mut correct: Option<u32> = None;
    for sample in batch {
        let pass = model.forward(&sample.input, &sample.target, fwd)?;
        loss += pass.loss;
        if let Some(ok) = pass.correct(&sample.target) {
            *correct.get_or_insert(0) += ok as u32;
        }
        let g = model.backward(&pass, bwd, &sample.target)?;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => {
                for (a, gi) in acc.iter_mut().zip(&g) {
                    a.axpy(1.0, gi);
                }
            }
        }
    }
    let mut grads = grads.unwrap();
    if batch.len() > 1 {
        let inv = 1.0 / batch.len() as f64;
        for g in &mut grads {
            g.scale(inv);
        }
        loss *= inv;
    }
    Ok(BatchResult {
        grads,
        loss,
        correct,
        first_id: first.id,
    })
}

/// Shared step loop: `tick` performs one update and returns its record plus
/// the master weights afterwards.
pub(crate) fn drive<F>(model: &Model, opts: &RunOptions, config: serde_json::Value, mut tick: F) -> Result<RunTrace>
where
    F: FnMut(u64) -> Result<(StepRecord, Vec<ParamVector>)>,
{
    let mut trace = RunTrace {
        seed: opts.seed,
        config,
        ..RunTrace::default()
    };
    let mut master = model.weights();
    for i in 0..opts.steps {
        let (record, weights) = tick(i)?;
        // A ReLU network with NaN weights can still report a finite loss, so
        // the weights are checked too.
        let finite = record.loss.is_finite() && record.stage_wnorms.iter().all(|n| n.is_finite());
        trace.records.push(record);
        if !finite {
            trace.diverged = true;
            return Ok(trace);
        }
        master = weights;
        if let Some(set) = opts.eval_set {
            if opts.eval_every > 0 && (i + 1) % opts.eval_every == 0 {
                let (loss, accuracy) = evaluate(model, &master, set)?;
                trace.evals.push(EvalRecord { step: i + 1, loss, accuracy });
                if !loss.is_finite() {
                    trace.diverged = true;
                    return Ok(trace);
                }
            }
        }
    }
    if let Some(set) = opts.eval_set {
        if trace.evals.last().is_none_or(|e| e.step != opts.steps) {
            let (loss, accuracy) = evaluate(model, &master, set)?;
            if !loss.is_finite() {
                trace.diverged = true;
            }
            trace.evals.push(EvalRecord {
                step: opts.steps,
                loss,
                accuracy,
            });
        }
    }
    Ok(trace)
}

fn record(step: u64, batch: &BatchResult, weights: &[ParamVector]) -> StepRecord {
    StepRecord {
        step,
        sample_id: batch.first_id,
        loss: batch.loss,
        correct: batch.correct,
        stage_wnorms: weights.iter().map(ParamVector::norm).collect(),
    }
}

/// Plain minibatch training with no pipeline: every gradient is fresh.
pub fn sequential_train(
    model: &Model,
    data: &mut dyn DataStream,
    cfg: &OptimizerConfig,
    micro_batch: usize,
    opts: &RunOptions,
) -> Result<RunTrace> {
    cfg.validate()?;
    if micro_batch == 0 {
        return Err(Error::Config("micro_batch must be >= 1".into()));
    }
    let mut states: Vec<OptState> = model.weights().into_iter().map(|w| OptState::new(w, 0)).collect();
    let config = serde_json::json!({
        "runner": "sequential",
        "optimizer": cfg,
        "micro_batch": micro_batch,
    });
    drive(model, opts, config, |i| {
        let batch = data.batch(micro_batch)?;
        let w: Vec<ParamVector> = states.iter().map(|s| s.w().clone()).collect();
        let res = batch_gradient(model, &batch, &w, &w)?;
        if res.loss.is_finite() {
            for (s, g) in states.iter_mut().zip(&res.grads) {
                s.step(g, cfg, 0)?;
            }
        }
        let after: Vec<ParamVector> = states.iter().map(|s| s.w().clone()).collect();
        Ok((record(i, &res, &after), after))
    })
}

/// Weights captured for a future micro-batch, tagged with their version.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Micro-batch index that will run its forward pass on these weights.
    pub target: u64,
    /// Updates the stage had received when the snapshot was taken.
    pub version: u64,
    pub weights: ParamVector,
}

/// Weight versions involved in one stage's most recent update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VersionTag {
    /// Version the forward pass ran on.
    pub forward: u64,
    /// Version that received the gradient.
    pub updated: u64,
}

#[derive(Debug, Clone)]
struct StageState {
    opt: OptState,
    stash: VecDeque<Snapshot>,
    delay: usize,
    fwd_horizon: f64,
    bwd_horizon: f64,
}

/// Pipelined backpropagation, one micro-batch update per tick.
///
/// Stage `s` runs the forward pass of micro-batch `i` on weights captured
/// `D^s` updates earlier (predicted forward when a weight-prediction method
/// is active) and applies that micro-batch's gradient at update `i`. The
/// captured weights are kept in a per-stage stash until the gradient lands.
#[derive(Debug, Clone)]
pub struct PbSimulator<'m> {
    model: &'m Model,
    spec: PipelineSpec,
    cfg: OptimizerConfig,
    stages: Vec<StageState>,
    step: u64,
    tags: Vec<VersionTag>,
    max_stash: Vec<usize>,
}

impl<'m> PbSimulator<'m> {
    pub fn new(model: &'m Model, spec: PipelineSpec, cfg: OptimizerConfig) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        if spec.stages != model.num_stages() {
            return Err(Error::Config(format!(
                "pipeline has {} stages, model has {}",
                spec.stages,
                model.num_stages()
            )));
        }
        let method = cfg.mitigation.method;
        let stages = model
            .weights()
            .into_iter()
            .zip(spec.effective_delays())
            .enumerate()
            .map(|(s, (w, delay))| {
                let rule = cfg.stage_rule(delay);
                let (fwd_horizon, bwd_horizon) = match method {
                    Method::SpecTrain => ((delay + s) as f64, s as f64),
                    _ => (rule.horizon, 0.0),
                };
                let mut st = StageState {
                    opt: OptState::prefilled(w, 0),
                    stash: VecDeque::with_capacity(delay + 1),
                    delay,
                    fwd_horizon,
                    bwd_horizon,
                };
                // Micro-batches that entered before the first update see the
                // initial weights.
                for target in 0..delay as u64 {
                    st.stash.push_back(Snapshot {
                        target,
                        version: 0,
                        weights: st.opt.w().clone(),
                    });
                }
                Ok(st)
            })
            .collect::<Result<Vec<_>>>()?;
        let n = stages.len();
        Ok(PbSimulator {
            model,
            spec,
            cfg,
            max_stash: stages.iter().map(|s| s.stash.len()).collect(),
            stages,
            step: 0,
            tags: vec![VersionTag { forward: 0, updated: 0 }; n],
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn weights(&self) -> Vec<ParamVector> {
        self.stages.iter().map(|s| s.opt.w().clone()).collect()
    }

    pub fn stash_len(&self, stage: usize) -> usize {
        self.stages[stage].stash.len()
    }

    /// Largest stash size seen so far, per stage.
    pub fn max_stash_len(&self) -> &[usize] {
        &self.max_stash
    }

    pub fn last_versions(&self) -> &[VersionTag] {
        &self.tags
    }

    fn prediction_form(&self) -> PredictionForm {
        match self.cfg.mitigation.method {
            Method::SpecTrain => PredictionForm::Velocity,
            _ => self.cfg.mitigation.form,
        }
    }

    fn backward_uses_stash(&self) -> bool {
        self.spec.consistency != Consistency::Inconsistent || self.cfg.mitigation.method == Method::WeightStash
    }

    /// Processes one micro-batch and applies its gradient on every stage.
    pub fn tick(&mut self, batch: &[Sample]) -> Result<(StepRecord, Vec<ParamVector>)> {
        let i = self.step;
        let eta = self.cfg.eta;
        let form = self.prediction_form();
        for (s, st) in self.stages.iter_mut().enumerate() {
            let weights = st.opt.predict_weights(0, st.fwd_horizon, form, eta)?;
            st.stash.push_back(Snapshot {
                target: i + st.delay as u64,
                version: st.opt.step_count(),
                weights,
            });
            self.max_stash[s] = self.max_stash[s].max(st.stash.len());
        }

        let mut fwd = Vec::with_capacity(self.stages.len());
        let mut versions = Vec::with_capacity(self.stages.len());
        for (s, st) in self.stages.iter_mut().enumerate() {
            let snap = st.stash.pop_front().expect("stash is refilled every tick");
            if snap.target != i {
                return Err(Error::Usage(format!(
                    "stage {s}: stash holds micro-batch {} while {i} is due",
                    snap.target
                )));
            }
            versions.push(snap.version);
            fwd.push(snap.weights);
        }

        let spectrain = self.cfg.mitigation.method == Method::SpecTrain;
        let bwd: Vec<ParamVector> = if spectrain {
            self.stages
                .iter()
                .map(|st| st.opt.predict_weights(0, st.bwd_horizon, PredictionForm::Velocity, eta))
                .collect::<Result<_>>()?
        } else if self.backward_uses_stash() {
            fwd.clone()
        } else {
            self.weights()
        };

        let res = batch_gradient(self.model, batch, &fwd, &bwd)?;
        if res.loss.is_finite() {
            for ((st, g), (tag, &version)) in self
                .stages
                .iter_mut()
                .zip(&res.grads)
                .zip(self.tags.iter_mut().zip(&versions))
            {
                *tag = VersionTag {
                    forward: version,
                    updated: st.opt.step_count(),
                };
                st.opt.step(g, &self.cfg, st.delay)?;
            }
            self.step += 1;
        }
        let after = self.weights();
        Ok((record(i, &res, &after), after))
    }
}

/// Trains `model` under pipelined backpropagation as described by `spec`.
pub fn pb_train(
    model: &Model,
    data: &mut dyn DataStream,
    spec: &PipelineSpec,
    cfg: &OptimizerConfig,
    opts: &RunOptions,
) -> Result<RunTrace> {
    let mut sim = PbSimulator::new(model, spec.clone(), cfg.clone())?;
    let config = serde_json::json!({
        "runner": "pipelined",
        "pipeline": spec,
        "optimizer": cfg,
    });
    drive(model, opts, config, |_| {
        let batch = data.batch(spec.micro_batch)?;
        sim.tick(&batch)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelkit::{Activation, LossKind, Stage, Target};
    use crate::optim::MitigationSpec;
    use crate::pipeline::{stage_delays, CyclicStream};
    use rand::SeedableRng;

    fn toy(seed: u64) -> (Model, Vec<Sample>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let model = Model::mlp(&[3, 5, 2], Activation::Tanh, LossKind::SoftmaxCrossEntropy, &mut rng).unwrap();
        let data = (0..20)
            .map(|id| {
                let x = id as f64 / 7.0;
                Sample {
                    id,
                    input: vec![x.sin(), x.cos(), 0.3 * x],
                    target: Target::Class(id % 2),
                }
            })
            .collect();
        (model, data)
    }

    #[test]
    fn zero_delays_match_sequential_bitwise() {
        let (model, data) = toy(1);
        let cfg = OptimizerConfig::sgdm(0.1, 0.9);
        let seq = sequential_train(&model, &mut CyclicStream::new(&data).unwrap(), &cfg, 1, &RunOptions::new(200)).unwrap();
        let spec = PipelineSpec::with_delays(vec![0; 4]);
        let pb = pb_train(&model, &mut CyclicStream::new(&data).unwrap(), &spec, &cfg, &RunOptions::new(200)).unwrap();
        assert_eq!(seq.losses(), pb.losses());
    }

    #[test]
    fn version_bookkeeping() {
        let (model, data) = toy(2);
        let delays = stage_delays(4).unwrap();
        for consistency in [Consistency::Inconsistent, Consistency::Consistent, Consistency::Stashed] {
            let spec = PipelineSpec::with_delays(delays.clone()).with_consistency(consistency);
            let mut sim = PbSimulator::new(&model, spec, OptimizerConfig::sgdm(0.05, 0.9)).unwrap();
            let mut stream = CyclicStream::new(&data).unwrap();
            for i in 0..30u64 {
                sim.tick(&stream.batch(1).unwrap()).unwrap();
                for (s, tag) in sim.last_versions().iter().enumerate() {
                    assert_eq!(tag.updated, i);
                    assert_eq!(tag.forward, i.saturating_sub(delays[s] as u64));
                    assert_eq!(sim.stash_len(s), delays[s]);
                }
            }
            for (s, &m) in sim.max_stash_len().iter().enumerate() {
                assert!(m <= delays[s] + 1);
            }
        }
    }

    #[test]
    fn consistent_and_stashed_agree() {
        let (model, data) = toy(3);
        let cfg = OptimizerConfig::sgdm(0.05, 0.9);
        let run = |c| {
            let spec = PipelineSpec::with_delays(vec![6, 4, 2, 0]).with_consistency(c);
            pb_train(&model, &mut CyclicStream::new(&data).unwrap(), &spec, &cfg, &RunOptions::new(100)).unwrap()
        };
        assert_eq!(run(Consistency::Consistent).losses(), run(Consistency::Stashed).losses());
        assert_ne!(run(Consistency::Consistent).losses(), run(Consistency::Inconsistent).losses());
    }

    #[test]
    fn sc_at_zero_delay_is_plain_pb() {
        let (model, data) = toy(4);
        let spec = PipelineSpec::with_delays(vec![0; 4]);
        let plain = OptimizerConfig::sgdm(0.05, 0.9);
        let sc = OptimizerConfig::new(0.05, 0.9, MitigationSpec::of(Method::Gsc));
        let combined = OptimizerConfig::new(0.05, 0.9, MitigationSpec::of(Method::LwpPlusGsc));
        let go = |cfg: &OptimizerConfig| {
            pb_train(&model, &mut CyclicStream::new(&data).unwrap(), &spec, cfg, &RunOptions::new(100))
                .unwrap()
                .losses()
        };
        assert_eq!(go(&plain), go(&sc));
        assert_eq!(go(&plain), go(&combined));
    }

    #[test]
    fn micro_batches_average() {
        let (model, data) = toy(5);
        let w = model.weights();
        let single: Vec<_> = data[..2]
            .iter()
            .map(|s| batch_gradient(&model, std::slice::from_ref(s), &w, &w).unwrap())
            .collect();
        let both = batch_gradient(&model, &data[..2], &w, &w).unwrap();
        for s in 0..w.len() {
            for k in 0..w[s].len() {
                let mean = 0.5 * (single[0].grads[s][k] + single[1].grads[s][k]);
                assert!((both.grads[s][k] - mean).abs() < 1e-15);
            }
        }
        assert!((both.loss - 0.5 * (single[0].loss + single[1].loss)).abs() < 1e-15);
    }

    #[test]
    fn divergence_halts_the_run() {
        let stage = Stage::dense(1, 1, ParamVector::from_vec(vec![1.0, 0.0])).unwrap();
        let model = Model::new(vec![stage, Stage::loss_head(LossKind::MeanSquaredError, 1)]).unwrap();
        let data = vec![Sample {
            id: 0,
            input: vec![10.0],
            target: Target::Values(vec![0.0]),
        }];
        let spec = PipelineSpec::with_delays(vec![2, 0]);
        let trace = pb_train(
            &model,
            &mut CyclicStream::new(&data).unwrap(),
            &spec,
            &OptimizerConfig::sgdm(1.0, 0.9),
            &RunOptions::new(1000),
        )
        .unwrap();
        assert!(trace.diverged);
        assert!(trace.records.len() < 1000);
        let last = trace.records.last().unwrap();
        assert!(!last.loss.is_finite() || last.stage_wnorms.iter().any(|n| !n.is_finite()));
    }

    #[test]
    fn stage_count_mismatch_is_rejected() {
        let (model, _) = toy(6);
        let err = PbSimulator::new(&model, PipelineSpec::with_delays(vec![0; 3]), OptimizerConfig::sgdm(0.1, 0.0));
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
