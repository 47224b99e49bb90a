use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxCrossEntropy,
    MeanSquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Dense,
    Activation(Activation),
    LossHead(LossKind),
}

/// Supervision signal for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Class(usize),
    Values(Vec<f64>),
}

impl Target {
    pub fn class(&self) -> Option<usize> {
        match self {
            Target::Class(c) => Some(*c),
            Target::Values(_) => None,
        }
    }
}

/// One link of the stage chain. Dense stages store `out_dim x in_dim`
/// row-major weights followed by `out_dim` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub kind: StageKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub params: ParamVector,
}

impl Stage {
    pub fn dense(in_dim: usize, out_dim: usize, params: ParamVector) -> Result<Stage> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("dense stage dims must be positive".into()));
        }
        let want = in_dim * out_dim + out_dim;
        if params.len() != want {
            return Err(Error::Config(format!(
                "dense {in_dim}->{out_dim} needs {want} params, got {}",
                params.len()
            )));
        }
        Ok(Stage {
            kind: StageKind::Dense,
            in_dim,
            out_dim,
            params,
        })
    }

    /// Dense stage with zero bias and normal weights scaled by `gain / sqrt(in_dim)`.
    pub fn dense_init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, gain: f64, rng: &mut R) -> Result<Stage> {
        let std = gain / (in_dim as f64).sqrt();
        let mut values = Vec::with_capacity(in_dim * out_dim + out_dim);
        for _ in 0..in_dim * out_dim {
            let z: f64 = rng.sample(StandardNormal);
            values.push(std * z);
        }
        values.extend(std::iter::repeat_n(0.0, out_dim));
        Stage::dense(in_dim, out_dim, ParamVector::from_vec(values))
    }

    pub fn activation(act: Activation, dim: usize) -> Stage {
        Stage {
            kind: StageKind::Activation(act),
            in_dim: dim,
            out_dim: dim,
            params: ParamVector::zeros(0),
        }
    }

    pub fn loss_head(loss: LossKind, dim: usize) -> Stage {
        Stage {
            kind: StageKind::LossHead(loss),
            in_dim: dim,
            out_dim: dim,
            params: ParamVector::zeros(0),
        }
    }

    pub fn param_len(&self) -> usize {
        match self.kind {
            StageKind::Dense => self.in_dim * self.out_dim + self.out_dim,
            _ => 0,
        }
    }
}

/// Cached result of a forward pass.
///
/// `activations[0]` is the input and `activations[s + 1]` the output of stage
/// `s`. The loss head outputs class probabilities (cross-entropy) or the
/// prediction itself (squared error).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub activations: Vec<Vec<f64>>,
    pub loss: f64,
}

impl ForwardPass {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Argmax of the head output against a class target.
    pub fn correct(&self, target: &Target) -> Option<bool> {
        let class = target.class()?;
        Some(argmax(self.output()) == Some(class))
    }
}

pub(crate) fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    stages: Vec<Stage>,
}

impl Model {
    pub fn new(stages: Vec<Stage>) -> Result<Model> {
        if stages.is_empty() {
            return Err(Error::Config("model needs at least a loss head".into()));
        }
        for (s, stage) in stages.iter().enumerate() {
            if stage.params.len() != stage.param_len() {
                return Err(Error::Config(format!(
                    "stage {s}: expected {} params, got {}",
                    stage.param_len(),
                    stage.params.len()
                )));
            }
            if !matches!(stage.kind, StageKind::Dense) && stage.in_dim != stage.out_dim {
                return Err(Error::Config(format!("stage {s}: parameter-free stage must keep its width")));
            }
            let is_head = matches!(stage.kind, StageKind::LossHead(_));
            let is_last = s + 1 == stages.len();
            if is_head != is_last {
                return Err(Error::Config("exactly one loss head is allowed, at the end".into()));
            }
        }
        for (s, pair) in stages.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Config(format!(
                    "stage {s} outputs {} values but stage {} expects {}",
                    pair[0].out_dim,
                    s + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Model { stages })
    }

    /// Dense/activation stack over `dims` with a loss head on top. The final
    /// dense layer is not followed by an activation.
    pub fn mlp<R: Rng + ?Sized>(dims: &[usize], act: Activation, loss: LossKind, rng: &mut R) -> Result<Model> {
        if dims.len() < 2 {
            return Err(Error::Config("mlp needs at least input and output widths".into()));
        }
        let gain = match act {
            Activation::Relu => std::f64::consts::SQRT_2,
            Activation::Tanh | Activation::Identity => 1.0,
        };
        let mut stages = Vec::new();
        for (i, pair) in dims.windows(2).enumerate() {
            let last = i + 2 == dims.len();
            stages.push(Stage::dense_init(pair[0], pair[1], if last { 1.0 } else { gain }, rng)?);
            if !last {
                stages.push(Stage::activation(act, pair[1]));
            }
        }
        stages.push(Stage::loss_head(loss, *dims.last().unwrap()));
        Model::new(stages)
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn input_dim(&self) -> usize {
        self.stages[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.stages[self.stages.len() - 1].out_dim
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.stages[self.stages.len() - 1].kind {
            StageKind::LossHead(kind) => kind,
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn param_count(&self) -> usize {
        self.stages.iter().map(Stage::param_len).sum()
    }

    /// The model's own parameters, one vector per stage.
    pub fn weights(&self) -> Vec<ParamVector> {
        self.stages.iter().map(|s| s.params.clone()).collect()
    }

    pub fn set_weights(&mut self, weights: Vec<ParamVector>) -> Result<()> {
        self.check_weights(&weights)?;
        for (stage, w) in self.stages.iter_mut().zip(weights) {
            stage.params = w;
        }
        Ok(())
    }

    fn check_weights(&self, weights: &[ParamVector]) -> Result<()> {
        if weights.len() != self.stages.len() {
            return Err(Error::Config(format!(
                "{} weight vectors supplied for {} stages",
                weights.len(),
                self.stages.len()
            )));
        }
        for (s, (stage, w)) in self.stages.iter().zip(weights).enumerate() {
            if w.len() != stage.param_len() {
                return Err(Error::Config(format!(
                    "stage {s}: weight vector has {} entries, expected {}",
                    w.len(),
                    stage.param_len()
                )));
            }
        }
        Ok(())
    }

    fn check_target(&self, target: &Target) -> Result<()> {
        let out = self.output_dim();
        match (self.loss_kind(), target) {
            (_, Target::Class(c)) if *c >= out => Err(Error::Config(format!("class {c} out of range for {out} outputs"))),
            (LossKind::SoftmaxCrossEntropy, Target::Values(_)) => {
                Err(Error::Config("cross-entropy head needs a class target".into()))
            }
            (LossKind::MeanSquaredError, Target::Values(v)) if v.len() != out => Err(Error::Config(format!(
                "target has {} values, head has {out} outputs",
                v.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Runs every stage with the supplied per-stage weights.
    pub fn forward(&self, input: &[f64], target: &Target, weights: &[ParamVector]) -> Result<ForwardPass> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "input has {} features, model expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        self.check_weights(weights)?;
        self.check_target(target)?;

        let mut activations = Vec::with_capacity(self.stages.len() + 1);
        activations.push(input.to_vec());
        let mut loss = 0.0;
        for (stage, w) in self.stages.iter().zip(weights) {
            let x = activations.last().unwrap();
            let y = match stage.kind {
                StageKind::Dense => dense_forward(stage, w.as_slice(), x),
                StageKind::Activation(act) => x.iter().map(|&v| activate(act, v)).collect(),
                StageKind::LossHead(kind) => {
                    let (l, out) = head_forward(kind, x, target);
                    loss = l;
                    out
                }
            };
            activations.push(y);
        }
        Ok(ForwardPass { activations, loss })
    }

    /// Gradients of the loss with respect to each stage's parameters.
    ///
    /// `cache` must come from [`Model::forward`]. The weights passed here are
    /// used to propagate gradients through dense stages; they may differ from
    /// the forward weights, which is how inconsistent pipelines are modelled.
    pub fn backward(&self, cache: &ForwardPass, weights: &[ParamVector], target: &Target) -> Result<Vec<ParamVector>> {
        let n = self.stages.len();
        if cache.activations.len() != n + 1 {
            return Err(Error::Usage(format!(
                "forward cache holds {} activations, model needs {}",
                cache.activations.len(),
                n + 1
            )));
        }
        for (s, stage) in self.stages.iter().enumerate() {
            if cache.activations[s].len() != stage.in_dim {
                return Err(Error::Usage(format!("forward cache does not match stage {s}")));
            }
        }
        self.check_weights(weights)?;
        self.check_target(target)?;

        let mut grads: Vec<ParamVector> = self.stages.iter().map(|s| ParamVector::zeros(s.param_len())).collect();
        let mut delta = head_backward(self.loss_kind(), &cache.activations[n], target);

        for s in (0..n - 1).rev() {
            let stage = &self.stages[s];
            let x = &cache.activations[s];
            match stage.kind {
                StageKind::Dense => {
                    let (i_dim, o_dim) = (stage.in_dim, stage.out_dim);
                    let g = grads[s].as_mut_slice();
                    for j in 0..o_dim {
                        let row = &mut g[j * i_dim..(j + 1) * i_dim];
                        for (gi, xi) in row.iter_mut().zip(x) {
                            *gi = delta[j] * xi;
                        }
                        g[o_dim * i_dim + j] = delta[j];
                    }
                    if s > 0 {
                        let w = weights[s].as_slice();
                        let mut next = vec![0.0; i_dim];
                        for j in 0..o_dim {
                            let row = &w[j * i_dim..(j + 1) * i_dim];
                            for (ni, wi) in next.iter_mut().zip(row) {
                                *ni += wi * delta[j];
                            }
                        }
                        delta = next;
                    }
                }
                StageKind::Activation(act) => {
                    let y = &cache.activations[s + 1];
                    for ((d, &xi), &yi) in delta.iter_mut().zip(x).zip(y) {
                        *d *= activation_slope(act, xi, yi);
                    }
                }
                StageKind::LossHead(_) => unreachable!("loss head is always last"),
            }
        }
        Ok(grads)
    }

    /// Forward + backward in one call, returning loss, the cache and gradients.
    pub fn loss_and_grad(
        &self,
        input: &[f64],
        target: &Target,
        weights: &[ParamVector],
    ) -> Result<(ForwardPass, Vec<ParamVector>)> {
        let fwd = self.forward(input, target, weights)?;
        let grads = self.backward(&fwd, weights, target)?;
        Ok((fwd, grads))
    }
}

fn dense_forward(stage: &Stage, w: &[f64], x: &[f64]) -> Vec<f64> {
    let (i_dim, o_dim) = (stage.in_dim, stage.out_dim);
    let bias = &w[o_dim * i_dim..];
    (0..o_dim)
        .map(|j| {
            let row = &w[j * i_dim..(j + 1) * i_dim];
            row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias[j]
        })
        .collect()
}

fn activate(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Relu => x.max(0.0),
        Activation::Tanh => x.tanh(),
        Activation::Identity => x,
    }
}

// ReLU slope at exactly zero is 0.
fn activation_slope(act: Activation, x: f64, y: f64) -> f64 {
    match act {
        Activation::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - y * y,
        Activation::Identity => 1.0,
    }
}

fn softmax(z: &[f64]) -> (Vec<f64>, f64) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let log_sum = max + sum.ln();
    (exps.into_iter().map(|e| e / sum).collect(), log_sum)
}

fn one_hot_or_values(target: &Target, n: usize) -> Vec<f64> {
    match target {
        Target::Class(c) => {
            let mut v = vec![0.0; n];
            v[*c] = 1.0;
            v
        }
        Target::Values(v) => v.clone(),
    }
}

fn head_forward(kind: LossKind, z: &[f64], target: &Target) -> (f64, Vec<f64>) {
    match kind {
        LossKind::SoftmaxCrossEntropy => {
            let c = target.class().expect("checked by check_target");
            let (probs, log_sum) = softmax(z);
            ((log_sum - z[c]).max(0.0), probs)
        }
        LossKind::MeanSquaredError => {
            let t = one_hot_or_values(target, z.len());
            let loss = z.iter().zip(&t).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / z.len() as f64;
            (loss, z.to_vec())
        }
    }
}

/// Gradient of the loss with respect to the head input, from the head output.
fn head_backward(kind: LossKind, out: &[f64], target: &Target) -> Vec<f64> {
    let t = one_hot_or_values(target, out.len());
    match kind {
        LossKind::SoftmaxCrossEntropy => out.iter().zip(&t).map(|(p, t)| p - t).collect(),
        LossKind::MeanSquaredError => {
            let n = out.len() as f64;
            out.iter().zip(&t).map(|(y, t)| 2.0 * (y - t) / n).collect()
        }
    }
}
