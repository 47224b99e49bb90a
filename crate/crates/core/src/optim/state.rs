use std::collections::VecDeque;

use super::{OptimizerConfig, ParamVector, PredictionForm};
use crate::error::{Error, Result};

/// Weights, velocity and a bounded window of their past values.
///
/// `history_w` holds `w[t], w[t-1], ...` (newest first) up to
/// `max_delay + 2` entries; `history_v` holds `v[t], v[t-1], ...` up to
/// `max_delay + 1` entries. Older entries are evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    history_w: VecDeque<ParamVector>,
    history_v: VecDeque<ParamVector>,
    cap_w: usize,
    cap_v: usize,
    step_count: u64,
}

impl OptState {
    /// Fresh state with zero velocity and no past beyond the current weights.
    pub fn new(w: ParamVector, max_delay: usize) -> Self {
        let v = ParamVector::zeros(w.len());
        Self::from_parts(w, v, max_delay)
    }

    pub fn from_parts(w: ParamVector, v: ParamVector, max_delay: usize) -> Self {
        assert_eq!(w.len(), v.len(), "weights and velocity must have the same length");
        let mut history_w = VecDeque::with_capacity(max_delay + 2);
        let mut history_v = VecDeque::with_capacity(max_delay + 1);
        history_w.push_front(w);
        history_v.push_front(v);
        OptState {
            history_w,
            history_v,
            cap_w: max_delay + 2,
            cap_v: max_delay + 1,
            step_count: 0,
        }
    }

    /// State whose whole history window reads as the initial weights with zero
    /// velocity, i.e. delayed reads before the first update clamp to `w`.
    pub fn prefilled(w: ParamVector, max_delay: usize) -> Self {
        let mut state = Self::new(w, max_delay);
        while state.history_w.len() < state.cap_w {
            let oldest = state.history_w.back().unwrap().clone();
            state.history_w.push_back(oldest);
        }
        while state.history_v.len() < state.cap_v {
            let zeros = ParamVector::zeros(state.len());
            state.history_v.push_back(zeros);
        }
        state
    }

    pub fn len(&self) -> usize {
        self.history_w[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn w(&self) -> &ParamVector {
        &self.history_w[0]
    }

    pub fn v(&self) -> &ParamVector {
        &self.history_v[0]
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Largest delay this state can serve.
    pub fn max_delay(&self) -> usize {
        self.cap_v - 1
    }

    /// `w[t - k]`.
    pub fn weights_ago(&self, k: usize) -> Result<&ParamVector> {
        lookup(&self.history_w, self.cap_w, k, "weight")
    }

    /// `v[t - k]`.
    pub fn velocity_ago(&self, k: usize) -> Result<&ParamVector> {
        lookup(&self.history_v, self.cap_v, k, "velocity")
    }

    /// One optimizer update with the rule the config resolves for `delay`.
    ///
    /// `g` is the gradient as computed by the caller (at delayed or predicted
    /// weights); gradient shrinking, when configured, is applied here.
    pub fn step(&mut self, g: &ParamVector, cfg: &OptimizerConfig, delay: usize) -> Result<()> {
        let rule = cfg.stage_rule(delay);
        if rule.shrink != 1.0 {
            let shrunk = g.scaled(rule.shrink);
            self.apply_update(&shrunk, cfg.eta, cfg.momentum, rule.a, rule.b)
        } else {
            self.apply_update(g, cfg.eta, cfg.momentum, rule.a, rule.b)
        }
    }

    /// `v' = m v + g`, `w' = w - eta (a v' + b g)`.
    pub fn apply_update(&mut self, g: &ParamVector, eta: f64, m: f64, a: f64, b: f64) -> Result<()> {
        if g.len() != self.len() {
            return Err(Error::Usage(format!(
                "gradient has {} entries, parameters have {}",
                g.len(),
                self.len()
            )));
        }
        let mut v = self.v().clone();
        for (vi, gi) in v.as_mut_slice().iter_mut().zip(g.iter()) {
            *vi = m * *vi + gi;
        }
        let mut w = self.w().clone();
        let plain = a == 1.0 && b == 0.0;
        for ((wi, vi), gi) in w.as_mut_slice().iter_mut().zip(v.iter()).zip(g.iter()) {
            if plain {
                *wi -= eta * vi;
            } else {
                *wi -= eta * (a * vi + b * gi);
            }
        }
        push_bounded(&mut self.history_w, self.cap_w, w);
        push_bounded(&mut self.history_v, self.cap_v, v);
        self.step_count += 1;
        Ok(())
    }

    /// Predicted weights from the state `delay` steps back with horizon `horizon`.
    pub fn predict_weights(&self, delay: usize, horizon: f64, form: PredictionForm, eta: f64) -> Result<ParamVector> {
        let base = self.weights_ago(delay)?;
        if horizon == 0.0 {
            return Ok(base.clone());
        }
        Ok(match form {
            PredictionForm::Velocity => {
                let v = self.velocity_ago(delay)?;
                let mut out = base.clone();
                out.axpy(-eta * horizon, v);
                out
            }
            PredictionForm::WeightDifference => {
                let prev = self.weights_ago(delay + 1)?;
                extrapolate(base, prev, horizon)
            }
        })
    }
}

/// `base + horizon * (base - prev)`
fn extrapolate(base: &ParamVector, prev: &ParamVector, horizon: f64) -> ParamVector {
    let out: Vec<f64> = base
        .iter()
        .zip(prev.iter())
        .map(|(b, p)| b + horizon * (b - p))
        .collect();
    ParamVector::from_vec(out)
}

fn lookup<'a>(hist: &'a VecDeque<ParamVector>, cap: usize, k: usize, what: &str) -> Result<&'a ParamVector> {
    if k >= cap {
        return Err(Error::Usage(format!(
            "{what} history holds at most {cap} entries; {k} steps back was requested"
        )));
    }
    hist.get(k).ok_or_else(|| {
        Error::Usage(format!(
            "{what} history has only {} entries; {k} steps back needs warm-up",
            hist.len()
        ))
    })
}

fn push_bounded(hist: &mut VecDeque<ParamVector>, cap: usize, value: ParamVector) {
    hist.push_front(value);
    hist.truncate(cap);
}
