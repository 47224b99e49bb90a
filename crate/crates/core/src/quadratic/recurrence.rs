use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::sc_default_coeffs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMethod {
    /// Delayed gradient descent with momentum.
    Gdm,
    /// Generalized Spike Compensation.
    Gsc,
    /// Linear weight prediction (weight-difference form).
    Lwp,
    /// Weight-difference prediction combined with Spike Compensation.
    LwpWPlusGsc,
}

impl QuadMethod {
    pub const ALL: [QuadMethod; 4] = [QuadMethod::Gdm, QuadMethod::Gsc, QuadMethod::Lwp, QuadMethod::LwpWPlusGsc];

    pub fn name(self) -> &'static str {
        match self {
            QuadMethod::Gdm => "gdm",
            QuadMethod::Gsc => "gsc",
            QuadMethod::Lwp => "lwp",
            QuadMethod::LwpWPlusGsc => "lwp_w_plus_gsc",
        }
    }
}

impl std::str::FromStr for QuadMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QuadMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected gdm, gsc, lwp or lwp_w_plus_gsc)")))
    }
}

/// A method plus optional coefficient overrides. Unset values resolve per
/// delay: Spike Compensation uses `sc_default_coeffs(m, D)` and the horizon is
/// `horizon_scale * D` (scale 1 by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadMethodSpec {
    pub method: QuadMethod,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default, rename = "T")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub horizon_scale: Option<f64>,
}

impl QuadMethodSpec {
    pub fn defaults(method: QuadMethod) -> Self {
        QuadMethodSpec {
            method,
            a: None,
            b: None,
            horizon: None,
            horizon_scale: None,
        }
    }

    pub fn with_horizon_scale(mut self, scale: f64) -> Self {
        self.horizon_scale = Some(scale);
        self
    }

    pub fn recurrence(&self, m: f64, eta_lambda: f64, delay: usize) -> QuadraticRecurrence {
        let (da, db) = sc_default_coeffs(m, delay);
        let horizon = self
            .horizon
            .unwrap_or_else(|| self.horizon_scale.unwrap_or(1.0) * delay as f64);
        QuadraticRecurrence {
            method: self.method,
            m,
            eta_lambda,
            delay,
            a: self.a.unwrap_or(da),
            b: self.b.unwrap_or(db),
            horizon,
        }
    }
}

/// Expected-weight dynamics of one eigen-component of a convex quadratic.
///
/// Coefficients that a method does not use are ignored: `gdm` behaves as
/// `a = 1, b = 0, T = 0`, `gsc` as `T = 0` and `lwp` as `a = 1, b = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRecurrence {
    pub method: QuadMethod,
    pub m: f64,
    pub eta_lambda: f64,
    pub delay: usize,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl QuadraticRecurrence {
    pub fn gdm(m: f64, eta_lambda: f64, delay: usize) -> Self {
        QuadraticRecurrence {
            method: QuadMethod::Gdm,
            m,
            eta_lambda,
            delay,
            a: 1.0,
            b: 0.0,
            horizon: 0.0,
        }
    }

    pub fn gsc(m: f64, eta_lambda: f64, delay: usize, a: f64, b: f64) -> Self {
        QuadraticRecurrence {
            method: QuadMethod::Gsc,
            a,
            b,
            ..Self::gdm(m, eta_lambda, delay)
        }
    }

    pub fn lwp(m: f64, eta_lambda: f64, delay: usize, horizon: f64) -> Self {
        QuadraticRecurrence {
            method: QuadMethod::Lwp,
            horizon,
            ..Self::gdm(m, eta_lambda, delay)
        }
    }

    pub fn combined(m: f64, eta_lambda: f64, delay: usize, horizon: f64, a: f64, b: f64) -> Self {
        QuadraticRecurrence {
            method: QuadMethod::LwpWPlusGsc,
            a,
            b,
            horizon,
            ..Self::gdm(m, eta_lambda, delay)
        }
    }

    /// `(a, b, T)` after discarding what the method ignores.
    pub fn effective(&self) -> (f64, f64, f64) {
        match self.method {
            QuadMethod::Gdm => (1.0, 0.0, 0.0),
            QuadMethod::Gsc => (self.a, self.b, 0.0),
            QuadMethod::Lwp => (1.0, 0.0, self.horizon),
            QuadMethod::LwpWPlusGsc => (self.a, self.b, self.horizon),
        }
    }

    /// Coefficients `c[k]` of the weight-only transition equation
    /// `w[t+1] = sum_k c[k] w[t-k]`, for `k = 0 ..= D + 2`.
    ///
    /// Obtained by eliminating the velocity from the combined update:
    /// `w[t+1] = (1+m) w[t] - m w[t-1]
    ///           - el (a+b) ((T+1) w[t-D] - T w[t-D-1])
    ///           + el m b ((T+1) w[t-D-1] - T w[t-D-2])`.
    pub fn lag_coefficients(&self) -> Vec<f64> {
        let (a, b, t) = self.effective();
        let (m, el, d) = (self.m, self.eta_lambda, self.delay);
        let mut c = vec![0.0; d + 3];
        c[0] += 1.0 + m;
        c[1] -= m;
        c[d] -= el * (a + b) * (t + 1.0);
        c[d + 1] += el * (a + b) * t + el * m * b * (t + 1.0);
        c[d + 2] -= el * m * b * t;
        c
    }

    /// Characteristic polynomial of the transition equation, highest power
    /// first. Trailing zero lags are dropped, so the degree is one more than
    /// the deepest lag that actually appears.
    ///
    /// For delayed GDM with `D >= 1` this is
    /// `z^(D+1) - (1+m) z^D + m z^(D-1) + el`; the gradient term enters with a
    /// plus sign.
    pub fn char_poly(&self) -> Vec<f64> {
        let c = self.lag_coefficients();
        let deepest = c.iter().rposition(|&x| x != 0.0).unwrap_or(0);
        let mut poly = Vec::with_capacity(deepest + 2);
        poly.push(1.0);
        poly.extend(c[..=deepest].iter().map(|&x| -x));
        poly
    }

    /// Iterates the weight-only transition equation from a constant history `w0`.
    pub fn transition_trajectory(&self, steps: usize, w0: f64) -> Vec<f64> {
        let c = self.lag_coefficients();
        let mut hist: VecDeque<f64> = std::iter::repeat_n(w0, c.len()).collect();
        let mut out = Vec::with_capacity(steps + 1);
        out.push(w0);
        for _ in 0..steps {
            let next: f64 = c.iter().zip(hist.iter()).map(|(ck, wk)| ck * wk).sum();
            hist.pop_back();
            hist.push_front(next);
            out.push(next);
        }
        out
    }

    /// Runs the optimizer itself (velocity state, delayed and predicted
    /// gradient) on `f(w) = lambda w^2 / 2`, starting from a constant weight
    /// history `w0` and zero velocity. Returns `w[0..=steps]`.
    pub fn trajectory(&self, steps: usize, w0: f64) -> Vec<f64> {
        self.trajectory_from(steps, w0, 0.0)
    }

    /// As [`QuadraticRecurrence::trajectory`] but with initial `eta * v = u0`.
    pub fn trajectory_from(&self, steps: usize, w0: f64, u0: f64) -> Vec<f64> {
        let mut sim = StateSim::new(self, w0);
        sim.u = u0;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(w0);
        for _ in 0..steps {
            out.push(sim.advance());
        }
        out
    }

    /// Initial `eta * v` that makes a constant weight history `w0` a valid
    /// past of the update, so the optimizer follows the transition equation
    /// from step one. Zero for methods with `b = 0`.
    pub fn stationary_velocity(&self, w0: f64) -> Result<f64> {
        let (a, b, _) = self.effective();
        if b == 0.0 {
            return Ok(0.0);
        }
        if a == 0.0 {
            return Err(Error::Domain("no stationary velocity when a = 0 and b != 0".into()));
        }
        Ok(-(b / a) * self.eta_lambda * w0)
    }

    /// Empirical asymptotic decay rate of the optimizer trajectory.
    ///
    /// The state is renormalized as it shrinks (the dynamics are linear), and
    /// the rate is read off the peak envelope of `|w|` in two windows of the
    /// final quarter, which is robust to oscillating trajectories.
    pub fn simulate(&self, steps: usize, w0: f64) -> Result<DecayEstimate> {
        if steps < 200 {
            return Err(Error::Usage(format!("simulate_recurrence needs at least 200 steps, got {steps}")));
        }
        if w0 == 0.0 || !w0.is_finite() {
            return Err(Error::Domain("initial weight must be finite and nonzero".into()));
        }
        const BLOWUP_LN: f64 = 230.258_509_299_404_57; // ln(1e100)
        let mut sim = StateSim::new(self, w0);
        let mut log_offset = 0.0f64;
        let mut log_abs = Vec::with_capacity(steps + 1);
        let ln_w0 = w0.abs().ln();
        log_abs.push(ln_w0);
        for t in 1..=steps {
            let w = sim.advance();
            let lw = w.abs().ln() + log_offset;
            if lw > BLOWUP_LN || !w.is_finite() {
                let growth = ((lw - ln_w0) / t as f64).exp();
                return Ok(DecayEstimate {
                    rate: growth.max(1.0 + f64::EPSILON),
                    diverged: true,
                    steps: t,
                });
            }
            log_abs.push(lw);
            let scale = sim.max_abs();
            if scale != 0.0 && scale < 1e-150 {
                sim.rescale(1e150);
                log_offset -= 150.0 * std::f64::consts::LN_10;
            }
        }
        let n = steps;
        let window = (n / 16).max(1);
        let first = n - n / 4;
        let peak = |lo: usize, hi: usize| log_abs[lo..hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let early = peak(first, first + window);
        let late = peak(n + 1 - window, n + 1);
        let span = (n + 1 - window - first) as f64;
        let rate = if late == f64::NEG_INFINITY || early == f64::NEG_INFINITY {
            0.0
        } else {
            ((late - early) / span).exp()
        };
        Ok(DecayEstimate {
            rate,
            diverged: false,
            steps: n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEstimate {
    pub rate: f64,
    pub diverged: bool,
    pub steps: usize,
}

/// Velocity-form optimizer on a 1-D quadratic. `u` holds `eta * v`.
struct StateSim {
    w: VecDeque<f64>,
    u: f64,
    m: f64,
    el: f64,
    a: f64,
    b: f64,
    horizon: f64,
    delay: usize,
}

impl StateSim {
    fn new(rec: &QuadraticRecurrence, w0: f64) -> Self {
        let (a, b, horizon) = rec.effective();
        StateSim {
            w: std::iter::repeat_n(w0, rec.delay + 2).collect(),
            u: 0.0,
            m: rec.m,
            el: rec.eta_lambda,
            a,
            b,
            horizon,
            delay: rec.delay,
        }
    }

    fn advance(&mut self) -> f64 {
        let base = self.w[self.delay];
        let prev = self.w[self.delay + 1];
        let predicted = if self.horizon == 0.0 {
            base
        } else {
            base + self.horizon * (base - prev)
        };
        let step_grad = self.el * predicted;
        self.u = self.m * self.u + step_grad;
        let w = self.w[0] - (self.a * self.u + self.b * step_grad);
        self.w.pop_back();
        self.w.push_front(w);
        w
    }

    fn max_abs(&self) -> f64 {
        self.w.iter().fold(self.u.abs(), |acc, x| acc.max(x.abs()))
    }

    fn rescale(&mut self, factor: f64) {
        self.u *= factor;
        for x in &mut self.w {
            *x *= factor;
        }
    }
}
