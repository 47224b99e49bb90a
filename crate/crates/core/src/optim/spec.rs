use serde::{Deserialize, Serialize};

use super::coeffs::{sc_default_coeffs, shrink_factor};
use crate::error::{Error, Result};

/// Update rule applied on top of momentum SGD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Plain,
    /// Generalized Spike Compensation.
    Gsc,
    /// Linear Weight Prediction.
    Lwp,
    LwpPlusGsc,
    GradShrink,
    WeightStash,
    SpecTrain,
}

/// How predicted weights are extrapolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PredictionForm {
    /// `w[t-D] - eta * T * v[t-D]`
    #[default]
    Velocity,
    /// `w[t-D] + T * (w[t-D] - w[t-D-1])`
    WeightDifference,
}

/// Mitigation choice with its coefficients.
///
/// Coefficients left unset fall back to per-stage defaults: Spike
/// Compensation uses `sc_default_coeffs(m, D)` and the prediction horizon is
/// `horizon_scale * D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MitigationSpec {
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default, rename = "T")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub horizon_scale: Option<f64>,
    #[serde(default)]
    pub form: PredictionForm,
    #[serde(default)]
    pub gamma: Option<f64>,
}

/// Coefficients of one stage once its delay is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageRule {
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
    pub form: PredictionForm,
    pub shrink: f64,
}

impl StageRule {
    pub const PLAIN: StageRule = StageRule {
        a: 1.0,
        b: 0.0,
        horizon: 0.0,
        form: PredictionForm::Velocity,
        shrink: 1.0,
    };
}

impl MitigationSpec {
    pub fn plain() -> Self {
        MitigationSpec::default()
    }

    pub fn of(method: Method) -> Self {
        MitigationSpec {
            method,
            ..Default::default()
        }
    }

    /// Generalized Spike Compensation with explicit coefficients.
    pub fn gsc(a: f64, b: f64) -> Self {
        MitigationSpec {
            method: Method::Gsc,
            a: Some(a),
            b: Some(b),
            ..Default::default()
        }
    }

    /// Weight prediction with an explicit horizon.
    pub fn lwp(horizon: f64, form: PredictionForm) -> Self {
        MitigationSpec {
            method: Method::Lwp,
            horizon: Some(horizon),
            form,
            ..Default::default()
        }
    }

    pub fn grad_shrink(gamma: f64) -> Self {
        MitigationSpec {
            method: Method::GradShrink,
            gamma: Some(gamma),
            ..Default::default()
        }
    }

    pub fn with_form(mut self, form: PredictionForm) -> Self {
        self.form = form;
        self
    }

    pub fn uses_prediction(&self) -> bool {
        matches!(self.method, Method::Lwp | Method::LwpPlusGsc)
    }

    pub fn uses_spike(&self) -> bool {
        matches!(self.method, Method::Gsc | Method::LwpPlusGsc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_some() != self.b.is_some() {
            return Err(Error::Config("mitigation coefficients a and b must be given together".into()));
        }
        for (name, value) in [("a", self.a), ("b", self.b)] {
            if let Some(v) = value {
                if !v.is_finite() {
                    return Err(Error::Config(format!("mitigation.{name} must be finite")));
                }
            }
        }
        if let Some(t) = self.horizon {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("mitigation.T must be >= 0, got {t}")));
            }
        }
        if let Some(s) = self.horizon_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("mitigation.horizon_scale must be >= 0, got {s}")));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::Config(format!("mitigation.gamma must be in (0, 1], got {g}")));
            }
        }
        let coeffs_set = self.a.is_some();
        let horizon_set = self.horizon.is_some() || self.horizon_scale.is_some();
        match self.method {
            Method::Plain | Method::WeightStash | Method::SpecTrain | Method::GradShrink => {
                if coeffs_set && (self.a != Some(1.0) || self.b != Some(0.0)) {
                    return Err(Error::Config(format!("{:?} uses a=1, b=0", self.method)));
                }
                if horizon_set && self.horizon.unwrap_or(0.0) != 0.0 {
                    return Err(Error::Config(format!("{:?} uses T=0", self.method)));
                }
            }
            Method::Gsc => {
                if horizon_set && self.horizon.unwrap_or(0.0) != 0.0 {
                    return Err(Error::Config("gsc has no prediction horizon".into()));
                }
            }
            Method::Lwp => {
                if coeffs_set && (self.a != Some(1.0) || self.b != Some(0.0)) {
                    return Err(Error::Config("lwp uses a=1, b=0; use lwp_plus_gsc to combine".into()));
                }
            }
            Method::LwpPlusGsc => {}
        }
        if self.method != Method::GradShrink && self.gamma.is_some_and(|g| g != 1.0) {
            return Err(Error::Config("gamma only applies to grad_shrink".into()));
        }
        Ok(())
    }

    /// Resolves the coefficients for a stage with momentum `m` and delay `delay`.
    pub fn stage_rule(&self, m: f64, delay: usize) -> StageRule {
        let mut rule = StageRule {
            form: self.form,
            ..StageRule::PLAIN
        };
        if self.uses_spike() {
            let (a, b) = match (self.a, self.b) {
                (Some(a), Some(b)) => (a, b),
                _ => sc_default_coeffs(m, delay),
            };
            rule.a = a;
            rule.b = b;
        }
        if self.uses_prediction() {
            rule.horizon = self
                .horizon
                .unwrap_or_else(|| self.horizon_scale.unwrap_or(1.0) * delay as f64);
        }
        if self.method == Method::GradShrink {
            rule.shrink = shrink_factor(self.gamma.unwrap_or(1.0), delay);
        }
        rule
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub eta: f64,
    pub momentum: f64,
    #[serde(default)]
    pub mitigation: MitigationSpec,
}

impl OptimizerConfig {
    pub fn new(eta: f64, momentum: f64, mitigation: MitigationSpec) -> Self {
        OptimizerConfig { eta, momentum, mitigation }
    }

    pub fn sgdm(eta: f64, momentum: f64) -> Self {
        OptimizerConfig::new(eta, momentum, MitigationSpec::plain())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        self.mitigation.validate()
    }

    pub fn stage_rule(&self, delay: usize) -> StageRule {
        self.mitigation.stage_rule(self.momentum, delay)
    }
}
