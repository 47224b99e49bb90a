//! Momentum SGD with delay mitigations.
//!
//! All rules share the update `v' = m v + g`, `w' = w - eta (a v' + b g)`:
//! plain SGDM is `a = 1, b = 0`, Spike Compensation changes `(a, b)`, and
//! weight prediction changes where the caller evaluates `g`.

mod coeffs;
mod spec;
mod state;

pub use coeffs::{gsc_from_lwp, sc_default_coeffs, scale_hyperparams, shrink_gradient};
pub use spec::{Method, MitigationSpec, OptimizerConfig, PredictionForm, StageRule};
pub use state::OptState;

pub use crate::modelkit::ParamVector;
