//! Stage-structured differentiable models with exact per-stage gradients.
//!
//! Models are chains of dense layers, elementwise activations and a single
//! loss head. Parameters live outside the forward/backward calls so that a
//! pipeline simulator can feed each stage a different weight version.

mod gradcheck;
mod model;
mod param;

pub use gradcheck::grad_check;
pub use model::{Activation, ForwardPass, LossKind, Model, Stage, StageKind, Target};
pub use param::ParamVector;
