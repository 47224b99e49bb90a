//! Delay-compensated momentum optimization for pipelined training.
//!
//! - [`modelkit`]: small stage-structured models with exact per-stage gradients
//! - [`optim`]: SGDM, Spike Compensation, Linear Weight Prediction and friends
//! - [`quadratic`]: characteristic polynomials, dominant roots and half-lives
//! - [`pipeline`]: pipelined-backprop and delayed-gradient simulators
//! - [`harness`]: datasets, experiment configs, sweeps and persistence

pub mod error;
pub mod harness;
pub mod modelkit;
pub mod optim;
pub mod pipeline;
pub mod quadratic;

pub use error::{Error, Result};
pub use modelkit::{Activation, LossKind, Model, ParamVector, Stage, Target};
pub use optim::{Method, MitigationSpec, OptState, OptimizerConfig, PredictionForm};
