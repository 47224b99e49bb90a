//! Discrete-time simulation of pipelined backpropagation.
//!
//! Activations are not routed between ticks; each micro-batch's forward pass
//! is computed directly at the weight version the stage would have used.

mod data;
mod delayed;
mod sim;
mod spec;
mod trace;

pub use data::{evaluate, CyclicStream, DataStream, Sample, ShuffledStream};
pub use delayed::{uniform_delay_train, DelaySpec};
pub use sim::{pb_train, sequential_train, PbSimulator, RunOptions, Snapshot, VersionTag};
pub use spec::{
    dp_utilization, fill_drain_report, pipeline_utilization, spectrain_horizons, stage_delays, Consistency,
    DpUtilization, FillDrainReport, PipelineSpec, Schedule,
};
pub use trace::{EvalRecord, RunTrace, StepRecord, TraceFiles};
