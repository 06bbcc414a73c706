#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Anticipatory vibrotactile guidance of a walker's centre of pressure (CoP).
//!
//! - [`copstream`]: force-plate CSV ingestion, multi-plate fusion, resampling.
//! - [`refpath`]: reference CoP paths, clamped and anticipatory lookup.
//! - [`feedback`]: the dead-zone engine, pulse scheduling, command frames.
//! - [`simwalker`]: a seeded simulated walker reacting to cues with latency.
//! - [`metrics`]: RMSE and time-above-threshold, trial and condition summaries.
//! - [`harness`]: sessions, replay of recordings, live TCP serving.

pub mod copstream;
pub mod feedback;
pub mod harness;
pub mod metrics;
pub mod refpath;
pub mod simwalker;

pub use copstream::{CoPSample, PlateFrame, PlateLayout};
pub use feedback::{ActuatorCommand, Axis, Direction, EngineState, FeedbackConfig};
pub use harness::{RunArtifact, SessionPlan};
pub use metrics::{IndicatorSet, TrialRecord};
pub use refpath::{GaitParams, ReferencePath};
pub use simwalker::{Condition, WalkerParams};
