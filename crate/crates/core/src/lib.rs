//! Collision detection in population protocols.
//!
//! A population of `n` anonymous agents, each holding an input `rank` in
//! `[1, n]`, must agree on whether two agents share a rank. Agents interact in
//! ordered pairs chosen uniformly at random by the scheduler; only the two
//! participants may change state.
//!
//! The crate is layered bottom-up:
//!
//! - [`engine`]: the uniformly random scheduler, trial runner and metrics.
//! - [`primitives`]: one-way epidemic and the leader-driven phase clock.
//! - [`cdwb`]: the segment-based detector that assumes a leader and
//!   population bounds.
//! - [`sizing`]: size-estimator slot feeding leader and bounds to the detector.
//! - [`cold`]: the composed, assumption-free detector.
//! - [`experiments`]: seeded sweeps, calibration and CSV/JSON output.
//!
//! The runnable programs under `examples/` walk through each layer.

pub mod calibration;
pub mod cdwb;
pub mod cold;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod primitives;
pub mod sizing;

pub use cdwb::{CdwbProtocol, CdwbState, Gid, Mode, SegmentParams};
pub use cold::{AgentState, CollisionDetection, ColdParams};
pub use engine::{
    DetectionChannel, Events, InteractionRecord, Protocol, Simulation, StopCondition, TrialResult,
};
pub use error::{Error, Result};
pub use primitives::{EpidemicProtocol, PhaseClockProtocol, PhaseClockState};
pub use sizing::{EstimatorKind, EstimatorState};
