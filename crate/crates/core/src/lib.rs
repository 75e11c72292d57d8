//! Learning Low-Earth-Orbit configurations that cover a ground target.
//!
//! The crate is split along the pipeline:
//!
//! - [`tle`]: two-line element parsing, catalog ingestion and retrieval.
//! - [`orbit`]: two-body Keplerian geometry, ground tracks and the distance
//!   quantities the reward consumes.
//! - [`reward`]: the composite coverage/safety/target reward.
//! - [`env`]: the episodic decision process over five orbital elements.
//! - [`nn`]: a small actor-critic network with hand-written backpropagation.
//! - [`rl`]: rollouts, advantage estimation, A2C and PPO trainers.

pub mod env;
pub mod nn;
pub mod orbit;
pub mod reward;
pub mod rl;
pub mod tle;

pub use env::{MissionConfig, Observation, OrbitEnv, StepResult};
pub use orbit::{GroundPoint, KeplerianElements};
pub use reward::{RewardBreakdown, RewardInputs, RewardWeights};
pub use tle::{PhysicalConstants, TleRecord};

/// ISS element set used as the built-in safety catalog.
pub const ISS_TLE: &str = include_str!("../fixtures/iss.tle");
