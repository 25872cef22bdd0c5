//! Deterministic seeded traffic world.
//!
//! Road topologies, vehicle kinematics, background traffic, collision and
//! time-to-collision queries, observation extraction and the reward.

mod geometry;
pub(crate) mod idm;
mod metrics;
mod observation;
mod reward;
mod scenario;
mod vehicle;
mod world;

pub use geometry::{rectangles_overlap, Rect};
pub use idm::{background_policy, idm_acceleration, lateral_steer, IdmParams, IDM};
pub use metrics::{metrics_summary, EpisodeMetrics, MetricsSummary};
pub use observation::{observe, Observation, OBS_FEATURES, OBS_ROWS, POS_SCALE, PRESENT_COL, VEL_SCALE, Y_DES_COL};
pub use reward::{compute_reward, RewardBreakdown, RewardWeights};
pub use scenario::{ScenarioConfig, ScenarioKind, MERGE_RAMP_END};
pub use vehicle::{Controls, Direction, VehicleState, DEFAULT_LENGTH, DEFAULT_WIDTH};
pub use world::{
    build_scenario, compute_ttc, step_world, Longitudinal, WorldState, DECISION_PERIOD, MAX_ACCEL, MAX_STEER, SIM_DT,
    SUBSTEPS_PER_DECISION,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(&'static str),
    #[error("unknown vehicle id {0}")]
    UnknownVehicle(u32),
    #[error("metrics need at least one episode")]
    EmptyInput,
}
