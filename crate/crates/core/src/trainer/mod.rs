//! Actor-critic training: rollouts with randomized directive slots, K-step
//! advantages, clipped updates with a KL stop, evaluation and baselines.

mod adam;
mod advantage;
mod eval;
mod rollout;
mod train;
mod update;

pub use adam::{clip_grad_norm, Adam};
pub use advantage::{compute_advantages, standardize};
pub use eval::{
    eval_episode_seed, evaluate, report, run_episode, run_episode_observed, Baseline, Director, EpisodeObserver,
    EpisodeRecord, EvalReport, FixedLane, KeepStartLane, Pilot,
};
pub use rollout::{collect_rollouts, episode_seed, random_y_des, run_training_episode, Step, Trajectory};
pub use train::{build_samples, train, BatchLog, Trainer};
pub use update::{update, UpdateStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{Dims, LossConfig, PolicyError};
use crate::sim::SimError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("{rewards} rewards but {values} values")]
    LengthMismatch { rewards: usize, values: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub total_steps: usize,
    /// Bootstrap horizon of the advantage estimate.
    pub k: usize,
    pub clip: f64,
    pub kl_stop: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub batch_steps: usize,
    pub minibatch: usize,
    pub max_grad_norm: f64,
    pub eval_episodes: usize,
    /// Apply the safety mask during rollouts.
    pub mask: bool,
    pub dims: Dims,
    /// The critic regresses returns multiplied by this factor.
    pub value_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            lr: 5e-4,
            total_steps: 20_000,
            k: 16,
            clip: 0.2,
            kl_stop: 0.02,
            entropy_coef: 0.01,
            value_coef: 0.5,
            epochs: 4,
            batch_steps: 2048,
            minibatch: 256,
            max_grad_norm: 0.5,
            eval_episodes: 100,
            mask: true,
            dims: Dims::default(),
            value_scale: 0.1,
        }
    }
}

impl TrainConfig {
    /// Step budget of a full-length run.
    pub const FULL_STEPS: usize = 100_000;

    pub fn loss_config(&self) -> LossConfig {
        LossConfig { clip: self.clip, entropy_coef: self.entropy_coef, value_coef: self.value_coef }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(TrainError::InvalidConfig("gamma must lie in (0, 1)"));
        }
        if self.k == 0 {
            return Err(TrainError::InvalidConfig("K must be at least 1"));
        }
        if self.batch_steps == 0 || self.minibatch == 0 || self.epochs == 0 || self.total_steps == 0 {
            return Err(TrainError::InvalidConfig("step counts must be positive"));
        }
        if !(self.lr > 0.0) || !(self.clip > 0.0) || !(self.value_scale > 0.0) {
            return Err(TrainError::InvalidConfig("lr, clip and value_scale must be positive"));
        }
        self.dims.validate()?;
        Ok(())
    }
}
