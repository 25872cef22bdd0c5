use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::episode::DriveSession;
use crate::policy::{forward, masked_softmax, sample_action, PolicyParams, SampleMode};
use crate::rng::{derive_seed, stream};
use crate::sim::{Observation, ScenarioConfig, ScenarioKind};
use crate::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub obs: Observation,
    pub y_des: f64,
    pub action: Action,
    pub allowed: [bool; Action::COUNT],
    pub reward: f64,
    pub logp_old: f64,
    pub value_old: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub scenario: ScenarioKind,
    pub steps: Vec<Step>,
    pub collided: bool,
    /// `V` of the state after the last step; 0 after a collision.
    pub bootstrap_value: f64,
    /// The batch filled up before the episode ended.
    pub truncated: bool,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Lane center the directive slot is drawn from at reset.
pub fn random_y_des<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> f64 {
    config.lane_center(rng.gen_range(0..config.lane_count))
}

/// Seed of global episode `index` in a run seeded with `seed`.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, index)
}

/// Run one training episode of at most `max_steps` decisions, sampling
/// from the (masked) policy.
pub fn run_training_episode(
    params: &PolicyParams,
    env: &ScenarioConfig,
    mask: bool,
    seed: u64,
    max_steps: usize,
) -> Result<Trajectory, TrainError> {
    let config = env.with_seed(seed);
    let mut rng = stream(seed, 1);
    let y_des = random_y_des(&config, &mut rng);
    let mut session = DriveSession::new(&config, Some(y_des))?;
    session.mask_enabled = mask;
    let mut steps = Vec::new();
    while !session.done && steps.len() < max_steps {
        let obs = session.observe();
        let allowed = session.action_mask();
        let trace = forward(params, &obs)?;
        let probs = masked_softmax(&trace.logits, &allowed);
        let (action, logp) = sample_action(&probs, &mut rng, SampleMode::Sample);
        let out = session.step(action);
        steps.push(Step {
            obs,
            y_des: session.y_des,
            action,
            allowed,
            reward: out.reward.total,
            logp_old: logp,
            value_old: trace.value,
            done: out.done,
        });
    }
    let truncated = !session.done;
    // only a collision is terminal; the horizon is a time limit the state does not show
    let bootstrap_value = if session.world.collided { 0.0 } else { forward(params, &session.observe())?.value };
    Ok(Trajectory { seed, scenario: config.kind, steps, collided: session.world.collided, bootstrap_value, truncated })
}

/// Exactly `cfg.batch_steps` decisions from consecutive episodes starting
/// at global episode index `first_episode`. Returns the trajectories and
/// the next unused episode index.
pub fn collect_rollouts(
    params: &PolicyParams,
    env: &ScenarioConfig,
    cfg: &TrainConfig,
    seed: u64,
    first_episode: u64,
) -> Result<(Vec<Trajectory>, u64), TrainError> {
    let mut out = Vec::new();
    let mut remaining = cfg.batch_steps;
    let mut index = first_episode;
    while remaining > 0 {
        let traj = run_training_episode(params, env, cfg.mask, episode_seed(seed, index), remaining)?;
        index += 1;
        remaining -= traj.steps.len();
        out.push(traj);
    }
    Ok((out, index))
}
