use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::advantage::{compute_advantages, standardize};
use super::rollout::{collect_rollouts, Trajectory};
use super::update::{update, UpdateStats};
use super::{TrainConfig, TrainError};
use crate::exec::ChunkExecutor;
use crate::policy::{init_params, PolicyParams, Sample};
use crate::rng::{derive_seed, stream};
use crate::sim::ScenarioConfig;

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: usize,
    pub env_steps: usize,
    /// Mean undiscounted return of the episodes that ended in this batch.
    pub mean_return: f64,
    pub kl: f64,
    pub entropy: f64,
    pub success_rate: f64,
    pub episodes: usize,
    pub collisions: usize,
    pub surrogate: f64,
    pub critic: f64,
    pub early_stop: bool,
    /// Optimizer steps taken in this batch's update.
    pub minibatches: usize,
}

/// Training samples of a batch, with K-step advantages standardized over it.
pub fn build_samples(trajs: &[Trajectory], cfg: &TrainConfig) -> Result<Vec<Sample>, TrainError> {
    let mut samples = Vec::new();
    let mut advantages = Vec::new();
    for t in trajs {
        let rewards: Vec<f64> = t.steps.iter().map(|s| s.reward * cfg.value_scale).collect();
        let values: Vec<f64> = t.steps.iter().map(|s| s.value_old).collect();
        let (adv, targets) = compute_advantages(&rewards, &values, t.bootstrap_value, cfg.gamma, cfg.k)?;
        for ((s, a), target) in t.steps.iter().zip(adv).zip(targets) {
            let mut sample = Sample::from_obs(&s.obs, s.action, s.allowed);
            sample.logp_old = s.logp_old;
            sample.value_target = target;
            samples.push(sample);
            advantages.push(a);
        }
    }
    standardize(&mut advantages);
    for (s, a) in samples.iter_mut().zip(advantages) {
        s.advantage = a;
    }
    Ok(samples)
}

/// Collect -> advantage -> update loop state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub env: ScenarioConfig,
    pub cfg: TrainConfig,
    pub seed: u64,
    pub params: PolicyParams,
    pub adam: Adam,
    /// Batches completed so far.
    pub batch: usize,
    pub next_episode: u64,
}

impl Trainer {
    pub fn new(env: &ScenarioConfig, cfg: &TrainConfig, seed: u64) -> Result<Self, TrainError> {
        cfg.validate()?;
        env.validate()?;
        let params = init_params(derive_seed(seed, u64::MAX), cfg.dims)?;
        let adam = Adam::new(params.data.len(), cfg.lr);
        Ok(Trainer { env: env.clone(), cfg: cfg.clone(), seed, params, adam, batch: 0, next_episode: 0 })
    }

    pub fn total_batches(&self) -> usize {
        self.cfg.total_steps.div_ceil(self.cfg.batch_steps)
    }

    pub fn finished(&self) -> bool {
        self.batch >= self.total_batches()
    }

    pub fn run_batch<E: ChunkExecutor>(&mut self, exec: &E) -> Result<BatchLog, TrainError> {
        let (trajs, next) = collect_rollouts(&self.params, &self.env, &self.cfg, self.seed, self.next_episode)?;
        self.next_episode = next;
        let samples = build_samples(&trajs, &self.cfg)?;
        let mut rng = stream(derive_seed(self.seed, u64::MAX - 1), self.batch as u64);
        let stats: UpdateStats = update(&mut self.params, &mut self.adam, &samples, &self.cfg, &mut rng, exec)?;
        self.batch += 1;

        let ended: Vec<&Trajectory> = trajs.iter().filter(|t| !t.truncated).collect();
        let pool: Vec<&Trajectory> = if ended.is_empty() { trajs.iter().collect() } else { ended };
        let collisions = pool.iter().filter(|t| t.collided).count();
        let mean_return = pool.iter().map(|t| t.total_reward()).sum::<f64>() / pool.len() as f64;
        Ok(BatchLog {
            batch: self.batch,
            env_steps: self.batch * self.cfg.batch_steps,
            mean_return,
            kl: stats.kl,
            entropy: stats.entropy,
            success_rate: 1.0 - collisions as f64 / pool.len() as f64,
            episodes: pool.len(),
            collisions,
            surrogate: stats.surrogate,
            critic: stats.critic,
            early_stop: stats.early_stop,
            minibatches: stats.minibatches,
        })
    }
}

/// Run a full training job, calling `on_batch` after every batch.
pub fn train<E: ChunkExecutor>(
    env: &ScenarioConfig,
    cfg: &TrainConfig,
    seed: u64,
    exec: &E,
    mut on_batch: impl FnMut(&Trainer, &BatchLog) -> Result<(), TrainError>,
) -> Result<(PolicyParams, Vec<BatchLog>), TrainError> {
    let mut trainer = Trainer::new(env, cfg, seed)?;
    let mut logs = Vec::with_capacity(trainer.total_batches());
    while !trainer.finished() {
        let log = trainer.run_batch(exec)?;
        on_batch(&trainer, &log)?;
        logs.push(log);
    }
    Ok((trainer.params, logs))
}
