use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::{TrainConfig, TrainError};
use crate::exec::ChunkExecutor;
use crate::policy::{ppo_gradients, ppo_loss, PolicyError, PolicyParams, Sample};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub surrogate: f64,
    pub critic: f64,
    pub entropy: f64,
    /// Approximate KL between the rollout policy and the updated one, whole batch.
    pub kl: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub early_stop: bool,
}

/// Minibatch passes over `samples` (advantages already standardized).
///
/// After every epoch the approximate KL between the rollout policy and the
/// current one is measured over the whole batch; once it exceeds
/// `cfg.kl_stop` no further epochs run. A non-finite loss aborts the update
/// and leaves `params` untouched.
pub fn update<R: Rng + ?Sized, E: ChunkExecutor>(
    params: &mut PolicyParams,
    adam: &mut Adam,
    samples: &[Sample],
    cfg: &TrainConfig,
    rng: &mut R,
    exec: &E,
) -> Result<UpdateStats, TrainError> {
    let loss_cfg = cfg.loss_config();
    let backup = (params.clone(), adam.clone());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = UpdateStats::default();
    let mut scratch: Vec<Sample> = Vec::with_capacity(cfg.minibatch);
    let result = (|| {
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for idx in order.chunks(cfg.minibatch.max(1)) {
                scratch.clear();
                scratch.extend(idx.iter().map(|&i| samples[i].clone()));
                let (mut grads, _) = ppo_gradients(params, &scratch, &loss_cfg, exec)?;
                clip_grad_norm(&mut grads, cfg.max_grad_norm);
                adam.apply(params, &grads);
                stats.minibatches += 1;
            }
            stats.epochs += 1;
            let after = ppo_loss(params, samples, &loss_cfg)?;
            stats.surrogate = after.surrogate;
            stats.critic = after.critic;
            stats.entropy = after.entropy;
            stats.kl = after.approx_kl;
            if after.approx_kl > cfg.kl_stop {
                stats.early_stop = stats.epochs < cfg.epochs;
                break;
            }
        }
        Ok::<_, PolicyError>(())
    })();
    if let Err(e) = result.and_then(|()| if params.is_finite() { Ok(()) } else { Err(PolicyError::NonFiniteLoss) }) {
        (*params, *adam) = backup;
        return Err(e.into());
    }
    Ok(stats)
}
