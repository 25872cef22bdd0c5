//! Clipped-surrogate actor-critic loss and its gradient.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{backward, forward_rows, masked_softmax, ForwardTrace};
use super::{PolicyError, PolicyParams};
use crate::exec::ChunkExecutor;
use crate::sim::Observation;
use crate::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { clip: 0.2, entropy_coef: 0.01, value_coef: 0.5 }
    }
}

/// One training item.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `n x d_in` row-major features.
    pub input: Vec<f64>,
    pub n: usize,
    pub action: Action,
    /// Actions the executor allowed; the policy is renormalized over them.
    pub allowed: [bool; Action::COUNT],
    pub logp_old: f64,
    pub advantage: f64,
    pub value_target: f64,
}

impl Sample {
    pub fn from_obs(obs: &Observation, action: Action, allowed: [bool; Action::COUNT]) -> Self {
        Sample {
            input: obs.flat(),
            n: obs.rows.len(),
            action,
            allowed,
            logp_old: 0.0,
            advantage: 0.0,
            value_target: 0.0,
        }
    }
}

/// Batch means of the loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub surrogate: f64,
    pub critic: f64,
    pub entropy: f64,
    /// Mean of `logp_old - logp_new`.
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl LossStats {
    fn add(&mut self, o: &LossStats) {
        self.loss += o.loss;
        self.surrogate += o.surrogate;
        self.critic += o.critic;
        self.entropy += o.entropy;
        self.approx_kl += o.approx_kl;
        self.clip_fraction += o.clip_fraction;
    }

    fn scale(&mut self, k: f64) {
        self.loss *= k;
        self.surrogate *= k;
        self.critic *= k;
        self.entropy *= k;
        self.approx_kl *= k;
        self.clip_fraction *= k;
    }
}

pub fn entropy(p: &[f64; Action::COUNT]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * libm::log(x)).sum::<f64>()
}

/// Per-item loss and its partials w.r.t. logits and value.
fn item_terms(
    trace: &ForwardTrace,
    s: &Sample,
    cfg: &LossConfig,
) -> Result<(LossStats, [f64; Action::COUNT], f64), PolicyError> {
    let p = masked_softmax(&trace.logits, &s.allowed);
    let a = s.action.index();
    if p[a] <= 0.0 {
        return Err(PolicyError::NonFiniteLoss);
    }
    let logp = libm::log(p[a]);
    let ratio = libm::exp(logp - s.logp_old);
    let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
    let (t1, t2) = (ratio * s.advantage, clipped * s.advantage);
    let surrogate = t1.min(t2);
    // the clipped branch is constant in the parameters
    let dsurr_dlogp = if t1 <= t2 { ratio * s.advantage } else { 0.0 };
    let h = entropy(&p);
    let err = trace.value - s.value_target;
    let loss = -surrogate - cfg.entropy_coef * h + cfg.value_coef * err * err;
    if !loss.is_finite() {
        return Err(PolicyError::NonFiniteLoss);
    }

    let mut dlogits = [0.0; Action::COUNT];
    for k in 0..Action::COUNT {
        if !s.allowed[k] {
            continue;
        }
        let dlogp = if k == a { 1.0 - p[k] } else { -p[k] };
        let dh = if p[k] > 0.0 { -p[k] * (libm::log(p[k]) + h) } else { 0.0 };
        dlogits[k] = -dsurr_dlogp * dlogp - cfg.entropy_coef * dh;
    }
    let dvalue = 2.0 * cfg.value_coef * err;
    let stats = LossStats {
        loss,
        surrogate,
        critic: err * err,
        entropy: h,
        approx_kl: s.logp_old - logp,
        clip_fraction: if libm::fabs(ratio - 1.0) > cfg.clip { 1.0 } else { 0.0 },
    };
    Ok((stats, dlogits, dvalue))
}

/// Mean loss over `batch` without gradients.
pub fn ppo_loss(params: &PolicyParams, batch: &[Sample], cfg: &LossConfig) -> Result<LossStats, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let mut total = LossStats::default();
    for s in batch {
        let trace = forward_rows(params, &s.input, s.n)?;
        total.add(&item_terms(&trace, s, cfg)?.0);
    }
    total.scale(1.0 / batch.len() as f64);
    Ok(total)
}

/// Mean loss over `batch` and its exact gradient.
pub fn ppo_gradients<E: ChunkExecutor>(
    params: &PolicyParams,
    batch: &[Sample],
    cfg: &LossConfig,
    exec: &E,
) -> Result<(PolicyParams, LossStats), PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let parts = exec.map_chunks(batch.len(), 16, |range| -> Result<(PolicyParams, LossStats), PolicyError> {
        let mut g = params.zeros_like();
        let mut st = LossStats::default();
        for s in &batch[range] {
            let trace = forward_rows(params, &s.input, s.n)?;
            let (item, dlogits, dvalue) = item_terms(&trace, s, cfg)?;
            st.add(&item);
            backward(params, &trace, &dlogits, dvalue, &mut g);
        }
        Ok((g, st))
    });
    let mut grads = params.zeros_like();
    let mut stats = LossStats::default();
    for part in parts {
        let (g, st) = part?;
        grads.add_assign(&g);
        stats.add(&st);
    }
    let k = 1.0 / batch.len() as f64;
    grads.scale(k);
    stats.scale(k);
    if !grads.is_finite() {
        return Err(PolicyError::NonFiniteLoss);
    }
    Ok((grads, stats))
}

/// Per-item `(log pi(a), entropy, value)` for a batch of observations and actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionEval {
    pub logp: f64,
    pub entropy: f64,
    pub value: f64,
}

pub fn evaluate_actions(
    params: &PolicyParams,
    batch: &[(Observation, Action)],
) -> Result<Vec<ActionEval>, PolicyError> {
    batch
        .iter()
        .map(|(obs, a)| {
            let t = forward_rows(params, &obs.flat(), obs.rows.len())?;
            Ok(ActionEval { logp: libm::log(t.probs[a.index()]), entropy: entropy(&t.probs), value: t.value })
        })
        .collect()
}

/// Same as [`evaluate_actions`] with each item's executor mask applied.
pub fn evaluate_samples(params: &PolicyParams, batch: &[Sample]) -> Result<Vec<ActionEval>, PolicyError> {
    batch
        .iter()
        .map(|s| {
            let t = forward_rows(params, &s.input, s.n)?;
            let p = masked_softmax(&t.logits, &s.allowed);
            Ok(ActionEval { logp: libm::log(p[s.action.index()]), entropy: entropy(&p), value: t.value })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Sample,
    Greedy,
}

/// Draw (or take the argmax of) `probs`; returns the action and its log-probability.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64; Action::COUNT], rng: &mut R, mode: SampleMode) -> (Action, f64) {
    let idx = match mode {
        SampleMode::Greedy => {
            let mut best = 0;
            for k in 1..Action::COUNT {
                if probs[k] > probs[best] {
                    best = k;
                }
            }
            best
        }
        SampleMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = None;
            for (k, &p) in probs.iter().enumerate() {
                acc += p;
                if p > 0.0 && u < acc {
                    pick = Some(k);
                    break;
                }
            }
            // rounding leftovers fall on the last action with mass
            pick.unwrap_or_else(|| probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
        }
    };
    (Action::ALL[idx], libm::log(probs[idx]))
}
