use serde::{Deserialize, Serialize};

use super::{WorldState, DECISION_PERIOD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub collision: f64,
    pub efficiency: f64,
    pub comfort: f64,
    pub preference: f64,
    /// Acceleration normaliser for the comfort term, m/s^2.
    pub accel_scale: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { collision: 10.0, efficiency: 0.4, comfort: 0.1, preference: 0.5, accel_scale: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub safe: f64,
    pub eff: f64,
    pub comfort: f64,
    pub pref: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(safe: f64, eff: f64, comfort: f64, pref: f64) -> Self {
        RewardBreakdown { safe, eff, comfort, pref, total: safe + eff + comfort + pref }
    }
}

/// Reward of the decision step `before -> after`.
///
/// The comfort term compares the mean longitudinal acceleration of this
/// step with `prev_accel` (that of the previous step). Returns the
/// breakdown and this step's acceleration.
pub fn compute_reward(
    before: &WorldState,
    after: &WorldState,
    prev_accel: f64,
    y_des: f64,
    weights: &RewardWeights,
) -> (RewardBreakdown, f64) {
    let cfg = &after.config;
    let ego = after.ego();
    let accel = (ego.vx - before.ego().vx) / DECISION_PERIOD;

    let safe = if after.collided && !before.collided { -weights.collision } else { 0.0 };
    let speed_frac = ((ego.vx - cfg.v_min()) / (cfg.v_max() - cfg.v_min())).clamp(0.0, 1.0);
    let eff = weights.efficiency * speed_frac;
    let comfort = -weights.comfort * libm::fabs(accel - prev_accel) / weights.accel_scale;
    let align = 1.0 - libm::fabs(ego.y - y_des) / (2.0 * cfg.lane_width);
    let pref = weights.preference * f64::max(0.0, align);
    (RewardBreakdown::new(safe, eff, comfort, pref), accel)
}
