use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::WorldState;

/// Ego row plus the five nearest neighbors.
pub const OBS_ROWS: usize = 6;
/// `[x_rel, y_rel, vx_rel, vy_rel, y_des, present]`.
pub const OBS_FEATURES: usize = 6;
pub const Y_DES_COL: usize = 4;
pub const PRESENT_COL: usize = 5;
pub const POS_SCALE: f64 = 100.0;
pub const VEL_SCALE: f64 = 30.0;
const CLIP: f64 = 2.0;

/// Fixed-shape feature matrix handed to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub rows: [[f64; OBS_FEATURES]; OBS_ROWS],
}

impl Observation {
    pub fn zeros() -> Self {
        Observation { rows: [[0.0; OBS_FEATURES]; OBS_ROWS] }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn present_count(&self) -> usize {
        self.rows.iter().filter(|r| r[PRESENT_COL] != 0.0).count()
    }
}

fn clip(v: f64) -> f64 {
    v.clamp(-CLIP, CLIP)
}

/// Observation of the ego with lateral preference `y_des` (meters).
///
/// Neighbors are the nearest background vehicles by Euclidean distance,
/// in ascending order, described relative to the ego. Their `y_des` slot
/// holds their own lateral position since background vehicles keep lanes.
pub fn observe(world: &WorldState, y_des: f64) -> Observation {
    let ego = world.ego();
    let y_scale = world.config.y_scale();
    let mut obs = Observation::zeros();
    obs.rows[0] = [0.0, clip(ego.y / y_scale), 0.0, 0.0, clip(y_des / y_scale), 1.0];

    let mut neighbors: Vec<(f64, u32, usize)> = world
        .vehicles
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_ego)
        .map(|(i, v)| {
            let (dx, dy) = (v.x - ego.x, v.y - ego.y);
            (dx * dx + dy * dy, v.id, i)
        })
        .collect();
    neighbors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    for (row, &(_, _, i)) in obs.rows[1..].iter_mut().zip(&neighbors) {
        let v = &world.vehicles[i];
        *row = [
            clip((v.x - ego.x) / POS_SCALE),
            clip((v.y - ego.y) / y_scale),
            clip((v.vx - ego.vx) / VEL_SCALE),
            clip((v.vy - ego.vy) / VEL_SCALE),
            clip(v.y / y_scale),
            1.0,
        ];
    }
    obs
}
