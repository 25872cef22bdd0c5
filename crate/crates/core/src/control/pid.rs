use crate::sim::{
    idm_acceleration, lateral_steer, Controls, IdmParams, Longitudinal, ScenarioConfig, VehicleState, WorldState,
    MAX_ACCEL,
};

use super::Setpoints;

pub const SPEED_GAIN: f64 = 1.0;

/// One PID tick tracking `sp`: proportional speed control plus the
/// cascaded lateral law (lateral error -> heading reference -> steering).
pub fn pid_step(ego: &VehicleState, sp: &Setpoints, config: &ScenarioConfig) -> Controls {
    let accel = (SPEED_GAIN * (sp.target_speed - ego.speed)).clamp(-MAX_ACCEL, MAX_ACCEL);
    let steer = lateral_steer(ego.y, ego.heading, config.lane_center(sp.target_lane), ego.direction);
    Controls { accel, steer }
}

/// Car-following law bounding the ego acceleration.
pub const FOLLOW: IdmParams = IdmParams { a_max: MAX_ACCEL, b: 3.0, time_headway: 1.0, s0: 2.0, b_max: MAX_ACCEL };

/// Upper bound on the ego acceleration from the nearest leader in every lane
/// the ego occupies or is heading for; `None` on a free road.
pub fn follow_limit(world: &WorldState, sp: &Setpoints) -> Option<f64> {
    let ego = world.ego();
    let cfg = &world.config;
    (0..cfg.lane_count)
        .filter(|&l| l == sp.target_lane || ego.occupies_lane(l, cfg.lane_width))
        .filter_map(|l| world.nearest_in_lane(l, Longitudinal::Ahead))
        .map(|(gap, closing, _)| idm_acceleration(&FOLLOW, ego.speed, f64::INFINITY, Some((gap, closing))))
        .reduce(f64::min)
}

/// PID tick with the car-following bound applied to the acceleration.
pub fn executor_step(world: &WorldState, sp: &Setpoints) -> Controls {
    let mut u = pid_step(world.ego(), sp, &world.config);
    if let Some(limit) = follow_limit(world, sp) {
        u.accel = u.accel.min(limit);
    }
    u
}
