//! Background traffic: IDM car-following plus lane keeping.
//!
//! Background vehicles never change lanes.

use super::{Controls, Direction, SimError, VehicleState, WorldState, MAX_STEER};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub a_max: f64,
    /// Comfortable deceleration.
    pub b: f64,
    pub time_headway: f64,
    pub s0: f64,
    /// Hard braking limit applied to the IDM output.
    pub b_max: f64,
}

pub const IDM: IdmParams = IdmParams { a_max: 3.0, b: 2.0, time_headway: 1.5, s0: 2.0, b_max: 9.0 };

/// IDM acceleration for speed `v` and desired speed `v0`, with an optional
/// leader given as `(bumper gap, closing speed)`.
pub fn idm_acceleration(p: &IdmParams, v: f64, v0: f64, leader: Option<(f64, f64)>) -> f64 {
    let ratio = if v0 > 0.0 { v / v0 } else { 1.0 };
    let mut accel = 1.0 - ratio * ratio * ratio * ratio;
    if let Some((gap, closing)) = leader {
        let s_star = p.s0 + f64::max(0.0, v * p.time_headway + v * closing / (2.0 * libm::sqrt(p.a_max * p.b)));
        let s = f64::max(gap, 0.01);
        accel -= (s_star / s) * (s_star / s);
    }
    (p.a_max * accel).clamp(-p.b_max, p.a_max)
}

pub(crate) const LATERAL_GAIN: f64 = 0.3;
pub(crate) const HEADING_GAIN: f64 = 2.0;
pub(crate) const MAX_HEADING_REF: f64 = core::f64::consts::FRAC_PI_6;

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut r = libm::fmod(a + core::f64::consts::PI, two_pi);
    if r < 0.0 {
        r += two_pi;
    }
    r - core::f64::consts::PI
}

/// Cascaded lateral law: lateral error to heading reference, heading error to steering.
pub fn lateral_steer(y: f64, heading: f64, y_target: f64, direction: Direction) -> f64 {
    let tilt = (LATERAL_GAIN * (y_target - y)).clamp(-MAX_HEADING_REF, MAX_HEADING_REF);
    let heading_ref = match direction {
        Direction::Forward => tilt,
        Direction::Oncoming => core::f64::consts::PI - tilt,
    };
    (HEADING_GAIN * wrap_angle(heading_ref - heading)).clamp(-MAX_STEER, MAX_STEER)
}

/// Nearest vehicle ahead of `me` along its travel direction in its lane,
/// as `(bumper gap, closing speed)`.
pub(crate) fn leader_of(world: &WorldState, me: &VehicleState) -> Option<(f64, f64)> {
    let dir = me.direction.sign();
    let lane_width = world.config.lane_width;
    let mut best: Option<(f64, f64)> = None;
    for other in &world.vehicles {
        if other.id == me.id || !other.occupies_lane(me.lane, lane_width) {
            continue;
        }
        let ahead = dir * (other.x - me.x);
        if ahead <= 0.0 {
            continue;
        }
        let gap = ahead - (me.length + other.length) / 2.0;
        let closing = dir * me.vx - dir * other.vx;
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, closing));
        }
    }
    best
}

/// Controls of background vehicle `vehicle_id`.
pub fn background_policy(world: &WorldState, vehicle_id: u32) -> Result<Controls, SimError> {
    let me =
        world.vehicles.iter().find(|v| v.id == vehicle_id && !v.is_ego).ok_or(SimError::UnknownVehicle(vehicle_id))?;
    let accel = idm_acceleration(&IDM, me.speed, me.desired_speed, leader_of(world, me));
    let steer = lateral_steer(me.y, me.heading, world.config.lane_center(me.lane), me.direction);
    Ok(Controls { accel, steer })
}
