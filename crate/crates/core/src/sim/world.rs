use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{rectangles_overlap, Rect};
use super::idm::{background_policy, wrap_angle, IDM};
use super::{Controls, Direction, ScenarioConfig, ScenarioKind, SimError, VehicleState, MERGE_RAMP_END};
use crate::rng::{rng_from_seed, SimRng};

pub const SIM_DT: f64 = 0.1;
pub const DECISION_PERIOD: f64 = 1.0;
pub const SUBSTEPS_PER_DECISION: usize = 10;
pub const MAX_ACCEL: f64 = 5.0;
pub const MAX_STEER: f64 = 0.5;

/// Full simulator state `s_t`. Cloning a world forks it, generator included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub config: ScenarioConfig,
    pub tick: u64,
    pub time: f64,
    /// Ego first, then background vehicles in spawn order.
    pub vehicles: Vec<VehicleState>,
    pub ego_id: u32,
    pub collided: bool,
    pub rng: SimRng,
    pub next_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Longitudinal {
    Ahead,
    Behind,
}

fn spawn_speed(rng: &mut SimRng, config: &ScenarioConfig) -> f64 {
    let v_max = config.v_max();
    rng.gen_range(0.7 * v_max..=v_max)
}

/// Whether a vehicle at `(lane, x)` driving at `speed` keeps a safe
/// spacing to everything already placed.
fn spacing_ok(existing: &[VehicleState], skip_id: Option<u32>, lane: usize, x: f64, speed: f64) -> bool {
    existing.iter().filter(|v| Some(v.id) != skip_id).all(|v| {
        let dx = libm::fabs(v.x - x);
        if v.lane == lane {
            dx >= v.length + IDM.s0 + f64::max(v.speed, speed)
        } else if v.is_ego {
            dx >= v.length + IDM.s0
        } else {
            true
        }
    })
}

fn background_lanes(config: &ScenarioConfig) -> Vec<(usize, Direction)> {
    match config.kind {
        ScenarioKind::Highway => (0..config.lane_count).map(|l| (l, Direction::Forward)).collect(),
        ScenarioKind::Merge => config.through_lanes().map(|l| (l, Direction::Forward)).collect(),
        ScenarioKind::TwoWay => alloc::vec![(0, Direction::Oncoming), (1, Direction::Forward)],
    }
}

/// Build the initial world for `config`.
///
/// The ego starts at `x = 0` (highway: lane 2, merge: on the ramp, two-way:
/// behind a slower leader). Background vehicles are Poisson-spaced per lane
/// at the configured density with speeds uniform in `[0.7 v_max, v_max]`.
pub fn build_scenario(config: &ScenarioConfig) -> Result<WorldState, SimError> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let w = config.lane_width;
    let mut ego = VehicleState::new(0, 0.0, config.ego_start_lane(), w, config.ego_start_speed(), Direction::Forward);
    ego.is_ego = true;
    let mut vehicles = alloc::vec![ego];
    let mut next_id = 1;

    if config.kind == ScenarioKind::TwoWay {
        let speed = 0.4 * config.v_max();
        vehicles.push(VehicleState::new(next_id, 25.0, 1, w, speed, Direction::Forward));
        next_id += 1;
    }

    if config.traffic_density > 0.0 {
        let half = config.road_length / 2.0;
        let mean_gap = 1000.0 / config.traffic_density;
        for (lane, direction) in background_lanes(config) {
            let mut x = -half;
            loop {
                let u: f64 = rng.gen();
                x += -mean_gap * libm::log(1.0 - u);
                if x >= half {
                    break;
                }
                let speed = spawn_speed(&mut rng, config);
                if spacing_ok(&vehicles, None, lane, x, speed) {
                    vehicles.push(VehicleState::new(next_id, x, lane, w, speed, direction));
                    next_id += 1;
                }
            }
        }
        if let Some(lane) = config.oncoming_lane() {
            if !vehicles.iter().any(|v| v.direction == Direction::Oncoming) {
                let speed = spawn_speed(&mut rng, config);
                let mut x = half - 20.0;
                while !spacing_ok(&vehicles, None, lane, x, speed) {
                    x -= 20.0;
                }
                vehicles.push(VehicleState::new(next_id, x, lane, w, speed, Direction::Oncoming));
                next_id += 1;
            }
        }
    }

    Ok(WorldState { config: config.clone(), tick: 0, time: 0.0, vehicles, ego_id: 0, collided: false, rng, next_id })
}

fn integrate(v: &mut VehicleState, c: Controls, dt: f64, config: &ScenarioConfig) {
    let beta = libm::atan(0.5 * libm::tan(c.steer));
    let (s, co) = libm::sincos(v.heading + beta);
    v.x += v.speed * co * dt;
    v.y += v.speed * s * dt;
    v.heading = wrap_angle(v.heading + v.speed * libm::sin(beta) / (v.length / 2.0) * dt);
    v.speed = f64::max(0.0, v.speed + c.accel * dt);
    let (hs, hc) = libm::sincos(v.heading);
    v.vx = v.speed * hc;
    v.vy = v.speed * hs;
    v.lane = config.lane_of(v.y);
}

impl WorldState {
    pub fn ego(&self) -> &VehicleState {
        &self.vehicles[0]
    }

    pub fn vehicle(&self, id: u32) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn background(&self) -> impl Iterator<Item = &VehicleState> {
        self.vehicles.iter().filter(|v| !v.is_ego)
    }

    /// Advance by `dt` with the given ego controls (saturated to the
    /// actuator limits). Background vehicles follow [`background_policy`].
    pub fn step(&mut self, ego_controls: Controls, dt: f64) {
        let ego_controls = Controls {
            accel: ego_controls.accel.clamp(-MAX_ACCEL, MAX_ACCEL),
            steer: ego_controls.steer.clamp(-MAX_STEER, MAX_STEER),
        };
        let controls: Vec<Controls> = self
            .vehicles
            .iter()
            .map(|v| if v.is_ego { ego_controls } else { background_policy(self, v.id).unwrap_or_default() })
            .collect();
        let config = self.config.clone();
        for (v, c) in self.vehicles.iter_mut().zip(controls) {
            integrate(v, c, dt, &config);
        }
        if !self.collided && self.ego_in_collision() {
            self.collided = true;
        }
        self.recycle();
        self.tick += 1;
        self.time = self.tick as f64 * dt;
    }

    fn ego_in_collision(&self) -> bool {
        let ego = self.ego();
        let ego_rect = Rect::of(ego);
        if self.background().any(|v| rectangles_overlap(&ego_rect, &Rect::of(v))) {
            return true;
        }
        if let Some(ramp) = self.config.ramp_lane() {
            let ramp_left_edge = self.config.lane_center(ramp) - self.config.lane_width / 2.0;
            let nose = ego.x + ego.length / 2.0;
            if nose >= MERGE_RAMP_END && ego.y + ego.width / 2.0 > ramp_left_edge {
                return true;
            }
        }
        false
    }

    /// Background vehicles leaving the window around the ego re-enter at
    /// the opposite end with a fresh speed, or are dropped if that spot is taken.
    fn recycle(&mut self) {
        let half = self.config.road_length / 2.0;
        let ego_x = self.ego().x;
        let mut drop = Vec::new();
        for i in 1..self.vehicles.len() {
            let dx = self.vehicles[i].x - ego_x;
            let shift = if dx > half {
                -self.config.road_length
            } else if dx < -half {
                self.config.road_length
            } else {
                continue;
            };
            let speed = spawn_speed(&mut self.rng, &self.config);
            let (id, lane, direction, x) = {
                let v = &self.vehicles[i];
                (v.id, v.lane, v.direction, v.x + shift)
            };
            if spacing_ok(&self.vehicles, Some(id), lane, x, speed) {
                let mut fresh = VehicleState::new(id, x, lane, self.config.lane_width, speed, direction);
                fresh.length = self.vehicles[i].length;
                fresh.width = self.vehicles[i].width;
                self.vehicles[i] = fresh;
            } else {
                drop.push(id);
            }
        }
        if !drop.is_empty() {
            self.vehicles.retain(|v| !drop.contains(&v.id));
        }
    }

    /// Nearest vehicle (or merge barrier) in `lane` ahead of / behind the ego,
    /// as `(bumper gap, closing speed, vehicle id)`. The barrier has no id.
    pub fn nearest_in_lane(&self, lane: usize, side: Longitudinal) -> Option<(f64, f64, Option<u32>)> {
        let ego = self.ego();
        let w = self.config.lane_width;
        let mut best: Option<(f64, f64, Option<u32>)> = None;
        for v in self.background() {
            if !v.occupies_lane(lane, w) {
                continue;
            }
            let dx = v.x - ego.x;
            let (gap, closing) = match side {
                Longitudinal::Ahead if dx > 0.0 => (dx - (ego.length + v.length) / 2.0, ego.vx - v.vx),
                Longitudinal::Behind if dx <= 0.0 => (-dx - (ego.length + v.length) / 2.0, v.vx - ego.vx),
                _ => continue,
            };
            if best.is_none_or(|(g, _, _)| gap < g) {
                best = Some((gap, closing, Some(v.id)));
            }
        }
        if side == Longitudinal::Ahead && self.config.ramp_lane() == Some(lane) {
            let gap = MERGE_RAMP_END - (ego.x + ego.length / 2.0);
            if gap > -ego.length && best.is_none_or(|(g, _, _)| gap < g) {
                best = Some((gap, ego.vx, None));
            }
        }
        best
    }
}

/// Functional form of [`WorldState::step`].
pub fn step_world(world: &WorldState, ego_controls: Controls, dt: f64) -> WorldState {
    let mut next = world.clone();
    next.step(ego_controls, dt);
    next
}

/// Time to collision with the nearest vehicle in `lane` on `side` of the
/// ego; `+inf` when there is none or it is not closing.
pub fn compute_ttc(world: &WorldState, lane: usize, side: Longitudinal) -> f64 {
    match world.nearest_in_lane(lane, side) {
        None => f64::INFINITY,
        Some((gap, _, _)) if gap <= 0.0 => 0.0,
        Some((_, closing, _)) if closing <= 0.0 => f64::INFINITY,
        Some((gap, closing, _)) => gap / closing,
    }
}
