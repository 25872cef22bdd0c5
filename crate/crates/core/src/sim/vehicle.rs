use serde::{Deserialize, Serialize};

pub const DEFAULT_LENGTH: f64 = 5.0;
pub const DEFAULT_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Oncoming,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Oncoming => -1.0,
        }
    }

    /// Heading of a vehicle travelling straight in this direction.
    pub fn base_heading(self) -> f64 {
        match self {
            Direction::Forward => 0.0,
            Direction::Oncoming => core::f64::consts::PI,
        }
    }
}

/// Continuous control inputs: longitudinal acceleration (m/s^2) and
/// front-wheel steering angle (rad).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub accel: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    /// Longitudinal position of the center, meters.
    pub x: f64,
    /// Lateral position of the center; 0 at the leftmost lane center, rightward positive.
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub heading: f64,
    /// Speed along the heading, m/s (never negative).
    pub speed: f64,
    pub lane: usize,
    pub direction: Direction,
    pub length: f64,
    pub width: f64,
    pub is_ego: bool,
    /// IDM desired speed for background vehicles.
    pub desired_speed: f64,
}

impl VehicleState {
    pub fn new(id: u32, x: f64, lane: usize, lane_width: f64, speed: f64, direction: Direction) -> Self {
        let heading = direction.base_heading();
        VehicleState {
            id,
            x,
            y: lane as f64 * lane_width,
            vx: speed * libm::cos(heading),
            vy: 0.0,
            heading,
            speed,
            lane,
            direction,
            length: DEFAULT_LENGTH,
            width: DEFAULT_WIDTH,
            is_ego: false,
            desired_speed: speed,
        }
    }

    /// Front bumper position along the travel direction.
    pub fn front(&self) -> f64 {
        self.x + self.direction.sign() * self.length / 2.0
    }

    /// Whether the vehicle body laterally overlaps lane `lane`.
    pub fn occupies_lane(&self, lane: usize, lane_width: f64) -> bool {
        libm::fabs(self.y - lane as f64 * lane_width) < (lane_width + self.width) / 2.0
    }
}
