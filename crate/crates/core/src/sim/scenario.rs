use serde::{Deserialize, Serialize};

use super::SimError;

/// Longitudinal position (relative to the ego start) where the merge ramp ends.
pub const MERGE_RAMP_END: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Straight multi-lane highway.
    Highway,
    /// Main carriageway plus a right-side on-ramp that ends at [`MERGE_RAMP_END`].
    Merge,
    /// Two-lane rural road; lane 0 carries oncoming traffic.
    TwoWay,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Highway, ScenarioKind::Merge, ScenarioKind::TwoWay];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Highway => "highway",
            ScenarioKind::Merge => "merge",
            ScenarioKind::TwoWay => "two_way",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "highway" => Some(ScenarioKind::Highway),
            "merge" => Some(ScenarioKind::Merge),
            "two_way" | "two-way" | "twoway" => Some(ScenarioKind::TwoWay),
            _ => None,
        }
    }
}

fn default_lane_width() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub lane_count: usize,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    /// Length of the traffic window kept around the ego vehicle, meters.
    pub road_length: f64,
    /// Episode length, seconds.
    pub episode_horizon: f64,
    /// Background vehicles per km per lane.
    pub traffic_density: f64,
    /// `[v_min, v_max]`, m/s.
    pub speed_limits: [f64; 2],
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn highway(seed: u64) -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Highway,
            lane_count: 4,
            lane_width: 4.0,
            road_length: 1000.0,
            episode_horizon: 40.0,
            traffic_density: 15.0,
            speed_limits: [20.0, 30.0],
            seed,
        }
    }

    pub fn merge(seed: u64) -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Merge,
            lane_count: 3,
            lane_width: 4.0,
            road_length: 1000.0,
            episode_horizon: 40.0,
            traffic_density: 15.0,
            speed_limits: [10.0, 20.0],
            seed,
        }
    }

    pub fn two_way(seed: u64) -> Self {
        ScenarioConfig {
            kind: ScenarioKind::TwoWay,
            lane_count: 2,
            lane_width: 4.0,
            road_length: 1000.0,
            episode_horizon: 40.0,
            traffic_density: 4.0,
            speed_limits: [2.0, 10.0],
            seed,
        }
    }

    pub fn preset(kind: ScenarioKind, seed: u64) -> Self {
        match kind {
            ScenarioKind::Highway => Self::highway(seed),
            ScenarioKind::Merge => Self::merge(seed),
            ScenarioKind::TwoWay => Self::two_way(seed),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.lane_count < 1 {
            return Err(SimError::InvalidConfig("lane_count must be at least 1"));
        }
        if !(self.lane_width > 0.0) {
            return Err(SimError::InvalidConfig("lane_width must be positive"));
        }
        if !(self.road_length > 0.0) {
            return Err(SimError::InvalidConfig("road_length must be positive"));
        }
        if !(self.episode_horizon > 0.0) {
            return Err(SimError::InvalidConfig("episode_horizon must be positive"));
        }
        if !(self.traffic_density >= 0.0) || !self.traffic_density.is_finite() {
            return Err(SimError::InvalidConfig("traffic_density must be non-negative"));
        }
        let [lo, hi] = self.speed_limits;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(SimError::InvalidConfig("speed_limits must satisfy 0 <= v_min < v_max"));
        }
        match self.kind {
            ScenarioKind::Merge if self.lane_count < 2 => {
                Err(SimError::InvalidConfig("merge needs at least one main lane plus the ramp"))
            }
            ScenarioKind::TwoWay if self.lane_count != 2 => {
                Err(SimError::InvalidConfig("two_way roads have exactly two lanes"))
            }
            _ => Ok(()),
        }
    }

    pub fn v_min(&self) -> f64 {
        self.speed_limits[0]
    }

    pub fn v_max(&self) -> f64 {
        self.speed_limits[1]
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        lane as f64 * self.lane_width
    }

    /// Lane index nearest to lateral position `y`, clamped to the road.
    pub fn lane_of(&self, y: f64) -> usize {
        let raw = libm::round(y / self.lane_width);
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.lane_count - 1)
        }
    }

    /// Normalisation constant for lateral positions.
    pub fn y_scale(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    /// Lateral extent `[min, max]` of lane centers.
    pub fn lateral_extent(&self) -> (f64, f64) {
        (0.0, self.lane_center(self.lane_count - 1))
    }

    pub fn decision_steps(&self) -> usize {
        libm::round(self.episode_horizon / super::DECISION_PERIOD) as usize
    }

    /// Lane carrying oncoming traffic, if any.
    pub fn oncoming_lane(&self) -> Option<usize> {
        (self.kind == ScenarioKind::TwoWay).then_some(0)
    }

    /// The merge on-ramp lane, if any.
    pub fn ramp_lane(&self) -> Option<usize> {
        (self.kind == ScenarioKind::Merge).then_some(self.lane_count - 1)
    }

    /// Lanes that stay drivable for the whole episode.
    pub fn through_lanes(&self) -> core::ops::Range<usize> {
        match self.kind {
            ScenarioKind::Merge => 0..self.lane_count - 1,
            _ => 0..self.lane_count,
        }
    }

    /// Whether the ego may be in `lane` at longitudinal position `x`.
    pub fn lane_drivable(&self, lane: usize, x: f64) -> bool {
        if lane >= self.lane_count {
            return false;
        }
        match self.ramp_lane() {
            Some(ramp) if lane == ramp => x < MERGE_RAMP_END,
            _ => true,
        }
    }

    /// Ego starting lane.
    pub fn ego_start_lane(&self) -> usize {
        match self.kind {
            ScenarioKind::Highway => 2.min(self.lane_count - 1),
            ScenarioKind::Merge => self.lane_count - 1,
            ScenarioKind::TwoWay => 1,
        }
    }

    pub fn ego_start_speed(&self) -> f64 {
        match self.kind {
            ScenarioKind::TwoWay => 0.7 * self.v_max(),
            _ => 0.5 * (self.v_min() + self.v_max()),
        }
    }
}
