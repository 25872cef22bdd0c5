use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::sim::{Direction, ScenarioKind, WorldState};

/// Neighbors listed in a scene description.
pub const SCENE_NEIGHBORS: usize = 5;

/// Longitudinal position of a neighbor relative to the ego.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelPos {
    FarBehind,
    Behind,
    Abeam,
    Ahead,
    FarAhead,
}

impl RelPos {
    /// Bucket of a longitudinal offset `dx` (meters, positive ahead).
    pub fn of(dx: f64) -> Self {
        if dx < -50.0 {
            RelPos::FarBehind
        } else if dx < -10.0 {
            RelPos::Behind
        } else if dx <= 10.0 {
            RelPos::Abeam
        } else if dx <= 50.0 {
            RelPos::Ahead
        } else {
            RelPos::FarAhead
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelPos::FarBehind => "far behind",
            RelPos::Behind => "behind",
            RelPos::Abeam => "abeam",
            RelPos::Ahead => "ahead",
            RelPos::FarAhead => "far ahead",
        }
    }

    pub fn is_ahead(self) -> bool {
        matches!(self, RelPos::Ahead | RelPos::FarAhead)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborDigest {
    pub pos: RelPos,
    pub lane: usize,
    /// m/s, rounded.
    pub speed: u32,
    pub oncoming: bool,
}

/// The features a scene description is rendered from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDigest {
    pub kind: ScenarioKind,
    pub lane_count: usize,
    pub oncoming_lane: Option<usize>,
    pub ego_lane: usize,
    /// m/s, rounded.
    pub ego_speed: u32,
    /// Nearest first.
    pub neighbors: Vec<NeighborDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneText {
    pub text: String,
    pub digest: SceneDigest,
}

fn round_speed(v: f64) -> u32 {
    libm::round(v.max(0.0)) as u32
}

/// Describe the world around the ego in a fixed template.
pub fn encode_scene(world: &WorldState) -> SceneText {
    let cfg = &world.config;
    let ego = world.ego();
    let mut near: Vec<(f64, u32, usize)> = world
        .vehicles
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_ego)
        .map(|(i, v)| {
            let (dx, dy) = (v.x - ego.x, v.y - ego.y);
            (dx * dx + dy * dy, v.id, i)
        })
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let neighbors = near
        .iter()
        .take(SCENE_NEIGHBORS)
        .map(|&(_, _, i)| {
            let v = &world.vehicles[i];
            NeighborDigest {
                pos: RelPos::of(v.x - ego.x),
                lane: v.lane,
                speed: round_speed(v.speed),
                oncoming: v.direction == Direction::Oncoming,
            }
        })
        .collect();
    let digest = SceneDigest {
        kind: cfg.kind,
        lane_count: cfg.lane_count,
        oncoming_lane: cfg.oncoming_lane(),
        ego_lane: ego.lane,
        ego_speed: round_speed(ego.speed),
        neighbors,
    };
    SceneText { text: render(&digest), digest }
}

/// Text of a digest; equal digests give equal text.
pub fn render(d: &SceneDigest) -> String {
    let road = match d.kind {
        ScenarioKind::Highway => format!("straight highway with {} lanes", d.lane_count),
        ScenarioKind::Merge => {
            format!("main road with {} lanes, lane {} is an on-ramp", d.lane_count, d.lane_count - 1)
        }
        ScenarioKind::TwoWay => format!("two-way road, lane {} carries oncoming traffic", d.oncoming_lane.unwrap_or(0)),
    };
    let mut s = format!("scenario: {road}\nego in lane {} at {} m/s\n", d.ego_lane, d.ego_speed);
    if d.neighbors.is_empty() {
        s.push_str("no nearby vehicles\n");
    }
    for n in &d.neighbors {
        let kind = if n.oncoming { "oncoming vehicle" } else { "vehicle" };
        let _ = writeln!(s, "{kind} {} in lane {} at {} m/s", n.pos.as_str(), n.lane, n.speed);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_scenario, ScenarioConfig, VehicleState};

    fn lone() -> WorldState {
        let mut c = ScenarioConfig::highway(1);
        c.traffic_density = 0.0;
        build_scenario(&c).unwrap()
    }

    #[test]
    fn lone_ego() {
        let s = encode_scene(&lone());
        assert!(s.text.contains("ego in lane 2 at 25 m/s"), "{}", s.text);
        assert!(s.text.contains("no nearby vehicles"));
    }

    #[test]
    fn deterministic() {
        let w = build_scenario(&ScenarioConfig::highway(9)).unwrap();
        assert_eq!(encode_scene(&w), encode_scene(&w.clone()));
    }

    #[test]
    fn seven_neighbors_nearest_first() {
        let mut w = lone();
        let offsets = [90.0, -70.0, 30.0, 5.0, -20.0, 60.0, 15.0];
        for (i, &dx) in offsets.iter().enumerate() {
            w.vehicles.push(VehicleState::new(i as u32 + 1, dx, 1, 4.0, 20.0 + i as f64, Direction::Forward));
        }
        let s = encode_scene(&w);
        let lines: Vec<&str> = s.text.lines().filter(|l| l.starts_with("vehicle")).collect();
        assert_eq!(lines.len(), 5);
        // lateral offset is one lane for all of them, so order follows |dx|
        let mut by_dist: Vec<(f64, usize)> = offsets.iter().enumerate().map(|(i, d)| (d * d + 16.0, i)).collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (line, &(_, i)) in lines.iter().zip(&by_dist) {
            assert!(line.contains(RelPos::of(offsets[i]).as_str()));
            assert!(line.ends_with(&format!("at {} m/s", 20 + i)), "{line}");
        }
    }

    #[test]
    fn buckets() {
        assert_eq!(RelPos::of(-80.0), RelPos::FarBehind);
        assert_eq!(RelPos::of(-10.0), RelPos::Abeam);
        assert_eq!(RelPos::of(10.0), RelPos::Abeam);
        assert_eq!(RelPos::of(10.5), RelPos::Ahead);
        assert_eq!(RelPos::of(51.0), RelPos::FarAhead);
    }
}
