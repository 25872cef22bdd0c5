use core::fmt;

use serde::{Deserialize, Serialize};

use crate::sim::ScenarioConfig;

/// Change of target speed per SlowDown/SpeedUp, m/s.
pub const SPEED_STEP: f64 = 2.5;

/// High-level discrete action. The numeric encoding is part of the
/// checkpoint format and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Action {
    SlowDown = 0,
    Cruise = 1,
    SpeedUp = 2,
    TurnLeft = 3,
    TurnRight = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] =
        [Action::SlowDown, Action::Cruise, Action::SpeedUp, Action::TurnLeft, Action::TurnRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::SlowDown => "slow_down",
            Action::Cruise => "cruise",
            Action::SpeedUp => "speed_up",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
        }
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, Action::TurnLeft | Action::TurnRight)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Targets tracked by the low-level controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    pub target_speed: f64,
    pub target_lane: usize,
}

/// Apply a discrete action to the current setpoints, saturating at the
/// speed limits and the road edges.
pub fn map_action(action: Action, current: Setpoints, config: &ScenarioConfig) -> Setpoints {
    let v_max = config.v_max();
    let last_lane = config.lane_count - 1;
    let mut next = current;
    match action {
        Action::Cruise => {}
        Action::SlowDown => next.target_speed = (current.target_speed - SPEED_STEP).clamp(0.0, v_max),
        Action::SpeedUp => next.target_speed = (current.target_speed + SPEED_STEP).clamp(0.0, v_max),
        Action::TurnLeft => next.target_lane = current.target_lane.saturating_sub(1),
        Action::TurnRight => next.target_lane = (current.target_lane + 1).min(last_lane),
    }
    next
}
