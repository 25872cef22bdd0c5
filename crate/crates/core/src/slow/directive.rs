use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::sim::ScenarioConfig;

/// Structured output of the slow system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub target_lane: usize,
    /// -1 slower, 0 keep, +1 faster.
    pub speed_intent: i8,
    /// In `[0, 1]`.
    pub urgency: f64,
    pub rationale: String,
}

impl Directive {
    /// Keep the current lane at the current pace.
    pub fn neutral(lane: usize) -> Self {
        Directive { target_lane: lane, speed_intent: 0, urgency: 0.0, rationale: "fallback".to_string() }
    }

    pub fn is_neutral_for(&self, lane: usize) -> bool {
        self.target_lane == lane && self.speed_intent == 0
    }

    /// Whether this directive asks for an overtake through the oncoming lane.
    pub fn permits_overtake(&self, config: &ScenarioConfig) -> bool {
        config.oncoming_lane() == Some(self.target_lane) && self.speed_intent == 1
    }

    /// Range checks against a scenario; `None` when valid.
    pub fn range_error(&self, config: &ScenarioConfig) -> Option<&'static str> {
        if self.target_lane >= config.lane_count {
            Some("target_lane outside the road")
        } else if !(-1..=1).contains(&self.speed_intent) {
            Some("speed_intent must be -1, 0 or 1")
        } else if !(0.0..=1.0).contains(&self.urgency) {
            Some("urgency must lie in [0, 1]")
        } else if config.oncoming_lane() == Some(self.target_lane) && self.speed_intent != 1 {
            Some("oncoming lane only with speed_intent 1")
        } else {
            None
        }
    }
}
