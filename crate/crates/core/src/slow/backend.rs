use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::embed::tokens;
use super::parse::render_directive_block;
use super::prompt::Prompt;
use super::scene::{RelPos, SceneDigest};
use super::Directive;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("empty response")]
    EmptyResponse,
}

/// Something that answers prompts.
pub trait LlmBackend {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for alloc::boxed::Box<B> {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

/// Which rule of the stub table fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubRule {
    Faster,
    Careful,
    ExplicitLane,
    Neutral,
}

const FASTER: [&str; 7] = ["hurry", "fast", "faster", "late", "quick", "quickly", "rush"];
const CAREFUL: [&str; 6] = ["careful", "carefully", "safe", "safely", "slow", "slower"];

/// Followed vehicle counts as slow if it is at most this much faster, m/s.
const SLOW_MARGIN: u32 = 1;

fn slow_leader_in(d: &SceneDigest, lane: usize, bucket: &[RelPos]) -> bool {
    d.neighbors
        .iter()
        .any(|n| !n.oncoming && n.lane == lane && bucket.contains(&n.pos) && n.speed <= d.ego_speed + SLOW_MARGIN)
}

fn lane_busy(d: &SceneDigest, lane: usize) -> bool {
    d.neighbors.iter().any(|n| n.lane == lane && matches!(n.pos, RelPos::Abeam | RelPos::Ahead))
}

/// Lane the stub recommends for going faster.
///
/// On a two-way road: the oncoming lane while a slow vehicle is ahead (or
/// still being passed), the own lane otherwise. On multi-lane roads: the
/// first free neighboring lane (left before right) when a slow vehicle is
/// ahead, else the current lane.
pub fn best_overtaking_lane(d: &SceneDigest) -> usize {
    if let Some(oncoming) = d.oncoming_lane {
        let home = if oncoming == 0 { 1 } else { 0 };
        return if d.ego_lane == oncoming {
            if slow_leader_in(d, home, &[RelPos::Abeam]) {
                oncoming
            } else {
                home
            }
        } else if slow_leader_in(d, home, &[RelPos::Ahead]) {
            oncoming
        } else {
            home
        };
    }
    if !slow_leader_in(d, d.ego_lane, &[RelPos::Ahead]) {
        return d.ego_lane;
    }
    let left = d.ego_lane.checked_sub(1);
    let right = (d.ego_lane + 1 < d.lane_count).then_some(d.ego_lane + 1);
    [left, right].into_iter().flatten().find(|&l| !lane_busy(d, l)).unwrap_or(d.ego_lane)
}

fn explicit_lane(words: &[String], ego_lane: usize) -> Option<usize> {
    for (i, w) in words.iter().enumerate() {
        if w != "lane" {
            continue;
        }
        if let Some(n) = words.get(i + 1).and_then(|n| n.parse::<usize>().ok()) {
            return Some(n);
        }
        match i.checked_sub(1).map(|j| words[j].as_str()) {
            Some("left") => return Some(ego_lane.saturating_sub(1)),
            Some("right") => return Some(ego_lane + 1),
            _ => {}
        }
    }
    None
}

/// Apply the stub rule table to an instruction in a scene.
pub fn stub_rule(instruction: &str, d: &SceneDigest) -> (StubRule, Directive) {
    let words: Vec<String> = tokens(instruction).collect();
    let has = |set: &[&str]| words.iter().any(|w| set.contains(&w.as_str()));
    if has(&FASTER) {
        let lane = best_overtaking_lane(d);
        let why = if lane == d.ego_lane { "keep lane and speed up" } else { "overtake the slower traffic ahead" };
        (StubRule::Faster, Directive { target_lane: lane, speed_intent: 1, urgency: 0.8, rationale: why.to_string() })
    } else if has(&CAREFUL) {
        let d = Directive {
            target_lane: d.ego_lane,
            speed_intent: -1,
            urgency: 0.3,
            rationale: "keep lane and slow down".into(),
        };
        (StubRule::Careful, d)
    } else if let Some(lane) = explicit_lane(&words, d.ego_lane) {
        let d =
            Directive { target_lane: lane, speed_intent: 0, urgency: 0.5, rationale: format!("move to lane {lane}") };
        (StubRule::ExplicitLane, d)
    } else {
        let d = Directive {
            target_lane: d.ego_lane,
            speed_intent: 0,
            urgency: 0.0,
            rationale: "no change requested".into(),
        };
        (StubRule::Neutral, d)
    }
}

/// Deterministic offline backend: a rule table over the instruction text.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend;

impl LlmBackend for StubBackend {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        let d = &prompt.digest;
        let (rule, directive) = stub_rule(&prompt.instruction, d);
        let ahead = d.neighbors.iter().filter(|n| n.pos.is_ahead() && !n.oncoming).count();
        let oncoming = d.neighbors.iter().filter(|n| n.oncoming).count();
        let reading = match rule {
            StubRule::Faster => "the passenger wants to arrive sooner",
            StubRule::Careful => "the passenger wants a calmer ride",
            StubRule::ExplicitLane => "the passenger names a lane",
            StubRule::Neutral => "the request does not ask for a change",
        };
        Ok(format!(
            "Step 1: the ego is in lane {} at {} m/s with {ahead} vehicle(s) ahead and {oncoming} oncoming.\n\
             Step 2: {reading}.\n\
             Step 3: {}.\n\
             {}\n",
            d.ego_lane,
            d.ego_speed,
            directive.rationale,
            render_directive_block(&directive)
        ))
    }
}
