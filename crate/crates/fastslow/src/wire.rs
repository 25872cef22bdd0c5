//! Websocket message schemas, protocol `v1`.
//!
//! Every frame is one JSON object:
//!
//! ```json
//! {"v": "v1", "session": "s-1f2e", "seq": 17, "type": "state", "payload": {...}}
//! ```
//!
//! Server to client: `state`, `directive`, `mask_event`, `instruction`
//! (echo of accepted user text), `metrics`. Client to server:
//! `instruction` and `control`; `session` and `seq` may be omitted there.

use fastslow_core::control::RejectReason;
use fastslow_core::sim::{Direction, RewardBreakdown};
use fastslow_core::slow::DirectiveSource;
use fastslow_core::{Action, Directive, ScenarioKind, VehicleState};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub v: String,
    #[serde(default)]
    pub session: String,
    #[serde(default)]
    pub seq: u64,
    #[serde(flatten)]
    pub body: WireBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum WireBody {
    State(StatePayload),
    Directive(DirectivePayload),
    MaskEvent(MaskEventPayload),
    Instruction(InstructionPayload),
    Metrics(MetricsPayload),
    Control(ControlPayload),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    /// State after a full decision period.
    Decision,
    /// Intermediate simulator tick (10 Hz), for display only.
    Tick,
    /// Full state sent to a client when it joins.
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub lane: usize,
    pub direction: Direction,
    pub length: f64,
    pub width: f64,
    pub is_ego: bool,
}

impl From<&VehicleState> for VehicleView {
    fn from(v: &VehicleState) -> Self {
        VehicleView {
            id: v.id,
            x: v.x,
            y: v.y,
            heading: v.heading,
            speed: v.speed,
            lane: v.lane,
            direction: v.direction,
            length: v.length,
            width: v.width,
            is_ego: v.is_ego,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadView {
    pub kind: ScenarioKind,
    pub lane_count: usize,
    pub lane_width: f64,
    pub oncoming_lane: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub frame: FrameKind,
    pub episode: u64,
    pub seed: u64,
    pub tick: u64,
    pub time: f64,
    pub decision: usize,
    pub road: RoadView,
    pub vehicles: Vec<VehicleView>,
    pub collided: bool,
    pub done: bool,
    pub paused: bool,
    /// Reward of the decision that just ended (decision frames only).
    pub reward: Option<RewardBreakdown>,
    pub y_des: f64,
    /// Target lane of the active directive.
    pub directive_lane: Option<usize>,
    pub pending_directive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectivePayload {
    pub time: f64,
    pub instruction: String,
    pub directive: Directive,
    pub source: DirectiveSource,
    /// Errors of failed attempts; non-empty for a fallback.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskCandidate {
    Action(Action),
    /// The lane change a directive asked for.
    Directive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEventPayload {
    pub time: f64,
    pub candidate: MaskCandidate,
    /// `rejected`, `deferred` or `expired`.
    pub verdict: String,
    pub reason: Option<RejectReason>,
    /// Action actually executed instead, for rejected policy choices.
    pub executed: Option<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionPayload {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsPayload {
    pub episode: u64,
    pub avg_speed: f64,
    pub accel_variability: f64,
    pub min_ttc: Option<f64>,
    pub max_speed: f64,
    pub min_speed: f64,
    pub episodes_done: u64,
    pub collisions: u64,
    /// Collision-free episodes in a row.
    pub success_streak: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCommand {
    Pause,
    Resume,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPayload {
    pub command: ControlCommand,
    /// Episode seed for `reset`; the current one when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl WireMessage {
    pub fn new(session: &str, seq: u64, body: WireBody) -> Self {
        WireMessage { v: PROTOCOL_VERSION.into(), session: session.into(), seq, body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InboundError {
    Malformed(String),
    Version(String),
    /// A server-only message type.
    Unexpected(&'static str),
}

/// Parse a client frame; only `instruction` and `control` are accepted.
pub fn parse_inbound(text: &str) -> Result<WireBody, InboundError> {
    let msg: WireMessage = serde_json::from_str(text).map_err(|e| InboundError::Malformed(e.to_string()))?;
    if msg.v != PROTOCOL_VERSION {
        return Err(InboundError::Version(msg.v));
    }
    match msg.body {
        b @ (WireBody::Instruction(_) | WireBody::Control(_)) => Ok(b),
        WireBody::State(_) => Err(InboundError::Unexpected("state")),
        WireBody::Directive(_) => Err(InboundError::Unexpected("directive")),
        WireBody::MaskEvent(_) => Err(InboundError::Unexpected("mask_event")),
        WireBody::Metrics(_) => Err(InboundError::Unexpected("metrics")),
    }
}
