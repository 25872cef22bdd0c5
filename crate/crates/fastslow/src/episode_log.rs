//! JSON-lines episode logs and bit-exact replay.
//!
//! Line 1 is a [`LogHeader`]; every further line is one simulator tick
//! ([`SimStep`]). Floats are written with round-trip precision, so a log
//! re-simulated from its header and controls must reproduce every
//! recorded vehicle state bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fastslow_core::control::{safety_mask, RejectReason, Verdict};
use fastslow_core::episode::{DriveSession, StepOutcome};
use fastslow_core::sim::{build_scenario, Controls, RewardBreakdown, SIM_DT};
use fastslow_core::trainer::{run_episode_observed, Director, EpisodeObserver, EpisodeRecord, Pilot};
use fastslow_core::{Action, ScenarioConfig, Setpoints, VehicleState, WorldState};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    /// Scenario with the episode seed; rebuilding it gives the initial world.
    pub scenario: ScenarioConfig,
    pub mask: bool,
    pub pilot: String,
    pub instruction: Option<String>,
    pub y_des: f64,
    pub vehicles: Vec<VehicleState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskEvent {
    pub candidate: Action,
    pub allowed: bool,
    pub reason: Option<RejectReason>,
}

/// Mask verdicts for every candidate in the current state.
pub fn mask_events(session: &DriveSession) -> Vec<MaskEvent> {
    let ctx = session.mask_context();
    Action::ALL
        .iter()
        .map(|&candidate| match safety_mask(&ctx, candidate) {
            Verdict::Allowed => MaskEvent { candidate, allowed: true, reason: None },
            Verdict::Rejected(r) => MaskEvent { candidate, allowed: false, reason: Some(r) },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionInfo {
    pub index: usize,
    pub action: Action,
    pub y_des: f64,
    pub setpoints: Setpoints,
    /// Empty when the mask is off.
    pub mask: Vec<MaskEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStep {
    pub tick: u64,
    pub time: f64,
    /// Ego controls applied during this tick.
    pub controls: Controls,
    /// All vehicles after the tick.
    pub vehicles: Vec<VehicleState>,
    pub collided: bool,
    /// Set on the first tick of a decision period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionInfo>,
    /// Set on the last tick of a decision period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardBreakdown>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub steps: Vec<SimStep>,
}

/// Collects an [`EpisodeLog`] while an episode runs.
#[derive(Debug, Default)]
pub struct Recorder {
    pub header: Option<LogHeader>,
    pub steps: Vec<SimStep>,
    pending: Option<DecisionInfo>,
}

impl EpisodeObserver for Recorder {
    fn on_start(&mut self, session: &DriveSession) {
        self.header = Some(LogHeader {
            version: LOG_VERSION,
            scenario: session.world.config.clone(),
            mask: session.mask_enabled,
            pilot: String::new(),
            instruction: None,
            y_des: session.y_des,
            vehicles: session.world.vehicles.clone(),
        });
        self.steps.clear();
    }

    fn on_decision(&mut self, session: &DriveSession, action: Action) {
        self.pending = Some(DecisionInfo {
            index: session.decisions,
            action,
            y_des: session.y_des,
            setpoints: session.setpoints,
            mask: if session.mask_enabled { mask_events(session) } else { Vec::new() },
        });
    }

    fn on_substep(&mut self, world: &WorldState, controls: Controls) {
        self.steps.push(SimStep {
            tick: world.tick,
            time: world.time,
            controls,
            vehicles: world.vehicles.clone(),
            collided: world.collided,
            decision: self.pending.take(),
            reward: None,
        });
    }

    fn on_outcome(&mut self, _: &DriveSession, outcome: &StepOutcome) {
        if let Some(last) = self.steps.last_mut() {
            last.reward = Some(outcome.reward);
        }
    }
}

/// Play one episode and log every tick.
pub fn record_episode(
    pilot: Pilot<'_>,
    env: &ScenarioConfig,
    director: &mut dyn Director,
    seed: u64,
    mask: bool,
    pilot_name: &str,
    instruction: Option<&str>,
) -> Result<(EpisodeLog, EpisodeRecord)> {
    let mut rec = Recorder::default();
    let (_, record) = run_episode_observed(pilot, env, director, seed, mask, &mut rec)?;
    let mut header = rec.header.ok_or_else(|| Error::BadLog("episode never started".into()))?;
    header.pilot = pilot_name.to_string();
    header.instruction = instruction.map(str::to_string);
    Ok((EpisodeLog { header, steps: rec.steps }, record))
}

pub fn write_log(path: &Path, log: &EpisodeLog) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut w, &log.header)?;
    w.write_all(b"\n").map_err(io)?;
    for s in &log.steps {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read a log. A final line cut off mid-record is dropped; the flag in the
/// result tells whether that happened.
pub fn read_log(path: &Path) -> Result<(EpisodeLog, bool)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    let mut reader = BufReader::new(file);
    loop {
        let mut line = String::new();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        lines.push(line);
    }
    let mut truncated = false;
    if let Some(last) = lines.last() {
        if !last.ends_with('\n') && serde_json::from_str::<SimStep>(last).is_err() {
            lines.pop();
            truncated = true;
        }
    }
    let mut it = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = it.next().ok_or_else(|| Error::BadLog(format!("{}: empty log", path.display())))?;
    let header: LogHeader =
        serde_json::from_str(first).map_err(|e| Error::BadLog(format!("{}: header: {e}", path.display())))?;
    if header.version != LOG_VERSION {
        return Err(Error::BadLog(format!("{}: unsupported version {}", path.display(), header.version)));
    }
    let steps = it
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::BadLog(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect::<Result<Vec<SimStep>>>()?;
    Ok((EpisodeLog { header, steps }, truncated))
}

/// Where a replay first disagreed with the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    /// 0 for the initial state, `i` for the i-th logged tick.
    pub step: usize,
    pub tick: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub steps_checked: usize,
    pub divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.divergence.is_none()
    }
}

fn float_fields(v: &VehicleState) -> [(&'static str, f64); 9] {
    [
        ("x", v.x),
        ("y", v.y),
        ("vx", v.vx),
        ("vy", v.vy),
        ("heading", v.heading),
        ("speed", v.speed),
        ("length", v.length),
        ("width", v.width),
        ("desired_speed", v.desired_speed),
    ]
}

/// First bitwise difference between two vehicle lists.
pub fn vehicles_differ(expected: &[VehicleState], got: &[VehicleState]) -> Option<String> {
    if expected.len() != got.len() {
        return Some(format!("{} vehicles logged, {} simulated", expected.len(), got.len()));
    }
    for (a, b) in expected.iter().zip(got) {
        if (a.id, a.lane, a.direction, a.is_ego) != (b.id, b.lane, b.direction, b.is_ego) {
            return Some(format!("vehicle {} identity or lane differs", a.id));
        }
        for ((name, x), (_, y)) in float_fields(a).iter().zip(float_fields(b).iter()) {
            if x.to_bits() != y.to_bits() {
                return Some(format!("vehicle {} {name}: logged {x:e}, simulated {y:e}", a.id));
            }
        }
    }
    None
}

/// Re-simulate `log` from its header and logged controls.
pub fn replay(log: &EpisodeLog) -> Result<ReplayReport> {
    let mut world = build_scenario(&log.header.scenario)?;
    if let Some(detail) = vehicles_differ(&log.header.vehicles, &world.vehicles) {
        let divergence = Divergence { step: 0, tick: 0, detail };
        return Ok(ReplayReport { steps_checked: 0, divergence: Some(divergence) });
    }
    for (i, s) in log.steps.iter().enumerate() {
        world.step(s.controls, SIM_DT);
        let detail = if world.tick != s.tick {
            Some(format!("tick {} logged, {} simulated", s.tick, world.tick))
        } else if world.time.to_bits() != s.time.to_bits() {
            Some(format!("time {} logged, {} simulated", s.time, world.time))
        } else if world.collided != s.collided {
            Some(format!("collided {} logged, {} simulated", s.collided, world.collided))
        } else {
            vehicles_differ(&s.vehicles, &world.vehicles)
        };
        if let Some(detail) = detail {
            let divergence = Divergence { step: i + 1, tick: s.tick, detail };
            return Ok(ReplayReport { steps_checked: i + 1, divergence: Some(divergence) });
        }
    }
    Ok(ReplayReport { steps_checked: log.steps.len(), divergence: None })
}

/// Flip bit `bit` of the logged acceleration (or steering) of tick `step`.
pub fn perturb_control(log: &mut EpisodeLog, step: usize, bit: u32, steer: bool) {
    let c = &mut log.steps[step].controls;
    let x = if steer { &mut c.steer } else { &mut c.accel };
    *x = f64::from_bits(x.to_bits() ^ (1u64 << bit));
}
