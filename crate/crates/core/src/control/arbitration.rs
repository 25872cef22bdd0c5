//! Deferral and override of slow-system directives.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::sim::WorldState;
use crate::slow::Directive;

use super::{safety_mask, Action, MaskContext, RejectReason, Setpoints, Verdict};

pub const DEFAULT_HOLD_TIMEOUT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationState {
    pub pending: Option<Directive>,
    pub pending_since: f64,
    pub hold_timeout: f64,
    pub last_override_reason: String,
    /// Last applied directive; drives the speed bias and overtake permission.
    pub active: Option<Directive>,
}

impl Default for ArbitrationState {
    fn default() -> Self {
        ArbitrationState {
            pending: None,
            pending_since: 0.0,
            hold_timeout: DEFAULT_HOLD_TIMEOUT,
            last_override_reason: String::new(),
            active: None,
        }
    }
}

/// What happened to the candidate directive at this decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", content = "reason", rename_all = "snake_case")]
pub enum ArbitrationEvent {
    /// Nothing to reconcile.
    Idle,
    Applied,
    Deferred(RejectReason),
    Expired,
}

/// Reconcile a new (or the pending) directive against the live world at
/// time `t`. Returns the effective `y_des`.
///
/// A directive is applied when its target lane is the ego lane or when the
/// first lane change towards it passes the safety mask. Otherwise it stays
/// pending and `y_des` keeps `prev_y_des`; after `hold_timeout` seconds it is
/// dropped and `y_des` reverts to the current lane center.
pub fn reconcile_directive(
    new: Option<Directive>,
    arb: &mut ArbitrationState,
    world: &WorldState,
    prev_y_des: f64,
    target_speed: f64,
    t: f64,
) -> (f64, ArbitrationEvent) {
    let cfg = &world.config;
    let ego = world.ego();
    let (lo, hi) = cfg.lateral_extent();
    let prev_y_des = prev_y_des.clamp(lo, hi);
    let candidate = match new {
        Some(d) => {
            arb.pending_since = t;
            d
        }
        None => match arb.pending.take() {
            Some(d) => d,
            None => return (prev_y_des, ArbitrationEvent::Idle),
        },
    };
    let target = candidate.target_lane.min(cfg.lane_count - 1);
    let verdict = if target == ego.lane {
        Verdict::Allowed
    } else {
        let turn = if target < ego.lane { Action::TurnLeft } else { Action::TurnRight };
        let sp = Setpoints { target_speed, target_lane: ego.lane };
        safety_mask(&MaskContext::new(world, sp, candidate.permits_overtake(cfg)), turn)
    };
    match verdict {
        Verdict::Allowed => {
            arb.active = Some(candidate);
            (cfg.lane_center(target), ArbitrationEvent::Applied)
        }
        Verdict::Rejected(reason) => {
            arb.last_override_reason = String::from(reason.as_str());
            if t - arb.pending_since > arb.hold_timeout {
                (cfg.lane_center(ego.lane), ArbitrationEvent::Expired)
            } else {
                arb.pending = Some(candidate);
                (prev_y_des, ArbitrationEvent::Deferred(reason))
            }
        }
    }
}
