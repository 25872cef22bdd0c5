//! Runtime feasibility filter over the discrete actions.
//!
//! Checks use the live world: bumper gaps, closing speeds and lane
//! occupancy around the ego. SlowDown is always allowed.

use serde::{Deserialize, Serialize};

use crate::sim::{Longitudinal, WorldState};

use super::{Action, Setpoints, SPEED_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskThresholds {
    /// Minimum front TTC for Cruise/SpeedUp and in a lane-change target lane, s.
    pub front_ttc: f64,
    /// Minimum rear TTC in a lane-change target lane, s.
    pub rear_ttc: f64,
    /// Estimated duration of an overtake on a two-way road, s. Oncoming TTC
    /// must exceed twice this value before entering the oncoming lane.
    pub overtake_time: f64,
    /// Minimum bumper gap to the leader is `min_gap + front_headway * v`.
    pub min_gap: f64,
    pub front_headway: f64,
    /// Time factors of the lane-change envelope: the follower needs
    /// `rear_envelope * v_follower` meters, the leader `front_envelope * v_ego`.
    pub rear_envelope: f64,
    pub front_envelope: f64,
    /// Deceleration the target-lane follower may be asked for, m/s^2.
    pub rear_brake: f64,
}

impl Default for MaskThresholds {
    fn default() -> Self {
        MaskThresholds {
            front_ttc: 2.0,
            rear_ttc: 1.5,
            overtake_time: 8.0,
            min_gap: 2.0,
            front_headway: 0.5,
            rear_envelope: 1.0,
            front_envelope: 0.5,
            rear_brake: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Leader in the current lane too close in time.
    FrontTtc,
    /// Leader in the current lane too close in distance.
    FrontGap,
    /// Target lane does not exist or is not drivable here.
    LaneUnavailable,
    /// A vehicle sits inside the lane-change envelope.
    Occupancy,
    /// Follower in the target lane closing too fast.
    RearTtc,
    /// Leader in the target lane closing too fast.
    TargetFrontTtc,
    /// Oncoming traffic leaves less than the minimum overtake window.
    OvertakeWindow,
    /// The oncoming lane may only be entered for a directed overtake.
    NoOvertakePermission,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::FrontTtc => "front_ttc",
            RejectReason::FrontGap => "front_gap",
            RejectReason::LaneUnavailable => "lane_unavailable",
            RejectReason::Occupancy => "occupancy",
            RejectReason::RearTtc => "rear_ttc",
            RejectReason::TargetFrontTtc => "target_front_ttc",
            RejectReason::OvertakeWindow => "overtake_window",
            RejectReason::NoOvertakePermission => "no_overtake_permission",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Allowed,
    Rejected(RejectReason),
}

impl Verdict {
    pub fn is_allowed(self) -> bool {
        self == Verdict::Allowed
    }
}

/// Everything the mask looks at for one decision.
#[derive(Debug, Clone, Copy)]
pub struct MaskContext<'a> {
    pub world: &'a WorldState,
    pub setpoints: Setpoints,
    /// Set while an active directive asks to overtake through the oncoming lane.
    pub overtake_permitted: bool,
    pub thresholds: MaskThresholds,
}

impl<'a> MaskContext<'a> {
    pub fn new(world: &'a WorldState, setpoints: Setpoints, overtake_permitted: bool) -> Self {
        MaskContext { world, setpoints, overtake_permitted, thresholds: MaskThresholds::default() }
    }
}

/// Lateral distance to the target lane center below which a lane change is complete, m.
const SETTLED: f64 = 0.5;

fn ttc(gap: f64, closing: f64) -> f64 {
    if gap <= 0.0 {
        0.0
    } else if closing <= 0.0 {
        f64::INFINITY
    } else {
        gap / closing
    }
}

/// Front check in `lane` for an ego that will be driving at `v_pred`.
fn front_verdict(ctx: &MaskContext<'_>, lane: usize, v_pred: f64, ttc_floor: f64) -> Option<RejectReason> {
    let ego = ctx.world.ego();
    let (gap, closing, _) = ctx.world.nearest_in_lane(lane, Longitudinal::Ahead)?;
    let closing = closing + f64::max(0.0, v_pred - ego.vx);
    if ttc(gap, closing) < ttc_floor {
        return Some(RejectReason::FrontTtc);
    }
    // only a same-direction leader (or the ramp end) can be followed
    let t = &ctx.thresholds;
    if closing > -v_pred && gap < t.min_gap + t.front_headway * v_pred {
        return Some(RejectReason::FrontGap);
    }
    None
}

fn lanes_occupied_by_ego(world: &WorldState) -> impl Iterator<Item = usize> + '_ {
    let ego = world.ego();
    (0..world.config.lane_count).filter(move |&l| ego.occupies_lane(l, world.config.lane_width))
}

/// Envelope, follower and leader checks in a lane the ego moves into.
fn target_lane_conflict(ctx: &MaskContext<'_>, target: usize, v_pred: f64) -> Option<RejectReason> {
    let world = ctx.world;
    let cfg = &world.config;
    let ego = world.ego();
    let t = &ctx.thresholds;
    for v in world.background() {
        if !v.occupies_lane(target, cfg.lane_width) {
            continue;
        }
        let dx = v.x - ego.x;
        let gap = libm::fabs(dx) - (ego.length + v.length) / 2.0;
        let envelope = if dx >= 0.0 { t.front_envelope * ego.speed } else { t.rear_envelope * v.speed };
        if gap < envelope {
            return Some(RejectReason::Occupancy);
        }
    }
    if let Some((gap, closing, _)) = world.nearest_in_lane(target, Longitudinal::Behind) {
        let room = gap - t.min_gap;
        if ttc(gap, closing) < t.rear_ttc || (closing > 0.0 && closing * closing > 2.0 * t.rear_brake * room) {
            return Some(RejectReason::RearTtc);
        }
    }
    if let Some((gap, closing, _)) = world.nearest_in_lane(target, Longitudinal::Ahead) {
        let closing = closing + f64::max(0.0, v_pred - ego.vx);
        if ttc(gap, closing) < t.front_ttc {
            return Some(RejectReason::TargetFrontTtc);
        }
    }
    None
}

fn lane_change_verdict(ctx: &MaskContext<'_>, target: Option<usize>) -> Verdict {
    let world = ctx.world;
    let cfg = &world.config;
    let ego = world.ego();
    let t = &ctx.thresholds;
    let Some(target) = target.filter(|&l| l < cfg.lane_count) else {
        return Verdict::Rejected(RejectReason::LaneUnavailable);
    };
    if !cfg.lane_drivable(target, ego.x + ego.speed) {
        return Verdict::Rejected(RejectReason::LaneUnavailable);
    }
    if cfg.ramp_lane() == Some(target) && ego.lane != target {
        return Verdict::Rejected(RejectReason::LaneUnavailable);
    }
    let v_pred = f64::max(ego.vx, ctx.setpoints.target_speed);
    // the ego still shares its current lane while crossing over
    for lane in lanes_occupied_by_ego(world) {
        if let Some(reason) = front_verdict(ctx, lane, v_pred, t.front_ttc / 2.0) {
            return Verdict::Rejected(reason);
        }
    }
    if cfg.oncoming_lane() == Some(target) {
        if !ctx.overtake_permitted {
            return Verdict::Rejected(RejectReason::NoOvertakePermission);
        }
        if let Some((gap, closing, _)) = world.nearest_in_lane(target, Longitudinal::Ahead) {
            if ttc(gap, closing) < 2.0 * t.overtake_time {
                return Verdict::Rejected(RejectReason::OvertakeWindow);
            }
        }
    }
    match crossing_conflict(ctx, target, v_pred) {
        Some(reason) => Verdict::Rejected(reason),
        None => Verdict::Allowed,
    }
}

/// Conflicts in every lane between the ego lane (exclusive) and `target`.
fn crossing_conflict(ctx: &MaskContext<'_>, target: usize, v_pred: f64) -> Option<RejectReason> {
    let here = ctx.world.ego().lane;
    let lanes = if target < here { target..here } else { here + 1..target + 1 };
    lanes.into_iter().find_map(|lane| target_lane_conflict(ctx, lane, v_pred))
}

fn settling(ctx: &MaskContext<'_>) -> bool {
    let world = ctx.world;
    libm::fabs(world.ego().y - world.config.lane_center(ctx.setpoints.target_lane)) > SETTLED
}

/// Lane to return to when an unfinished lane change runs into traffic.
pub fn lane_change_abort(ctx: &MaskContext<'_>) -> Option<usize> {
    let ego = ctx.world.ego();
    let target = ctx.setpoints.target_lane;
    if !settling(ctx) || ego.lane == target {
        return None;
    }
    crossing_conflict(ctx, target, ego.vx).map(|_| ego.lane)
}

/// Lane to head back to when the ego holds the oncoming lane without permission.
pub fn oncoming_exit(ctx: &MaskContext<'_>) -> Option<usize> {
    let lane = ctx.world.config.oncoming_lane()?;
    if ctx.overtake_permitted || ctx.setpoints.target_lane != lane {
        return None;
    }
    safety_mask(ctx, Action::TurnRight).is_allowed().then_some(lane + 1)
}

/// Feasibility of `candidate` in the current context.
pub fn safety_mask(ctx: &MaskContext<'_>, candidate: Action) -> Verdict {
    let world = ctx.world;
    let sp = ctx.setpoints;
    let v_max = world.config.v_max();
    match candidate {
        Action::SlowDown => Verdict::Allowed,
        Action::Cruise | Action::SpeedUp => {
            let ego = world.ego();
            let target =
                if candidate == Action::SpeedUp { (sp.target_speed + SPEED_STEP).min(v_max) } else { sp.target_speed };
            let v_pred = f64::max(ego.vx, target);
            let mut lanes = lanes_occupied_by_ego(world);
            let front = lanes.find_map(|lane| front_verdict(ctx, lane, v_pred, ctx.thresholds.front_ttc));
            // an unfinished lane change keeps moving into the target lane
            let side = if settling(ctx) { crossing_conflict(ctx, sp.target_lane, v_pred) } else { None };
            match front.or(side) {
                Some(reason) => Verdict::Rejected(reason),
                None => Verdict::Allowed,
            }
        }
        Action::TurnLeft => lane_change_verdict(ctx, sp.target_lane.checked_sub(1)),
        Action::TurnRight => lane_change_verdict(ctx, Some(sp.target_lane + 1)),
    }
}

/// Verdict for every action, indexed by [`Action::index`].
pub fn allowed_actions(ctx: &MaskContext<'_>) -> [bool; Action::COUNT] {
    Action::ALL.map(|a| safety_mask(ctx, a).is_allowed())
}

/// Highest-probability allowed action; SlowDown when nothing passes.
pub fn filter_action(probs: &[f64; Action::COUNT], allowed: &[bool; Action::COUNT]) -> Action {
    let mut order = Action::ALL;
    order.sort_by(|a, b| probs[b.index()].total_cmp(&probs[a.index()]).then(a.index().cmp(&b.index())));
    order.into_iter().find(|a| allowed[a.index()]).unwrap_or(Action::SlowDown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{map_action, pid_step};
    use crate::sim::{
        build_scenario, Direction, ScenarioConfig, ScenarioKind, VehicleState, SIM_DT, SUBSTEPS_PER_DECISION,
    };

    fn world(kind: ScenarioKind, ego: (f64, usize, f64), others: &[(f64, usize, f64, Direction)]) -> WorldState {
        let mut c = ScenarioConfig::preset(kind, 0);
        c.traffic_density = 0.0;
        let mut w = build_scenario(&c).unwrap();
        w.vehicles.truncate(1);
        let e = &mut w.vehicles[0];
        *e = VehicleState::new(0, ego.0, ego.1, 4.0, ego.2, Direction::Forward);
        e.is_ego = true;
        for (i, &(x, lane, v, d)) in others.iter().enumerate() {
            w.vehicles.push(VehicleState::new(i as u32 + 1, x, lane, 4.0, v, d));
        }
        w
    }

    fn ctx(w: &WorldState) -> MaskContext<'_> {
        let e = w.ego();
        MaskContext::new(w, Setpoints { target_speed: e.speed, target_lane: e.lane }, false)
    }

    /// Run one decision period with the action applied unmasked.
    fn rollout_collides(w: &WorldState, a: Action) -> bool {
        let mut w = w.clone();
        let sp = map_action(a, Setpoints { target_speed: w.ego().speed, target_lane: w.ego().lane }, &w.config);
        for _ in 0..SUBSTEPS_PER_DECISION {
            let u = pid_step(w.ego(), &sp, &w.config);
            w.step(u, SIM_DT);
        }
        w.collided
    }

    #[test]
    fn slow_down_always_allowed() {
        let w = world(ScenarioKind::Highway, (0.0, 1, 25.0), &[(6.0, 1, 0.0, Direction::Forward)]);
        assert_eq!(safety_mask(&ctx(&w), Action::SlowDown), Verdict::Allowed);
    }

    #[test]
    fn abeam_vehicle_blocks_turn() {
        let w = world(ScenarioKind::Highway, (0.0, 2, 25.0), &[(1.0, 1, 25.0, Direction::Forward)]);
        assert!(rollout_collides(&w, Action::TurnLeft));
        assert_eq!(safety_mask(&ctx(&w), Action::TurnLeft), Verdict::Rejected(RejectReason::Occupancy));
        assert_eq!(safety_mask(&ctx(&w), Action::TurnRight), Verdict::Allowed);
    }

    #[test]
    fn oncoming_lane_is_left_once_permission_lapses() {
        let w = world(ScenarioKind::TwoWay, (0.0, 0, 10.0), &[]);
        let sp = Setpoints { target_speed: 10.0, target_lane: 0 };
        assert_eq!(oncoming_exit(&MaskContext::new(&w, sp, false)), Some(1));
        assert_eq!(oncoming_exit(&MaskContext::new(&w, sp, true)), None);
        let w = world(ScenarioKind::TwoWay, (0.0, 0, 10.0), &[(0.0, 1, 10.0, Direction::Forward)]);
        assert_eq!(oncoming_exit(&MaskContext::new(&w, sp, false)), None);
        let w = world(ScenarioKind::Highway, (0.0, 0, 10.0), &[]);
        assert_eq!(oncoming_exit(&MaskContext::new(&w, sp, false)), None);
    }

    #[test]
    fn front_ttc_threshold() {
        // TTC 6 s
        let w = world(ScenarioKind::Highway, (0.0, 1, 30.0), &[(65.0, 1, 20.0, Direction::Forward)]);
        assert_eq!(safety_mask(&ctx(&w), Action::SpeedUp), Verdict::Allowed);
        // TTC 1.5 s
        let w = world(ScenarioKind::Highway, (0.0, 1, 30.0), &[(20.0, 1, 20.0, Direction::Forward)]);
        assert_eq!(safety_mask(&ctx(&w), Action::Cruise), Verdict::Rejected(RejectReason::FrontTtc));
    }

    #[test]
    fn tailgating_is_rejected() {
        let w = world(ScenarioKind::Highway, (0.0, 1, 25.0), &[(12.0, 1, 25.0, Direction::Forward)]);
        assert_eq!(safety_mask(&ctx(&w), Action::Cruise), Verdict::Rejected(RejectReason::FrontGap));
    }

    #[test]
    fn fast_follower_blocks_turn() {
        let w = world(ScenarioKind::Highway, (0.0, 2, 20.0), &[(-30.0, 1, 30.0, Direction::Forward)]);
        assert_eq!(safety_mask(&ctx(&w), Action::TurnLeft), Verdict::Rejected(RejectReason::Occupancy));
        let w = world(ScenarioKind::Highway, (0.0, 2, 20.0), &[(-60.0, 1, 30.0, Direction::Forward)]);
        assert_eq!(safety_mask(&ctx(&w), Action::TurnLeft), Verdict::Allowed);
        let w = world(ScenarioKind::Highway, (0.0, 2, 10.0), &[(-40.0, 1, 40.0, Direction::Forward)]);
        assert_eq!(safety_mask(&ctx(&w), Action::TurnLeft), Verdict::Rejected(RejectReason::Occupancy));
    }

    #[test]
    fn road_edges_and_ramp() {
        let w = world(ScenarioKind::Highway, (0.0, 0, 25.0), &[]);
        assert_eq!(safety_mask(&ctx(&w), Action::TurnLeft), Verdict::Rejected(RejectReason::LaneUnavailable));
        let w = world(ScenarioKind::Merge, (0.0, 1, 15.0), &[]);
        assert_eq!(safety_mask(&ctx(&w), Action::TurnRight), Verdict::Rejected(RejectReason::LaneUnavailable));
        let w = world(ScenarioKind::Merge, (0.0, 2, 15.0), &[]);
        assert_eq!(safety_mask(&ctx(&w), Action::TurnLeft), Verdict::Allowed);
    }

    #[test]
    fn oncoming_lane_needs_permission_and_window() {
        let w = world(ScenarioKind::TwoWay, (0.0, 1, 7.0), &[(400.0, 0, 10.0, Direction::Oncoming)]);
        let mut c = ctx(&w);
        assert_eq!(safety_mask(&c, Action::TurnLeft), Verdict::Rejected(RejectReason::NoOvertakePermission));
        c.overtake_permitted = true;
        assert_eq!(safety_mask(&c, Action::TurnLeft), Verdict::Allowed);
        // 200 m at 17 m/s closing is under the 16 s window
        let w = world(ScenarioKind::TwoWay, (0.0, 1, 7.0), &[(200.0, 0, 10.0, Direction::Oncoming)]);
        let mut c = ctx(&w);
        c.overtake_permitted = true;
        assert_eq!(safety_mask(&c, Action::TurnLeft), Verdict::Rejected(RejectReason::OvertakeWindow));
    }

    #[test]
    fn filter_follows_rank_order() {
        let probs = [0.1, 0.5, 0.2, 0.15, 0.05];
        assert_eq!(filter_action(&probs, &[true; 5]), Action::Cruise);
        assert_eq!(filter_action(&probs, &[true, false, true, true, true]), Action::SpeedUp);
        assert_eq!(filter_action(&probs, &[false; 5]), Action::SlowDown);
    }
}
