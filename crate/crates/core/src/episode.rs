//! One driving episode: decision-level stepping through the executor.
//!
//! A [`DriveSession`] owns the world, the controller setpoints, the
//! directive slot and the arbitration state. Each [`DriveSession::step`]
//! maps a discrete action to setpoints and runs the PID for one decision
//! period.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::control::{
    allowed_actions, executor_step, lane_change_abort, map_action, oncoming_exit, reconcile_directive, Action,
    ArbitrationEvent, ArbitrationState, MaskContext, Setpoints, SPEED_STEP,
};
use crate::sim::{
    build_scenario, compute_reward, compute_ttc, observe, Controls, Direction, EpisodeMetrics, Longitudinal,
    Observation, RewardBreakdown, RewardWeights, ScenarioConfig, SimError, WorldState, SIM_DT, SUBSTEPS_PER_DECISION,
};
use crate::slow::Directive;

/// Result of one decision step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub done: bool,
    pub collided: bool,
}

#[derive(Debug, Clone)]
pub struct DriveSession {
    pub world: WorldState,
    pub setpoints: Setpoints,
    /// Lateral preference in the ego observation row, meters.
    pub y_des: f64,
    pub arbitration: ArbitrationState,
    pub mask_enabled: bool,
    pub weights: RewardWeights,
    pub prev_accel: f64,
    pub decisions: usize,
    pub metrics: EpisodeMetrics,
    /// Same-direction vehicles passed while driving left of them.
    pub overtakes: usize,
    pub done: bool,
}

impl DriveSession {
    /// Start an episode; `y_des` defaults to the ego lane center.
    pub fn new(config: &ScenarioConfig, y_des: Option<f64>) -> Result<Self, SimError> {
        let world = build_scenario(config)?;
        let ego = world.ego();
        let setpoints = Setpoints { target_speed: ego.speed, target_lane: ego.lane };
        let y_des = y_des.unwrap_or_else(|| config.lane_center(ego.lane));
        Ok(DriveSession {
            world,
            setpoints,
            y_des,
            arbitration: ArbitrationState::default(),
            mask_enabled: true,
            weights: RewardWeights::default(),
            prev_accel: 0.0,
            decisions: 0,
            metrics: EpisodeMetrics::default(),
            overtakes: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.world.config
    }

    pub fn observe(&self) -> Observation {
        observe(&self.world, self.y_des)
    }

    /// Speed offset requested by the active directive.
    pub fn speed_bias(&self) -> f64 {
        self.arbitration.active.as_ref().map_or(0.0, |d| SPEED_STEP * f64::from(d.speed_intent))
    }

    /// Setpoints actually tracked by the controller.
    pub fn effective_setpoints(&self) -> Setpoints {
        let mut sp = self.setpoints;
        sp.target_speed = (sp.target_speed + self.speed_bias()).clamp(0.0, self.config().v_max());
        sp
    }

    /// Whether entering the oncoming lane is currently permitted.
    pub fn overtake_permitted(&self) -> bool {
        let cfg = self.config();
        match &self.arbitration.active {
            Some(d) => d.permits_overtake(cfg),
            None => cfg.oncoming_lane().is_some_and(|l| cfg.lane_of(self.y_des) == l),
        }
    }

    pub fn mask_context(&self) -> MaskContext<'_> {
        MaskContext::new(&self.world, self.effective_setpoints(), self.overtake_permitted())
    }

    /// Allowed actions; everything when the mask is disabled.
    pub fn action_mask(&self) -> [bool; Action::COUNT] {
        if self.mask_enabled {
            allowed_actions(&self.mask_context())
        } else {
            [true; Action::COUNT]
        }
    }

    /// Feed a new directive (or re-check the pending one) at a decision boundary.
    pub fn apply_directive(&mut self, new: Option<Directive>) -> ArbitrationEvent {
        let target_speed = self.effective_setpoints().target_speed;
        let (y_des, event) =
            reconcile_directive(new, &mut self.arbitration, &self.world, self.y_des, target_speed, self.world.time);
        self.y_des = y_des;
        event
    }

    /// Execute `action` for one decision period.
    pub fn step(&mut self, action: Action) -> StepOutcome {
        self.step_with(action, |_, _| {})
    }

    /// Like [`DriveSession::step`], calling `on_substep(world_after, controls)`
    /// after every simulator tick.
    pub fn step_with(&mut self, action: Action, mut on_substep: impl FnMut(&WorldState, Controls)) -> StepOutcome {
        let before = self.world.clone();
        self.setpoints = map_action(action, self.setpoints, self.config());
        if self.mask_enabled {
            if let Some(lane) = lane_change_abort(&self.mask_context()) {
                self.setpoints.target_lane = lane;
            } else if let Some(lane) = oncoming_exit(&self.mask_context()) {
                self.setpoints.target_lane = lane;
            }
        }
        let sp = self.effective_setpoints();
        let passing = self.passing_candidates();
        for _ in 0..SUBSTEPS_PER_DECISION {
            let u = executor_step(&self.world, &sp);
            self.world.step(u, SIM_DT);
            on_substep(&self.world, u);
            if self.world.collided {
                break;
            }
        }
        self.count_overtakes(&passing);
        let (reward, accel) = compute_reward(&before, &self.world, self.prev_accel, self.y_des, &self.weights);
        self.prev_accel = accel;
        self.decisions += 1;

        let ego = self.world.ego();
        self.metrics.speeds.push(ego.vx);
        self.metrics.accels.push(accel);
        self.metrics.front_ttc.push(compute_ttc(&self.world, ego.lane, Longitudinal::Ahead));
        self.metrics.collided = self.world.collided;
        self.done = self.world.collided || self.decisions >= self.config().decision_steps();
        StepOutcome { reward, done: self.done, collided: self.world.collided }
    }

    fn passing_candidates(&self) -> Vec<(u32, bool)> {
        let ego = self.world.ego();
        self.world.background().filter(|v| v.direction == Direction::Forward).map(|v| (v.id, v.x > ego.x)).collect()
    }

    fn count_overtakes(&mut self, before: &[(u32, bool)]) {
        let ego = self.world.ego();
        for &(id, was_ahead) in before {
            if let Some(v) = self.world.vehicle(id) {
                if was_ahead && v.x <= ego.x && ego.y < v.y - self.world.config.lane_width / 2.0 {
                    self.overtakes += 1;
                }
            }
        }
    }
}
