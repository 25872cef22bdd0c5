use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::control::filter_action;
use crate::episode::{DriveSession, StepOutcome};
use crate::policy::{forward, PolicyParams};
use crate::rng::{derive_seed, stream, SimRng};
use crate::sim::{metrics_summary, Controls, EpisodeMetrics, MetricsSummary, ScenarioConfig, WorldState};
use crate::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Uniform over the allowed actions.
    Random,
    /// Cruise whenever allowed.
    KeepLane,
    /// SpeedUp whenever allowed.
    SpeedUp,
}

/// Who picks the actions.
#[derive(Debug, Clone, Copy)]
pub enum Pilot<'a> {
    /// Greedy over the allowed actions.
    Policy(&'a PolicyParams),
    Baseline(Baseline),
}

impl Pilot<'_> {
    pub fn act(&self, session: &DriveSession, rng: &mut SimRng) -> Result<Action, TrainError> {
        let allowed = session.action_mask();
        let fixed = |a: Action| {
            let mut p = [0.0; Action::COUNT];
            p[a.index()] = 1.0;
            filter_action(&p, &allowed)
        };
        Ok(match self {
            Pilot::Policy(p) => filter_action(&forward(p, &session.observe())?.probs, &allowed),
            Pilot::Baseline(Baseline::Random) => {
                let n = allowed.iter().filter(|&&a| a).count();
                if n == 0 {
                    Action::SlowDown
                } else {
                    let pick = rng.gen_range(0..n);
                    Action::ALL.into_iter().filter(|a| allowed[a.index()]).nth(pick).unwrap_or(Action::SlowDown)
                }
            }
            Pilot::Baseline(Baseline::KeepLane) => fixed(Action::Cruise),
            Pilot::Baseline(Baseline::SpeedUp) => fixed(Action::SpeedUp),
        })
    }
}

/// Supplies the directive slot (directly or through directives).
pub trait Director {
    fn reset(&mut self, session: &mut DriveSession, episode_seed: u64);
    /// Called at every decision boundary before the action is chosen.
    fn before_decision(&mut self, session: &mut DriveSession);
    /// Lane the episode is judged against for adherence, if any.
    fn directed_lane(&self, session: &DriveSession) -> Option<usize>;
    /// Called once the episode is over, after its record is taken.
    fn finish(&mut self, _session: &DriveSession) {}
}

/// `y_des` stays on the ego's starting lane; no adherence target.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeepStartLane;

impl Director for KeepStartLane {
    fn reset(&mut self, _: &mut DriveSession, _: u64) {}
    fn before_decision(&mut self, _: &mut DriveSession) {}
    fn directed_lane(&self, _: &DriveSession) -> Option<usize> {
        None
    }
}

/// A fixed lane written into `y_des` for the whole episode.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedLane {
    /// Lane to use; `None` draws one uniformly per episode.
    pub lane: Option<usize>,
    current: Option<usize>,
}

impl FixedLane {
    pub fn sampled() -> Self {
        FixedLane::default()
    }

    pub fn lane(lane: usize) -> Self {
        FixedLane { lane: Some(lane), current: None }
    }
}

impl Director for FixedLane {
    fn reset(&mut self, session: &mut DriveSession, episode_seed: u64) {
        let cfg = session.config().clone();
        let lane = match self.lane {
            Some(l) => l.min(cfg.lane_count - 1),
            None => stream(episode_seed, 2).gen_range(0..cfg.lane_count),
        };
        self.current = Some(lane);
        session.y_des = cfg.lane_center(lane);
    }
    fn before_decision(&mut self, _: &mut DriveSession) {}
    fn directed_lane(&self, _: &DriveSession) -> Option<usize> {
        self.current
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub collided: bool,
    pub decisions: usize,
    pub total_reward: f64,
    pub final_lane: usize,
    pub directed_lane: Option<usize>,
    pub overtakes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: MetricsSummary,
    /// Fraction of episodes with a directed lane that end in it.
    pub adherence: Option<f64>,
    pub mean_return: f64,
    pub overtakes: usize,
    pub episodes: Vec<EpisodeRecord>,
}

/// Seed of evaluation episode `index`.
pub fn eval_episode_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed ^ 0x0E7A_1000_0000_0000, index)
}

/// Hooks into a running episode, for logging.
pub trait EpisodeObserver {
    /// After reset, before the first decision.
    fn on_start(&mut self, _session: &DriveSession) {}
    /// Before `action` is executed; the session still holds the pre-step state.
    fn on_decision(&mut self, _session: &DriveSession, _action: Action) {}
    /// After every simulator tick.
    fn on_substep(&mut self, _world: &WorldState, _controls: Controls) {}
    fn on_outcome(&mut self, _session: &DriveSession, _outcome: &StepOutcome) {}
}

impl EpisodeObserver for () {}

/// Play one episode to the end.
pub fn run_episode(
    pilot: Pilot<'_>,
    env: &ScenarioConfig,
    director: &mut dyn Director,
    seed: u64,
    mask: bool,
) -> Result<(DriveSession, EpisodeRecord), TrainError> {
    run_episode_observed(pilot, env, director, seed, mask, &mut ())
}

/// [`run_episode`] reporting to `observer`.
pub fn run_episode_observed(
    pilot: Pilot<'_>,
    env: &ScenarioConfig,
    director: &mut dyn Director,
    seed: u64,
    mask: bool,
    observer: &mut dyn EpisodeObserver,
) -> Result<(DriveSession, EpisodeRecord), TrainError> {
    let mut session = DriveSession::new(&env.with_seed(seed), None)?;
    session.mask_enabled = mask;
    director.reset(&mut session, seed);
    observer.on_start(&session);
    let mut rng = stream(seed, 3);
    let mut total = 0.0;
    while !session.done {
        director.before_decision(&mut session);
        let a = pilot.act(&session, &mut rng)?;
        observer.on_decision(&session, a);
        let out = session.step_with(a, |w, u| observer.on_substep(w, u));
        observer.on_outcome(&session, &out);
        total += out.reward.total;
    }
    let record = EpisodeRecord {
        seed,
        collided: session.world.collided,
        decisions: session.decisions,
        total_reward: total,
        final_lane: session.world.ego().lane,
        directed_lane: director.directed_lane(&session),
        overtakes: session.overtakes,
    };
    director.finish(&session);
    Ok((session, record))
}

/// Evaluate `pilot` on `episodes` seeded episodes.
pub fn evaluate(
    pilot: Pilot<'_>,
    env: &ScenarioConfig,
    director: &mut dyn Director,
    episodes: usize,
    seed: u64,
    mask: bool,
) -> Result<EvalReport, TrainError> {
    if episodes == 0 {
        return Err(TrainError::InvalidConfig("episodes must be at least 1"));
    }
    let mut metrics: Vec<EpisodeMetrics> = Vec::with_capacity(episodes);
    let mut records = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let (session, record) = run_episode(pilot, env, director, eval_episode_seed(seed, i as u64), mask)?;
        metrics.push(session.metrics);
        records.push(record);
    }
    report(metrics, records)
}

/// Summary of finished episodes.
pub fn report(metrics: Vec<EpisodeMetrics>, records: Vec<EpisodeRecord>) -> Result<EvalReport, TrainError> {
    let summary = metrics_summary(&metrics)?;
    let directed: Vec<&EpisodeRecord> = records.iter().filter(|r| r.directed_lane.is_some()).collect();
    let adherence = (!directed.is_empty()).then(|| {
        directed.iter().filter(|r| r.directed_lane == Some(r.final_lane)).count() as f64 / directed.len() as f64
    });
    let mean_return = records.iter().map(|r| r.total_reward).sum::<f64>() / records.len() as f64;
    let overtakes = records.iter().map(|r| r.overtakes).sum();
    Ok(EvalReport { summary, adherence, mean_return, overtakes, episodes: records })
}
