use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Per-episode traces the summary is computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Ego speed after each decision step, m/s.
    pub speeds: Vec<f64>,
    /// Mean longitudinal acceleration of each decision step, m/s^2.
    pub accels: Vec<f64>,
    /// Front time-to-collision after each decision step, seconds.
    pub front_ttc: Vec<f64>,
    pub collided: bool,
}

/// Aggregate driving metrics over a set of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub success_rate: f64,
    /// Mean speed over all decision steps.
    pub avg_speed: f64,
    /// Variance of the per-step acceleration over all decision steps.
    pub accel_variability: f64,
    /// Mean of the per-episode minimum TTC; `None` when no episode ever closed in on a leader.
    pub min_ttc: Option<f64>,
    /// Mean of the per-episode maximum speed.
    pub max_speed: f64,
    /// Mean of the per-episode minimum speed.
    pub min_speed: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn metrics_summary(episodes: &[EpisodeMetrics]) -> Result<MetricsSummary, SimError> {
    if episodes.is_empty() {
        return Err(SimError::EmptyInput);
    }
    let speeds: Vec<f64> = episodes.iter().flat_map(|e| e.speeds.iter().copied()).collect();
    let accels: Vec<f64> = episodes.iter().flat_map(|e| e.accels.iter().copied()).collect();
    let accel_mean = mean(&accels);
    let accel_variability = mean(&accels.iter().map(|a| (a - accel_mean) * (a - accel_mean)).collect::<Vec<_>>());

    let finite_min_ttc: Vec<f64> = episodes
        .iter()
        .map(|e| e.front_ttc.iter().copied().fold(f64::INFINITY, f64::min))
        .filter(|t| t.is_finite())
        .collect();
    let with_speeds: Vec<&EpisodeMetrics> = episodes.iter().filter(|e| !e.speeds.is_empty()).collect();
    let max_speeds: Vec<f64> =
        with_speeds.iter().map(|e| e.speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let min_speeds: Vec<f64> =
        with_speeds.iter().map(|e| e.speeds.iter().copied().fold(f64::INFINITY, f64::min)).collect();

    let successes = episodes.iter().filter(|e| !e.collided).count();
    Ok(MetricsSummary {
        episodes: episodes.len(),
        success_rate: successes as f64 / episodes.len() as f64,
        avg_speed: mean(&speeds),
        accel_variability,
        min_ttc: (!finite_min_ttc.is_empty()).then(|| mean(&finite_min_ttc)),
        max_speed: mean(&max_speeds),
        min_speed: mean(&min_speeds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn episode(speeds: Vec<f64>, collided: bool) -> EpisodeMetrics {
        let accels = speeds.windows(2).map(|w| w[1] - w[0]).collect();
        EpisodeMetrics { front_ttc: vec![f64::INFINITY; speeds.len()], speeds, accels, collided }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(metrics_summary(&[]), Err(SimError::EmptyInput));
    }

    #[test]
    fn average_speed() {
        let m = metrics_summary(&[episode(vec![20.0, 30.0], false)]).unwrap();
        assert_eq!(m.avg_speed, 25.0);
        assert_eq!(m.max_speed, 30.0);
        assert_eq!(m.min_speed, 20.0);
        assert_eq!(m.min_ttc, None);
    }

    #[test]
    fn success_rate_ratio() {
        let eps: Vec<_> = (0..100).map(|i| episode(vec![25.0], i < 5)).collect();
        assert_eq!(metrics_summary(&eps).unwrap().success_rate, 0.95);
    }

    #[test]
    fn constant_speed_has_zero_variability() {
        let m = metrics_summary(&[episode(vec![25.0; 40], false)]).unwrap();
        assert_eq!(m.accel_variability, 0.0);
    }

    #[test]
    fn min_ttc_averages_episode_minima() {
        let mut a = episode(vec![25.0; 3], false);
        a.front_ttc = vec![9.0, 4.0, f64::INFINITY];
        let mut b = episode(vec![25.0; 3], false);
        b.front_ttc = vec![8.0, 8.0, 6.0];
        let c = episode(vec![25.0; 3], false);
        assert_eq!(metrics_summary(&[a, b, c]).unwrap().min_ttc, Some(5.0));
    }
}
