use alloc::vec::Vec;

use super::TrainError;

/// K-step bootstrapped advantages and value targets for one trajectory.
///
/// `values[t]` is `V(s_t)`; `bootstrap` is `V(s_T)` for the state after the
/// last step (0 for a terminal episode end). Returns `(A_t, A_t + V(s_t))`.
pub fn compute_advantages(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    gamma: f64,
    k: usize,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    if rewards.len() != values.len() {
        return Err(TrainError::LengthMismatch { rewards: rewards.len(), values: values.len() });
    }
    if k == 0 {
        return Err(TrainError::InvalidConfig("K must be at least 1"));
    }
    let n = rewards.len();
    let mut adv = Vec::with_capacity(n);
    for t in 0..n {
        let end = (t + k).min(n);
        let mut g = 0.0;
        let mut disc = 1.0;
        for r in &rewards[t..end] {
            g += disc * r;
            disc *= gamma;
        }
        let tail = if end < n { values[end] } else { bootstrap };
        adv.push(g + disc * tail - values[t]);
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Shift and scale to zero mean and unit (population) standard deviation.
pub fn standardize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var).max(1e-8);
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step_substitution() {
        let (a, t) = compute_advantages(&[1.0], &[0.0], 0.0, 0.5, 1).unwrap();
        assert_eq!(a, [1.0]);
        assert_eq!(t, [1.0]);
    }

    #[test]
    fn two_step_substitution() {
        // r = (1, 1), V(s_{t+2}) = 4, V(s_t) = 2
        let (a, _) = compute_advantages(&[1.0, 1.0, 0.0], &[2.0, 0.0, 4.0], 0.0, 0.5, 2).unwrap();
        assert_eq!(a[0], 0.5);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(compute_advantages(&[1.0], &[], 0.0, 0.9, 1), Err(TrainError::LengthMismatch { .. })));
    }

    #[test]
    fn standardized_moments() {
        let mut xs = [1.0, 2.0, 3.0, 10.0];
        standardize(&mut xs);
        let m: f64 = xs.iter().sum::<f64>() / 4.0;
        let v: f64 = xs.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
    }
}
