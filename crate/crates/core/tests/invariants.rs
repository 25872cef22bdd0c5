use fastslow_core::policy::{forward, init_params, masked_softmax, Dims};
use fastslow_core::sim::{build_scenario, Observation, OBS_ROWS, PRESENT_COL};
use fastslow_core::trainer::compute_advantages;
use fastslow_core::{Action, ScenarioConfig, ScenarioKind};
use proptest::prelude::*;

fn row() -> impl Strategy<Value = [f64; 6]> {
    (prop::array::uniform5(-2.0..2.0f64), any::<bool>()).prop_map(|(f, present)| {
        if present {
            [f[0], f[1], f[2], f[3], f[4], 1.0]
        } else {
            [0.0; 6]
        }
    })
}

fn observation() -> impl Strategy<Value = Observation> {
    (0.0..1.0f64, 0.0..1.0f64, prop::collection::vec(row(), OBS_ROWS - 1)).prop_map(|(y, y_des, rows)| {
        let mut o = Observation::zeros();
        o.rows[0] = [0.0, y, 0.0, 0.0, y_des, 1.0];
        for (i, r) in rows.into_iter().enumerate() {
            o.rows[i + 1] = r;
        }
        o
    })
}

/// Brute-force K-step advantage from its definition.
fn brute(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, k: usize) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut g = 0.0;
            let mut i = 0;
            while i < k && t + i < n {
                g += gamma.powi(i as i32) * rewards[t + i];
                i += 1;
            }
            let tail = if t + k < n { values[t + k] } else { bootstrap };
            g + gamma.powi(i as i32) * tail - values[t]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn neighbor_order_does_not_change_the_output(obs in observation(), seed in 0u64..50, perm in Just((1..OBS_ROWS).collect::<Vec<_>>()).prop_shuffle()) {
        let p = init_params(seed, Dims::default()).unwrap();
        let mut shuffled = obs;
        for (dst, &src) in perm.iter().enumerate() {
            shuffled.rows[dst + 1] = obs.rows[src];
        }
        let a = forward(&p, &obs).unwrap();
        let b = forward(&p, &shuffled).unwrap();
        for k in 0..Action::COUNT {
            prop_assert!((a.logits[k] - b.logits[k]).abs() < 1e-9);
        }
        prop_assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn attention_and_policy_are_distributions(obs in observation(), seed in 0u64..50) {
        let p = init_params(seed, Dims::default()).unwrap();
        let t = forward(&p, &obs).unwrap();
        prop_assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for l in 0..2 {
            for h in 0..2 {
                let a = t.attention(l, h);
                for i in 0..t.n {
                    let r = &a[i * t.n..(i + 1) * t.n];
                    prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    for (j, &w) in r.iter().enumerate() {
                        prop_assert!(w >= 0.0);
                        if j > 0 && obs.rows[j][PRESENT_COL] == 0.0 {
                            prop_assert_eq!(w, 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn masked_distribution_lives_on_allowed_actions(logits in prop::array::uniform5(-20.0..20.0f64), allowed in prop::array::uniform5(any::<bool>())) {
        prop_assume!(allowed.iter().any(|&a| a));
        let p = masked_softmax(&logits, &allowed);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..Action::COUNT {
            prop_assert!(allowed[k] || p[k] == 0.0);
        }
    }

    #[test]
    fn advantages_match_their_definition(
        rewards in prop::collection::vec(-5.0..5.0f64, 1..60),
        values_seed in prop::collection::vec(-10.0..10.0f64, 60),
        bootstrap in -10.0..10.0f64,
        gamma in 0.5..1.0f64,
        k in 1usize..40,
    ) {
        let values = &values_seed[..rewards.len()];
        let (adv, targets) = compute_advantages(&rewards, values, bootstrap, gamma, k).unwrap();
        for (t, (a, b)) in adv.iter().zip(brute(&rewards, values, bootstrap, gamma, k)).enumerate() {
            prop_assert!((a - b).abs() < 1e-10, "t={} {} vs {}", t, a, b);
            prop_assert!((targets[t] - a - values[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn scenarios_are_a_function_of_their_config(seed in any::<u64>(), kind in 0usize..3) {
        let cfg = ScenarioConfig::preset(ScenarioKind::ALL[kind], seed);
        let a = build_scenario(&cfg).unwrap();
        let b = build_scenario(&cfg).unwrap();
        prop_assert_eq!(a.vehicles, b.vehicles);
    }
}

#[test]
fn advantage_lengths_must_agree() {
    assert!(compute_advantages(&[1.0, 2.0], &[0.0], 0.0, 0.9, 2).is_err());
    assert!(compute_advantages(&[1.0], &[0.0], 0.0, 0.9, 0).is_err());
}
