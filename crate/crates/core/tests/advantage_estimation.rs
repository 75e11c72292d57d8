use ndarray::{Array2, Axis};
use orbitrl_core::rl::{compute_gae, normalize_advantages, RunningMeanStd};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A_t = sum_k (gamma lambda)^k delta_{t+k}, truncated at the first done.
fn brute_force(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let v = |t: usize| if t < n { values[t] } else { bootstrap };
    let delta = |t: usize| rewards[t] + if dones[t] { 0.0 } else { gamma * v(t + 1) } - values[t];
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut discount = 1.0;
            for (k, &done) in dones.iter().enumerate().take(n).skip(t) {
                total += discount * delta(k);
                if done {
                    break;
                }
                discount *= gamma * lambda;
            }
            total
        })
        .collect()
}

#[test]
fn gae_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n_envs = rng.random_range(1..=8);
        let n_steps = rng.random_range(1..=16);
        let gamma = rng.random_range(0.8..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        for _ in 0..n_envs {
            let r: Vec<f64> = (0..n_steps).map(|_| rng.random_range(-10.0..10.0)).collect();
            let v: Vec<f64> = (0..n_steps).map(|_| rng.random_range(-10.0..10.0)).collect();
            let d: Vec<bool> = (0..n_steps).map(|_| rng.random_bool(0.2)).collect();
            let b = rng.random_range(-10.0..10.0);
            let (adv, ret) = compute_gae(&r, &v, &d, b, gamma, lambda).unwrap();
            let expected = brute_force(&r, &v, &d, b, gamma, lambda);
            for t in 0..n_steps {
                worst = worst.max((adv[t] - expected[t]).abs());
                assert_eq!(ret[t], adv[t] + v[t]);
            }
        }
    }
    assert!(worst < 1e-12, "max abs error {worst}");
}

#[test]
fn gae_rejects_ragged_input() {
    assert!(compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.99, 0.95).is_err());
}

proptest! {
    #[test]
    fn normalized_advantages_are_standard(xs in prop::collection::vec(-100.0..100.0f64, 2..200)) {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assume!(xs.iter().any(|x| (x - mean).abs() > 1e-3));
        let mut a = xs.clone();
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let m = a.iter().sum::<f64>() / n;
        let s = (a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(m.abs() < 1e-10);
        prop_assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn running_stats_match_concatenation(
        rows in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 1..60),
        cut_seed in 0usize..1000,
    ) {
        let n = rows.len();
        let data = Array2::from_shape_fn((n, 3), |(r, c)| rows[r][c]);
        let mut merged = RunningMeanStd::new(3);
        let mut start = 0;
        let mut k = cut_seed;
        while start < n {
            let len = 1 + k % 7;
            let end = (start + len).min(n);
            merged.update(data.slice(ndarray::s![start..end, ..]));
            start = end;
            k = k.wrapping_mul(31).wrapping_add(17);
        }
        let mut once = RunningMeanStd::new(3);
        once.update(data.view());
        let mean = data.mean_axis(Axis(0)).unwrap();
        let var = data.var_axis(Axis(0), 0.0);
        prop_assert_eq!(merged.count, n as f64);
        for c in 0..3 {
            prop_assert!((merged.mean[c] - mean[c]).abs() < 1e-10);
            prop_assert!((merged.var[c] - var[c]).abs() < 1e-10 * var[c].max(1.0));
            prop_assert!((once.var[c] - var[c]).abs() < 1e-10 * var[c].max(1.0));
        }
    }
}
