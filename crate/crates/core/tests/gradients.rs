use ndarray::{array, Array1, Array2};
use orbitrl_core::nn::{MlpParams, NetworkShape};
use orbitrl_core::rl::{a2c_loss, ppo_loss, Batch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-6;

fn small_shape(shared_trunk: bool) -> NetworkShape {
    NetworkShape {
        input: 8,
        hidden: vec![4],
        action_dim: 2,
        shared_trunk,
    }
}

fn random_params(shape: NetworkShape, rng: &mut ChaCha8Rng) -> MlpParams {
    let mut p = MlpParams::new(shape, rng);
    for t in p.tensors_mut() {
        t.iter_mut()
            .for_each(|x| *x = rng.sample::<f64, _>(StandardNormal) * 0.5);
    }
    p.log_std.iter_mut().for_each(|s| *s = rng.random_range(-1.0..0.5));
    p
}

fn random_batch(rows: usize, rng: &mut ChaCha8Rng) -> Batch {
    let normal = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
    Batch {
        obs: Array2::from_shape_fn((rows, 8), |_| normal(rng)),
        actions: Array2::from_shape_fn((rows, 2), |_| normal(rng)),
        old_log_probs: Array1::from_shape_fn(rows, |_| normal(rng) - 2.0),
        advantages: Array1::from_shape_fn(rows, |_| normal(rng)),
        returns: Array1::from_shape_fn(rows, |_| normal(rng)),
    }
}

/// Largest relative error between `analytic` and central differences of
/// `loss`, taken over every parameter.
fn max_relative_error(params: &MlpParams, analytic: &MlpParams, loss: impl Fn(&MlpParams) -> f64) -> f64 {
    let grads: Vec<Vec<f64>> = analytic.tensors().into_iter().map(|(_, g, _)| g.to_vec()).collect();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (ti, g) in grads.iter().enumerate() {
        for (k, &gk) in g.iter().enumerate() {
            let base = probe.tensors_mut()[ti][k];
            probe.tensors_mut()[ti][k] = base + H;
            let up = loss(&probe);
            probe.tensors_mut()[ti][k] = base - H;
            let down = loss(&probe);
            probe.tensors_mut()[ti][k] = base;
            let numeric = (up - down) / (2.0 * H);
            let denom = gk.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max((gk - numeric).abs() / denom);
        }
    }
    worst
}

#[test]
fn a2c_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let params = random_params(small_shape(draw % 2 == 0), &mut rng);
        let batch = random_batch(6, &mut rng);
        let (_, grads) = a2c_loss(&params, &batch, 0.75, 0.03).unwrap();
        let err = max_relative_error(&params, &grads, |p| a2c_loss(p, &batch, 0.75, 0.03).unwrap().0.total);
        worst = worst.max(err);
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn ppo_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let params = random_params(small_shape(draw % 2 == 1), &mut rng);
        let mut batch = random_batch(6, &mut rng);
        // Old log-probs near the current ones keep most ratios inside the clip
        // band; the rest sit far from its edges.
        let (out, _) = params.forward(batch.obs.view()).unwrap();
        for k in 0..batch.len() {
            let lp = orbitrl_core::nn::gaussian_log_prob(
                out.mean.row(k).as_slice().unwrap(),
                out.log_std.as_slice().unwrap(),
                batch.actions.row(k).as_slice().unwrap(),
            );
            batch.old_log_probs[k] = lp + if k % 3 == 0 { 1.0 } else { 0.05 };
        }
        let (_, _, grads) = ppo_loss(&params, &batch, 0.2, 0.75, 0.03).unwrap();
        let err = max_relative_error(&params, &grads, |p| {
            ppo_loss(p, &batch, 0.2, 0.75, 0.03).unwrap().0.total
        });
        worst = worst.max(err);
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn a2c_two_parameter_gradient_by_hand() {
    // mean = w x, log std = s, value head fixed at zero.
    let (w, s, ent) = (0.4, -0.2, 0.03);
    let mut p = MlpParams::zeros(NetworkShape {
        input: 1,
        hidden: vec![],
        action_dim: 1,
        shared_trunk: true,
    });
    p.mean_head.weight = array![[w]];
    p.log_std = array![s];
    let xs = [1.0, -2.0, 0.5];
    let acts = [0.9, -0.3, 0.1];
    let advs = [1.5, -0.5, 0.25];
    let batch = Batch {
        obs: Array2::from_shape_fn((3, 1), |(r, _)| xs[r]),
        actions: Array2::from_shape_fn((3, 1), |(r, _)| acts[r]),
        old_log_probs: Array1::zeros(3),
        advantages: Array1::from(advs.to_vec()),
        returns: Array1::zeros(3),
    };
    let var = (2.0 * s).exp();
    let n = 3.0;
    let mut dw = 0.0;
    let mut ds = 0.0;
    for k in 0..3 {
        let r = acts[k] - w * xs[k];
        dw -= advs[k] * r * xs[k] / var / n;
        ds -= advs[k] * (r * r / var - 1.0) / n;
    }
    ds -= ent;
    let (_, g) = a2c_loss(&p, &batch, 0.5, ent).unwrap();
    assert!(
        (g.mean_head.weight[[0, 0]] - dw).abs() < 1e-8,
        "{} vs {dw}",
        g.mean_head.weight[[0, 0]]
    );
    assert!((g.log_std[0] - ds).abs() < 1e-8, "{} vs {ds}", g.log_std[0]);
}
