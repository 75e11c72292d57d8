use std::sync::Arc;

use orbitrl_core::env::{SafetyCatalog, ELEMENT_COUNT, OBSERVATION_DIM};
use orbitrl_core::nn::{Adam, MlpParams, NetworkShape, RmsProp};
use orbitrl_core::rl::{
    a2c_update, collect_rollout, ppo_update, ExplorationNoise, RolloutBuffer, RunningNormalizer, TrainerConfig, VecEnv,
};
use orbitrl_core::tle::Catalog;
use orbitrl_core::{MissionConfig, ISS_TLE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shape() -> NetworkShape {
    NetworkShape {
        input: OBSERVATION_DIM,
        hidden: vec![16, 8],
        action_dim: ELEMENT_COUNT,
        shared_trunk: true,
    }
}

fn rollout(params: &MlpParams, n_envs: usize, n_steps: usize, seed: u64) -> RolloutBuffer {
    let mission = Arc::new(MissionConfig::default());
    let elements = Catalog::parse(ISS_TLE).elements(&mission.constants);
    let safety = Arc::new(SafetyCatalog::new(&elements, mission.orbit_samples));
    let mut venv = VecEnv::new(mission, safety, n_envs, seed);
    let mut normalizer = RunningNormalizer::new(OBSERVATION_DIM, n_envs, 0.99);
    normalizer.observe(venv.flat_observations().view());
    let mut noise = ExplorationNoise::new(n_envs, ELEMENT_COUNT, true, 75);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::new();
    let mut buffer = collect_rollout(
        params,
        &mut venv,
        &mut normalizer,
        &mut noise,
        &mut rng,
        n_steps,
        0.99,
        &mut episodes,
    )
    .unwrap();
    buffer.compute_advantages(0.99, 0.98).unwrap();
    buffer
}

fn ppo_config(n_envs: usize, n_steps: usize) -> TrainerConfig {
    TrainerConfig {
        n_envs,
        n_steps,
        batch_size: 8,
        n_epochs: 4,
        ..TrainerConfig::ppo()
    }
}

#[test]
fn ppo_with_zero_learning_rate_changes_nothing() {
    let params = MlpParams::new(shape(), &mut ChaCha8Rng::seed_from_u64(1));
    let buffer = rollout(&params, 4, 8, 2);
    let config = ppo_config(4, 8);
    let mut updated = params.clone();
    let mut opt = Adam::new(&updated, 0.0);
    let m = ppo_update(
        &mut updated,
        &mut opt,
        &buffer,
        &config,
        &mut ChaCha8Rng::seed_from_u64(3),
        0,
    )
    .unwrap();
    assert_eq!(m.approx_kl, 0.0);
    assert!(!m.early_stopped);
    assert_eq!(m.epochs_completed, 4);
    assert_eq!(m.optimizer_steps, 16);
    for ((_, a, _), (_, b, _)) in params.tensors().iter().zip(updated.tensors().iter()) {
        let same = a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same);
    }
}

#[test]
fn kl_early_stop_applies_exactly_one_epoch() {
    let params = MlpParams::new(shape(), &mut ChaCha8Rng::seed_from_u64(5));
    let buffer = rollout(&params, 4, 8, 6);
    let config = TrainerConfig {
        batch_size: 32,
        n_epochs: 8,
        learning_rate: 1e-2,
        target_kl: Some(1e-9),
        ..ppo_config(4, 8)
    };
    let mut updated = params.clone();
    let mut opt = Adam::new(&updated, config.learning_rate);
    let m = ppo_update(
        &mut updated,
        &mut opt,
        &buffer,
        &config,
        &mut ChaCha8Rng::seed_from_u64(7),
        0,
    )
    .unwrap();
    assert!(m.early_stopped);
    assert_eq!(m.epochs_completed, 1);
    assert_eq!(m.optimizer_steps, 1);
    assert_eq!(opt.step_count(), 1);
    assert_ne!(updated, params);
}

#[test]
fn updates_keep_clipped_norm_and_finite_parameters() {
    let mut params = MlpParams::new(shape(), &mut ChaCha8Rng::seed_from_u64(8));
    let config = TrainerConfig {
        n_envs: 4,
        n_steps: 8,
        learning_rate: 1e-3,
        ..TrainerConfig::a2c()
    };
    let mut opt = RmsProp::new(&params, config.learning_rate, 0.99, 1e-5);
    for k in 0..5 {
        let buffer = rollout(&params, 4, 8, 10 + k);
        let m = a2c_update(&mut params, &mut opt, &buffer, &config, k as usize).unwrap();
        assert!(params.all_finite());
        assert!(m.grad_norm <= config.max_grad_norm + 1e-9);
        if m.grad_norm_raw > config.max_grad_norm {
            assert!((m.grad_norm - config.max_grad_norm).abs() < 1e-9);
        }
    }
    let ppo = ppo_config(4, 8);
    let mut opt = Adam::new(&params, 1e-3);
    let buffer = rollout(&params, 4, 8, 20);
    let m = ppo_update(
        &mut params,
        &mut opt,
        &buffer,
        &ppo,
        &mut ChaCha8Rng::seed_from_u64(9),
        0,
    )
    .unwrap();
    assert!(params.all_finite());
    assert!(m.grad_norm <= ppo.max_grad_norm + 1e-9);
}

#[test]
fn rollout_rows_are_time_major() {
    let params = MlpParams::new(shape(), &mut ChaCha8Rng::seed_from_u64(11));
    let buffer = rollout(&params, 3, 5, 12);
    assert!(buffer.is_full());
    assert_eq!(buffer.len(), 15);
    assert_eq!(buffer.bootstrap_values.len(), 3);
    let adv = buffer.advantages().unwrap();
    let ret = buffer.returns().unwrap();
    for row in 0..15 {
        assert_eq!(ret[row], adv[row] + buffer.values[row]);
    }
}
