use std::sync::Arc;

use orbitrl_core::env::{SafetyCatalog, ELEMENT_COUNT, OBSERVATION_DIM};
use orbitrl_core::nn::{MlpParams, NetworkShape};
use orbitrl_core::rl::{
    evaluate_policy, load_policy, policy_checkpoint, train, CallbackState, PlateauMode, RunningNormalizer,
    TrainerConfig, VecEnv, METRIC_HEADER,
};
use orbitrl_core::tle::Catalog;
use orbitrl_core::{KeplerianElements, MissionConfig, OrbitEnv, ISS_TLE};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn iss(mission: &MissionConfig) -> Vec<KeplerianElements> {
    Catalog::parse(ISS_TLE).elements(&mission.constants)
}

fn tiny(algorithm_ppo: bool) -> TrainerConfig {
    let base = if algorithm_ppo {
        TrainerConfig::ppo()
    } else {
        TrainerConfig::a2c()
    };
    TrainerConfig {
        n_envs: 2,
        n_steps: 8,
        batch_size: 8,
        n_epochs: 2,
        total_timesteps: 48,
        hidden: vec![16, 8],
        seed: 9,
        ..base
    }
}

#[test]
fn plateau_window_from_fixture() {
    let mut cb = CallbackState::new(0.25, 3);
    assert!(!cb.plateau_check(5.00));
    assert!(!cb.plateau_check(5.10));
    assert!(cb.plateau_check(5.05));
    assert_eq!(cb.interventions, 1);
    assert!(cb.is_empty());

    let mut rising = CallbackState::new(0.25, 3);
    for k in 0..50 {
        assert!(!rising.plateau_check(k as f64));
    }
    assert_eq!(rising.interventions, 0);
}

#[test]
fn consecutive_mode_looks_at_neighbours() {
    let mut range = CallbackState::new(0.25, 3);
    let mut steps = CallbackState::new(0.25, 3);
    steps.mode = PlateauMode::Consecutive;
    let xs = [5.0, 5.2, 5.4];
    let fired: Vec<(bool, bool)> = xs
        .iter()
        .map(|&x| (range.plateau_check(x), steps.plateau_check(x)))
        .collect();
    assert_eq!(fired.last(), Some(&(false, true)));
}

proptest! {
    #[test]
    fn plateau_depends_only_on_window(
        prefix in prop::collection::vec(-1.0..1.0f64, 0..20),
        next in prop::collection::vec(-1.0..1.0f64, 1..6),
    ) {
        let mut warm = CallbackState::new(0.25, 3);
        for x in &prefix {
            warm.plateau_check(*x);
        }
        let mut fresh = CallbackState::new(0.25, 3);
        for x in warm.window().collect::<Vec<_>>() {
            prop_assert!(!fresh.plateau_check(x));
        }
        for &x in &next {
            prop_assert_eq!(warm.plateau_check(x), fresh.plateau_check(x));
            prop_assert!(warm.window().eq(fresh.window()));
        }
    }
}

#[test]
fn relocation_draws_uniformly_within_bounds() {
    let mission = Arc::new(MissionConfig::default());
    let safety = Arc::new(SafetyCatalog::new(&iss(&mission), mission.orbit_samples));
    let mut venv = VecEnv::new(mission.clone(), safety, 8, 4);
    let bounds = mission.element_bounds;
    let mut positions: Vec<Vec<f64>> = vec![Vec::new(); ELEMENT_COUNT];
    let mut previous: Vec<[f64; ELEMENT_COUNT]> = venv.observations().iter().map(|o| o.elements).collect();
    for _ in 0..150 {
        venv.force_relocate();
        let now: Vec<[f64; ELEMENT_COUNT]> = venv.observations().iter().map(|o| o.elements).collect();
        for (a, b) in now.iter().zip(&previous) {
            assert_ne!(a, b);
        }
        for el in &now {
            assert!(bounds.contains(el));
            for k in 0..ELEMENT_COUNT {
                positions[k].push((el[k] - bounds.0[k].low) / bounds.0[k].width());
            }
        }
        previous = now;
    }
    // Inclination, RAAN and argument of perigee are unaffected by the perigee
    // rejection, so they must look uniform on [0, 1].
    for (k, xs) in positions.iter().enumerate().take(ELEMENT_COUNT).skip(2) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        assert!(
            (mean - 0.5).abs() < 4.0 * (1.0 / 12.0 / n).sqrt(),
            "element {k}: mean {mean}"
        );
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let ks = sorted
            .iter()
            .enumerate()
            .map(|(i, x)| ((i + 1) as f64 / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        // 1% critical value of the Kolmogorov-Smirnov statistic.
        assert!(ks < 1.63 / n.sqrt(), "element {k}: ks {ks}");
    }
}

#[test]
fn evaluation_is_reproducible() {
    let mission = Arc::new(MissionConfig::default());
    let catalog = iss(&mission);
    let params = MlpParams::new(
        NetworkShape {
            input: OBSERVATION_DIM,
            hidden: vec![16],
            action_dim: ELEMENT_COUNT,
            shared_trunk: true,
        },
        &mut ChaCha8Rng::seed_from_u64(2),
    );
    let normalizer = RunningNormalizer::new(OBSERVATION_DIM, 1, 0.99);
    let run = |env_seed: u64, rng_seed: u64| {
        let mut env = OrbitEnv::new(mission.clone(), &catalog, env_seed);
        evaluate_policy(
            &params,
            &normalizer,
            &mut env,
            4,
            true,
            77,
            &mut ChaCha8Rng::seed_from_u64(rng_seed),
        )
        .unwrap()
    };
    let a = run(1, 1);
    let b = run(2, 3);
    assert_eq!(a.episodes.len(), 4);
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a.objectives_met_rate));
    for ep in &a.episodes {
        assert!(ep.steps >= 1 && ep.steps <= mission.max_episode_steps);
    }
}

#[test]
fn training_is_deterministic() {
    let mission = MissionConfig::default();
    let catalog = iss(&mission);
    for ppo in [false, true] {
        let config = tiny(ppo);
        let a = train(&config, &mission, &catalog).unwrap();
        let b = train(&config, &mission, &catalog).unwrap();
        let csv =
            |o: &orbitrl_core::rl::TrainOutcome| o.metrics.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n");
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(
            policy_checkpoint(&a.params, &a.normalizer).to_bytes(),
            policy_checkpoint(&b.params, &b.normalizer).to_bytes()
        );
        assert_eq!(a.timesteps, 48);
        assert_eq!(a.updates, 3);
        let ts: Vec<u64> = a.metrics.iter().map(|r| r.timesteps).collect();
        assert_eq!(ts, [16, 32, 48]);
    }
}

#[test]
fn checkpoint_round_trip_restores_policy() {
    let mission = MissionConfig::default();
    let config = tiny(false);
    let out = train(&config, &mission, &iss(&mission)).unwrap();
    let bytes = policy_checkpoint(&out.params, &out.normalizer).to_bytes();
    let ckpt = orbitrl_core::nn::Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
    let (params, normalizer) = load_policy(&ckpt).unwrap();
    assert_eq!(params, out.params);
    assert_eq!(normalizer.obs, out.normalizer.obs);
    assert_eq!(normalizer.ret, out.normalizer.ret);
}

#[test]
fn metric_header_is_fixed() {
    assert_eq!(
        METRIC_HEADER,
        "timesteps,mean_ep_reward,policy_loss,value_loss,entropy,grad_norm,interventions"
    );
}
