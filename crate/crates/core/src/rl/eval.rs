use ndarray::{ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{RlError, RunningNormalizer};
use crate::env::{flatten_observation, ActionVector, OrbitEnv};
use crate::nn::MlpParams;
use crate::orbit::KeplerianElements;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeReport {
    /// Orbit chosen on the last step.
    pub elements: KeplerianElements,
    pub cumulative_reward: f64,
    pub objectives_met: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean_reward: f64,
    pub std_reward: f64,
    pub objectives_met_rate: f64,
    pub episodes: Vec<EpisodeReport>,
}

/// Plays one episode from `env.reset(reset_seed)`. Deterministic mode takes
/// the action mean; otherwise actions are sampled with fresh noise from
/// `rng`. Observation statistics are read, never updated.
pub fn run_episode<R: Rng + ?Sized>(
    params: &MlpParams,
    normalizer: &RunningNormalizer,
    env: &mut OrbitEnv,
    reset_seed: Option<u64>,
    deterministic: bool,
    rng: &mut R,
) -> Result<EpisodeReport, RlError> {
    let mut obs = env.reset(reset_seed);
    let bounds = env.mission().element_bounds;
    let mut total = 0.0;
    let mut steps = 0;
    loop {
        let x = normalizer.normalize_obs(&flatten_observation(&obs, &bounds));
        let (out, _) = params.forward(ArrayView1::from(&x).insert_axis(Axis(0)))?;
        let mut action: Vec<f64> = out.mean.row(0).to_vec();
        if !deterministic {
            for (a, s) in action.iter_mut().zip(&out.log_std) {
                let eps: f64 = rng.sample(StandardNormal);
                *a += s.exp() * eps;
            }
        }
        let r = env
            .step(&ActionVector::from_slice(&action))
            .map_err(|source| RlError::Env { index: 0, source })?;
        total += r.reward;
        steps += 1;
        obs = r.observation;
        if r.terminated || r.truncated {
            return Ok(EpisodeReport {
                elements: r.info.elements,
                cumulative_reward: total,
                objectives_met: r.info.all_objectives_met,
                steps,
            });
        }
    }
}

/// Runs `n_episodes` episodes; episode `k` starts from `reset(seed + k)`, so
/// the result depends only on the parameters and the seed.
pub fn evaluate_policy<R: Rng + ?Sized>(
    params: &MlpParams,
    normalizer: &RunningNormalizer,
    env: &mut OrbitEnv,
    n_episodes: usize,
    deterministic: bool,
    seed: u64,
    rng: &mut R,
) -> Result<EvalResult, RlError> {
    let frozen = normalizer.frozen();
    let episodes = (0..n_episodes as u64)
        .map(|k| run_episode(params, &frozen, env, Some(seed.wrapping_add(k)), deterministic, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let n = episodes.len().max(1) as f64;
    let mean_reward = episodes.iter().map(|e| e.cumulative_reward).sum::<f64>() / n;
    let var = episodes
        .iter()
        .map(|e| (e.cumulative_reward - mean_reward).powi(2))
        .sum::<f64>()
        / n;
    let met = episodes.iter().filter(|e| e.objectives_met).count() as f64;
    Ok(EvalResult {
        mean_reward,
        std_reward: var.sqrt(),
        objectives_met_rate: met / n,
        episodes,
    })
}
