use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::a2c::UpdateMetrics;
use super::buffer::StepRecord;
use super::{
    a2c_update, derive_seed, evaluate_policy, ppo_update, Algorithm, CallbackState, EpisodeRecord, EvalResult, RlError,
    RolloutBuffer, RunningMeanStd, RunningNormalizer, TrainerConfig, VecEnv,
};
use crate::env::{MissionConfig, OrbitEnv, SafetyCatalog, ELEMENT_COUNT, OBSERVATION_DIM};
use crate::nn::{gaussian_log_prob, Adam, Checkpoint, CheckpointError, MlpParams, NetworkShape, RmsProp, RngState};
use crate::orbit::KeplerianElements;

pub const METRIC_HEADER: &str = "timesteps,mean_ep_reward,policy_loss,value_loss,entropy,grad_norm,interventions";

const POLICY_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
/// Completed training episodes averaged into `mean_ep_reward`.
const EPISODE_WINDOW: usize = 100;
const RMSPROP_ALPHA: f64 = 0.99;
const RMSPROP_EPS: f64 = 1e-5;

/// One row of the training log, written after every rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub timesteps: u64,
    /// Mean raw return of the last 100 finished training episodes; NaN
    /// before the first one finishes.
    pub mean_ep_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub interventions: usize,
}

impl fmt::Display for MetricRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{}",
            self.timesteps,
            self.mean_ep_reward,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.grad_norm,
            self.interventions
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub timesteps: u64,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub objectives_met_rate: f64,
}

impl EvalRecord {
    fn new(timesteps: u64, r: &EvalResult) -> Self {
        Self {
            timesteps,
            mean_reward: r.mean_reward,
            std_reward: r.std_reward,
            objectives_met_rate: r.objectives_met_rate,
        }
    }

    pub fn all_objectives_met(&self) -> bool {
        self.objectives_met_rate >= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub normalizer: RunningNormalizer,
    /// Parameters and statistics at the best evaluation.
    pub best: Option<(MlpParams, RunningNormalizer, EvalRecord)>,
    pub metrics: Vec<MetricRow>,
    pub evaluations: Vec<EvalRecord>,
    pub final_eval: EvalResult,
    /// Timesteps at the first evaluation with every episode successful.
    pub first_success: Option<u64>,
    pub timesteps: u64,
    pub updates: usize,
    pub interventions: usize,
    pub rng: RngState,
}

/// A failed run keeps the rows logged before the failure.
#[derive(Debug)]
pub struct TrainError {
    pub error: RlError,
    pub metrics: Vec<MetricRow>,
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} logged rollouts)", self.error, self.metrics.len())
    }
}

impl std::error::Error for TrainError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Per-environment exploration noise. With `use_sde` the draw is held fixed
/// and refreshed every `sample_freq` steps (and at each rollout start);
/// otherwise every step draws anew.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationNoise {
    pub use_sde: bool,
    pub sample_freq: usize,
    eps: Array2<f64>,
}

impl ExplorationNoise {
    pub fn new(n_envs: usize, action_dim: usize, use_sde: bool, sample_freq: usize) -> Self {
        Self {
            use_sde,
            sample_freq,
            eps: Array2::zeros((n_envs, action_dim)),
        }
    }

    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.eps.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
    }

    /// Noise for rollout step `step`.
    pub fn draw<R: Rng + ?Sized>(&mut self, step: usize, rng: &mut R) -> &Array2<f64> {
        let refresh = !self.use_sde || step == 0 || (self.sample_freq > 0 && step.is_multiple_of(self.sample_freq));
        if refresh {
            self.resample(rng);
        }
        &self.eps
    }
}

fn normalized_rows(normalizer: &RunningNormalizer, raw: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(raw.raw_dim());
    for (k, row) in raw.axis_iter(Axis(0)).enumerate() {
        let x = normalizer.normalize_obs(row.as_slice().expect("contiguous"));
        out.row_mut(k).assign(&ArrayView1::from(&x));
    }
    out
}

/// Steps every environment `n_steps` times under the stochastic policy.
/// Finished episodes are appended to `episodes`.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollout<R: Rng + ?Sized>(
    params: &MlpParams,
    venv: &mut VecEnv,
    normalizer: &mut RunningNormalizer,
    noise: &mut ExplorationNoise,
    rng: &mut R,
    n_steps: usize,
    gamma: f64,
    episodes: &mut Vec<EpisodeRecord>,
) -> Result<RolloutBuffer, RlError> {
    let n_envs = venv.len();
    let mut buffer = RolloutBuffer::new(n_envs, n_steps, OBSERVATION_DIM, ELEMENT_COUNT);
    for t in 0..n_steps {
        let obs = normalized_rows(normalizer, &venv.flat_observations());
        let (out, _) = params.forward(obs.view())?;
        let std = out.log_std.mapv(f64::exp);
        let eps = noise.draw(t, rng);
        let actions = &out.mean + &(eps * &std);
        let log_std = out.log_std.as_slice().expect("contiguous");
        let log_probs: Vec<f64> = (0..n_envs)
            .map(|e| {
                gaussian_log_prob(
                    out.mean.row(e).as_slice().expect("contiguous"),
                    log_std,
                    actions.row(e).as_slice().expect("contiguous"),
                )
            })
            .collect();
        let env_actions: Vec<_> = actions
            .axis_iter(Axis(0))
            .map(|a| crate::env::ActionVector::from_slice(a.as_slice().expect("contiguous")))
            .collect();

        let step = venv.step(&env_actions)?;
        let dones = step.dones();
        normalizer.observe(venv.flat_observations().view());
        let mut rewards = normalizer.normalize_rewards(&step.rewards, &dones);
        for (e, terminal) in step.terminal_obs.iter().enumerate() {
            if let (Some(o), true) = (terminal, step.truncated[e]) {
                let x = normalizer.normalize_obs(&venv.flat(o));
                let (_, v) = params.predict(&x)?;
                rewards[e] += gamma * v;
            }
        }
        episodes.extend_from_slice(&step.finished);
        for e in 0..n_envs {
            buffer.push(StepRecord {
                observations: obs.row(e),
                action: actions.row(e).as_slice().expect("contiguous"),
                log_prob: log_probs[e],
                value: out.value[e],
                reward: rewards[e],
                raw_reward: step.rewards[e],
                done: dones[e],
            });
        }
    }
    let last = normalized_rows(normalizer, &venv.flat_observations());
    let (out, _) = params.forward(last.view())?;
    buffer.bootstrap_values = out.value.to_vec();
    Ok(buffer)
}

enum Optimizer {
    RmsProp(Box<RmsProp>),
    Adam(Box<Adam>),
}

pub fn train(
    config: &TrainerConfig,
    mission: &MissionConfig,
    catalog: &[KeplerianElements],
) -> Result<TrainOutcome, TrainError> {
    train_with(config, mission, catalog, |_, _| {})
}

/// Full training loop. `on_rollout` sees every metric row as soon as it is
/// produced, together with that rollout's evaluation.
pub fn train_with<F: FnMut(&MetricRow, &EvalRecord)>(
    config: &TrainerConfig,
    mission: &MissionConfig,
    catalog: &[KeplerianElements],
    mut on_rollout: F,
) -> Result<TrainOutcome, TrainError> {
    let mut metrics = Vec::new();
    match run(config, mission, catalog, &mut metrics, &mut on_rollout) {
        Ok(outcome) => Ok(outcome),
        Err(error) => Err(TrainError { error, metrics }),
    }
}

fn run<F: FnMut(&MetricRow, &EvalRecord)>(
    config: &TrainerConfig,
    mission: &MissionConfig,
    catalog: &[KeplerianElements],
    metrics: &mut Vec<MetricRow>,
    on_rollout: &mut F,
) -> Result<TrainOutcome, RlError> {
    config.validate()?;
    let seed = config.seed;
    let mission = Arc::new(mission.clone());
    let safety = Arc::new(SafetyCatalog::new(catalog, mission.orbit_samples));

    let shape = NetworkShape {
        input: OBSERVATION_DIM,
        hidden: config.hidden.clone(),
        action_dim: ELEMENT_COUNT,
        shared_trunk: config.shared_trunk,
    };
    let mut params = MlpParams::new(shape, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, POLICY_STREAM)));
    let mut optimizer = match config.algorithm {
        Algorithm::A2c => Optimizer::RmsProp(Box::new(RmsProp::new(
            &params,
            config.learning_rate,
            RMSPROP_ALPHA,
            RMSPROP_EPS,
        ))),
        Algorithm::Ppo => Optimizer::Adam(Box::new(Adam::new(&params, config.learning_rate))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TRAIN_STREAM));
    let eval_seed = derive_seed(seed, EVAL_STREAM);
    let mut eval_env = OrbitEnv::with_catalog(mission.clone(), safety.clone(), eval_seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(eval_seed);

    let mut venv = VecEnv::new(mission.clone(), safety, config.n_envs, seed);
    let mut normalizer = RunningNormalizer::new(OBSERVATION_DIM, config.n_envs, config.gamma);
    normalizer.norm_obs = config.norm_obs;
    normalizer.norm_reward = config.norm_reward;
    normalizer.observe(venv.flat_observations().view());

    let mut noise = ExplorationNoise::new(config.n_envs, ELEMENT_COUNT, config.use_sde, config.sde_sample_freq);
    let mut callback = CallbackState::from_config(&config.callback);
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(EPISODE_WINDOW);
    let mut evaluations = Vec::new();
    let mut best: Option<(MlpParams, RunningNormalizer, EvalRecord)> = None;
    let mut first_success = None;
    let mut timesteps = 0u64;
    let mut updates = 0usize;
    let n_eval = config.callback.n_eval_episodes;

    while timesteps < config.total_timesteps {
        let mut finished = Vec::new();
        let mut buffer = collect_rollout(
            &params,
            &mut venv,
            &mut normalizer,
            &mut noise,
            &mut rng,
            config.n_steps,
            config.gamma,
            &mut finished,
        )?;
        timesteps += config.rollout_size() as u64;
        for ep in &finished {
            if recent.len() == EPISODE_WINDOW {
                recent.pop_front();
            }
            recent.push_back(ep.reward);
        }
        buffer.compute_advantages(config.gamma, config.gae_lambda)?;
        let m: UpdateMetrics = match &mut optimizer {
            Optimizer::RmsProp(opt) => a2c_update(&mut params, opt, &buffer, config, updates)?,
            Optimizer::Adam(opt) => ppo_update(&mut params, opt, &buffer, config, &mut rng, updates)?,
        };
        updates += 1;

        let eval = if updates.is_multiple_of(config.eval_freq) {
            let result = evaluate_policy(
                &params,
                &normalizer,
                &mut eval_env,
                n_eval,
                true,
                eval_seed,
                &mut eval_rng,
            )?;
            let record = EvalRecord::new(timesteps, &result);
            evaluations.push(record);
            if record.all_objectives_met() && first_success.is_none() {
                first_success = Some(timesteps);
            }
            if best.as_ref().is_none_or(|(_, _, b)| record.mean_reward > b.mean_reward) {
                best = Some((params.clone(), normalizer.frozen(), record));
            }
            if config.callback.enabled && callback.plateau_check(result.mean_reward) {
                venv.force_relocate();
                normalizer.reset_returns();
            }
            Some(record)
        } else {
            None
        };

        let mean_ep_reward = if recent.is_empty() {
            f64::NAN
        } else {
            recent.iter().sum::<f64>() / recent.len() as f64
        };
        let row = MetricRow {
            timesteps,
            mean_ep_reward,
            policy_loss: m.policy_loss,
            value_loss: m.value_loss,
            entropy: m.entropy,
            grad_norm: m.grad_norm,
            interventions: callback.interventions,
        };
        metrics.push(row);
        if let Some(record) = eval {
            on_rollout(&row, &record);
        } else {
            let last = evaluations.last().copied().unwrap_or(EvalRecord {
                timesteps,
                mean_reward: f64::NAN,
                std_reward: f64::NAN,
                objectives_met_rate: 0.0,
            });
            on_rollout(&row, &last);
        }
    }

    let final_eval = evaluate_policy(
        &params,
        &normalizer,
        &mut eval_env,
        n_eval,
        true,
        eval_seed,
        &mut eval_rng,
    )?;
    Ok(TrainOutcome {
        normalizer: normalizer.frozen(),
        params,
        best,
        metrics: std::mem::take(metrics),
        evaluations,
        final_eval,
        first_success,
        timesteps,
        updates,
        interventions: callback.interventions,
        rng: RngState::capture(&rng),
    })
}

fn stats_tensors(ckpt: &mut Checkpoint, prefix: &str, rms: &RunningMeanStd) {
    ckpt.insert(format!("{prefix}.count"), vec![1], vec![rms.count]);
    ckpt.insert(format!("{prefix}.mean"), vec![rms.dim()], rms.mean.clone());
    ckpt.insert(format!("{prefix}.var"), vec![rms.dim()], rms.var.clone());
}

fn read_stats(ckpt: &Checkpoint, prefix: &str, dim: usize) -> Result<RunningMeanStd, CheckpointError> {
    Ok(RunningMeanStd {
        count: ckpt.tensor(&format!("{prefix}.count"), &[1])?.data[0],
        mean: ckpt.tensor(&format!("{prefix}.mean"), &[dim])?.data.clone(),
        var: ckpt.tensor(&format!("{prefix}.var"), &[dim])?.data.clone(),
    })
}

/// Bundles a policy with the normalization statistics it was trained under.
pub fn policy_checkpoint(params: &MlpParams, normalizer: &RunningNormalizer) -> Checkpoint {
    let mut ckpt = Checkpoint::default();
    params.write_checkpoint(&mut ckpt, "policy.");
    stats_tensors(&mut ckpt, "obs_rms", &normalizer.obs);
    stats_tensors(&mut ckpt, "ret_rms", &normalizer.ret);
    ckpt.insert("normalizer.gamma", vec![1], vec![normalizer.gamma]);
    let flag = |b: bool| if b { "true" } else { "false" }.to_string();
    ckpt.metadata
        .insert("normalizer.norm_obs".into(), flag(normalizer.norm_obs));
    ckpt.metadata
        .insert("normalizer.norm_reward".into(), flag(normalizer.norm_reward));
    ckpt
}

/// Inverse of [`policy_checkpoint`]; the normalizer comes back frozen.
pub fn load_policy(ckpt: &Checkpoint) -> Result<(MlpParams, RunningNormalizer), CheckpointError> {
    let params = MlpParams::read_checkpoint(ckpt, "policy.")?;
    let dim = params.shape.input;
    let flag = |key: &str| -> Result<bool, CheckpointError> {
        ckpt.meta(key)?
            .parse()
            .map_err(|_| CheckpointError::Corrupt(format!("metadata `{key}`")))
    };
    let mut normalizer = RunningNormalizer::new(dim, 0, ckpt.tensor("normalizer.gamma", &[1])?.data[0]);
    normalizer.obs = read_stats(ckpt, "obs_rms", dim)?;
    normalizer.ret = read_stats(ckpt, "ret_rms", 1)?;
    normalizer.norm_obs = flag("normalizer.norm_obs")?;
    normalizer.norm_reward = flag("normalizer.norm_reward")?;
    normalizer.training = false;
    Ok((params, normalizer))
}
