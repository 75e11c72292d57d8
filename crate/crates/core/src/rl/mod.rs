//! On-policy actor-critic training: vectorized rollouts, GAE, A2C and PPO
//! updates, running normalization, deterministic evaluation and a plateau
//! callback that relocates every environment when evaluation stalls.

mod a2c;
mod buffer;
mod callback;
mod eval;
mod gae;
mod normalizer;
mod ppo;
mod train;
mod vec_env;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::nn::{CheckpointError, NnError};

pub use a2c::{a2c_loss, a2c_update, LossReport, UpdateMetrics};
pub use buffer::{Batch, RolloutBuffer, StepRecord};
pub use callback::{CallbackConfig, CallbackState, PlateauMode};
pub use eval::{evaluate_policy, run_episode, EpisodeReport, EvalResult};
pub use gae::{compute_gae, normalize_advantages};
pub use normalizer::{RunningMeanStd, RunningNormalizer, NORM_CLIP, NORM_EPSILON};
pub use ppo::{ppo_loss, ppo_update, PpoStats};
pub use train::{
    collect_rollout, load_policy, policy_checkpoint, train, train_with, EvalRecord, ExplorationNoise, MetricRow,
    TrainError, TrainOutcome, METRIC_HEADER,
};
pub use vec_env::{EpisodeRecord, VecEnv, VecStep};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("length mismatch: {rewards} rewards, {values} values, {dones} done flags")]
    LengthMismatch {
        rewards: usize,
        values: usize,
        dones: usize,
    },
    #[error("invalid trainer config: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("non-finite loss at update {update}: policy {policy_loss}, value {value_loss}, entropy {entropy}")]
    NonFiniteLoss {
        update: usize,
        policy_loss: f64,
        value_loss: f64,
        entropy: f64,
    },
    #[error("parameters became non-finite at update {0}")]
    NonFiniteParameters(usize),
    #[error("environment {index}: {source}")]
    Env { index: usize, source: EnvError },
    #[error("network: {0}")]
    Network(#[from] NnError),
    #[error("advantages were not computed for this rollout")]
    StaleAdvantages,
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    A2c,
    Ppo,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::A2c => "a2c",
            Algorithm::Ppo => "ppo",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a2c" => Ok(Algorithm::A2c),
            "ppo" => Ok(Algorithm::Ppo),
            other => Err(format!("unknown algorithm `{other}` (expected a2c or ppo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub n_steps: usize,
    /// PPO minibatch size.
    pub batch_size: usize,
    pub n_epochs: usize,
    pub clip_epsilon: f64,
    pub target_kl: Option<f64>,
    pub normalize_advantage: bool,
    pub use_sde: bool,
    pub sde_sample_freq: usize,
    pub n_envs: usize,
    pub total_timesteps: u64,
    pub seed: u64,
    pub norm_obs: bool,
    pub norm_reward: bool,
    pub hidden: Vec<usize>,
    pub shared_trunk: bool,
    /// Evaluate after every `eval_freq` rollouts.
    pub eval_freq: usize,
    pub callback: CallbackConfig,
}

impl TrainerConfig {
    pub fn a2c() -> Self {
        Self {
            algorithm: Algorithm::A2c,
            gamma: 0.99,
            gae_lambda: 0.98,
            learning_rate: 1e-4,
            ent_coef: 0.03,
            vf_coef: 0.75,
            max_grad_norm: 0.4,
            n_steps: 32,
            batch_size: 1024,
            n_epochs: 1,
            clip_epsilon: 0.2,
            target_kl: None,
            normalize_advantage: true,
            use_sde: true,
            sde_sample_freq: 75,
            n_envs: 8,
            total_timesteps: 10_000,
            seed: 0,
            norm_obs: true,
            norm_reward: true,
            hidden: vec![512, 256, 128],
            shared_trunk: true,
            eval_freq: 1,
            callback: CallbackConfig::default(),
        }
    }

    pub fn ppo() -> Self {
        Self {
            algorithm: Algorithm::Ppo,
            n_steps: 2048,
            batch_size: 1024,
            n_epochs: 8,
            target_kl: Some(0.3),
            total_timesteps: 70_000,
            ..Self::a2c()
        }
    }

    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::A2c => Self::a2c(),
            Algorithm::Ppo => Self::ppo(),
        }
    }

    pub fn rollout_size(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |field, reason: &str| {
            Err(RlError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must be in [0, 1]");
        }
        let coefs = [
            ("learning_rate", self.learning_rate),
            ("ent_coef", self.ent_coef),
            ("vf_coef", self.vf_coef),
            ("max_grad_norm", self.max_grad_norm),
            ("clip_epsilon", self.clip_epsilon),
        ];
        for (field, v) in coefs {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, "must be a finite non-negative number");
            }
        }
        if let Some(kl) = self.target_kl {
            if !(kl.is_finite() && kl > 0.0) {
                return bad("target_kl", "must be positive");
            }
        }
        if self.n_steps == 0 {
            return bad("n_steps", "must be at least 1");
        }
        if self.n_envs == 0 {
            return bad("n_envs", "must be at least 1");
        }
        if self.algorithm == Algorithm::Ppo {
            if self.batch_size == 0 {
                return bad("batch_size", "must be at least 1");
            }
            if self.n_epochs == 0 {
                return bad("n_epochs", "must be at least 1");
            }
            if self.rollout_size() < self.batch_size {
                return bad("batch_size", "exceeds n_steps * n_envs");
            }
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "layer widths must be positive");
        }
        if self.eval_freq == 0 {
            return bad("eval_freq", "must be at least 1");
        }
        if self.callback.n_eval_episodes == 0 {
            return bad("callback.n_eval_episodes", "must be at least 1");
        }
        Ok(())
    }
}

/// Independent 64-bit seed for `stream` derived from `seed` (SplitMix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainerConfig::a2c().validate().unwrap();
        TrainerConfig::ppo().validate().unwrap();
        let mut c = TrainerConfig::ppo();
        c.gamma = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("gamma"));
        let mut c = TrainerConfig::ppo();
        c.batch_size = 1 << 20;
        assert!(c.validate().unwrap_err().to_string().contains("batch_size"));
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("PPO".parse::<Algorithm>().unwrap(), Algorithm::Ppo);
        assert_eq!(Algorithm::A2c.to_string(), "a2c");
        assert!("dqn".parse::<Algorithm>().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..4).map(|k| derive_seed(7, k)).collect();
        assert!(s.windows(2).all(|w| w[0] != w[1]));
        assert_eq!(derive_seed(7, 2), s[2]);
        assert_ne!(derive_seed(8, 2), s[2]);
    }
}
