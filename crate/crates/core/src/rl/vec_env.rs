use std::sync::Arc;

use ndarray::Array2;

use super::{derive_seed, RlError};
use crate::env::{
    flatten_observation, ActionVector, MissionConfig, Observation, OrbitEnv, SafetyCatalog, OBSERVATION_DIM,
};

/// Environment `k` draws from stream `ENV_STREAM + k` of the run seed.
pub(crate) const ENV_STREAM: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// Sum of raw rewards.
    pub reward: f64,
    pub length: usize,
    pub objectives_met: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VecStep {
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Final observation of each episode that ended on this step; the env
    /// itself has already been reset.
    pub terminal_obs: Vec<Option<Observation>>,
    pub finished: Vec<EpisodeRecord>,
}

impl VecStep {
    pub fn dones(&self) -> Vec<bool> {
        self.terminated
            .iter()
            .zip(&self.truncated)
            .map(|(a, b)| *a || *b)
            .collect()
    }
}

/// Environments stepped in lockstep in index order, with automatic reset.
#[derive(Debug, Clone)]
pub struct VecEnv {
    envs: Vec<OrbitEnv>,
    obs: Vec<Observation>,
    ep_reward: Vec<f64>,
    ep_len: Vec<usize>,
}

impl VecEnv {
    pub fn new(mission: Arc<MissionConfig>, catalog: Arc<SafetyCatalog>, n_envs: usize, seed: u64) -> Self {
        let envs: Vec<OrbitEnv> = (0..n_envs as u64)
            .map(|k| OrbitEnv::with_catalog(mission.clone(), catalog.clone(), derive_seed(seed, ENV_STREAM + k)))
            .collect();
        let mut out = Self {
            obs: Vec::with_capacity(envs.len()),
            ep_reward: vec![0.0; envs.len()],
            ep_len: vec![0; envs.len()],
            envs,
        };
        out.reset();
        out
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[OrbitEnv] {
        &self.envs
    }

    pub fn mission(&self) -> &MissionConfig {
        self.envs[0].mission()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn flat(&self, obs: &Observation) -> [f64; OBSERVATION_DIM] {
        flatten_observation(obs, &self.mission().element_bounds)
    }

    /// Current observations, one row per environment.
    pub fn flat_observations(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), OBSERVATION_DIM));
        for (k, o) in self.obs.iter().enumerate() {
            out.row_mut(k).assign(&ndarray::ArrayView1::from(&self.flat(o)));
        }
        out
    }

    /// Starts a new episode in every environment from its own stream.
    pub fn reset(&mut self) -> &[Observation] {
        self.obs = self.envs.iter_mut().map(|e| e.reset(None)).collect();
        self.ep_reward.iter_mut().for_each(|r| *r = 0.0);
        self.ep_len.iter_mut().for_each(|n| *n = 0);
        &self.obs
    }

    /// Abandons the running episodes and re-randomizes every orbit.
    pub fn force_relocate(&mut self) {
        self.reset();
    }

    pub fn step(&mut self, actions: &[ActionVector]) -> Result<VecStep, RlError> {
        let n = self.len();
        let mut out = VecStep {
            rewards: Vec::with_capacity(n),
            terminated: Vec::with_capacity(n),
            truncated: Vec::with_capacity(n),
            terminal_obs: Vec::with_capacity(n),
            finished: Vec::new(),
        };
        for (k, (env, action)) in self.envs.iter_mut().zip(actions).enumerate() {
            let r = env.step(action).map_err(|source| RlError::Env { index: k, source })?;
            self.ep_reward[k] += r.reward;
            self.ep_len[k] += 1;
            out.rewards.push(r.reward);
            out.terminated.push(r.terminated);
            out.truncated.push(r.truncated);
            if r.terminated || r.truncated {
                out.finished.push(EpisodeRecord {
                    reward: self.ep_reward[k],
                    length: self.ep_len[k],
                    objectives_met: r.info.all_objectives_met,
                });
                out.terminal_obs.push(Some(r.observation));
                self.ep_reward[k] = 0.0;
                self.ep_len[k] = 0;
                self.obs[k] = env.reset(None);
            } else {
                out.terminal_obs.push(None);
                self.obs[k] = r.observation;
            }
        }
        Ok(out)
    }
}
