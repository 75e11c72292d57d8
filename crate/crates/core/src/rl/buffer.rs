use ndarray::{Array1, Array2, ArrayView1};

use super::{compute_gae, RlError};

/// Training batch gathered from a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub old_log_probs: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Transitions of `n_envs` environments over `n_steps` lockstep steps.
/// Row `t * n_envs + e` holds step `t` of environment `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub n_steps: usize,
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Rewards fed to the advantage estimate (normalized, truncation
    /// bootstrapped).
    pub rewards: Vec<f64>,
    pub raw_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub bootstrap_values: Vec<f64>,
    advantages: Option<Vec<f64>>,
    returns: Vec<f64>,
    filled: usize,
}

/// One lockstep step of every environment.
pub struct StepRecord<'a> {
    pub observations: ArrayView1<'a, f64>,
    pub action: &'a [f64],
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub raw_reward: f64,
    pub done: bool,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, n_steps: usize, obs_dim: usize, action_dim: usize) -> Self {
        let rows = n_envs * n_steps;
        Self {
            n_envs,
            n_steps,
            observations: Array2::zeros((rows, obs_dim)),
            actions: Array2::zeros((rows, action_dim)),
            log_probs: vec![0.0; rows],
            values: vec![0.0; rows],
            rewards: vec![0.0; rows],
            raw_rewards: vec![0.0; rows],
            dones: vec![false; rows],
            bootstrap_values: vec![0.0; n_envs],
            advantages: None,
            returns: vec![0.0; rows],
            filled: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.filled
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.n_envs * self.n_steps
    }

    /// Appends the next transition in row order.
    pub fn push(&mut self, rec: StepRecord<'_>) {
        let row = self.filled;
        assert!(row < self.n_envs * self.n_steps, "rollout buffer overflow");
        self.observations.row_mut(row).assign(&rec.observations);
        self.actions.row_mut(row).assign(&ArrayView1::from(rec.action));
        self.log_probs[row] = rec.log_prob;
        self.values[row] = rec.value;
        self.rewards[row] = rec.reward;
        self.raw_rewards[row] = rec.raw_reward;
        self.dones[row] = rec.done;
        self.filled += 1;
        self.advantages = None;
    }

    fn column<T: Copy>(&self, data: &[T], env: usize) -> Vec<T> {
        (0..self.n_steps).map(|t| data[t * self.n_envs + env]).collect()
    }

    /// Runs GAE down each environment's column.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<(), RlError> {
        let mut adv = vec![0.0; self.n_envs * self.n_steps];
        for e in 0..self.n_envs {
            let (a, r) = compute_gae(
                &self.column(&self.rewards, e),
                &self.column(&self.values, e),
                &self.column(&self.dones, e),
                self.bootstrap_values[e],
                gamma,
                lambda,
            )?;
            for t in 0..self.n_steps {
                adv[t * self.n_envs + e] = a[t];
                self.returns[t * self.n_envs + e] = r[t];
            }
        }
        self.advantages = Some(adv);
        Ok(())
    }

    pub fn advantages(&self) -> Result<&[f64], RlError> {
        self.advantages.as_deref().ok_or(RlError::StaleAdvantages)
    }

    pub fn returns(&self) -> Result<&[f64], RlError> {
        self.advantages()?;
        Ok(&self.returns)
    }

    pub fn batch(&self, rows: &[usize]) -> Result<Batch, RlError> {
        let adv = self.advantages()?;
        Ok(Batch {
            obs: self.observations.select(ndarray::Axis(0), rows),
            actions: self.actions.select(ndarray::Axis(0), rows),
            old_log_probs: rows.iter().map(|&r| self.log_probs[r]).collect(),
            advantages: rows.iter().map(|&r| adv[r]).collect(),
            returns: rows.iter().map(|&r| self.returns[r]).collect(),
        })
    }

    pub fn full_batch(&self) -> Result<Batch, RlError> {
        let rows: Vec<usize> = (0..self.filled).collect();
        self.batch(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn layout_and_staleness() {
        let mut b = RolloutBuffer::new(2, 2, 1, 1);
        for (k, done) in [false, false, true, false].into_iter().enumerate() {
            b.push(StepRecord {
                observations: array![k as f64].view(),
                action: &[0.5],
                log_prob: -1.0,
                value: 0.0,
                reward: 1.0 + k as f64,
                raw_reward: 1.0,
                done,
            });
        }
        assert!(b.is_full());
        assert!(matches!(b.full_batch(), Err(RlError::StaleAdvantages)));
        b.bootstrap_values = vec![10.0, 20.0];
        b.compute_advantages(1.0, 1.0).unwrap();
        // env 0: rewards 1, 3 with a done at t = 1; env 1: rewards 2, 4.
        assert_eq!(b.advantages().unwrap(), &[4.0, 26.0, 3.0, 24.0]);
        let batch = b.batch(&[3, 0]).unwrap();
        assert_eq!(batch.obs, array![[3.0], [0.0]]);
        assert_eq!(batch.returns, array![24.0, 4.0]);
    }
}
