use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub const NORM_CLIP: f64 = 10.0;
pub const NORM_EPSILON: f64 = 1e-8;

/// Streaming mean and variance per dimension, merged batch by batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges the statistics of `batch` (one row per sample).
    pub fn update(&mut self, batch: ArrayView2<f64>) {
        let n = batch.nrows();
        if n == 0 {
            return;
        }
        let nb = n as f64;
        let total = self.count + nb;
        for k in 0..self.dim() {
            let col = batch.column(k);
            let batch_mean = col.sum() / nb;
            let batch_var = col.iter().map(|x| (x - batch_mean).powi(2)).sum::<f64>() / nb;
            let delta = batch_mean - self.mean[k];
            let m2 = self.var[k] * self.count + batch_var * nb + delta * delta * self.count * nb / total;
            self.mean[k] += delta * nb / total;
            self.var[k] = m2 / total;
        }
        self.count = total;
    }
}

/// Observation and reward scaling in the style of a normalizing vector-env
/// wrapper. Rewards are divided by the running standard deviation of the
/// discounted return, never shifted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub obs: RunningMeanStd,
    pub ret: RunningMeanStd,
    pub gamma: f64,
    pub norm_obs: bool,
    pub norm_reward: bool,
    /// When false, statistics are frozen.
    pub training: bool,
    returns: Vec<f64>,
}

impl RunningNormalizer {
    pub fn new(obs_dim: usize, n_envs: usize, gamma: f64) -> Self {
        Self {
            obs: RunningMeanStd::new(obs_dim),
            ret: RunningMeanStd::new(1),
            gamma,
            norm_obs: true,
            norm_reward: true,
            training: true,
            returns: vec![0.0; n_envs],
        }
    }

    /// Frozen copy for evaluation.
    pub fn frozen(&self) -> Self {
        let mut out = self.clone();
        out.training = false;
        out
    }

    pub fn observe(&mut self, batch: ArrayView2<f64>) {
        if self.training && self.norm_obs {
            self.obs.update(batch);
        }
    }

    pub fn normalize_obs(&self, x: &[f64]) -> Vec<f64> {
        if !self.norm_obs {
            return x.to_vec();
        }
        x.iter()
            .zip(&self.obs.mean)
            .zip(&self.obs.var)
            .map(|((x, m), v)| ((x - m) / (v + NORM_EPSILON).sqrt()).clamp(-NORM_CLIP, NORM_CLIP))
            .collect()
    }

    /// Scales one vectorized step of rewards and advances the discounted
    /// return trackers, which restart wherever `dones` is set.
    pub fn normalize_rewards(&mut self, rewards: &[f64], dones: &[bool]) -> Vec<f64> {
        if self.training && self.norm_reward {
            for (g, r) in self.returns.iter_mut().zip(rewards) {
                *g = *g * self.gamma + r;
            }
            let col = ArrayView2::from_shape((self.returns.len(), 1), &self.returns).expect("column view");
            self.ret.update(col);
        }
        let out = if self.norm_reward {
            let scale = (self.ret.var[0] + NORM_EPSILON).sqrt();
            rewards
                .iter()
                .map(|r| (r / scale).clamp(-NORM_CLIP, NORM_CLIP))
                .collect()
        } else {
            rewards.to_vec()
        };
        for (g, d) in self.returns.iter_mut().zip(dones) {
            if *d {
                *g = 0.0;
            }
        }
        out
    }

    pub fn reset_returns(&mut self) {
        self.returns.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn first_batch_sets_moments() {
        let mut rms = RunningMeanStd::new(2);
        rms.update(array![[1.0, 10.0], [3.0, 10.0]].view());
        assert_eq!(rms.count, 2.0);
        assert_eq!(rms.mean, vec![2.0, 10.0]);
        assert_eq!(rms.var, vec![1.0, 0.0]);
    }

    #[test]
    fn constant_observations_normalize_to_zero() {
        let mut n = RunningNormalizer::new(3, 2, 0.99);
        for _ in 0..5 {
            n.observe(Array2::from_elem((2, 3), 4.2).view());
        }
        assert!(n.normalize_obs(&[4.2; 3]).iter().all(|x| x.abs() < 1e-9));
        assert_eq!(n.normalize_obs(&[1e9, -1e9, 4.2])[..2], [NORM_CLIP, -NORM_CLIP]);
    }

    #[test]
    fn rewards_keep_sign_and_frozen_is_frozen() {
        let mut n = RunningNormalizer::new(1, 2, 0.99);
        for k in 0..20 {
            let r = [k as f64, -(k as f64) * 0.5];
            let out = n.normalize_rewards(&r, &[k % 7 == 0, false]);
            for (a, b) in r.iter().zip(&out) {
                assert!(a.signum() == b.signum() || *a == 0.0);
            }
        }
        let mut f = n.frozen();
        let before = f.clone();
        f.observe(array![[3.0]].view());
        f.normalize_rewards(&[5.0, 5.0], &[false, false]);
        assert_eq!(f.obs, before.obs);
        assert_eq!(f.ret, before.ret);
    }
}
