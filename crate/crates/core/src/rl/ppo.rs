use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::a2c::{evaluate_actions, output_grads, LossReport, UpdateMetrics};
use super::{normalize_advantages, Batch, RlError, RolloutBuffer, TrainerConfig};
use crate::nn::{clip_grad_norm, gaussian_entropy, Adam, GradientSet, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoStats {
    /// `mean((ratio - 1) - ln ratio)`
    pub approx_kl: f64,
    /// Fraction of samples whose ratio lies outside `1 +/- epsilon`.
    pub clip_fraction: f64,
}

/// Clipped-surrogate loss and its gradient on one minibatch.
pub fn ppo_loss(
    params: &MlpParams,
    batch: &Batch,
    clip_epsilon: f64,
    vf_coef: f64,
    ent_coef: f64,
) -> Result<(LossReport, PpoStats, GradientSet), RlError> {
    let n = batch.len() as f64;
    let eval = evaluate_actions(params, batch)?;
    let log_ratio = &eval.log_probs - &batch.old_log_probs;
    let ratio = log_ratio.mapv(f64::exp);

    let mut surrogate = 0.0;
    let mut clipped = 0usize;
    let mut weights = ndarray::Array1::zeros(batch.len());
    for k in 0..batch.len() {
        let (r, a) = (ratio[k], batch.advantages[k]);
        let rc = r.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
        if (r - 1.0).abs() > clip_epsilon {
            clipped += 1;
        }
        let (unclipped, bounded) = (r * a, rc * a);
        if unclipped <= bounded {
            surrogate += unclipped;
            // d(ratio * A)/d(log_prob) = ratio * A
            weights[k] = -r * a / n;
        } else {
            surrogate += bounded;
        }
    }
    let policy_loss = -surrogate / n;
    let value_loss = (&eval.values - &batch.returns).mapv(|d| d * d).sum() / n;
    let entropy = gaussian_entropy(eval.log_std.as_slice().expect("contiguous"));
    let approx_kl = log_ratio.iter().map(|lr| lr.exp() - 1.0 - lr).sum::<f64>() / n;
    let report = LossReport {
        policy_loss,
        value_loss,
        entropy,
        total: policy_loss + vf_coef * value_loss - ent_coef * entropy,
    };
    let stats = PpoStats {
        approx_kl,
        clip_fraction: clipped as f64 / n,
    };
    let grads = output_grads(&eval, &weights, &batch.returns, vf_coef / n, ent_coef);
    Ok((report, stats, params.backward(&eval.cache, &grads)))
}

/// Up to `n_epochs` passes of shuffled minibatches with Adam. Stops all
/// remaining work as soon as a minibatch's KL estimate, measured before its
/// step, exceeds `target_kl`.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut MlpParams,
    optimizer: &mut Adam,
    buffer: &RolloutBuffer,
    config: &TrainerConfig,
    rng: &mut R,
    update: usize,
) -> Result<UpdateMetrics, RlError> {
    let rows = buffer.len();
    let mut order: Vec<usize> = (0..rows).collect();
    let mut m = UpdateMetrics::default();
    let mut kl_sum = 0.0;
    let mut kl_count = 0usize;
    'epochs: for _ in 0..config.n_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            let mut batch = buffer.batch(chunk)?;
            if config.normalize_advantage {
                normalize_advantages(batch.advantages.as_slice_mut().expect("contiguous"));
            }
            let (report, stats, mut grads) =
                ppo_loss(params, &batch, config.clip_epsilon, config.vf_coef, config.ent_coef)?;
            report.check(update)?;
            kl_sum += stats.approx_kl;
            kl_count += 1;
            if config.target_kl.is_some_and(|t| stats.approx_kl > t) {
                m.early_stopped = true;
                break 'epochs;
            }
            if !grads.all_finite() {
                return Err(RlError::NonFiniteLoss {
                    update,
                    policy_loss: report.policy_loss,
                    value_loss: report.value_loss,
                    entropy: report.entropy,
                });
            }
            m.grad_norm_raw += clip_grad_norm(&mut grads, config.max_grad_norm);
            m.grad_norm += grads.l2_norm();
            optimizer.step(params, &grads);
            if !params.all_finite() {
                return Err(RlError::NonFiniteParameters(update));
            }
            m.policy_loss += report.policy_loss;
            m.value_loss += report.value_loss;
            m.entropy += report.entropy;
            m.clip_fraction += stats.clip_fraction;
            m.optimizer_steps += 1;
        }
        m.epochs_completed += 1;
    }
    let steps = m.optimizer_steps.max(1) as f64;
    m.policy_loss /= steps;
    m.value_loss /= steps;
    m.entropy /= steps;
    m.clip_fraction /= steps;
    m.grad_norm /= steps;
    m.grad_norm_raw /= steps;
    m.approx_kl = if kl_count > 0 { kl_sum / kl_count as f64 } else { 0.0 };
    Ok(m)
}
