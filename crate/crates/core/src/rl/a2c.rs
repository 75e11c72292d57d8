use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{normalize_advantages, Batch, RlError, RolloutBuffer, TrainerConfig};
use crate::nn::{
    clip_grad_norm, gaussian_entropy, gaussian_log_prob, ForwardCache, GradientSet, MlpParams, OutputGrads, RmsProp,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean policy entropy (nats).
    pub entropy: f64,
    pub total: f64,
}

impl LossReport {
    pub(super) fn check(&self, update: usize) -> Result<(), RlError> {
        if self.total.is_finite() {
            Ok(())
        } else {
            Err(RlError::NonFiniteLoss {
                update,
                policy_loss: self.policy_loss,
                value_loss: self.value_loss,
                entropy: self.entropy,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Global gradient norm after clipping, averaged over optimizer steps.
    pub grad_norm: f64,
    /// Same, before clipping.
    pub grad_norm_raw: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub optimizer_steps: usize,
    pub epochs_completed: usize,
    pub early_stopped: bool,
}

/// Forward pass plus the per-sample pieces every policy loss needs.
pub(super) struct PolicyEval {
    pub cache: ForwardCache,
    pub log_std: Array1<f64>,
    pub values: Array1<f64>,
    pub log_probs: Array1<f64>,
    /// `(a - mean) / std`
    pub z: Array2<f64>,
}

pub(super) fn evaluate_actions(params: &MlpParams, batch: &Batch) -> Result<PolicyEval, RlError> {
    let (out, cache) = params.forward(batch.obs.view())?;
    let inv_std = out.log_std.mapv(|s| (-s).exp());
    let z = (&batch.actions - &out.mean) * &inv_std;
    let log_std = out.log_std.as_slice().expect("contiguous");
    let log_probs = Array1::from_iter((0..batch.len()).map(|k| {
        gaussian_log_prob(
            out.mean.row(k).as_slice().expect("contiguous"),
            log_std,
            batch.actions.row(k).as_slice().expect("contiguous"),
        )
    }));
    Ok(PolicyEval {
        cache,
        log_std: out.log_std,
        values: out.value,
        log_probs,
        z,
    })
}

/// Gradient of `sum_n w_n log_prob_n + value_weight * sum_n (V_n - R_n)^2
/// - ent_coef * entropy` with respect to the network outputs.
pub(super) fn output_grads(
    eval: &PolicyEval,
    log_prob_weights: &Array1<f64>,
    returns: &Array1<f64>,
    value_weight: f64,
    ent_coef: f64,
) -> OutputGrads {
    let inv_std = eval.log_std.mapv(|s| (-s).exp());
    let w = log_prob_weights.view().insert_axis(Axis(1));
    let mean = &eval.z * &w * &inv_std;
    let log_std = (eval.z.mapv(|z| z * z - 1.0) * w).sum_axis(Axis(0)) - ent_coef;
    let value = (&eval.values - returns) * (2.0 * value_weight);
    OutputGrads { mean, log_std, value }
}

/// A2C loss `-mean(log_prob * A) + vf_coef * mean((V - R)^2) - ent_coef *
/// entropy` and its gradient. Advantages are used as given.
pub fn a2c_loss(
    params: &MlpParams,
    batch: &Batch,
    vf_coef: f64,
    ent_coef: f64,
) -> Result<(LossReport, GradientSet), RlError> {
    let n = batch.len() as f64;
    let eval = evaluate_actions(params, batch)?;
    let policy_loss = -(&eval.log_probs * &batch.advantages).sum() / n;
    let value_loss = (&eval.values - &batch.returns).mapv(|d| d * d).sum() / n;
    let entropy = gaussian_entropy(eval.log_std.as_slice().expect("contiguous"));
    let report = LossReport {
        policy_loss,
        value_loss,
        entropy,
        total: policy_loss + vf_coef * value_loss - ent_coef * entropy,
    };
    let weights = batch.advantages.mapv(|a| -a / n);
    let grads = output_grads(&eval, &weights, &batch.returns, vf_coef / n, ent_coef);
    Ok((report, params.backward(&eval.cache, &grads)))
}

/// One synchronous gradient step on the whole rollout with RMSProp.
pub fn a2c_update(
    params: &mut MlpParams,
    optimizer: &mut RmsProp,
    buffer: &RolloutBuffer,
    config: &TrainerConfig,
    update: usize,
) -> Result<UpdateMetrics, RlError> {
    let mut batch = buffer.full_batch()?;
    if config.normalize_advantage {
        normalize_advantages(batch.advantages.as_slice_mut().expect("contiguous"));
    }
    let (report, mut grads) = a2c_loss(params, &batch, config.vf_coef, config.ent_coef)?;
    report.check(update)?;
    if !grads.all_finite() {
        return Err(RlError::NonFiniteLoss {
            update,
            policy_loss: report.policy_loss,
            value_loss: report.value_loss,
            entropy: report.entropy,
        });
    }
    let raw = clip_grad_norm(&mut grads, config.max_grad_norm);
    optimizer.step(params, &grads);
    if !params.all_finite() {
        return Err(RlError::NonFiniteParameters(update));
    }
    Ok(UpdateMetrics {
        policy_loss: report.policy_loss,
        value_loss: report.value_loss,
        entropy: report.entropy,
        grad_norm: grads.l2_norm(),
        grad_norm_raw: raw,
        optimizer_steps: 1,
        epochs_completed: 1,
        ..Default::default()
    })
}
