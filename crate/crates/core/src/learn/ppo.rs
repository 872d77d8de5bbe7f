use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{normalize, RolloutBuffer};
use crate::error::{NavError, Result};
use crate::pointcloud::PseudoImage;
use crate::policy::beta::{entropy_grad, log_density_grad};
use crate::policy::{OutputGrad, PolicyNet, PolicyParams, ACTION_DIM, PROPRIO_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub weight_decay: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 0.1,
            gae_lambda: 0.95,
            gamma: 0.99,
            epochs: 4,
            minibatch: 256,
            value_coef: 0.5,
            entropy_coef: 0.003,
            lr: 3e-4,
            weight_decay: 1e-4,
            max_grad_norm: Some(0.5),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.clip_ratio > 0.0
            && self.clip_ratio < 1.0
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && self.gae_lambda > 0.0
            && self.gae_lambda <= 1.0
            && self.epochs > 0
            && self.minibatch > 0
            && self.lr > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(NavError::Config(format!("invalid PPO config {self:?}")))
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Shrinks every parameter by `1 - lr * weight_decay`, then takes the
    /// bias-corrected Adam step.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let shrink = 1.0 - self.lr * self.weight_decay;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *p *= shrink;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// The policy term being optimised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Clipped probability-ratio surrogate.
    Clipped,
    /// Ratio surrogate without clipping.
    Unclipped,
    /// `-A * log pi(a|s)`.
    Vanilla,
}

pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv)
}

/// One training example.
#[derive(Debug, Clone, Copy)]
pub struct PpoSample<'a> {
    pub image: &'a Arc<PseudoImage>,
    pub proprio: &'a [f64; PROPRIO_DIM],
    pub u: &'a [f64; ACTION_DIM],
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Minibatch averages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Mean loss over `batch`; when `grad` is given, its gradient is added into
/// it. Samples sharing a pseudo-image share one perception pass.
pub fn loss_and_grad(
    net: &PolicyNet,
    params: &PolicyParams,
    batch: &[PpoSample],
    cfg: &PpoConfig,
    objective: Objective,
    mut grad: Option<&mut [f64]>,
) -> Result<LossStats> {
    let n = batch.len() as f64;
    let mut stats = LossStats::default();
    let mut groups: HashMap<*const PseudoImage, Vec<usize>> = HashMap::new();
    let mut order = Vec::new();
    for (k, s) in batch.iter().enumerate() {
        groups
            .entry(Arc::as_ptr(s.image))
            .or_insert_with(|| {
                order.push(Arc::as_ptr(s.image));
                Vec::new()
            })
            .push(k);
    }
    for key in order {
        let members = &groups[&key];
        let trace = net.encode_perception_traced(params, batch[members[0]].image)?;
        let mut dz = vec![0.0; trace.z.len()];
        for &k in members {
            let s = &batch[k];
            let ht = net.heads_traced(params, &trace.z, s.proprio)?;
            let bp = &ht.dist;
            let logp = bp.log_prob(s.u);
            let ratio = (logp - s.old_log_prob).exp();
            let (pol, d_logp) = match objective {
                Objective::Clipped => {
                    let c = cfg.clip_ratio;
                    let unclipped = ratio * s.advantage;
                    let clipped = ratio.clamp(1.0 - c, 1.0 + c) * s.advantage;
                    if (ratio - 1.0).abs() > c {
                        stats.clip_fraction += 1.0;
                    }
                    if unclipped <= clipped {
                        (-unclipped, -s.advantage * ratio)
                    } else {
                        (-clipped, 0.0)
                    }
                }
                Objective::Unclipped => (-ratio * s.advantage, -s.advantage * ratio),
                Objective::Vanilla => (-s.advantage * logp, -s.advantage),
            };
            let err = ht.value - s.ret;
            let ent = bp.entropy();
            stats.policy_loss += pol;
            stats.value_loss += err * err;
            stats.entropy += ent;
            stats.approx_kl += s.old_log_prob - logp;
            stats.loss += pol + cfg.value_coef * err * err - cfg.entropy_coef * ent;
            if let Some(g) = grad.as_deref_mut() {
                let mut seed = OutputGrad {
                    d_value: 2.0 * cfg.value_coef * err / n,
                    ..Default::default()
                };
                for d in 0..ACTION_DIM {
                    let (la, lb) = log_density_grad(s.u[d], bp.alpha[d], bp.beta[d]);
                    let (ea, eb) = entropy_grad(bp.alpha[d], bp.beta[d]);
                    seed.d_alpha[d] = (d_logp * la - cfg.entropy_coef * ea) / n;
                    seed.d_beta[d] = (d_logp * lb - cfg.entropy_coef * eb) / n;
                }
                let dzk = net.heads_backward(params, &ht, &seed, g);
                dz.iter_mut().zip(&dzk).for_each(|(a, b)| *a += b);
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            net.perception_backward(params, &trace, &dz, g);
        }
    }
    stats.loss /= n;
    stats.policy_loss /= n;
    stats.value_loss /= n;
    stats.entropy /= n;
    stats.approx_kl /= n;
    stats.clip_fraction /= n;
    Ok(stats)
}

/// Scales `grad` down so its L2 norm is at most `max_norm`; returns the norm
/// before scaling.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Runs the configured epochs of minibatch updates over a buffer whose
/// advantages have been computed. Advantages are normalised first.
pub fn ppo_update<R: Rng + ?Sized>(
    buffer: &RolloutBuffer,
    net: &PolicyNet,
    params: &mut PolicyParams,
    opt: &mut AdamW,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<LossStats> {
    assert_eq!(
        buffer.advantages.len(),
        buffer.len(),
        "compute advantages before updating"
    );
    let mut adv = buffer.advantages.clone();
    normalize(&mut adv);
    let steps = buffer.steps();
    let mut idx: Vec<usize> = (0..steps.len()).collect();
    let mut total = LossStats::default();
    let mut batches = 0usize;
    let mut grad = vec![0.0; params.len()];
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(cfg.minibatch) {
            let batch: Vec<PpoSample> = chunk
                .iter()
                .map(|&i| PpoSample {
                    image: &steps[i].image,
                    proprio: &steps[i].proprio,
                    u: &steps[i].u,
                    old_log_prob: steps[i].log_prob,
                    advantage: adv[i],
                    ret: buffer.returns[i],
                })
                .collect();
            grad.fill(0.0);
            let stats = loss_and_grad(
                net,
                params,
                &batch,
                cfg,
                Objective::Clipped,
                Some(&mut grad),
            )?;
            if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NavError::Divergence(format!(
                    "non-finite loss {} (policy {}, value {}, entropy {})",
                    stats.loss, stats.policy_loss, stats.value_loss, stats.entropy
                )));
            }
            if let Some(max) = cfg.max_grad_norm {
                clip_grad_norm(&mut grad, max);
            }
            opt.step(&mut params.values, &grad);
            total.loss += stats.loss;
            total.policy_loss += stats.policy_loss;
            total.value_loss += stats.value_loss;
            total.entropy += stats.entropy;
            total.approx_kl += stats.approx_kl;
            total.clip_fraction += stats.clip_fraction;
            batches += 1;
        }
    }
    let b = batches.max(1) as f64;
    Ok(LossStats {
        loss: total.loss / b,
        policy_loss: total.policy_loss / b,
        value_loss: total.value_loss / b,
        entropy: total.entropy / b,
        approx_kl: total.approx_kl / b,
        clip_fraction: total.clip_fraction / b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_zero_gradient_is_pure_decay() {
        let mut opt = AdamW::new(3, 3e-4, 1e-4);
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        opt.step(&mut p, &[0.0; 3]);
        for (a, b) in p.iter().zip(&orig) {
            assert_eq!(*a, b * (1.0 - 3e-4 * 1e-4));
        }
    }

    #[test]
    fn clip_is_inactive_inside_band() {
        for &r in &[0.9, 0.95, 1.0, 1.05, 1.1] {
            for &a in &[-2.0, 0.0, 3.0] {
                assert_eq!(clipped_surrogate(r, a, 0.1), r * a);
            }
        }
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.1), 1.1);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.1), -0.9);
    }

    #[test]
    fn grad_norm_clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
