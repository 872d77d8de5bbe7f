use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::beta::BetaParams;
use super::layers::{sigmoid, softplus, tanh_backward, tanh_inplace, Conv2d, Dense};
use super::{ACTION_DIM, PROPRIO_DIM, PROPRIO_SCALE};
use crate::error::{NavError, Result};
use crate::pointcloud::{PillarGridSpec, PseudoImage};

/// Architecture hyperparameters. Shapes are fixed once a network is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub image_rows: usize,
    pub image_cols: usize,
    /// Range used to normalise image cells into [0, 1].
    pub r_max: f64,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    /// Offset added to the softplus outputs of the actor head.
    pub epsilon: f64,
    /// Per-axis command bound (m/s).
    pub v_max: f64,
}

impl PolicyConfig {
    /// Default architecture sized for `spec`.
    pub fn for_grid(spec: &PillarGridSpec) -> Self {
        Self {
            image_rows: spec.n_phi(),
            image_cols: spec.n_theta(),
            r_max: spec.r_max(),
            conv_channels: vec![8, 16],
            kernel: 3,
            stride: 2,
            feature_dim: 32,
            hidden: vec![128, 128],
            epsilon: 1.0,
            v_max: 5.0,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.feature_dim + PROPRIO_DIM
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.image_rows > 0
            && self.image_cols > 0
            && self.kernel > 0
            && self.stride > 0
            && self.feature_dim > 0
            && self.conv_channels.iter().all(|&c| c > 0)
            && self.hidden.iter().all(|&h| h > 0);
        if !positive || !(self.r_max > 0.0 && self.epsilon > 0.0 && self.v_max > 0.0) {
            return Err(NavError::Config(format!("invalid policy config {self:?}")));
        }
        Ok(())
    }
}

/// Activations kept from a perception pass for backpropagation.
#[derive(Debug, Clone)]
pub struct PerceptionTrace {
    /// Input followed by each conv layer's post-tanh output.
    acts: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

/// Activations kept from a head pass for backpropagation.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    /// Scaled input followed by each hidden layer's post-tanh output.
    acts: Vec<Vec<f64>>,
    pre: Vec<f64>,
    pub dist: BetaParams,
    pub value: f64,
}

/// Loss sensitivities with respect to the network outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputGrad {
    pub d_alpha: [f64; ACTION_DIM],
    pub d_beta: [f64; ACTION_DIM],
    pub d_value: f64,
}

/// Records one full forward pass so gradients can be taken afterwards.
#[derive(Debug, Default)]
pub struct Tape {
    perception: Option<PerceptionTrace>,
    heads: Option<HeadTrace>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_none()
    }

    pub fn clear(&mut self) {
        self.perception = None;
        self.heads = None;
    }
}

/// Flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub values: Vec<f64>,
}

impl PolicyParams {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Conv backbone, shared tanh MLP, Beta actor head and value head.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    cfg: PolicyConfig,
    convs: Vec<Conv2d>,
    proj: Dense,
    mlp: Vec<Dense>,
    actor: Dense,
    critic: Dense,
    n_params: usize,
}

/// Named parameter block, for diagnostics and per-block gradient checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub range: std::ops::Range<usize>,
}

impl PolicyNet {
    pub fn new(cfg: PolicyConfig) -> Result<Self> {
        cfg.validate()?;
        let mut offset = 0;
        let mut convs = Vec::new();
        let (mut c, mut h, mut w) = (1, cfg.image_rows, cfg.image_cols);
        for &oc in &cfg.conv_channels {
            let pad = cfg.kernel / 2;
            if h + 2 * pad < cfg.kernel || w + 2 * pad < cfg.kernel {
                return Err(NavError::Config(format!(
                    "image {h}x{w} too small for conv stack"
                )));
            }
            let layer = Conv2d {
                in_channels: c,
                out_channels: oc,
                kernel: cfg.kernel,
                stride: cfg.stride,
                padding: pad,
                in_h: h,
                in_w: w,
                offset,
            };
            offset += layer.param_count();
            (c, h, w) = (oc, layer.out_h(), layer.out_w());
            convs.push(layer);
        }
        let mut dense = |inputs: usize, outputs: usize| {
            let d = Dense {
                inputs,
                outputs,
                offset,
            };
            offset += d.param_count();
            d
        };
        let proj = dense(c * h * w, cfg.feature_dim);
        let mut width = cfg.obs_dim();
        let mut mlp = Vec::new();
        for &hd in &cfg.hidden {
            mlp.push(dense(width, hd));
            width = hd;
        }
        let actor = dense(width, 2 * ACTION_DIM);
        let critic = dense(width, 1);
        Ok(Self {
            cfg,
            convs,
            proj,
            mlp,
            actor,
            critic,
            n_params: offset,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        let mut out = Vec::new();
        let mut push = |name: String, offset: usize, len: usize| {
            out.push(ParamBlock {
                name,
                range: offset..offset + len,
            })
        };
        for (i, c) in self.convs.iter().enumerate() {
            push(format!("conv{i}"), c.offset, c.param_count());
        }
        push("feature".into(), self.proj.offset, self.proj.param_count());
        for (i, d) in self.mlp.iter().enumerate() {
            push(format!("hidden{i}"), d.offset, d.param_count());
        }
        push("actor".into(), self.actor.offset, self.actor.param_count());
        push(
            "critic".into(),
            self.critic.offset,
            self.critic.param_count(),
        );
        out
    }

    /// Scaled-uniform initialisation. Both heads start near zero so the
    /// initial action distribution is symmetric about the mid-range command.
    pub fn init_params(&self, seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; self.n_params];
        let mut fill = |offset: usize, n_w: usize, fan_in: usize, fan_out: usize, gain: f64| {
            let s = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut values[offset..offset + n_w] {
                *v = rng.random_range(-s..s);
            }
        };
        for c in &self.convs {
            let k2 = c.kernel * c.kernel;
            fill(
                c.offset,
                c.out_channels * c.in_channels * k2,
                c.in_channels * k2,
                c.out_channels * k2,
                1.0,
            );
        }
        for d in std::iter::once(&self.proj).chain(&self.mlp) {
            fill(d.offset, d.inputs * d.outputs, d.inputs, d.outputs, 1.0);
        }
        fill(
            self.actor.offset,
            self.actor.inputs * self.actor.outputs,
            self.actor.inputs,
            self.actor.outputs,
            0.01,
        );
        fill(
            self.critic.offset,
            self.critic.inputs,
            self.critic.inputs,
            1,
            0.1,
        );
        PolicyParams { values }
    }

    fn check_params(&self, params: &PolicyParams) -> Result<()> {
        if params.len() != self.n_params {
            return Err(NavError::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params,
                params.len()
            )));
        }
        Ok(())
    }

    fn check_image(&self, img: &PseudoImage) -> Result<()> {
        let s = img.spec();
        if s.n_phi() != self.cfg.image_rows || s.n_theta() != self.cfg.image_cols {
            return Err(NavError::Config(format!(
                "image is {}x{}, network expects {}x{}",
                s.n_phi(),
                s.n_theta(),
                self.cfg.image_rows,
                self.cfg.image_cols
            )));
        }
        Ok(())
    }

    pub fn encode_perception_traced(
        &self,
        params: &PolicyParams,
        img: &PseudoImage,
    ) -> Result<PerceptionTrace> {
        self.check_image(img)?;
        self.check_params(params)?;
        let p = &params.values;
        let inv = 1.0 / self.cfg.r_max;
        let mut acts = vec![img.values().iter().map(|v| v * inv).collect::<Vec<_>>()];
        for c in &self.convs {
            let mut y = vec![0.0; c.out_len()];
            c.forward(p, acts.last().unwrap(), &mut y);
            tanh_inplace(&mut y);
            acts.push(y);
        }
        let mut z = vec![0.0; self.cfg.feature_dim];
        self.proj.forward(p, acts.last().unwrap(), &mut z);
        Ok(PerceptionTrace { acts, z })
    }

    /// Perception feature for a pseudo-image.
    pub fn encode_perception(&self, params: &PolicyParams, img: &PseudoImage) -> Result<Vec<f64>> {
        Ok(self.encode_perception_traced(params, img)?.z)
    }

    /// Accumulates parameter gradients given the loss gradient at `z`.
    pub fn perception_backward(
        &self,
        params: &PolicyParams,
        trace: &PerceptionTrace,
        dz: &[f64],
        grad: &mut [f64],
    ) {
        let p = &params.values;
        let last = trace.acts.len() - 1;
        let mut d = vec![0.0; trace.acts[last].len()];
        self.proj
            .backward(p, &trace.acts[last], dz, grad, Some(&mut d));
        for (k, c) in self.convs.iter().enumerate().rev() {
            tanh_backward(&trace.acts[k + 1], &mut d);
            if k == 0 {
                c.backward(p, &trace.acts[0], &d, grad, None);
            } else {
                let mut dx = vec![0.0; c.in_len()];
                c.backward(p, &trace.acts[k], &d, grad, Some(&mut dx));
                d = dx;
            }
        }
    }

    pub fn heads_traced(
        &self,
        params: &PolicyParams,
        z: &[f64],
        proprio: &[f64],
    ) -> Result<HeadTrace> {
        self.check_params(params)?;
        if z.len() != self.cfg.feature_dim || proprio.len() != PROPRIO_DIM {
            return Err(NavError::Shape(format!(
                "observation parts have sizes {}+{}, expected {}+{}",
                z.len(),
                proprio.len(),
                self.cfg.feature_dim,
                PROPRIO_DIM
            )));
        }
        let p = &params.values;
        let mut x = Vec::with_capacity(self.cfg.obs_dim());
        x.extend_from_slice(z);
        x.extend(proprio.iter().zip(PROPRIO_SCALE).map(|(v, s)| v * s));
        let mut acts = vec![x];
        for d in &self.mlp {
            let mut y = vec![0.0; d.outputs];
            d.forward(p, acts.last().unwrap(), &mut y);
            tanh_inplace(&mut y);
            acts.push(y);
        }
        let h = acts.last().unwrap();
        let mut pre = vec![0.0; 2 * ACTION_DIM];
        self.actor.forward(p, h, &mut pre);
        let mut v = [0.0];
        self.critic.forward(p, h, &mut v);
        let eps = self.cfg.epsilon;
        let dist = BetaParams {
            alpha: pre[..ACTION_DIM]
                .iter()
                .map(|&x| softplus(x) + eps)
                .collect(),
            beta: pre[ACTION_DIM..]
                .iter()
                .map(|&x| softplus(x) + eps)
                .collect(),
        };
        Ok(HeadTrace {
            acts,
            pre,
            dist,
            value: v[0],
        })
    }

    /// Action distribution and value for an assembled observation.
    pub fn heads(
        &self,
        params: &PolicyParams,
        z: &[f64],
        proprio: &[f64],
    ) -> Result<(BetaParams, f64)> {
        let t = self.heads_traced(params, z, proprio)?;
        Ok((t.dist, t.value))
    }

    /// Accumulates parameter gradients and returns the gradient at `z`.
    pub fn heads_backward(
        &self,
        params: &PolicyParams,
        trace: &HeadTrace,
        seed: &OutputGrad,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let p = &params.values;
        let mut d_pre = vec![0.0; 2 * ACTION_DIM];
        for k in 0..ACTION_DIM {
            d_pre[k] = seed.d_alpha[k] * sigmoid(trace.pre[k]);
            d_pre[ACTION_DIM + k] = seed.d_beta[k] * sigmoid(trace.pre[ACTION_DIM + k]);
        }
        let last = trace.acts.len() - 1;
        let h = &trace.acts[last];
        let mut d = vec![0.0; h.len()];
        self.actor.backward(p, h, &d_pre, grad, Some(&mut d));
        let mut dv = vec![0.0; h.len()];
        self.critic
            .backward(p, h, &[seed.d_value], grad, Some(&mut dv));
        d.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
        for (k, layer) in self.mlp.iter().enumerate().rev() {
            tanh_backward(&trace.acts[k + 1], &mut d);
            let mut dx = vec![0.0; layer.inputs];
            layer.backward(p, &trace.acts[k], &d, grad, Some(&mut dx));
            d = dx;
        }
        d.truncate(self.cfg.feature_dim);
        d
    }

    /// Full pass from pseudo-image and proprioceptive slots, recorded on `tape`.
    pub fn forward(
        &self,
        params: &PolicyParams,
        img: &PseudoImage,
        proprio: &[f64],
        tape: &mut Tape,
    ) -> Result<(BetaParams, f64)> {
        let pt = self.encode_perception_traced(params, img)?;
        let ht = self.heads_traced(params, &pt.z, proprio)?;
        let out = (ht.dist.clone(), ht.value);
        tape.perception = Some(pt);
        tape.heads = Some(ht);
        Ok(out)
    }

    /// Backpropagates `seed` through the pass recorded on `tape`, adding into `grad`.
    pub fn backward(
        &self,
        params: &PolicyParams,
        tape: &Tape,
        seed: &OutputGrad,
        grad: &mut [f64],
    ) -> Result<()> {
        let (Some(pt), Some(ht)) = (&tape.perception, &tape.heads) else {
            return Err(NavError::Usage(
                "backward called before any forward pass".into(),
            ));
        };
        if grad.len() != self.n_params {
            return Err(NavError::Shape(format!(
                "gradient buffer has {} slots, expected {}",
                grad.len(),
                self.n_params
            )));
        }
        let dz = self.heads_backward(params, ht, seed, grad);
        self.perception_backward(params, pt, &dz, grad);
        Ok(())
    }
}
