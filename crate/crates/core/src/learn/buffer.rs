use std::sync::Arc;

use crate::pointcloud::PseudoImage;
use crate::policy::{ACTION_DIM, PROPRIO_DIM};

/// One decision and what followed it.
#[derive(Debug, Clone)]
pub struct Transition {
    pub image: Arc<PseudoImage>,
    pub proprio: [f64; PROPRIO_DIM],
    pub u: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub value: f64,
    /// Discounted reward collected until the next decision.
    pub reward: f64,
    /// Control ticks covered by this decision.
    pub ticks: u32,
    /// The episode ended after this decision.
    pub done: bool,
    pub aoi: f64,
}

/// Fixed-capacity storage laid out environment-major: all of environment 0's
/// steps, then environment 1's, and so on.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    n_envs: usize,
    horizon: usize,
    steps: Vec<Transition>,
    /// Value of the state following each environment's last step.
    last_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, horizon: usize) -> Self {
        Self {
            n_envs,
            horizon,
            steps: Vec::with_capacity(n_envs * horizon),
            last_values: vec![0.0; n_envs],
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.steps.len() == self.capacity()
    }

    pub fn steps(&self) -> &[Transition] {
        &self.steps
    }

    /// Appends one environment's whole segment and its bootstrap value.
    pub fn push_segment(&mut self, env: usize, segment: Vec<Transition>, last_value: f64) {
        assert_eq!(segment.len(), self.horizon, "segment must span the horizon");
        assert_eq!(
            self.steps.len(),
            env * self.horizon,
            "segments must arrive in order"
        );
        self.steps.extend(segment);
        self.last_values[env] = last_value;
    }

    /// Fills `advantages` and `returns`. Panics if the buffer is not full.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) {
        assert!(self.is_full(), "advantages need a full buffer");
        self.advantages = vec![0.0; self.len()];
        self.returns = vec![0.0; self.len()];
        for env in 0..self.n_envs {
            let range = env * self.horizon..(env + 1) * self.horizon;
            let seg = &self.steps[range.clone()];
            let rewards: Vec<f64> = seg.iter().map(|s| s.reward).collect();
            let values: Vec<f64> = seg.iter().map(|s| s.value).collect();
            let dones: Vec<bool> = seg.iter().map(|s| s.done).collect();
            let ticks: Vec<u32> = seg.iter().map(|s| s.ticks).collect();
            let (adv, ret) = gae(
                &rewards,
                &values,
                &dones,
                &ticks,
                self.last_values[env],
                gamma,
                lambda,
            );
            self.advantages[range.clone()].copy_from_slice(&adv);
            self.returns[range].copy_from_slice(&ret);
        }
    }

    pub fn mean_aoi(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.aoi).sum::<f64>() / self.steps.len() as f64
    }
}

/// Generalised advantage estimation over one trajectory segment.
///
/// A step covering `n` ticks discounts the following value by `gamma^n`.
/// `last_value` bootstraps the state after the final step unless that step
/// ended an episode.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    ticks: &[u32],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let disc = gamma.powi(ticks[t] as i32);
        let delta = rewards[t] + disc * next_value * live - values[t];
        running = delta + disc * lambda * live * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Rescales to zero mean and unit standard deviation.
pub fn normalize(xs: &mut [f64]) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-8);
    xs.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}
