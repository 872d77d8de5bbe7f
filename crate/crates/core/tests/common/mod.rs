//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use asyncnav::harness::presets::toy_train;
use asyncnav::learn::TrainConfig;
use asyncnav::policy::{PolicyNet, PolicyParams};

/// Inverse softplus.
pub fn softplus_inv(y: f64) -> f64 {
    y.exp_m1().ln()
}

/// A policy whose weights are all zero and whose actor biases make the mean
/// command point straight ahead at `forward` of the axis range, with zero
/// lateral and vertical components.
pub fn cruise_policy(net: &PolicyNet, forward: f64) -> PolicyParams {
    assert!((0.0..1.0).contains(&forward));
    let mut params = net.init_params(0);
    params.values.iter_mut().for_each(|v| *v = 0.0);
    let actor = net
        .blocks()
        .into_iter()
        .find(|b| b.name == "actor")
        .expect("actor block");
    let eps = net.config().epsilon;
    // Mean on the forward axis is alpha / (alpha + beta) = (1 + forward) / 2.
    let (a_x, b_x) = (1.0 + forward, 1.0 - forward);
    let scale = 4.0;
    let biases = [a_x * scale, scale, scale, b_x * scale, scale, scale];
    let start = actor.range.end - biases.len();
    for (slot, target) in params.values[start..actor.range.end].iter_mut().zip(biases) {
        *slot = softplus_inv(target - eps);
    }
    params
}

/// The toy training setup shrunk to a few seconds of compute.
pub fn tiny_train(iterations: usize) -> TrainConfig {
    let mut cfg = toy_train();
    cfg.n_envs = 4;
    cfg.horizon = 32;
    cfg.iterations = iterations;
    cfg.curriculum.max_sync_iters = iterations / 2;
    cfg.ppo.epochs = 2;
    cfg.ppo.minibatch = 32;
    cfg
}
