//! Beta distribution helpers for the actor head.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

/// Samples are kept this far from the open interval's ends.
pub const SAMPLE_MARGIN: f64 = 1e-6;

/// Derivative of the digamma function.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    // asymptotic series 1/x + 1/2x^2 + sum B_2k / x^(2k+1)
    acc + r
        + 0.5 * r2
        + r * r2
            * (1.0 / 6.0
                - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 * (1.0 / 30.0 - r2 * (5.0 / 66.0)))))
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn clamp_unit(u: f64) -> f64 {
    u.clamp(SAMPLE_MARGIN, 1.0 - SAMPLE_MARGIN)
}

/// Log-density of Beta(a, b) at `u` (clamped into the interior).
pub fn log_density(u: f64, a: f64, b: f64) -> f64 {
    let u = clamp_unit(u);
    (a - 1.0) * u.ln() + (b - 1.0) * (1.0 - u).ln() - ln_beta_fn(a, b)
}

/// Partial derivatives of [`log_density`] with respect to `(a, b)`.
pub fn log_density_grad(u: f64, a: f64, b: f64) -> (f64, f64) {
    let u = clamp_unit(u);
    let s = digamma(a + b);
    (u.ln() - digamma(a) + s, (1.0 - u).ln() - digamma(b) + s)
}

/// Differential entropy of Beta(a, b).
pub fn entropy(a: f64, b: f64) -> f64 {
    ln_beta_fn(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b)
        + (a + b - 2.0) * digamma(a + b)
}

/// Partial derivatives of [`entropy`] with respect to `(a, b)`.
pub fn entropy_grad(a: f64, b: f64) -> (f64, f64) {
    let t = (a + b - 2.0) * trigamma(a + b);
    (-(a - 1.0) * trigamma(a) + t, -(b - 1.0) * trigamma(b) + t)
}

/// Per-dimension shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BetaParams {
    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a / (a + b))
            .collect()
    }

    /// Joint log-density of independent dimensions.
    pub fn log_prob(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim());
        u.iter()
            .zip(self.alpha.iter().zip(&self.beta))
            .map(|(&u, (&a, &b))| log_density(u, a, b))
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(&a, &b)| entropy(a, b))
            .sum()
    }

    /// Independent draws per dimension, clamped into the interior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(&a, &b)| {
                clamp_unit(
                    Beta::new(a, b)
                        .expect("shape parameters are positive")
                        .sample(rng),
                )
            })
            .collect()
    }
}
