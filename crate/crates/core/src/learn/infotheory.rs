//! Numerical checks that conditioning on the observation delay removes an
//! excess-variance term from returns and cannot increase state uncertainty.
//!
//! The toy process is a finite Markov chain run under a fixed policy. The
//! agent sees the state `k` steps late: the delay-blind observation is
//! `s_{t-k}`, the delay-aware one is `(s_{t-k}, k)`. The return is the
//! discounted reward over a short horizon starting from the true `s_t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMdp {
    /// Row-stochastic state transition matrix under the fixed policy.
    pub transition: Vec<Vec<f64>>,
    pub reward: Vec<f64>,
    pub gamma: f64,
    /// Number of rewards summed into a return.
    pub horizon: usize,
    /// Probability of each delay `k = 0, 1, ...`.
    pub delay_probs: Vec<f64>,
}

impl ChainMdp {
    /// Three-state ring that advances with probability 0.6.
    pub fn three_state(delay_probs: Vec<f64>) -> Self {
        let p = 0.6;
        Self {
            transition: vec![
                vec![1.0 - p, p, 0.0],
                vec![0.0, 1.0 - p, p],
                vec![p, 0.0, 1.0 - p],
            ],
            reward: vec![0.0, 1.0, 4.0],
            gamma: 0.9,
            horizon: 4,
            delay_probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.reward.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        let rows_ok = self.transition.len() == n
            && self.transition.iter().all(|r| {
                r.len() == n
                    && r.iter().all(|&p| p >= 0.0)
                    && (r.iter().sum::<f64>() - 1.0).abs() < 1e-12
            });
        let delays_ok = !self.delay_probs.is_empty()
            && self.delay_probs.iter().all(|&p| p >= 0.0)
            && (self.delay_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12;
        if n == 0 || !rows_ok || !delays_ok || self.horizon == 0 {
            return Err(NavError::InvalidInput("malformed chain".into()));
        }
        Ok(())
    }

    /// State distribution `k` steps after starting in `s`.
    fn propagate(&self, s: usize, k: usize) -> Vec<f64> {
        let n = self.n_states();
        let mut d = vec![0.0; n];
        d[s] = 1.0;
        for _ in 0..k {
            let mut next = vec![0.0; n];
            for (i, &pi) in d.iter().enumerate() {
                for (j, &pij) in self.transition[i].iter().enumerate() {
                    next[j] += pi * pij;
                }
            }
            d = next;
        }
        d
    }

    /// First and second moments of the return from each state.
    fn return_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_states();
        let (mut m1, mut m2) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..self.horizon {
            let mut n1 = vec![0.0; n];
            let mut n2 = vec![0.0; n];
            for s in 0..n {
                let e1: f64 = (0..n).map(|j| self.transition[s][j] * m1[j]).sum();
                let e2: f64 = (0..n).map(|j| self.transition[s][j] * m2[j]).sum();
                let r = self.reward[s];
                n1[s] = r + self.gamma * e1;
                n2[s] = r * r + 2.0 * r * self.gamma * e1 + self.gamma * self.gamma * e2;
            }
            m1 = n1;
            m2 = n2;
        }
        (m1, m2)
    }

    fn sample_return<R: Rng + ?Sized>(
        &self,
        mut s: usize,
        rows: &[WeightedIndex<f64>],
        rng: &mut R,
    ) -> f64 {
        let mut g = 0.0;
        let mut disc = 1.0;
        for h in 0..self.horizon {
            g += disc * self.reward[s];
            disc *= self.gamma;
            if h + 1 < self.horizon {
                s = rows[s].sample(rng);
            }
        }
        g
    }
}

/// Terms of `E[Var(G|O')] = E[Var(G|O)] + E[Var(E[G|O] | O')]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Expected return variance given the delay-blind observation.
    pub blind: f64,
    /// Expected return variance given the delay-aware observation.
    pub within: f64,
    /// Variance of the delay-aware mean across delays.
    pub excess: f64,
}

/// Exact values by enumeration. The observed state is uniform.
pub fn exact_decomposition(mdp: &ChainMdp) -> Decomposition {
    let n = mdp.n_states();
    let (m1, m2) = mdp.return_moments();
    let dot = |d: &[f64], m: &[f64]| d.iter().zip(m).map(|(a, b)| a * b).sum::<f64>();
    let mut out = Decomposition {
        blind: 0.0,
        within: 0.0,
        excess: 0.0,
    };
    for o in 0..n {
        let po = 1.0 / n as f64;
        let mut mix1 = 0.0;
        let mut mix2 = 0.0;
        let mut mean_sq = 0.0;
        for (k, &pk) in mdp.delay_probs.iter().enumerate() {
            let d = mdp.propagate(o, k);
            let (e1, e2) = (dot(&d, &m1), dot(&d, &m2));
            out.within += po * pk * (e2 - e1 * e1);
            mix1 += pk * e1;
            mix2 += pk * e2;
            mean_sq += pk * e1 * e1;
        }
        out.blind += po * (mix2 - mix1 * mix1);
        out.excess += po * (mean_sq - mix1 * mix1);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub n_samples: usize,
    /// Monte Carlo estimates: `blind` from one half of the samples, the other
    /// two terms from the other half.
    pub estimate: Decomposition,
    pub exact: Decomposition,
    /// `blind - within - excess` of the estimates.
    pub residual: f64,
    /// Combined standard error of the residual.
    pub std_error: f64,
    pub balanced: bool,
}

#[derive(Default, Clone)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn add(&mut self, g: f64) {
        self.n += 1.0;
        self.sum += g;
        self.sum_sq += g * g;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n
    }

    fn var(&self) -> f64 {
        (self.sum_sq / self.n - self.mean().powi(2)).max(0.0)
    }
}

/// Plug-in decomposition from `(observed state, delay, return)` samples.
fn estimate(samples: &[(usize, usize, f64)], n_states: usize, n_delays: usize) -> Decomposition {
    let mut by_o = vec![Moments::default(); n_states];
    let mut by_ok = vec![Moments::default(); n_states * n_delays];
    for &(o, k, g) in samples {
        by_o[o].add(g);
        by_ok[o * n_delays + k].add(g);
    }
    let total = samples.len() as f64;
    let mut d = Decomposition {
        blind: 0.0,
        within: 0.0,
        excess: 0.0,
    };
    for o in 0..n_states {
        let mo = &by_o[o];
        if mo.n == 0.0 {
            continue;
        }
        d.blind += mo.n / total * mo.var();
        for k in 0..n_delays {
            let m = &by_ok[o * n_delays + k];
            if m.n == 0.0 {
                continue;
            }
            d.within += m.n / total * m.var();
            d.excess += m.n / total * (m.mean() - mo.mean()).powi(2);
        }
    }
    d
}

fn batch_se(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

const BATCHES: usize = 50;

/// Monte Carlo check of the variance decomposition with batch-means
/// standard errors. Balanced when the residual is within three of them.
pub fn variance_decomposition_check(
    mdp: &ChainMdp,
    n_samples: usize,
    seed: u64,
) -> Result<VarianceReport> {
    mdp.validate()?;
    if n_samples < 2 * BATCHES * 10 {
        return Err(NavError::InvalidInput(format!(
            "need at least {} samples",
            2 * BATCHES * 10
        )));
    }
    let n = mdp.n_states();
    let n_delays = mdp.delay_probs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<WeightedIndex<f64>> = mdp
        .transition
        .iter()
        .map(|r| WeightedIndex::new(r).expect("validated rows"))
        .collect();
    let delays = WeightedIndex::new(&mdp.delay_probs).expect("validated delays");
    let samples: Vec<(usize, usize, f64)> = (0..n_samples)
        .map(|_| {
            let o = rng.random_range(0..n);
            let k = delays.sample(&mut rng);
            let mut s = o;
            for _ in 0..k {
                s = rows[s].sample(&mut rng);
            }
            (o, k, mdp.sample_return(s, &rows, &mut rng))
        })
        .collect();
    let (a, b) = samples.split_at(n_samples / 2);
    let est_a = estimate(a, n, n_delays);
    let est_b = estimate(b, n, n_delays);
    let se_of = |half: &[(usize, usize, f64)], f: &dyn Fn(&Decomposition) -> f64| {
        let per: Vec<f64> = half
            .chunks(half.len() / BATCHES)
            .take(BATCHES)
            .map(|c| f(&estimate(c, n, n_delays)))
            .collect();
        batch_se(&per)
    };
    let se_a = se_of(a, &|d| d.blind);
    let se_b = se_of(b, &|d| d.within + d.excess);
    let estimate = Decomposition {
        blind: est_a.blind,
        within: est_b.within,
        excess: est_b.excess,
    };
    let residual = estimate.blind - estimate.within - estimate.excess;
    let std_error = (se_a * se_a + se_b * se_b).sqrt();
    Ok(VarianceReport {
        n_samples,
        estimate,
        exact: exact_decomposition(mdp),
        residual,
        std_error,
        balanced: residual.abs() <= 3.0 * std_error,
    })
}

/// Shannon entropy in bits.
pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Uncertainty of the current state given the delay-aware observation.
    pub aware: f64,
    /// Uncertainty of the current state given the delay-blind observation.
    pub blind: f64,
}

/// Exact conditional entropies of the current state.
pub fn state_entropies(mdp: &ChainMdp) -> EntropyReport {
    let n = mdp.n_states();
    let po = 1.0 / n as f64;
    let mut aware = 0.0;
    let mut blind = 0.0;
    for o in 0..n {
        let mut mix = vec![0.0; n];
        for (k, &pk) in mdp.delay_probs.iter().enumerate() {
            let d = mdp.propagate(o, k);
            aware += po * pk * entropy_bits(&d);
            mix.iter_mut().zip(&d).for_each(|(m, x)| *m += pk * x);
        }
        blind += po * entropy_bits(&mix);
    }
    EntropyReport { aware, blind }
}

/// `H(Y | X)` and `H(Y | X, W)` of a joint table indexed `[x][w][y]`.
pub fn conditional_entropies(joint: &[Vec<Vec<f64>>]) -> (f64, f64) {
    let mut h_y_x = 0.0;
    let mut h_y_xw = 0.0;
    for by_w in joint {
        let ny = by_w.first().map_or(0, Vec::len);
        let mut p_xy = vec![0.0; ny];
        for row in by_w {
            let p_xw: f64 = row.iter().sum();
            if p_xw > 0.0 {
                let cond: Vec<f64> = row.iter().map(|p| p / p_xw).collect();
                h_y_xw += p_xw * entropy_bits(&cond);
            }
            p_xy.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        let p_x: f64 = p_xy.iter().sum();
        if p_x > 0.0 {
            let cond: Vec<f64> = p_xy.iter().map(|p| p / p_x).collect();
            h_y_x += p_x * entropy_bits(&cond);
        }
    }
    (h_y_x, h_y_xw)
}

/// Draws random joint tables and returns the smallest observed
/// `H(Y|X) - H(Y|X,W)`.
pub fn random_joint_gap(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_gap = f64::INFINITY;
    for _ in 0..trials {
        let (nx, nw, ny) = (
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(2..=5),
        );
        let mut joint: Vec<Vec<Vec<f64>>> = (0..nx)
            .map(|_| {
                (0..nw)
                    .map(|_| {
                        (0..ny)
                            .map(|_| {
                                if rng.random_bool(0.2) {
                                    0.0
                                } else {
                                    rng.random::<f64>()
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let total: f64 = joint.iter().flatten().flatten().sum();
        if total == 0.0 {
            joint[0][0][0] = 1.0;
        } else {
            joint
                .iter_mut()
                .flatten()
                .flatten()
                .for_each(|p| *p /= total);
        }
        let (h_y_x, h_y_xw) = conditional_entropies(&joint);
        min_gap = min_gap.min(h_y_x - h_y_xw);
    }
    min_gap
}

/// Everything reported by the `verify` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoCheckReport {
    pub delayed: VarianceReport,
    pub delay_free: VarianceReport,
    pub entropy: EntropyReport,
    pub entropy_delay_free: EntropyReport,
    pub min_joint_gap: f64,
}

impl InfoCheckReport {
    pub fn passed(&self) -> bool {
        self.delayed.balanced
            && self.delayed.exact.excess > 0.0
            && self.delayed.estimate.excess > 0.0
            && self.delay_free.balanced
            && self.delay_free.exact.excess == 0.0
            && self.entropy.aware <= self.entropy.blind
            && (self.entropy_delay_free.aware - self.entropy_delay_free.blind).abs() < 1e-12
            && self.min_joint_gap >= -1e-12
    }
}

/// Runs the full battery on the three-state chain.
pub fn run_info_checks(n_samples: usize, seed: u64) -> Result<InfoCheckReport> {
    let delayed = ChainMdp::three_state(vec![1.0 / 3.0; 3]);
    let delay_free = ChainMdp::three_state(vec![1.0]);
    Ok(InfoCheckReport {
        delayed: variance_decomposition_check(&delayed, n_samples, seed)?,
        delay_free: variance_decomposition_check(&delay_free, n_samples, seed.wrapping_add(1))?,
        entropy: state_entropies(&delayed),
        entropy_delay_free: state_entropies(&delay_free),
        min_joint_gap: random_joint_gap(100, seed.wrapping_add(2)),
    })
}
