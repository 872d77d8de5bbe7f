//! Interval estimates and small exact tests for comparing evaluation runs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Closed interval on a proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson(successes: usize, trials: usize, z: f64) -> Interval {
    if trials == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Interval {
        lo: (center - half).max(0.0),
        hi: (center + half).min(1.0),
    }
}

/// Exact two-sided McNemar test on paired binary outcomes. `only_a` counts
/// pairs where only the first arm succeeded, `only_b` the reverse.
pub fn mcnemar_exact(only_a: usize, only_b: usize) -> f64 {
    let n = only_a + only_b;
    if n == 0 {
        return 1.0;
    }
    let k = only_a.min(only_b) as u64;
    let bin = Binomial::new(0.5, n as u64).expect("p = 0.5 is valid");
    (2.0 * bin.cdf(k)).min(1.0)
}

/// Exact one-sided Mann-Whitney test that `a` tends to be smaller than `b`,
/// by enumerating every relabelling of the pooled sample. Ties count half.
/// Meant for small samples; panics above 20 pooled values.
pub fn mann_whitney_less(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    assert!(n <= 20, "exact enumeration is limited to 20 values");
    let u = |mask: u32| -> f64 {
        // U counts pairs (x in group A, y in group B) with x < y
        let mut s = 0.0;
        for i in (0..n).filter(|i| mask & (1 << i) != 0) {
            for j in (0..n).filter(|j| mask & (1 << j) == 0) {
                s += match pooled[i].partial_cmp(&pooled[j]) {
                    Some(std::cmp::Ordering::Less) => 1.0,
                    Some(std::cmp::Ordering::Equal) => 0.5,
                    _ => 0.0,
                };
            }
        }
        s
    };
    let observed = u((1u32 << a.len()) - 1);
    let (mut total, mut extreme) = (0usize, 0usize);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        total += 1;
        if u(mask) >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Nearest-rank percentile, `q` in [0, 1].
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}
