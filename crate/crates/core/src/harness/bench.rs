//! Wall-clock timing of the per-frame compute path: turning a raw point cloud
//! into a pseudo-image, and one policy forward pass. Inputs are generated in
//! memory so no I/O is timed.

use std::hint::black_box;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::{median, percentile};
use crate::error::{NavError, Result};
use crate::pointcloud::{project, PillarGridSpec, PointCloud, PseudoImage};
use crate::policy::{PolicyConfig, PolicyNet, Tape, PROPRIO_DIM};

pub const MIN_REPETITIONS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![0, 1_000, 20_000],
            repetitions: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl Timing {
    fn from_samples(ms: &[f64]) -> Self {
        Self {
            median_ms: median(ms),
            p95_ms: percentile(ms, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionTiming {
    pub points: usize,
    /// Sum of the projected cells; identical across runs with the same seed.
    pub checksum: f64,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub seed: u64,
    pub image_rows: usize,
    pub image_cols: usize,
    pub param_count: usize,
    pub projection: Vec<ProjectionTiming>,
    /// Forward pass with the perception encoder.
    pub policy_forward: Timing,
    pub policy_checksum: f64,
}

impl BenchReport {
    /// The report with timings zeroed: what must repeat exactly across runs.
    pub fn deterministic_part(&self) -> BenchReport {
        let zero = Timing {
            median_ms: 0.0,
            p95_ms: 0.0,
        };
        let mut r = self.clone();
        r.policy_forward = zero;
        r.projection.iter_mut().for_each(|p| p.timing = zero);
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "grid {}x{}, {} parameters, {} repetitions\n{:<28} {:>10} {:>10}\n",
            self.image_rows,
            self.image_cols,
            self.param_count,
            self.repetitions,
            "stage",
            "median_ms",
            "p95_ms"
        );
        for p in &self.projection {
            s += &format!(
                "{:<28} {:>10.4} {:>10.4}\n",
                format!("projection {} pts", p.points),
                p.timing.median_ms,
                p.timing.p95_ms
            );
        }
        s += &format!(
            "{:<28} {:>10.4} {:>10.4}\n",
            "policy forward", self.policy_forward.median_ms, self.policy_forward.p95_ms
        );
        s
    }
}

/// Random points spread over a 12 m ball around the sensor, as raw Cartesian
/// returns.
pub fn random_cloud<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| loop {
            let p = Vector3::new(
                rng.random_range(-12.0..12.0),
                rng.random_range(-12.0..12.0),
                rng.random_range(-12.0..12.0),
            );
            let r = p.norm();
            if r > 0.1 && r <= 12.0 {
                break p;
            }
        })
        .collect()
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn bench_latency(
    spec: &PillarGridSpec,
    policy: &PolicyConfig,
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    if cfg.repetitions < MIN_REPETITIONS {
        return Err(NavError::InvalidInput(format!(
            "need at least {MIN_REPETITIONS} repetitions, got {}",
            cfg.repetitions
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut projection = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let raw = random_cloud(n, &mut rng);
        let mut samples = Vec::with_capacity(cfg.repetitions);
        let mut checksum = 0.0;
        for _ in 0..cfg.repetitions {
            let start = Instant::now();
            let cloud = PointCloud::from_cartesian(black_box(&raw))?;
            let img = project(spec, &cloud);
            samples.push(millis(start));
            checksum = img.values().iter().sum();
            black_box(&img);
        }
        projection.push(ProjectionTiming {
            points: n,
            checksum,
            timing: Timing::from_samples(&samples),
        });
    }

    let net = PolicyNet::new(policy.clone())?;
    let params = net.init_params(cfg.seed);
    let cloud = PointCloud::from_cartesian(&random_cloud(2_000, &mut rng))?;
    let img: PseudoImage = project(spec, &cloud);
    let proprio: [f64; PROPRIO_DIM] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let mut tape = Tape::new();
    let mut samples = Vec::with_capacity(cfg.repetitions);
    let mut policy_checksum = 0.0;
    for _ in 0..cfg.repetitions {
        let start = Instant::now();
        let (dist, value) = net.forward(&params, black_box(&img), &proprio, &mut tape)?;
        samples.push(millis(start));
        policy_checksum = value + dist.alpha.iter().chain(&dist.beta).sum::<f64>();
    }
    Ok(BenchReport {
        repetitions: cfg.repetitions,
        seed: cfg.seed,
        image_rows: spec.n_phi(),
        image_cols: spec.n_theta(),
        param_count: net.param_count(),
        projection,
        policy_forward: Timing::from_samples(&samples),
        policy_checksum,
    })
}
