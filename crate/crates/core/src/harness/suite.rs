use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mode::Mode;
use super::stats::{wilson, Interval, Z95};
use crate::error::{NavError, Result};
use crate::learn::{Agent, EnvConfig, NavEnv};
use crate::policy::{PolicyNet, PolicyParams};
use crate::reward::RewardBreakdown;
use crate::world::EpisodeStatus;

/// Episode count, seeds and per-run overrides for an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub trials: usize,
    pub seed: u64,
    /// Fixed desired speed; sampled per episode when absent.
    pub v_des: Option<f64>,
    /// Obstacle density override.
    pub density: Option<f64>,
    /// Keep per-tick records in the episode log.
    pub record_steps: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            v_des: None,
            density: None,
            record_steps: false,
        }
    }
}

/// One evaluation condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Base environment; the mode and overrides are applied on top.
    pub env: EnvConfig,
    pub checkpoint: Option<PathBuf>,
    pub eval: EvalSettings,
}

impl ExperimentConfig {
    /// The environment episodes actually run in.
    pub fn run_env(&self) -> EnvConfig {
        let mut env = self.mode.env(&self.env);
        if let Some(d) = self.eval.density {
            env.forest.density = d;
        }
        if let Some(v) = self.eval.v_des {
            env.v_des_range = (v, v);
        }
        env
    }
}

/// Deterministic per-episode seed, shared by every mode so runs are paired.
pub fn episode_seed(master: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = master
        ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub action: [f64; 3],
    pub reward: RewardBreakdown,
    pub aoi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub mean_speed: f64,
    pub path_length: f64,
    pub duration: f64,
    pub mean_aoi: f64,
    pub max_aoi: f64,
    /// Policy decisions taken; equals the tick count unless control is gated.
    pub decisions: usize,
    pub ret: f64,
}

/// One evaluation episode, written as a single line of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub mode: Mode,
    pub episode: usize,
    pub seed: u64,
    pub v_des: f64,
    pub outcome: EpisodeStatus,
    pub stats: EpisodeStats,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<StepRecord>,
}

/// Flies one episode with the policy's mean action.
pub fn run_episode(
    env_cfg: &Arc<EnvConfig>,
    net: &PolicyNet,
    params: &PolicyParams,
    mode: Mode,
    episode: usize,
    seed: u64,
    record_steps: bool,
) -> Result<EpisodeRecord> {
    let mut env = NavEnv::new(Arc::clone(env_cfg), seed)?;
    let mut agent = Agent::new(net, params);
    // mean actions draw nothing, but `act` takes a generator
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut action = [0.0; 3];
    let mut steps = Vec::new();
    let (mut decisions, mut ticks) = (0usize, 0usize);
    let (mut speed_sum, mut path, mut aoi_sum, mut aoi_max, mut ret) = (0.0, 0.0, 0.0, 0.0f64, 0.0);
    let outcome = loop {
        if env.decision_due() {
            let (sample, _) = agent.act(&env.observe(), false, &mut rng)?;
            action = sample.a;
            decisions += 1;
        }
        let aoi = env.current_tick().aoi;
        let before = env.position();
        let out = env.step(&action)?;
        let s = env.state();
        ticks += 1;
        speed_sum += s.v.norm();
        path += (s.p - before).norm();
        aoi_sum += aoi;
        aoi_max = aoi_max.max(aoi);
        ret += out.reward.total;
        if record_steps {
            steps.push(StepRecord {
                t: s.t,
                position: s.p.into(),
                velocity: s.v.into(),
                action,
                reward: out.reward,
                aoi,
            });
        }
        if out.status.is_terminal() {
            break out.status;
        }
    };
    let n = ticks as f64;
    Ok(EpisodeRecord {
        mode,
        episode,
        seed,
        v_des: env.v_des(),
        outcome,
        stats: EpisodeStats {
            mean_speed: speed_sum / n,
            path_length: path,
            duration: env.state().t,
            mean_aoi: aoi_sum / n,
            max_aoi: aoi_max,
            decisions,
            ret,
        },
        steps,
    })
}

/// Aggregate outcome of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: Mode,
    pub trials: usize,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub out_of_bounds: usize,
    pub success_rate: f64,
    pub success_ci: Interval,
    pub collision_rate: f64,
    pub collision_ci: Interval,
    pub timeout_rate: f64,
    pub timeout_ci: Interval,
    pub out_of_bounds_rate: f64,
    pub mean_speed: f64,
    pub mean_aoi: f64,
    pub max_aoi: f64,
}

impl ModeReport {
    pub fn from_records(mode: Mode, records: &[EpisodeRecord]) -> Self {
        let n = records.len();
        let count = |s: EpisodeStatus| records.iter().filter(|r| r.outcome == s).count();
        let (succ, coll, tout, oob) = (
            count(EpisodeStatus::ReachedGoal),
            count(EpisodeStatus::Collided),
            count(EpisodeStatus::TimedOut),
            count(EpisodeStatus::OutOfBounds),
        );
        let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            mode,
            trials: n,
            successes: succ,
            collisions: coll,
            timeouts: tout,
            out_of_bounds: oob,
            success_rate: rate(succ),
            success_ci: wilson(succ, n, Z95),
            collision_rate: rate(coll),
            collision_ci: wilson(coll, n, Z95),
            timeout_rate: rate(tout),
            timeout_ci: wilson(tout, n, Z95),
            out_of_bounds_rate: rate(oob),
            mean_speed: mean(&|r| r.stats.mean_speed),
            mean_aoi: mean(&|r| r.stats.mean_aoi),
            max_aoi: records.iter().map(|r| r.stats.max_aoi).fold(0.0, f64::max),
        }
    }
}

/// Per-mode results of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub v_des: Option<f64>,
    pub density: f64,
    pub modes: Vec<ModeReport>,
}

impl SuiteReport {
    pub fn mode(&self, mode: Mode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let speed = self
            .v_des
            .map_or("sampled".to_string(), |v| format!("{v:.2} m/s"));
        let _ = writeln!(
            s,
            "seed {}  density {:.3}/m^2  desired speed {speed}",
            self.seed, self.density
        );
        let _ = writeln!(
            s,
            "{:<14} {:>6} {:>8} {:>17} {:>8} {:>8} {:>8} {:>9} {:>8} {:>8}",
            "mode",
            "trials",
            "success",
            "95% CI",
            "collide",
            "timeout",
            "oob",
            "speed",
            "aoi",
            "max_aoi"
        );
        for m in &self.modes {
            let _ = writeln!(
                s,
                "{:<14} {:>6} {:>8.3} [{:>6.3}, {:>6.3}] {:>8.3} {:>8.3} {:>8.3} {:>9.3} {:>8.4} {:>8.4}",
                m.mode.name(),
                m.trials,
                m.success_rate,
                m.success_ci.lo,
                m.success_ci.hi,
                m.collision_rate,
                m.timeout_rate,
                m.out_of_bounds_rate,
                m.mean_speed,
                m.mean_aoi,
                m.max_aoi
            );
        }
        s
    }
}

/// Trained policies by mode. Modes without their own entry fall back to
/// their policy source.
#[derive(Default)]
pub struct PolicySet {
    policies: BTreeMap<Mode, (PolicyNet, PolicyParams)>,
}

impl PolicySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mode: Mode, net: PolicyNet, params: PolicyParams) {
        self.policies.insert(mode, (net, params));
    }

    pub fn get(&self, mode: Mode) -> Result<(&PolicyNet, &PolicyParams)> {
        self.policies
            .get(&mode)
            .or_else(|| self.policies.get(&mode.policy_source()))
            .map(|(n, p)| (n, p))
            .ok_or_else(|| NavError::Config(format!("no policy available for mode {mode}")))
    }
}

fn check_compatible(net: &PolicyNet, env: &EnvConfig) -> Result<()> {
    let c = net.config();
    if c.image_rows != env.grid.n_phi()
        || c.image_cols != env.grid.n_theta()
        || c.r_max != env.grid.r_max()
    {
        return Err(NavError::Config(format!(
            "checkpoint expects a {}x{} image with range {}, the grid gives {}x{} with range {}",
            c.image_rows,
            c.image_cols,
            c.r_max,
            env.grid.n_phi(),
            env.grid.n_theta(),
            env.grid.r_max()
        )));
    }
    Ok(())
}

/// Runs `trials` seeded episodes of one mode.
pub fn run_suite(
    exp: &ExperimentConfig,
    net: &PolicyNet,
    params: &PolicyParams,
) -> Result<(SuiteReport, Vec<EpisodeRecord>)> {
    let env = Arc::new(exp.run_env());
    env.validate()?;
    check_compatible(net, &env)?;
    let mut records = (0..exp.eval.trials)
        .map(|i| {
            let seed = episode_seed(exp.eval.seed, i);
            run_episode(&env, net, params, exp.mode, i, seed, exp.eval.record_steps)
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.episode);
    let report = SuiteReport {
        seed: exp.eval.seed,
        v_des: exp.eval.v_des,
        density: env.forest.density,
        modes: vec![ModeReport::from_records(exp.mode, &records)],
    };
    Ok((report, records))
}

/// Runs several modes on the same episode seeds.
pub fn run_modes(
    base: &ExperimentConfig,
    modes: &[Mode],
    policies: &PolicySet,
) -> Result<(SuiteReport, Vec<EpisodeRecord>)> {
    let mut all = Vec::new();
    let mut reports = Vec::new();
    let mut density = base.env.forest.density;
    for &mode in modes {
        let exp = ExperimentConfig {
            mode,
            ..base.clone()
        };
        let (net, params) = policies.get(mode)?;
        let (rep, recs) = run_suite(&exp, net, params)?;
        density = rep.density;
        reports.extend(rep.modes);
        all.extend(recs);
    }
    Ok((
        SuiteReport {
            seed: base.eval.seed,
            v_des: base.eval.v_des,
            density,
            modes: reports,
        },
        all,
    ))
}

pub fn write_episodes_jsonl<W: Write>(mut w: W, records: &[EpisodeRecord]) -> Result<()> {
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Speed,
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: Axis,
    pub value: f64,
    pub report: ModeReport,
}

/// Fixed values used for the axis that is not being varied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationAnchors {
    pub density: f64,
    pub speed: f64,
}

impl Default for AblationAnchors {
    fn default() -> Self {
        Self {
            density: 0.25,
            speed: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub trials: usize,
    pub anchors: AblationAnchors,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Tab-separated table, one row per mode and axis value.
    pub fn to_table(&self) -> String {
        let mut s = String::from(
            "axis\tvalue\tmode\tsuccess\tci_lo\tci_hi\tcollision\ttimeout\tout_of_bounds\tmean_speed\tmean_aoi\n",
        );
        for r in &self.rows {
            let m = &r.report;
            let axis = match r.axis {
                Axis::Speed => "speed",
                Axis::Density => "density",
            };
            let _ = writeln!(
                s,
                "{axis}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.5}",
                r.value,
                m.mode.name(),
                m.success_rate,
                m.success_ci.lo,
                m.success_ci.hi,
                m.collision_rate,
                m.timeout_rate,
                m.out_of_bounds_rate,
                m.mean_speed,
                m.mean_aoi
            );
        }
        s
    }
}

/// Every mode over each speed at the anchor density, then over each density
/// at the anchor speed.
pub fn ablation_matrix(
    base: &ExperimentConfig,
    modes: &[Mode],
    speeds: &[f64],
    densities: &[f64],
    anchors: AblationAnchors,
    policies: &PolicySet,
) -> Result<AblationReport> {
    if modes.is_empty() || (speeds.is_empty() && densities.is_empty()) {
        return Err(NavError::InvalidInput(
            "ablation needs a mode and at least one axis value".into(),
        ));
    }
    let mut rows = Vec::new();
    let axes = speeds
        .iter()
        .map(|&v| (Axis::Speed, v, v, anchors.density))
        .chain(
            densities
                .iter()
                .map(|&d| (Axis::Density, d, anchors.speed, d)),
        );
    for (axis, value, speed, density) in axes {
        let mut exp = base.clone();
        exp.eval.v_des = Some(speed);
        exp.eval.density = Some(density);
        let (rep, _) = run_modes(&exp, modes, policies)?;
        rows.extend(rep.modes.into_iter().map(|report| AblationRow {
            axis,
            value,
            report,
        }));
    }
    Ok(AblationReport {
        seed: base.eval.seed,
        trials: base.eval.trials,
        anchors,
        rows,
    })
}
