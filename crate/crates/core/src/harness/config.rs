//! Run configuration from a TOML file with flat dotted keys.
//!
//! Keys may be written dotted (`schedule.f_perc = 10`) or under a table
//! header (`[schedule]` then `f_perc = 10`); both flatten to the same key.
//! `preset` picks the starting point and is applied before any other key.
//! Unknown keys, wrong value types and invalid results are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Value;

use super::bench::BenchConfig;
use super::mode::Mode;
use super::presets::Preset;
use super::suite::{AblationAnchors, EvalSettings};
use crate::error::{NavError, Result};
use crate::learn::TrainConfig;
use crate::pointcloud::PillarGridSpec;
use crate::policy::PolicyConfig;
use crate::schedule::LatencyModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateSettings {
    pub modes: Vec<Mode>,
    pub speeds: Vec<f64>,
    pub densities: Vec<f64>,
    pub anchors: AblationAnchors,
}

impl Default for AblateSettings {
    fn default() -> Self {
        Self {
            modes: Mode::ALL.to_vec(),
            speeds: vec![1.0, 2.0, 3.0, 4.0],
            densities: vec![0.1, 0.2, 0.3],
            anchors: AblationAnchors::default(),
        }
    }
}

/// Everything the command line can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub checkpoint: Option<PathBuf>,
    pub ablate: AblateSettings,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn from_preset(preset: Preset) -> Self {
        Self {
            preset,
            train: preset.train_config(),
            eval: preset.eval_settings(),
            checkpoint: None,
            ablate: AblateSettings::default(),
            bench: BenchConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NavError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            NavError::Config(format!("malformed config: {}", e.message()))
        })?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        let preset = match entries.iter().find(|(k, _)| k == "preset") {
            Some((_, v)) => str_of("preset", v)?.parse()?,
            None => Preset::Paper,
        };
        let mut cfg = Self::from_preset(preset);
        let mut grid = GridKeys::from(&cfg.train.env.grid);
        let mut grid_touched = false;
        for (key, value) in &entries {
            if key == "preset" {
                continue;
            }
            if key.starts_with("grid.") {
                grid.set(key, value)?;
                grid_touched = true;
            } else {
                cfg.set(key, value)?;
            }
        }
        if grid_touched {
            let g = grid.build()?;
            cfg.train.env.grid = g;
        }
        let g = cfg.train.env.grid;
        cfg.train.policy.image_rows = g.n_phi();
        cfg.train.policy.image_cols = g.n_theta();
        cfg.train.policy.r_max = g.r_max();
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let t = &mut self.train;
        let env = &mut t.env;
        let f = |v: &Value| f64_of(key, v);
        let u = |v: &Value| usize_of(key, v);
        let b = |v: &Value| bool_of(key, v);
        match key {
            "world.density" => env.forest.density = f(v)?,
            "world.x_min" => env.forest.area.min.x = f(v)?,
            "world.x_max" => env.forest.area.max.x = f(v)?,
            "world.y_min" => env.forest.area.min.y = f(v)?,
            "world.y_max" => env.forest.area.max.y = f(v)?,
            "world.side_min" => env.forest.side_range.0 = f(v)?,
            "world.side_max" => env.forest.side_range.1 = f(v)?,
            "world.inset" => env.forest.inset = f(v)?,
            "world.clearance" => env.forest.clearance = f(v)?,
            "world.altitude" => env.forest.altitude = f(v)?,
            "world.obstacle_height" => env.forest.obstacle_height = f(v)?,
            "world.z_min" => env.forest.z_min = f(v)?,
            "world.z_max" => env.forest.z_max = f(v)?,
            "lidar.noise_std" => env.lidar_noise = f(v)?,
            "schedule.f_ctrl" => env.schedule.f_ctrl = f(v)?,
            "schedule.f_perc" => env.schedule.f_perc = f(v)?,
            "schedule.latency_min" | "schedule.latency_max" => {
                let x = f(v)?;
                let (lo, hi) = match env.schedule.latency {
                    LatencyModel::Constant { secs } => (secs, secs),
                    LatencyModel::Uniform { lo, hi } => (lo, hi),
                };
                let (lo, hi) = if key.ends_with("min") {
                    (x, hi)
                } else {
                    (lo, x)
                };
                env.schedule.latency = if lo == hi {
                    LatencyModel::Constant { secs: lo }
                } else {
                    LatencyModel::Uniform { lo, hi }
                };
            }
            "schedule.jitter_seed" => env.schedule.jitter_seed = u64_of(key, v)?,
            "temporal.enabled" => env.temporal = b(v)?,
            "temporal.resolution" => env.temporal_resolution = f(v)?,
            "dynamics.tau" => env.dynamics.tau = f(v)?,
            "dynamics.tau_yaw" => env.dynamics.tau_yaw = f(v)?,
            "dynamics.tilt_max" => env.dynamics.tilt_max = f(v)?,
            "limits.vehicle_radius" => env.limits.vehicle_radius = f(v)?,
            "limits.goal_tol" => env.limits.goal_tol = f(v)?,
            "limits.time_limit" => env.limits.time_limit = f(v)?,
            "env.v_des_min" => env.v_des_range.0 = f(v)?,
            "env.v_des_max" => env.v_des_range.1 = f(v)?,
            "env.safety_beams" => env.safety_beams = u(v)?,
            "reward.activation_dist" => env.reward.safety.activation_dist = f(v)?,
            "reward.slope" => env.reward.safety.slope = f(v)?,
            "reward.offset" => env.reward.safety.offset = f(v)?,
            "reward.quantile" => env.reward.safety.quantile = f(v)?,
            "reward.band_lo" => env.reward.velocity.band_lo = f(v)?,
            "reward.band_hi" => env.reward.velocity.band_hi = f(v)?,
            "reward.sigma" => env.reward.velocity.sigma = f(v)?,
            "reward.z_min" => env.reward.corridor.z_min = f(v)?,
            "reward.z_max" => env.reward.corridor.z_max = f(v)?,
            "reward.alpha_max" => env.reward.corridor.alpha_max = f(v)?,
            "reward.w_static" => env.reward.weights.w_static = f(v)?,
            "reward.w_velocity" => env.reward.weights.w_velocity = f(v)?,
            "reward.w_height" => env.reward.weights.w_height = f(v)?,
            "reward.w_attitude" => env.reward.weights.w_attitude = f(v)?,
            "reward.r_goal" => env.reward.weights.r_goal = f(v)?,
            "reward.r_collision" => env.reward.weights.r_collision = f(v)?,
            "reward.r_limit" => env.reward.weights.r_limit = f(v)?,
            "policy.conv_channels" => t.policy.conv_channels = usize_list(key, v)?,
            "policy.kernel" => t.policy.kernel = u(v)?,
            "policy.stride" => t.policy.stride = u(v)?,
            "policy.feature_dim" => t.policy.feature_dim = u(v)?,
            "policy.hidden" => t.policy.hidden = usize_list(key, v)?,
            "policy.epsilon" => t.policy.epsilon = f(v)?,
            "policy.v_max" => t.policy.v_max = f(v)?,
            "ppo.clip_ratio" => t.ppo.clip_ratio = f(v)?,
            "ppo.gae_lambda" => t.ppo.gae_lambda = f(v)?,
            "ppo.gamma" => {
                t.ppo.gamma = f(v)?;
                env.reward.weights.gamma = t.ppo.gamma;
            }
            "ppo.epochs" => t.ppo.epochs = u(v)?,
            "ppo.minibatch" => t.ppo.minibatch = u(v)?,
            "ppo.value_coef" => t.ppo.value_coef = f(v)?,
            "ppo.entropy_coef" => t.ppo.entropy_coef = f(v)?,
            "ppo.lr" => t.ppo.lr = f(v)?,
            "ppo.weight_decay" => t.ppo.weight_decay = f(v)?,
            "ppo.max_grad_norm" => {
                let x = f(v)?;
                t.ppo.max_grad_norm = (x > 0.0).then_some(x);
            }
            "curriculum.two_stage" => t.curriculum.two_stage = b(v)?,
            "curriculum.switch_success" => t.curriculum.switch_success = f(v)?,
            "curriculum.window" => t.curriculum.window = u(v)?,
            "curriculum.max_sync_iters" => t.curriculum.max_sync_iters = u(v)?,
            "train.n_envs" => t.n_envs = u(v)?,
            "train.horizon" => t.horizon = u(v)?,
            "train.iterations" => t.iterations = u(v)?,
            "train.seed" => t.seed = u64_of(key, v)?,
            "train.return_floor" => t.return_floor = Some(f(v)?),
            "train.target_success" => t.target_success = Some(f(v)?),
            "eval.trials" => self.eval.trials = u(v)?,
            "eval.seed" => self.eval.seed = u64_of(key, v)?,
            "eval.v_des" => self.eval.v_des = Some(f(v)?),
            "eval.density" => self.eval.density = Some(f(v)?),
            "eval.record_steps" => self.eval.record_steps = b(v)?,
            "eval.checkpoint" => self.checkpoint = Some(PathBuf::from(str_of(key, v)?)),
            "ablate.modes" => {
                self.ablate.modes = list_of(key, v)?
                    .iter()
                    .map(|m| str_of(key, m)?.parse())
                    .collect::<Result<_>>()?
            }
            "ablate.speeds" => self.ablate.speeds = f64_list(key, v)?,
            "ablate.densities" => self.ablate.densities = f64_list(key, v)?,
            "ablate.anchor_density" => self.ablate.anchors.density = f(v)?,
            "ablate.anchor_speed" => self.ablate.anchors.speed = f(v)?,
            "bench.sizes" => self.bench.sizes = usize_list(key, v)?,
            "bench.repetitions" => self.bench.repetitions = u(v)?,
            "bench.seed" => self.bench.seed = u64_of(key, v)?,
            _ => return Err(NavError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }
}

/// Grid keys are collected and validated together.
struct GridKeys {
    theta: (f64, f64),
    phi: (f64, f64),
    d_theta: f64,
    d_phi: f64,
    r_max: f64,
}

impl From<&PillarGridSpec> for GridKeys {
    fn from(g: &PillarGridSpec) -> Self {
        Self {
            theta: g.theta_range(),
            phi: g.phi_range(),
            d_theta: g.d_theta(),
            d_phi: g.d_phi(),
            r_max: g.r_max(),
        }
    }
}

impl GridKeys {
    fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let x = f64_of(key, v)?;
        match key {
            "grid.theta_min" => self.theta.0 = x,
            "grid.theta_max" => self.theta.1 = x,
            "grid.phi_min" => self.phi.0 = x,
            "grid.phi_max" => self.phi.1 = x,
            "grid.d_theta" => self.d_theta = x,
            "grid.d_phi" => self.d_phi = x,
            "grid.r_max" => self.r_max = x,
            _ => return Err(NavError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    fn build(&self) -> Result<PillarGridSpec> {
        PillarGridSpec::new(self.theta, self.phi, self.d_theta, self.d_phi, self.r_max)
    }
}

/// Grid spec from a config file; only `grid.*` keys (and `preset`) count.
pub fn load_grid(path: &Path) -> Result<PillarGridSpec> {
    Ok(RunConfig::load(path)?.train.env.grid)
}

/// Architecture implied by a config, for checking checkpoints against.
pub fn expected_policy(cfg: &RunConfig) -> PolicyConfig {
    cfg.train.policy.clone()
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn type_error(key: &str, want: &str, v: &Value) -> NavError {
    NavError::Config(format!("key '{key}' expects {want}, got {}", v.type_str()))
}

fn f64_of(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_error(key, "a number", v)),
    }
}

fn u64_of(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(type_error(key, "a non-negative integer", v)),
    }
}

fn usize_of(key: &str, v: &Value) -> Result<usize> {
    u64_of(key, v).map(|x| x as usize)
}

fn bool_of(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| type_error(key, "a boolean", v))
}

fn str_of<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| type_error(key, "a string", v))
}

fn list_of<'a>(key: &str, v: &'a Value) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| type_error(key, "an array", v))
}

fn f64_list(key: &str, v: &Value) -> Result<Vec<f64>> {
    list_of(key, v)?.iter().map(|x| f64_of(key, x)).collect()
}

fn usize_list(key: &str, v: &Value) -> Result<Vec<usize>> {
    list_of(key, v)?.iter().map(|x| usize_of(key, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = RunConfig::parse("schedule.f_perc = 20\nppo.lr = 0.001\n").unwrap();
        let b = RunConfig::parse("[schedule]\nf_perc = 20.0\n[ppo]\nlr = 1e-3\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.env.schedule.f_perc, 20.0);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = RunConfig::parse("schedule.f_percc = 10").unwrap_err();
        assert!(e.to_string().contains("f_percc"), "{e}");
        assert!(RunConfig::parse("[grid]\nwidth = 3").is_err());
    }

    #[test]
    fn wrong_type_is_rejected() {
        assert!(RunConfig::parse("train.n_envs = 2.5").is_err());
        assert!(RunConfig::parse("temporal.enabled = 1").is_err());
    }

    #[test]
    fn grid_keys_resize_the_policy() {
        let c = RunConfig::parse("grid.d_theta = 0.3141592653589793\ngrid.r_max = 8").unwrap();
        assert_eq!(c.train.env.grid.n_theta(), 10);
        assert_eq!(c.train.policy.image_cols, 10);
        assert_eq!(c.train.policy.r_max, 8.0);
    }

    #[test]
    fn latency_keys() {
        let c =
            RunConfig::parse("schedule.latency_min = 0.05\nschedule.latency_max = 0.05").unwrap();
        assert_eq!(
            c.train.env.schedule.latency,
            LatencyModel::Constant { secs: 0.05 }
        );
        let d = RunConfig::parse("schedule.latency_max = 0.1").unwrap();
        assert_eq!(
            d.train.env.schedule.latency,
            LatencyModel::Uniform { lo: 0.02, hi: 0.1 }
        );
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(RunConfig::parse("ppo.clip_ratio = 1.5").is_err());
        assert!(RunConfig::parse("schedule.f_perc = 0").is_err());
        assert!(RunConfig::parse("preset = \"huge\"").is_err());
    }

    #[test]
    fn preset_applies_before_keys() {
        let c = RunConfig::parse("train.iterations = 7\npreset = \"toy\"").unwrap();
        assert_eq!(c.preset, Preset::Toy);
        assert_eq!(c.train.iterations, 7);
    }
}
