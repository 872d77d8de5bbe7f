//! Named starting configurations.
//!
//! `paper` keeps the full-size grid, network and course. `toy` shrinks the
//! grid, network and course so a training run fits in minutes on one core.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::suite::EvalSettings;
use crate::error::NavError;
use crate::learn::{EnvConfig, TrainConfig};
use crate::pointcloud::PillarGridSpec;
use crate::policy::PolicyConfig;
use crate::world::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Paper,
    Toy,
}

impl Preset {
    pub fn env_config(self) -> EnvConfig {
        match self {
            Preset::Paper => EnvConfig::default(),
            Preset::Toy => toy_env(),
        }
    }

    pub fn train_config(self) -> TrainConfig {
        match self {
            Preset::Paper => TrainConfig::new(EnvConfig::default()),
            Preset::Toy => toy_train(),
        }
    }

    pub fn eval_settings(self) -> EvalSettings {
        EvalSettings::default()
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Toy => "toy",
        })
    }
}

impl FromStr for Preset {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Preset::Paper),
            "toy" => Ok(Preset::Toy),
            _ => Err(NavError::Config(format!(
                "unknown preset '{s}' (paper, toy)"
            ))),
        }
    }
}

/// 12 x 4 image over the front half-space out to 6 m.
pub fn toy_grid() -> PillarGridSpec {
    PillarGridSpec::new(
        (-PI / 2.0, PI / 2.0),
        (PI / 4.0, 3.0 * PI / 4.0),
        PI / 12.0,
        PI / 8.0,
        6.0,
    )
    .expect("toy grid is valid")
}

/// A 10 m run through a 12 m x 6 m strip, 20 Hz control fed by 5 Hz
/// perception.
pub fn toy_env() -> EnvConfig {
    let mut env = EnvConfig {
        grid: toy_grid(),
        ..EnvConfig::default()
    };
    env.schedule.f_ctrl = 20.0;
    env.schedule.f_perc = 5.0;
    env.forest.area = Rect::new(Vector2::new(-1.0, -3.0), Vector2::new(11.0, 3.0));
    env.forest.inset = 1.0;
    env.forest.density = 0.2;
    env.limits.time_limit = 10.0;
    env.limits.goal_tol = 1.0;
    // Slower targets cannot finish 10 m inside the time limit.
    env.v_des_range = (2.0, 4.0);
    let w = &mut env.reward.weights;
    w.w_static = 0.1;
    w.w_velocity = 0.1;
    w.w_height = 0.1;
    w.w_attitude = 0.05;
    w.r_goal = 20.0;
    w.r_collision = -20.0;
    w.r_limit = -20.0;
    env
}

pub fn toy_train() -> TrainConfig {
    let env = toy_env();
    let mut cfg = TrainConfig::new(env);
    cfg.policy = PolicyConfig {
        conv_channels: vec![4, 8],
        feature_dim: 16,
        hidden: vec![64, 64],
        ..PolicyConfig::for_grid(&cfg.env.grid)
    };
    cfg.ppo.lr = 1e-3;
    cfg.n_envs = 64;
    cfg.horizon = 128;
    cfg.iterations = 600;
    cfg.curriculum.max_sync_iters = 100;
    cfg
}
