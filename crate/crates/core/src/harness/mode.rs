use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::NavError;
use crate::learn::{ControlMode, EnvConfig, TrainConfig};
use crate::schedule::ScheduleConfig;

/// The evaluated system variants.
#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    /// Fast control on slow, delayed perception with the temporal encoding.
    Proposed,
    /// Perception at the control rate with no latency; an upper bound.
    Ideal,
    /// Same schedule as `Proposed` with the temporal slots zeroed.
    NoTem,
    /// Control gated to perception arrivals, commands held in between.
    SyncBaseline,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Proposed, Mode::Ideal, Mode::NoTem, Mode::SyncBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::Ideal => "ideal",
            Mode::NoTem => "no_tem",
            Mode::SyncBaseline => "sync_baseline",
        }
    }

    /// The mode whose trained policy this mode runs. The ideal condition
    /// reuses the proposed policy under perfect perception.
    pub fn policy_source(self) -> Mode {
        match self {
            Mode::Ideal => Mode::Proposed,
            m => m,
        }
    }

    /// Applies the mode's schedule, control gating and temporal slots to a
    /// base environment. The base schedule supplies the asynchronous rates.
    pub fn env(self, base: &EnvConfig) -> EnvConfig {
        let mut env = base.clone();
        match self {
            Mode::Ideal => {
                env.schedule = ScheduleConfig::synchronous(base.schedule.f_ctrl)
                    .with_seed(base.schedule.jitter_seed);
                env.temporal = true;
                env.control = ControlMode::EveryTick;
            }
            Mode::Proposed => {
                env.temporal = true;
                env.control = ControlMode::EveryTick;
            }
            Mode::NoTem => {
                env.temporal = false;
                env.control = ControlMode::EveryTick;
            }
            Mode::SyncBaseline => {
                env.temporal = false;
                env.control = ControlMode::Gated;
            }
        }
        env
    }

    /// Training setup for the policy this mode runs.
    pub fn train_config(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.env = self.policy_source().env(&base.env);
        cfg
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| NavError::Config(format!("unknown mode '{s}'")))
    }
}
