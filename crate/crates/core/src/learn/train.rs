use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::env::{ControlMode, EnvConfig};
use super::ppo::{ppo_update, AdamW, PpoConfig};
use super::rollout::{collect_rollouts, EpisodeSummary, Worker};
use crate::error::{NavError, Result};
use crate::policy::{Checkpoint, PolicyConfig, PolicyNet, PolicyParams};
use crate::schedule::ScheduleConfig;
use crate::world::EpisodeStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synchronous,
    Asynchronous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    /// Start with a synchronous stage; otherwise train asynchronously from
    /// the first iteration.
    pub two_stage: bool,
    /// Rolling success rate that ends the synchronous stage.
    pub switch_success: f64,
    /// Episodes in the rolling success window.
    pub window: usize,
    /// The synchronous stage ends after this many iterations regardless.
    pub max_sync_iters: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            two_stage: true,
            switch_success: 0.7,
            window: 200,
            max_sync_iters: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Environment of the asynchronous stage.
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub curriculum: CurriculumConfig,
    pub n_envs: usize,
    /// Control ticks each environment simulates per iteration.
    pub horizon: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Halt when the rolling mean return drops below this.
    pub return_floor: Option<f64>,
    /// Stop once the asynchronous-stage rolling success reaches this.
    pub target_success: Option<f64>,
}

impl TrainConfig {
    pub fn new(env: EnvConfig) -> Self {
        Self {
            policy: PolicyConfig::for_grid(&env.grid),
            env,
            ppo: PpoConfig::default(),
            curriculum: CurriculumConfig::default(),
            n_envs: 64,
            horizon: 128,
            iterations: 200,
            seed: 0,
            return_floor: None,
            target_success: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.policy.validate()?;
        self.ppo.validate()?;
        if self.policy.image_rows != self.env.grid.n_phi()
            || self.policy.image_cols != self.env.grid.n_theta()
        {
            return Err(NavError::Config(
                "policy image shape does not match the grid".into(),
            ));
        }
        if self.n_envs == 0 || self.horizon == 0 || self.curriculum.window == 0 {
            return Err(NavError::Config(
                "n_envs, horizon and window must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Decisions each environment collects per iteration in `env`. Gated
    /// control decides once per expected frame, so every control mode covers
    /// the same simulated time per iteration.
    pub fn decision_horizon(&self, env: &EnvConfig) -> usize {
        match env.control {
            ControlMode::EveryTick => self.horizon,
            ControlMode::Gated => {
                let per_tick = (env.schedule.f_perc / env.schedule.f_ctrl).min(1.0);
                ((self.horizon as f64 * per_tick).round() as usize).max(1)
            }
        }
    }

    /// Environment used during the synchronous stage: perception at the
    /// control rate with no latency, a decision every tick.
    pub fn sync_env(&self) -> EnvConfig {
        EnvConfig {
            schedule: ScheduleConfig::synchronous(self.env.schedule.f_ctrl)
                .with_seed(self.env.schedule.jitter_seed),
            control: ControlMode::EveryTick,
            ..self.env.clone()
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub stage: Stage,
    pub mean_return: f64,
    pub success_rate: f64,
    pub mean_aoi: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<IterationMetrics>,
    /// Iteration (1-based) after which the asynchronous stage began.
    pub switched_after: Option<usize>,
    /// Iteration (1-based) at which the target success was reached.
    pub reached_target_at: Option<usize>,
    pub halted: Option<String>,
}

struct Rolling {
    window: usize,
    episodes: VecDeque<EpisodeSummary>,
}

impl Rolling {
    fn new(window: usize) -> Self {
        Self {
            window,
            episodes: VecDeque::with_capacity(window),
        }
    }

    fn push(&mut self, e: EpisodeSummary) {
        if self.episodes.len() == self.window {
            self.episodes.pop_front();
        }
        self.episodes.push_back(e);
    }

    fn full(&self) -> bool {
        self.episodes.len() == self.window
    }

    fn success(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        let hits = self
            .episodes
            .iter()
            .filter(|e| e.status == EpisodeStatus::ReachedGoal)
            .count();
        hits as f64 / self.episodes.len() as f64
    }

    fn mean_return(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(|e| e.ret).sum::<f64>() / self.episodes.len() as f64
    }
}

/// PPO training with the optional synchronous warm-up stage.
///
/// `observe` is called after every iteration with its metrics, the buffer it
/// was trained on and the episodes that finished during collection.
pub fn train<F>(cfg: &TrainConfig, mut observe: F) -> Result<TrainOutcome>
where
    F: FnMut(&IterationMetrics, &RolloutBuffer, &[EpisodeSummary]),
{
    cfg.validate()?;
    let net = PolicyNet::new(cfg.policy.clone())?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = net.init_params(master.next_u64());
    let mut opt = AdamW::new(net.param_count(), cfg.ppo.lr, cfg.ppo.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(master.next_u64());

    let async_env = Arc::new(cfg.env.clone());
    let mut stage = if cfg.curriculum.two_stage {
        Stage::Synchronous
    } else {
        Stage::Asynchronous
    };
    let first_env = match stage {
        Stage::Synchronous => Arc::new(cfg.sync_env()),
        Stage::Asynchronous => Arc::clone(&async_env),
    };
    let mut horizon = cfg.decision_horizon(&first_env);
    let mut workers = (0..cfg.n_envs)
        .map(|_| Worker::new(Arc::clone(&first_env), master.next_u64()))
        .collect::<Result<Vec<_>>>()?;

    let mut rolling = Rolling::new(cfg.curriculum.window);
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut switched_after = None;
    let mut reached_target_at = None;
    let mut halted = None;
    let mut last_good = params.clone();
    let mut stage_iters = 0usize;

    for it in 1..=cfg.iterations {
        let (mut buffer, episodes) =
            collect_rollouts(&mut workers, &net, &params, horizon, cfg.ppo.gamma)?;
        buffer.compute_gae(cfg.ppo.gamma, cfg.ppo.gae_lambda);
        let stats = match ppo_update(
            &buffer,
            &net,
            &mut params,
            &mut opt,
            &cfg.ppo,
            &mut shuffle_rng,
        ) {
            Ok(s) if params.is_finite() => s,
            Ok(_) => {
                halted = Some(format!("iteration {it}: parameters became non-finite"));
                break;
            }
            Err(NavError::Divergence(msg)) => {
                halted = Some(format!("iteration {it}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        last_good.values.copy_from_slice(&params.values);
        episodes.iter().for_each(|e| rolling.push(*e));
        stage_iters += 1;
        let m = IterationMetrics {
            iteration: it,
            stage,
            mean_return: rolling.mean_return(),
            success_rate: rolling.success(),
            mean_aoi: buffer.mean_aoi(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
        };
        observe(&m, &buffer, &episodes);
        metrics.push(m);

        if let Some(floor) = cfg.return_floor {
            if rolling.full() && m.mean_return < floor {
                halted = Some(format!(
                    "iteration {it}: mean return {} below floor {floor}",
                    m.mean_return
                ));
                break;
            }
        }
        match stage {
            Stage::Synchronous => {
                let converged =
                    rolling.full() && rolling.success() >= cfg.curriculum.switch_success;
                if converged || stage_iters >= cfg.curriculum.max_sync_iters {
                    stage = Stage::Asynchronous;
                    switched_after = Some(it);
                    stage_iters = 0;
                    rolling = Rolling::new(cfg.curriculum.window);
                    horizon = cfg.decision_horizon(&async_env);
                    for w in &mut workers {
                        w.reconfigure(Arc::clone(&async_env))?;
                    }
                }
            }
            Stage::Asynchronous => {
                if let Some(target) = cfg.target_success {
                    if rolling.full() && rolling.success() >= target {
                        reached_target_at = Some(it);
                        break;
                    }
                }
            }
        }
    }
    let checkpoint = Checkpoint::new(cfg.policy.clone(), last_good)
        .with_meta("seed", cfg.seed)
        .with_meta("two_stage", cfg.curriculum.two_stage)
        .with_meta("temporal", cfg.env.temporal)
        .with_meta("iterations", metrics.len());
    Ok(TrainOutcome {
        checkpoint,
        metrics,
        switched_after,
        reached_target_at,
        halted,
    })
}

/// Writes one JSON object per line.
pub fn write_metrics_jsonl<W: Write>(mut w: W, metrics: &[IterationMetrics]) -> Result<()> {
    for m in metrics {
        writeln!(w, "{}", serde_json::to_string(m)?)?;
    }
    Ok(())
}

/// Convenience for callers that only need the trained parameters.
pub fn trained_policy(outcome: &TrainOutcome) -> Result<(PolicyNet, PolicyParams)> {
    outcome.checkpoint.clone().into_net()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gated_control_collects_one_decision_per_frame() {
        let mut env = EnvConfig::default();
        env.schedule.f_ctrl = 20.0;
        env.schedule.f_perc = 5.0;
        let cfg = TrainConfig::new(env.clone());
        assert_eq!(cfg.decision_horizon(&env), cfg.horizon);
        env.control = ControlMode::Gated;
        assert_eq!(cfg.decision_horizon(&env), cfg.horizon / 4);
        // Synchronous perception gates nothing.
        assert_eq!(cfg.decision_horizon(&cfg.sync_env()), cfg.horizon);
    }
}
