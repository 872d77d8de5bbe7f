use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pointcloud::{project, PillarGridSpec, PseudoImage};
use crate::policy::{assemble_observation, ACTION_DIM, PROPRIO_DIM};
use crate::reward::{RewardBreakdown, RewardConfig};
use crate::schedule::{ControlTick, PerceptionScheduler, ScheduleConfig};
use crate::temporal::{encode, TemporalEncoding};
use crate::world::{
    episode_status, generate_forest, raycast_lidar, safety_ranges, step_dynamics, ActionCommand,
    DynamicsParams, EpisodeLimits, EpisodeStatus, ForestConfig, ForestWorld, LidarModel,
    VehicleState,
};

/// When the policy is consulted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// A new decision at every control tick.
    EveryTick,
    /// Decisions only on ticks that deliver a new frame; the previous command
    /// is held in between.
    Gated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub forest: ForestConfig,
    pub grid: PillarGridSpec,
    pub lidar_noise: f64,
    pub schedule: ScheduleConfig,
    pub control: ControlMode,
    /// Fill the temporal-encoding slots; zeros otherwise.
    pub temporal: bool,
    pub temporal_resolution: f64,
    pub dynamics: DynamicsParams,
    pub limits: EpisodeLimits,
    pub reward: RewardConfig,
    /// Desired speed is drawn uniformly from this range each episode.
    pub v_des_range: (f64, f64),
    /// Horizontal rays used for the clearance reward.
    pub safety_beams: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            grid: PillarGridSpec::paper_default(),
            lidar_noise: 0.0,
            schedule: ScheduleConfig::asynchronous_default(),
            control: ControlMode::EveryTick,
            temporal: true,
            temporal_resolution: crate::temporal::DEFAULT_RESOLUTION,
            dynamics: DynamicsParams::default(),
            limits: EpisodeLimits::default(),
            reward: RewardConfig::default(),
            v_des_range: (1.0, 4.0),
            safety_beams: 36,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        self.schedule.validate()?;
        self.reward.validate()?;
        let (lo, hi) = self.v_des_range;
        if !(lo > 0.0 && lo <= hi) || self.safety_beams == 0 || self.lidar_noise < 0.0 {
            return Err(crate::NavError::Config(
                "invalid environment parameters".into(),
            ));
        }
        Ok(())
    }
}

/// What the agent sees at a decision point.
#[derive(Debug, Clone)]
pub struct EnvObservation {
    pub image: Arc<PseudoImage>,
    pub proprio: [f64; PROPRIO_DIM],
    pub aoi: f64,
    pub t: f64,
}

/// Result of one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutcome {
    pub reward: RewardBreakdown,
    pub status: EpisodeStatus,
}

/// One navigation episode driven tick by tick.
pub struct NavEnv {
    cfg: Arc<EnvConfig>,
    lidar: LidarModel,
    world: ForestWorld,
    state: VehicleState,
    sched: PerceptionScheduler<Arc<PseudoImage>>,
    tick: ControlTick,
    rng: ChaCha8Rng,
    v_des: f64,
    a_prev: [f64; ACTION_DIM],
    status: EpisodeStatus,
}

impl NavEnv {
    /// Episode on a fresh forest drawn from `seed`, with the desired speed
    /// sampled from the configured range.
    pub fn new(cfg: Arc<EnvConfig>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = cfg.v_des_range;
        let v_des = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        let world = generate_forest(seed, &cfg.forest)?;
        Self::with_world(cfg, world, v_des, seed)
    }

    pub fn with_world(
        cfg: Arc<EnvConfig>,
        world: ForestWorld,
        v_des: f64,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let to_goal = world.goal - world.start;
        let state = VehicleState::at_rest(world.start, to_goal.y.atan2(to_goal.x));
        let schedule = cfg.schedule.with_seed(cfg.schedule.jitter_seed ^ seed);
        let sched = PerceptionScheduler::new(schedule, Arc::new(PseudoImage::empty(cfg.grid)))?;
        let mut env = Self {
            lidar: LidarModel::new(cfg.grid, cfg.lidar_noise),
            world,
            state,
            sched,
            tick: ControlTick {
                index: 0,
                time: crate::schedule::SimTime::ZERO,
                t_meas: crate::schedule::SimTime::ZERO,
                aoi: 0.0,
                fresh: false,
            },
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15)),
            v_des,
            a_prev: [0.0; ACTION_DIM],
            status: EpisodeStatus::Running,
            cfg,
        };
        env.advance_clock();
        Ok(env)
    }

    fn advance_clock(&mut self) {
        let Self {
            sched,
            world,
            state,
            lidar,
            rng,
            cfg,
            ..
        } = self;
        self.tick = sched
            .next_tick(|_| Arc::new(project(&cfg.grid, &raycast_lidar(world, state, lidar, rng))));
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> &ForestWorld {
        &self.world
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn v_des(&self) -> f64 {
        self.v_des
    }

    pub fn status(&self) -> EpisodeStatus {
        self.status
    }

    pub fn current_tick(&self) -> &ControlTick {
        &self.tick
    }

    /// Whether the policy should be queried at the current tick.
    pub fn decision_due(&self) -> bool {
        match self.cfg.control {
            ControlMode::EveryTick => true,
            ControlMode::Gated => self.tick.fresh || self.tick.index == 0,
        }
    }

    pub fn temporal_encoding(&self) -> TemporalEncoding {
        if self.cfg.temporal {
            encode(self.tick.aoi, self.cfg.temporal_resolution).expect("ages are non-negative")
        } else {
            TemporalEncoding::zeroed(self.cfg.temporal_resolution)
        }
    }

    pub fn observe(&self) -> EnvObservation {
        let obs = assemble_observation(
            &[],
            &self.state,
            &self.world.goal,
            &self.a_prev,
            self.v_des,
            &self.temporal_encoding(),
        )
        .expect("simulator state is finite");
        EnvObservation {
            image: Arc::clone(self.sched.feature()),
            proprio: obs.proprio(),
            aoi: self.tick.aoi,
            t: self.tick.time.as_secs(),
        }
    }

    /// Applies a body-frame velocity command for one control period.
    pub fn step(&mut self, action: &[f64; ACTION_DIM]) -> Result<TickOutcome> {
        debug_assert!(!self.status.is_terminal(), "step after episode end");
        let dt = self.cfg.schedule.control_period();
        let cmd = ActionCommand::new(action[0], action[1], action[2]);
        self.state = step_dynamics(&self.state, &cmd, &self.cfg.dynamics, dt);
        self.state.t = (self.tick.index + 1) as f64 * dt;
        self.a_prev = *action;
        self.status = episode_status(&self.world, &self.state, &self.cfg.limits);
        let radius = self.cfg.limits.vehicle_radius;
        let reach = self.cfg.reward.safety.activation_dist + radius;
        let beams: Vec<f64> = safety_ranges(&self.world, &self.state, self.cfg.safety_beams, reach)
            .into_iter()
            .map(|d| (d - radius).max(0.0))
            .collect();
        let reward = self.cfg.reward.evaluate(
            &beams,
            &self.state.p,
            &self.state.v,
            &self.state.q,
            &self.world.goal,
            self.v_des,
            self.status,
        )?;
        if !self.status.is_terminal() {
            self.advance_clock();
        }
        Ok(TickOutcome {
            reward,
            status: self.status,
        })
    }

    /// Distance left to the goal.
    pub fn goal_distance(&self) -> f64 {
        (self.world.goal - self.state.p).norm()
    }

    pub fn position(&self) -> Vector3<f64> {
        self.state.p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::LatencyModel;
    use crate::world::Rect;
    use nalgebra::Vector2;

    fn open_cfg(schedule: ScheduleConfig) -> Arc<EnvConfig> {
        Arc::new(EnvConfig {
            forest: ForestConfig {
                density: 0.0,
                ..Default::default()
            },
            schedule,
            ..Default::default()
        })
    }

    #[test]
    fn straight_flight_reaches_goal() {
        let mut env = NavEnv::new(open_cfg(ScheduleConfig::asynchronous_default()), 3).unwrap();
        let mut status = EpisodeStatus::Running;
        for _ in 0..5000 {
            let obs = env.observe();
            let (gx, gy, gz) = (obs.proprio[0], obs.proprio[1], obs.proprio[2]);
            let n = (gx * gx + gy * gy + gz * gz).sqrt().max(1e-9);
            let s = 2.0f64.min(n * 2.0);
            status = env
                .step(&[gx / n * s, gy / n * s, gz / n * s])
                .unwrap()
                .status;
            if status.is_terminal() {
                break;
            }
        }
        assert_eq!(status, EpisodeStatus::ReachedGoal);
    }

    #[test]
    fn synchronous_schedule_has_zero_age() {
        let mut env = NavEnv::new(open_cfg(ScheduleConfig::synchronous(100.0)), 1).unwrap();
        for _ in 0..50 {
            assert_eq!(env.observe().aoi, 0.0);
            assert!(env.decision_due());
            env.step(&[1.0, 0.0, 0.0]).unwrap();
        }
    }

    #[test]
    fn gated_decisions_follow_frames() {
        let schedule = ScheduleConfig {
            latency: LatencyModel::Constant { secs: 0.05 },
            ..ScheduleConfig::asynchronous_default()
        };
        let cfg = Arc::new(EnvConfig {
            control: ControlMode::Gated,
            ..(*open_cfg(schedule)).clone()
        });
        let mut env = NavEnv::new(cfg, 1).unwrap();
        let mut due = Vec::new();
        for _ in 0..30 {
            due.push(env.decision_due());
            env.step(&[0.5, 0.0, 0.0]).unwrap();
        }
        let idx: Vec<usize> = due
            .iter()
            .enumerate()
            .filter(|(_, d)| **d)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(idx, vec![0, 5, 15, 25]);
    }

    #[test]
    fn obstacle_shows_up_after_latency() {
        let mut world = ForestWorld::empty(
            Rect::new(Vector2::new(-2.0, -5.0), Vector2::new(22.0, 5.0)),
            Vector3::new(0.0, 0.0, 1.5),
            Vector3::new(20.0, 0.0, 1.5),
        );
        world.obstacles.push(crate::world::Obstacle {
            center: Vector2::new(4.0, 0.0),
            half_extents: Vector2::new(0.3, 0.3),
        });
        let cfg = open_cfg(ScheduleConfig {
            latency: LatencyModel::Constant { secs: 0.03 },
            ..ScheduleConfig::asynchronous_default()
        });
        let mut env = NavEnv::with_world(cfg, world, 2.0, 0).unwrap();
        let r_max = env.config().grid.r_max();
        assert!(env.observe().image.values().iter().all(|&v| v == r_max));
        for _ in 0..3 {
            env.step(&[0.0; 3]).unwrap();
        }
        let obs = env.observe();
        assert!((obs.aoi - 0.03).abs() < 1e-12);
        let min = obs
            .image
            .values()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min < 4.0);
    }

    #[test]
    fn temporal_slots_can_be_zeroed() {
        let cfg = Arc::new(EnvConfig {
            temporal: false,
            ..(*open_cfg(ScheduleConfig::asynchronous_default())).clone()
        });
        let mut env = NavEnv::new(cfg, 2).unwrap();
        env.step(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(&env.observe().proprio[PROPRIO_DIM - 4..], &[0.0; 4]);
    }
}
