//! Procedural obstacle forests and the vehicle that flies through them.
//!
//! Obstacles are vertical rectangular prisms standing on the ground plane.
//! The world also carries the operational box: leaving it ends an episode.

mod dynamics;
mod lidar;

pub use dynamics::{step_dynamics, ActionCommand, DynamicsParams, VehicleState};
pub use lidar::{raycast_lidar, safety_ranges, LidarModel};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

/// Axis-aligned rectangle in the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Rect {
    pub fn new(min: Vector2<f64>, max: Vector2<f64>) -> Self {
        Self { min, max }
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x).max(0.0) * (self.max.y - self.min.y).max(0.0)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Prism footprint: centre and half side lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vector2<f64>,
    pub half_extents: Vector2<f64>,
}

impl Obstacle {
    /// Distance from `p` to the footprint (zero inside).
    pub fn distance_to(&self, p: &Vector2<f64>) -> f64 {
        let dx = ((p.x - self.center.x).abs() - self.half_extents.x).max(0.0);
        let dy = ((p.y - self.center.y).abs() - self.half_extents.y).max(0.0);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Operational limits. Leaving the box counts as a boundary violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub area: Rect,
    pub z_min: f64,
    pub z_max: f64,
}

impl Bounds {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        p.z >= self.z_min && p.z <= self.z_max && self.area.contains(&p.xy())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub area: Rect,
    /// Obstacles per square metre.
    pub density: f64,
    /// Range of prism side lengths in metres.
    pub side_range: (f64, f64),
    /// Distance of start and goal from the short edges of the area.
    pub inset: f64,
    /// Free radius kept around start and goal.
    pub clearance: f64,
    pub altitude: f64,
    pub obstacle_height: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for ForestConfig {
    /// A 20 m start-to-goal run through a 24 m x 10 m strip at 0.2 obstacles/m^2.
    fn default() -> Self {
        Self {
            area: Rect::new(Vector2::new(-2.0, -5.0), Vector2::new(22.0, 5.0)),
            density: 0.2,
            side_range: (0.4, 0.6),
            inset: 2.0,
            clearance: 0.8,
            altitude: 1.5,
            obstacle_height: 6.0,
            z_min: 0.0,
            z_max: 4.0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.side_range;
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return Err(NavError::Config(format!(
                "density must be >= 0, got {}",
                self.density
            )));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(NavError::Config(format!("invalid side range [{lo}, {hi}]")));
        }
        if !(self.z_min < self.z_max && self.altitude > self.z_min && self.altitude < self.z_max) {
            return Err(NavError::Config(
                "altitude must lie inside (z_min, z_max)".into(),
            ));
        }
        if self.clearance < 0.0 || self.inset < 0.0 {
            return Err(NavError::Config("clearance and inset must be >= 0".into()));
        }
        Ok(())
    }
}

/// A generated forest with its start and goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestWorld {
    pub seed: u64,
    pub area: Rect,
    pub density: f64,
    pub start: Vector3<f64>,
    pub goal: Vector3<f64>,
    pub obstacles: Vec<Obstacle>,
    pub bounds: Bounds,
    pub obstacle_height: f64,
}

const MAX_RESAMPLES: usize = 1000;

/// Generates a forest. Obstacle count is `round(density * area)`, centres are
/// uniform over the area and any obstacle intruding on the start or goal
/// clearance disc is redrawn.
pub fn generate_forest(seed: u64, cfg: &ForestConfig) -> Result<ForestWorld> {
    cfg.validate()?;
    let area = cfg.area;
    let min_w = 2.0 * cfg.inset + 2.0 * cfg.clearance;
    if area.width() < min_w.max(f64::MIN_POSITIVE) || area.height() < 2.0 * cfg.clearance {
        return Err(NavError::Generation(format!(
            "area {}x{} cannot hold start/goal with clearance {} and inset {}",
            area.width(),
            area.height(),
            cfg.clearance,
            cfg.inset
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y_span = (area.height() / 3.0).min(area.height() - 2.0 * cfg.clearance);
    let y_mid = 0.5 * (area.min.y + area.max.y);
    let lateral = |rng: &mut ChaCha8Rng| {
        if y_span > 0.0 {
            y_mid + rng.random_range(-0.5 * y_span..=0.5 * y_span)
        } else {
            y_mid
        }
    };
    let start = Vector3::new(area.min.x + cfg.inset, lateral(&mut rng), cfg.altitude);
    let goal = Vector3::new(area.max.x - cfg.inset, lateral(&mut rng), cfg.altitude);

    let count = (cfg.density * area.area()).round() as usize;
    let (lo, hi) = cfg.side_range;
    let mut obstacles = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = None;
        for _ in 0..MAX_RESAMPLES {
            let side_x = if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            };
            let side_y = if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            };
            let center = Vector2::new(
                rng.random_range(area.min.x..=area.max.x),
                rng.random_range(area.min.y..=area.max.y),
            );
            let ob = Obstacle {
                center,
                half_extents: Vector2::new(0.5 * side_x, 0.5 * side_y),
            };
            if ob.distance_to(&start.xy()) >= cfg.clearance
                && ob.distance_to(&goal.xy()) >= cfg.clearance
            {
                placed = Some(ob);
                break;
            }
        }
        obstacles.push(placed.ok_or_else(|| {
            NavError::Generation("could not place obstacle clear of start/goal".into())
        })?);
    }
    Ok(ForestWorld {
        seed,
        area,
        density: cfg.density,
        start,
        goal,
        obstacles,
        bounds: Bounds {
            area,
            z_min: cfg.z_min,
            z_max: cfg.z_max,
        },
        obstacle_height: cfg.obstacle_height,
    })
}

impl ForestWorld {
    /// An obstacle-free world, mostly for tests.
    pub fn empty(area: Rect, start: Vector3<f64>, goal: Vector3<f64>) -> Self {
        Self {
            seed: 0,
            area,
            density: 0.0,
            start,
            goal,
            obstacles: Vec::new(),
            bounds: Bounds {
                area,
                z_min: 0.0,
                z_max: 4.0,
            },
            obstacle_height: 6.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// True when the vehicle disc of `radius` overlaps any obstacle footprint
/// inside the obstacles' height band. Touching is not a collision.
pub fn check_collision(world: &ForestWorld, state: &VehicleState, radius: f64) -> bool {
    let z = state.p.z;
    if z < 0.0 || z > world.obstacle_height {
        return false;
    }
    let xy = state.p.xy();
    world
        .obstacles
        .iter()
        .any(|ob| ob.distance_to(&xy) < radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLimits {
    pub vehicle_radius: f64,
    pub goal_tol: f64,
    /// Episode time limit in seconds.
    pub time_limit: f64,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            vehicle_radius: 0.2,
            goal_tol: 0.5,
            time_limit: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    ReachedGoal,
    Collided,
    OutOfBounds,
    TimedOut,
}

impl EpisodeStatus {
    pub fn is_terminal(self) -> bool {
        self != EpisodeStatus::Running
    }
}

/// Classifies the state, checking collision, bounds, goal and time in that
/// order.
pub fn episode_status(
    world: &ForestWorld,
    state: &VehicleState,
    limits: &EpisodeLimits,
) -> EpisodeStatus {
    if check_collision(world, state, limits.vehicle_radius) {
        EpisodeStatus::Collided
    } else if !world.bounds.contains(&state.p) {
        EpisodeStatus::OutOfBounds
    } else if (state.p - world.goal).norm() < limits.goal_tol {
        EpisodeStatus::ReachedGoal
    } else if state.t >= limits.time_limit {
        EpisodeStatus::TimedOut
    } else {
        EpisodeStatus::Running
    }
}
