//! Dense shaping terms, terminal bonuses and their weighted sum.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::world::EpisodeStatus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    /// Distance beyond which a beam is considered clear (m).
    pub activation_dist: f64,
    pub slope: f64,
    pub offset: f64,
    /// Quantile level taken over per-beam log scores.
    pub quantile: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            activation_dist: 1.5,
            slope: 6.0,
            offset: 0.5,
            quantile: 0.1,
        }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.activation_dist > 0.0
            && self.slope > 0.0
            && self.offset > 0.0
            && self.offset < 1.0
            && self.quantile > 0.0
            && self.quantile < 1.0
            && (-self.slope * self.offset).tanh() + 1.0 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NavError::Config(format!("invalid safety params {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityParams {
    /// Lower edge of the speed band as a fraction of the desired speed.
    pub band_lo: f64,
    /// Upper edge of the speed band as a multiple of the desired speed.
    pub band_hi: f64,
    pub sigma: f64,
}

impl Default for VelocityParams {
    fn default() -> Self {
        Self {
            band_lo: 0.6,
            band_hi: 1.4,
            sigma: 0.3,
        }
    }
}

impl VelocityParams {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.band_lo && self.band_lo < 1.0 && self.band_hi > 1.0 && self.sigma > 0.0 {
            Ok(())
        } else {
            Err(NavError::Config(format!(
                "invalid velocity params {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorParams {
    pub z_min: f64,
    pub z_max: f64,
    /// Tilt above which roll and pitch are penalised (rad).
    pub alpha_max: f64,
}

impl Default for CorridorParams {
    fn default() -> Self {
        Self {
            z_min: 0.8,
            z_max: 2.5,
            alpha_max: 0.6,
        }
    }
}

impl CorridorParams {
    pub fn validate(&self) -> Result<()> {
        if self.z_min < self.z_max
            && self.alpha_max > 0.0
            && self.alpha_max < std::f64::consts::FRAC_PI_2
        {
            Ok(())
        } else {
            Err(NavError::Config(format!(
                "invalid corridor params {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_static: f64,
    pub w_velocity: f64,
    pub w_height: f64,
    pub w_attitude: f64,
    pub r_goal: f64,
    pub r_collision: f64,
    pub r_limit: f64,
    pub gamma: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_static: 1.0,
            w_velocity: 0.5,
            w_height: 0.5,
            w_attitude: 0.2,
            r_goal: 20.0,
            r_collision: -20.0,
            r_limit: -10.0,
            gamma: 0.99,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.w_static,
            self.w_velocity,
            self.w_height,
            self.w_attitude,
        ]
        .iter()
        .all(|w| w.is_finite());
        if finite
            && self.r_goal > 0.0
            && self.r_collision < 0.0
            && self.r_limit < 0.0
            && self.gamma > 0.0
            && self.gamma < 1.0
        {
            Ok(())
        } else {
            Err(NavError::Config(format!("invalid reward weights {self:?}")))
        }
    }
}

/// Unweighted dense terms for one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DenseTerms {
    pub r_static: f64,
    pub r_velocity: f64,
    pub r_height: f64,
    pub r_attitude: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_static: f64,
    pub r_velocity: f64,
    pub r_height: f64,
    pub r_attitude: f64,
    pub r_terminal: f64,
    pub total: f64,
}

/// Per-beam clearance score in (0, 2).
pub fn beam_score(d: f64, p: &SafetyParams) -> f64 {
    (p.slope * (d.min(p.activation_dist) / p.activation_dist - p.offset)).tanh() + 1.0
}

/// Lower order statistic at index `floor(q * (n - 1))`.
pub fn lower_quantile(values: &mut [f64], q: f64) -> f64 {
    let idx = (q * (values.len() - 1) as f64).floor() as usize;
    let (_, v, _) = values.select_nth_unstable_by(idx, f64::total_cmp);
    *v
}

/// Quantile of the log clearance scores over all beams.
pub fn static_safety(beam_ranges: &[f64], p: &SafetyParams) -> Result<f64> {
    if beam_ranges.is_empty() {
        return Err(NavError::InvalidInput("no beam ranges".into()));
    }
    if let Some(d) = beam_ranges.iter().find(|d| !(**d >= 0.0)) {
        return Err(NavError::InvalidInput(format!(
            "beam range {d} is negative or NaN"
        )));
    }
    let mut logs: Vec<f64> = beam_ranges.iter().map(|&d| beam_score(d, p).ln()).collect();
    Ok(lower_quantile(&mut logs, p.quantile))
}

/// Progress toward the goal plus a speed-band shaping term.
pub fn velocity_reward(
    v: &Vector3<f64>,
    g_hat: &Vector3<f64>,
    v_des: f64,
    p: &VelocityParams,
) -> f64 {
    let speed = v.norm();
    let lo = p.band_lo * v_des;
    let hi = p.band_hi * v_des;
    let over = (speed - hi).max(0.0);
    let under = (lo - speed).max(0.0);
    let bonus = if (lo..=hi).contains(&speed) {
        (-(speed - v_des).powi(2) / (2.0 * p.sigma * p.sigma)).exp()
    } else {
        0.0
    };
    v.dot(g_hat) - over * over - under * under + bonus
}

pub fn height_penalty(z: f64, p: &CorridorParams) -> f64 {
    -(z - p.z_max).max(0.0).powi(2) - (p.z_min - z).max(0.0).powi(2)
}

pub fn attitude_penalty(q: &UnitQuaternion<f64>, p: &CorridorParams) -> f64 {
    let (roll, pitch, _) = q.euler_angles();
    -(pitch.abs() - p.alpha_max).max(0.0).powi(2) - (roll.abs() - p.alpha_max).max(0.0).powi(2)
}

pub fn terminal_reward(status: EpisodeStatus, w: &RewardWeights) -> f64 {
    match status {
        EpisodeStatus::ReachedGoal => w.r_goal,
        EpisodeStatus::Collided => w.r_collision,
        EpisodeStatus::OutOfBounds => w.r_limit,
        EpisodeStatus::Running | EpisodeStatus::TimedOut => 0.0,
    }
}

/// Weighted sum of the dense terms plus the terminal bonus for `status`.
pub fn total_reward(
    terms: &DenseTerms,
    w: &RewardWeights,
    status: EpisodeStatus,
) -> RewardBreakdown {
    let r_terminal = terminal_reward(status, w);
    let total = w.w_static * terms.r_static
        + w.w_velocity * terms.r_velocity
        + w.w_height * terms.r_height
        + w.w_attitude * terms.r_attitude
        + r_terminal;
    RewardBreakdown {
        r_static: terms.r_static,
        r_velocity: terms.r_velocity,
        r_height: terms.r_height,
        r_attitude: terms.r_attitude,
        r_terminal,
        total,
    }
}

/// All reward parameters together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub safety: SafetyParams,
    pub velocity: VelocityParams,
    pub corridor: CorridorParams,
    pub weights: RewardWeights,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        self.safety.validate()?;
        self.velocity.validate()?;
        self.corridor.validate()?;
        self.weights.validate()
    }

    /// Reward for arriving in `state`. `beam_ranges` are obstacle clearances
    /// around the vehicle.
    pub fn evaluate(
        &self,
        beam_ranges: &[f64],
        p: &Vector3<f64>,
        v: &Vector3<f64>,
        q: &UnitQuaternion<f64>,
        goal: &Vector3<f64>,
        v_des: f64,
        status: EpisodeStatus,
    ) -> Result<RewardBreakdown> {
        let to_goal = goal - p;
        let dist = to_goal.norm();
        let g_hat = if dist > 0.0 {
            to_goal / dist
        } else {
            Vector3::zeros()
        };
        let terms = DenseTerms {
            r_static: static_safety(beam_ranges, &self.safety)?,
            r_velocity: velocity_reward(v, &g_hat, v_des, &self.velocity),
            r_height: height_penalty(p.z, &self.corridor),
            r_attitude: attitude_penalty(q, &self.corridor),
        };
        Ok(total_reward(&terms, &self.weights, status))
    }
}
