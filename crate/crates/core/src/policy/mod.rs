//! The end-to-end policy: a small convolutional encoder over the range
//! pseudo-image, a shared tanh MLP over the augmented observation, a Beta
//! actor head and a scalar value head.
//!
//! Gradients are computed by hand-written reverse passes into a flat
//! gradient vector that mirrors the flat parameter vector.

pub mod beta;
mod checkpoint;
pub mod layers;
mod net;

pub use beta::BetaParams;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use net::{
    HeadTrace, OutputGrad, ParamBlock, PerceptionTrace, PolicyConfig, PolicyNet, PolicyParams, Tape,
};

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::temporal::{TemporalEncoding, TEMPORAL_DIM};
use crate::world::VehicleState;

/// Body-frame velocity command axes.
pub const ACTION_DIM: usize = 3;

/// Observation slots after the perception feature:
/// relative goal, quaternion, velocity, angular rate, previous action,
/// desired speed and the temporal encoding.
pub const PROPRIO_DIM: usize = 3 + 4 + 3 + 3 + ACTION_DIM + 1 + TEMPORAL_DIM;

/// Fixed input scaling applied to the non-perceptual slots.
pub const PROPRIO_SCALE: [f64; PROPRIO_DIM] = [
    0.1, 0.1, 0.1, // relative goal
    1.0, 1.0, 1.0, 1.0, // quaternion
    0.25, 0.25, 0.25, // velocity
    0.5, 0.5, 0.5, // angular rate
    0.2, 0.2, 0.2,  // previous action
    0.25, // desired speed
    1.0, 1.0, 1.0, 1.0, // temporal encoding
];

/// The augmented observation. Positions and velocities are in the body frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub z: Vec<f64>,
    pub p_rel: [f64; 3],
    /// `[w, x, y, z]`.
    pub q: [f64; 4],
    pub v: [f64; 3],
    pub omega: [f64; 3],
    pub a_prev: [f64; ACTION_DIM],
    pub v_des: f64,
    pub phi: [f64; TEMPORAL_DIM],
}

impl Observation {
    pub fn dim(&self) -> usize {
        self.z.len() + PROPRIO_DIM
    }

    /// Everything except the perception feature, in network order.
    pub fn proprio(&self) -> [f64; PROPRIO_DIM] {
        let mut out = [0.0; PROPRIO_DIM];
        let parts: [&[f64]; 7] = [
            &self.p_rel,
            &self.q,
            &self.v,
            &self.omega,
            &self.a_prev,
            std::slice::from_ref(&self.v_des),
            &self.phi,
        ];
        let mut k = 0;
        for part in parts {
            out[k..k + part.len()].copy_from_slice(part);
            k += part.len();
        }
        out
    }

    /// Full vector: feature followed by [`Observation::proprio`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.z.clone();
        v.extend_from_slice(&self.proprio());
        v
    }
}

/// Concatenates the observation parts, expressing the goal offset and the
/// velocity in the body frame.
pub fn assemble_observation(
    z: &[f64],
    state: &VehicleState,
    goal: &Vector3<f64>,
    a_prev: &[f64; ACTION_DIM],
    v_des: f64,
    phi: &TemporalEncoding,
) -> Result<Observation> {
    let inv = state.q.inverse();
    let p_rel = inv * (goal - state.p);
    let v = inv * state.v;
    let q = state.q.quaternion();
    let obs = Observation {
        z: z.to_vec(),
        p_rel: p_rel.into(),
        q: [q.w, q.i, q.j, q.k],
        v: v.into(),
        omega: state.omega.into(),
        a_prev: *a_prev,
        v_des,
        phi: phi.phi,
    };
    if obs.z.iter().chain(&obs.proprio()).any(|x| !x.is_finite()) {
        return Err(NavError::InvalidInput(
            "observation contains non-finite values".into(),
        ));
    }
    Ok(obs)
}

/// A drawn action: the raw unit-interval sample, the scaled command and its
/// log-density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub u: [f64; ACTION_DIM],
    pub a: [f64; ACTION_DIM],
    pub log_prob: f64,
}

/// Maps unit-interval samples to `[-v_max, v_max]` per axis.
pub fn scale_action(u: &[f64; ACTION_DIM], v_max: f64) -> [f64; ACTION_DIM] {
    u.map(|x| -v_max + x * 2.0 * v_max)
}

pub fn sample_and_logprob<R: Rng + ?Sized>(
    bp: &BetaParams,
    v_max: f64,
    rng: &mut R,
) -> ActionSample {
    let draw = bp.sample(rng);
    let mut u = [0.0; ACTION_DIM];
    u.copy_from_slice(&draw);
    ActionSample {
        u,
        a: scale_action(&u, v_max),
        log_prob: bp.log_prob(&u),
    }
}

/// Distribution mean, used for deterministic evaluation.
pub fn mean_action(bp: &BetaParams, v_max: f64) -> ActionSample {
    let mut u = [0.0; ACTION_DIM];
    u.copy_from_slice(&bp.mean());
    ActionSample {
        u,
        a: scale_action(&u, v_max),
        log_prob: bp.log_prob(&u),
    }
}

/// Orientation from a `[w, x, y, z]` observation slot.
pub fn quaternion_from_slot(q: &[f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
}
