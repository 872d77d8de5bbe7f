use std::f64::consts::PI;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Kinematic state of the vehicle. Velocity is in the world frame, angular
/// velocity in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub p: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub t: f64,
}

impl VehicleState {
    /// Level hover at `p` facing `yaw`.
    pub fn at_rest(p: Vector3<f64>, yaw: f64) -> Self {
        Self {
            p,
            q: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
            t: 0.0,
        }
    }

    pub fn yaw(&self) -> f64 {
        self.q.euler_angles().2
    }

    /// Rotation about +Z by the current heading only.
    pub fn heading(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw())
    }
}

/// Target linear velocity in the heading-aligned body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub v_cmd: Vector3<f64>,
}

impl ActionCommand {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            v_cmd: Vector3::new(x, y, z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Velocity tracking time constant (s).
    pub tau: f64,
    /// Heading alignment time constant (s).
    pub tau_yaw: f64,
    /// Tilt saturation (rad).
    pub tilt_max: f64,
    pub gravity: f64,
    /// Below this horizontal speed the heading is held.
    pub yaw_hold_speed: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            tau: 0.2,
            tau_yaw: 0.2,
            tilt_max: 0.8,
            gravity: 9.81,
            yaw_hold_speed: 0.2,
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// Advances the vehicle by `dt` under a first-order velocity-tracking loop.
///
/// The command is rotated by the current heading, the velocity relaxes toward
/// it with time constant `tau`, and position integrates the new velocity.
/// Heading lags the horizontal velocity direction; pitch and roll are the
/// small-angle tilts that would produce the realised acceleration.
pub fn step_dynamics(
    state: &VehicleState,
    cmd: &ActionCommand,
    params: &DynamicsParams,
    dt: f64,
) -> VehicleState {
    debug_assert!(dt > 0.0);
    let (roll0, pitch0, yaw0) = state.q.euler_angles();
    let target = state.heading() * cmd.v_cmd;
    let gain = (dt / params.tau).min(1.0);
    let v = state.v + (target - state.v) * gain;
    let p = state.p + v * dt;

    let acc = (v - state.v) / dt;
    let (s, c) = yaw0.sin_cos();
    let a_fwd = c * acc.x + s * acc.y;
    let a_lat = -s * acc.x + c * acc.y;
    let tilt = |a: f64| {
        (a / params.gravity)
            .atan()
            .clamp(-params.tilt_max, params.tilt_max)
    };
    let pitch = tilt(a_fwd);
    let roll = -tilt(a_lat);

    let mut yaw = yaw0;
    let horiz = v.xy();
    if horiz.norm() > params.yaw_hold_speed {
        let want = horiz.y.atan2(horiz.x);
        yaw = wrap_angle(yaw0 + wrap_angle(want - yaw0) * (dt / params.tau_yaw).min(1.0));
    }
    let q = UnitQuaternion::from_euler_angles(roll, pitch, yaw);
    let omega = Vector3::new(
        (roll - roll0) / dt,
        (pitch - pitch0) / dt,
        wrap_angle(yaw - yaw0) / dt,
    );
    VehicleState {
        p,
        q,
        v,
        omega,
        t: state.t + dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matching_command_is_a_fixed_point() {
        let mut s = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5), 0.3);
        s.v = s.heading() * Vector3::new(1.2, -0.4, 0.1);
        let cmd = ActionCommand::new(1.2, -0.4, 0.1);
        for dt in [0.001, 0.01, 0.5] {
            let next = step_dynamics(&s, &cmd, &DynamicsParams::default(), dt);
            assert!((next.v - s.v).norm() < 1e-12);
        }
    }

    #[test]
    fn first_lag_step() {
        let s = VehicleState::at_rest(Vector3::zeros(), 0.0);
        let next = step_dynamics(
            &s,
            &ActionCommand::new(1.0, 0.0, 0.0),
            &DynamicsParams::default(),
            0.01,
        );
        assert!((next.v.norm() - 0.05).abs() < 1e-15);
        assert!((next.p.x - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn converges_after_five_time_constants() {
        let params = DynamicsParams::default();
        let mut s = VehicleState::at_rest(Vector3::zeros(), 0.0);
        let cmd = ActionCommand::new(2.0, 0.0, 0.0);
        for _ in 0..100 {
            s = step_dynamics(&s, &cmd, &params, 0.01);
        }
        let target = s.heading() * cmd.v_cmd;
        assert!((s.v - target).norm() <= 0.01 * target.norm());
    }

    #[test]
    fn forward_acceleration_pitches_nose_down() {
        let s = VehicleState::at_rest(Vector3::zeros(), 0.0);
        let next = step_dynamics(
            &s,
            &ActionCommand::new(3.0, 0.0, 0.0),
            &DynamicsParams::default(),
            0.01,
        );
        let (roll, pitch, _) = next.q.euler_angles();
        assert!(pitch > 0.0);
        assert!(roll.abs() < 1e-12);
        assert!(pitch <= DynamicsParams::default().tilt_max + 1e-12);
    }

    #[test]
    fn heading_follows_velocity() {
        let params = DynamicsParams::default();
        let mut s = VehicleState::at_rest(Vector3::zeros(), 0.0);
        s.v = Vector3::new(0.0, 2.0, 0.0);
        for _ in 0..200 {
            let body = s.heading().inverse() * Vector3::new(0.0, 2.0, 0.0);
            s = step_dynamics(&s, &ActionCommand { v_cmd: body }, &params, 0.01);
        }
        assert!((s.yaw() - PI / 2.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn quaternion_stays_unit(
            vx in -5.0f64..5.0, vy in -5.0f64..5.0, vz in -5.0f64..5.0,
            yaw in -3.0f64..3.0, steps in 1usize..50,
        ) {
            let params = DynamicsParams::default();
            let mut s = VehicleState::at_rest(Vector3::zeros(), yaw);
            for k in 0..steps {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                s = step_dynamics(&s, &ActionCommand::new(vx * sign, vy, vz), &params, 0.01);
                prop_assert!((s.q.as_ref().norm() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn displacement_bounded_per_step(vx in -5.0f64..5.0, vy in -5.0f64..5.0) {
            let s = VehicleState::at_rest(Vector3::zeros(), 0.0);
            let next = step_dynamics(&s, &ActionCommand::new(vx, vy, 0.0), &DynamicsParams::default(), 0.01);
            // ample margin below the smallest obstacle side
            prop_assert!((next.p - s.p).norm() <= 0.05 + 1e-12);
        }
    }
}
