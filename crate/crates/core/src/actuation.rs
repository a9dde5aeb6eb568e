//! Stepper drive model.
//!
//! Each stepper is a rate-commanded velocity source: the duty command sets a
//! pulse frequency, the wheel speed relaxes toward the matching angular speed
//! with gain `k_v`, and the torque needed for that relaxation is clipped to
//! the holding torque. The common mode of the two wheels is tied to the base
//! through the no-slip contact, so their average speed always equals the
//! rolling speed `v / r`; only the left/right difference is carried as motor
//! state, and it feeds the yaw rate.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::plant::StateVector;

/// Converts kilogram-force centimetres to newton metres.
pub const KGF_CM_TO_NM: f64 = 0.0980665;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    /// Full steps per revolution (1.8° step angle).
    pub steps_per_rev: f64,
    /// steps/s at full duty.
    pub max_step_rate: f64,
    /// N·m per motor.
    pub holding_torque: f64,
    /// m, same as the plant's wheel radius.
    pub wheel_radius: f64,
    /// 1/s
    pub speed_tracking_gain: f64,
    /// Inertia reflected onto each wheel shaft, kg·m². Converts the speed
    /// tracking demand into a torque.
    pub reflected_inertia: f64,
    /// Distance between the wheel contact points, m.
    pub track_width: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        let wheel_radius = 0.030;
        MotorParams {
            steps_per_rev: 200.0,
            max_step_rate: 4000.0,
            holding_torque: 3.2 * KGF_CM_TO_NM,
            wheel_radius,
            speed_tracking_gain: 50.0,
            // Half of the default 1 kg robot per wheel.
            reflected_inertia: 0.5 * 1.0 * wheel_radius * wheel_radius,
            track_width: 0.15,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("motor.steps_per_rev", self.steps_per_rev),
            ("motor.max_step_rate", self.max_step_rate),
            ("motor.holding_torque", self.holding_torque),
            ("plant.wheel_radius", self.wheel_radius),
            ("motor.speed_tracking_gain", self.speed_tracking_gain),
            ("motor.reflected_inertia", self.reflected_inertia),
            ("motor.track_width", self.track_width),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Fastest wheel speed the driver can command, rad/s.
    pub fn max_wheel_speed(&self) -> f64 {
        step_rate_to_wheel_speed(self.max_step_rate, self)
    }

    /// Largest force both wheels together can put on the base, N.
    pub fn max_force(&self) -> f64 {
        2.0 * self.holding_torque / self.wheel_radius
    }
}

/// Per-wheel duty in `[-1, 1]`; the sign selects direction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DutyCommand {
    pub left: f64,
    pub right: f64,
}

impl DutyCommand {
    pub const ZERO: DutyCommand = DutyCommand {
        left: 0.0,
        right: 0.0,
    };

    /// Builds a command with both sides clamped to `[-1, 1]`. NaN maps to 0.
    pub fn new(left: f64, right: f64) -> Self {
        DutyCommand {
            left: clamp_duty(left),
            right: clamp_duty(right),
        }
    }

    pub fn average(&self) -> f64 {
        0.5 * (self.left + self.right)
    }
}

fn clamp_duty(d: f64) -> f64 {
    if d.is_nan() {
        0.0
    } else {
        d.clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorState {
    pub wheel_speed_left: f64,
    pub wheel_speed_right: f64,
}

impl MotorState {
    pub fn average(&self) -> f64 {
        0.5 * (self.wheel_speed_left + self.wheel_speed_right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Actuation {
    pub motor: MotorState,
    /// Horizontal force on the base, N.
    pub force: f64,
    /// rad/s, positive turning left (counter-clockwise seen from above).
    pub yaw_rate: f64,
}

/// Signed pulse frequency for a duty value.
pub fn duty_to_step_rate(duty: f64, params: &MotorParams) -> f64 {
    clamp_duty(duty) * params.max_step_rate
}

pub fn step_rate_to_wheel_speed(rate: f64, params: &MotorParams) -> f64 {
    rate * TAU / params.steps_per_rev
}

/// Advances both motors over `dt` and reports the resulting base force.
pub fn actuate(
    command: DutyCommand,
    motor: MotorState,
    plant: &StateVector,
    dt: f64,
    params: &MotorParams,
) -> Actuation {
    debug_assert!(dt > 0.0);
    let command = DutyCommand::new(command.left, command.right);
    let limit = params.max_wheel_speed();
    let rolling = plant.v / params.wheel_radius;
    let half_diff = 0.5 * (motor.wheel_speed_right - motor.wheel_speed_left);

    let target_left = step_rate_to_wheel_speed(duty_to_step_rate(command.left, params), params);
    let target_right = step_rate_to_wheel_speed(duty_to_step_rate(command.right, params), params);

    let torque = |target: f64, current: f64| {
        let demand = params.reflected_inertia * params.speed_tracking_gain * (target - current);
        demand.clamp(-params.holding_torque, params.holding_torque)
    };
    let tau_left = torque(target_left, rolling - half_diff);
    let tau_right = torque(target_right, rolling + half_diff);

    let force = (tau_left + tau_right) / params.wheel_radius;

    // Differential torque turns the robot; the base cannot rotate the
    // difference away, so it integrates against the reflected inertia.
    let half_diff = half_diff + dt * 0.5 * (tau_right - tau_left) / params.reflected_inertia;
    let left = (rolling - half_diff).clamp(-limit, limit);
    let right = (rolling + half_diff).clamp(-limit, limit);

    Actuation {
        motor: MotorState {
            wheel_speed_left: left,
            wheel_speed_right: right,
        },
        force,
        yaw_rate: params.wheel_radius * (right - left) / params.track_width,
    }
}
