//! Cascaded balance controller.
//!
//! The outer PID turns tilt error into a wheel-speed set-point, the inner
//! PID turns wheel-speed error into a duty, and a mixer splits the duty
//! between the wheels for turning. Both PIDs use the textbook discrete form
//! `kp·e + ki·Σe·dt + kd·(e − e_prev)/dt` with the derivative taken on the
//! error.

use crate::actuation::DutyCommand;
use crate::error::{ensure_finite, Error, Result};
use crate::teleop::Command;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    pub const fn new(kp: f64, ki: f64, kd: f64) -> Self {
        PidGains { kp, ki, kd }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        for g in [self.kp, self.ki, self.kd] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::param(name, format!("gains must be finite and >= 0, got {self:?}")));
            }
        }
        Ok(())
    }

    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.kp, self.ki, self.kd)
    }
}

/// Accumulator and limits of one PID loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub last_error: f64,
    pub output_limit: f64,
    pub integral_limit: f64,
}

impl PidState {
    pub fn new(output_limit: f64, integral_limit: f64) -> Self {
        PidState {
            integral: 0.0,
            last_error: 0.0,
            output_limit,
            integral_limit,
        }
    }

    /// Integral bound that lets the I term alone reach the output limit.
    pub fn default_integral_limit(output_limit: f64, ki: f64) -> f64 {
        output_limit / ki.max(1e-9)
    }

    pub fn unlimited() -> Self {
        PidState::new(f64::INFINITY, f64::INFINITY)
    }

    pub fn clear(&mut self) {
        self.integral = 0.0;
        self.last_error = 0.0;
    }

    pub fn step(&mut self, gains: &PidGains, error: f64, dt: f64) -> Result<f64> {
        ensure_finite("error", error)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("dt must be > 0, got {dt}")));
        }
        self.integral =
            (self.integral + error * dt).clamp(-self.integral_limit, self.integral_limit);
        let derivative = (error - self.last_error) / dt;
        self.last_error = error;
        let out = gains.kp * error + gains.ki * self.integral + gains.kd * derivative;
        Ok(out.clamp(-self.output_limit, self.output_limit))
    }
}

/// Value-style wrapper around [`PidState::step`].
pub fn pid_step(gains: &PidGains, state: PidState, error: f64, dt: f64) -> Result<(f64, PidState)> {
    let mut next = state;
    let out = next.step(gains, error, dt)?;
    Ok((out, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SteeringState {
    /// Added to the upright tilt set-point, rad.
    pub drive_offset: f64,
    /// Duty differential, positive turns left.
    pub turn: f64,
}

pub const MAX_DRIVE_OFFSET: f64 = 0.1;

impl SteeringState {
    /// Commands replace the current steering rather than accumulate.
    pub fn apply(self, cmd: &Command, cfg: &ControllerConfig) -> SteeringState {
        match cmd {
            Command::Forward => SteeringState {
                drive_offset: cfg.drive_step,
                ..self
            },
            Command::Backward => SteeringState {
                drive_offset: -cfg.drive_step,
                ..self
            },
            Command::Left => SteeringState {
                turn: cfg.turn_step,
                ..self
            },
            Command::Right => SteeringState {
                turn: -cfg.turn_step,
                ..self
            },
            Command::Stop => SteeringState::default(),
            _ => self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Balancing,
    Fallen,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Balancing => "Balancing",
            Status::Fallen => "Fallen",
        }
    }
}

impl std::str::FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Balancing" => Ok(Status::Balancing),
            "Fallen" => Ok(Status::Fallen),
            other => Err(Error::domain(format!("unknown status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub duty: DutyCommand,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Tilt loop, output in rad/s of wheel speed.
    pub outer: PidGains,
    /// Wheel-speed loop, output in duty.
    pub inner: PidGains,
    /// Largest wheel-speed set-point, rad/s.
    pub outer_output_limit: f64,
    /// `None` picks `output_limit / ki`.
    pub outer_integral_limit: Option<f64>,
    pub inner_integral_limit: Option<f64>,
    pub fall_threshold: f64,
    pub drive_step: f64,
    pub turn_step: f64,
    pub mix_gain: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            outer: PidGains::new(18.0, 60.0, 0.9),
            inner: PidGains::new(0.04, 0.25, 0.0),
            outer_output_limit: crate::actuation::MotorParams::default().max_wheel_speed(),
            outer_integral_limit: None,
            inner_integral_limit: None,
            fall_threshold: 0.35,
            drive_step: 0.03,
            turn_step: 0.15,
            mix_gain: 1.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.outer.validate("control.outer")?;
        self.inner.validate("control.inner")?;
        let positive = [
            ("control.outer_output_limit", self.outer_output_limit),
            ("control.fall_threshold", self.fall_threshold),
        ];
        for (name, value) in positive {
            if value.is_nan() || value <= 0.0 {
                return Err(Error::param(name, format!("must be > 0, got {value}")));
            }
        }
        for (name, limit) in [
            ("control.outer.integral_limit", self.outer_integral_limit),
            ("control.inner.integral_limit", self.inner_integral_limit),
        ] {
            if let Some(l) = limit {
                if l.is_nan() || l <= 0.0 {
                    return Err(Error::param(name, format!("must be > 0, got {l}")));
                }
            }
        }
        if !(0.0..=MAX_DRIVE_OFFSET).contains(&self.drive_step) {
            return Err(Error::param("control.drive_step", "must be in [0, 0.1]"));
        }
        if !(0.0..=1.0).contains(&self.turn_step) {
            return Err(Error::param("control.turn_step", "must be in [0, 1]"));
        }
        if !(self.mix_gain.is_finite() && self.mix_gain >= 0.0) {
            return Err(Error::param("control.mix_gain", "must be finite and >= 0"));
        }
        Ok(())
    }

    fn outer_state(&self) -> PidState {
        let limit = self.outer_output_limit;
        PidState::new(
            limit,
            self.outer_integral_limit
                .unwrap_or_else(|| PidState::default_integral_limit(limit, self.outer.ki)),
        )
    }

    fn inner_state(&self) -> PidState {
        PidState::new(
            1.0,
            self.inner_integral_limit
                .unwrap_or_else(|| PidState::default_integral_limit(1.0, self.inner.ki)),
        )
    }
}

/// Balance controller: both PID loops, the steering set-point and the fall
/// latch.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    outer: PidState,
    inner: PidState,
    steering: SteeringState,
    fallen: bool,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Self {
        Controller {
            outer: cfg.outer_state(),
            inner: cfg.inner_state(),
            cfg,
            steering: SteeringState::default(),
            fallen: false,
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn steering(&self) -> SteeringState {
        self.steering
    }

    pub fn outer_state(&self) -> &PidState {
        &self.outer
    }

    pub fn inner_state(&self) -> &PidState {
        &self.inner
    }

    pub fn is_fallen(&self) -> bool {
        self.fallen
    }

    /// Zeroes both loops, the steering and the fall latch.
    pub fn reset(&mut self) {
        self.outer = self.cfg.outer_state();
        self.inner = self.cfg.inner_state();
        self.steering = SteeringState::default();
        self.fallen = false;
    }

    pub fn apply_command(&mut self, cmd: &Command) {
        self.steering = self.steering.apply(cmd, &self.cfg);
    }

    /// Replaces the tilt-loop gains; accumulated state is kept, the
    /// integral bound follows the new `ki`.
    pub fn set_outer_gains(&mut self, gains: PidGains) {
        self.cfg.outer = gains;
        let fresh = self.cfg.outer_state();
        self.outer.integral_limit = fresh.integral_limit;
        self.outer.integral = self.outer.integral.clamp(-fresh.integral_limit, fresh.integral_limit);
    }

    pub fn balance_step(&mut self, theta_est: f64, wheel_speed_avg: f64, dt: f64) -> ControlOutput {
        if self.fallen || !theta_est.is_finite() || theta_est.abs() > self.cfg.fall_threshold {
            if !self.fallen {
                self.outer.clear();
                self.inner.clear();
                self.fallen = true;
            }
            return ControlOutput {
                duty: DutyCommand::ZERO,
                status: Status::Fallen,
            };
        }

        let angle_error = self.steering.drive_offset - theta_est;
        // A body leaning toward +x has negative error and needs the wheels
        // driven toward +x, hence the sign flip into the speed set-point.
        let set_point = -self
            .outer
            .step(&self.cfg.outer, angle_error, dt)
            .unwrap_or(0.0);

        let speed_error = if wheel_speed_avg.is_finite() {
            set_point - wheel_speed_avg
        } else {
            0.0
        };
        let base = self.inner.step(&self.cfg.inner, speed_error, dt).unwrap_or(0.0);

        let mix = self.steering.turn * self.cfg.mix_gain;
        ControlOutput {
            duty: DutyCommand::new(base - mix, base + mix),
            status: Status::Balancing,
        }
    }
}
