//! Scenario configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! sim.duration = 10
//! init.theta = 0.087
//! control.outer.kp = 18
//! script = 2.0 F          # apply `F` at t = 2 s
//! ```
//!
//! Unknown keys are errors. `script` may repeat; every other key replaces
//! its previous value.

use std::path::Path;

use crate::actuation::MotorParams;
use crate::control::ControllerConfig;
use crate::error::{Error, Result};
use crate::estimation::FilterConfig;
use crate::plant::{RobotParams, StateVector, MAX_STEP};
use crate::sensors::ImuConfig;
use crate::sim::SettleSpec;
use crate::teleop::{parse_frame, Command};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedCommand {
    pub t: f64,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub physics_dt: f64,
    pub control_period: f64,
    pub initial_state: StateVector,
    pub seed: u64,
    pub robot: RobotParams,
    pub motor: MotorParams,
    pub imu: ImuConfig,
    pub filter: FilterConfig,
    pub control: ControllerConfig,
    pub settle: SettleSpec,
    pub command_script: Vec<ScriptedCommand>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            duration: 10.0,
            physics_dt: 0.001,
            control_period: 0.01,
            initial_state: StateVector::tilted(0.087),
            seed: 0,
            robot: RobotParams::default(),
            motor: MotorParams::default(),
            imu: ImuConfig::default(),
            filter: FilterConfig::default(),
            control: ControllerConfig::default(),
            settle: SettleSpec::default(),
            command_script: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    /// Physics substeps per control tick.
    pub fn substeps(&self) -> u32 {
        (self.control_period / self.physics_dt).round() as u32
    }

    /// Control ticks in `duration`.
    pub fn ticks(&self) -> u64 {
        (self.duration / self.control_period - 1e-9).ceil() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::param("sim.duration", "must be > 0"));
        }
        if !(self.physics_dt > 0.0 && self.physics_dt <= MAX_STEP) {
            return Err(Error::param("sim.physics_dt", format!("must be in (0, {MAX_STEP}]")));
        }
        let ratio = self.control_period / self.physics_dt;
        if !(ratio.is_finite() && ratio >= 0.5 && (ratio - ratio.round()).abs() < 1e-6) {
            return Err(Error::param(
                "sim.control_period",
                "must be a positive integer multiple of sim.physics_dt",
            ));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::param("init", "initial state must be finite"));
        }
        self.robot.validate()?;
        self.motor.validate()?;
        if self.motor.wheel_radius != self.robot.wheel_radius {
            return Err(Error::param("plant.wheel_radius", "motor and plant wheel radius differ"));
        }
        self.imu.validate()?;
        if (self.imu.sample_rate * self.control_period - 1.0).abs() > 1e-6 {
            return Err(Error::param(
                "imu.sample_rate",
                "must equal the control rate (1 / sim.control_period)",
            ));
        }
        self.filter.validate()?;
        self.control.validate()?;
        if !(self.settle.band > 0.0 && self.settle.hold >= 0.0) {
            return Err(Error::param("metrics", "settle band must be > 0 and hold >= 0"));
        }
        for s in &self.command_script {
            if !(s.t.is_finite() && s.t >= 0.0) {
                return Err(Error::param("script", format!("bad time {}", s.t)));
            }
        }
        Ok(())
    }

    /// Parses a config file's text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut builder = ConfigBuilder::new(ScenarioConfig::default());
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            builder.apply_line(line, idx + 1)?;
        }
        builder.finish()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides, as given on a command line.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self> {
        let derived = derived_reflected_inertia(&self.robot);
        let explicit = self.motor.reflected_inertia != derived;
        let mut builder = ConfigBuilder::new(self);
        builder.reflected_inertia_explicit = explicit;
        for o in overrides {
            builder.apply_line(o.as_ref(), 0)?;
        }
        builder.finish()
    }

    /// Renders every setting in the file format; parsing the result gives
    /// back an equal config.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.entries() {
            out.push_str(&format!("{key} = {value}\n"));
        }
        for s in &self.command_script {
            out.push_str(&format!("script = {} {}\n", s.t, s.command));
        }
        out
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let c = &self.control;
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |v| v.to_string());
        vec![
            ("sim.duration", self.duration.to_string()),
            ("sim.physics_dt", self.physics_dt.to_string()),
            ("sim.control_period", self.control_period.to_string()),
            ("sim.seed", self.seed.to_string()),
            ("init.x", self.initial_state.x.to_string()),
            ("init.v", self.initial_state.v.to_string()),
            ("init.theta", self.initial_state.theta.to_string()),
            ("init.omega", self.initial_state.omega.to_string()),
            ("plant.cart_mass", self.robot.cart_mass.to_string()),
            ("plant.pendulum_mass", self.robot.pendulum_mass.to_string()),
            ("plant.com_distance", self.robot.com_distance.to_string()),
            ("plant.pendulum_inertia", self.robot.pendulum_inertia.to_string()),
            ("plant.wheel_radius", self.robot.wheel_radius.to_string()),
            ("plant.gravity", self.robot.gravity.to_string()),
            ("plant.cart_friction", self.robot.cart_friction.to_string()),
            ("plant.pivot_friction", self.robot.pivot_friction.to_string()),
            ("motor.steps_per_rev", self.motor.steps_per_rev.to_string()),
            ("motor.max_step_rate", self.motor.max_step_rate.to_string()),
            ("motor.holding_torque", self.motor.holding_torque.to_string()),
            ("motor.speed_tracking_gain", self.motor.speed_tracking_gain.to_string()),
            ("motor.reflected_inertia", self.motor.reflected_inertia.to_string()),
            ("motor.track_width", self.motor.track_width.to_string()),
            ("imu.accel_noise_std", self.imu.accel_noise_std.to_string()),
            ("imu.gyro_noise_std", self.imu.gyro_noise_std.to_string()),
            ("imu.gyro_bias_init", self.imu.gyro_bias_init.to_string()),
            ("imu.gyro_bias_walk_std", self.imu.gyro_bias_walk_std.to_string()),
            ("imu.accel_range", self.imu.accel_range.to_string()),
            ("imu.gyro_range", self.imu.gyro_range.to_string()),
            ("imu.sample_rate", self.imu.sample_rate.to_string()),
            ("filter.alpha", self.filter.alpha.to_string()),
            ("control.outer.kp", c.outer.kp.to_string()),
            ("control.outer.ki", c.outer.ki.to_string()),
            ("control.outer.kd", c.outer.kd.to_string()),
            ("control.outer.integral_limit", opt(c.outer_integral_limit)),
            ("control.inner.kp", c.inner.kp.to_string()),
            ("control.inner.ki", c.inner.ki.to_string()),
            ("control.inner.kd", c.inner.kd.to_string()),
            ("control.inner.integral_limit", opt(c.inner_integral_limit)),
            ("control.fall_threshold", c.fall_threshold.to_string()),
            ("control.drive_step", c.drive_step.to_string()),
            ("control.turn_step", c.turn_step.to_string()),
            ("control.mix_gain", c.mix_gain.to_string()),
            ("metrics.settle_band", self.settle.band.to_string()),
            ("metrics.settle_hold", self.settle.hold.to_string()),
        ]
    }
}

/// Half the robot's mass seen at each wheel rim.
fn derived_reflected_inertia(robot: &RobotParams) -> f64 {
    let r = robot.wheel_radius;
    0.5 * (robot.cart_mass + robot.pendulum_mass) * r * r
}

struct ConfigBuilder {
    cfg: ScenarioConfig,
    reflected_inertia_explicit: bool,
    script_cleared: bool,
}

impl ConfigBuilder {
    fn new(cfg: ScenarioConfig) -> Self {
        ConfigBuilder {
            cfg,
            reflected_inertia_explicit: false,
            script_cleared: false,
        }
    }

    fn apply_line(&mut self, line: &str, line_no: usize) -> Result<()> {
        let err = |reason: String| Error::Config {
            line: line_no,
            reason,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        self.set(key, value).map_err(err)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let num = || -> std::result::Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("`{key}` expects a number, got `{value}`"))
        };
        let auto_or_num = || -> std::result::Result<Option<f64>, String> {
            if value == "auto" {
                Ok(None)
            } else {
                num().map(Some)
            }
        };
        let c = &mut self.cfg;
        match key {
            "sim.duration" => c.duration = num()?,
            "sim.physics_dt" => c.physics_dt = num()?,
            "sim.control_period" => c.control_period = num()?,
            "sim.seed" => {
                c.seed = value
                    .parse()
                    .map_err(|_| format!("`sim.seed` expects an unsigned integer, got `{value}`"))?
            }
            "init.x" => c.initial_state.x = num()?,
            "init.v" => c.initial_state.v = num()?,
            "init.theta" => c.initial_state.theta = num()?,
            "init.omega" => c.initial_state.omega = num()?,
            "plant.cart_mass" => c.robot.cart_mass = num()?,
            "plant.pendulum_mass" => c.robot.pendulum_mass = num()?,
            "plant.com_distance" => c.robot.com_distance = num()?,
            "plant.pendulum_inertia" => c.robot.pendulum_inertia = num()?,
            "plant.wheel_radius" => {
                c.robot.wheel_radius = num()?;
                c.motor.wheel_radius = c.robot.wheel_radius;
            }
            "plant.gravity" => c.robot.gravity = num()?,
            "plant.cart_friction" => c.robot.cart_friction = num()?,
            "plant.pivot_friction" => c.robot.pivot_friction = num()?,
            "motor.steps_per_rev" => c.motor.steps_per_rev = num()?,
            "motor.max_step_rate" => c.motor.max_step_rate = num()?,
            "motor.holding_torque" => c.motor.holding_torque = num()?,
            "motor.speed_tracking_gain" => c.motor.speed_tracking_gain = num()?,
            "motor.reflected_inertia" => {
                c.motor.reflected_inertia = num()?;
                self.reflected_inertia_explicit = true;
            }
            "motor.track_width" => c.motor.track_width = num()?,
            "imu.accel_noise_std" => c.imu.accel_noise_std = num()?,
            "imu.gyro_noise_std" => c.imu.gyro_noise_std = num()?,
            "imu.gyro_bias_init" => c.imu.gyro_bias_init = num()?,
            "imu.gyro_bias_walk_std" => c.imu.gyro_bias_walk_std = num()?,
            "imu.accel_range" => c.imu.accel_range = num()?,
            "imu.gyro_range" => c.imu.gyro_range = num()?,
            "imu.sample_rate" => c.imu.sample_rate = num()?,
            "filter.alpha" => c.filter.alpha = num()?,
            "control.outer.kp" => c.control.outer.kp = num()?,
            "control.outer.ki" => c.control.outer.ki = num()?,
            "control.outer.kd" => c.control.outer.kd = num()?,
            "control.outer.integral_limit" => c.control.outer_integral_limit = auto_or_num()?,
            "control.inner.kp" => c.control.inner.kp = num()?,
            "control.inner.ki" => c.control.inner.ki = num()?,
            "control.inner.kd" => c.control.inner.kd = num()?,
            "control.inner.integral_limit" => c.control.inner_integral_limit = auto_or_num()?,
            "control.fall_threshold" => c.control.fall_threshold = num()?,
            "control.drive_step" => c.control.drive_step = num()?,
            "control.turn_step" => c.control.turn_step = num()?,
            "control.mix_gain" => c.control.mix_gain = num()?,
            "metrics.settle_band" => c.settle.band = num()?,
            "metrics.settle_hold" => c.settle.hold = num()?,
            "script" => {
                let (time, frame) = value
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| format!("`script` expects `<time> <command>`, got `{value}`"))?;
                let t: f64 = time
                    .parse()
                    .map_err(|_| format!("bad script time `{time}`"))?;
                let command = parse_frame(frame.trim().as_bytes(), usize::MAX)
                    .map_err(|e| format!("bad script command `{}`: {e}", frame.trim()))?;
                if !self.script_cleared {
                    c.command_script.clear();
                    self.script_cleared = true;
                }
                c.command_script.push(ScriptedCommand { t, command });
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    fn finish(mut self) -> Result<ScenarioConfig> {
        let c = &mut self.cfg;
        if !self.reflected_inertia_explicit {
            c.motor.reflected_inertia = derived_reflected_inertia(&c.robot);
        }
        c.control.outer_output_limit = c.motor.max_wheel_speed();
        c.command_script
            .sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap_or(std::cmp::Ordering::Equal));
        c.validate()?;
        Ok(self.cfg)
    }
}
