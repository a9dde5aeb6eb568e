use std::f64::consts::FRAC_PI_2;

use crate::actuation::{actuate, MotorState};
use crate::control::{Controller, PidGains};
use crate::error::Result;
use crate::estimation::{FilterConfig, FilterState};
use crate::plant::{self, StateVector};
use crate::sensors::{accel_tilt, ImuState};
use crate::sim::{MetricsTracker, RunMetrics, ScenarioConfig, TelemetryFrame};
use crate::teleop::{Command, CommandQueue, ScheduledCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandSource {
    Scripted,
    Live { client: u64, receipt_tick: u64 },
}

/// A command as it took effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedCommand {
    pub tick: u64,
    pub t: f64,
    pub command: Command,
    pub source: CommandSource,
}

/// The robot and its control stack, advanced one control tick at a time.
///
/// Each tick samples the IMU, updates the tilt filter, applies any commands
/// that have come due, runs the controller and the motors, records a
/// telemetry frame, then integrates the plant over the control period with
/// the motor force held.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: ScenarioConfig,
    state: StateVector,
    motor: MotorState,
    imu: ImuState,
    filter: Option<FilterState>,
    filter_cfg: FilterConfig,
    controller: Controller,
    tick: u64,
    force: f64,
    yaw_rate: f64,
    heading: f64,
    script_cursor: usize,
    pending: Vec<ScheduledCommand>,
    applied: Vec<AppliedCommand>,
    tracker: MetricsTracker,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Simulation {
            state: cfg.initial_state,
            motor: MotorState::default(),
            imu: ImuState::new(&cfg.imu, cfg.seed),
            filter: None,
            filter_cfg: cfg.filter,
            controller: Controller::new(cfg.control),
            tick: 0,
            force: 0.0,
            yaw_rate: 0.0,
            heading: 0.0,
            script_cursor: 0,
            pending: Vec::new(),
            applied: Vec::new(),
            tracker: MetricsTracker::new(cfg.settle),
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Index of the next tick to run.
    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    /// Time of the next tick.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.control_period
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.cfg.ticks()
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn filter_config(&self) -> &FilterConfig {
        &self.filter_cfg
    }

    pub fn yaw_rate(&self) -> f64 {
        self.yaw_rate
    }

    /// Integrated yaw, rad.
    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn applied_commands(&self) -> &[AppliedCommand] {
        &self.applied
    }

    pub fn metrics(&self) -> RunMetrics {
        self.tracker.metrics()
    }

    /// Queues a live command for its due tick.
    pub fn schedule(&mut self, cmd: ScheduledCommand) {
        let key = (cmd.due_tick, cmd.seq);
        let at = self
            .pending
            .partition_point(|p| (p.due_tick, p.seq) <= key);
        self.pending.insert(at, cmd);
    }

    fn script_due_tick(&self, t: f64) -> u64 {
        (t / self.cfg.control_period - 1e-9).ceil().max(0.0) as u64
    }

    fn apply(&mut self, command: Command, source: CommandSource) {
        match command {
            Command::SetGains { kp, ki, kd } => self.controller.set_outer_gains(PidGains::new(kp, ki, kd)),
            Command::SetAlpha(alpha) => self.filter_cfg.alpha = alpha,
            Command::Reset => self.reset_robot(),
            Command::TelemetryRate(_) => {}
            steering => self.controller.apply_command(&steering),
        }
        self.applied.push(AppliedCommand {
            tick: self.tick,
            t: self.time(),
            command,
            source,
        });
    }

    /// Stands the robot back up where it lies, at rest.
    fn reset_robot(&mut self) {
        self.state = StateVector {
            x: self.state.x,
            ..StateVector::default()
        };
        self.motor = MotorState::default();
        self.force = 0.0;
        self.filter = Some(FilterState::reset(0.0));
        self.controller.reset();
    }

    fn apply_due_commands(&mut self) {
        while let Some(s) = self.cfg.command_script.get(self.script_cursor).copied() {
            if self.script_due_tick(s.t) > self.tick {
                break;
            }
            self.script_cursor += 1;
            self.apply(s.command, CommandSource::Scripted);
        }
        let due = self.pending.partition_point(|p| p.due_tick <= self.tick);
        let ready: Vec<_> = self.pending.drain(..due).collect();
        for cmd in ready {
            self.apply(
                cmd.command,
                CommandSource::Live {
                    client: cmd.client,
                    receipt_tick: cmd.receipt_tick,
                },
            );
        }
    }

    /// Runs one control tick and returns its telemetry frame.
    pub fn step_tick(&mut self) -> Result<TelemetryFrame> {
        let period = self.cfg.control_period;
        let t = self.time();

        let cart_accel = plant::derivatives(self.state, self.force, &self.cfg.robot)?.dv;
        let sample = self.imu.sample_with_gravity(
            &self.state,
            cart_accel,
            self.cfg.robot.gravity,
            &self.cfg.imu,
            period,
            t,
        );
        let measured_tilt = accel_tilt(&sample).unwrap_or(0.0);
        let filter = match self.filter {
            // The first reading seeds the filter with the gravity tilt.
            None => FilterState::reset(measured_tilt),
            Some(f) => f.update(sample.gyro, measured_tilt, period, &self.filter_cfg)?,
        };
        self.filter = Some(filter);

        self.apply_due_commands();
        let theta_est = self.filter.map_or(0.0, |f| f.theta_est);

        let wheel_speed_avg = self.motor.average();
        let out = self.controller.balance_step(theta_est, wheel_speed_avg, period);
        let act = actuate(out.duty, self.motor, &self.state, period, &self.cfg.motor);
        self.motor = act.motor;
        self.force = act.force;
        self.yaw_rate = act.yaw_rate;

        let frame = TelemetryFrame {
            t,
            theta_true: self.state.theta,
            theta_est,
            x: self.state.x,
            v: self.state.v,
            wheel_speed_avg,
            duty_left: out.duty.left,
            duty_right: out.duty.right,
            status: out.status,
        };
        self.tracker.push(&frame);

        let dt = self.cfg.physics_dt;
        for _ in 0..self.cfg.substeps() {
            self.state = plant::step(self.state, self.force, dt, &self.cfg.robot)?;
            // Past horizontal the body is lying on the ground.
            if self.state.theta.abs() >= FRAC_PI_2 {
                self.state.theta = FRAC_PI_2.copysign(self.state.theta);
                self.state.omega = 0.0;
            }
        }
        self.heading += self.yaw_rate * period;
        self.tick += 1;
        Ok(frame)
    }
}

/// Runs a scenario to completion. A live queue, when given, is drained at
/// the start of every tick.
pub fn run(
    scenario: &ScenarioConfig,
    live: Option<&CommandQueue>,
) -> Result<(Vec<TelemetryFrame>, RunMetrics)> {
    let mut sim = Simulation::new(scenario.clone())?;
    let mut trace = Vec::with_capacity(scenario.ticks() as usize);
    while !sim.is_finished() {
        if let Some(queue) = live {
            for cmd in queue.drain_for_tick(sim.tick_index()) {
                sim.schedule(cmd);
            }
        }
        trace.push(sim.step_tick()?);
    }
    Ok((trace, sim.metrics()))
}
