//! Multi-rate simulation loop, telemetry traces and run metrics.

mod config;
mod engine;
mod metrics;
mod trace;

pub use config::{ScenarioConfig, ScriptedCommand};
pub use engine::{run, AppliedCommand, CommandSource, Simulation};
pub use metrics::{compute_metrics, settling_time, MetricsTracker, RunMetrics, SettleSpec};
pub use trace::{read_trace, write_trace, write_trace_file, TRACE_HEADER};

use crate::control::Status;

/// Snapshot taken once per control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryFrame {
    pub t: f64,
    pub theta_true: f64,
    pub theta_est: f64,
    pub x: f64,
    pub v: f64,
    pub wheel_speed_avg: f64,
    pub duty_left: f64,
    pub duty_right: f64,
    pub status: Status,
}

impl Default for TelemetryFrame {
    fn default() -> Self {
        TelemetryFrame {
            t: 0.0,
            theta_true: 0.0,
            theta_est: 0.0,
            x: 0.0,
            v: 0.0,
            wheel_speed_avg: 0.0,
            duty_left: 0.0,
            duty_right: 0.0,
            status: Status::Balancing,
        }
    }
}
