use std::fmt;

use crate::control::Status;
use crate::numfmt::format_sig;
use crate::sim::TelemetryFrame;

/// Summary of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub settled: bool,
    pub settling_time: Option<f64>,
    pub max_abs_theta: f64,
    /// RMS of the true tilt from the settling time on, or over the whole
    /// run when it never settled.
    pub rms_theta: f64,
    pub fell: bool,
    pub final_x: f64,
    /// Largest `|x|` seen.
    pub max_abs_x: f64,
    /// ∫ t·|θ| dt over the run.
    pub itae: f64,
}

impl fmt::Display for RunMetrics {
    /// One `key=value` pair per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = |v: f64| format_sig(v, 9);
        writeln!(f, "settled={}", self.settled)?;
        match self.settling_time {
            Some(t) => writeln!(f, "settling_time={}", g(t))?,
            None => writeln!(f, "settling_time=none")?,
        }
        writeln!(f, "max_abs_theta={}", g(self.max_abs_theta))?;
        writeln!(f, "rms_theta={}", g(self.rms_theta))?;
        writeln!(f, "fell={}", self.fell)?;
        writeln!(f, "final_x={}", g(self.final_x))?;
        writeln!(f, "max_abs_x={}", g(self.max_abs_x))?;
        writeln!(f, "itae={}", g(self.itae))
    }
}

/// Settling criterion: `|θ| ≤ band` held for `hold` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleSpec {
    pub band: f64,
    pub hold: f64,
}

impl Default for SettleSpec {
    fn default() -> Self {
        SettleSpec {
            band: 0.01,
            hold: 0.5,
        }
    }
}

/// Streaming metrics over telemetry frames.
#[derive(Debug, Clone)]
pub struct MetricsTracker {
    spec: SettleSpec,
    streak_start: Option<f64>,
    streak_sumsq: f64,
    streak_count: usize,
    settled_at: Option<f64>,
    total_sumsq: f64,
    total_count: usize,
    max_abs_theta: f64,
    max_abs_x: f64,
    fell: bool,
    final_x: f64,
    itae: f64,
    last_t: Option<f64>,
}

impl MetricsTracker {
    pub fn new(spec: SettleSpec) -> Self {
        MetricsTracker {
            spec,
            streak_start: None,
            streak_sumsq: 0.0,
            streak_count: 0,
            settled_at: None,
            total_sumsq: 0.0,
            total_count: 0,
            max_abs_theta: 0.0,
            max_abs_x: 0.0,
            fell: false,
            final_x: 0.0,
            itae: 0.0,
            last_t: None,
        }
    }

    pub fn push(&mut self, frame: &TelemetryFrame) {
        let theta = frame.theta_true.abs();
        let sq = theta * theta;
        self.total_sumsq += sq;
        self.total_count += 1;
        self.max_abs_theta = self.max_abs_theta.max(theta);
        self.max_abs_x = self.max_abs_x.max(frame.x.abs());
        self.final_x = frame.x;
        self.fell |= frame.status == Status::Fallen;
        let dt = self.last_t.map_or(0.0, |last| frame.t - last);
        self.itae += frame.t * theta * dt;
        self.last_t = Some(frame.t);

        if self.settled_at.is_some() {
            self.streak_sumsq += sq;
            self.streak_count += 1;
            return;
        }
        if theta <= self.spec.band {
            let start = *self.streak_start.get_or_insert(frame.t);
            if start == frame.t {
                self.streak_sumsq = 0.0;
                self.streak_count = 0;
            }
            self.streak_sumsq += sq;
            self.streak_count += 1;
            if frame.t - start >= self.spec.hold - 1e-9 {
                self.settled_at = Some(start);
            }
        } else {
            self.streak_start = None;
        }
    }

    /// First time the tilt entered the band and stayed there for the hold
    /// time, or until the end of the frames seen so far.
    pub fn settling_time(&self) -> Option<f64> {
        self.settled_at.or(self.streak_start)
    }

    pub fn metrics(&self) -> RunMetrics {
        let settling_time = self.settling_time();
        let rms_theta = if settling_time.is_some() && self.streak_count > 0 {
            (self.streak_sumsq / self.streak_count as f64).sqrt()
        } else if self.total_count > 0 {
            (self.total_sumsq / self.total_count as f64).sqrt()
        } else {
            0.0
        };
        RunMetrics {
            settled: settling_time.is_some() && !self.fell,
            settling_time,
            max_abs_theta: self.max_abs_theta,
            rms_theta,
            fell: self.fell,
            final_x: self.final_x,
            max_abs_x: self.max_abs_x,
            itae: self.itae,
        }
    }
}

pub fn compute_metrics(trace: &[TelemetryFrame], spec: SettleSpec) -> RunMetrics {
    let mut tracker = MetricsTracker::new(spec);
    for frame in trace {
        tracker.push(frame);
    }
    tracker.metrics()
}

/// See [`MetricsTracker::settling_time`].
pub fn settling_time(trace: &[TelemetryFrame], band: f64, hold: f64) -> Option<f64> {
    compute_metrics(trace, SettleSpec { band, hold }).settling_time
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_of(f: impl Fn(f64) -> f64, n: usize) -> Vec<TelemetryFrame> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 0.01;
                TelemetryFrame {
                    t,
                    theta_true: f(t),
                    ..Default::default()
                }
            })
            .collect()
    }

    #[test]
    fn zero_trace_settles_immediately() {
        assert_eq!(settling_time(&trace_of(|_| 0.0, 200), 0.01, 0.5), Some(0.0));
    }

    #[test]
    fn never_in_band() {
        assert_eq!(settling_time(&trace_of(|_| 0.2, 200), 0.01, 0.5), None);
    }

    #[test]
    fn exponential_decay_crossing() {
        let trace = trace_of(|t| 0.1 * (-2.0 * t).exp(), 500);
        let t = settling_time(&trace, 0.01, 0.5).unwrap();
        let exact = 10f64.ln() / 2.0;
        assert!((t - exact).abs() <= 0.01, "{t} vs {exact}");
        assert!(t >= exact);
    }

    #[test]
    fn excursion_restarts_the_hold() {
        // In band on [0.2, 0.5), out at 0.5, back in for good from 0.6.
        let trace = trace_of(
            |t| if t < 0.2 || (0.5..0.6).contains(&t) { 0.05 } else { 0.0 },
            300,
        );
        let t = settling_time(&trace, 0.01, 0.5).unwrap();
        assert!((t - 0.6).abs() < 1e-9, "{t}");
    }

    #[test]
    fn short_tail_counts() {
        let trace = trace_of(|t| if t < 1.9 { 0.05 } else { 0.0 }, 200);
        let t = settling_time(&trace, 0.01, 0.5).unwrap();
        assert!((t - 1.9).abs() < 1e-9);
    }

    #[test]
    fn fell_is_never_settled() {
        let mut trace = trace_of(|_| 0.0, 100);
        trace[50].status = Status::Fallen;
        let m = compute_metrics(&trace, SettleSpec::default());
        assert!(m.fell);
        assert!(!m.settled);
        assert!(m.settling_time.is_some());
    }

    #[test]
    fn rms_after_settling() {
        let trace = trace_of(|t| if t < 1.0 { 0.3 } else { 0.004 }, 300);
        let m = compute_metrics(&trace, SettleSpec::default());
        assert!(m.settled);
        assert!((m.rms_theta - 0.004).abs() < 1e-12);
        assert!((m.max_abs_theta - 0.3).abs() < 1e-12);
    }

    #[test]
    fn itae_of_constant_tilt() {
        // ∫₀² t·0.1 dt = 0.2; the right-endpoint sum at 10 ms gives 0.201.
        let trace = trace_of(|_| 0.1, 201);
        let m = compute_metrics(&trace, SettleSpec::default());
        assert!((m.itae - 0.201).abs() < 1e-9, "{}", m.itae);
    }
}
