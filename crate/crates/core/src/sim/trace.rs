//! CSV trace files.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numfmt::format_sig;
use crate::sim::TelemetryFrame;

pub const TRACE_HEADER: &str = "t,theta_true,theta_est,x,v,wheel_speed_avg,duty_left,duty_right,status";
const TRACE_DIGITS: usize = 9;

pub fn write_trace<W: Write>(trace: &[TelemetryFrame], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    let g = |v: f64| format_sig(v, TRACE_DIGITS);
    for f in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            g(f.t),
            g(f.theta_true),
            g(f.theta_est),
            g(f.x),
            g(f.v),
            g(f.wheel_speed_avg),
            g(f.duty_left),
            g(f.duty_right),
            f.status.as_str()
        )?;
    }
    out.flush()
}

pub fn write_trace_file(trace: &[TelemetryFrame], path: impl AsRef<Path>) -> io::Result<()> {
    write_trace(trace, BufWriter::new(File::create(path)?))
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TelemetryFrame>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != TRACE_HEADER {
        return Err(Error::domain("missing trace header"));
    }
    let mut frames = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let bad = || Error::domain(format!("trace row {}: `{line}`", idx + 1));
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 9 {
            return Err(bad());
        }
        let mut nums = [0.0; 8];
        for (n, text) in nums.iter_mut().zip(&fields) {
            *n = text.parse().map_err(|_| bad())?;
        }
        frames.push(TelemetryFrame {
            t: nums[0],
            theta_true: nums[1],
            theta_est: nums[2],
            x: nums[3],
            v: nums[4],
            wheel_speed_avg: nums[5],
            duty_left: nums[6],
            duty_right: nums[7],
            status: fields[8].parse().map_err(|_| bad())?,
        });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Status;

    fn to_string(trace: &[TelemetryFrame]) -> String {
        let mut buf = Vec::new();
        write_trace(trace, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(to_string(&[]), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn one_frame_two_lines() {
        let text = to_string(&[TelemetryFrame {
            t: 0.01,
            theta_true: 0.0871234567891,
            status: Status::Fallen,
            ..Default::default()
        }]);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "0.01,0.0871234568,0,0,0,0,0,0,Fallen");
    }

    #[test]
    fn parse_back_to_nine_digits() {
        let frames: Vec<_> = (0..200)
            .map(|k| {
                let t = k as f64 * 0.01;
                TelemetryFrame {
                    t,
                    theta_true: 0.087 * (-3.0 * t).exp() * (7.0 * t).cos(),
                    theta_est: 0.08 * (1.1 * t).sin(),
                    x: -1.234567890123 * t,
                    v: 3.0e-7 * t,
                    wheel_speed_avg: 45.6789 * t,
                    duty_left: -0.333333333333,
                    duty_right: 0.999999999999,
                    status: if k % 7 == 0 { Status::Fallen } else { Status::Balancing },
                }
            })
            .collect();
        let back = read_trace(to_string(&frames).as_bytes()).unwrap();
        assert_eq!(back.len(), frames.len());
        let close = |a: f64, b: f64| (a - b).abs() <= 5e-9 * a.abs();
        for (a, b) in frames.iter().zip(&back) {
            for (x, y) in [
                (a.t, b.t),
                (a.theta_true, b.theta_true),
                (a.theta_est, b.theta_est),
                (a.x, b.x),
                (a.v, b.v),
                (a.wheel_speed_avg, b.wheel_speed_avg),
                (a.duty_left, b.duty_left),
                (a.duty_right, b.duty_right),
            ] {
                assert!(close(x, y), "{x} vs {y}");
            }
            assert_eq!(a.status, b.status);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_trace("nope\n".as_bytes()).is_err());
        let text = format!("{TRACE_HEADER}\n1,2,3\n");
        assert!(read_trace(text.as_bytes()).is_err());
    }
}
