//! Newline-delimited ASCII command and telemetry grammar.
//!
//! Inbound (client to robot):
//!
//! ```text
//! F | B | L | R | S | X
//! G <kp> <ki> <kd>      outer-loop gains, each finite and >= 0
//! A <alpha>             filter blend, in [0, 1]
//! T <hz>                telemetry rate for this session, in [1, 100]
//! ```
//!
//! Outbound: `TM <t> <theta_true> <theta_est> <x> <v> <duty_left> <duty_right> <status>`
//! with six significant digits, or `ERR <code>` when a frame is rejected.

use std::fmt;

use crate::control::Status;
use crate::numfmt::format_sig;
use crate::sim::TelemetryFrame;

pub const DEFAULT_MAX_FRAME_BYTES: usize = 64;
pub const TELEMETRY_DIGITS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Forward,
    Backward,
    Left,
    Right,
    Stop,
    SetGains { kp: f64, ki: f64, kd: f64 },
    SetAlpha(f64),
    TelemetryRate(f64),
    Reset,
}

impl Command {
    pub fn is_steering(&self) -> bool {
        matches!(
            self,
            Command::Forward | Command::Backward | Command::Left | Command::Right | Command::Stop
        )
    }

    /// Wire form without the trailing newline.
    pub fn encode(&self) -> String {
        match self {
            Command::Forward => "F".into(),
            Command::Backward => "B".into(),
            Command::Left => "L".into(),
            Command::Right => "R".into(),
            Command::Stop => "S".into(),
            Command::Reset => "X".into(),
            Command::SetGains { kp, ki, kd } => format!("G {kp} {ki} {kd}"),
            Command::SetAlpha(a) => format!("A {a}"),
            Command::TelemetryRate(hz) => format!("T {hz}"),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("unknown command")]
    UnknownCommand,
    #[error("malformed argument")]
    MalformedArgument,
    #[error("frame too long")]
    FrameTooLong,
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::UnknownCommand => "UnknownCommand",
            ProtocolError::MalformedArgument => "MalformedArgument",
            ProtocolError::FrameTooLong => "FrameTooLong",
        }
    }

    /// `ERR <code>\n`
    pub fn reply(&self) -> String {
        format!("ERR {}\n", self.code())
    }
}

/// Parses one inbound line. `line` may or may not include its newline; its
/// full length, newline included, counts against `max_frame_bytes`.
pub fn parse_frame(line: &[u8], max_frame_bytes: usize) -> Result<Command, ProtocolError> {
    if line.len() > max_frame_bytes {
        return Err(ProtocolError::FrameTooLong);
    }
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let mut tokens = line
        .split(|b| b.is_ascii_whitespace())
        .filter(|t| !t.is_empty());

    let opcode = tokens.next().ok_or(ProtocolError::UnknownCommand)?;
    let mut args = || -> Result<Vec<f64>, ProtocolError> { tokens.by_ref().map(parse_number).collect() };

    let command = match opcode {
        b"F" => nullary(args()?, Command::Forward)?,
        b"B" => nullary(args()?, Command::Backward)?,
        b"L" => nullary(args()?, Command::Left)?,
        b"R" => nullary(args()?, Command::Right)?,
        b"S" => nullary(args()?, Command::Stop)?,
        b"X" => nullary(args()?, Command::Reset)?,
        b"G" => match args()?.as_slice() {
            &[kp, ki, kd] if [kp, ki, kd].iter().all(|g| *g >= 0.0) => Command::SetGains { kp, ki, kd },
            _ => return Err(ProtocolError::MalformedArgument),
        },
        b"A" => match args()?.as_slice() {
            &[a] if (0.0..=1.0).contains(&a) => Command::SetAlpha(a),
            _ => return Err(ProtocolError::MalformedArgument),
        },
        b"T" => match args()?.as_slice() {
            &[hz] if (1.0..=100.0).contains(&hz) => Command::TelemetryRate(hz),
            _ => return Err(ProtocolError::MalformedArgument),
        },
        _ => return Err(ProtocolError::UnknownCommand),
    };
    Ok(command)
}

fn nullary(args: Vec<f64>, cmd: Command) -> Result<Command, ProtocolError> {
    if args.is_empty() {
        Ok(cmd)
    } else {
        Err(ProtocolError::MalformedArgument)
    }
}

fn parse_number(token: &[u8]) -> Result<f64, ProtocolError> {
    let is_decimal = token
        .iter()
        .all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'));
    if !is_decimal {
        return Err(ProtocolError::MalformedArgument);
    }
    // Only ASCII survived the check above.
    let text = std::str::from_utf8(token).map_err(|_| ProtocolError::MalformedArgument)?;
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ProtocolError::MalformedArgument),
    }
}

/// `TM ...\n` line for one frame.
pub fn encode_telemetry(frame: &TelemetryFrame) -> String {
    let f = |v: f64| format_sig(v, TELEMETRY_DIGITS);
    format!(
        "TM {} {} {} {} {} {} {} {}\n",
        f(frame.t),
        f(frame.theta_true),
        f(frame.theta_est),
        f(frame.x),
        f(frame.v),
        f(frame.duty_left),
        f(frame.duty_right),
        frame.status.as_str()
    )
}

/// The fields a `TM` line carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryLine {
    pub t: f64,
    pub theta_true: f64,
    pub theta_est: f64,
    pub x: f64,
    pub v: f64,
    pub duty_left: f64,
    pub duty_right: f64,
    pub status: Status,
}

impl From<&TelemetryFrame> for TelemetryLine {
    fn from(f: &TelemetryFrame) -> Self {
        TelemetryLine {
            t: f.t,
            theta_true: f.theta_true,
            theta_est: f.theta_est,
            x: f.x,
            v: f.v,
            duty_left: f.duty_left,
            duty_right: f.duty_right,
            status: f.status,
        }
    }
}

/// Parses a `TM` line, returning `None` for anything else.
pub fn parse_telemetry(line: &str) -> Option<TelemetryLine> {
    let mut it = line.trim_end().split(' ');
    if it.next()? != "TM" {
        return None;
    }
    let mut num = || -> Option<f64> { it.next()?.parse().ok() };
    let (t, theta_true, theta_est, x, v, duty_left, duty_right) =
        (num()?, num()?, num()?, num()?, num()?, num()?, num()?);
    let status = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some(TelemetryLine {
        t,
        theta_true,
        theta_est,
        x,
        v,
        duty_left,
        duty_right,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Command, ProtocolError> {
        parse_frame(s.as_bytes(), DEFAULT_MAX_FRAME_BYTES)
    }

    #[test]
    fn grammar_examples() {
        assert_eq!(parse("F\n"), Ok(Command::Forward));
        assert_eq!(parse("B\n"), Ok(Command::Backward));
        assert_eq!(parse("L\n"), Ok(Command::Left));
        assert_eq!(parse("R\n"), Ok(Command::Right));
        assert_eq!(parse("S\n"), Ok(Command::Stop));
        assert_eq!(parse("X\n"), Ok(Command::Reset));
        assert_eq!(
            parse("G 18 60 0.9\n"),
            Ok(Command::SetGains {
                kp: 18.0,
                ki: 60.0,
                kd: 0.9
            })
        );
        assert_eq!(parse("A 0.95\n"), Ok(Command::SetAlpha(0.95)));
        assert_eq!(parse("T 20\n"), Ok(Command::TelemetryRate(20.0)));
        assert_eq!(parse("S  \t \n"), Ok(Command::Stop));
        assert_eq!(parse("F"), Ok(Command::Forward));
    }

    #[test]
    fn error_codes() {
        use ProtocolError::*;
        assert_eq!(parse("Q\n"), Err(UnknownCommand));
        assert_eq!(parse("\n"), Err(UnknownCommand));
        assert_eq!(parse("f\n"), Err(UnknownCommand));
        assert_eq!(parse("FF\n"), Err(UnknownCommand));
        assert_eq!(parse("F 1\n"), Err(MalformedArgument));
        assert_eq!(parse("G 1 2\n"), Err(MalformedArgument));
        assert_eq!(parse("G 1 2 3 4\n"), Err(MalformedArgument));
        assert_eq!(parse("G 1 -2 3\n"), Err(MalformedArgument));
        assert_eq!(parse("G 1 x 3\n"), Err(MalformedArgument));
        assert_eq!(parse("G 1 inf 3\n"), Err(MalformedArgument));
        assert_eq!(parse("G 1 NaN 3\n"), Err(MalformedArgument));
        assert_eq!(parse("A 1.5\n"), Err(MalformedArgument));
        assert_eq!(parse("A\n"), Err(MalformedArgument));
        assert_eq!(parse("T 0.5\n"), Err(MalformedArgument));
        assert_eq!(parse("T 101\n"), Err(MalformedArgument));
        assert_eq!(parse("A 1e400\n"), Err(MalformedArgument));
        let long = format!("G {} 1 1\n", "1".repeat(70));
        assert_eq!(parse(&long), Err(FrameTooLong));
        assert_eq!(FrameTooLong.reply(), "ERR FrameTooLong\n");
    }

    #[test]
    fn frame_limit_counts_newline() {
        let exact = format!("A 0.{}\n", "5".repeat(59));
        assert_eq!(exact.len(), 64);
        assert!(parse(&exact).is_ok());
        let over = format!("A 0.{}\n", "5".repeat(60));
        assert_eq!(parse(&over), Err(ProtocolError::FrameTooLong));
    }

    #[test]
    fn command_encoding_parses_back() {
        let cmds = [
            Command::Forward,
            Command::Backward,
            Command::Left,
            Command::Right,
            Command::Stop,
            Command::Reset,
            Command::SetGains {
                kp: 20.0,
                ki: 60.5,
                kd: 0.25,
            },
            Command::SetAlpha(0.98),
            Command::TelemetryRate(25.0),
        ];
        for c in cmds {
            assert_eq!(parse(&format!("{c}\n")), Ok(c));
        }
    }

    #[test]
    fn zero_frame_encoding() {
        let frame = TelemetryFrame::default();
        assert_eq!(encode_telemetry(&frame), "TM 0 0 0 0 0 0 0 Balancing\n");
        let fallen = TelemetryFrame {
            status: Status::Fallen,
            ..frame
        };
        assert!(encode_telemetry(&fallen).ends_with(" Fallen\n"));
    }

    fn close6(a: f64, b: f64) -> bool {
        (a - b).abs() <= 5e-6 * a.abs().max(1e-300)
    }

    proptest! {
        #[test]
        fn telemetry_round_trip(t in 0.0..1e4f64, a in -3.0..3.0f64, b in -3.0..3.0f64,
                                x in -100.0..100.0f64, v in -5.0..5.0f64, dl in -1.0..1.0f64,
                                dr in -1.0..1.0f64, fallen in any::<bool>()) {
            let frame = TelemetryFrame {
                t, theta_true: a, theta_est: b, x, v, wheel_speed_avg: 0.0,
                duty_left: dl, duty_right: dr,
                status: if fallen { Status::Fallen } else { Status::Balancing },
            };
            let line = encode_telemetry(&frame);
            let back = parse_telemetry(&line).unwrap();
            let orig = TelemetryLine::from(&frame);
            prop_assert!(close6(orig.t, back.t));
            prop_assert!(close6(orig.theta_true, back.theta_true));
            prop_assert!(close6(orig.theta_est, back.theta_est));
            prop_assert!(close6(orig.x, back.x));
            prop_assert!(close6(orig.v, back.v));
            prop_assert!(close6(orig.duty_left, back.duty_left));
            prop_assert!(close6(orig.duty_right, back.duty_right));
            prop_assert_eq!(orig.status, back.status);
        }

        #[test]
        fn parser_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..100)) {
            match parse_frame(&bytes, DEFAULT_MAX_FRAME_BYTES) {
                Ok(_) | Err(ProtocolError::UnknownCommand)
                | Err(ProtocolError::MalformedArgument) | Err(ProtocolError::FrameTooLong) => {}
            }
        }
    }
}
