//! Teleoperation link: command grammar, injected latency and the network
//! server that steers a running simulation.

mod link;
mod protocol;
mod server;

pub use link::{delay_ticks, ClientLink, CommandQueue, LatencyModel, LinkConfig, ScheduledCommand};
pub use protocol::{
    encode_telemetry, parse_frame, parse_telemetry, Command, ProtocolError, TelemetryLine,
    DEFAULT_MAX_FRAME_BYTES, TELEMETRY_DIGITS,
};
pub use server::{ServeOptions, ServeSummary, Server};
