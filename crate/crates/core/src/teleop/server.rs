//! Network front end for a live simulation.
//!
//! One thread runs the simulation, paced to the wall clock. Each client
//! session gets its own reader and writer; sessions talk to the loop only
//! through the [`CommandQueue`] and a per-session telemetry channel, so a
//! stuck client can never stall the robot.

use std::collections::VecDeque;
use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use crate::error::{Error, Result};
use crate::sim::{AppliedCommand, RunMetrics, ScenarioConfig, Simulation, TelemetryFrame};
use crate::teleop::link::{delay_ticks, ClientLink, CommandQueue, LatencyModel, LinkConfig};
use crate::teleop::protocol::{encode_telemetry, parse_frame, Command, ProtocolError};

const POLL: Duration = Duration::from_millis(10);
const SUBSCRIBER_BUFFER: usize = 256;
const TELEMETRY_SEED_SALT: u64 = 0x5445_4c45_4d45_5452;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Address for newline-framed TCP sessions, e.g. `127.0.0.1:7878`.
    pub listen: String,
    /// Optional WebSocket endpoint for browser clients.
    pub ws_listen: Option<String>,
    pub link: LinkConfig,
    pub seed: u64,
    /// Sleep so that one simulated second takes one wall-clock second.
    pub pace: bool,
    /// Stop after this much simulated time; `None` runs until shutdown.
    pub duration: Option<f64>,
    pub queue_capacity: usize,
    /// Telemetry rate for a session that has not sent `T`.
    pub telemetry_hz: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            listen: "127.0.0.1:7878".into(),
            ws_listen: None,
            link: LinkConfig::default(),
            seed: 0,
            pace: true,
            duration: None,
            queue_capacity: 256,
            telemetry_hz: 10.0,
        }
    }
}

/// What a finished serve run reports.
#[derive(Debug, Clone)]
pub struct ServeSummary {
    pub metrics: RunMetrics,
    pub ticks: u64,
    pub dropped_commands: u64,
    pub sessions: u64,
    pub applied: Vec<AppliedCommand>,
}

struct Shared {
    queue: CommandQueue,
    shutdown: Arc<AtomicBool>,
    subscribers: Mutex<Vec<SyncSender<TelemetryFrame>>>,
    next_client: AtomicU64,
    link: LinkConfig,
    seed: u64,
    control_period: AtomicU64,
    telemetry_hz: f64,
    sessions: Mutex<Vec<JoinHandle<()>>>,
}

impl Shared {
    fn period(&self) -> f64 {
        f64::from_bits(self.control_period.load(Ordering::Relaxed))
    }

    fn stopping(&self) -> bool {
        self.shutdown.load(Ordering::Relaxed)
    }

    fn subscribe(&self) -> Receiver<TelemetryFrame> {
        let (tx, rx) = mpsc::sync_channel(SUBSCRIBER_BUFFER);
        lock(&self.subscribers).push(tx);
        rx
    }

    /// Fans a frame out. Full channels lose the frame, closed ones are
    /// forgotten.
    fn publish(&self, frame: &TelemetryFrame) {
        lock(&self.subscribers).retain(|tx| !matches!(tx.try_send(*frame), Err(TrySendError::Disconnected(_))));
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// A bound but not yet running teleop server.
pub struct Server {
    opts: ServeOptions,
    tcp: TcpListener,
    ws: Option<TcpListener>,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(opts: ServeOptions) -> Result<Server> {
        opts.link.validate()?;
        if !(opts.telemetry_hz.is_finite() && (1.0..=100.0).contains(&opts.telemetry_hz)) {
            return Err(Error::param("telemetry_hz", "must lie in [1, 100]"));
        }
        let tcp = TcpListener::bind(&opts.listen)?;
        tcp.set_nonblocking(true)?;
        let ws = match &opts.ws_listen {
            Some(addr) => {
                let l = TcpListener::bind(addr)?;
                l.set_nonblocking(true)?;
                Some(l)
            }
            None => None,
        };
        let shared = Arc::new(Shared {
            queue: CommandQueue::new(opts.queue_capacity),
            shutdown: Arc::new(AtomicBool::new(false)),
            subscribers: Mutex::new(Vec::new()),
            next_client: AtomicU64::new(1),
            link: opts.link,
            seed: opts.seed,
            control_period: AtomicU64::new(0.01f64.to_bits()),
            telemetry_hz: opts.telemetry_hz,
            sessions: Mutex::new(Vec::new()),
        });
        Ok(Server { opts, tcp, ws, shared })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.tcp.local_addr()
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws.as_ref().and_then(|l| l.local_addr().ok())
    }

    /// Setting the flag stops the loop at the end of its current tick.
    pub fn shutdown_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.shared.shutdown)
    }

    /// Runs the simulation until shutdown or the configured duration.
    pub fn run(self, mut scenario: ScenarioConfig) -> Result<ServeSummary> {
        scenario.duration = self.opts.duration.unwrap_or(1.0e9);
        scenario.command_script.clear();
        let mut sim = Simulation::new(scenario)?;
        let period = sim.config().control_period;
        self.shared.control_period.store(period.to_bits(), Ordering::Relaxed);

        let Server { opts, tcp, ws, shared } = self;
        let mut acceptors = vec![spawn_acceptor(tcp, Arc::clone(&shared), Transport::Tcp)];
        if let Some(ws) = ws {
            acceptors.push(spawn_acceptor(ws, Arc::clone(&shared), Transport::WebSocket));
        }

        let result = sim_loop(&mut sim, &shared, opts.pace);
        shared.shutdown.store(true, Ordering::Relaxed);
        for a in acceptors {
            let _ = a.join();
        }
        let sessions: Vec<_> = lock(&shared.sessions).drain(..).collect();
        for s in sessions {
            let _ = s.join();
        }
        result?;

        Ok(ServeSummary {
            metrics: sim.metrics(),
            ticks: sim.tick_index(),
            dropped_commands: shared.queue.dropped(),
            sessions: shared.next_client.load(Ordering::Relaxed) - 1,
            applied: sim.applied_commands().to_vec(),
        })
    }
}

fn sim_loop(sim: &mut Simulation, shared: &Shared, pace: bool) -> Result<()> {
    let period = sim.config().control_period;
    let start = Instant::now();
    while !sim.is_finished() && !shared.stopping() {
        for cmd in shared.queue.drain_for_tick(sim.tick_index()) {
            sim.schedule(cmd);
        }
        let frame = sim.step_tick()?;
        shared.publish(&frame);
        if pace {
            let target = start + Duration::from_secs_f64(sim.tick_index() as f64 * period);
            if let Some(wait) = target.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Transport {
    Tcp,
    WebSocket,
}

fn spawn_acceptor(listener: TcpListener, shared: Arc<Shared>, transport: Transport) -> JoinHandle<()> {
    thread::spawn(move || {
        while !shared.stopping() {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let id = shared.next_client.fetch_add(1, Ordering::Relaxed);
                    log::info!("client {id} connected from {peer} ({transport:?})");
                    let s = Arc::clone(&shared);
                    let handle = thread::spawn(move || {
                        let outcome = match transport {
                            Transport::Tcp => tcp_session(stream, id, &s),
                            Transport::WebSocket => ws_session(stream, id, &s),
                        };
                        match outcome {
                            Ok(()) => log::info!("client {id} disconnected"),
                            Err(e) => log::info!("client {id} dropped: {e}"),
                        }
                    });
                    lock(&shared.sessions).push(handle);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    thread::sleep(POLL);
                }
            }
        }
    })
}

/// Command half of a session.
struct Inbound<'a> {
    id: u64,
    shared: &'a Shared,
    link: ClientLink,
    every: Arc<AtomicU64>,
}

/// Telemetry half of a session.
struct Outbound<'a> {
    shared: &'a Shared,
    frames: Receiver<TelemetryFrame>,
    delay: TelemetryDelay,
    every: Arc<AtomicU64>,
    next_tick: u64,
}

fn session(id: u64, shared: &Shared) -> (Inbound<'_>, Outbound<'_>) {
    let period = shared.period();
    let every = Arc::new(AtomicU64::new(rate_to_ticks(shared.telemetry_hz, period)));
    let latency = LatencyModel::new(shared.link, shared.seed ^ TELEMETRY_SEED_SALT ^ id);
    let inbound = Inbound {
        id,
        shared,
        link: ClientLink::new(id, shared.link, shared.seed, period),
        every: Arc::clone(&every),
    };
    let outbound = Outbound {
        shared,
        frames: shared.subscribe(),
        delay: TelemetryDelay::new(latency, period),
        every,
        next_tick: 0,
    };
    (inbound, outbound)
}

fn rate_to_ticks(hz: f64, period: f64) -> u64 {
    ((1.0 / hz) / period).round().max(1.0) as u64
}

impl Inbound<'_> {
    /// Handles one inbound frame; returns the error reply, if any.
    fn handle(&mut self, line: &[u8]) -> Option<String> {
        match parse_frame(line, self.shared.link.max_frame_bytes) {
            Ok(Command::TelemetryRate(hz)) => {
                self.every.store(rate_to_ticks(hz, self.shared.period()), Ordering::Relaxed);
                None
            }
            Ok(command) => {
                let link = &mut self.link;
                let s = self.shared.queue.submit(|tick, seq| link.schedule(command, tick, seq));
                log::debug!("client {} {command}: receipt {} due {}", self.id, s.receipt_tick, s.due_tick);
                None
            }
            Err(e) => Some(e.reply()),
        }
    }
}

impl Outbound<'_> {
    /// Pulls new frames off the broadcast, decimates them to the session
    /// rate and returns the `TM` lines whose link delay has elapsed.
    fn ready(&mut self, wait: Duration) -> String {
        let period = self.shared.period();
        let first = self.frames.recv_timeout(wait).ok();
        let every = self.every.load(Ordering::Relaxed);
        for frame in first.into_iter().chain(self.frames.try_iter()) {
            let tick = (frame.t / period).round() as u64;
            if tick >= self.next_tick {
                self.next_tick = tick + every;
                self.delay.push(tick, frame);
            }
        }
        self.delay
            .release(self.shared.queue.current_tick())
            .map(|f| encode_telemetry(&f))
            .collect()
    }
}

/// Holds telemetry back by the link latency, keeping send order.
struct TelemetryDelay {
    latency: LatencyModel,
    period: f64,
    last_release: u64,
    held: VecDeque<(u64, TelemetryFrame)>,
}

impl TelemetryDelay {
    fn new(latency: LatencyModel, period: f64) -> Self {
        TelemetryDelay {
            latency,
            period,
            last_release: 0,
            held: VecDeque::new(),
        }
    }

    fn push(&mut self, tick: u64, frame: TelemetryFrame) {
        let release = (tick + delay_ticks(self.latency.sample(), self.period)).max(self.last_release);
        self.last_release = release;
        self.held.push_back((release, frame));
    }

    fn release(&mut self, now: u64) -> impl Iterator<Item = TelemetryFrame> + '_ {
        let n = self.held.iter().take_while(|(r, _)| *r <= now).count();
        self.held.drain(..n).map(|(_, f)| f)
    }
}

/// Reads one `\n`-terminated frame without buffering more than `max + 1`
/// bytes of it. Partial input survives read timeouts in `acc`.
fn read_frame<R: BufRead>(reader: &mut R, acc: &mut Vec<u8>, overflow: &mut bool, max: usize) -> io::Result<Option<Vec<u8>>> {
    loop {
        let buf = match reader.fill_buf() {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        if buf.is_empty() {
            return Err(ErrorKind::UnexpectedEof.into());
        }
        let (chunk, done) = match buf.iter().position(|&b| b == b'\n') {
            Some(i) => (&buf[..=i], true),
            None => (buf, false),
        };
        let room = (max + 1).saturating_sub(acc.len());
        acc.extend_from_slice(&chunk[..chunk.len().min(room)]);
        *overflow |= chunk.len() > room;
        let used = chunk.len();
        reader.consume(used);
        if done {
            let mut line = std::mem::take(acc);
            if std::mem::take(overflow) && line.len() <= max {
                // Pad so the parser sees the true, oversize length.
                line.resize(max + 1, b' ');
            }
            return Ok(Some(line));
        }
    }
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

fn tcp_session(stream: TcpStream, id: u64, shared: &Shared) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(POLL * 5))?;
    let writer = Mutex::new(stream.try_clone()?);
    let alive = AtomicBool::new(true);
    let (mut inbound, mut outbound) = session(id, shared);

    thread::scope(|scope| {
        scope.spawn(|| {
            while alive.load(Ordering::Relaxed) && !shared.stopping() {
                let lines = outbound.ready(POLL);
                if !lines.is_empty() && lock(&writer).write_all(lines.as_bytes()).is_err() {
                    alive.store(false, Ordering::Relaxed);
                }
            }
        });

        let max = shared.link.max_frame_bytes;
        let mut reader = BufReader::new(stream);
        let mut acc = Vec::new();
        let mut overflow = false;
        let outcome = loop {
            if !alive.load(Ordering::Relaxed) || shared.stopping() {
                break Ok(());
            }
            match read_frame(&mut reader, &mut acc, &mut overflow, max) {
                Ok(Some(line)) => {
                    if let Some(reply) = inbound.handle(&line) {
                        if let Err(e) = lock(&writer).write_all(reply.as_bytes()) {
                            break Err(e);
                        }
                    }
                }
                Ok(None) => {}
                Err(e) if is_timeout(&e) => {}
                Err(e) if e.kind() == ErrorKind::UnexpectedEof => break Ok(()),
                Err(e) => break Err(e),
            }
        };
        alive.store(false, Ordering::Relaxed);
        outcome
    })
}

fn ws_session(stream: TcpStream, id: u64, shared: &Shared) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| io::Error::other(e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let (mut inbound, mut outbound) = session(id, shared);

    while !shared.stopping() {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let mut line = text.as_str().as_bytes().to_vec();
                if line.last() != Some(&b'\n') {
                    line.push(b'\n');
                }
                if let Some(reply) = inbound.handle(&line) {
                    send_text(&mut ws, reply)?;
                }
            }
            Ok(Message::Binary(_)) => send_text(&mut ws, ProtocolError::UnknownCommand.reply())?,
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed) | Err(tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(io::Error::other(e.to_string())),
        }
        for line in outbound.ready(Duration::ZERO).lines() {
            send_text(&mut ws, format!("{line}\n"))?;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

fn send_text<S: Read + Write>(ws: &mut WebSocket<S>, text: String) -> io::Result<()> {
    ws.send(Message::text(text)).map_err(|e| io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_capped_while_read() {
        let input = b"F\nG 1 2 3\nthis line is far too long for the cap\nS".to_vec();
        let mut r = BufReader::with_capacity(4, &input[..]);
        let mut acc = Vec::new();
        let mut over = false;
        let a = read_frame(&mut r, &mut acc, &mut over, 10).unwrap().unwrap();
        assert_eq!(a, b"F\n");
        let b = read_frame(&mut r, &mut acc, &mut over, 10).unwrap().unwrap();
        assert_eq!(b, b"G 1 2 3\n");
        let c = read_frame(&mut r, &mut acc, &mut over, 10).unwrap().unwrap();
        assert_eq!(c.len(), 11);
        assert_eq!(parse_frame(&c, 10), Err(ProtocolError::FrameTooLong));
        // The unterminated tail is an end of stream, not a frame.
        assert!(read_frame(&mut r, &mut acc, &mut over, 10).is_err());
    }

    #[test]
    fn telemetry_delay_keeps_order() {
        let cfg = LinkConfig {
            latency_mean: 0.05,
            latency_jitter_std: 0.03,
            ..Default::default()
        };
        let mut d = TelemetryDelay::new(LatencyModel::new(cfg, 3), 0.01);
        for k in 0..100 {
            d.push(k, TelemetryFrame { t: k as f64 * 0.01, ..Default::default() });
        }
        let out: Vec<_> = d.release(u64::MAX).map(|f| f.t).collect();
        assert_eq!(out.len(), 100);
        assert!(out.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fixed_telemetry_delay() {
        let mut d = TelemetryDelay::new(LatencyModel::new(LinkConfig::fixed(0.05), 0), 0.01);
        d.push(10, TelemetryFrame::default());
        assert_eq!(d.release(14).count(), 0);
        assert_eq!(d.release(15).count(), 1);
    }

    #[test]
    fn bind_failure_is_an_error() {
        let taken = TcpListener::bind("127.0.0.1:0").unwrap();
        let opts = ServeOptions {
            listen: taken.local_addr().unwrap().to_string(),
            ..Default::default()
        };
        assert!(matches!(Server::bind(opts), Err(Error::Io(_))));
    }
}
