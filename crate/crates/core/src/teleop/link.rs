//! Injected radio latency and the bounded command queue between client
//! sessions and the simulation loop.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::teleop::protocol::{Command, DEFAULT_MAX_FRAME_BYTES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// s
    pub latency_mean: f64,
    /// s
    pub latency_jitter_std: f64,
    pub max_frame_bytes: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            latency_mean: 0.05,
            latency_jitter_std: 0.01,
            max_frame_bytes: DEFAULT_MAX_FRAME_BYTES,
        }
    }
}

impl LinkConfig {
    /// Fixed delay, no jitter.
    pub fn fixed(latency: f64) -> Self {
        LinkConfig {
            latency_mean: latency,
            latency_jitter_std: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latency_mean.is_finite() && self.latency_mean >= 0.0) {
            return Err(Error::param("latency_mean", "must be finite and >= 0"));
        }
        if !(self.latency_jitter_std.is_finite() && self.latency_jitter_std >= 0.0) {
            return Err(Error::param("latency_jitter_std", "must be finite and >= 0"));
        }
        if self.max_frame_bytes < 2 {
            return Err(Error::param("max_frame_bytes", "must be >= 2"));
        }
        Ok(())
    }
}

/// Seeded delay generator. Samples are Gaussian around the mean, truncated
/// to ±3σ and at zero.
#[derive(Debug, Clone)]
pub struct LatencyModel {
    cfg: LinkConfig,
    rng: ChaCha8Rng,
}

impl LatencyModel {
    pub fn new(cfg: LinkConfig, seed: u64) -> Self {
        LatencyModel {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let z = z.clamp(-3.0, 3.0);
        (self.cfg.latency_mean + self.cfg.latency_jitter_std * z).max(0.0)
    }
}

/// A command waiting to be applied at control tick `due_tick`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledCommand {
    pub command: Command,
    pub client: u64,
    /// Index of the first tick that could still see the frame when it
    /// arrived.
    pub receipt_tick: u64,
    pub due_tick: u64,
    /// Global arrival order, breaks ties between clients.
    pub seq: u64,
}

/// Converts a delay into whole control ticks, rounding up.
pub fn delay_ticks(delay: f64, control_period: f64) -> u64 {
    let ticks = delay / control_period;
    (ticks - 1e-9).ceil().max(0.0) as u64
}

/// Per-client latency stage. Keeps that client's commands in send order
/// even when jitter would reorder them.
#[derive(Debug, Clone)]
pub struct ClientLink {
    pub id: u64,
    latency: LatencyModel,
    control_period: f64,
    last_due: u64,
}

impl ClientLink {
    pub fn new(id: u64, cfg: LinkConfig, seed: u64, control_period: f64) -> Self {
        ClientLink {
            id,
            latency: LatencyModel::new(cfg, seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            control_period,
            last_due: 0,
        }
    }

    pub fn schedule(&mut self, command: Command, receipt_tick: u64, seq: u64) -> ScheduledCommand {
        let delay = self.latency.sample();
        let due = (receipt_tick + delay_ticks(delay, self.control_period)).max(self.last_due);
        self.last_due = due;
        ScheduledCommand {
            command,
            client: self.id,
            receipt_tick,
            due_tick: due,
            seq,
        }
    }
}

/// Bounded FIFO written by sessions, drained by the simulation loop. When
/// full, the oldest entry is dropped and counted.
///
/// The queue also carries the loop's tick clock: the index of the next
/// tick whose commands have not been collected yet. Reading that clock and
/// enqueueing happen under one lock, as do draining and advancing it, so a
/// command received at tick `n` is always seen by the loop before tick `n`
/// runs.
#[derive(Debug)]
pub struct CommandQueue {
    inner: Mutex<QueueInner>,
    capacity: usize,
    dropped: AtomicU64,
}

#[derive(Debug)]
struct QueueInner {
    items: VecDeque<ScheduledCommand>,
    tick: u64,
    seq: u64,
}

impl CommandQueue {
    pub fn new(capacity: usize) -> Self {
        CommandQueue {
            inner: Mutex::new(QueueInner {
                items: VecDeque::with_capacity(capacity),
                tick: 0,
                seq: 0,
            }),
            capacity: capacity.max(1),
            dropped: AtomicU64::new(0),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, QueueInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Next tick whose commands are still open for receipt.
    pub fn current_tick(&self) -> u64 {
        self.lock().tick
    }

    /// Builds a command from the current receipt tick and a fresh arrival
    /// number, and enqueues it.
    pub fn submit<F>(&self, build: F) -> ScheduledCommand
    where
        F: FnOnce(u64, u64) -> ScheduledCommand,
    {
        let mut q = self.lock();
        let seq = q.seq;
        q.seq += 1;
        let cmd = build(q.tick, seq);
        self.enqueue(&mut q, cmd);
        cmd
    }

    pub fn push(&self, cmd: ScheduledCommand) {
        let mut q = self.lock();
        q.seq = q.seq.max(cmd.seq + 1);
        self.enqueue(&mut q, cmd);
    }

    fn enqueue(&self, q: &mut QueueInner, cmd: ScheduledCommand) {
        if q.items.len() >= self.capacity {
            q.items.pop_front();
            let n = self.dropped.fetch_add(1, Ordering::Relaxed) + 1;
            log::warn!("command queue full, dropped oldest ({n} dropped so far)");
        }
        q.items.push_back(cmd);
    }

    /// Takes everything queued so far without touching the clock.
    pub fn drain(&self) -> Vec<ScheduledCommand> {
        self.lock().items.drain(..).collect()
    }

    /// Collects the commands for tick `tick` and opens receipt for the
    /// following one.
    pub fn drain_for_tick(&self, tick: u64) -> Vec<ScheduledCommand> {
        let mut q = self.lock();
        q.tick = q.tick.max(tick + 1);
        q.items.drain(..).collect()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}
