//! Command-line front end: `run`, `tune` and `serve`.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::sim::{run, write_trace_file, RunMetrics, ScenarioConfig};
use crate::teleop::{LinkConfig, ServeOptions, ServeSummary, Server, DEFAULT_MAX_FRAME_BYTES};
use crate::tune::{tune, GainAxis, Objective, Search, TuneResult, TuneSpec, TuneTarget};

#[derive(Debug, Parser)]
#[command(name = "balancebot", version, about = "Two-wheeled self-balancing robot simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run a scenario to completion, print metrics and optionally save the trace.
    Run(RunArgs),
    /// Search for controller gains.
    Tune(TuneArgs),
    /// Serve a live simulation to steering clients over TCP (and WebSocket).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario config file.
    pub config: PathBuf,
    /// Write the trace CSV here.
    #[arg(short, long)]
    pub trace: Option<PathBuf>,
    /// Override a config key, e.g. `--set control.outer.kp=0`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub config: PathBuf,
    /// outer, inner or both.
    #[arg(long, default_value = "outer")]
    pub target: TuneTarget,
    /// grid or descent.
    #[arg(long, default_value = "grid")]
    pub search: Search,
    /// settling or itae.
    #[arg(long, default_value = "settling")]
    pub objective: Objective,
    /// Tilt-loop axes as lo:hi[:points].
    #[arg(long)]
    pub kp: Option<GainAxis>,
    #[arg(long)]
    pub ki: Option<GainAxis>,
    #[arg(long)]
    pub kd: Option<GainAxis>,
    /// Wheel-speed-loop axes as lo:hi[:points].
    #[arg(long)]
    pub inner_kp: Option<GainAxis>,
    #[arg(long)]
    pub inner_ki: Option<GainAxis>,
    #[arg(long)]
    pub inner_kd: Option<GainAxis>,
    /// Score given to a run that falls.
    #[arg(long)]
    pub fall_penalty: Option<f64>,
    #[arg(long)]
    pub max_passes: Option<usize>,
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub config: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub listen: String,
    /// Also accept WebSocket clients here.
    #[arg(long)]
    pub ws_listen: Option<String>,
    #[arg(long, default_value_t = 50.0)]
    pub latency_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    pub jitter_ms: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop after this many simulated seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_FRAME_BYTES)]
    pub max_frame_bytes: usize,
    /// Run as fast as possible instead of in real time.
    #[arg(long)]
    pub no_pace: bool,
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn load(config: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    ScenarioConfig::from_file(config)?.with_overrides(overrides)
}

/// Runs a scenario and prints its metrics. Nothing is written unless the
/// config loads and the run completes.
pub fn cmd_run(config: &Path, trace_out: Option<&Path>, overrides: &[String], out: &mut dyn Write) -> Result<RunMetrics> {
    let scenario = load(config, overrides)?;
    let (trace, metrics) = run(&scenario, None)?;
    if let Some(path) = trace_out {
        write_trace_file(&trace, path)?;
    }
    write!(out, "{metrics}")?;
    Ok(metrics)
}

pub fn cmd_tune(config: &Path, spec: &TuneSpec, overrides: &[String], out: &mut dyn Write) -> Result<TuneResult> {
    let base = load(config, overrides)?;
    let result = tune(&base, spec)?;
    if result.all_fell {
        writeln!(out, "# every candidate fell")?;
    }
    write!(out, "{result}")?;
    Ok(result)
}

/// Binds, announces the endpoints on `out`, hands the shutdown flag to
/// `on_ready`, then serves until shutdown or the requested duration.
pub fn cmd_serve(
    config: &Path,
    opts: ServeOptions,
    overrides: &[String],
    out: &mut dyn Write,
    on_ready: impl FnOnce(Arc<AtomicBool>),
) -> Result<ServeSummary> {
    let scenario = load(config, overrides)?;
    let server = Server::bind(opts)?;
    writeln!(out, "listening={}", server.local_addr()?)?;
    if let Some(ws) = server.ws_addr() {
        writeln!(out, "ws_listening={ws}")?;
    }
    out.flush()?;
    on_ready(server.shutdown_handle());
    let summary = server.run(scenario)?;
    write!(out, "{}", summary.metrics)?;
    writeln!(out, "ticks={}", summary.ticks)?;
    writeln!(out, "dropped_commands={}", summary.dropped_commands)?;
    out.flush()?;
    Ok(summary)
}

impl TuneArgs {
    pub fn spec(&self) -> TuneSpec {
        let d = TuneSpec::default();
        let pick = |a: Option<GainAxis>, b: GainAxis| a.unwrap_or(b);
        TuneSpec {
            target: self.target,
            search: self.search,
            objective: self.objective,
            outer: [pick(self.kp, d.outer[0]), pick(self.ki, d.outer[1]), pick(self.kd, d.outer[2])],
            inner: [
                pick(self.inner_kp, d.inner[0]),
                pick(self.inner_ki, d.inner[1]),
                pick(self.inner_kd, d.inner[2]),
            ],
            fall_penalty: self.fall_penalty.unwrap_or(d.fall_penalty),
            max_passes: self.max_passes.unwrap_or(d.max_passes),
        }
    }
}

impl ServeArgs {
    pub fn options(&self) -> ServeOptions {
        ServeOptions {
            listen: self.listen.clone(),
            ws_listen: self.ws_listen.clone(),
            link: LinkConfig {
                latency_mean: self.latency_ms / 1000.0,
                latency_jitter_std: self.jitter_ms / 1000.0,
                max_frame_bytes: self.max_frame_bytes,
            },
            seed: self.seed,
            pace: !self.no_pace,
            duration: self.duration,
            ..Default::default()
        }
    }
}

/// Parses the process arguments and runs the chosen subcommand. Returns
/// the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let outcome = match &cli.command {
        Cmd::Run(a) => cmd_run(&a.config, a.trace.as_deref(), &a.overrides, &mut out).map(drop),
        Cmd::Tune(a) => cmd_tune(&a.config, &a.spec(), &a.overrides, &mut out).map(drop),
        Cmd::Serve(a) => cmd_serve(&a.config, a.options(), &a.overrides, &mut out, |flag| {
            let installed = ctrlc::set_handler(move || flag.store(true, std::sync::atomic::Ordering::Relaxed));
            if let Err(e) = installed {
                log::warn!("no interrupt handler: {e}");
            }
        })
        .map(drop),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
