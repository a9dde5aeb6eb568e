//! Runs the shipped scenario and prints its metrics.
//!
//! ```text
//! cargo run --release --example balance_run [trace.csv] [key=value ...]
//! ```

use balancebot::sim::{run, write_trace_file, ScenarioConfig};

fn main() -> balancebot::Result<()> {
    let mut args = std::env::args().skip(1);
    let trace_path = args.next().filter(|a| !a.contains('='));
    let overrides: Vec<String> = args.collect();

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/default.cfg");
    let cfg = ScenarioConfig::from_file(path)?.with_overrides(&overrides)?;
    let (trace, metrics) = run(&cfg, None)?;

    println!("{:>6} {:>9} {:>9} {:>8}", "t", "theta", "est", "x");
    for f in trace.iter().step_by(25).take(16) {
        println!("{:6.2} {:9.5} {:9.5} {:8.4}", f.t, f.theta_true, f.theta_est, f.x);
    }
    print!("{metrics}");

    if let Some(p) = trace_path {
        write_trace_file(&trace, &p)?;
        println!("trace written to {p}");
    }
    Ok(())
}
