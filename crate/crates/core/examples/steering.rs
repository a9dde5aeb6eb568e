//! Drives the scripted steering scenario: forward, left, right, stop, back.

use balancebot::sim::{ScenarioConfig, Simulation};

fn main() -> balancebot::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/steering.cfg");
    let mut sim = Simulation::new(ScenarioConfig::from_file(path)?)?;
    let mut seen = 0;
    while !sim.is_finished() {
        let f = sim.step_tick()?;
        for a in &sim.applied_commands()[seen..] {
            println!("t={:5.2}  command {}", a.t, a.command);
        }
        seen = sim.applied_commands().len();
        if sim.tick_index() % 50 == 0 {
            println!(
                "t={:5.2}  x={:+.3} v={:+.3} theta={:+.4} heading={:+.2} rad  duty=({:+.3}, {:+.3})",
                f.t, f.x, f.v, f.theta_true, sim.heading(), f.duty_left, f.duty_right
            );
        }
    }
    print!("{}", sim.metrics());
    Ok(())
}
