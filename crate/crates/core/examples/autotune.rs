//! Automated version of trial-and-error tuning: a coarse grid over the tilt
//! loop, then coordinate descent on both loops from the grid's winner.

use balancebot::sim::ScenarioConfig;
use balancebot::tune::{tune, GainAxis, Objective, Search, TuneSpec, TuneTarget};

fn main() -> balancebot::Result<()> {
    let mut base = ScenarioConfig::default();
    base.control.inner.kp = 0.0045;
    base.control.inner.ki = 0.005;

    let grid = TuneSpec {
        outer: [
            GainAxis::new(20.0, 200.0, 7),
            GainAxis::new(500.0, 5000.0, 7),
            GainAxis::new(0.0, 1.0, 3),
        ],
        ..Default::default()
    };
    let coarse = tune(&base, &grid)?;
    println!("grid ({} runs): settling {:.2} s", coarse.evaluations, coarse.objective);
    println!("  outer {:?}", coarse.outer.as_tuple());

    base.control.outer = coarse.outer;
    let descent = TuneSpec {
        target: TuneTarget::Both,
        search: Search::CoordinateDescent,
        objective: Objective::Itae,
        outer: [GainAxis::new(20.0, 250.0, 24), GainAxis::new(500.0, 6000.0, 23), GainAxis::new(0.0, 1.5, 16)],
        inner: [GainAxis::new(0.001, 0.012, 12), GainAxis::new(0.0, 0.05, 11), GainAxis::new(0.0, 0.001, 1)],
        ..grid
    };
    let fine = tune(&base, &descent)?;
    println!("descent ({} runs): ITAE per pass {:?}", fine.evaluations, fine.pass_history);
    print!("{fine}");
    Ok(())
}
