//! With every gain at zero the upright body is left to gravity. A one-degree
//! tilt grows until the fall detector trips.

use balancebot::control::{PidGains, Status};
use balancebot::plant::{linearize, RobotParams, StateVector};
use balancebot::sensors::ImuConfig;
use balancebot::sim::{run, ScenarioConfig};

fn main() -> balancebot::Result<()> {
    let mut cfg = ScenarioConfig {
        duration: 2.0,
        imu: ImuConfig::ideal(),
        initial_state: StateVector::tilted(0.017),
        ..Default::default()
    };
    cfg.control.outer = PidGains::default();
    cfg.control.inner = PidGains::default();

    let (trace, metrics) = run(&cfg, None)?;
    for f in trace.iter().step_by(5) {
        println!("t={:.2}  theta={:+.4}  {}", f.t, f.theta_true, f.status.as_str());
        if f.status == Status::Fallen {
            break;
        }
    }
    println!("fell={}", metrics.fell);

    // Small-angle growth rate from the linearized model, for comparison.
    let a = linearize(&RobotParams::default()).state_matrix;
    let rate = a[3][2].sqrt();
    println!("linear growth rate ~ {rate:.2} 1/s (e-folding {:.3} s)", 1.0 / rate);
    Ok(())
}
