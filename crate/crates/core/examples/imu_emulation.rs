use balancebot::plant::{derivatives, step, RobotParams, StateVector};
use balancebot::sensors::{accel_tilt, ImuConfig, ImuState};

/// Swings the unforced pendulum around its hanging position and shows what
/// a noisy IMU on the body would report alongside the truth.
fn main() -> balancebot::Result<()> {
    let params = RobotParams::default();
    let cfg = ImuConfig::default();
    let mut imu = ImuState::new(&cfg, 42);
    let mut s = StateVector { theta: 2.6, ..Default::default() };

    println!("{:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "t", "theta", "omega", "acc_x", "acc_z", "gyro", "tilt");
    for k in 0..60 {
        let t = k as f64 * 0.01;
        let a = derivatives(s, 0.0, &params)?.dv;
        let sample = imu.sample(&s, a, &cfg, 0.01, t);
        let tilt = accel_tilt(&sample).unwrap_or(f64::NAN);
        if k % 4 == 0 {
            println!(
                "{t:5.2} {:8.4} {:8.4} {:8.3} {:8.3} {:8.4} {:8.4}",
                s.theta, s.omega, sample.accel_x, sample.accel_z, sample.gyro, tilt
            );
        }
        for _ in 0..10 {
            s = step(s, 0.0, 0.001, &params)?;
        }
    }
    println!("gyro bias after the run: {:.5} rad/s", imu.gyro_bias);
    Ok(())
}
