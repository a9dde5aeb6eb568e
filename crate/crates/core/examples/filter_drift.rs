//! A level, motionless IMU with a constant 0.01 rad/s gyro bias, fed through
//! the complementary filter at several blend factors. Pure integration
//! (alpha = 1) drifts without bound; any accelerometer share pins the error.

use balancebot::estimation::{FilterConfig, FilterState};
use balancebot::plant::StateVector;
use balancebot::sensors::{accel_tilt, ImuConfig, ImuState};

fn main() -> balancebot::Result<()> {
    let imu_cfg = ImuConfig { gyro_bias_init: 0.01, ..ImuConfig::ideal() };
    let dt = 0.01;
    let level = StateVector::default();

    for alpha in [0.9, 0.98, 0.995, 1.0] {
        let cfg = FilterConfig::new(alpha)?;
        let mut imu = ImuState::new(&imu_cfg, 1);
        let mut f = FilterState::reset(0.0);
        print!("alpha={alpha:<6}");
        for k in 1..=6000 {
            let s = imu.sample(&level, 0.0, &imu_cfg, dt, k as f64 * dt);
            f = f.update(s.gyro, accel_tilt(&s)?, dt, &cfg)?;
            if k % 1500 == 0 {
                print!("  t={:>4.0}s err={:.5}", k as f64 * dt, f.theta_est);
            }
        }
        if alpha < 1.0 {
            print!("  (steady state {:.5})", alpha * 0.01 * dt / (1.0 - alpha));
        }
        println!();
    }
    Ok(())
}
