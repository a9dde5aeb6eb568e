//! MPU6050-class IMU emulation.
//!
//! The accelerometer reports specific force (a static sensor reads `+g` on
//! its up axis) resolved in the tilted body frame; the gyro reports the tilt
//! rate plus a slowly wandering bias. Every channel saturates at its
//! configured full-scale range.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::plant::StateVector;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuConfig {
    /// m/s², per axis.
    pub accel_noise_std: f64,
    /// rad/s
    pub gyro_noise_std: f64,
    /// rad/s
    pub gyro_bias_init: f64,
    /// rad/s per √s
    pub gyro_bias_walk_std: f64,
    /// m/s², symmetric full scale.
    pub accel_range: f64,
    /// rad/s, symmetric full scale.
    pub gyro_range: f64,
    /// Hz
    pub sample_rate: f64,
}

impl Default for ImuConfig {
    fn default() -> Self {
        ImuConfig {
            accel_noise_std: 0.2,
            gyro_noise_std: 0.005,
            gyro_bias_init: 0.01,
            gyro_bias_walk_std: 0.001,
            accel_range: 4.0 * STANDARD_GRAVITY,
            gyro_range: 250f64.to_radians(),
            sample_rate: 100.0,
        }
    }
}

impl ImuConfig {
    /// Default ranges and rate with every noise source and the bias removed.
    pub fn ideal() -> Self {
        ImuConfig {
            accel_noise_std: 0.0,
            gyro_noise_std: 0.0,
            gyro_bias_init: 0.0,
            gyro_bias_walk_std: 0.0,
            ..ImuConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("imu.accel_noise_std", self.accel_noise_std),
            ("imu.gyro_noise_std", self.gyro_noise_std),
            ("imu.gyro_bias_walk_std", self.gyro_bias_walk_std),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::param(name, format!("must be >= 0, got {value}")));
            }
        }
        if !self.gyro_bias_init.is_finite() {
            return Err(Error::param("imu.gyro_bias_init", "must be finite"));
        }
        let positive = [
            ("imu.accel_range", self.accel_range),
            ("imu.gyro_range", self.gyro_range),
            ("imu.sample_rate", self.sample_rate),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuSample {
    /// Body forward axis, m/s².
    pub accel_x: f64,
    /// Body up axis, m/s².
    pub accel_z: f64,
    /// rad/s
    pub gyro: f64,
    pub t: f64,
}

/// Mutable sensor state: current gyro bias and the noise stream.
#[derive(Debug, Clone)]
pub struct ImuState {
    pub gyro_bias: f64,
    rng: ChaCha8Rng,
}

impl ImuState {
    pub fn new(cfg: &ImuConfig, seed: u64) -> Self {
        ImuState {
            gyro_bias: cfg.gyro_bias_init,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Reads the sensor at time `t` for the given true motion, then advances
    /// the bias random walk by `dt`. Uses standard gravity; see
    /// [`ImuState::sample_with_gravity`] for other plants.
    pub fn sample(
        &mut self,
        truth: &StateVector,
        cart_accel: f64,
        cfg: &ImuConfig,
        dt: f64,
        t: f64,
    ) -> ImuSample {
        self.sample_with_gravity(truth, cart_accel, STANDARD_GRAVITY, cfg, dt, t)
    }

    pub fn sample_with_gravity(
        &mut self,
        truth: &StateVector,
        cart_accel: f64,
        gravity: f64,
        cfg: &ImuConfig,
        dt: f64,
        t: f64,
    ) -> ImuSample {
        let (ideal_x, ideal_z) = specific_force(truth.theta, cart_accel, gravity);

        // Draws happen unconditionally so the stream stays aligned whatever
        // the noise settings are.
        let nx = self.normal();
        let nz = self.normal();
        let ng = self.normal();
        let nb = self.normal();

        let accel_x = ideal_x + cfg.accel_noise_std * nx;
        let accel_z = ideal_z + cfg.accel_noise_std * nz;
        let gyro = truth.omega + self.gyro_bias + cfg.gyro_noise_std * ng;
        self.gyro_bias += cfg.gyro_bias_walk_std * dt.sqrt() * nb;

        ImuSample {
            accel_x: accel_x.clamp(-cfg.accel_range, cfg.accel_range),
            accel_z: accel_z.clamp(-cfg.accel_range, cfg.accel_range),
            gyro: gyro.clamp(-cfg.gyro_range, cfg.gyro_range),
            t,
        }
    }
}

/// World specific force `(a_x, g)` rotated into a body frame tilted by
/// `theta`.
pub fn specific_force(theta: f64, cart_accel: f64, gravity: f64) -> (f64, f64) {
    let (sin, cos) = theta.sin_cos();
    (
        cart_accel * cos + gravity * sin,
        -cart_accel * sin + gravity * cos,
    )
}

/// Tilt implied by the gravity direction in an accelerometer reading.
pub fn accel_tilt(sample: &ImuSample) -> Result<f64> {
    if sample.accel_x == 0.0 && sample.accel_z == 0.0 {
        return Err(Error::domain("zero specific force (free fall)"));
    }
    Ok(sample.accel_x.atan2(sample.accel_z))
}
