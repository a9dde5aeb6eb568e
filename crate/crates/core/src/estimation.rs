//! Complementary tilt filter.
//!
//! Integrated gyro rate carries the fast motion; the accelerometer tilt
//! pulls the estimate back toward the gravity direction over a time constant
//! of roughly `alpha·dt / (1 − alpha)`.

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Weight on the gyro path, in `[0, 1]`.
    pub alpha: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { alpha: 0.98 }
    }
}

impl FilterConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = FilterConfig { alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.alpha) {
            Ok(())
        } else {
            Err(Error::param("filter.alpha", format!("must be in [0, 1], got {}", self.alpha)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterState {
    pub theta_est: f64,
}

impl FilterState {
    pub fn reset(initial_tilt: f64) -> Self {
        FilterState {
            theta_est: initial_tilt,
        }
    }

    pub fn update(self, gyro: f64, accel_tilt: f64, dt: f64, cfg: &FilterConfig) -> Result<Self> {
        ensure_finite("gyro", gyro)?;
        ensure_finite("accel_tilt", accel_tilt)?;
        ensure_finite("theta_est", self.theta_est)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("dt must be > 0, got {dt}")));
        }
        let predicted = self.theta_est + gyro * dt;
        Ok(FilterState {
            theta_est: cfg.alpha * predicted + (1.0 - cfg.alpha) * accel_tilt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_one_integrates_gyro() {
        let cfg = FilterConfig::new(1.0).unwrap();
        let s = FilterState::reset(0.2).update(0.5, 9.0, 0.01, &cfg).unwrap();
        assert!((s.theta_est - 0.205).abs() < 1e-15);
    }

    #[test]
    fn alpha_zero_follows_accelerometer() {
        let cfg = FilterConfig::new(0.0).unwrap();
        let s = FilterState::reset(0.2).update(0.5, -0.3, 0.01, &cfg).unwrap();
        assert_eq!(s.theta_est, -0.3);
    }

    #[test]
    fn one_degree_step() {
        let cfg = FilterConfig::default();
        for dt in [0.001, 0.01, 0.1] {
            let s = FilterState::reset(0.0).update(0.0, 0.0174533, dt, &cfg).unwrap();
            // 0.02 · 0.0174533
            assert!((s.theta_est - 0.000349066).abs() < 1e-12);
        }
    }

    #[test]
    fn reset_and_idle() {
        let cfg = FilterConfig::default();
        assert_eq!(FilterState::reset(0.3).theta_est, 0.3);
        let s = FilterState::reset(0.0).update(0.0, 0.0, 0.01, &cfg).unwrap();
        assert_eq!(s.theta_est, 0.0);
    }

    #[test]
    fn converges_geometrically_to_constant_tilt() {
        let cfg = FilterConfig::default();
        let c = 0.25;
        let mut s = FilterState::reset(0.0);
        for n in 1..=300 {
            s = s.update(0.0, c, 0.01, &cfg).unwrap();
            // Closed form: c·(1 − alphaⁿ).
            let oracle = c * (1.0 - cfg.alpha.powi(n));
            assert!((s.theta_est - oracle).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = FilterConfig::default();
        let s = FilterState::reset(0.0);
        assert!(s.update(f64::NAN, 0.0, 0.01, &cfg).is_err());
        assert!(s.update(0.0, f64::INFINITY, 0.01, &cfg).is_err());
        assert!(s.update(0.0, 0.0, 0.0, &cfg).is_err());
        assert!(FilterConfig::new(1.01).is_err());
        assert!(FilterConfig::new(-0.1).is_err());
        assert!(FilterConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn bias_settles_to_closed_form_error() {
        let cfg = FilterConfig::default();
        let (bias, dt) = (0.01, 0.01);
        let mut s = FilterState::reset(0.0);
        for _ in 0..6000 {
            s = s.update(bias, 0.0, dt, &cfg).unwrap();
        }
        let expected = cfg.alpha * bias * dt / (1.0 - cfg.alpha);
        assert!((expected - 0.0049).abs() < 1e-12);
        assert!((s.theta_est - expected).abs() / expected < 0.05);
    }

    #[test]
    fn gyro_only_drifts_linearly() {
        let cfg = FilterConfig::new(1.0).unwrap();
        let mut s = FilterState::reset(0.0);
        for _ in 0..1000 {
            s = s.update(0.01, 0.0, 0.01, &cfg).unwrap();
        }
        assert!((s.theta_est - 0.1).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fixed_point(c in -1.0..1.0f64, alpha in 0.0..=1.0f64) {
            let cfg = FilterConfig { alpha };
            let s = FilterState::reset(c).update(0.0, c, 0.01, &cfg).unwrap();
            prop_assert!((s.theta_est - c).abs() <= 1e-15);
        }

        #[test]
        fn output_is_convex_blend(prev in -1.0..1.0f64, gyro in -4.0..4.0f64, acc in -1.0..1.0f64,
                                  alpha in 0.0..=1.0f64, dt in 1e-4..0.05f64) {
            let cfg = FilterConfig { alpha };
            let out = FilterState::reset(prev).update(gyro, acc, dt, &cfg).unwrap().theta_est;
            let pred = prev + gyro * dt;
            let (lo, hi) = if pred < acc { (pred, acc) } else { (acc, pred) };
            prop_assert!(out >= lo - 1e-12 && out <= hi + 1e-12);
        }
    }
}
