//! Planar inverted pendulum on a cart.
//!
//! The body is a rigid pendulum pivoting on the wheel axle; the wheels are
//! treated as a cart that never leaves the ground. With `θ` measured from
//! upright (positive toward `+x`) the equations of motion are
//!
//! ```text
//! (M+m)·v̇       + m·l·cosθ·ω̇   = F − b_x·v + m·l·ω²·sinθ
//! m·l·cosθ·v̇    + (J+m·l²)·ω̇   = m·g·l·sinθ − b_t·ω
//! ```
//!
//! They follow from the Lagrangian with kinetic energy
//! `½(M+m)v² + m·l·v·ω·cosθ + ½(J+m·l²)ω²` and potential `m·g·l·(cosθ − 1)`.
//! The mass matrix determinant `(M+m)(J+m·l²) − (m·l·cosθ)²` is bounded
//! below by `M·m·l² + (M+m)·J > 0`, so the solve never degenerates.

use crate::error::{ensure_finite, Error, Result};

/// Physical constants of the robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    /// Wheel/base mass, kg.
    pub cart_mass: f64,
    /// Body mass, kg.
    pub pendulum_mass: f64,
    /// Axle to body center of mass, m.
    pub com_distance: f64,
    /// Body inertia about its center of mass, kg·m².
    pub pendulum_inertia: f64,
    /// m
    pub wheel_radius: f64,
    /// m/s²
    pub gravity: f64,
    /// Viscous friction on the base, N·s/m.
    pub cart_friction: f64,
    /// Viscous friction at the axle, N·m·s/rad.
    pub pivot_friction: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        let pendulum_mass = 0.4;
        let com_distance = 0.10;
        RobotParams {
            cart_mass: 0.6,
            pendulum_mass,
            com_distance,
            pendulum_inertia: pendulum_mass * com_distance * com_distance / 3.0,
            wheel_radius: 0.030,
            gravity: 9.81,
            cart_friction: 0.1,
            pivot_friction: 0.001,
        }
    }
}

impl RobotParams {
    /// Same geometry with both friction coefficients zeroed.
    pub fn frictionless(self) -> Self {
        RobotParams {
            cart_friction: 0.0,
            pivot_friction: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("plant.cart_mass", self.cart_mass),
            ("plant.pendulum_mass", self.pendulum_mass),
            ("plant.com_distance", self.com_distance),
            ("plant.wheel_radius", self.wheel_radius),
            ("plant.gravity", self.gravity),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {value}")));
            }
        }
        let non_negative = [
            ("plant.pendulum_inertia", self.pendulum_inertia),
            ("plant.cart_friction", self.cart_friction),
            ("plant.pivot_friction", self.pivot_friction),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::param(name, format!("must be >= 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Moment of inertia of the body about the axle.
    pub fn pivot_inertia(&self) -> f64 {
        self.pendulum_inertia + self.pendulum_mass * self.com_distance * self.com_distance
    }

    /// Determinant of the mass matrix at tilt `theta`.
    pub fn mass_determinant(&self, theta: f64) -> f64 {
        let coupling = self.pendulum_mass * self.com_distance * theta.cos();
        (self.cart_mass + self.pendulum_mass) * self.pivot_inertia() - coupling * coupling
    }
}

/// True plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub x: f64,
    pub v: f64,
    pub theta: f64,
    pub omega: f64,
}

impl StateVector {
    pub fn new(x: f64, v: f64, theta: f64, omega: f64) -> Self {
        StateVector { x, v, theta, omega }
    }

    pub fn tilted(theta: f64) -> Self {
        StateVector {
            theta,
            ..Default::default()
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.v, self.theta, self.omega]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        StateVector::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    fn advanced(self, d: StateDerivative, h: f64) -> Self {
        StateVector {
            x: self.x + h * d.dx,
            v: self.v + h * d.dv,
            theta: self.theta + h * d.dtheta,
            omega: self.omega + h * d.domega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub dx: f64,
    pub dv: f64,
    pub dtheta: f64,
    pub domega: f64,
}

impl StateDerivative {
    pub fn to_array(self) -> [f64; 4] {
        [self.dx, self.dv, self.dtheta, self.domega]
    }
}

/// Largest physics step `step` accepts, seconds.
pub const MAX_STEP: f64 = 0.01;

/// Time derivative of `state` under horizontal wheel force `force` (N).
pub fn derivatives(state: StateVector, force: f64, params: &RobotParams) -> Result<StateDerivative> {
    if !state.is_finite() {
        return Err(Error::domain(format!("non-finite state {state:?}")));
    }
    ensure_finite("force", force)?;
    Ok(derivatives_unchecked(state, force, params))
}

fn derivatives_unchecked(state: StateVector, force: f64, p: &RobotParams) -> StateDerivative {
    let (sin, cos) = state.theta.sin_cos();
    let ml = p.pendulum_mass * p.com_distance;

    let a11 = p.cart_mass + p.pendulum_mass;
    let a12 = ml * cos;
    let a22 = p.pivot_inertia();
    let rhs1 = force - p.cart_friction * state.v + ml * state.omega * state.omega * sin;
    let rhs2 = ml * p.gravity * sin - p.pivot_friction * state.omega;

    let det = a11 * a22 - a12 * a12;
    StateDerivative {
        dx: state.v,
        dv: (a22 * rhs1 - a12 * rhs2) / det,
        dtheta: state.omega,
        domega: (a11 * rhs2 - a12 * rhs1) / det,
    }
}

/// Advances `state` by `dt` with classical RK4, holding `force` constant.
pub fn step(state: StateVector, force: f64, dt: f64, params: &RobotParams) -> Result<StateVector> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(Error::domain(format!("dt must be in (0, {MAX_STEP}], got {dt}")));
    }
    let k1 = derivatives(state, force, params)?;
    let k2 = derivatives_unchecked(state.advanced(k1, dt / 2.0), force, params);
    let k3 = derivatives_unchecked(state.advanced(k2, dt / 2.0), force, params);
    let k4 = derivatives_unchecked(state.advanced(k3, dt), force, params);

    let combine = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * b + 2.0 * c + d) * dt / 6.0;
    let next = StateVector {
        x: state.x + combine(k1.dx, k2.dx, k3.dx, k4.dx),
        v: state.v + combine(k1.dv, k2.dv, k3.dv, k4.dv),
        theta: state.theta + combine(k1.dtheta, k2.dtheta, k3.dtheta, k4.dtheta),
        omega: state.omega + combine(k1.domega, k2.domega, k3.domega, k4.domega),
    };
    if !next.is_finite() {
        return Err(Error::domain("integration produced a non-finite state"));
    }
    Ok(next)
}

/// Mechanical energy, zero when upright at rest.
pub fn total_energy(state: StateVector, params: &RobotParams) -> f64 {
    let p = params;
    let ml = p.pendulum_mass * p.com_distance;
    let kinetic = 0.5 * (p.cart_mass + p.pendulum_mass) * state.v * state.v
        + ml * state.v * state.omega * state.theta.cos()
        + 0.5 * p.pivot_inertia() * state.omega * state.omega;
    let potential = ml * p.gravity * (state.theta.cos() - 1.0);
    kinetic + potential
}

/// Linearization about the upright equilibrium, state order `(x, v, θ, ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub state_matrix: [[f64; 4]; 4],
    pub input_vector: [f64; 4],
}

pub fn linearize(params: &RobotParams) -> LinearModel {
    let p = params;
    let ml = p.pendulum_mass * p.com_distance;
    let total = p.cart_mass + p.pendulum_mass;
    let inertia = p.pivot_inertia();
    let det = p.mass_determinant(0.0);
    let mgl = ml * p.gravity;

    LinearModel {
        state_matrix: [
            [0.0, 1.0, 0.0, 0.0],
            [
                0.0,
                -inertia * p.cart_friction / det,
                -ml * mgl / det,
                ml * p.pivot_friction / det,
            ],
            [0.0, 0.0, 0.0, 1.0],
            [
                0.0,
                ml * p.cart_friction / det,
                total * mgl / det,
                -total * p.pivot_friction / det,
            ],
        ],
        input_vector: [0.0, inertia / det, 0.0, -ml / det],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_params() -> RobotParams {
        RobotParams {
            cart_mass: 1.0,
            pendulum_mass: 0.2,
            com_distance: 0.15,
            pendulum_inertia: 0.0,
            wheel_radius: 0.03,
            gravity: 9.81,
            cart_friction: 0.0,
            pivot_friction: 0.0,
        }
    }

    #[test]
    fn upright_equilibrium_has_zero_derivative() {
        let d = derivatives(StateVector::default(), 0.0, &RobotParams::default()).unwrap();
        assert_eq!(d, StateDerivative::default());
    }

    #[test]
    fn gravity_pulls_tilt_outward() {
        let p = RobotParams::default().frictionless();
        let d = derivatives(StateVector::tilted(0.1), 0.0, &p).unwrap();
        assert!(d.domega > 0.0);
        let d = derivatives(StateVector::tilted(-0.1), 0.0, &p).unwrap();
        assert!(d.domega < 0.0);
    }

    #[test]
    fn hand_solved_thirty_degrees() {
        // Cramer's rule worked by hand at θ = π/6, ω = v = F = 0:
        //   a11 = 1.2, a12 = 0.03·cos(π/6) = 0.025980762, a22 = 0.0045
        //   rhs1 = 0, rhs2 = 0.03·9.81·0.5 = 0.14715
        //   det = 0.0054 − 0.000675 = 0.004725
        //   dv = −a12·rhs2/det, dω = a11·rhs2/det
        let det = 0.004725;
        let a12 = 0.03 * (3.0f64).sqrt() / 2.0;
        let expected_dv = -a12 * 0.14715 / det;
        let expected_domega = 1.2 * 0.14715 / det;
        assert!((expected_domega - 37.371428571).abs() < 1e-8);
        assert!((expected_dv + 0.809115163).abs() < 1e-8);

        let state = StateVector::tilted(std::f64::consts::FRAC_PI_6);
        let d = derivatives(state, 0.0, &reference_params()).unwrap();
        assert!((d.dv - expected_dv).abs() < 1e-9, "dv = {}", d.dv);
        assert!((d.domega - expected_domega).abs() < 1e-9, "domega = {}", d.domega);
        assert_eq!(d.dx, 0.0);
        assert_eq!(d.dtheta, 0.0);
    }

    #[test]
    fn rejects_non_finite_inputs() {
        let p = RobotParams::default();
        assert!(matches!(
            derivatives(StateVector::tilted(f64::NAN), 0.0, &p),
            Err(Error::Domain(_))
        ));
        assert!(derivatives(StateVector::default(), f64::INFINITY, &p).is_err());
    }

    #[test]
    fn step_rejects_bad_dt() {
        let p = RobotParams::default();
        for dt in [0.0, -0.001, 0.0101, f64::NAN] {
            assert!(step(StateVector::default(), 0.0, dt, &p).is_err(), "dt={dt}");
        }
        assert!(step(StateVector::default(), 0.0, MAX_STEP, &p).is_ok());
    }

    #[test]
    fn step_keeps_equilibrium() {
        let p = RobotParams::default();
        let s = step(StateVector::default(), 0.0, 0.001, &p).unwrap();
        assert_eq!(s, StateVector::default());
    }

    #[test]
    fn energy_reference_points() {
        let p = RobotParams::default();
        assert_eq!(total_energy(StateVector::default(), &p), 0.0);
        let e = total_energy(StateVector::new(0.0, 1.0, 0.0, 0.0), &p);
        assert!((e - 0.5 * (p.cart_mass + p.pendulum_mass)).abs() < 1e-15);
        let e = total_energy(StateVector::tilted(std::f64::consts::PI), &p);
        let expected = -2.0 * p.pendulum_mass * p.gravity * p.com_distance;
        assert!((e - expected).abs() < 1e-12);
    }

    #[test]
    fn one_second_energy_drift_from_small_tilt() {
        let p = RobotParams::default().frictionless();
        let mut s = StateVector::tilted(0.1);
        let e0 = total_energy(s, &p);
        for _ in 0..1000 {
            s = step(s, 0.0, 0.001, &p).unwrap();
        }
        let drift = (total_energy(s, &p) - e0).abs() / (e0.abs() + 1e-12);
        assert!(drift < 1e-6, "drift {drift}");
    }

    #[test]
    fn linearization_matches_central_differences() {
        for p in [RobotParams::default(), reference_params()] {
            let lin = linearize(&p);
            let h = 1e-6;
            for j in 0..4 {
                let mut plus = [0.0; 4];
                let mut minus = [0.0; 4];
                plus[j] = h;
                minus[j] = -h;
                let dp = derivatives(StateVector::from_array(plus), 0.0, &p).unwrap().to_array();
                let dm = derivatives(StateVector::from_array(minus), 0.0, &p).unwrap().to_array();
                for i in 0..4 {
                    let fd = (dp[i] - dm[i]) / (2.0 * h);
                    assert!(
                        (fd - lin.state_matrix[i][j]).abs() < 1e-6,
                        "A[{i}][{j}] = {} vs fd {fd}",
                        lin.state_matrix[i][j]
                    );
                }
            }
            let dp = derivatives(StateVector::default(), h, &p).unwrap().to_array();
            let dm = derivatives(StateVector::default(), -h, &p).unwrap().to_array();
            for i in 0..4 {
                let fd = (dp[i] - dm[i]) / (2.0 * h);
                assert!((fd - lin.input_vector[i]).abs() < 1e-6);
            }
            assert_eq!(lin.state_matrix[2][3], 1.0);
        }
    }

    /// Coefficients of det(λI − A), highest power first, via Faddeev–LeVerrier.
    fn characteristic_polynomial(a: &[[f64; 4]; 4]) -> [f64; 5] {
        let mut coeffs = [0.0; 5];
        coeffs[0] = 1.0;
        let mut m = [[0.0; 4]; 4];
        for k in 1..=4 {
            // m ← A·m + c_{k-1}·I
            let mut next = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    next[i][j] = (0..4).map(|l| a[i][l] * m[l][j]).sum::<f64>();
                }
                next[i][i] += coeffs[k - 1];
            }
            m = next;
            let trace: f64 = (0..4)
                .map(|i| (0..4).map(|l| a[i][l] * m[l][i]).sum::<f64>())
                .sum();
            coeffs[k] = -trace / k as f64;
        }
        coeffs
    }

    #[test]
    fn open_loop_has_unstable_pole() {
        let p = RobotParams::default().frictionless();
        let c = characteristic_polynomial(&linearize(&p).state_matrix);
        let eval = |x: f64| c.iter().fold(0.0, |acc, &ci| acc * x + ci);
        // Polynomial is positive for large λ; find a sign change on (0, 100).
        let (mut lo, mut hi) = (1e-3, 100.0);
        assert!(eval(lo) < 0.0 && eval(hi) > 0.0, "no positive real root bracketed");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if eval(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(lo > 1.0, "unstable pole {lo}");
    }

    #[test]
    fn zero_input_tilt_diverges_monotonically() {
        let p = RobotParams::default();
        let mut s = StateVector::tilted(0.017);
        let mut t = 0.0;
        let mut last = s.theta;
        while s.theta.abs() <= 0.35 {
            s = step(s, 0.0, 0.001, &p).unwrap();
            t += 0.001;
            if s.theta * s.omega > 0.0 {
                assert!(s.theta > last);
            }
            last = s.theta;
            assert!(t < 5.0, "tilt never diverged");
        }
    }

    fn euler_one_second(start: StateVector, h: f64, p: &RobotParams) -> StateVector {
        let mut s = start;
        for _ in 0..(1.0 / h).round() as usize {
            let d = derivatives(s, 0.0, p).unwrap();
            s = StateVector::from_array([
                s.x + h * d.dx,
                s.v + h * d.dv,
                s.theta + h * d.dtheta,
                s.omega + h * d.domega,
            ]);
        }
        s
    }

    fn rk4_one_second(start: StateVector, p: &RobotParams) -> StateVector {
        (0..1000).fold(start, |s, _| step(s, 0.0, 1e-3, p).unwrap())
    }

    fn max_gap(a: StateVector, b: StateVector) -> f64 {
        a.to_array().iter().zip(b.to_array()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn fine_euler_matches_a_gentle_swing() {
        let p = RobotParams::default();
        let start = StateVector { theta: 3.0, omega: 0.5, ..Default::default() };
        let gap = max_gap(rk4_one_second(start, &p), euler_one_second(start, 1e-6, &p));
        assert!(gap < 1e-4, "{gap}");
    }

    #[test]
    fn euler_converges_to_rk4_at_first_order() {
        // On a fall the Euler error is large, but halving its step halves
        // the gap, so the RK4 path is the limit Euler is heading for.
        let p = RobotParams::default();
        let start = StateVector::tilted(0.1);
        let rk = rk4_one_second(start, &p);
        let coarse = max_gap(rk, euler_one_second(start, 4e-6, &p));
        let fine = max_gap(rk, euler_one_second(start, 2e-6, &p));
        let ratio = coarse / fine;
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn derivative_is_odd(
            x in -2.0..2.0f64, v in -2.0..2.0f64, th in -1.5..1.5f64,
            w in -5.0..5.0f64, f in -20.0..20.0f64,
        ) {
            let p = RobotParams::default();
            let a = derivatives(StateVector::new(x, v, th, w), f, &p).unwrap().to_array();
            let b = derivatives(StateVector::new(-x, -v, -th, -w), -f, &p).unwrap().to_array();
            for i in 0..4 {
                prop_assert!((a[i] + b[i]).abs() <= 1e-12 * (1.0 + a[i].abs()));
            }
        }

        #[test]
        fn mass_determinant_positive(th in -10.0..10.0f64, m in 0.01..5.0f64, big in 0.01..5.0f64,
                                     l in 0.01..1.0f64, j in 0.0..0.1f64) {
            let p = RobotParams { cart_mass: big, pendulum_mass: m, com_distance: l,
                                  pendulum_inertia: j, ..RobotParams::default() };
            prop_assert!(p.mass_determinant(th) > 0.0);
        }
    }
}
