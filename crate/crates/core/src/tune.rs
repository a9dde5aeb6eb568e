//! Gain search.
//!
//! Every candidate is scored on a noise-free run from a fixed 0.087 rad
//! start with no commands, so the result depends only on the gains and the
//! plant. Grid search fans out over threads; results are reduced in a fixed
//! order so the answer never depends on scheduling.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::control::PidGains;
use crate::error::{Error, Result};
use crate::plant::StateVector;
use crate::sensors::ImuConfig;
use crate::sim::{run, RunMetrics, ScenarioConfig};

pub const TUNE_START_TILT: f64 = 0.087;
pub const DEFAULT_FALL_PENALTY: f64 = 1.0e6;
/// A pass of coordinate descent must beat the previous one by more than
/// this to continue.
pub const DESCENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneTarget {
    OuterLoop,
    InnerLoop,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Search {
    Grid,
    CoordinateDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    SettlingTime,
    Itae,
}

macro_rules! from_str_table {
    ($ty:ty, $what:literal, $($text:literal => $val:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($val),)+
                    _ => Err(Error::domain(format!(concat!("unknown ", $what, " `{}`"), s))),
                }
            }
        }
    };
}

from_str_table!(TuneTarget, "tune target", "outer" => TuneTarget::OuterLoop, "inner" => TuneTarget::InnerLoop, "both" => TuneTarget::Both);
from_str_table!(Search, "search", "grid" => Search::Grid, "descent" => Search::CoordinateDescent, "coordinate-descent" => Search::CoordinateDescent);
from_str_table!(Objective, "objective", "settling" => Objective::SettlingTime, "settling-time" => Objective::SettlingTime, "itae" => Objective::Itae);

/// Evenly spaced values for one gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainAxis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GainAxis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        GainAxis { lo, hi, points }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo >= 0.0) {
            return Err(Error::param(name, "bounds must be finite and non-negative"));
        }
        if self.lo >= self.hi {
            return Err(Error::param(name, "low bound must be below high bound"));
        }
        if self.points == 0 {
            return Err(Error::param(name, "needs at least one grid point"));
        }
        Ok(())
    }

    /// Grid values in ascending order. A single point sits at `lo`.
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| if i + 1 == self.points { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

/// Parses `lo:hi` or `lo:hi:points`.
impl FromStr for GainAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain(format!("gain axis `{s}`: expected lo:hi or lo:hi:points"));
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        match parts.as_slice() {
            [lo, hi] => Ok(GainAxis::new(num(lo)?, num(hi)?, 5)),
            [lo, hi, n] => Ok(GainAxis::new(num(lo)?, num(hi)?, n.trim().parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSpec {
    pub target: TuneTarget,
    pub search: Search,
    /// kp, ki, kd axes of the tilt loop.
    pub outer: [GainAxis; 3],
    /// kp, ki, kd axes of the wheel-speed loop.
    pub inner: [GainAxis; 3],
    pub objective: Objective,
    pub fall_penalty: f64,
    /// Upper bound on coordinate-descent passes.
    pub max_passes: usize,
}

impl Default for TuneSpec {
    fn default() -> Self {
        TuneSpec {
            target: TuneTarget::OuterLoop,
            search: Search::Grid,
            outer: [
                GainAxis::new(40.0, 200.0, 5),
                GainAxis::new(1000.0, 5000.0, 5),
                GainAxis::new(0.0, 1.0, 3),
            ],
            inner: [
                GainAxis::new(0.002, 0.01, 5),
                GainAxis::new(0.0, 0.02, 3),
                GainAxis::new(0.0, 0.001, 1),
            ],
            objective: Objective::SettlingTime,
            fall_penalty: DEFAULT_FALL_PENALTY,
            max_passes: 20,
        }
    }
}

impl TuneSpec {
    pub fn validate(&self) -> Result<()> {
        const NAMES: [[&str; 3]; 2] = [["outer.kp", "outer.ki", "outer.kd"], ["inner.kp", "inner.ki", "inner.kd"]];
        for (axes, names) in [&self.outer, &self.inner].into_iter().zip(NAMES) {
            for (axis, name) in axes.iter().zip(names) {
                axis.validate(name)?;
            }
        }
        if !(self.fall_penalty.is_finite() && self.fall_penalty > 0.0) {
            return Err(Error::param("fall_penalty", "must be positive"));
        }
        if self.max_passes == 0 {
            return Err(Error::param("max_passes", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub outer: PidGains,
    pub inner: PidGains,
    pub objective: f64,
    /// Every candidate fell; the gains returned are merely the least bad.
    pub all_fell: bool,
    pub evaluations: usize,
    /// Best objective after each coordinate-descent pass (empty for grid).
    pub pass_history: Vec<f64>,
}

impl fmt::Display for TuneResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = |v: f64| crate::numfmt::format_sig(v, 9);
        writeln!(f, "control.outer.kp={}", g(self.outer.kp))?;
        writeln!(f, "control.outer.ki={}", g(self.outer.ki))?;
        writeln!(f, "control.outer.kd={}", g(self.outer.kd))?;
        writeln!(f, "control.inner.kp={}", g(self.inner.kp))?;
        writeln!(f, "control.inner.ki={}", g(self.inner.ki))?;
        writeln!(f, "control.inner.kd={}", g(self.inner.kd))?;
        writeln!(f, "objective={}", g(self.objective))?;
        writeln!(f, "all_fell={}", self.all_fell)?;
        writeln!(f, "evaluations={}", self.evaluations)
    }
}

/// The gains one candidate is scored with, as `[outer, inner]`.
type Candidate = [PidGains; 2];

struct Evaluator<'a> {
    base: &'a ScenarioConfig,
    spec: &'a TuneSpec,
}

#[derive(Debug, Clone, Copy)]
struct Score {
    value: f64,
    fell: bool,
}

impl Evaluator<'_> {
    fn scenario(&self, [outer, inner]: Candidate) -> ScenarioConfig {
        let mut cfg = self.base.clone();
        cfg.imu = ImuConfig::ideal();
        cfg.initial_state = StateVector::tilted(TUNE_START_TILT);
        cfg.command_script.clear();
        cfg.control.outer = outer;
        cfg.control.inner = inner;
        cfg
    }

    fn score(&self, candidate: Candidate) -> Result<Score> {
        let (_, m) = run(&self.scenario(candidate), None)?;
        Ok(Score {
            value: objective_value(&m, self.spec.objective, self.base.duration, self.spec.fall_penalty),
            fell: m.fell,
        })
    }
}

/// Scores one run. Falling costs the penalty; never settling costs the
/// whole run duration.
pub fn objective_value(m: &RunMetrics, objective: Objective, duration: f64, penalty: f64) -> f64 {
    if m.fell {
        return penalty;
    }
    match objective {
        Objective::SettlingTime if m.settled => m.settling_time.unwrap_or(duration),
        Objective::SettlingTime => duration,
        Objective::Itae => m.itae,
    }
}

/// Searches for gains on `base` (its noise, start and script are replaced).
pub fn tune(base: &ScenarioConfig, spec: &TuneSpec) -> Result<TuneResult> {
    spec.validate()?;
    base.validate()?;
    let eval = Evaluator { base, spec };
    let result = match spec.search {
        Search::Grid => grid(&eval),
        Search::CoordinateDescent => descent(&eval),
    }?;
    if result.all_fell {
        log::warn!("every candidate fell; returning the least penalized gains");
    }
    Ok(result)
}

fn axis_values(axes: &[GainAxis; 3]) -> [Vec<f64>; 3] {
    [axes[0].values(), axes[1].values(), axes[2].values()]
}

fn product(v: &[Vec<f64>; 3]) -> Vec<PidGains> {
    let mut out = Vec::with_capacity(v[0].len() * v[1].len() * v[2].len());
    for &kp in &v[0] {
        for &ki in &v[1] {
            for &kd in &v[2] {
                out.push(PidGains::new(kp, ki, kd));
            }
        }
    }
    out
}

fn grid(eval: &Evaluator<'_>) -> Result<TuneResult> {
    let spec = eval.spec;
    let current = [eval.base.control.outer, eval.base.control.inner];
    let outer = product(&axis_values(&spec.outer));
    let inner = product(&axis_values(&spec.inner));
    // Lexicographic order: outer gains first, then inner.
    let candidates: Vec<Candidate> = match spec.target {
        TuneTarget::OuterLoop => outer.iter().map(|&o| [o, current[1]]).collect(),
        TuneTarget::InnerLoop => inner.iter().map(|&i| [current[0], i]).collect(),
        TuneTarget::Both => outer.iter().flat_map(|&o| inner.iter().map(move |&i| [o, i])).collect(),
    };
    let scores = candidates
        .par_iter()
        .map(|&c| eval.score(c))
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if s.value < scores[best].value {
            best = k;
        }
    }
    Ok(TuneResult {
        outer: candidates[best][0],
        inner: candidates[best][1],
        objective: scores[best].value,
        all_fell: scores.iter().all(|s| s.fell),
        evaluations: scores.len(),
        pass_history: Vec::new(),
    })
}

fn set_coord(c: &mut Candidate, (lp, g): (usize, usize), v: f64) {
    let gains = &mut c[lp];
    match g {
        0 => gains.kp = v,
        1 => gains.ki = v,
        _ => gains.kd = v,
    }
}

fn descent(eval: &Evaluator<'_>) -> Result<TuneResult> {
    let spec = eval.spec;
    let loops: &[usize] = match spec.target {
        TuneTarget::OuterLoop => &[0],
        TuneTarget::InnerLoop => &[1],
        TuneTarget::Both => &[0, 1],
    };
    let axes: Vec<((usize, usize), Vec<f64>)> = loops
        .iter()
        .flat_map(|&lp| {
            let a = if lp == 0 { &spec.outer } else { &spec.inner };
            (0..3).map(move |g| ((lp, g), a[g].values()))
        })
        .collect();

    let mut point: Candidate = [eval.base.control.outer, eval.base.control.inner];
    let first = eval.score(point)?;
    let mut best = first.value;
    let mut any_stood = !first.fell;
    let mut evaluations = 1;
    let mut history = Vec::new();

    for _ in 0..spec.max_passes {
        let pass_start = best;
        for (coord, values) in &axes {
            let trials: Vec<Candidate> = values
                .iter()
                .map(|&v| {
                    let mut c = point;
                    set_coord(&mut c, *coord, v);
                    c
                })
                .collect();
            let scores = trials
                .par_iter()
                .map(|&c| eval.score(c))
                .collect::<Result<Vec<_>>>()?;
            evaluations += scores.len();
            any_stood |= scores.iter().any(|s| !s.fell);
            for (c, s) in trials.iter().zip(&scores) {
                if s.value < best {
                    best = s.value;
                    point = *c;
                }
            }
        }
        history.push(best);
        if pass_start - best <= DESCENT_TOLERANCE {
            break;
        }
    }

    Ok(TuneResult {
        outer: point[0],
        inner: point[1],
        objective: best,
        all_fell: !any_stood,
        evaluations,
        pass_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_base() -> ScenarioConfig {
        let mut cfg = ScenarioConfig {
            duration: 3.0,
            ..Default::default()
        };
        cfg.control.outer = PidGains::new(160.0, 3000.0, 0.2);
        cfg.control.inner = PidGains::new(0.0045, 0.005, 0.0);
        cfg
    }

    fn single(v: f64) -> GainAxis {
        GainAxis::new(v, v + 1.0, 1)
    }

    #[test]
    fn axis_values_span_bounds() {
        assert_eq!(GainAxis::new(1.0, 3.0, 3).values(), vec![1.0, 2.0, 3.0]);
        assert_eq!(GainAxis::new(0.1, 0.7, 1).values(), vec![0.1]);
        let v = GainAxis::new(0.0, 1.0, 7).values();
        assert_eq!((v[0], v[6]), (0.0, 1.0));
        assert!("1:2".parse::<GainAxis>().unwrap().points == 5);
        assert_eq!("1:2:4".parse::<GainAxis>().unwrap(), GainAxis::new(1.0, 2.0, 4));
        assert!("1".parse::<GainAxis>().is_err());
    }

    #[test]
    fn bad_spec_rejected() {
        let mut spec = TuneSpec::default();
        spec.outer[0] = GainAxis::new(5.0, 5.0, 3);
        assert!(spec.validate().is_err());
        spec.outer[0] = GainAxis::new(1.0, 5.0, 0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn one_point_grid_returns_it() {
        let spec = TuneSpec {
            outer: [single(120.0), single(2500.0), single(0.3)],
            ..Default::default()
        };
        let r = tune(&short_base(), &spec).unwrap();
        assert_eq!(r.outer, PidGains::new(120.0, 2500.0, 0.3));
        assert_eq!(r.inner, short_base().control.inner);
        assert_eq!(r.evaluations, 1);
        assert!(!r.all_fell);
    }

    #[test]
    fn falling_candidate_loses() {
        // kp = 0 cannot hold the body up; kp = 160 can.
        let spec = TuneSpec {
            outer: [GainAxis::new(0.0, 160.0, 2), single(3000.0), single(0.2)],
            ..Default::default()
        };
        let r = tune(&short_base(), &spec).unwrap();
        assert_eq!(r.outer.kp, 160.0);
        assert!(r.objective < 2.0);
        assert!(!r.all_fell);
    }

    #[test]
    fn all_fell_is_reported() {
        let spec = TuneSpec {
            outer: [single(0.0), single(0.0), single(0.0)],
            ..Default::default()
        };
        let r = tune(&short_base(), &spec).unwrap();
        assert!(r.all_fell);
        assert_eq!(r.objective, DEFAULT_FALL_PENALTY);
    }

    #[test]
    fn ties_go_to_the_smallest_gains() {
        // Gains this small all fall, so every score ties at the penalty.
        let spec = TuneSpec {
            outer: [GainAxis::new(0.0, 1.0, 2), GainAxis::new(0.0, 1.0, 2), single(0.0)],
            ..Default::default()
        };
        let r = tune(&short_base(), &spec).unwrap();
        assert!(r.all_fell);
        assert_eq!(r.outer, PidGains::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn descent_never_gets_worse() {
        let mut base = short_base();
        base.control.outer = PidGains::new(80.0, 1500.0, 0.5);
        let spec = TuneSpec {
            search: Search::CoordinateDescent,
            objective: Objective::Itae,
            outer: [
                GainAxis::new(60.0, 200.0, 4),
                GainAxis::new(1000.0, 4000.0, 4),
                GainAxis::new(0.0, 0.6, 3),
            ],
            max_passes: 4,
            ..Default::default()
        };
        let start = objective_value(
            &run(&Evaluator { base: &base, spec: &spec }.scenario([base.control.outer, base.control.inner]), None)
                .unwrap()
                .1,
            Objective::Itae,
            base.duration,
            spec.fall_penalty,
        );
        let r = tune(&base, &spec).unwrap();
        assert!(!r.pass_history.is_empty());
        assert!(r.pass_history[0] <= start);
        assert!(r.pass_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*r.pass_history.last().unwrap(), r.objective);
    }

    #[test]
    fn tuning_is_deterministic() {
        let spec = TuneSpec {
            outer: [GainAxis::new(100.0, 200.0, 3), GainAxis::new(2000.0, 4000.0, 2), single(0.2)],
            ..Default::default()
        };
        let a = tune(&short_base(), &spec).unwrap();
        let b = tune(&short_base(), &spec).unwrap();
        assert_eq!(a, b);
    }
}
