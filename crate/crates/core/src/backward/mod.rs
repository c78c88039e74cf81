//! Backward solvers for transition probabilities and prospective reserves.

mod discrete;
mod markov;
mod residual;
mod semi;

pub use discrete::{kolmogorov_discrete_recursion, thiele_discrete_recursion};
pub use residual::{thiele_residual, FnCandidate, ReserveCandidate, ResidualReport};

use crate::error::{Error, Result};
use crate::measure::{PiecewiseFn, Segment, Shape};
use crate::model::{Model, Regime};
use serde::Serialize;
use std::fmt::Write as _;

/// Time stepping used between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact matrix exponential on steps with constant coefficients,
    /// two-stage Gauss collocation (order 4) elsewhere.
    #[default]
    ExponentialGauss,
    /// First-order implicit Euler on every step.
    ImplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Largest continuous step.
    pub h: f64,
    pub scheme: Scheme,
}

impl SolveOptions {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            scheme: Scheme::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Input(format!("step h must be positive, got {}", self.h)));
        }
        Ok(())
    }
}

/// Increasing time points on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    pub points: Vec<f64>,
    pub h: f64,
}

impl TimeGrid {
    /// Grid through `0`, `end`, every fixed point in `(0, end)`, refined
    /// geometrically towards each reset and filled to step at most `h`.
    pub fn build(end: f64, h: f64, fixed: &[f64], resets: &[f64]) -> Self {
        let mut pts: Vec<f64> = fixed
            .iter()
            .chain(resets)
            .copied()
            .filter(|&x| x > 0.0 && x < end)
            .collect();
        pts.push(0.0);
        pts.push(end);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut refined = Vec::new();
        for &r in resets.iter().filter(|&&r| r > 0.0 && r <= end) {
            let prev = pts
                .iter()
                .copied()
                .filter(|&x| x < r)
                .fold(0.0, f64::max);
            let mut d = h.min(0.5 * (r - prev));
            let floor = 1e-13 * r.abs().max(1.0);
            while d > floor {
                refined.push(r - d);
                d *= 0.5;
            }
        }
        pts.extend(refined);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut out = Vec::with_capacity(pts.len());
        for w in pts.windows(2) {
            let n = ((w[1] - w[0]) / h - 1e-9).ceil().max(1.0) as usize;
            for k in 0..n {
                out.push(w[0] + (w[1] - w[0]) * k as f64 / n as f64);
            }
        }
        out.push(end);
        Self { points: out, h }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Boundary condition a field was solved for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    /// Prospective reserve with `V(T) = 0`.
    Reserve { horizon: f64 },
    /// `P(Z(T) = state)`.
    Probability { state: usize, time: f64 },
}

/// Values on the duration-augmented grid of the semi-Markov solver.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationValues {
    pub h: f64,
    /// `right[k][i][m] = V^i(t_k, m h)` for `m <= k`.
    pub right: Vec<Vec<Vec<f64>>>,
    /// Left limits along the characteristic, `V^i(t_k-, (m h)-)`.
    pub left: Vec<Vec<Vec<f64>>>,
}

/// Solver output: `V^i(t)` (or `V^i(t, u)`) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReserveField {
    pub regime: Regime,
    pub terminal: Terminal,
    pub labels: Vec<usize>,
    pub times: Vec<f64>,
    /// `right[k][i] = V^i(t_k)`; for semi-Markov fields the duration-0 value.
    pub right: Vec<Vec<f64>>,
    /// `left[k][i] = V^i(t_k-)`.
    pub left: Vec<Vec<f64>>,
    /// Derivatives just after and just before each node (may be non-finite).
    pub slope_right: Vec<Vec<f64>>,
    pub slope_left: Vec<Vec<f64>>,
    pub durations: Option<DurationValues>,
}

fn hermite(t0: f64, y0: f64, d0: f64, t1: f64, y1: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    if !(d0.is_finite() && d1.is_finite()) {
        return y0 + s * (y1 - y0);
    }
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

impl ReserveField {
    pub fn state_index(&self, label: usize) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::Input(format!("unknown state {label}")))
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    fn interval(&self, t: f64) -> usize {
        self.times
            .partition_point(|&x| x <= t)
            .saturating_sub(1)
            .min(self.times.len().saturating_sub(2))
    }

    fn interp(&self, i: usize, t: f64) -> f64 {
        let k = self.interval(t);
        hermite(
            self.times[k],
            self.right[k][i],
            self.slope_right[k][i],
            self.times[k + 1],
            self.left[k + 1][i],
            self.slope_left[k + 1][i],
            t,
        )
    }

    /// Right-continuous value of state index `i` at `t` (time-only part).
    pub fn value_idx(&self, i: usize, t: f64) -> f64 {
        if t >= self.end() {
            return self.right.last().map_or(0.0, |r| r[i]);
        }
        if t <= self.times[0] {
            return self.right[0][i];
        }
        let k = self.times.partition_point(|&x| x < t);
        if k < self.times.len() && self.times[k] == t {
            return self.right[k][i];
        }
        self.interp(i, t)
    }

    /// Left limit of state index `i` at `t`.
    pub fn value_left_idx(&self, i: usize, t: f64) -> f64 {
        if t > self.end() {
            return self.right.last().map_or(0.0, |r| r[i]);
        }
        if t <= self.times[0] {
            return self.right[0][i];
        }
        let k = self.times.partition_point(|&x| x < t);
        if k < self.times.len() && self.times[k] == t {
            return self.left[k][i];
        }
        self.interp(i, t)
    }

    /// `V^i(t)` for state label `i` (duration 0 for semi-Markov fields).
    pub fn value(&self, label: usize, t: f64) -> Result<f64> {
        Ok(self.value_idx(self.state_index(label)?, t))
    }

    /// `V^i(t, u)` with duration `u` (semi-Markov fields); other fields ignore `u`.
    pub fn value_with_duration(&self, label: usize, t: f64, u: f64) -> Result<f64> {
        let i = self.state_index(label)?;
        match &self.durations {
            None => Ok(self.value_idx(i, t)),
            Some(d) => Ok(duration_interp(d, i, t, u, false)),
        }
    }

    pub fn value_with_duration_left(&self, label: usize, t: f64, u: f64) -> Result<f64> {
        let i = self.state_index(label)?;
        match &self.durations {
            None => Ok(self.value_left_idx(i, t)),
            Some(d) => Ok(duration_interp(d, i, t, u, true)),
        }
    }

    /// Time-only values of one state as a piecewise cubic that reproduces
    /// [`value`](Self::value) and its left limits, extended by `V(T)` beyond.
    pub fn state_function(&self, label: usize) -> Result<PiecewiseFn> {
        let i = self.state_index(label)?;
        let mut segs = Vec::with_capacity(self.times.len());
        for k in 0..self.times.len().saturating_sub(1) {
            let (t0, t1) = (self.times[k], self.times[k + 1]);
            let h = t1 - t0;
            let (y0, y1) = (self.right[k][i], self.left[k + 1][i]);
            let (d0, d1) = (self.slope_right[k][i], self.slope_left[k + 1][i]);
            let coeffs = if d0.is_finite() && d1.is_finite() {
                let s = (y1 - y0) / h;
                [y0, d0, (3.0 * s - 2.0 * d0 - d1) / h, (d0 + d1 - 2.0 * s) / (h * h)]
            } else {
                [y0, (y1 - y0) / h, 0.0, 0.0]
            };
            segs.push(Segment::new(t0, t1, Shape::Cubic { origin: t0, coeffs }));
        }
        let end = self.end();
        let last = self.right.last().map_or(0.0, |r| r[i]);
        segs.push(Segment::new(end, end + 1.0, Shape::Constant(last)));
        Ok(PiecewiseFn::new(segs))
    }

    /// CSV `state,time[,duration],value` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.durations {
            None => {
                out.push_str("state,time,value\n");
                for (i, label) in self.labels.iter().enumerate() {
                    for (k, t) in self.times.iter().enumerate() {
                        let _ = writeln!(out, "{label},{},{}", fmt_num(*t), fmt_num(self.right[k][i]));
                    }
                }
            }
            Some(d) => {
                out.push_str("state,time,duration,value\n");
                for (i, label) in self.labels.iter().enumerate() {
                    for (k, t) in self.times.iter().enumerate() {
                        for (m, v) in d.right[k][i].iter().enumerate() {
                            let _ = writeln!(
                                out,
                                "{label},{},{},{}",
                                fmt_num(*t),
                                fmt_num(m as f64 * d.h),
                                fmt_num(*v)
                            );
                        }
                    }
                }
            }
        }
        out
    }
}

/// Float formatting with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn duration_interp(d: &DurationValues, i: usize, t: f64, u: f64, left: bool) -> f64 {
    let n = d.right.len() - 1;
    let kt = (t / d.h).clamp(0.0, n as f64);
    let entry = t - u;
    // Grid characteristics have entry times j*h; interpolate along the two
    // neighbouring ones in time, then across them.
    let at = |k: usize, c: f64, use_left: bool| -> f64 {
        let m = (k as f64 - c / d.h).round().clamp(0.0, k as f64) as usize;
        if use_left {
            d.left[k][i][m]
        } else {
            d.right[k][i][m]
        }
    };
    let k0 = kt.floor() as usize;
    let w = kt - k0 as f64;
    let along = |c: f64| -> f64 {
        if w <= 1e-12 || k0 == n {
            return at(k0, c, left);
        }
        (1.0 - w) * at(k0, c, false) + w * at(k0 + 1, c, true)
    };
    let c0 = (entry / d.h).floor() * d.h;
    let wc = ((entry - c0) / d.h).clamp(0.0, 1.0);
    if wc <= 1e-12 {
        return along(c0);
    }
    (1.0 - wc) * along(c0) + wc * along(c0 + d.h)
}

fn reject_reserve_dependence(model: &Model) -> Result<()> {
    if model.has_reserve_dependence() {
        return Err(Error::Precondition(
            "model has reserve-dependent payments; resolve them with transform_reserve_dependent first"
                .into(),
        ));
    }
    Ok(())
}

/// Prospective reserves `V^i(t)` on `[0, T]`.
pub fn thiele_solve(model: &Model, opts: &SolveOptions) -> Result<ReserveField> {
    opts.check()?;
    reject_reserve_dependence(model)?;
    match model.regime() {
        Regime::Markov | Regime::Discrete => markov::solve(model, opts, None),
        Regime::SemiMarkov => semi::solve(model, opts, None),
        Regime::PathDependent => Err(unsupported()),
    }
}

/// Transition probabilities `P(Z(T) = k | Z(t) = i)` for all `i`.
pub fn kolmogorov_solve(model: &Model, target_state: usize, target_time: f64, opts: &SolveOptions) -> Result<ReserveField> {
    opts.check()?;
    let k = model.index(target_state)?;
    if !(target_time > 0.0 && target_time.is_finite()) {
        return Err(Error::Input(format!("target time must be positive, got {target_time}")));
    }
    match model.regime() {
        Regime::Markov | Regime::Discrete => markov::solve(model, opts, Some((k, target_time))),
        Regime::SemiMarkov => semi::solve(model, opts, Some((k, target_time))),
        Regime::PathDependent => Err(unsupported()),
    }
}

fn unsupported() -> Error {
    Error::UnsupportedRegime(
        "path-dependent rates have no grid solver; use the Monte Carlo estimators".into(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_fixed_points_and_respects_h() {
        let g = TimeGrid::build(10.0, 0.3, &[1.0, 2.5], &[]);
        assert_eq!(g.points[0], 0.0);
        assert_eq!(*g.points.last().unwrap(), 10.0);
        assert!(g.points.contains(&1.0) && g.points.contains(&2.5));
        assert!(g.points.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.3 + 1e-12));
    }

    #[test]
    fn grid_refines_towards_reset() {
        let g = TimeGrid::build(2.0, 0.1, &[], &[1.0]);
        let before: Vec<f64> = g.points.iter().copied().filter(|&x| x < 1.0).collect();
        let gap = 1.0 - before.last().unwrap();
        assert!(gap < 1e-12, "{gap}");
    }

    #[test]
    fn state_function_matches_field() {
        use crate::measure::RateCurve;
        use crate::model::CumulativeRate;
        let m = Model::new(vec![0, 1], 5.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.2, 5.0)))
            .with_transition(0, 1, PiecewiseFn::constant(1.0, 5.0));
        let f = thiele_solve(&m, &SolveOptions::new(0.7)).unwrap();
        let g = f.state_function(0).unwrap();
        for t in [0.0, 0.3, 1.1, 2.45, 4.99, 5.0] {
            assert!((g.value(t) - f.value(0, t).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let f = |t: f64| t * t * t - t;
        let d = |t: f64| 3.0 * t * t - 1.0;
        let v = hermite(1.0, f(1.0), d(1.0), 2.0, f(2.0), d(2.0), 1.3);
        assert!((v - f(1.3)).abs() < 1e-14);
    }
}
