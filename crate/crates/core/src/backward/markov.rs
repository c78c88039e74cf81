//! Backward sweep for models whose rates depend on calendar time only.
//!
//! Between nodes the state-wise values solve the linear system
//! `V' = A(t) V + f(t)` with
//! `A_ii = r_i + Σ_j μ_ij`, `A_ij = -μ_ij`, `f_i = -β_i - Σ_j μ_ij b_ij`.
//! At a node, atoms are applied through
//! `V^i(t-)(1 + ΔΦ^i) = V^i(t) + ΔB^i + Σ_j (b^{ij} + V^j(t) - V^i(t)) ΔΛ^{ij}`,
//! and at a reset point the forced jump fixes `V^i(t-)` as the pole-weighted
//! average of `b^{ij}(t-) + V^j(t-)`.

use super::{ReserveField, Scheme, SolveOptions, Terminal, TimeGrid};
use crate::error::{Error, Result};
use crate::measure::{MeasureRef, PiecewiseFn, ShiftedRate};
use crate::model::{Dependence, Model};
use nalgebra::{DMatrix, DVector};
use std::borrow::Cow;
use std::ops::SubAssign;

struct Coefficients<'a> {
    n: usize,
    /// Per source index: (destination index, rate view, transition payment).
    rows: Vec<Vec<(usize, MeasureRef<'a>, Option<&'a PiecewiseFn>)>>,
    interest: Vec<Option<MeasureRef<'a>>>,
    sojourn: Vec<Option<MeasureRef<'a>>>,
    /// Reset points per source index with (destination index, pole strength).
    resets: Vec<Vec<ResetPoint>>,
}

type ResetPoint = (f64, Vec<(usize, f64)>);

impl<'a> Coefficients<'a> {
    fn new(model: &'a Model, with_payments: bool) -> Result<Self> {
        let n = model.n_states();
        let mut rows = vec![Vec::new(); n];
        let mut resets: Vec<Vec<ResetPoint>> = vec![Vec::new(); n];
        for (&(i, j), rate) in &model.lambda {
            if rate.curve.is_zero() {
                continue;
            }
            if rate.dependence != Dependence::Markov {
                return Err(Error::UnsupportedRegime(format!(
                    "rate {i}->{j} is not a calendar-time rate"
                )));
            }
            let (a, b) = (model.index(i)?, model.index(j)?);
            let pay = if with_payments {
                model.cashflow.transition.get(&(i, j))
            } else {
                None
            };
            rows[a].push((b, rate.curve.view(), pay));
            let shifted = ShiftedRate::new(Cow::Borrowed(&rate.curve), 0.0);
            for &r in &rate.curve.resets {
                let c = shifted.pole_strength_at(r);
                match resets[a].iter_mut().find(|(t, _)| *t == r) {
                    Some((_, v)) => v.push((b, c)),
                    None => resets[a].push((r, vec![(b, c)])),
                }
            }
        }
        let labels = model.labels();
        let interest = labels
            .iter()
            .map(|&l| (with_payments && model.phi.contains_key(&l)).then(|| model.interest(l)))
            .collect();
        let sojourn = labels
            .iter()
            .map(|&l| (with_payments && model.cashflow.sojourn.contains_key(&l)).then(|| model.sojourn(l)))
            .collect();
        Ok(Self {
            n,
            rows,
            interest,
            sojourn,
            resets,
        })
    }

    fn fixed_points(&self, end: f64) -> Vec<f64> {
        let mut pts = Vec::new();
        let measures = self
            .rows
            .iter()
            .flatten()
            .map(|(_, m, _)| m)
            .chain(self.interest.iter().chain(&self.sojourn).flatten());
        for m in measures {
            pts.extend(m.breakpoints(0.0, end));
            pts.extend(m.atoms_in(0.0, end).iter().map(|a| a.at));
        }
        for (_, _, b) in self.rows.iter().flatten() {
            if let Some(b) = b {
                pts.extend(b.breakpoints(0.0, end));
            }
        }
        pts
    }

    fn reset_points(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.resets.iter().flatten().map(|(r, _)| *r).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn eval(&self, t: f64, left: bool) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n;
        let mut a = DMatrix::zeros(n, n);
        let mut f = DVector::zeros(n);
        let val = |m: &MeasureRef<'_>| if left { m.density_left(t) } else { m.density_at(t) };
        for i in 0..n {
            if let Some(m) = &self.interest[i] {
                a[(i, i)] += val(m);
            }
            if let Some(m) = &self.sojourn[i] {
                f[i] -= val(m);
            }
            for (j, m, b) in &self.rows[i] {
                let mu = val(m);
                if mu == 0.0 {
                    continue;
                }
                a[(i, i)] += mu;
                a[(i, *j)] -= mu;
                if let Some(b) = b {
                    let bv = if left { b.value_left(t) } else { b.value(t) };
                    f[i] -= mu * bv;
                }
            }
        }
        (a, f)
    }

    fn constant_on(&self, t0: f64, t1: f64) -> bool {
        let mid = 0.5 * (t0 + t1);
        let fn_const = |f: &PiecewiseFn, off: f64| f.shape_at(mid - off).constant_on(t0 - off, t1 - off).is_some();
        self.rows.iter().flatten().all(|(_, m, b)| {
            fn_const(m.density, m.offset) && b.is_none_or(|b| fn_const(b, 0.0))
        }) && self
            .interest
            .iter()
            .chain(&self.sojourn)
            .flatten()
            .all(|m| fn_const(m.density, m.offset))
    }

    /// Left limits at node `t` from the right values `v`.
    fn node_update(&self, t: f64, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = v.to_vec();
        let mut is_reset = vec![false; n];
        for i in 0..n {
            if self.resets[i].iter().any(|(r, _)| *r == t) {
                is_reset[i] = true;
                continue;
            }
            let mut num = v[i];
            if let Some(m) = &self.sojourn[i] {
                num += m.atom_at(t);
            }
            for (j, m, b) in &self.rows[i] {
                let mass = m.atom_at(t);
                if mass != 0.0 {
                    let bv = b.map_or(0.0, |b| b.value(t));
                    num += (bv + v[*j] - v[i]) * mass;
                }
            }
            let dphi = self.interest[i].as_ref().map_or(0.0, |m| m.atom_at(t));
            out[i] = num / (1.0 + dphi);
        }
        // Forced jumps; reset states referring to other reset states are
        // resolved once those are known (acyclic by validation).
        let mut pending: Vec<usize> = (0..n).filter(|&i| is_reset[i]).collect();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|&i| {
                let (_, poles) = self.resets[i].iter().find(|(r, _)| *r == t).expect("reset");
                if poles.iter().any(|(j, _)| is_reset[*j]) {
                    return true;
                }
                let total: f64 = poles.iter().map(|(_, c)| c).sum();
                let mut acc = 0.0;
                for (j, c) in poles {
                    let bv = self.rows[i]
                        .iter()
                        .find(|(d, _, _)| d == j)
                        .and_then(|(_, _, b)| *b)
                        .map_or(0.0, |b| b.value_left(t));
                    acc += c / total * (bv + out[*j]);
                }
                out[i] = acc;
                is_reset[i] = false;
                false
            });
            if pending.len() == before {
                // Unresolvable cycle: validation rejects such models.
                break;
            }
        }
        out
    }
}

const SQRT3_6: f64 = 0.288_675_134_594_812_9;

struct Stepper {
    cache: Option<(DMatrix<f64>, DVector<f64>, f64, DMatrix<f64>)>,
}

impl Stepper {
    fn exact(&mut self, a: &DMatrix<f64>, f: &DVector<f64>, dt: f64, y1: &DVector<f64>) -> DVector<f64> {
        let n = a.nrows();
        let hit = matches!(&self.cache, Some((ca, cf, cdt, _)) if ca == a && cf == f && *cdt == dt);
        if !hit {
            let mut m = DMatrix::zeros(n + 1, n + 1);
            m.view_mut((0, 0), (n, n)).copy_from(&(a * (-dt)));
            m.view_mut((0, n), (n, 1)).copy_from(&(f * (-dt)));
            self.cache = Some((a.clone(), f.clone(), dt, m.exp()));
        }
        let e = &self.cache.as_ref().expect("cache").3;
        let mut y = DVector::zeros(n + 1);
        y.rows_mut(0, n).copy_from(y1);
        y[n] = 1.0;
        (e * y).rows(0, n).into_owned()
    }
}

fn solve_linear(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    m.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular step matrix in backward solver".into()))
}

fn gauss_step(c: &Coefficients<'_>, t0: f64, t1: f64, y1: &DVector<f64>) -> Result<DVector<f64>> {
    let n = c.n;
    let h = t0 - t1;
    let (ta, tb) = (t1 + (0.5 - SQRT3_6) * h, t1 + (0.5 + SQRT3_6) * h);
    // h < 0, so ta is the node nearer t1
    let (a1, f1) = c.eval(ta, false);
    let (a2, f2) = c.eval(tb, false);
    let (c11, c12, c21, c22) = (0.25, 0.25 - SQRT3_6, 0.25 + SQRT3_6, 0.25);
    let mut m = DMatrix::identity(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).sub_assign(&(&a1 * (h * c11)));
    m.view_mut((0, n), (n, n)).sub_assign(&(&a1 * (h * c12)));
    m.view_mut((n, 0), (n, n)).sub_assign(&(&a2 * (h * c21)));
    m.view_mut((n, n), (n, n)).sub_assign(&(&a2 * (h * c22)));
    let mut rhs = DVector::zeros(2 * n);
    rhs.rows_mut(0, n).copy_from(&(&a1 * y1 + f1));
    rhs.rows_mut(n, n).copy_from(&(&a2 * y1 + f2));
    let k = solve_linear(m, rhs)?;
    Ok(y1 + (k.rows(0, n) + k.rows(n, n)) * (0.5 * h))
}

fn euler_step(c: &Coefficients<'_>, t0: f64, t1: f64, y1: &DVector<f64>) -> Result<DVector<f64>> {
    let dt = t1 - t0;
    let (a, f) = c.eval(t0, false);
    let m = DMatrix::identity(c.n, c.n) + a * dt;
    solve_linear(m, y1 - f * dt)
}

/// Solve backward; `target = Some((state index, time))` gives probabilities.
pub(super) fn solve(model: &Model, opts: &SolveOptions, target: Option<(usize, f64)>) -> Result<ReserveField> {
    let with_payments = target.is_none();
    let c = Coefficients::new(model, with_payments)?;
    let n = c.n;
    let end = target.map_or(model.horizon, |(_, t)| t);
    let grid = TimeGrid::build(end, opts.h, &c.fixed_points(end), &c.reset_points());
    let times = grid.points;
    let nodes = times.len();

    let mut right = vec![vec![0.0; n]; nodes];
    let mut left = vec![vec![0.0; n]; nodes];
    let mut y = DVector::zeros(n);
    if let Some((k, _)) = target {
        y[k] = 1.0;
    }
    right[nodes - 1] = y.as_slice().to_vec();
    left[nodes - 1] = c.node_update(times[nodes - 1], y.as_slice());
    let mut stepper = Stepper { cache: None };
    for k in (0..nodes - 1).rev() {
        let (t0, t1) = (times[k], times[k + 1]);
        let y1 = DVector::from_column_slice(&left[k + 1]);
        let y0 = match opts.scheme {
            Scheme::ImplicitEuler => euler_step(&c, t0, t1, &y1)?,
            Scheme::ExponentialGauss if c.constant_on(t0, t1) => {
                let (a, f) = c.eval(0.5 * (t0 + t1), false);
                stepper.exact(&a, &f, t1 - t0, &y1)
            }
            Scheme::ExponentialGauss => gauss_step(&c, t0, t1, &y1)?,
        };
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Internal(format!("non-finite value on step ({t0}, {t1}]")));
        }
        right[k] = y0.as_slice().to_vec();
        left[k] = if k > 0 {
            c.node_update(t0, &right[k])
        } else {
            right[k].clone()
        };
    }

    let slope = |t: f64, v: &[f64], side_left: bool| -> Vec<f64> {
        let (a, f) = c.eval(t, side_left);
        let d = a * DVector::from_column_slice(v) + f;
        d.as_slice().to_vec()
    };
    let slope_right = (0..nodes).map(|k| slope(times[k], &right[k], false)).collect();
    let slope_left = (0..nodes).map(|k| slope(times[k], &left[k], true)).collect();

    let terminal = match target {
        None => Terminal::Reserve { horizon: end },
        Some((k, t)) => Terminal::Probability {
            state: model.labels()[k],
            time: t,
        },
    };
    Ok(ReserveField {
        regime: model.regime(),
        terminal,
        labels: model.labels().to_vec(),
        times,
        right,
        left,
        slope_right,
        slope_left,
        durations: None,
    })
}
