//! Backward sweep for models with duration-dependent rates.
//!
//! Values `V^i(t, u)` live on the grid `t_k = k h`, `u_m = m h` with
//! `m <= k`. Along a characteristic `(t_k + s, u_m + s)` the value solves a
//! scalar linear equation whose only coupling is through the entry values
//! `W_j(t) = V^j(t, 0)`. On each cell `W_j` is replaced by the polynomial
//! through the unknown `W_j(t_k)` and up to three later nodes (a slope
//! taken from the equation itself stands in where an atom or the horizon
//! cuts the node list short), so the
//! duration-zero values at level `k` follow from an `n x n` linear solve and
//! the remaining durations by direct quadrature.

use super::{DurationValues, ReserveField, SolveOptions, Terminal};
use crate::error::{Error, Result};
use crate::measure::quad::gauss_legendre_unit;
use crate::measure::{MeasureRef, PiecewiseFn, RateCurve};
use crate::model::{Dependence, Model};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

const MAX_REFINE: usize = 256;

struct Edge<'a> {
    dest: usize,
    curve: &'a RateCurve,
    on_duration: bool,
    pay: Option<&'a PiecewiseFn>,
}

impl<'a> Edge<'a> {
    fn view(&self, entry: f64) -> MeasureRef<'a> {
        MeasureRef {
            density: &self.curve.density,
            atoms: &self.curve.atoms,
            offset: if self.on_duration { entry } else { 0.0 },
        }
    }
}

struct Setup<'a> {
    n: usize,
    edges: Vec<Vec<Edge<'a>>>,
    interest: Vec<Option<MeasureRef<'a>>>,
    sojourn: Vec<Option<MeasureRef<'a>>>,
    h: f64,
    steps: usize,
    /// Some calendar-time atom sits on node `k`.
    atom_node: Vec<bool>,
}

fn on_grid(x: f64, h: f64) -> bool {
    let q = x / h;
    (q - q.round()).abs() <= 1e-9 * q.abs().max(1.0)
}

impl<'a> Setup<'a> {
    fn new(model: &'a Model, opts: &SolveOptions, end: f64, with_payments: bool) -> Result<Self> {
        let n = model.n_states();
        let mut edges: Vec<Vec<Edge<'a>>> = (0..n).map(|_| Vec::new()).collect();
        for (&(i, j), rate) in &model.lambda {
            if rate.curve.is_zero() {
                continue;
            }
            let on_duration = match rate.dependence {
                Dependence::Markov => false,
                Dependence::SemiMarkov => true,
                Dependence::PathDependent(_) => {
                    return Err(Error::UnsupportedRegime(format!("rate {i}->{j} is path-dependent")))
                }
            };
            if !rate.curve.resets.is_empty() || !rate.curve.density.is_bounded() {
                return Err(Error::UnsupportedRegime(format!(
                    "rate {i}->{j} has a reset point; the duration grid solver needs bounded rates"
                )));
            }
            edges[model.index(i)?].push(Edge {
                dest: model.index(j)?,
                curve: &rate.curve,
                on_duration,
                pay: if with_payments {
                    model.cashflow.transition.get(&(i, j))
                } else {
                    None
                },
            });
        }
        let labels = model.labels();
        let interest: Vec<_> = labels
            .iter()
            .map(|&l| (with_payments && model.phi.contains_key(&l)).then(|| model.interest(l)))
            .collect();
        let sojourn: Vec<_> = labels
            .iter()
            .map(|&l| (with_payments && model.cashflow.sojourn.contains_key(&l)).then(|| model.sojourn(l)))
            .collect();

        let mut atoms: Vec<f64> = Vec::new();
        for row in &edges {
            for e in row {
                atoms.extend(e.curve.atoms.iter().filter(|a| a.mass != 0.0).map(|a| a.at));
            }
        }
        for m in interest.iter().chain(&sojourn).flatten() {
            atoms.extend(m.atoms.iter().filter(|a| a.mass != 0.0).map(|a| a.at));
        }
        atoms.retain(|&a| a > 0.0 && a <= end);
        let base = (end / opts.h).ceil().max(1.0) as usize;
        let steps = (base..=base * MAX_REFINE)
            .find(|&s| atoms.iter().all(|&a| on_grid(a, end / s as f64)))
            .ok_or_else(|| {
                Error::Input(format!(
                    "atoms at {atoms:?} cannot be aligned with a uniform grid on [0, {end}]"
                ))
            })?;
        let h = end / steps as f64;

        let mut atom_node = vec![false; steps + 1];
        for k in 1..=steps {
            let t = k as f64 * h;
            let hit = |m: &MeasureRef<'_>| m.atoms.iter().any(|a| a.mass != 0.0 && (a.at - t).abs() <= 1e-9 * h);
            atom_node[k] = edges.iter().flatten().any(|e| !e.on_duration && hit(&e.view(0.0)))
                || interest.iter().chain(&sojourn).flatten().any(hit);
        }
        Ok(Self {
            n,
            edges,
            interest,
            sojourn,
            h,
            steps,
            atom_node,
        })
    }

    fn t(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    /// Atom mass of `m` at grid node `t` (tolerant to rounding of `k h`).
    fn atom_near(&self, m: &MeasureRef<'_>, t: f64) -> f64 {
        m.atoms
            .iter()
            .filter(|a| (a.at + m.offset - t).abs() <= 1e-9 * self.h)
            .map(|a| a.mass)
            .sum()
    }

    /// Left limit at node `k` on the characteristic with duration index `m`.
    fn node_update(&self, k: usize, m: usize, i: usize, v: f64, entry_values: &[f64]) -> f64 {
        let t = self.t(k);
        let entry = self.t(k - m);
        let mut num = v;
        if let Some(b) = &self.sojourn[i] {
            num += self.atom_near(b, t);
        }
        for e in &self.edges[i] {
            if e.on_duration && m == 0 {
                continue;
            }
            let mass = self.atom_near(&e.view(entry), t);
            if mass != 0.0 {
                let b = e.pay.map_or(0.0, |p| p.value(t));
                num += (b + entry_values[e.dest] - v) * mass;
            }
        }
        let r = self.interest[i].as_ref().map_or(0.0, |p| self.atom_near(p, t));
        num / (1.0 + r)
    }
}

/// Integrals along one characteristic cell.
struct CellIntegrals {
    /// `exp(-∫ (r + Σ μ))` over the whole cell.
    decay: f64,
    /// Known part: discounted sojourn and transition payments.
    base: f64,
    /// `coef[e][l]`: weight of interpolation condition `l` of `W_{dest(e)}` for edge `e`.
    coef: Vec<Vec<f64>>,
}

/// Interpolation conditions on a cell, in the scaled variable `τ = (s - t_k) / h`.
#[derive(Clone, Copy)]
enum Condition {
    /// Value at grid node `q` (left limit for `q > k`).
    Value(usize),
    /// Derivative at the left limit of grid node `q`.
    Slope(usize),
}

/// Polynomial basis dual to a list of value/slope conditions.
struct Basis {
    k: usize,
    h: f64,
    /// `coef[p][l]`: coefficient of `τ^p` in basis function `l`.
    coef: DMatrix<f64>,
}

impl Basis {
    fn new(k: usize, h: f64, conds: &[Condition]) -> Self {
        let c = conds.len();
        let mut m = DMatrix::zeros(c, c);
        for (r, cond) in conds.iter().enumerate() {
            for p in 0..c {
                m[(r, p)] = match *cond {
                    Condition::Value(q) => ((q - k) as f64).powi(p as i32),
                    Condition::Slope(q) if p > 0 => p as f64 * ((q - k) as f64).powi(p as i32 - 1),
                    Condition::Slope(_) => 0.0,
                };
            }
        }
        let coef = m.try_inverse().expect("distinct interpolation conditions");
        Self { k, h, coef }
    }

    fn eval(&self, s: f64, out: &mut [f64]) {
        let tau = (s - self.k as f64 * self.h) / self.h;
        for (l, o) in out.iter_mut().enumerate() {
            let mut v = 0.0;
            for p in (0..self.coef.nrows()).rev() {
                v = v * tau + self.coef[(p, l)];
            }
            *o = v;
        }
    }
}

fn cell(setup: &Setup<'_>, i: usize, t0: f64, entry: f64, basis: &Basis) -> CellIntegrals {
    let t1 = t0 + setup.h;
    let edges = &setup.edges[i];
    let views: Vec<MeasureRef<'_>> = edges.iter().map(|e| e.view(entry)).collect();
    let mut cuts = vec![t0, t1];
    for v in views.iter().chain(setup.interest[i].iter()).chain(setup.sojourn[i].iter()) {
        cuts.extend(v.breakpoints(t0, t1));
    }
    for e in edges {
        if let Some(p) = e.pay {
            cuts.extend(p.breakpoints(t0, t1));
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let hazard = |s: f64| -> f64 {
        let mut a = setup.interest[i].as_ref().map_or(0.0, |r| r.continuous(t0, s));
        for v in &views {
            a += v.continuous(t0, s);
        }
        a
    };
    let (gx, gw) = gauss_legendre_unit(4);
    let mut base = 0.0;
    let nb = basis.coef.nrows();
    let mut coef = vec![vec![0.0; nb]; edges.len()];
    let mut values = vec![0.0; nb];
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        for (x, wt) in gx.iter().zip(gw) {
            let s = a + x * len;
            let weight = wt * len * (-hazard(s)).exp();
            if let Some(beta) = &setup.sojourn[i] {
                base += weight * beta.density_at(s);
            }
            basis.eval(s, &mut values);
            for (e, (edge, v)) in edges.iter().zip(&views).enumerate() {
                let mu = v.density_at(s);
                if mu == 0.0 {
                    continue;
                }
                if let Some(p) = edge.pay {
                    base += weight * mu * p.value(s);
                }
                for (c, l) in coef[e].iter_mut().zip(&values) {
                    *c += weight * mu * l;
                }
            }
        }
    }
    CellIntegrals {
        decay: (-hazard(t1)).exp(),
        base,
        coef,
    }
}

pub(super) fn solve(model: &Model, opts: &SolveOptions, target: Option<(usize, f64)>) -> Result<ReserveField> {
    let end = target.map_or(model.horizon, |(_, t)| t);
    let setup = Setup::new(model, opts, end, target.is_none())?;
    let n = setup.n;
    let big_n = setup.steps;

    let mut right: Vec<Vec<Vec<f64>>> = Vec::with_capacity(big_n + 1);
    let mut left: Vec<Vec<Vec<f64>>> = Vec::with_capacity(big_n + 1);
    for k in 0..=big_n {
        right.push(vec![vec![0.0; k + 1]; n]);
        left.push(vec![vec![0.0; k + 1]; n]);
    }
    let mut terminal = vec![0.0; n];
    if let Some((k, _)) = target {
        terminal[k] = 1.0;
    }
    for i in 0..n {
        right[big_n][i].iter_mut().for_each(|v| *v = terminal[i]);
    }
    fill_left(&setup, big_n, &right[big_n], &mut left[big_n]);
    let mut slopes: Vec<Option<Vec<f64>>> = vec![None; big_n + 1];
    slopes[big_n] = entry_slope(&setup, big_n, &left[big_n]);

    for k in (0..big_n).rev() {
        let t0 = setup.t(k);
        // Conditions for W on (t_k, t_{k+1}): values at up to four nodes,
        // stopping after a node with an atom; a slope at the last node
        // replaces missing ones.
        let mut conds = vec![Condition::Value(k), Condition::Value(k + 1)];
        let mut last = k + 1;
        while conds.len() < 4 && last < big_n && !setup.atom_node[last] {
            last += 1;
            conds.push(Condition::Value(last));
        }
        if conds.len() < 4 && slopes[last].is_some() {
            conds.push(Condition::Slope(last));
        }
        let basis = Basis::new(k, setup.h, &conds);
        let known = |j: usize, l: usize| match conds[l] {
            Condition::Value(q) => left[q][j][0],
            Condition::Slope(q) => setup.h * slopes[q].as_ref().expect("slope present")[j],
        };
        let nc = conds.len();

        let compute = |m: usize| -> Vec<CellIntegrals> {
            let entry = setup.t(k - m);
            (0..n).map(|i| cell(&setup, i, t0, entry, &basis)).collect()
        };

        // Duration zero: (I - Γ) x = rhs.
        let c0 = compute(0);
        let mut g = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for i in 0..n {
            let ci = &c0[i];
            let mut acc = ci.decay * left[k + 1][i][1] + ci.base;
            for (e, edge) in setup.edges[i].iter().enumerate() {
                g[(i, edge.dest)] -= ci.coef[e][0];
                for l in 1..nc {
                    acc += ci.coef[e][l] * known(edge.dest, l);
                }
            }
            rhs[i] = acc;
        }
        let x = g
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Internal(format!("singular entry system at t = {t0}")))?;

        let rest: Vec<Vec<f64>> = (1..=k)
            .into_par_iter()
            .map(|m| {
                let cm = compute(m);
                (0..n)
                    .map(|i| {
                        let ci = &cm[i];
                        let mut v = ci.decay * left[k + 1][i][m + 1] + ci.base;
                        for (e, edge) in setup.edges[i].iter().enumerate() {
                            v += ci.coef[e][0] * x[edge.dest];
                            for l in 1..nc {
                                v += ci.coef[e][l] * known(edge.dest, l);
                            }
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        for i in 0..n {
            right[k][i][0] = x[i];
            for m in 1..=k {
                right[k][i][m] = rest[m - 1][i];
            }
        }
        if right[k].iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Internal(format!("non-finite value at t = {t0}")));
        }
        if k > 0 {
            fill_left(&setup, k, &right[k], &mut left[k]);
            slopes[k] = entry_slope(&setup, k, &left[k]);
        } else {
            left[0] = right[0].clone();
        }
    }

    let times: Vec<f64> = (0..=big_n).map(|k| setup.t(k)).collect();
    let diag = |vals: &Vec<Vec<Vec<f64>>>| -> Vec<Vec<f64>> {
        vals.iter().map(|lvl| lvl.iter().map(|s| s[0]).collect()).collect()
    };
    let nan = vec![vec![f64::NAN; n]; big_n + 1];
    Ok(ReserveField {
        regime: model.regime(),
        terminal: match target {
            None => Terminal::Reserve { horizon: end },
            Some((k, t)) => Terminal::Probability {
                state: model.labels()[k],
                time: t,
            },
        },
        labels: model.labels().to_vec(),
        right: diag(&right),
        left: diag(&left),
        times,
        slope_right: nan.clone(),
        slope_left: nan,
        durations: Some(DurationValues {
            h: setup.h,
            right,
            left,
        }),
    })
}

/// `d/dt V^j(t-, 0)` at node `q` for every `j`: the characteristic
/// derivative minus a one-sided duration difference. `None` when fewer than
/// four duration nodes exist or a duration atom lies within them.
fn entry_slope(setup: &Setup<'_>, q: usize, left: &[Vec<f64>]) -> Option<Vec<f64>> {
    if q < 3 {
        return None;
    }
    let h = setup.h;
    let t = setup.t(q);
    let duration_atom = setup.edges.iter().flatten().any(|e| {
        e.on_duration && e.curve.atoms.iter().any(|a| a.mass != 0.0 && a.at > 0.0 && a.at <= 3.0 * h * (1.0 + 1e-9))
    });
    if duration_atom {
        return None;
    }
    let w: Vec<f64> = left.iter().map(|s| s[0]).collect();
    let out = (0..setup.n)
        .map(|j| {
            let v = left[j][0];
            let mut d = setup.interest[j].as_ref().map_or(0.0, |r| r.density_left(t)) * v;
            if let Some(b) = &setup.sojourn[j] {
                d -= b.density_left(t);
            }
            for e in &setup.edges[j] {
                let mu = if e.on_duration {
                    e.curve.density.value(0.0)
                } else {
                    e.view(0.0).density_left(t)
                };
                let b = e.pay.map_or(0.0, |p| p.value_left(t));
                d -= mu * (b + w[e.dest] - v);
            }
            let f = &left[j];
            let du = (-11.0 * f[0] + 18.0 * f[1] - 9.0 * f[2] + 2.0 * f[3]) / (6.0 * h);
            d - du
        })
        .collect();
    Some(out)
}

fn fill_left(setup: &Setup<'_>, k: usize, right: &[Vec<f64>], left: &mut [Vec<f64>]) {
    let entry_values: Vec<f64> = right.iter().map(|s| s[0]).collect();
    for (i, (r, l)) in right.iter().zip(left.iter_mut()).enumerate() {
        for m in 0..=k {
            l[m] = setup.node_update(k, m, i, r[m], &entry_values);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{kolmogorov_solve, thiele_solve, SolveOptions};
    use crate::measure::{Atom, PiecewiseFn, RateCurve, Shape, StieltjesMeasure};
    use crate::model::{CumulativeRate, Model};

    fn linear_hazard() -> RateCurve {
        RateCurve::from_density(PiecewiseFn::single(
            20.0,
            Shape::Linear {
                intercept: 0.0,
                slope: 0.1,
            },
        ))
    }

    #[test]
    fn duration_rate_from_fresh_entry() {
        // one-way: duration equals time, survival exp(-0.05 t^2)
        let m = Model::new(vec![0, 1], 4.0).with_rate(0, 1, CumulativeRate::semi_markov(linear_hazard()));
        let p = kolmogorov_solve(&m, 0, 4.0, &SolveOptions::new(0.1)).unwrap();
        assert!((p.value(0, 0.0).unwrap() - (-0.8f64).exp()).abs() < 1e-12);
        // from t = 1 with duration 1: exp(-0.05 (16 - 1))
        let v = p.value_with_duration(0, 1.0, 1.0).unwrap();
        assert!((v - (-0.75f64).exp()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn recovery_model_matches_markov_when_rates_ignore_duration() {
        let build = |semi: bool| {
            let r = |mu: f64| {
                let c = RateCurve::constant(mu, 10.0);
                if semi {
                    CumulativeRate::semi_markov(c)
                } else {
                    CumulativeRate::markov(c)
                }
            };
            Model::new(vec![0, 1, 2], 10.0)
                .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 10.0)))
                .with_rate(1, 0, r(0.3))
                .with_rate(0, 2, CumulativeRate::markov(RateCurve::constant(0.02, 10.0)))
                .with_rate(1, 2, r(0.05))
                .with_interest_all(StieltjesMeasure::from_density(PiecewiseFn::constant(0.03, 10.0)))
                .with_sojourn(1, StieltjesMeasure::from_density(PiecewiseFn::constant(1.0, 10.0)))
                .with_sojourn(0, StieltjesMeasure::from_atoms(vec![Atom::new(5.0, 2.0)]))
        };
        let opts = SolveOptions::new(0.025);
        let a = thiele_solve(&build(false), &opts).unwrap();
        let b = thiele_solve(&build(true), &opts).unwrap();
        for t in [0.0, 2.5, 5.0, 7.3] {
            let (x, y) = (a.value(0, t).unwrap(), b.value(0, t).unwrap());
            assert!((x - y).abs() < 1e-9, "t={t}: {x} vs {y}");
        }
    }

    #[test]
    fn misaligned_atoms_pick_a_finer_grid() {
        let m = Model::new(vec![0, 1], 1.0)
            .with_rate(0, 1, CumulativeRate::semi_markov(RateCurve::from_atoms(vec![Atom::new(0.3, 0.5)])));
        let p = kolmogorov_solve(&m, 0, 1.0, &SolveOptions::new(0.25)).unwrap();
        assert!((p.value(0, 0.0).unwrap() - 0.5).abs() < 1e-14);
    }
}
