//! Path-wise check of a candidate reserve against the backward equation.
//!
//! On a sojourn in state `i` over `(a, e]` the accumulated measure
//!
//! `V^i(dt) + B^i(dt) - V^i(t-) Φ^i(dt) + Σ_j (b^{ij} + V^j - V^i) Λ^{ij}(dt)`
//!
//! must vanish identically. Reserve-dependent payments are expanded with the
//! candidate's own values.

use super::ReserveField;
use crate::error::{Error, Result};
use crate::measure::quad::gauss_legendre_unit;
use crate::measure::MeasureRef;
use crate::model::{HistoryContext, Model, Path};
use serde::Serialize;

/// Something that can be evaluated as `V^i(t)` for a holder that entered
/// state `i` at `entered`.
pub trait ReserveCandidate {
    fn value(&self, state: usize, t: f64, entered: f64) -> f64;
    fn value_left(&self, state: usize, t: f64, entered: f64) -> f64;
    /// Times where the candidate may lose smoothness.
    fn nodes(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl ReserveCandidate for ReserveField {
    fn value(&self, state: usize, t: f64, entered: f64) -> f64 {
        self.value_with_duration(state, t, t - entered).unwrap_or(f64::NAN)
    }

    fn value_left(&self, state: usize, t: f64, entered: f64) -> f64 {
        self.value_with_duration_left(state, t, t - entered)
            .unwrap_or(f64::NAN)
    }

    fn nodes(&self) -> Vec<f64> {
        self.times.clone()
    }
}

type CandidateFn = Box<dyn Fn(usize, f64, f64) -> f64 + Send + Sync>;

/// Candidate given by closures `(state, t, entered) -> value`.
pub struct FnCandidate {
    value: CandidateFn,
    left: Option<CandidateFn>,
    nodes: Vec<f64>,
}

impl FnCandidate {
    /// A candidate continuous in time.
    pub fn new(f: impl Fn(usize, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Box::new(f),
            left: None,
            nodes: Vec::new(),
        }
    }

    pub fn with_left(mut self, f: impl Fn(usize, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.left = Some(Box::new(f));
        self
    }

    pub fn with_nodes(mut self, nodes: Vec<f64>) -> Self {
        self.nodes = nodes;
        self
    }
}

impl ReserveCandidate for FnCandidate {
    fn value(&self, state: usize, t: f64, entered: f64) -> f64 {
        (self.value)(state, t, entered)
    }

    fn value_left(&self, state: usize, t: f64, entered: f64) -> f64 {
        match &self.left {
            Some(f) => f(state, t, entered),
            None => (self.value)(state, t, entered),
        }
    }

    fn nodes(&self) -> Vec<f64> {
        self.nodes.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalResidual {
    pub state: usize,
    pub start: f64,
    pub end: f64,
    /// Largest absolute accumulated residual over the interval.
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub intervals: Vec<IntervalResidual>,
    pub max_abs: f64,
    /// Largest `max_abs / max(interval length, 1)` over the intervals.
    pub per_unit_time: f64,
}

const DEFAULT_CELL: f64 = 0.05;

/// Accumulate the residual measure along `path` on `[0, horizon]`.
///
/// `cell_h` bounds the quadrature cell length (default 0.05).
pub fn thiele_residual(
    model: &Model,
    candidate: &dyn ReserveCandidate,
    path: &Path,
    horizon: f64,
    cell_h: Option<f64>,
) -> Result<ResidualReport> {
    path.check()?;
    let cell_h = cell_h.unwrap_or(DEFAULT_CELL);
    if !(cell_h > 0.0) {
        return Err(Error::Input(format!("cell length must be positive, got {cell_h}")));
    }
    let nodes = candidate.nodes();
    let dep = model.cashflow.reserve_dependence.as_ref();
    let (gx, gw) = gauss_legendre_unit(4);
    let mut intervals = Vec::new();

    for (a, e, i) in path.sojourns(horizon) {
        if e <= a {
            continue;
        }
        let ctx = HistoryContext::from_stopped(path, a, i);
        let rows = model.row_entries(&ctx);
        let rates: Vec<(usize, MeasureRef<'_>)> = rows.iter().map(|r| (r.dest, r.rate.view())).collect();
        let interest = model.interest(i);
        let sojourn = model.sojourn(i);
        let state_dep = dep.and_then(|d| d.states.get(&i));
        let extra: Vec<MeasureRef<'_>> = state_dep
            .map(|s| vec![s.a0.view(), s.a1.view()])
            .unwrap_or_default();

        let mut cuts = vec![a, e];
        cuts.extend(nodes.iter().copied().filter(|&t| t > a && t < e));
        for m in rates
            .iter()
            .map(|r| &r.1)
            .chain([&interest, &sojourn])
            .chain(extra.iter())
        {
            cuts.extend(m.breakpoints(a, e));
            cuts.extend(m.atoms_in(a, e).iter().map(|x| x.at).filter(|&t| t < e));
        }
        for (j, _) in &rates {
            if let Some(b) = model.cashflow.transition.get(&(i, *j)) {
                cuts.extend(b.breakpoints(a, e));
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut fine = vec![a];
        for w in cuts.windows(2) {
            let k = ((w[1] - w[0]) / cell_h).ceil().max(1.0) as usize;
            for q in 1..=k {
                fine.push(if q == k {
                    w[1]
                } else {
                    w[0] + (w[1] - w[0]) * q as f64 / k as f64
                });
            }
        }

        let v_i = |t: f64| candidate.value(i, t, a);
        let v_i_left = |t: f64| candidate.value_left(i, t, a);
        let pay = |j: usize, t: f64, vi: f64, vj: f64| -> f64 {
            let mut b = model.transition_payment(i, j, t);
            if let Some(p) = dep.and_then(|d| d.pairs.get(&(i, j))) {
                b += p.a0.value(t) + p.a1 * (vi - vj);
            }
            b
        };

        let mut acc = 0.0;
        let mut worst: f64 = 0.0;
        for w in fine.windows(2) {
            let (c0, c1) = (w[0], w[1]);
            let len = c1 - c0;
            let mut cont = 0.0;
            for (x, wt) in gx.iter().zip(gw) {
                let s = c0 + x * len;
                let vi = v_i(s);
                let mut g = sojourn.density_at(s) - vi * interest.density_at(s);
                for (j, m) in &rates {
                    let mu = m.density_at(s);
                    if mu != 0.0 {
                        let vj = candidate.value(*j, s, s);
                        g += (pay(*j, s, vi, vj) + vj - vi) * mu;
                    }
                }
                if let [a0, a1] = extra.as_slice() {
                    g += a0.density_at(s) + vi * a1.density_at(s);
                }
                cont += wt * len * g;
            }
            acc += cont + v_i_left(c1) - v_i(c0);

            // Atoms at the cell end, including a possible atom at the jump time.
            let vl = v_i_left(c1);
            let vr = v_i(c1);
            let mut jump = vr - vl + sojourn.atom_at(c1) - vl * interest.atom_at(c1);
            for (j, m) in &rates {
                let mass = m.atom_at(c1);
                if mass != 0.0 {
                    let vj = candidate.value(*j, c1, c1);
                    jump += (pay(*j, c1, vr, vj) + vj - vr) * mass;
                }
            }
            if let [a0, a1] = extra.as_slice() {
                jump += a0.atom_at(c1) + vl * a1.atom_at(c1);
            }
            acc += jump;
            worst = worst.max(acc.abs());
        }
        if !worst.is_finite() {
            worst = f64::INFINITY;
        }
        intervals.push(IntervalResidual {
            state: i,
            start: a,
            end: e,
            max_abs: worst,
        });
    }

    let max_abs = intervals.iter().map(|r| r.max_abs).fold(0.0, f64::max);
    let per_unit_time = intervals
        .iter()
        .map(|r| r.max_abs / (r.end - r.start).max(1.0))
        .fold(0.0, f64::max);
    Ok(ResidualReport {
        intervals,
        max_abs,
        per_unit_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{PiecewiseFn, RateCurve, StieltjesMeasure};
    use crate::model::CumulativeRate;

    fn term() -> Model {
        Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 10.0)))
            .with_interest_all(StieltjesMeasure::from_density(PiecewiseFn::constant(0.05, 10.0)))
            .with_transition(0, 1, PiecewiseFn::constant(1.0, 10.0))
    }

    fn closed_form() -> FnCandidate {
        FnCandidate::new(|i, t, _| if i == 0 { (0.1 / 0.15) * (1.0 - (-0.15 * (10.0 - t)).exp()) } else { 0.0 })
    }

    #[test]
    fn closed_form_term_insurance_has_no_residual() {
        let path = Path::new(vec![(0.0, 0), (3.7, 1)]).unwrap();
        let r = thiele_residual(&term(), &closed_form(), &path, 10.0, None).unwrap();
        assert!(r.per_unit_time < 1e-8, "{r:?}");
        assert_eq!(r.intervals.len(), 2);
    }

    #[test]
    fn zero_candidate_shows_premiums() {
        let m = Model::new(vec![0, 1], 10.0)
            .with_sojourn(0, StieltjesMeasure::from_density(PiecewiseFn::constant(-0.2, 10.0)));
        let zero = FnCandidate::new(|_, _, _| 0.0);
        let r = thiele_residual(&m, &zero, &Path::start(0), 10.0, None).unwrap();
        assert!((r.max_abs - 2.0).abs() < 1e-12, "{r:?}");
    }
}
