//! Comparing two bases: reset points, equivalence of cash flows, safe-side
//! sign conditions and reserve orderings, plus reserve-preserving model
//! transforms.

mod transform;

pub use transform::{
    prune_irrelevant, set_initial_distribution, transform_cemetery, transform_reserve_dependent,
    transform_shorten,
};

use crate::backward::{thiele_solve, ReserveField, SolveOptions};
use crate::error::{Error, Result};
use crate::measure::{ls_integrate, merge_atoms, Atom, MeasureRef, StieltjesMeasure};
use crate::model::{Dependence, Model};
use serde::Serialize;
use std::collections::BTreeMap;

const RESET_TOL: f64 = 1e-12;
const MAX_WITNESSES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    First,
    Second,
}

/// A reset point present in one model's row but not the other's.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResetWitness {
    pub from: usize,
    pub to: usize,
    pub at: f64,
    pub only_in: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResetCheck {
    pub identical: bool,
    pub witness: Option<ResetWitness>,
}

fn axis_tag(d: &Dependence) -> u8 {
    match d {
        Dependence::Markov => 0,
        Dependence::SemiMarkov => 1,
        Dependence::PathDependent(_) => 2,
    }
}

/// Reset points of each row, keyed by source state: `(axis, point, dest)`.
fn row_resets(m: &Model) -> BTreeMap<usize, Vec<(u8, f64, usize)>> {
    let mut out: BTreeMap<usize, Vec<(u8, f64, usize)>> = BTreeMap::new();
    for (&(i, j), rate) in &m.lambda {
        for &r in &rate.curve.resets {
            out.entry(i).or_default().push((axis_tag(&rate.dependence), r, j));
        }
    }
    out
}

/// Whether both models have the same reset points in every row (on the same
/// axis). Pole strengths are not compared.
pub fn identical_reset_points(a: &Model, b: &Model) -> ResetCheck {
    let (ra, rb) = (row_resets(a), row_resets(b));
    let missing = |x: &BTreeMap<usize, Vec<(u8, f64, usize)>>, y: &BTreeMap<usize, Vec<(u8, f64, usize)>>, side| {
        for (i, list) in x {
            for &(axis, r, j) in list {
                let found = y
                    .get(i)
                    .is_some_and(|l| l.iter().any(|&(ax, s, _)| ax == axis && (s - r).abs() <= RESET_TOL * r.abs().max(1.0)));
                if !found {
                    return Some(ResetWitness {
                        from: *i,
                        to: j,
                        at: r,
                        only_in: side,
                    });
                }
            }
        }
        None
    };
    let witness = missing(&ra, &rb, Side::First).or_else(|| missing(&rb, &ra, Side::Second));
    ResetCheck {
        identical: witness.is_none(),
        witness,
    }
}

fn require_identical_resets(a: &Model, b: &Model) -> Result<()> {
    match identical_reset_points(a, b).witness {
        None => Ok(()),
        Some(w) => Err(Error::Precondition(format!(
            "reset points differ: {}->{} at {} appears only in the {} model",
            w.from,
            w.to,
            w.at,
            match w.only_in {
                Side::First => "first",
                Side::Second => "second",
            }
        ))),
    }
}

fn require_time_only(field: &ReserveField) -> Result<()> {
    if field.durations.is_some() {
        return Err(Error::UnsupportedRegime(
            "basis comparison needs time-only reserves (Markov or discrete models)".into(),
        ));
    }
    Ok(())
}

fn require_markov(m: &Model) -> Result<()> {
    if let Some(((i, j), _)) = m
        .lambda
        .iter()
        .find(|(_, r)| r.dependence != Dependence::Markov && !r.curve.is_zero())
    {
        return Err(Error::UnsupportedRegime(format!(
            "rate {i}->{j} is not a calendar-time rate; basis comparison covers Markov models"
        )));
    }
    Ok(())
}

/// `Λ̄ - Λ` per pair and `Φ̄ - Φ` per state, second model minus first.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisDelta {
    pub rates: BTreeMap<(usize, usize), StieltjesMeasure>,
    pub interest: BTreeMap<usize, StieltjesMeasure>,
}

fn difference(a: Option<&StieltjesMeasure>, b: Option<&StieltjesMeasure>) -> StieltjesMeasure {
    let zero = StieltjesMeasure::zero();
    let (a, b) = (a.unwrap_or(&zero), b.unwrap_or(&zero));
    let mut atoms: Vec<Atom> = b.atoms.clone();
    atoms.extend(a.atoms.iter().map(|x| Atom::new(x.at, -x.mass)));
    StieltjesMeasure {
        density: b.density.plus(&a.density.scaled(-1.0)),
        atoms: merge_atoms(atoms),
    }
}

pub fn basis_delta(a: &Model, b: &Model) -> Result<BasisDelta> {
    require_identical_resets(a, b)?;
    let mut rates = BTreeMap::new();
    for key in a.lambda.keys().chain(b.lambda.keys()) {
        if rates.contains_key(key) {
            continue;
        }
        let (ra, rb) = (a.lambda.get(key), b.lambda.get(key));
        if let (Some(x), Some(y)) = (ra, rb) {
            if axis_tag(&x.dependence) != axis_tag(&y.dependence) {
                return Err(Error::Precondition(format!(
                    "rate {}->{} has different dependence classes in the two models",
                    key.0, key.1
                )));
            }
        }
        let as_measure = |r: Option<&crate::model::CumulativeRate>| {
            r.map(|r| StieltjesMeasure {
                density: r.curve.density.clone(),
                atoms: r.curve.atoms.clone(),
            })
        };
        rates.insert(*key, difference(as_measure(ra).as_ref(), as_measure(rb).as_ref()));
    }
    let mut interest = BTreeMap::new();
    for &i in a.labels() {
        interest.insert(i, difference(a.phi.get(&i), b.phi.get(&i)));
    }
    Ok(BasisDelta { rates, interest })
}

fn cell_grid(field: &ReserveField, extra: Option<&[f64]>) -> Vec<f64> {
    let end = field.end();
    let mut g: Vec<f64> = field.times.clone();
    if let Some(x) = extra {
        g.extend(x.iter().copied().filter(|&t| (0.0..=end).contains(&t)));
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CantelliOptions {
    /// Largest accepted per-cell difference of the two sides.
    pub tolerance: f64,
    /// Include `-V^i(t-) Φ^i(dt)` on both sides, allowing different interest.
    pub include_interest: bool,
}

impl Default for CantelliOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            include_interest: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDeviation {
    pub state: usize,
    pub start: f64,
    pub end: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CantelliReport {
    pub holds: bool,
    pub max_deviation: f64,
    pub worst: Option<CellDeviation>,
    pub include_interest: bool,
}

/// Right-hand integrand pieces of one model for state `i` over `(t0, t1]`.
fn cash_flow_measure(model: &Model, field: &ReserveField, i: usize, t0: f64, t1: f64, with_interest: bool) -> Result<f64> {
    let k = field.state_index(i)?;
    let mut total = model.sojourn(i).mass(t0, t1);
    for (j, rate) in model.row(i) {
        if rate.curve.is_zero() {
            continue;
        }
        let kj = field.state_index(j)?;
        // stop short of a reset at the cell end: the guard removes the instant
        let hi = if rate.curve.resets.contains(&t1) {
            t1 - 1e-13 * t1.abs().max(1.0)
        } else {
            t1
        };
        let f = |s: f64| model.transition_payment(i, j, s) + field.value_idx(kj, s) - field.value_idx(k, s);
        total += ls_integrate(f, rate.curve.view(), t0, hi)?;
    }
    if with_interest {
        let f = |s: f64| field.value_left_idx(k, s);
        total -= ls_integrate(f, model.interest(i), t0, t1)?;
    }
    Ok(total)
}

/// Check the equivalence condition
/// `B(dt) + Σ (b + V^j - V^i) Λ(dt) = B̄(dt) + Σ (b̄ + V^j - V^i) Λ̄(dt)`
/// cell by cell, with `V` the reserves of the first model.
pub fn cantelli_check(
    a: &Model,
    b: &Model,
    v: &ReserveField,
    grid: Option<&[f64]>,
    opts: &CantelliOptions,
) -> Result<CantelliReport> {
    require_identical_resets(a, b)?;
    require_time_only(v)?;
    require_markov(a)?;
    require_markov(b)?;
    if !opts.include_interest && a.phi != b.phi {
        return Err(Error::Precondition(
            "interest differs between the models; enable the interest variant".into(),
        ));
    }
    let g = cell_grid(v, grid);
    let mut worst: Option<CellDeviation> = None;
    for &i in a.labels() {
        for w in g.windows(2) {
            let lhs = cash_flow_measure(a, v, i, w[0], w[1], opts.include_interest)?;
            let rhs = cash_flow_measure(b, v, i, w[0], w[1], opts.include_interest)?;
            let d = (lhs - rhs).abs();
            if worst.as_ref().is_none_or(|x| d > x.deviation) {
                worst = Some(CellDeviation {
                    state: i,
                    start: w[0],
                    end: w[1],
                    deviation: d,
                });
            }
        }
    }
    let max_deviation = worst.as_ref().map_or(0.0, |w| w.deviation);
    Ok(CantelliReport {
        holds: max_deviation <= opts.tolerance,
        max_deviation,
        worst,
        include_interest: opts.include_interest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Pessimistic,
    Optimistic,
    Neither,
}

/// Which sign requirement a witness violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignCondition {
    /// Where `R^{ij} >= 0` the rate difference must have the basis' sign.
    SumAtRiskNonNegative,
    SumAtRiskNonPositive,
    /// Where `V^i >= 0` the interest difference must have the basis' sign.
    ReserveNonNegative,
    ReserveNonPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignWitness {
    /// Basis whose condition fails.
    pub basis: Classification,
    pub time: f64,
    pub from: usize,
    /// Destination for rate conditions, `None` for interest conditions.
    pub to: Option<usize>,
    pub condition: SignCondition,
    /// Mass of the difference measure on the offending cell or atom.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafeSideVerdict {
    pub classification: Classification,
    /// Both bases' conditions hold (zero difference); reported as pessimistic.
    pub tie: bool,
    /// Violations of the conditions of the basis types not chosen, the
    /// earliest one per transition (or state) and condition.
    pub witnesses: Vec<SignWitness>,
}

/// Zero crossings of `f` on the grid, located by bisection.
fn crossings(grid: &[f64], f: impl Fn(f64) -> f64, f_left: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (fa, fb) = (f(lo), f_left(hi));
        if fa == 0.0 || fb == 0.0 || fa.signum() == fb.signum() {
            continue;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid).signum() == fa.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out
}

struct Recorder {
    pess: Vec<SignWitness>,
    opt: Vec<SignWitness>,
    pess_fail: bool,
    opt_fail: bool,
}

impl Recorder {
    /// `value`: `R^{ij}` (rate condition) or `V^i` (interest condition) on the cell.
    fn check(&mut self, value: f64, delta: f64, rate: bool, time: f64, from: usize, to: Option<usize>) {
        if delta == 0.0 {
            return;
        }
        // pessimistic: rates move with R, interest moves against V
        let want_up = |basis_pess: bool, nonneg: bool| basis_pess == (rate == nonneg);
        for (nonneg, applies) in [(true, value >= 0.0), (false, value <= 0.0)] {
            if !applies {
                continue;
            }
            let cond = match (rate, nonneg) {
                (true, true) => SignCondition::SumAtRiskNonNegative,
                (true, false) => SignCondition::SumAtRiskNonPositive,
                (false, true) => SignCondition::ReserveNonNegative,
                (false, false) => SignCondition::ReserveNonPositive,
            };
            for pess in [true, false] {
                let ok = if want_up(pess, nonneg) { delta >= 0.0 } else { delta <= 0.0 };
                if ok {
                    continue;
                }
                let (list, flag, basis) = if pess {
                    (&mut self.pess, &mut self.pess_fail, Classification::Pessimistic)
                } else {
                    (&mut self.opt, &mut self.opt_fail, Classification::Optimistic)
                };
                *flag = true;
                let seen = list.iter().any(|w| w.from == from && w.to == to && w.condition == cond);
                if !seen && list.len() < MAX_WITNESSES {
                    list.push(SignWitness {
                        basis,
                        time,
                        from,
                        to,
                        condition: cond,
                        delta,
                    });
                }
            }
        }
    }
}

const DELTA_TOL: f64 = 1e-14;

fn check_measure(
    rec: &mut Recorder,
    delta: MeasureRef<'_>,
    grid: &[f64],
    value: &dyn Fn(f64) -> f64,
    rate: bool,
    from: usize,
    to: Option<usize>,
) {
    for w in grid.windows(2) {
        let d = delta.continuous(w[0], w[1]);
        if d.abs() > DELTA_TOL {
            let mid = 0.5 * (w[0] + w[1]);
            rec.check(value(mid), d, rate, mid, from, to);
        }
    }
    let end = grid.last().copied().unwrap_or(0.0);
    for atom in delta.atoms_in(grid.first().copied().unwrap_or(0.0), end) {
        if atom.mass.abs() > DELTA_TOL {
            rec.check(value(atom.at), atom.mass, rate, atom.at, from, to);
        }
    }
}

/// Classify the second model as a pessimistic or optimistic basis relative
/// to the first, using the first model's reserves `v`. Zero differences
/// classify as pessimistic.
pub fn safe_side_classify(a: &Model, b: &Model, v: &ReserveField, grid: Option<&[f64]>) -> Result<SafeSideVerdict> {
    require_time_only(v)?;
    require_markov(a)?;
    require_markov(b)?;
    if a.cashflow != b.cashflow {
        return Err(Error::Precondition(
            "safe-side comparison needs identical payments B and b in both models".into(),
        ));
    }
    let delta = basis_delta(a, b)?;
    let base = cell_grid(v, grid);
    let mut rec = Recorder {
        pess: Vec::new(),
        opt: Vec::new(),
        pess_fail: false,
        opt_fail: false,
    };
    for (&(i, j), d) in &delta.rates {
        let (ki, kj) = (v.state_index(i)?, v.state_index(j)?);
        let r = |t: f64| a.transition_payment(i, j, t) + v.value_idx(kj, t) - v.value_idx(ki, t);
        let r_left = |t: f64| a.transition_payment_left(i, j, t) + v.value_left_idx(kj, t) - v.value_left_idx(ki, t);
        let mut g = base.clone();
        g.extend(crossings(&base, r, r_left));
        g.extend(d.view().breakpoints(0.0, v.end()));
        g.sort_by(f64::total_cmp);
        g.dedup();
        check_measure(&mut rec, d.view(), &g, &r, true, i, Some(j));
    }
    for (&i, d) in &delta.interest {
        let ki = v.state_index(i)?;
        let val = |t: f64| v.value_idx(ki, t);
        let val_left = |t: f64| v.value_left_idx(ki, t);
        let mut g = base.clone();
        g.extend(crossings(&base, val, val_left));
        g.extend(d.view().breakpoints(0.0, v.end()));
        g.sort_by(f64::total_cmp);
        g.dedup();
        check_measure(&mut rec, d.view(), &g, &val, false, i, None);
    }
    let (classification, witnesses) = match (rec.pess_fail, rec.opt_fail) {
        (false, _) => (Classification::Pessimistic, rec.opt),
        (true, false) => (Classification::Optimistic, rec.pess),
        (true, true) => {
            let mut w = rec.pess;
            w.extend(rec.opt);
            (Classification::Neither, w)
        }
    };
    Ok(SafeSideVerdict {
        classification,
        tie: !rec.pess_fail && !rec.opt_fail,
        witnesses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDifference {
    pub state: usize,
    /// `min_t (V̄^i(t) - V^i(t))` over the grid, with its location.
    pub min_diff: f64,
    pub min_at: f64,
    pub max_diff: f64,
    pub max_at: f64,
    pub first_at_zero: f64,
    pub second_at_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReserveComparison {
    pub states: Vec<StateDifference>,
    pub min_diff: f64,
    pub max_diff: f64,
}

/// Differences `second - first` on the union of both grids.
pub fn compare_fields(first: &ReserveField, second: &ReserveField) -> Result<ReserveComparison> {
    let mut grid: Vec<f64> = first.times.iter().chain(&second.times).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut states = Vec::new();
    for &label in &first.labels {
        if !second.labels.contains(&label) {
            continue;
        }
        let mut s = StateDifference {
            state: label,
            min_diff: f64::INFINITY,
            min_at: 0.0,
            max_diff: f64::NEG_INFINITY,
            max_at: 0.0,
            first_at_zero: first.value(label, 0.0)?,
            second_at_zero: second.value(label, 0.0)?,
        };
        for &t in &grid {
            let d = second.value(label, t)? - first.value(label, t)?;
            if d < s.min_diff {
                s.min_diff = d;
                s.min_at = t;
            }
            if d > s.max_diff {
                s.max_diff = d;
                s.max_at = t;
            }
        }
        states.push(s);
    }
    let min_diff = states.iter().map(|s| s.min_diff).fold(f64::INFINITY, f64::min);
    let max_diff = states.iter().map(|s| s.max_diff).fold(f64::NEG_INFINITY, f64::max);
    Ok(ReserveComparison {
        states,
        min_diff,
        max_diff,
    })
}

/// Solve both models and compare their reserves.
pub fn compare_reserves(a: &Model, b: &Model, opts: &SolveOptions) -> Result<ReserveComparison> {
    let fa = thiele_solve(a, opts)?;
    let fb = thiele_solve(b, opts)?;
    compare_fields(&fa, &fb)
}

/// Everything the comparison command reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub resets: ResetCheck,
    /// Present when reset points agree and both models share payments.
    pub verdict: Option<SafeSideVerdict>,
    /// Present when reset points agree.
    pub cantelli: Option<CantelliReport>,
    pub reserves: ReserveComparison,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Reset check, safe-side verdict, equivalence check and reserve ordering
/// of `b` against `a`.
pub fn compare_models(a: &Model, b: &Model, opts: &SolveOptions) -> Result<ComparisonReport> {
    let fa = thiele_solve(a, opts)?;
    let fb = thiele_solve(b, opts)?;
    let resets = identical_reset_points(a, b);
    let comparable = resets.identical && fa.durations.is_none() && require_markov(a).is_ok() && require_markov(b).is_ok();
    let verdict = if comparable && a.cashflow == b.cashflow {
        Some(safe_side_classify(a, b, &fa, None)?)
    } else {
        None
    };
    let cantelli = if comparable {
        let opts = CantelliOptions {
            include_interest: a.phi != b.phi,
            ..CantelliOptions::default()
        };
        Some(cantelli_check(a, b, &fa, None, &opts)?)
    } else {
        None
    };
    Ok(ComparisonReport {
        resets,
        verdict,
        cantelli,
        reserves: compare_fields(&fa, &fb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{PiecewiseFn, RateCurve};
    use crate::model::CumulativeRate;

    fn term(mu: f64) -> Model {
        Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(mu, 10.0)))
            .with_interest_all(StieltjesMeasure::from_density(PiecewiseFn::constant(0.05, 10.0)))
            .with_transition(0, 1, PiecewiseFn::constant(1.0, 10.0))
    }

    #[test]
    fn reset_points_compare_locations_only() {
        let plain = Model::new(vec![0, 1], 2.0);
        let pole = |c: f64| Model::new(vec![0, 1], 2.0).with_rate(0, 1, CumulativeRate::markov(RateCurve::pole(c, 1.0)));
        assert!(identical_reset_points(&plain, &plain).identical);
        let r = identical_reset_points(&pole(1.0), &plain);
        assert!(!r.identical);
        let w = r.witness.unwrap();
        assert_eq!((w.from, w.to, w.at, w.only_in), (0, 1, 1.0, Side::First));
        assert!(identical_reset_points(&pole(1.0), &pole(2.0)).identical);
    }

    #[test]
    fn classification_of_mortality_bases() {
        let a = term(0.1);
        let v = thiele_solve(&a, &SolveOptions::new(0.1)).unwrap();
        let up = safe_side_classify(&a, &term(0.12), &v, None).unwrap();
        assert_eq!(up.classification, Classification::Pessimistic);
        assert!(!up.tie);
        let down = safe_side_classify(&a, &term(0.08), &v, None).unwrap();
        assert_eq!(down.classification, Classification::Optimistic);
        assert!(!down.witnesses.is_empty());
        let same = safe_side_classify(&a, &a, &v, None).unwrap();
        assert_eq!(same.classification, Classification::Pessimistic);
        assert!(same.tie);
    }

    #[test]
    fn mixed_changes_are_neither() {
        let a = term(0.1);
        let v = thiele_solve(&a, &SolveOptions::new(0.1)).unwrap();
        // higher mortality but also higher interest on a positive reserve
        let b = term(0.12).with_interest_all(StieltjesMeasure::from_density(PiecewiseFn::constant(0.06, 10.0)));
        let r = safe_side_classify(&a, &b, &v, None).unwrap();
        assert_eq!(r.classification, Classification::Neither);
    }

    #[test]
    fn identical_models_satisfy_equivalence() {
        let a = term(0.1);
        let v = thiele_solve(&a, &SolveOptions::new(0.1)).unwrap();
        let r = cantelli_check(&a, &a, &v, None, &CantelliOptions::default()).unwrap();
        assert!(r.holds);
        assert_eq!(r.max_deviation, 0.0);
    }

    #[test]
    fn interest_difference_needs_the_variant() {
        let a = term(0.1);
        let b = a.clone().with_interest_all(StieltjesMeasure::from_density(PiecewiseFn::constant(0.04, 10.0)));
        let v = thiele_solve(&a, &SolveOptions::new(0.1)).unwrap();
        assert!(matches!(
            cantelli_check(&a, &b, &v, None, &CantelliOptions::default()),
            Err(Error::Precondition(_))
        ));
        let opts = CantelliOptions {
            include_interest: true,
            ..Default::default()
        };
        assert!(!cantelli_check(&a, &b, &v, None, &opts).unwrap().holds);
    }

    #[test]
    fn reserve_comparison_closed_forms() {
        let c = compare_reserves(&term(0.1), &term(0.12), &SolveOptions::new(0.1)).unwrap();
        let s = &c.states[0];
        let exact = (0.12 / 0.17) * (1.0 - (-1.7f64).exp()) - (0.1 / 0.15) * (1.0 - (-1.5f64).exp());
        assert!((s.second_at_zero - s.first_at_zero - exact).abs() < 1e-10);
        assert!(c.min_diff >= -1e-12);
    }
}
