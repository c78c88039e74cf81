//! Canonical insurance models: states, transition rates, interest and payments.

mod path;
mod validate;

pub use path::{path_statistics, stop_path, HistoryContext, Path, PathStatistics};
pub use validate::{validate_model, ValidationReport, Violation, ViolationKind};

use crate::error::{Error, Result};
use crate::measure::{
    KernelPair, MeasureRef, PiecewiseFn, RateCurve, RateIncrement, RowEntry, ShiftedRate,
    StieltjesMeasure,
};
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

static ZERO_MEASURE: StieltjesMeasure = StieltjesMeasure {
    density: PiecewiseFn {
        segments: Vec::new(),
    },
    atoms: Vec::new(),
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    pub states: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorbing_hint: Option<Vec<usize>>,
}

impl StateSpace {
    pub fn new(states: Vec<usize>) -> Self {
        Self {
            states,
            absorbing_hint: None,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index(&self, label: usize) -> Option<usize> {
        self.states.iter().position(|&s| s == label)
    }

    pub fn contains(&self, label: usize) -> bool {
        self.index(label).is_some()
    }
}

/// A rate that may look at the whole stopped history.
///
/// Implementations return the rate curve, on calendar time, that applies from
/// `ctx.current_time` until the next jump. They must only read `ctx`.
pub trait HistoryRule: Send + Sync {
    fn name(&self) -> &str;
    fn curve(&self, base: &RateCurve, ctx: &HistoryContext) -> RateCurve;
    /// Whether every curve the rule can produce is bounded on compacts.
    fn bounded_on_compacts(&self) -> bool {
        true
    }
}

/// Path-dependent rate families.
#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRule {
    /// Base curve multiplied by `factor^(number of jumps so far)`.
    JumpCountScaled { factor: f64 },
    #[serde(skip)]
    Custom(Arc<dyn HistoryRule>),
}

impl fmt::Debug for PathRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathRule::JumpCountScaled { factor } => {
                f.debug_struct("JumpCountScaled").field("factor", factor).finish()
            }
            PathRule::Custom(rule) => write!(f, "Custom({})", rule.name()),
        }
    }
}

impl PartialEq for PathRule {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (PathRule::JumpCountScaled { factor: a }, PathRule::JumpCountScaled { factor: b }) => {
                a == b
            }
            (PathRule::Custom(a), PathRule::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl PathRule {
    fn bounded_on_compacts(&self) -> bool {
        match self {
            PathRule::JumpCountScaled { factor } => *factor <= 1.0,
            PathRule::Custom(rule) => rule.bounded_on_compacts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    #[default]
    Markov,
    /// Curve argument is the duration since the last jump.
    SemiMarkov,
    PathDependent(PathRule),
}

/// One cumulative transition rate `Λ^{ij}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeRate {
    #[serde(default)]
    pub dependence: Dependence,
    #[serde(flatten)]
    pub curve: RateCurve,
}

impl CumulativeRate {
    pub fn markov(curve: RateCurve) -> Self {
        Self {
            dependence: Dependence::Markov,
            curve,
        }
    }

    pub fn semi_markov(curve: RateCurve) -> Self {
        Self {
            dependence: Dependence::SemiMarkov,
            curve,
        }
    }

    pub fn path_dependent(curve: RateCurve, rule: PathRule) -> Self {
        Self {
            dependence: Dependence::PathDependent(rule),
            curve,
        }
    }

    /// The curve that applies on calendar time given the stopped history.
    pub fn resolve(&self, ctx: &HistoryContext) -> ShiftedRate<'_> {
        match &self.dependence {
            Dependence::Markov => ShiftedRate::new(Cow::Borrowed(&self.curve), 0.0),
            Dependence::SemiMarkov => ShiftedRate::new(Cow::Borrowed(&self.curve), ctx.last_jump_time),
            Dependence::PathDependent(PathRule::JumpCountScaled { factor }) => {
                let k = factor.powi(ctx.jump_count() as i32);
                ShiftedRate::new(Cow::Owned(self.curve.scaled(k)), 0.0)
            }
            Dependence::PathDependent(PathRule::Custom(rule)) => {
                ShiftedRate::new(Cow::Owned(rule.curve(&self.curve, ctx)), 0.0)
            }
        }
    }

    /// Bounded on compacts for every history.
    pub fn is_bounded(&self) -> bool {
        let rule_ok = match &self.dependence {
            Dependence::PathDependent(r) => r.bounded_on_compacts(),
            _ => true,
        };
        rule_ok && self.curve.is_bounded()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dependence: self.dependence.clone(),
            curve: self.curve.scaled(k),
        }
    }
}

/// Increment of `Λ` over `(s, t]` for the given history.
///
/// Fails with a domain error if a reset point lies in `(s, t]`.
pub fn evaluate_rate(
    rate: &CumulativeRate,
    s: f64,
    t: f64,
    ctx: &HistoryContext,
) -> Result<RateIncrement> {
    if !(s.is_finite() && t.is_finite()) || t < s {
        return Err(Error::Input(format!("invalid interval ({s}, {t}]")));
    }
    if ctx.last_jump_time > s {
        return Err(Error::Input(format!(
            "interval start {s} precedes the last jump at {}",
            ctx.last_jump_time
        )));
    }
    let resolved = rate.resolve(ctx);
    if let Some(r) = resolved.next_reset_after(s) {
        if r <= t {
            return Err(Error::Domain(format!(
                "interval ({s}, {t}] crosses the reset point {r}; split it first"
            )));
        }
    }
    let view = resolved.view();
    Ok(RateIncrement {
        continuous: view.continuous(s, t),
        atoms: view.atoms_in(s, t),
    })
}

/// Like [`evaluate_rate`] but splits `(s, t]` at reset points.
///
/// Sub-intervals ending at a reset report an infinite continuous increment.
pub fn evaluate_rate_split(
    rate: &CumulativeRate,
    s: f64,
    t: f64,
    ctx: &HistoryContext,
) -> Result<Vec<(f64, f64, RateIncrement)>> {
    let resolved = rate.resolve(ctx);
    let mut cuts: Vec<f64> = resolved
        .curve
        .resets
        .iter()
        .map(|r| r + resolved.offset)
        .filter(|&r| r > s && r <= t)
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut lo = s;
    let view = resolved.view();
    for r in cuts {
        out.push((
            lo,
            r,
            RateIncrement {
                continuous: view.continuous(lo, r),
                atoms: view.atoms_in(lo, r).into_iter().filter(|a| a.at < r).collect(),
            },
        ));
        lo = r;
    }
    if lo < t || out.is_empty() {
        out.push((
            lo,
            t,
            RateIncrement {
                continuous: view.continuous(lo, t),
                atoms: view.atoms_in(lo, t),
            },
        ));
    }
    Ok(out)
}

/// Per-pair coefficients of a reserve-dependent transition payment
/// `b^{kl} = b + a0(t) + a1 (V^k - V^l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDependence {
    #[serde(default)]
    pub a0: PiecewiseFn,
    #[serde(default)]
    pub a1: f64,
}

/// Per-state coefficients of a reserve-dependent sojourn payment
/// `B^k(dt) = B(dt) + A0(dt) + V^k(t-) A1(dt)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateDependence {
    #[serde(default)]
    pub a0: StieltjesMeasure,
    #[serde(default)]
    pub a1: StieltjesMeasure,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReserveDependence {
    pub pairs: BTreeMap<(usize, usize), PairDependence>,
    pub states: BTreeMap<usize, StateDependence>,
}

impl ReserveDependence {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.states.is_empty()
    }
}

/// Sojourn payments `B^i` and transition payments `b^{ij}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CashFlow {
    pub sojourn: BTreeMap<usize, StieltjesMeasure>,
    pub transition: BTreeMap<(usize, usize), PiecewiseFn>,
    pub reserve_dependence: Option<ReserveDependence>,
}

/// The tuple `(α, Λ, Φ, B, b)` with a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub states: StateSpace,
    pub alpha: Vec<f64>,
    pub lambda: BTreeMap<(usize, usize), CumulativeRate>,
    pub phi: BTreeMap<usize, StieltjesMeasure>,
    pub cashflow: CashFlow,
    pub horizon: f64,
}

/// Which solvers can handle a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Markov,
    SemiMarkov,
    Discrete,
    PathDependent,
}

impl Model {
    /// Model with the given states, no rates, no payments, zero interest.
    pub fn new(states: Vec<usize>, horizon: f64) -> Self {
        let n = states.len();
        let mut alpha = vec![0.0; n];
        if n > 0 {
            alpha[0] = 1.0;
        }
        Self {
            states: StateSpace::new(states),
            alpha,
            lambda: BTreeMap::new(),
            phi: BTreeMap::new(),
            cashflow: CashFlow::default(),
            horizon,
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.states.states
    }

    pub fn index(&self, label: usize) -> Result<usize> {
        self.states
            .index(label)
            .ok_or_else(|| Error::Input(format!("unknown state {label}")))
    }

    pub fn with_rate(mut self, i: usize, j: usize, rate: CumulativeRate) -> Self {
        self.lambda.insert((i, j), rate);
        self
    }

    pub fn with_interest(mut self, i: usize, phi: StieltjesMeasure) -> Self {
        self.phi.insert(i, phi);
        self
    }

    pub fn with_interest_all(mut self, phi: StieltjesMeasure) -> Self {
        for &i in &self.states.states.clone() {
            self.phi.insert(i, phi.clone());
        }
        self
    }

    pub fn with_sojourn(mut self, i: usize, b: StieltjesMeasure) -> Self {
        self.cashflow.sojourn.insert(i, b);
        self
    }

    pub fn with_transition(mut self, i: usize, j: usize, b: PiecewiseFn) -> Self {
        self.cashflow.transition.insert((i, j), b);
        self
    }

    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn rate(&self, i: usize, j: usize) -> Option<&CumulativeRate> {
        self.lambda.get(&(i, j))
    }

    /// Outgoing rates of state `i`, by destination.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &CumulativeRate)> {
        self.lambda
            .iter()
            .filter(move |((a, _), _)| *a == i)
            .map(|((_, b), r)| (*b, r))
    }

    /// Outgoing rates of the current state resolved for a history.
    pub fn row_entries<'a>(&'a self, ctx: &HistoryContext) -> Vec<RowEntry<'a>> {
        self.row(ctx.current_state)
            .filter(|(_, r)| !r.curve.is_zero())
            .map(|(j, r)| RowEntry {
                dest: j,
                rate: r.resolve(ctx),
            })
            .collect()
    }

    /// Kernels of the current state from `ctx.current_time`.
    pub fn kernel<'a>(&'a self, ctx: &HistoryContext) -> Result<KernelPair<'a>> {
        KernelPair::new(self.row_entries(ctx), ctx.current_time)
    }

    pub fn interest(&self, i: usize) -> MeasureRef<'_> {
        self.phi.get(&i).unwrap_or(&ZERO_MEASURE).view()
    }

    pub fn sojourn(&self, i: usize) -> MeasureRef<'_> {
        self.cashflow.sojourn.get(&i).unwrap_or(&ZERO_MEASURE).view()
    }

    /// `b^{ij}(t)`; zero when not declared.
    pub fn transition_payment(&self, i: usize, j: usize, t: f64) -> f64 {
        self.cashflow
            .transition
            .get(&(i, j))
            .map_or(0.0, |b| b.value(t))
    }

    /// `b^{ij}(t-)`.
    pub fn transition_payment_left(&self, i: usize, j: usize, t: f64) -> f64 {
        self.cashflow
            .transition
            .get(&(i, j))
            .map_or(0.0, |b| b.value_left(t))
    }

    pub fn has_reserve_dependence(&self) -> bool {
        self.cashflow
            .reserve_dependence
            .as_ref()
            .is_some_and(|d| !d.is_empty())
    }

    /// Accumulation factor `κ(t)/κ(s)` along `path`.
    pub fn savings_factor(&self, path: &Path, s: f64, t: f64) -> Result<f64> {
        let mut factor = 1.0;
        for (a, b, z) in path.sojourns(f64::INFINITY) {
            let lo = a.max(s);
            let hi = b.min(t);
            if hi > lo {
                factor *= crate::measure::accumulation_factor(self.interest(z), lo, hi)?;
            }
        }
        Ok(factor)
    }

    /// Solver regime implied by the dependence classes and time structure.
    pub fn regime(&self) -> Regime {
        let deps = self.lambda.values().map(|r| &r.dependence);
        if deps.clone().any(|d| matches!(d, Dependence::PathDependent(_))) {
            return Regime::PathDependent;
        }
        if self
            .lambda
            .values()
            .any(|r| r.dependence == Dependence::SemiMarkov && !r.curve.is_zero())
        {
            return Regime::SemiMarkov;
        }
        if self.is_discrete() {
            return Regime::Discrete;
        }
        Regime::Markov
    }

    /// All rates, interest and sojourn payments are atoms at integer times.
    pub fn is_discrete(&self) -> bool {
        let int_atoms = |atoms: &[crate::measure::Atom]| atoms.iter().all(|a| a.at.fract() == 0.0);
        self.lambda.values().all(|r| {
            r.dependence == Dependence::Markov
                && r.curve.density.is_zero()
                && r.curve.resets.is_empty()
                && int_atoms(&r.curve.atoms)
        }) && self
            .phi
            .values()
            .chain(self.cashflow.sojourn.values())
            .all(|m| m.density.is_zero() && int_atoms(&m.atoms))
    }

    /// Every time where a rate, interest or payment measure has an atom or
    /// a calendar-time reset (semi-Markov curves excluded).
    pub fn calendar_atoms(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for r in self.lambda.values() {
            if r.dependence == Dependence::Markov {
                out.extend(r.curve.atoms.iter().map(|a| a.at));
            }
        }
        for m in self.phi.values().chain(self.cashflow.sojourn.values()) {
            out.extend(m.atoms.iter().map(|a| a.at));
        }
        if let Some(dep) = &self.cashflow.reserve_dependence {
            for s in dep.states.values() {
                out.extend(s.a0.atoms.iter().chain(&s.a1.atoms).map(|a| a.at));
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Calendar-time reset points of Markov rates.
    pub fn calendar_resets(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .lambda
            .values()
            .filter(|r| r.dependence == Dependence::Markov)
            .flat_map(|r| r.curve.resets.iter().copied())
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, Shape};

    #[test]
    fn evaluate_rate_examples() {
        let ctx = HistoryContext::fresh(0.0, 0);
        let r = CumulativeRate::markov(RateCurve::constant(0.1, 10.0));
        let inc = evaluate_rate(&r, 0.0, 10.0, &ctx).unwrap();
        assert!((inc.continuous - 1.0).abs() < 1e-15);
        assert!(inc.atoms.is_empty());

        let sm = CumulativeRate::semi_markov(RateCurve::from_density(PiecewiseFn::single(
            10.0,
            Shape::Linear {
                intercept: 0.0,
                slope: 1.0,
            },
        )));
        let ctx1 = HistoryContext::with_duration(1.0, 0, 1.0);
        let inc = evaluate_rate(&sm, 1.0, 3.0, &ctx1).unwrap();
        assert!((inc.continuous - 2.0).abs() < 1e-15);

        let a = CumulativeRate::markov(RateCurve::from_atoms(vec![Atom::new(5.0, 0.5)]));
        let inc = evaluate_rate(&a, 4.0, 6.0, &ctx).unwrap();
        assert_eq!(inc.continuous, 0.0);
        assert_eq!(inc.atoms, vec![Atom::new(5.0, 0.5)]);
    }

    #[test]
    fn evaluate_rate_refuses_reset_crossing() {
        let ctx = HistoryContext::fresh(0.0, 0);
        let r = CumulativeRate::markov(RateCurve::pole(1.0, 1.0));
        assert!(matches!(evaluate_rate(&r, 0.0, 2.0, &ctx), Err(Error::Domain(_))));
        let parts = evaluate_rate_split(&r, 0.0, 2.0, &ctx).unwrap();
        assert_eq!(parts.len(), 2);
        assert!(parts[0].2.continuous.is_infinite());
        assert_eq!(parts[1].2.continuous, 0.0);
    }

    #[test]
    fn jump_count_rule_scales() {
        let r = CumulativeRate::path_dependent(
            RateCurve::constant(0.1, 10.0),
            PathRule::JumpCountScaled { factor: 2.0 },
        );
        let path = Path::new(vec![(0.0, 0), (1.0, 1), (2.0, 0)]).unwrap();
        let ctx = HistoryContext::from_stopped(&path, 3.0, 0);
        let inc = evaluate_rate(&r, 3.0, 4.0, &ctx).unwrap();
        assert!((inc.continuous - 0.4).abs() < 1e-15);
    }

    #[test]
    fn savings_factor_follows_occupancy() {
        let m = Model::new(vec![0, 1], 10.0)
            .with_interest(0, StieltjesMeasure::from_density(PiecewiseFn::constant(0.05, 10.0)))
            .with_interest(1, StieltjesMeasure::from_density(PiecewiseFn::constant(0.02, 10.0)));
        let path = Path::new(vec![(0.0, 0), (4.0, 1)]).unwrap();
        let f = m.savings_factor(&path, 0.0, 10.0).unwrap();
        assert!((f - (0.2f64 + 0.12).exp()).abs() < 1e-14);
    }
}
