use super::{Dependence, Model, PathRule};
use crate::error::{Error, Result};
use crate::measure::{Atom, PiecewiseFn, RateCurve, StieltjesMeasure};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    StateSpace,
    Alpha,
    Horizon,
    Structure,
    AtomMass,
    /// Simultaneous atoms out of one state exceed total mass 1.
    AtomSum,
    /// Pole and reset declarations disagree.
    ResetPoint,
    /// A cycle made only of rates unbounded on compacts.
    UnboundedCycle,
    AbsorbingHint,
    InterestAtom,
    ReserveDependence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, message: String) {
        self.violations.push(Violation { kind, message });
    }
}

fn finite_fn(f: &PiecewiseFn, what: &str) -> Result<()> {
    for s in &f.segments {
        if !(s.start.is_finite() && s.end.is_finite()) || !s.shape.is_well_formed() {
            return Err(Error::Input(format!("{what}: non-finite or malformed segment")));
        }
    }
    Ok(())
}

fn finite_atoms(atoms: &[Atom], what: &str) -> Result<()> {
    if atoms.iter().any(|a| !(a.at.is_finite() && a.mass.is_finite())) {
        return Err(Error::Input(format!("{what}: non-finite atom")));
    }
    Ok(())
}

fn finite_measure(m: &StieltjesMeasure, what: &str) -> Result<()> {
    finite_fn(&m.density, what)?;
    finite_atoms(&m.atoms, what)
}

fn non_negative_density(f: &PiecewiseFn, what: &str) -> Result<()> {
    for (k, s) in f.segments.iter().enumerate() {
        if s.shape.bounds(s.start, s.end).0 < 0.0 {
            return Err(Error::Input(format!("{what}: negative density in segment {k}")));
        }
    }
    Ok(())
}

fn structure(report: &mut ValidationReport, f: &PiecewiseFn, what: &str) {
    for issue in f.structural_issues() {
        report.push(ViolationKind::Structure, format!("{what}: {issue}"));
    }
}

fn check_resets(report: &mut ValidationReport, c: &RateCurve, what: &str) {
    let poles = c.density.poles();
    for (r, strength) in &poles {
        if *strength <= 0.0 {
            report.push(
                ViolationKind::ResetPoint,
                format!("{what}: pole at {r} must have positive strength"),
            );
        }
        if !c.resets.contains(r) {
            report.push(
                ViolationKind::ResetPoint,
                format!("{what}: pole ends at {r}, which is not a declared reset point"),
            );
        }
    }
    for r in &c.resets {
        if !poles.iter().any(|(p, _)| p == r) {
            report.push(
                ViolationKind::ResetPoint,
                format!("{what}: reset point {r} has no pole ending at it"),
            );
        }
    }
}

/// Check the standing assumptions on a model.
///
/// Violations are returned as data; non-finite numbers and negative
/// densities are input errors.
pub fn validate_model(model: &Model) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let labels = &model.states.states;

    if labels.is_empty() {
        report.push(ViolationKind::StateSpace, "state space is empty".into());
    }
    let unique: BTreeSet<usize> = labels.iter().copied().collect();
    if unique.len() != labels.len() {
        report.push(ViolationKind::StateSpace, "state labels are not unique".into());
    }

    if model.alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Input("alpha contains non-finite entries".into()));
    }
    if model.alpha.len() != labels.len() {
        report.push(
            ViolationKind::Alpha,
            format!("alpha has {} entries for {} states", model.alpha.len(), labels.len()),
        );
    }
    if model.alpha.iter().any(|&a| a < 0.0) {
        report.push(ViolationKind::Alpha, "alpha has negative entries".into());
    }
    let total: f64 = model.alpha.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        report.push(ViolationKind::Alpha, format!("alpha sums to {total}, not 1"));
    }

    if !model.horizon.is_finite() {
        return Err(Error::Input("horizon must be finite".into()));
    }
    if model.horizon <= 0.0 {
        report.push(ViolationKind::Horizon, format!("horizon {} is not positive", model.horizon));
    }

    // transition rates
    for (&(i, j), rate) in &model.lambda {
        let what = format!("lambda {i}->{j}");
        finite_fn(&rate.curve.density, &what)?;
        finite_atoms(&rate.curve.atoms, &what)?;
        if rate.curve.resets.iter().any(|r| !r.is_finite()) {
            return Err(Error::Input(format!("{what}: non-finite reset point")));
        }
        non_negative_density(&rate.curve.density, &what)?;
        if let Dependence::PathDependent(PathRule::JumpCountScaled { factor }) = &rate.dependence {
            if !factor.is_finite() {
                return Err(Error::Input(format!("{what}: non-finite scale factor")));
            }
            if *factor < 0.0 {
                return Err(Error::Input(format!("{what}: negative scale factor")));
            }
            if *factor > 1.0 && !rate.curve.atoms.is_empty() {
                report.push(
                    ViolationKind::AtomMass,
                    format!("{what}: atoms scaled by a factor above 1 can exceed mass 1"),
                );
            }
        }
        if i == j {
            report.push(ViolationKind::Structure, format!("{what}: self transition"));
        }
        if !model.states.contains(i) || !model.states.contains(j) {
            report.push(ViolationKind::StateSpace, format!("{what}: unknown state"));
        }
        structure(&mut report, &rate.curve.density, &what);
        for a in &rate.curve.atoms {
            if !(0.0..=1.0).contains(&a.mass) {
                report.push(
                    ViolationKind::AtomMass,
                    format!("{what}: atom mass {} at {} outside [0, 1]", a.mass, a.at),
                );
            }
        }
        check_resets(&mut report, &rate.curve, &what);
    }

    // simultaneous atoms, per source state and per time axis
    let mut sums: BTreeMap<(usize, bool, u64), f64> = BTreeMap::new();
    for (&(i, _), rate) in &model.lambda {
        let duration_axis = rate.dependence == Dependence::SemiMarkov;
        for a in &rate.curve.atoms {
            *sums.entry((i, duration_axis, a.at.to_bits())).or_insert(0.0) += a.mass;
        }
    }
    for ((i, duration_axis, bits), total) in sums {
        if total > 1.0 + 1e-12 {
            let axis = if duration_axis { "duration" } else { "time" };
            report.push(
                ViolationKind::AtomSum,
                format!(
                    "state {i}: simultaneous atoms at {axis} {} sum to {total} > 1",
                    f64::from_bits(bits)
                ),
            );
        }
    }

    // subgraph of rates unbounded on compacts must be acyclic
    let unbounded: Vec<(usize, usize)> = model
        .lambda
        .iter()
        .filter(|(_, r)| !r.is_bounded())
        .map(|(&k, _)| k)
        .collect();
    if let Some(cycle) = find_cycle(&unbounded) {
        let text: Vec<String> = cycle.iter().map(|s| s.to_string()).collect();
        report.push(
            ViolationKind::UnboundedCycle,
            format!(
                "cycle {} consists only of rates unbounded on compacts (every cycle needs a bounded rate)",
                text.join("->")
            ),
        );
    }

    if let Some(hint) = &model.states.absorbing_hint {
        for &i in hint {
            if model.row(i).any(|(_, r)| !r.curve.is_zero()) {
                report.push(
                    ViolationKind::AbsorbingHint,
                    format!("state {i} is flagged absorbing but has outgoing rates"),
                );
            }
        }
    }

    for (&i, m) in &model.phi {
        let what = format!("phi {i}");
        finite_measure(m, &what)?;
        structure(&mut report, &m.density, &what);
        if !model.states.contains(i) {
            report.push(ViolationKind::StateSpace, format!("{what}: unknown state"));
        }
        for a in &m.atoms {
            if a.mass <= -1.0 {
                report.push(
                    ViolationKind::InterestAtom,
                    format!("{what}: interest atom {} at {} is not above -1", a.mass, a.at),
                );
            }
        }
    }
    for (&i, m) in &model.cashflow.sojourn {
        let what = format!("sojourn {i}");
        finite_measure(m, &what)?;
        structure(&mut report, &m.density, &what);
        if !model.states.contains(i) {
            report.push(ViolationKind::StateSpace, format!("{what}: unknown state"));
        }
    }
    for (&(i, j), b) in &model.cashflow.transition {
        let what = format!("transition {i}->{j}");
        finite_fn(b, &what)?;
        structure(&mut report, b, &what);
        if !b.is_bounded() {
            report.push(ViolationKind::Structure, format!("{what}: payment must be bounded"));
        }
        if !model.states.contains(i) || !model.states.contains(j) {
            report.push(ViolationKind::StateSpace, format!("{what}: unknown state"));
        }
    }

    if let Some(dep) = &model.cashflow.reserve_dependence {
        for (&(k, l), p) in &dep.pairs {
            let what = format!("reserve_dependence {k}->{l}");
            finite_fn(&p.a0, &what)?;
            if !p.a1.is_finite() {
                return Err(Error::Input(format!("{what}: non-finite a1")));
            }
            if !(0.0..1.0).contains(&p.a1) {
                report.push(
                    ViolationKind::ReserveDependence,
                    format!("{what}: a1 = {} must lie in [0, 1)", p.a1),
                );
            }
            for s in &p.a0.segments {
                if s.shape.bounds(s.start, s.end).0 < 0.0 {
                    report.push(
                        ViolationKind::ReserveDependence,
                        format!("{what}: a0 must be non-negative"),
                    );
                    break;
                }
            }
            if !p.a0.is_bounded() {
                report.push(ViolationKind::ReserveDependence, format!("{what}: a0 must be bounded"));
            }
        }
        for (&k, s) in &dep.states {
            let what = format!("reserve_dependence state {k}");
            finite_measure(&s.a0, &what)?;
            finite_measure(&s.a1, &what)?;
            let phi = model.phi.get(&k).cloned().unwrap_or_default();
            let net = phi.plus(&s.a1.scaled(-1.0));
            for a in &net.atoms {
                if a.mass <= -1.0 {
                    report.push(
                        ViolationKind::ReserveDependence,
                        format!("{what}: atom of phi - A1 at {} is not above -1", a.at),
                    );
                }
            }
        }
    }

    Ok(report)
}

/// A directed cycle in the edge list, as a closed state sequence.
fn find_cycle(edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut mark: BTreeMap<usize, u8> = BTreeMap::new();
    let nodes: Vec<usize> = adj.keys().copied().collect();
    for start in nodes {
        if mark.get(&start).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        mark.insert(start, 1);
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let succ = adj.get(&node).map_or(&[][..], |v| v.as_slice());
            if *next < succ.len() {
                let s = succ[*next];
                *next += 1;
                match mark.get(&s).copied().unwrap_or(0) {
                    0 => {
                        mark.insert(s, 1);
                        stack.push((s, 0));
                    }
                    1 => {
                        let pos = stack.iter().position(|&(n, _)| n == s).unwrap_or(0);
                        let mut cycle: Vec<usize> = stack[pos..].iter().map(|&(n, _)| n).collect();
                        cycle.push(s);
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                mark.insert(node, 2);
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, RateCurve, Segment, Shape};
    use crate::model::CumulativeRate;

    #[test]
    fn simple_model_is_valid() {
        let m = Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 10.0)));
        assert!(validate_model(&m).unwrap().is_valid());
    }

    #[test]
    fn unbounded_cycle_detected() {
        let pole = |r: f64| {
            CumulativeRate::markov(RateCurve::pole(1.0, r))
        };
        let m = Model::new(vec![0, 1], 10.0).with_rate(0, 1, pole(1.0)).with_rate(1, 0, pole(2.0));
        let rep = validate_model(&m).unwrap();
        assert!(rep.has(ViolationKind::UnboundedCycle), "{rep:?}");
        let ok = Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, pole(1.0))
            .with_rate(1, 0, CumulativeRate::markov(RateCurve::constant(1.0, 10.0)));
        assert!(validate_model(&ok).unwrap().is_valid());
    }

    #[test]
    fn atom_sum_detected() {
        let a = CumulativeRate::markov(RateCurve::from_atoms(vec![Atom::new(1.0, 0.6)]));
        let m = Model::new(vec![0, 1, 2], 10.0)
            .with_rate(0, 1, a.clone())
            .with_rate(0, 2, a);
        assert!(validate_model(&m).unwrap().has(ViolationKind::AtomSum));
    }

    #[test]
    fn negative_density_is_input_error() {
        let m = Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(-0.1, 10.0)));
        assert!(matches!(validate_model(&m), Err(Error::Input(_))));
    }

    #[test]
    fn nan_is_input_error() {
        let m = Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(f64::NAN, 10.0)));
        assert!(matches!(validate_model(&m), Err(Error::Input(_))));
    }

    #[test]
    fn reset_without_pole_and_detached_pole() {
        let mut c = RateCurve::constant(0.1, 2.0);
        c.resets.push(1.0);
        let m = Model::new(vec![0, 1], 10.0).with_rate(0, 1, CumulativeRate::markov(c));
        assert!(validate_model(&m).unwrap().has(ViolationKind::ResetPoint));

        let c = RateCurve::from_density(PiecewiseFn::new(vec![Segment::new(
            0.0,
            1.0,
            Shape::Pole {
                strength: 1.0,
                reset: 1.0,
            },
        )]));
        let m = Model::new(vec![0, 1], 10.0).with_rate(0, 1, CumulativeRate::markov(c));
        assert!(validate_model(&m).unwrap().has(ViolationKind::ResetPoint));
    }

    #[test]
    fn alpha_and_absorbing_hint() {
        let mut m = Model::new(vec![0, 1], 10.0)
            .with_alpha(vec![0.5, 0.4])
            .with_rate(1, 0, CumulativeRate::markov(RateCurve::constant(0.1, 10.0)));
        m.states.absorbing_hint = Some(vec![1]);
        let rep = validate_model(&m).unwrap();
        assert!(rep.has(ViolationKind::Alpha));
        assert!(rep.has(ViolationKind::AbsorbingHint));
    }
}
