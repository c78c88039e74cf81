//! Model changes that leave (some of) the state-wise reserves unchanged.

use crate::backward::ReserveField;
use crate::error::{Error, Result};
use crate::measure::{merge_atoms, Atom, PiecewiseFn, StieltjesMeasure};
use crate::model::{Dependence, Model};
use std::collections::BTreeSet;

fn split(model: &Model, z0: &[usize]) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
    let mut zero = BTreeSet::new();
    for &s in z0 {
        model.index(s)?;
        zero.insert(s);
    }
    let one = model.labels().iter().copied().filter(|s| !zero.contains(s)).collect();
    Ok((zero, one))
}

fn no_reserve_dependence(model: &Model, what: &str) -> Result<()> {
    if model.has_reserve_dependence() {
        return Err(Error::Precondition(format!(
            "{what} needs explicit payments; resolve reserve dependence first"
        )));
    }
    Ok(())
}

/// First nonzero rate from `from` into `to`.
fn rate_between(model: &Model, from: &BTreeSet<usize>, to: &BTreeSet<usize>) -> Option<(usize, usize)> {
    model
        .lambda
        .iter()
        .find(|(&(i, j), r)| from.contains(&i) && to.contains(&j) && !r.curve.is_zero())
        .map(|(&k, _)| k)
}

/// Replace the initial distribution. Solvers never read it, so reserves are
/// unchanged.
pub fn set_initial_distribution(model: &Model, alpha: Vec<f64>) -> Result<Model> {
    if alpha.len() != model.n_states() {
        return Err(Error::Input(format!(
            "alpha has {} entries for {} states",
            alpha.len(),
            model.n_states()
        )));
    }
    if alpha.iter().any(|&a| !(a.is_finite() && a >= 0.0)) {
        return Err(Error::Input("alpha must be non-negative".into()));
    }
    let sum: f64 = alpha.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Input(format!("alpha sums to {sum}, not 1")));
    }
    Ok(model.clone().with_alpha(alpha))
}

/// Drop everything the reserves of `z0` cannot see: payments into the
/// complement and all rates and payments out of it. Requires that no rate
/// leads from `z0` into the complement.
pub fn prune_irrelevant(model: &Model, z0: &[usize]) -> Result<Model> {
    let (zero, one) = split(model, z0)?;
    if let Some((i, j)) = rate_between(model, &zero, &one) {
        return Err(Error::Precondition(format!(
            "rate {i}->{j} leads out of the kept states"
        )));
    }
    let mut out = model.clone();
    out.lambda.retain(|(i, _), _| zero.contains(i));
    out.cashflow.sojourn.retain(|i, _| zero.contains(i));
    out.cashflow
        .transition
        .retain(|(i, j), _| zero.contains(i) && zero.contains(j));
    if let Some(dep) = out.cashflow.reserve_dependence.as_mut() {
        dep.pairs.retain(|(i, j), _| zero.contains(i) && zero.contains(j));
        dep.states.retain(|i, _| zero.contains(i));
    }
    Ok(out)
}

/// Pay the complement's reserve as a lump sum on entering it:
/// `b̄^{ij} = b^{ij} + V^j` for `i` in `z0`, `j` outside, and no payments
/// inside the complement. Requires no rate back into `z0`.
pub fn transform_shorten(model: &Model, z0: &[usize], reserves: &ReserveField) -> Result<Model> {
    no_reserve_dependence(model, "shortening")?;
    let (zero, one) = split(model, z0)?;
    if let Some((j, i)) = rate_between(model, &one, &zero) {
        return Err(Error::Precondition(format!(
            "rate {j}->{i} returns into the kept states"
        )));
    }
    let mut out = model.clone();
    for (&(i, j), rate) in &model.lambda {
        if !(zero.contains(&i) && one.contains(&j)) || rate.curve.is_zero() {
            continue;
        }
        let v = reserves.state_function(j)?;
        if v.is_zero() {
            continue;
        }
        let b = model
            .cashflow
            .transition
            .get(&(i, j))
            .map_or_else(|| v.clone(), |b| b.plus(&v));
        out.cashflow.transition.insert((i, j), b);
    }
    out.cashflow.sojourn.retain(|j, _| !one.contains(j));
    out.cashflow
        .transition
        .retain(|(i, j), _| !(one.contains(i) && one.contains(j)));
    Ok(out)
}

/// Fold transitions into payment-free absorbing states into the interest:
/// continuous parts add the rates to `Φ`, an instant with total atom mass
/// `m` into the complement becomes `1 + ΔΦ̄ = (1 + ΔΦ)/(1 - m)` and
/// `ΔB̄ = ΔB/(1 - m)`.
pub fn transform_cemetery(model: &Model, z0: &[usize]) -> Result<Model> {
    no_reserve_dependence(model, "the cemetery transform")?;
    let (zero, one) = split(model, z0)?;
    let mut failed = Vec::new();
    if let Some((j, i)) = rate_between(model, &one, &zero) {
        failed.push(format!("rate {j}->{i} returns into the kept states"));
    }
    for (&(i, j), b) in &model.cashflow.transition {
        if zero.contains(&i) && one.contains(&j) && !b.is_zero() {
            failed.push(format!("transition payment {i}->{j} into a cemetery state"));
        }
        if one.contains(&i) && one.contains(&j) && !b.is_zero() {
            failed.push(format!("transition payment {i}->{j} between cemetery states"));
        }
    }
    for (&j, b) in &model.cashflow.sojourn {
        if one.contains(&j) && !b.is_zero() {
            failed.push(format!("sojourn payment in cemetery state {j}"));
        }
    }
    for (&(i, l), r) in &model.lambda {
        if zero.contains(&i) && zero.contains(&l) && r.curve.atoms.iter().any(|a| a.mass != 0.0) {
            failed.push(format!("rate {i}->{l} between kept states has atoms"));
        }
        if zero.contains(&i) && one.contains(&l) && !r.curve.is_zero() {
            if r.dependence != Dependence::Markov {
                failed.push(format!("rate {i}->{l} into a cemetery state is not a calendar-time rate"));
            } else if !r.curve.resets.is_empty() || !r.curve.is_bounded() {
                failed.push(format!("rate {i}->{l} into a cemetery state has a reset point"));
            }
        }
    }
    if !failed.is_empty() {
        return Err(Error::Precondition(failed.join("; ")));
    }

    let mut out = model.clone();
    for &i in &zero {
        let into: Vec<_> = model
            .lambda
            .iter()
            .filter(|(&(a, b), r)| a == i && one.contains(&b) && !r.curve.is_zero())
            .map(|(_, r)| &r.curve)
            .collect();
        if into.is_empty() {
            continue;
        }
        let mut density = PiecewiseFn::zero();
        let mut exit_atoms = Vec::new();
        for c in &into {
            density = density.plus(&c.density);
            exit_atoms.extend(c.atoms.iter().copied());
        }
        let exit_atoms = merge_atoms(exit_atoms);
        let phi = model.phi.get(&i).cloned().unwrap_or_default();
        let sojourn = model.cashflow.sojourn.get(&i).cloned();

        let mut phi_atoms = Vec::new();
        let mut times: Vec<f64> = phi.atoms.iter().chain(&exit_atoms).map(|a| a.at).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mass_at = |atoms: &[Atom], t: f64| atoms.iter().filter(|a| a.at == t).map(|a| a.mass).sum::<f64>();
        for &t in &times {
            let m = mass_at(&exit_atoms, t);
            if m >= 1.0 {
                return Err(Error::Precondition(format!(
                    "state {i} leaves to the cemetery with certainty at {t}"
                )));
            }
            let d = (1.0 + mass_at(&phi.atoms, t)) / (1.0 - m) - 1.0;
            phi_atoms.push(Atom::new(t, d));
        }
        out.phi.insert(
            i,
            StieltjesMeasure {
                density: phi.density.plus(&density),
                atoms: phi_atoms,
            },
        );
        if let Some(b) = sojourn {
            let atoms = b
                .atoms
                .iter()
                .map(|a| Atom::new(a.at, a.mass / (1.0 - mass_at(&exit_atoms, a.at))))
                .collect();
            out.cashflow.sojourn.insert(
                i,
                StieltjesMeasure {
                    density: b.density,
                    atoms,
                },
            );
        }
        out.lambda.retain(|&(a, b), _| !(a == i && one.contains(&b)));
    }
    Ok(out)
}

/// Resolve `b^{kl} = b + a0 + a1 (V^k - V^l)` and
/// `B^k(dt) = B(dt) + A0(dt) + V^k(t-) A1(dt)` into explicit payments:
/// `b̄ = (b + a0)/(1 - a1)`, `Λ̄ = (1 - a1) Λ`, `B̄ = B + A0`, `Φ̄ = Φ - A1`.
pub fn transform_reserve_dependent(model: &Model) -> Result<Model> {
    let Some(dep) = model.cashflow.reserve_dependence.as_ref() else {
        return Ok(model.clone());
    };
    let mut out = model.clone();
    out.cashflow.reserve_dependence = None;
    for (&(k, l), p) in &dep.pairs {
        if !(p.a1 >= 0.0 && p.a1 < 1.0) {
            return Err(Error::Precondition(format!(
                "coefficient a1 of {k}->{l} must lie in [0, 1), got {}",
                p.a1
            )));
        }
        let end = p.a0.domain_end().max(model.horizon);
        let (lo, hi) = p
            .a0
            .pieces(0.0, end)
            .iter()
            .map(|piece| piece.shape.bounds(piece.lo, piece.hi))
            .fold((p.a0.tail_value(), p.a0.tail_value()), |(a, b), (x, y)| (a.min(x), b.max(y)));
        if !(lo >= 0.0 && hi.is_finite()) {
            return Err(Error::Precondition(format!(
                "coefficient a0 of {k}->{l} must be non-negative and bounded"
            )));
        }
        let scale = 1.0 / (1.0 - p.a1);
        let b = model.cashflow.transition.get(&(k, l)).cloned().unwrap_or_default();
        out.cashflow.transition.insert((k, l), b.plus(&p.a0).scaled(scale));
        if let Some(rate) = model.lambda.get(&(k, l)) {
            out.lambda.insert((k, l), rate.scaled(1.0 - p.a1));
        }
    }
    for (&k, s) in &dep.states {
        let phi = model.phi.get(&k).cloned().unwrap_or_default();
        let new_phi = phi.plus(&s.a1.scaled(-1.0));
        if let Some(a) = new_phi.atoms.iter().find(|a| a.mass <= -1.0) {
            return Err(Error::Precondition(format!(
                "interest minus A1 of state {k} has an atom {} <= -1 at {}",
                a.mass, a.at
            )));
        }
        out.phi.insert(k, new_phi);
        let b = model.cashflow.sojourn.get(&k).cloned().unwrap_or_default();
        out.cashflow.sojourn.insert(k, b.plus(&s.a0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::{thiele_solve, SolveOptions};
    use crate::measure::RateCurve;
    use crate::model::{CumulativeRate, PairDependence, ReserveDependence};

    #[test]
    fn alpha_must_be_a_distribution() {
        let m = Model::new(vec![0, 1], 1.0);
        assert!(set_initial_distribution(&m, vec![0.5, 0.5]).is_ok());
        assert!(matches!(set_initial_distribution(&m, vec![0.5, 0.6]), Err(Error::Input(_))));
        assert!(matches!(set_initial_distribution(&m, vec![1.0]), Err(Error::Input(_))));
    }

    #[test]
    fn prune_guard_names_the_pair() {
        let m = Model::new(vec![0, 1], 1.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 1.0)))
            .with_sojourn(1, StieltjesMeasure::from_density(PiecewiseFn::constant(1.0, 1.0)));
        match prune_irrelevant(&m, &[0]) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("0->1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cemetery_rejects_death_benefit() {
        let m = Model::new(vec![0, 1], 1.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 1.0)))
            .with_transition(0, 1, PiecewiseFn::constant(1.0, 1.0));
        assert!(matches!(transform_cemetery(&m, &[0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn cemetery_pure_endowment() {
        let m = Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 10.0)))
            .with_interest_all(StieltjesMeasure::from_density(PiecewiseFn::constant(0.05, 10.0)))
            .with_sojourn(0, StieltjesMeasure::from_atoms(vec![Atom::new(10.0, 1.0)]));
        let t = transform_cemetery(&m, &[0]).unwrap();
        assert!(t.lambda.is_empty());
        assert!((t.phi[&0].density.value(3.0) - 0.15).abs() < 1e-15);
        let v = thiele_solve(&t, &SolveOptions::new(1.0)).unwrap();
        assert!((v.value(0, 0.0).unwrap() - (-1.5f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn cemetery_with_atoms_matches_original() {
        let m = Model::new(vec![0, 1], 3.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::from_atoms(vec![Atom::new(1.0, 0.2), Atom::new(2.0, 0.3)])))
            .with_interest_all(StieltjesMeasure::from_atoms(vec![Atom::new(2.0, 0.05), Atom::new(3.0, 0.05)]))
            .with_sojourn(0, StieltjesMeasure::from_atoms(vec![Atom::new(2.0, -0.4), Atom::new(3.0, 1.0)]));
        let opts = SolveOptions::new(0.5);
        let a = thiele_solve(&m, &opts).unwrap().value(0, 0.0).unwrap();
        let b = thiele_solve(&transform_cemetery(&m, &[0]).unwrap(), &opts).unwrap().value(0, 0.0).unwrap();
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }

    #[test]
    fn surrender_coefficients() {
        let mut m = Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.05, 10.0)));
        let mut dep = ReserveDependence::default();
        dep.pairs.insert(
            (0, 1),
            PairDependence {
                a0: PiecewiseFn::zero(),
                a1: 0.9,
            },
        );
        m.cashflow.reserve_dependence = Some(dep);
        let t = transform_reserve_dependent(&m).unwrap();
        assert!((t.lambda[&(0, 1)].curve.density.value(2.0) - 0.005).abs() < 1e-16);
        assert!(t.cashflow.transition[&(0, 1)].is_zero());
        assert!(!t.has_reserve_dependence());
    }

    #[test]
    fn no_dependence_is_identity() {
        let m = Model::new(vec![0, 1], 10.0)
            .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.05, 10.0)));
        assert_eq!(transform_reserve_dependent(&m).unwrap(), m);
    }
}
