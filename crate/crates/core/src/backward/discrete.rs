//! Recursions for models living on integer time points.

use super::{ReserveField, Terminal};
use crate::error::{Error, Result};
use crate::model::{Model, Regime};

fn require_discrete(model: &Model) -> Result<()> {
    if !model.is_discrete() {
        return Err(Error::UnsupportedRegime(
            "recursion needs rates, interest and sojourn payments as atoms at integer times".into(),
        ));
    }
    Ok(())
}

/// One step `V(n) -> V(n-)`; payments and interest only when `pay`.
fn step(model: &Model, n: f64, v: &[f64], pay: bool) -> Vec<f64> {
    let labels = model.labels();
    let mut out = vec![0.0; v.len()];
    for (a, &i) in labels.iter().enumerate() {
        let mut num = v[a];
        if pay {
            num += model.sojourn(i).atom_at(n);
        }
        for (j, rate) in model.row(i) {
            let q = rate.curve.view().atom_at(n);
            if q == 0.0 {
                continue;
            }
            let b = model.index(j).expect("validated state");
            let pay_j = if pay { model.transition_payment(i, j, n) } else { 0.0 };
            num += (pay_j + v[b] - v[a]) * q;
        }
        let r = if pay { model.interest(i).atom_at(n) } else { 0.0 };
        out[a] = num / (1.0 + r);
    }
    out
}

fn recurse(model: &Model, end: usize, terminal_values: Vec<f64>, pay: bool, terminal: Terminal) -> ReserveField {
    let n = model.n_states();
    let mut right = vec![vec![0.0; n]; end + 1];
    let mut left = vec![vec![0.0; n]; end + 1];
    right[end] = terminal_values;
    for k in (1..=end).rev() {
        left[k] = step(model, k as f64, &right[k], pay);
        right[k - 1] = left[k].clone();
    }
    left[0] = right[0].clone();
    ReserveField {
        regime: Regime::Discrete,
        terminal,
        labels: model.labels().to_vec(),
        times: (0..=end).map(|k| k as f64).collect(),
        right,
        left,
        slope_right: vec![vec![0.0; n]; end + 1],
        slope_left: vec![vec![0.0; n]; end + 1],
        durations: None,
    }
}

/// `V^i(n-1) = (V^i(n) + ΔB^i(n) + Σ_j (b^{ij}(n) + V^j(n) - V^i(n)) q^{ij}(n)) / (1 + ΔΦ^i(n))`
/// from `V(T) = 0`.
pub fn thiele_discrete_recursion(model: &Model, horizon: usize) -> Result<ReserveField> {
    require_discrete(model)?;
    let zero = vec![0.0; model.n_states()];
    Ok(recurse(
        model,
        horizon,
        zero,
        true,
        Terminal::Reserve {
            horizon: horizon as f64,
        },
    ))
}

/// `P(Z(T) = k | Z(n) = i)` for integer `n <= T`.
pub fn kolmogorov_discrete_recursion(model: &Model, horizon: usize, target_state: usize) -> Result<ReserveField> {
    require_discrete(model)?;
    let k = model.index(target_state)?;
    let mut e = vec![0.0; model.n_states()];
    e[k] = 1.0;
    Ok(recurse(
        model,
        horizon,
        e,
        false,
        Terminal::Probability {
            state: target_state,
            time: horizon as f64,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, PiecewiseFn, RateCurve, StieltjesMeasure};
    use crate::model::CumulativeRate;

    fn halves() -> Model {
        let q = RateCurve::from_atoms(vec![Atom::new(1.0, 0.5), Atom::new(2.0, 0.5)]);
        Model::new(vec![0, 1], 2.0).with_rate(0, 1, CumulativeRate::markov(q))
    }

    #[test]
    fn survival_over_two_periods() {
        let p = kolmogorov_discrete_recursion(&halves(), 2, 0).unwrap();
        assert_eq!(p.value(0, 0.0).unwrap(), 0.25);
        assert_eq!(p.value(0, 1.0).unwrap(), 0.5);
        assert_eq!(p.value(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_horizon_is_identity() {
        let p = kolmogorov_discrete_recursion(&halves(), 0, 1).unwrap();
        assert_eq!(p.value(1, 0.0).unwrap(), 1.0);
        assert_eq!(p.value(0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn term_cover_with_discounting() {
        let m = halves()
            .with_transition(0, 1, PiecewiseFn::constant(1.0, 2.0))
            .with_interest_all(StieltjesMeasure::from_atoms(vec![Atom::new(1.0, 0.0), Atom::new(2.0, 0.0)]));
        let v = thiele_discrete_recursion(&m, 2).unwrap();
        assert_eq!(v.value(0, 0.0).unwrap(), 0.75);
    }

    #[test]
    fn continuous_model_rejected() {
        let m = Model::new(vec![0, 1], 2.0).with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.1, 2.0)));
        assert!(matches!(thiele_discrete_recursion(&m, 2), Err(Error::UnsupportedRegime(_))));
    }
}
