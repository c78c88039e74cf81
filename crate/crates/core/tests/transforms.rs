mod common;

use common::{flat, repo_model, term};
use multistate::backward::{thiele_solve, ReserveField, SolveOptions};
use multistate::compare::{prune_irrelevant, transform_cemetery, transform_reserve_dependent, transform_shorten};
use multistate::measure::{PiecewiseFn, StieltjesMeasure};
use multistate::model::{ReserveDependence, StateDependence};
use multistate::Error;

fn solve(m: &multistate::model::Model) -> ReserveField {
    thiele_solve(m, &SolveOptions::new(0.01)).unwrap()
}

fn gap(a: &ReserveField, b: &ReserveField, states: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for &s in states {
        for q in 0..=100 {
            let t = a.end() * q as f64 / 100.0;
            worst = worst.max((a.value(s, t).unwrap() - b.value(s, t).unwrap()).abs());
        }
    }
    worst
}

#[test]
fn pruning_disability_to_all_states_keeps_everything() {
    let dis = repo_model("disability");
    assert_eq!(prune_irrelevant(&dis, &[0, 1, 2]).unwrap(), dis);
}

#[test]
fn pruning_must_not_cut_live_rates() {
    let dis = repo_model("disability");
    assert!(matches!(prune_irrelevant(&dis, &[0, 1]), Err(Error::Precondition(_))));
}

#[test]
fn shorten_with_nothing_to_cut_is_identity() {
    let m = term(0.1, 0.05, 10.0);
    let v = solve(&m);
    assert_eq!(transform_shorten(&m, &[0, 1], &v).unwrap(), m);
}

#[test]
fn shorten_is_a_fixed_point() {
    let annuity = term(0.1, 0.05, 10.0).with_sojourn(1, flat(0.3, 10.0));
    let once = transform_shorten(&annuity, &[0], &solve(&annuity)).unwrap();
    let v_once = solve(&once);
    let twice = transform_shorten(&once, &[0], &v_once).unwrap();
    assert!(gap(&v_once, &solve(&twice), &[0, 1]) <= 1e-12);
    assert!(gap(&solve(&annuity), &v_once, &[0]) <= 1e-8);
}

#[test]
fn continuous_cemetery_keeps_sojourn_payments() {
    let mut m = term(0.1, 0.05, 10.0).with_sojourn(0, flat(-0.2, 10.0));
    m.cashflow.transition.clear();
    let bar = transform_cemetery(&m, &[0]).unwrap();
    assert_eq!(bar.cashflow.sojourn[&0], m.cashflow.sojourn[&0]);
    assert!(bar.rate(0, 1).is_none());
    assert!((bar.interest(0).density_at(3.0) - 0.15).abs() <= 1e-15);
}

#[test]
fn cemetery_refuses_a_death_benefit() {
    let m = term(0.1, 0.05, 10.0);
    match transform_cemetery(&m, &[0]) {
        Err(Error::Precondition(msg)) => assert!(msg.contains("0->1"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn expense_loading_lowers_the_interest() {
    let mut loaded = term(0.1, 0.05, 10.0);
    let mut dep = ReserveDependence::default();
    dep.states.insert(0, StateDependence { a0: StieltjesMeasure::zero(), a1: flat(0.01, 10.0) });
    loaded.cashflow.reserve_dependence = Some(dep);
    let explicit = transform_reserve_dependent(&loaded).unwrap();
    assert!((explicit.interest(0).density_at(4.0) - 0.04).abs() <= 1e-15);
    let plain = solve(&term(0.1, 0.05, 10.0)).value(0, 0.0).unwrap();
    let v = solve(&explicit).value(0, 0.0).unwrap();
    let closed = 0.1 / 0.14 * (1.0 - (-1.4f64).exp());
    assert!(v > plain);
    assert!((v - closed).abs() <= 1e-8, "{v} vs {closed}");
}

#[test]
fn reserve_dependence_without_coefficients_is_identity() {
    let mut m = term(0.1, 0.05, 10.0);
    let mut dep = ReserveDependence::default();
    dep.pairs.insert(
        (0, 1),
        multistate::model::PairDependence { a0: PiecewiseFn::zero(), a1: 0.0 },
    );
    m.cashflow.reserve_dependence = Some(dep);
    let explicit = transform_reserve_dependent(&m).unwrap();
    assert!(gap(&solve(&explicit), &solve(&term(0.1, 0.05, 10.0)), &[0, 1]) <= 1e-14);
}
