#![allow(dead_code)]

use multistate::io::load_model;
use multistate::measure::{Atom, Interp, PiecewiseFn, RateCurve, Shape, StieltjesMeasure, Table};
use multistate::model::{CumulativeRate, Model};

pub fn repo_model(name: &str) -> Model {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(format!("{name}.json"));
    load_model(&path, false).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn flat(v: f64, end: f64) -> StieltjesMeasure {
    StieltjesMeasure::from_density(PiecewiseFn::constant(v, end))
}

/// Alive/dead, constant mortality and interest, benefit 1 on death.
pub fn term(mu: f64, r: f64, t: f64) -> Model {
    Model::new(vec![0, 1], t)
        .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(mu, t)))
        .with_interest_all(flat(r, t))
        .with_transition(0, 1, PiecewiseFn::constant(1.0, t))
}

pub fn term_closed_form(mu: f64, r: f64, t: f64, s: f64) -> f64 {
    mu / (mu + r) * (1.0 - (-(mu + r) * (t - s)).exp())
}

/// Alive/dead, survival benefit 1 at `t`.
pub fn endowment(mu: f64, r: f64, t: f64) -> Model {
    Model::new(vec![0, 1], t)
        .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(mu, t)))
        .with_interest_all(flat(r, t))
        .with_sojourn(0, StieltjesMeasure::from_atoms(vec![Atom::new(t, 1.0)]))
}

/// Tabulated yearly mortality, left-constant.
pub fn life_table(t: f64) -> Model {
    let knots: Vec<f64> = (0..=t as usize).map(|k| k as f64).collect();
    let values: Vec<f64> = knots.iter().map(|k| 0.01 * (1.09f64).powf(*k)).collect();
    let shape = Shape::Table(Table::new(knots, values, Interp::LeftConstant));
    Model::new(vec![0, 1], t).with_rate(
        0,
        1,
        CumulativeRate::markov(RateCurve::from_density(PiecewiseFn::single(t, shape))),
    )
}

/// Three states with continuous rates plus yearly atoms out of state 0.
pub fn atom_model() -> Model {
    let atoms: Vec<Atom> = (1..=4).map(|k| Atom::new(k as f64, 0.1)).collect();
    Model::new(vec![0, 1, 2], 5.0)
        .with_rate(0, 1, CumulativeRate::markov(RateCurve::constant(0.2, 5.0).with_atoms(atoms)))
        .with_rate(0, 2, CumulativeRate::markov(RateCurve::constant(0.05, 5.0)))
        .with_rate(1, 2, CumulativeRate::markov(RateCurve::constant(0.1, 5.0)))
}

/// Forced exit before time 1 with rate `1/(1 - t)`.
pub fn pole_model() -> Model {
    Model::new(vec![0, 1], 1.0).with_rate(0, 1, CumulativeRate::markov(RateCurve::pole(1.0, 1.0)))
}

/// Exact distribution of the state sequence of a model with jumps only at
/// integer times: every sequence `z_0..z_T` with its probability.
pub fn enumerate_paths(model: &Model, start: usize, horizon: usize) -> Vec<(Vec<usize>, f64)> {
    let labels = model.labels().to_vec();
    let mut out = vec![(vec![start], 1.0)];
    for n in 1..=horizon {
        let t = n as f64;
        let mut next = Vec::new();
        for (seq, p) in out {
            let i = *seq.last().unwrap();
            let mut stay = 1.0;
            for &j in &labels {
                if j == i {
                    continue;
                }
                let q = model
                    .rate(i, j)
                    .map_or(0.0, |r| r.curve.atoms.iter().filter(|a| a.at == t).map(|a| a.mass).sum());
                stay -= q;
                if q > 0.0 {
                    let mut s = seq.clone();
                    s.push(j);
                    next.push((s, p * q));
                }
            }
            if stay > 0.0 {
                let mut s = seq;
                s.push(i);
                next.push((s, p * stay));
            }
        }
        out = next;
    }
    out
}

fn atom_sum(m: Option<&StieltjesMeasure>, t: f64) -> f64 {
    m.map_or(0.0, |m| m.atoms.iter().filter(|a| a.at == t).map(|a| a.mass).sum())
}

/// Expected discounted payments after time 0 by enumeration; payments at
/// integer `n` are made by the state occupied just before `n`.
pub fn enumerate_reserve(model: &Model, start: usize, horizon: usize) -> f64 {
    enumerate_paths(model, start, horizon)
        .iter()
        .map(|(seq, p)| {
            let mut disc = 1.0;
            let mut total = 0.0;
            for n in 1..=horizon {
                let t = n as f64;
                let (i, j) = (seq[n - 1], seq[n]);
                disc /= 1.0 + atom_sum(model.phi.get(&i), t);
                let mut pay = atom_sum(model.cashflow.sojourn.get(&i), t);
                if j != i {
                    pay += model.transition_payment(i, j, t);
                }
                total += disc * pay;
            }
            p * total
        })
        .sum()
}
