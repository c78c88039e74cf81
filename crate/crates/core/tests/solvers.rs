mod common;

use common::{repo_model, term, term_closed_form};
use multistate::backward::{kolmogorov_solve, thiele_solve, Scheme, SolveOptions};
use multistate::io::{model_to_json, parse_model};
use multistate::measure::RateCurve;
use multistate::model::{CumulativeRate, Model};

#[test]
fn every_repo_model_round_trips() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let m = repo_model(&name);
        assert_eq!(parse_model(&model_to_json(&m).unwrap()).unwrap(), m, "{name}");
        seen += 1;
    }
    assert!(seen >= 9);
}

#[test]
fn implicit_euler_converges_at_first_order() {
    let m = repo_model("disability");
    let at = |h: f64| {
        thiele_solve(&m, &SolveOptions::new(h).with_scheme(Scheme::ImplicitEuler))
            .unwrap()
            .value(0, 0.0)
            .unwrap()
    };
    let exact = thiele_solve(&m, &SolveOptions::new(0.01)).unwrap().value(0, 0.0).unwrap();
    let ratio = (at(0.1) - exact) / (at(0.05) - exact);
    assert!((1.7..=2.3).contains(&ratio), "{ratio}");
}

#[test]
fn duration_free_semi_markov_matches_markov() {
    let markov = term(0.1, 0.05, 10.0).with_rate(
        0,
        1,
        CumulativeRate::markov(RateCurve::constant(0.1, 10.0)),
    );
    let mut semi: Model = markov.clone();
    semi.lambda.insert((0, 1), CumulativeRate::semi_markov(RateCurve::constant(0.1, 10.0)));
    let opts = SolveOptions::new(0.05);
    let (a, b) = (thiele_solve(&markov, &opts).unwrap(), thiele_solve(&semi, &opts).unwrap());
    for q in 0..=20 {
        let t = q as f64 * 0.5;
        let d = (a.value(0, t).unwrap() - b.value_with_duration(0, t, 0.0).unwrap()).abs();
        assert!(d <= 1e-9, "t={t}: {d:e}");
    }
    assert!((a.value(0, 0.0).unwrap() - term_closed_form(0.1, 0.05, 10.0, 0.0)).abs() <= 1e-10);
}

#[test]
fn probabilities_sum_to_one() {
    let m = repo_model("disability");
    let opts = SolveOptions::new(0.05);
    let fields: Vec<_> = (0..3).map(|k| kolmogorov_solve(&m, k, 15.0, &opts).unwrap()).collect();
    for i in 0..3 {
        for q in 0..=15 {
            let t = q as f64;
            let ps: Vec<f64> = fields.iter().map(|f| f.value(i, t).unwrap()).collect();
            assert!(ps.iter().all(|p| (-1e-12..=1.0 + 1e-12).contains(p)));
            assert!((ps.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "{i} {t}");
        }
    }
}
