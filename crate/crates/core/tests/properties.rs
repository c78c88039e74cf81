mod common;

use common::{atom_model, flat, term};
use multistate::backward::{thiele_solve, SolveOptions};
use multistate::compare::set_initial_distribution;
use multistate::measure::{accumulation_factor, ls_integrate, Atom, PiecewiseFn, RateCurve, StieltjesMeasure};
use multistate::model::{evaluate_rate, path_statistics, stop_path, CumulativeRate, HistoryContext, Model, Path};
use proptest::prelude::*;

fn arb_path() -> impl Strategy<Value = Path> {
    prop::collection::vec((0.01f64..1.0, 0usize..3), 0..6).prop_map(|steps| {
        let mut t = 0.0;
        let mut z = 0;
        let mut points = vec![(0.0, 0)];
        for (dt, next) in steps {
            t += dt;
            // skip self-jumps
            let next = if next == z { (z + 1) % 3 } else { next };
            points.push((t, next));
            z = next;
        }
        Path::new(points).unwrap()
    })
}

fn arb_measure() -> impl Strategy<Value = StieltjesMeasure> {
    (
        -0.1f64..0.2,
        prop::collection::vec((0.1f64..4.9, -0.5f64..0.5), 0..4),
    )
        .prop_map(|(rate, atoms)| {
            let mut m = flat(rate, 5.0);
            m.atoms = multistate::measure::merge_atoms(atoms.into_iter().map(|(t, a)| Atom::new(t, a)).collect());
            m
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stop_path_is_idempotent(p in arb_path(), s in 0.0f64..4.0, i in 0usize..3) {
        let once = stop_path(&p, s, i);
        prop_assert_eq!(stop_path(&once, s, i), once);
    }

    #[test]
    fn counting_balance_is_exact(p in arb_path(), t in 0.0f64..6.0) {
        let stats = path_statistics(&p, t, &[0, 1, 2]).unwrap();
        prop_assert!(stats.balance_defect(&[1, 0, 0]).iter().all(|&d| d == 0));
    }

    #[test]
    fn markov_rate_ignores_history(
        s in 0.0f64..2.0,
        dt in 0.0f64..3.0,
        entered in 0.0f64..1.0,
        j in 1usize..3,
    ) {
        let rate = CumulativeRate::markov(
            RateCurve::constant(0.3, 5.0).with_atoms(vec![Atom::new(2.5, 0.2)]),
        );
        let a = evaluate_rate(&rate, s, s + dt, &HistoryContext::fresh(s, 0)).unwrap();
        let ctx = HistoryContext::with_duration(s, j, entered.min(s));
        let b = evaluate_rate(&rate, s, s + dt, &ctx).unwrap();
        prop_assert_eq!(a.continuous.to_bits(), b.continuous.to_bits());
        prop_assert_eq!(a.atoms, b.atoms);
    }

    #[test]
    fn kernel_is_normalized(s in 0.0f64..4.0, frac in 0.0f64..1.0) {
        let model = atom_model();
        let kernel = model.kernel(&HistoryContext::fresh(s, 0)).unwrap();
        let t = s + frac * (5.0 - s);
        let total = kernel.survival(t) + kernel.jumps(t).unwrap().iter().sum::<f64>();
        prop_assert!((total - 1.0).abs() <= 1e-10, "{total}");
    }

    #[test]
    fn accumulation_is_multiplicative(
        m in arb_measure(),
        a in 0.0f64..5.0,
        b in 0.0f64..5.0,
        c in 0.0f64..5.0,
    ) {
        let mut x = [a, b, c];
        x.sort_by(f64::total_cmp);
        let whole = accumulation_factor(m.view(), x[0], x[2]).unwrap();
        let split = accumulation_factor(m.view(), x[0], x[1]).unwrap()
            * accumulation_factor(m.view(), x[1], x[2]).unwrap();
        prop_assert!((whole - split).abs() <= 1e-12 * whole.abs().max(1.0));
    }

    #[test]
    fn integral_is_linear_and_additive(
        m in arb_measure(),
        k in -3.0f64..3.0,
        mid in 0.0f64..5.0,
    ) {
        let f = |u: f64| 1.0 + u;
        let g = |u: f64| (u * 0.7).sin();
        let int = |h: &dyn Fn(f64) -> f64, a: f64, b: f64| ls_integrate(h, m.view(), a, b).unwrap();
        let lhs = int(&|u| f(u) + k * g(u), 0.0, 5.0);
        let rhs = int(&f, 0.0, 5.0) + k * int(&g, 0.0, 5.0);
        prop_assert!((lhs - rhs).abs() <= 1e-11, "{lhs} vs {rhs}");
        let split = int(&f, 0.0, mid) + int(&f, mid, 5.0);
        prop_assert!((int(&f, 0.0, 5.0) - split).abs() <= 1e-11);
    }

    #[test]
    fn piecewise_constant_integral_is_exact(c in -2.0f64..2.0, a in 0.0f64..5.0, len in 0.0f64..5.0) {
        let b = (a + len).min(5.0);
        let m = StieltjesMeasure::from_density(PiecewiseFn::constant(0.4, 5.0));
        let got = ls_integrate(|_| c, m.view(), a, b).unwrap();
        prop_assert!((got - c * 0.4 * (b - a)).abs() <= 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reserves_do_not_depend_on_alpha(w in 0.0f64..1.0) {
        let model: Model = term(0.1, 0.05, 10.0);
        let opts = SolveOptions::new(0.05);
        let moved = set_initial_distribution(&model, vec![w, 1.0 - w]).unwrap();
        prop_assert_eq!(thiele_solve(&moved, &opts).unwrap(), thiele_solve(&model, &opts).unwrap());
    }
}
