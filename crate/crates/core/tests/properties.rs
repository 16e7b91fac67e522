mod support;

use std::collections::BTreeMap;

use num_rational::BigRational;
use proptest::prelude::*;

use scrn::analysis::{
    drift_value_exact, product_form_stationary, total_variation, usual_stochastic_order_test,
    DistributionTable,
};
use scrn::bundles::{build, ExampleId};
use scrn::expr::Expr;
use scrn::model::enumerate_states;

proptest! {
    #[test]
    fn preorder_laws(v in support::order_and_points()) {
        support::preorder_laws(v)?;
    }

    #[test]
    fn translation_invariance(v in support::order_and_points()) {
        support::translation_invariance(v)?;
    }

    #[test]
    fn phi_psi_degenerate_equivalence(v in support::rates_and_u()) {
        support::phi_psi_agree(v)?;
    }

    #[test]
    fn generator_rows_sum_to_zero(v in support::network_state()) {
        support::row_sum_zero(v)?;
    }

    #[test]
    fn mass_action_matches_brute_force(v in support::reactant_and_state()) {
        support::mass_action_brute_force(v)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn coupling_is_deterministic(seed in any::<u64>()) {
        support::coupling_determinism(seed)?;
    }

    #[test]
    fn product_form_is_normalized_and_binomial(
        e in 1i64..4,
        k in prop::array::uniform6(0.2f64..5.0),
        caps in (0i64..6, 0i64..6),
    ) {
        let d = product_form_stationary(e, k, caps).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-12);
        prop_assert!(d.support.iter().all(|x| x[2] + x[3] == e));
        // Given (x1, x2), x4 is Binomial(e, p) with p = r/(1+r).
        let r = k[0] * k[4] / (k[1] * k[5]);
        let p = r / (1.0 + r);
        let slice: Vec<f64> = (0..=e).map(|x4| d.get(&[0, 0, e - x4, x4])).collect();
        let z: f64 = slice.iter().sum();
        let choose = |n: i64, j: i64| (1..=j).fold(1.0, |acc, i| acc * (n - j + i) as f64 / i as f64);
        for (x4, m) in slice.iter().enumerate() {
            let x4 = x4 as i64;
            let binom = choose(e, x4) * p.powi(x4 as i32) * (1.0 - p).powi((e - x4) as i32);
            prop_assert!((m / z - binom).abs() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn drift_is_linear_in_v(
        alpha in -5i64..5,
        beta in -5i64..5,
        x in (0i64..6, 0i64..6, 0i64..3),
    ) {
        let b = build(ExampleId::Enzyme2, &[("k4", 2.0), ("k5", 3.0)]).unwrap();
        let state = [x.0, x.1, x.2, 2 - x.2];
        let v1 = Expr::parse("x1^2 + 3*x2").unwrap();
        let v2 = Expr::parse("x4*x1 + max(x2, 2)").unwrap();
        let both = Expr::parse(&format!("({alpha})*(x1^2 + 3*x2) + ({beta})*(x4*x1 + max(x2, 2))")).unwrap();
        let q = |v: &Expr| drift_value_exact(&b.network, v, &state).unwrap();
        let a = BigRational::from_integer(alpha.into());
        let bb = BigRational::from_integer(beta.into());
        prop_assert_eq!(q(&both), a * q(&v1) + bb * q(&v2));
    }

    #[test]
    fn total_variation_is_a_metric(
        w in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 5), 3),
    ) {
        let table = |ws: &Vec<f64>| {
            DistributionTable::from_weights(ws.iter().enumerate().map(|(i, w)| (vec![i as i64], *w)).collect::<BTreeMap<_, _>>()).unwrap()
        };
        let (p, q, r) = (table(&w[0]), table(&w[1]), table(&w[2]));
        prop_assert!(total_variation(&p, &p) == 0.0);
        prop_assert!((total_variation(&p, &q) - total_variation(&q, &p)).abs() < 1e-15);
        prop_assert!(total_variation(&p, &r) <= total_variation(&p, &q) + total_variation(&q, &r) + 1e-12);
        prop_assert!(total_variation(&p, &q) <= 1.0);
    }

    #[test]
    fn paired_domination_gives_cdf_dominance(
        base in prop::collection::vec(0.0f64..10.0, 1..40),
        shrink in prop::collection::vec(0.0f64..1.0, 40),
    ) {
        let smaller: Vec<f64> = base.iter().zip(&shrink).map(|(b, s)| b * s).collect();
        prop_assert!(usual_stochastic_order_test(&smaller, &base).holds);
    }
}

#[test]
fn histone_space_has_extremes() {
    let b = build(ExampleId::Histone, &[]).unwrap();
    let states = enumerate_states(b.network.state_space()).unwrap();
    let a = b.order("default").unwrap();
    assert_eq!(scrn::order::maximal_elements(a, &states), vec![vec![0, 3]]);
    assert_eq!(scrn::order::minimal_elements(a, &states), vec![vec![3, 0]]);
}
