//! Property bodies shared by the proptest suite and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_rational::BigRational;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use scrn::bundles::{build, ExampleId};
use scrn::conditions::GroupPartition;
use scrn::coupling::{phi_select, psi_select, simulate_coupled, CouplingConfig, CouplingMode, RecordMode};
use scrn::model::{
    derive_net_structure, enumerate_states, generator_row, Network, Reaction, StateSpaceSpec,
};
use scrn::order::OrderSpec;

type Check = Result<(), TestCaseError>;

pub fn order_matrix() -> impl Strategy<Value = OrderSpec> {
    (1usize..4, 1usize..4).prop_flat_map(|(m, d)| {
        prop::collection::vec(prop::collection::vec(-2i64..=2, d), m)
            .prop_filter_map("zero row", |rows| OrderSpec::new(rows).ok())
    })
}

fn point(d: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-20i64..=20, d)
}

pub fn order_and_points() -> impl Strategy<Value = (OrderSpec, Vec<i64>, Vec<i64>, Vec<i64>)> {
    order_matrix().prop_flat_map(|a| {
        let d = a.dim();
        (Just(a), point(d), point(d), point(d))
    })
}

/// Reflexivity and transitivity of `≼_A`.
pub fn preorder_laws((a, x, y, z): (OrderSpec, Vec<i64>, Vec<i64>, Vec<i64>)) -> Check {
    prop_assert!(a.le(&x, &x));
    if a.le(&x, &y) && a.le(&y, &z) {
        prop_assert!(a.le(&x, &z));
    }
    // Same relation written as the cone membership of y − x.
    let diff: Vec<i64> = y.iter().zip(&x).map(|(p, q)| p - q).collect();
    prop_assert_eq!(a.le(&x, &y), a.apply(&diff).iter().all(|v| *v >= 0));
    Ok(())
}

/// `x ≼ y ⇔ x + z ≼ y + z`.
pub fn translation_invariance((a, x, y, z): (OrderSpec, Vec<i64>, Vec<i64>, Vec<i64>)) -> Check {
    let add = |p: &[i64]| p.iter().zip(&z).map(|(u, v)| u + v).collect::<Vec<_>>();
    prop_assert_eq!(a.le(&x, &y), a.le(&add(&x), &add(&y)));
    Ok(())
}

pub fn rates_and_u() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (1usize..8).prop_flat_map(|n| (prop::collection::vec(0.0f64..5.0, n), 0.0f64..1.0))
}

/// With singleton groups in index order the grouped map is the per-index map.
pub fn phi_psi_agree((rates, u): (Vec<f64>, f64)) -> Check {
    let n = rates.len();
    let lambda = 1.0 + n as f64 * rates.iter().sum::<f64>();
    let gp = GroupPartition::singletons(n);
    prop_assert_eq!(phi_select(&rates, lambda, u), psi_select(&rates, lambda, u, &gp));
    Ok(())
}

fn bundle_state(id: ExampleId, m: i64) -> impl Strategy<Value = (Network, Vec<i64>)> {
    let net = build(id, &[("k1", 1.5), ("k2", 0.5)]).unwrap().network;
    let space = if net.state_space().is_finite() {
        net.state_space().clone()
    } else {
        net.state_space().truncated(m)
    };
    let states = enumerate_states(&space).unwrap();
    prop::sample::select(states).prop_map(move |x| (net.clone(), x))
}

pub fn network_state() -> impl Strategy<Value = (Network, Vec<i64>)> {
    prop_oneof![
        bundle_state(ExampleId::Enzyme1, 0),
        bundle_state(ExampleId::Enzyme2, 8),
        bundle_state(ExampleId::Braess, 0),
    ]
}

/// Every generator row sums to zero.
pub fn row_sum_zero((net, x): (Network, Vec<i64>)) -> Check {
    let ns = derive_net_structure(&net);
    let (row, diag) = generator_row(&net, &ns, &x).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let off: f64 = row.values().sum();
    prop_assert!((off + diag).abs() <= 1e-12 * off.max(1.0));
    prop_assert!(row.keys().all(|y| net.state_space().contains(y)));
    Ok(())
}

pub fn reactant_and_state() -> impl Strategy<Value = (Vec<u32>, Vec<i64>, u32)> {
    (1usize..4).prop_flat_map(|d| {
        (prop::collection::vec(0u32..4, d), prop::collection::vec(0i64..7, d), 1u32..50)
    })
}

/// Mass-action propensity against an explicit count of ordered reactant
/// tuples: `k · Π_i x_i (x_i − 1) ⋯ (x_i − a_i + 1)`.
pub fn mass_action_brute_force((reactant, x, k): (Vec<u32>, Vec<i64>, u32)) -> Check {
    let d = reactant.len();
    let product: Vec<u32> = reactant.iter().map(|a| a + 1).collect();
    let params = BTreeMap::from([("k".to_string(), BigRational::from_integer((k as i64).into()))]);
    let names = (0..d).map(|i| format!("S{i}")).collect();
    let net = Network::new(
        names,
        params,
        vec![Reaction::mass_action(&reactant, &product, "k").unwrap()],
        StateSpaceSpec::Box { caps: vec![10; d] },
    )
    .map_err(|e| TestCaseError::reject(e.to_string()))?;
    let mut expected: i64 = k as i64;
    for (xi, ai) in x.iter().zip(&reactant) {
        for m in 0..*ai as i64 {
            expected *= (xi - m).max(0);
        }
    }
    prop_assert_eq!(net.propensity(0, &x).unwrap(), expected as f64);
    prop_assert_eq!(net.propensity_exact(0, &x).unwrap(), BigRational::from_integer(expected.into()));
    Ok(())
}

/// Same seed, same coupled run.
pub fn coupling_determinism(seed: u64) -> Check {
    let b = build(ExampleId::Braess, &[("k2", 2.0)]).unwrap();
    let pair = b.pair(&[("k5", 3.0)], "default").unwrap();
    let gp = b.groups("default").unwrap().clone();
    let mut cfg = CouplingConfig::new(CouplingMode::Grouped(gp), 5.0, seed);
    cfg.record = RecordMode::AllPotentialJumps;
    let x0 = b.initial("start").unwrap();
    let r1 = simulate_coupled(&pair, x0, x0, &cfg).unwrap();
    let r2 = simulate_coupled(&pair, x0, x0, &cfg).unwrap();
    prop_assert_eq!(r1, r2);
    Ok(())
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Check) -> Option<String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).err().map(|e| e.to_string())
}

/// Run every property with `cases` cases; returns `(name, failure)` pairs.
pub fn run_all(cases: u32) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("preorder laws", run(cases, order_and_points(), preorder_laws)),
        ("translation invariance", run(cases, order_and_points(), translation_invariance)),
        ("phi/psi degenerate equivalence", run(cases, rates_and_u(), phi_psi_agree)),
        ("generator row sums", run(cases, network_state(), row_sum_zero)),
        ("mass-action brute force", run(cases, reactant_and_state(), mass_action_brute_force)),
        ("coupling determinism", run(cases.min(32), any::<u64>(), coupling_determinism)),
    ]
}
