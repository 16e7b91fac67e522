//! Ready-made networks: two enzyme kinetics models, the Braess-type
//! pathway network and two histone modification circuits.
//!
//! Every rate constant defaults to 1 (as do `μ`, `c`, `K` and `h`); the
//! names left at their defaults are listed in [`Bundle::defaulted`] so
//! that reports can say so. Sizes (`Stot`, `Etot`, `Dtot`) must be
//! non-negative integers, rates non-negative.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::analysis::{DriftMode, LyapunovSpec};
use crate::conditions::{CoupledPair, GroupPartition};
use crate::expr::Expr;
use crate::model::{LinearConstraint, Network, Reaction, State, StateSet, StateSpaceSpec};
use crate::order::OrderSpec;
use crate::scalar::{ratio_to_f64, rational_from_f64};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    Enzyme1,
    Enzyme2,
    Braess,
    Histone,
    HistoneTf,
}

impl ExampleId {
    pub const ALL: [ExampleId; 5] =
        [ExampleId::Enzyme1, ExampleId::Enzyme2, ExampleId::Braess, ExampleId::Histone, ExampleId::HistoneTf];

    pub fn name(self) -> &'static str {
        match self {
            ExampleId::Enzyme1 => "enzyme1",
            ExampleId::Enzyme2 => "enzyme2",
            ExampleId::Braess => "braess",
            ExampleId::Histone => "histone",
            ExampleId::HistoneTf => "histone_tf",
        }
    }

    /// Default parameter values; sizes first.
    pub fn defaults(self) -> Vec<(&'static str, i64)> {
        let rates: &[&str] = match self {
            ExampleId::Enzyme1 => &["Stot", "Etot", "k1", "k2", "k3"],
            ExampleId::Enzyme2 => &["Etot", "k1", "k2", "k3", "k4", "k5", "k6"],
            ExampleId::Braess => &["Stot", "k1", "k2", "k3", "k4", "k5"],
            ExampleId::Histone => &["Dtot", "k1a", "k1b", "k2a", "k2b", "k3a", "k3b", "mu", "c"],
            ExampleId::HistoneTf => &[
                "Dtot", "k1a0", "k1a1", "k1b", "k2a", "k2b", "k3a", "k3b", "k5a", "k6a", "mu", "c", "K", "h",
            ],
        };
        rates
            .iter()
            .map(|&name| {
                let v = match (self, name) {
                    (ExampleId::Enzyme1, "Stot") => 3,
                    (_, "Stot") => 5,
                    (_, "Etot") => 2,
                    (_, "Dtot") => 3,
                    _ => 1,
                };
                (name, v)
            })
            .collect()
    }
}

impl FromStr for ExampleId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExampleId::ALL
            .into_iter()
            .find(|id| id.name() == s || id.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Validation(format!("unknown example `{s}`")))
    }
}

/// A network together with its order matrices, groupings, initial states
/// and target sets.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub id: ExampleId,
    /// Network carrying the `default` order matrix.
    pub network: Network,
    pub orders: Vec<(String, OrderSpec)>,
    pub groups: Vec<(String, GroupPartition)>,
    pub initial: Vec<(String, State)>,
    pub targets: Vec<(String, StateSet)>,
    /// Parameters not overridden by the caller.
    pub defaulted: Vec<String>,
}

fn lookup<'a, T>(items: &'a [(String, T)], name: &str, what: &str) -> Result<&'a T> {
    items
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Validation(format!("no {what} named `{name}`")))
}

impl Bundle {
    pub fn order(&self, name: &str) -> Result<&OrderSpec> {
        lookup(&self.orders, name, "order")
    }

    pub fn groups(&self, name: &str) -> Result<&GroupPartition> {
        lookup(&self.groups, name, "grouping")
    }

    pub fn initial(&self, name: &str) -> Result<&State> {
        lookup(&self.initial, name, "initial state")
    }

    pub fn target(&self, name: &str) -> Result<&StateSet> {
        lookup(&self.targets, name, "target set")
    }

    /// A Lyapunov function with its drift inequality, for the two networks
    /// on infinite state spaces.
    ///
    /// * `enzyme2`: `V = x1² + ((2E − 1)b + 1)x2 + b·x4²` with
    ///   `b = [1 + k5 + k2E + k3E + (2k5 + k6 + 2k2E)²/(8k6)] / (k2E(2E − 1))`,
    ///   and `QV ≤ −1` outside a finite set.
    /// * `histone_tf`: `V = x3` with `QV ≤ −k6a·V + k5a·Dtot`.
    pub fn lyapunov(&self) -> Result<Option<LyapunovSpec>> {
        let p = |k: &str| self.network.params()[k].clone();
        let int = |v: i64| BigRational::from_integer(v.into());
        match self.id {
            ExampleId::Enzyme2 => {
                let e = p("Etot");
                let (k2, k3, k5, k6) = (p("k2"), p("k3"), p("k5"), p("k6"));
                let two_e1 = &e * int(2) - int(1);
                let denom = &k2 * &e * &two_e1;
                if denom <= int(0) || k6 <= int(0) {
                    return Err(Error::InvalidParams("needs Etot ≥ 1 and k2, k6 > 0".into()));
                }
                let lin = &k5 * int(2) + &k6 + &k2 * &e * int(2);
                let b = (int(1) + &k5 + &k2 * &e + &k3 * &e + &lin * &lin / (&k6 * int(8))) / denom;
                let coef = &two_e1 * &b + int(1);
                let v = Expr::parse(&format!("x1^2 + ({coef})*x2 + ({b})*x4^2"))?;
                let mode = DriftMode::NegDriftOutsideCompact { c: int(1), d: None, set: None };
                Ok(Some(LyapunovSpec { v, mode }))
            }
            ExampleId::HistoneTf => {
                let mode = DriftMode::ExponentialDrift { c: p("k6a"), d: p("k5a") * p("Dtot") };
                Ok(Some(LyapunovSpec { v: Expr::parse("x3")?, mode }))
            }
            _ => Ok(None),
        }
    }

    /// Pair this bundle's network (base) with a re-parameterized variant.
    pub fn pair(&self, variant: &[(&str, f64)], order: &str) -> Result<CoupledPair> {
        let over = to_rationals(variant)?;
        let refs: Vec<(&str, BigRational)> = over.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        let var = self.network.with_params(&refs)?;
        CoupledPair::new(self.network.clone(), var, self.order(order)?.clone())
    }
}

fn to_rationals(values: &[(&str, f64)]) -> Result<Vec<(String, BigRational)>> {
    values
        .iter()
        .map(|(k, v)| {
            rational_from_f64(*v)
                .map(|r| (k.to_string(), r))
                .ok_or_else(|| Error::InvalidParams(format!("{k} = {v} is not finite")))
        })
        .collect()
}

fn size(params: &BTreeMap<String, BigRational>, name: &str) -> Result<i64> {
    let v = &params[name];
    if !v.is_integer() || ratio_to_f64(v) < 0.0 {
        return Err(Error::InvalidParams(format!("{name} must be a non-negative integer")));
    }
    Ok(ratio_to_f64(v) as i64)
}

/// Build a bundle with some parameters overridden.
pub fn build(id: ExampleId, overrides: &[(&str, f64)]) -> Result<Bundle> {
    let defaults = id.defaults();
    let mut params: BTreeMap<String, BigRational> = defaults
        .iter()
        .map(|(k, v)| (k.to_string(), BigRational::from_integer((*v).into())))
        .collect();
    for (k, v) in to_rationals(overrides)? {
        if !params.contains_key(&k) {
            return Err(Error::InvalidParams(format!("{} has no parameter `{k}`", id.name())));
        }
        params.insert(k, v);
    }
    for (k, v) in &params {
        if ratio_to_f64(v) < 0.0 {
            return Err(Error::InvalidParams(format!("{k} must be non-negative")));
        }
    }
    let defaulted = defaults
        .iter()
        .map(|(k, _)| k.to_string())
        .filter(|k| !overrides.iter().any(|(o, _)| o == k))
        .collect();
    let mut b = match id {
        ExampleId::Enzyme1 => enzyme1(params)?,
        ExampleId::Enzyme2 => enzyme2(params)?,
        ExampleId::Braess => braess(params)?,
        ExampleId::Histone => histone(params)?,
        ExampleId::HistoneTf => histone_tf(params)?,
    };
    b.defaulted = defaulted;
    let default_order = b.order("default")?.rows().to_vec();
    b.network = b.network.with_order_matrix(default_order)?;
    Ok(b)
}

fn ma(reactant: &[u32], product: &[u32], k: &str) -> Result<Reaction> {
    Reaction::mass_action(reactant, product, k)
}

fn order(rows: &[&[i64]]) -> Result<OrderSpec> {
    OrderSpec::new(rows.iter().map(|r| r.to_vec()).collect())
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn bundle(id: ExampleId, network: Network, orders: Vec<(&str, OrderSpec)>) -> Bundle {
    Bundle {
        id,
        network,
        orders: orders.into_iter().map(|(n, o)| (n.to_string(), o)).collect(),
        groups: vec![],
        initial: vec![],
        targets: vec![],
        defaulted: vec![],
    }
}

/// `S + E ⇌ SE → P + E` on `x1 + x2 + x4 = Stot`, `x3 + x4 = Etot`.
fn enzyme1(params: BTreeMap<String, BigRational>) -> Result<Bundle> {
    let (s, e) = (size(&params, "Stot")?, size(&params, "Etot")?);
    let net = Network::new(
        names(&["S", "P", "E", "SE"]),
        params,
        vec![
            ma(&[1, 0, 1, 0], &[0, 0, 0, 1], "k1")?,
            ma(&[0, 0, 0, 1], &[1, 0, 1, 0], "k2")?,
            ma(&[0, 0, 0, 1], &[0, 1, 1, 0], "k3")?,
        ],
        StateSpaceSpec::conservation(vec![
            LinearConstraint::new(&[1, 1, 0, 1], s),
            LinearConstraint::new(&[0, 0, 1, 1], e),
        ]),
    )?;
    let mut b = bundle(ExampleId::Enzyme1, net, vec![("default", order(&[&[-1, 0, 0, 0], &[0, 1, 0, 0]])?)]);
    let (p0, s0) = (vec![0, s, e, 0], vec![s, 0, e, 0]);
    b.initial = vec![("s".into(), s0.clone()), ("p".into(), p0.clone())];
    b.targets = vec![("p".into(), StateSet::single(p0)), ("s".into(), StateSet::single(s0))];
    Ok(b)
}

/// Enzyme kinetics with reversible product formation, substrate inflow
/// and outflow. Only `x3 + x4 = Etot` is conserved.
fn enzyme2(params: BTreeMap<String, BigRational>) -> Result<Bundle> {
    let e = size(&params, "Etot")?;
    let net = Network::new(
        names(&["S", "P", "E", "SE"]),
        params,
        vec![
            ma(&[1, 0, 1, 0], &[0, 0, 0, 1], "k1")?,
            ma(&[0, 0, 0, 1], &[1, 0, 1, 0], "k2")?,
            ma(&[0, 0, 0, 1], &[0, 1, 1, 0], "k3")?,
            ma(&[0, 1, 1, 0], &[0, 0, 0, 1], "k4")?,
            ma(&[0, 0, 0, 0], &[1, 0, 0, 0], "k5")?,
            ma(&[1, 0, 0, 0], &[0, 0, 0, 0], "k6")?,
        ],
        StateSpaceSpec::conservation(vec![LinearConstraint::new(&[0, 0, 1, 1], e)]),
    )?;
    let mut b = bundle(
        ExampleId::Enzyme2,
        net,
        vec![("default", order(&[&[1, 0, 0, 0], &[0, 1, 0, 0], &[0, 0, -1, 0]])?)],
    );
    b.initial = vec![("empty".into(), vec![0, 0, e, 0])];
    Ok(b)
}

/// `S1 → S2 → S4`, `S1 → S3 → S4` and the shortcut `S2 → S3`, with
/// `Σ x = Stot`.
fn braess(params: BTreeMap<String, BigRational>) -> Result<Bundle> {
    let s = size(&params, "Stot")?;
    let net = Network::new(
        names(&["S1", "S2", "S3", "S4"]),
        params,
        vec![
            ma(&[1, 0, 0, 0], &[0, 1, 0, 0], "k1")?,
            ma(&[0, 1, 0, 0], &[0, 0, 0, 1], "k2")?,
            ma(&[1, 0, 0, 0], &[0, 0, 1, 0], "k3")?,
            ma(&[0, 0, 1, 0], &[0, 0, 0, 1], "k4")?,
            ma(&[0, 1, 0, 0], &[0, 0, 1, 0], "k5")?,
        ],
        StateSpaceSpec::conservation(vec![LinearConstraint::new(&[1, 1, 1, 1], s)]),
    )?;
    let mut b = bundle(
        ExampleId::Braess,
        net,
        vec![
            ("default", order(&[&[-1, 0, 0, 0], &[0, -1, -1, 0]])?),
            // For a smaller shortcut rate in the variant when k2 > k4.
            ("shortcut_down", order(&[&[-1, 0, 0, 0], &[0, 0, -1, 0], &[0, -1, -1, 0]])?),
            // For a larger shortcut rate in the variant when k2 < k4.
            ("shortcut_up", order(&[&[-1, 0, 0, 0], &[0, -1, 0, 0], &[0, -1, -1, 0]])?),
        ],
    );
    b.groups = vec![
        ("default".into(), GroupPartition::new(vec![vec![0, 2], vec![1, 3], vec![4]])),
        ("shortcut_down".into(), GroupPartition::new(vec![vec![2, 0], vec![3, 1], vec![4]])),
        ("shortcut_up".into(), GroupPartition::new(vec![vec![0, 2], vec![1, 3], vec![4]])),
    ];
    let (start, goal) = (vec![s, 0, 0, 0], vec![0, 0, 0, s]);
    b.initial = vec![("start".into(), start)];
    b.targets = vec![("goal".into(), StateSet::single(goal))];
    Ok(b)
}

const HISTONE_R1: &str = "(Dtot - (x1 + x2))*(k1a + k1b*x2)";
const HISTONE_R2: &str = "(Dtot - (x1 + x2))*(k2a + k2b*x1)";
const HISTONE_R3: &str = "x2*(k3a + k3b*x1)";
const HISTONE_R4: &str = "x1*mu*(c*k3a + k3b*x2)";

/// Repressive (`x1`) and activating (`x2`) marks on `Dtot` nucleosomes.
fn histone(params: BTreeMap<String, BigRational>) -> Result<Bundle> {
    let d = size(&params, "Dtot")?;
    let net = Network::new(
        names(&["DR", "DA"]),
        params,
        vec![
            Reaction::with_expr(&[0, 0], &[0, 1], HISTONE_R1)?,
            Reaction::with_expr(&[0, 0], &[1, 0], HISTONE_R2)?,
            Reaction::with_expr(&[0, 1], &[0, 0], HISTONE_R3)?,
            Reaction::with_expr(&[1, 0], &[0, 0], HISTONE_R4)?,
        ],
        StateSpaceSpec::Conservation {
            equalities: vec![],
            upper_bounds: vec![LinearConstraint::new(&[1, 1], d)],
            caps: vec![],
        },
    )?;
    let mut b = bundle(ExampleId::Histone, net, vec![("default", order(&[&[-1, 0], &[0, 1]])?)]);
    let (a, r) = (vec![0, d], vec![d, 0]);
    b.initial = vec![("a".into(), a.clone()), ("r".into(), r.clone())];
    b.targets = vec![("a".into(), StateSet::single(a)), ("r".into(), StateSet::single(r))];
    Ok(b)
}

/// The histone circuit with a transcription factor `x3` produced from
/// active nucleosomes and feeding back through `hill(x3, K, h)`.
fn histone_tf(params: BTreeMap<String, BigRational>) -> Result<Bundle> {
    let d = size(&params, "Dtot")?;
    if size(&params, "h").is_err() {
        return Err(Error::InvalidParams("h must be a non-negative integer".into()));
    }
    let net = Network::new(
        names(&["DR", "DA", "P"]),
        params,
        vec![
            Reaction::with_expr(&[0, 0, 0], &[0, 1, 0], "(Dtot - (x1 + x2))*(k1a0 + k1a1*hill(x3, K, h) + k1b*x2)")?,
            Reaction::with_expr(&[0, 0, 0], &[1, 0, 0], HISTONE_R2)?,
            Reaction::with_expr(&[0, 1, 0], &[0, 0, 0], HISTONE_R3)?,
            Reaction::with_expr(&[1, 0, 0], &[0, 0, 0], HISTONE_R4)?,
            ma(&[0, 1, 0], &[0, 1, 1], "k5a")?,
            ma(&[0, 0, 1], &[0, 0, 0], "k6a")?,
        ],
        StateSpaceSpec::Conservation {
            equalities: vec![],
            upper_bounds: vec![LinearConstraint::new(&[1, 1, 0], d)],
            caps: vec![],
        },
    )?;
    let mut b = bundle(
        ExampleId::HistoneTf,
        net,
        vec![("default", order(&[&[-1, 0, 0], &[0, 1, 0], &[0, 0, 1]])?)],
    );
    b.initial = vec![("r".into(), vec![d, 0, 0]), ("a".into(), vec![0, d, 0])];
    b.targets = vec![("active".into(), StateSet::predicate(&format!("x1 == 0 && x2 == {d}"))?)];
    Ok(b)
}
