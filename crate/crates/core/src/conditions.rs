//! Sufficient conditions for an order-preserving coupling of two networks.
//!
//! All checks run over a finite state space (the model's own, or its box
//! truncation) and compare the variant's rates at `y` with the base rates
//! at `x` for `x ≼ y`:
//!
//! * [`check_thm_3_1`] tests every comparable pair: a jump of the variant
//!   from `y` that would leave the cone `K_A + x` needs
//!   `Ῠ_j(y) ≤ Υ_j(x)`, and a jump of the base from `x` that would leave
//!   `−K_A + y` needs `Ῠ_j(y) ≥ Υ_j(x)`.
//! * [`check_thm_3_2`] needs `A v_j ∈ {-1,0,1}^m` and then only inspects
//!   `y` on a facet `⟨A_i, y − x⟩ = 0`, with the direction of the
//!   inequality given by the sign of `⟨A_i, v_j⟩`. When two facets through
//!   `y` ask for opposite directions the rates must be equal; such cases
//!   are counted as equality obligations.
//! * [`check_thm_3_3`] is the same facet test on group sums, for groups of
//!   transitions sharing `A v_j`.
//! * [`check_thm_s2`] allows arbitrary groups ordered by a permutation
//!   `σ` and compares the sums over `G^{k,±}_i = {j ∈ G^k : ⟨A_i, v_j⟩ = ±1}`.
//!   Its ordering assumption is checked by [`verify_assumption_s1`].
//!
//! Comparisons are exact by default. A float tolerance can be selected
//! through [`CheckOptions`]. The reported witness is the first failing
//! obligation in the order `x`, then `y` (both lexicographic), then row,
//! then transition or group.

use std::collections::HashMap;

use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    derive_net_structure, enumerate_states, rate_vector_as, shifted, NetStructure, Network,
    RateScalar, State,
};
use crate::order::{check_av_entries, OrderSpec};
use crate::scalar::{Scalar, Tolerance};
use crate::{Error, Result};

/// Base network, variant, shared net changes and the order matrix.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    base: Network,
    variant: Network,
    net: NetStructure,
    order: OrderSpec,
}

impl CoupledPair {
    pub fn new(base: Network, variant: Network, order: OrderSpec) -> Result<Self> {
        if base.species() != variant.species() {
            return Err(Error::Validation("base and variant have different species".into()));
        }
        if base.state_space() != variant.state_space() {
            return Err(Error::Validation("base and variant have different state spaces".into()));
        }
        let net = derive_net_structure(&base);
        if derive_net_structure(&variant).vectors() != net.vectors() {
            return Err(Error::Validation(
                "base and variant must have the same net changes in the same order".into(),
            ));
        }
        order.check_dim(base.dim())?;
        Ok(CoupledPair { base, variant, net, order })
    }

    /// Use the base model's `order_matrix`.
    pub fn from_models(base: Network, variant: Network) -> Result<Self> {
        let order = OrderSpec::from_network(&base)?;
        CoupledPair::new(base, variant, order)
    }

    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn variant(&self) -> &Network {
        &self.variant
    }

    pub fn net(&self) -> &NetStructure {
        &self.net
    }

    pub fn order(&self) -> &OrderSpec {
        &self.order
    }

    pub fn with_order(&self, order: OrderSpec) -> Result<Self> {
        order.check_dim(self.base.dim())?;
        Ok(CoupledPair { order, ..self.clone() })
    }

    pub fn truncated(&self, m: i64) -> Self {
        CoupledPair { base: self.base.truncated(m), variant: self.variant.truncated(m), ..self.clone() }
    }
}

/// Transition indices (0-based) split into blocks `G^1, …, G^K`; listing
/// the blocks in order gives the permutation `σ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        GroupPartition { groups }
    }

    pub fn singletons(n: usize) -> Self {
        GroupPartition { groups: (0..n).map(|j| vec![j]).collect() }
    }

    /// Every transition in exactly one non-empty block.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for g in &self.groups {
            if g.is_empty() {
                return Err(Error::Validation("empty group".into()));
            }
            for &j in g {
                if j >= n || std::mem::replace(&mut seen[j], true) {
                    return Err(Error::Validation(format!(
                        "transition {j} is out of range or listed twice"
                    )));
                }
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("transition {j} is in no group")));
        }
        Ok(())
    }

    pub fn sigma(&self) -> Vec<usize> {
        self.groups.concat()
    }

    /// `η^k = A v_j` for each block, if it is constant on every block.
    pub fn eta(&self, order: &OrderSpec, ns: &NetStructure) -> Option<Vec<Vec<i64>>> {
        self.groups
            .iter()
            .map(|g| {
                let eta = order.apply(ns.vector(g[0]));
                g.iter().all(|&j| order.apply(ns.vector(j)) == eta).then_some(eta)
            })
            .collect()
    }
}

/// Group transitions by equal `A v_j`, in order of first appearance.
pub fn suggest_groups(order: &OrderSpec, ns: &NetStructure) -> GroupPartition {
    let mut keys: Vec<Vec<i64>> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for j in 0..ns.len() {
        let av = order.apply(ns.vector(j));
        match keys.iter().position(|k| *k == av) {
            Some(k) => groups[k].push(j),
            None => {
                keys.push(av);
                groups.push(vec![j]);
            }
        }
    }
    GroupPartition { groups }
}

/// Where the ordering assumption on `σ` breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct S1Violation {
    pub group: usize,
    /// Position inside the block (at least 1).
    pub position: usize,
    pub row: usize,
}

/// Inside each block, every later transition must agree with its
/// predecessor on each row of `A v`, or vanish there.
pub fn verify_assumption_s1(
    order: &OrderSpec,
    ns: &NetStructure,
    gp: &GroupPartition,
) -> std::result::Result<(), S1Violation> {
    for (k, g) in gp.groups.iter().enumerate() {
        for q in 1..g.len() {
            let cur = order.apply(ns.vector(g[q]));
            let prev = order.apply(ns.vector(g[q - 1]));
            for i in 0..order.m() {
                if cur[i] != prev[i] && cur[i] != 0 {
                    return Err(S1Violation { group: k, position: q, row: i });
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    #[serde(rename = "3.1")]
    Pairwise,
    #[serde(rename = "3.2")]
    Facet,
    #[serde(rename = "3.3")]
    Grouped,
    #[serde(rename = "S.2")]
    Permuted,
}

impl std::str::FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3.1" => Ok(Theorem::Pairwise),
            "3.2" => Ok(Theorem::Facet),
            "3.3" => Ok(Theorem::Grouped),
            "S.2" | "s.2" | "S2" => Ok(Theorem::Permuted),
            _ => Err(Error::Validation(format!("unknown theorem `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Variant at `y` at most base at `x`.
    Le,
    /// Variant at `y` at least base at `x`.
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Obligation {
    Transition(usize),
    Group(usize),
}

/// First failing comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: State,
    pub y: State,
    /// Facet row, absent for the pairwise test.
    pub row: Option<usize>,
    pub obligation: Obligation,
    pub relation: Relation,
    /// Variant rate (or group sum) at `y`.
    pub lhs: f64,
    /// Base rate (or group sum) at `x`.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub theorem: Theorem,
    pub verdict: Verdict,
    pub states: usize,
    /// Comparable pairs `x ≼ y` visited.
    pub pairs_checked: u64,
    /// Individual rate comparisons made.
    pub comparisons: u64,
    /// Comparisons where two facets through `y` force equality.
    pub equality_obligations: u64,
    /// Box truncation `‖x‖∞ ≤ M` the check ran on, if any.
    pub truncation: Option<i64>,
    pub tolerance: Tolerance,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub truncation: Option<i64>,
    pub tolerance: Tolerance,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { truncation: None, tolerance: Tolerance::Exact }
    }
}

impl CheckOptions {
    pub fn truncated(m: i64) -> Self {
        CheckOptions { truncation: Some(m), ..Self::default() }
    }
}

/// States, successor indices and `A x`, shared by all checks.
struct Grid {
    states: Vec<State>,
    succ: Vec<Vec<Option<usize>>>,
    ax: Vec<Vec<i64>>,
    av: Vec<Vec<i64>>,
}

impl Grid {
    fn build(pair: &CoupledPair) -> Result<Grid> {
        let states = enumerate_states(pair.base.state_space())?;
        let index: HashMap<&State, usize> = states.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let ns = &pair.net;
        let succ = states
            .iter()
            .map(|x| (0..ns.len()).map(|j| index.get(&shifted(x, ns.vector(j))).copied()).collect())
            .collect();
        let ax = states.iter().map(|x| pair.order.apply(x)).collect();
        let av = ns.vectors().iter().map(|v| pair.order.apply(v)).collect();
        Ok(Grid { states, succ, ax, av })
    }
}

fn rate_table<S: RateScalar>(net: &Network, ns: &NetStructure, states: &[State]) -> Result<Vec<Vec<S>>> {
    states.par_iter().map(|x| rate_vector_as::<S>(net, ns, x)).collect()
}

/// One facet obligation: compare sums over `set` in direction `rel`.
struct Item {
    set: Vec<usize>,
    rel: Relation,
    label: Obligation,
}

struct Tally {
    pairs: u64,
    comparisons: u64,
    equalities: u64,
    witness: Option<Witness>,
}

fn sum<S: Scalar>(rates: &[S], set: &[usize]) -> S {
    set.iter().fold(S::zero(), |acc, &j| acc.add(&rates[j]))
}

fn facet_scan<S: RateScalar>(
    pair: &CoupledPair,
    grid: &Grid,
    items: &[Vec<Item>],
    le: &(dyn Fn(&S, &S) -> bool + Sync),
) -> Result<Tally> {
    let base: Vec<Vec<S>> = rate_table(&pair.base, &pair.net, &grid.states)?;
    let var: Vec<Vec<S>> = rate_table(&pair.variant, &pair.net, &grid.states)?;
    let m = pair.order.m();
    let per_x: Vec<Tally> = (0..grid.states.len())
        .into_par_iter()
        .map(|a| {
            let mut t = Tally { pairs: 0, comparisons: 0, equalities: 0, witness: None };
            let mut zero = Vec::with_capacity(m);
            for b in 0..grid.states.len() {
                zero.clear();
                let mut comparable = true;
                for i in 0..m {
                    let d = grid.ax[b][i] - grid.ax[a][i];
                    if d < 0 {
                        comparable = false;
                        break;
                    }
                    if d == 0 {
                        zero.push(i);
                    }
                }
                if !comparable {
                    continue;
                }
                t.pairs += 1;
                for &i in &zero {
                    for item in &items[i] {
                        t.comparisons += 1;
                        let lhs = sum(&var[b], &item.set);
                        let rhs = sum(&base[a], &item.set);
                        let ok = match item.rel {
                            Relation::Le => le(&lhs, &rhs),
                            Relation::Ge => le(&rhs, &lhs),
                        };
                        let opposed = zero.iter().any(|&i2| {
                            i2 != i
                                && items[i2].iter().any(|o| o.label == item.label && o.rel != item.rel)
                        });
                        if opposed {
                            t.equalities += 1;
                        }
                        if !ok && t.witness.is_none() {
                            t.witness = Some(Witness {
                                x: grid.states[a].clone(),
                                y: grid.states[b].clone(),
                                row: Some(i),
                                obligation: item.label,
                                relation: item.rel,
                                lhs: lhs.to_f64(),
                                rhs: rhs.to_f64(),
                            });
                        }
                    }
                }
            }
            t
        })
        .collect();
    Ok(merge(per_x))
}

fn merge(parts: Vec<Tally>) -> Tally {
    parts.into_iter().fold(
        Tally { pairs: 0, comparisons: 0, equalities: 0, witness: None },
        |mut acc, t| {
            acc.pairs += t.pairs;
            acc.comparisons += t.comparisons;
            acc.equalities += t.equalities;
            if acc.witness.is_none() {
                acc.witness = t.witness;
            }
            acc
        },
    )
}

fn pairwise_scan<S: RateScalar>(
    pair: &CoupledPair,
    grid: &Grid,
    le: &(dyn Fn(&S, &S) -> bool + Sync),
) -> Result<Tally> {
    let base: Vec<Vec<S>> = rate_table(&pair.base, &pair.net, &grid.states)?;
    let var: Vec<Vec<S>> = rate_table(&pair.variant, &pair.net, &grid.states)?;
    let (m, n) = (pair.order.m(), pair.net.len());
    let per_x: Vec<Tally> = (0..grid.states.len())
        .into_par_iter()
        .map(|a| {
            let mut t = Tally { pairs: 0, comparisons: 0, equalities: 0, witness: None };
            let mut diff = vec![0i64; m];
            for b in 0..grid.states.len() {
                for i in 0..m {
                    diff[i] = grid.ax[b][i] - grid.ax[a][i];
                }
                if diff.iter().any(|d| *d < 0) {
                    continue;
                }
                t.pairs += 1;
                for j in 0..n {
                    let av = &grid.av[j];
                    // y + v_j must stay in the cone above x.
                    let up = grid.succ[b][j].is_some() && (0..m).any(|i| diff[i] + av[i] < 0);
                    // x + v_j must stay in the cone below y.
                    let down = grid.succ[a][j].is_some() && (0..m).any(|i| diff[i] - av[i] < 0);
                    for (needed, rel) in [(up, Relation::Le), (down, Relation::Ge)] {
                        if !needed {
                            continue;
                        }
                        t.comparisons += 1;
                        let (l, r) = (&var[b][j], &base[a][j]);
                        let ok = match rel {
                            Relation::Le => le(l, r),
                            Relation::Ge => le(r, l),
                        };
                        if !ok && t.witness.is_none() {
                            t.witness = Some(Witness {
                                x: grid.states[a].clone(),
                                y: grid.states[b].clone(),
                                row: None,
                                obligation: Obligation::Transition(j),
                                relation: rel,
                                lhs: l.to_f64(),
                                rhs: r.to_f64(),
                            });
                        }
                    }
                }
            }
            t
        })
        .collect();
    Ok(merge(per_x))
}

fn prepare(pair: &CoupledPair, opts: &CheckOptions) -> CoupledPair {
    match opts.truncation {
        Some(m) => pair.truncated(m),
        None => pair.clone(),
    }
}

fn report(theorem: Theorem, grid: &Grid, t: Tally, opts: &CheckOptions) -> ConditionReport {
    ConditionReport {
        theorem,
        verdict: if t.witness.is_none() { Verdict::Pass } else { Verdict::Fail },
        states: grid.states.len(),
        pairs_checked: t.pairs,
        comparisons: t.comparisons,
        equality_obligations: t.equalities,
        truncation: opts.truncation,
        tolerance: opts.tolerance,
        witness: t.witness,
    }
}

fn run_facet(
    theorem: Theorem,
    pair: &CoupledPair,
    opts: &CheckOptions,
    items: Vec<Vec<Item>>,
) -> Result<ConditionReport> {
    let p = prepare(pair, opts);
    let grid = Grid::build(&p)?;
    let tally = match opts.tolerance {
        Tolerance::Exact => {
            facet_scan::<BigRational>(&p, &grid, &items, &|a: &BigRational, b: &BigRational| a <= b)?
        }
        tol => facet_scan::<f64>(&p, &grid, &items, &|a: &f64, b: &f64| tol.le(*a, *b))?,
    };
    Ok(report(theorem, &grid, tally, opts))
}

fn require_unit_av(pair: &CoupledPair) -> Result<()> {
    let av = check_av_entries(&pair.order, &pair.net);
    match av.offending.first() {
        None => Ok(()),
        Some((j, i)) => Err(Error::PreconditionFailed(format!(
            "⟨A_{i}, v_{j}⟩ = {} is outside {{-1, 0, 1}}",
            av.products[*j][*i]
        ))),
    }
}

fn relation(s: i64) -> Option<Relation> {
    match s.signum() {
        -1 => Some(Relation::Le),
        1 => Some(Relation::Ge),
        _ => None,
    }
}

/// Pairwise test over every comparable pair.
pub fn check_thm_3_1(pair: &CoupledPair, opts: &CheckOptions) -> Result<ConditionReport> {
    let p = prepare(pair, opts);
    let grid = Grid::build(&p)?;
    let tally = match opts.tolerance {
        Tolerance::Exact => pairwise_scan::<BigRational>(&p, &grid, &|a: &BigRational, b: &BigRational| a <= b)?,
        tol => pairwise_scan::<f64>(&p, &grid, &|a: &f64, b: &f64| tol.le(*a, *b))?,
    };
    Ok(report(Theorem::Pairwise, &grid, tally, opts))
}

/// Facet test for single transitions.
pub fn check_thm_3_2(pair: &CoupledPair, opts: &CheckOptions) -> Result<ConditionReport> {
    require_unit_av(pair)?;
    let items = (0..pair.order.m())
        .map(|i| {
            (0..pair.net.len())
                .filter_map(|j| {
                    relation(pair.order.row_dot(i, pair.net.vector(j)))
                        .map(|rel| Item { set: vec![j], rel, label: Obligation::Transition(j) })
                })
                .collect()
        })
        .collect();
    run_facet(Theorem::Facet, pair, opts, items)
}

/// Facet test on sums over blocks with a common `A v_j`.
pub fn check_thm_3_3(
    pair: &CoupledPair,
    gp: &GroupPartition,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    require_unit_av(pair)?;
    gp.validate(pair.net.len())?;
    let eta = gp.eta(&pair.order, &pair.net).ok_or_else(|| {
        Error::PreconditionFailed("A v_j is not constant on every group".into())
    })?;
    let items = (0..pair.order.m())
        .map(|i| {
            gp.groups
                .iter()
                .enumerate()
                .filter_map(|(k, g)| {
                    relation(eta[k][i]).map(|rel| Item { set: g.clone(), rel, label: Obligation::Group(k) })
                })
                .collect()
        })
        .collect();
    run_facet(Theorem::Grouped, pair, opts, items)
}

/// Facet test on `G^{k,-}_i` and `G^{k,+}_i` sums for a permuted partition.
pub fn check_thm_s2(
    pair: &CoupledPair,
    gp: &GroupPartition,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    require_unit_av(pair)?;
    gp.validate(pair.net.len())?;
    if let Err(v) = verify_assumption_s1(&pair.order, &pair.net, gp) {
        return Err(Error::PreconditionFailed(format!(
            "ordering assumption fails in group {} at position {} on row {}",
            v.group, v.position, v.row
        )));
    }
    let items = (0..pair.order.m())
        .map(|i| {
            let mut row = Vec::new();
            for (k, g) in gp.groups.iter().enumerate() {
                for (sign, rel) in [(-1, Relation::Le), (1, Relation::Ge)] {
                    let set: Vec<usize> = g
                        .iter()
                        .copied()
                        .filter(|&j| pair.order.row_dot(i, pair.net.vector(j)) == sign)
                        .collect();
                    if !set.is_empty() {
                        row.push(Item { set, rel, label: Obligation::Group(k) });
                    }
                }
            }
            row
        })
        .collect();
    run_facet(Theorem::Permuted, pair, opts, items)
}

/// Dispatch on the theorem; `groups` is required for the grouped checks.
pub fn check(
    theorem: Theorem,
    pair: &CoupledPair,
    groups: Option<&GroupPartition>,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    let need = || Error::Validation("this check needs a group partition".into());
    match theorem {
        Theorem::Pairwise => check_thm_3_1(pair, opts),
        Theorem::Facet => check_thm_3_2(pair, opts),
        Theorem::Grouped => check_thm_3_3(pair, groups.ok_or_else(need)?, opts),
        Theorem::Permuted => check_thm_s2(pair, groups.ok_or_else(need)?, opts),
    }
}
