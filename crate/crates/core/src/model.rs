//! Reaction networks, state spaces and the generator.
//!
//! A network on `d` species is a list of reactions `v⁻ → v⁺` with
//! propensities. Reactions sharing a net change `v = v⁺ − v⁻` are merged
//! into one transition whose rate is the sum of their propensities; the
//! merged rate is zero whenever `x + v` leaves the state space.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::expr::{Bound, Expr};
use crate::scalar::{rational_from_f64, ratio_to_f64, parse_rational, Scalar};
use crate::{Error, Result};

/// Copy numbers, one entry per species.
pub type State = Vec<i64>;

/// Largest state space [`enumerate_states`] will materialize.
pub const DEFAULT_STATE_LIMIT: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Propensity {
    /// `κ · Π_i (x_i)_{v⁻_i}` with falling factorials; `κ` must be constant.
    MassAction(Expr),
    /// Arbitrary expression in the species counts and parameters.
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactant: Vec<u32>,
    pub product: Vec<u32>,
    pub rate: Propensity,
}

impl Reaction {
    pub fn mass_action(reactant: &[u32], product: &[u32], k: &str) -> Result<Self> {
        Ok(Reaction {
            reactant: reactant.to_vec(),
            product: product.to_vec(),
            rate: Propensity::MassAction(Expr::parse(k)?),
        })
    }

    pub fn with_expr(reactant: &[u32], product: &[u32], expr: &str) -> Result<Self> {
        Ok(Reaction {
            reactant: reactant.to_vec(),
            product: product.to_vec(),
            rate: Propensity::Expr(Expr::parse(expr)?),
        })
    }

    pub fn net_change(&self) -> Vec<i64> {
        self.product
            .iter()
            .zip(&self.reactant)
            .map(|(p, r)| *p as i64 - *r as i64)
            .collect()
    }
}

/// `⟨coefficients, x⟩ = total` or `≤ total`, depending on where it is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coefficients: Vec<i64>,
    pub total: i64,
}

impl LinearConstraint {
    pub fn new(coefficients: &[i64], total: i64) -> Self {
        LinearConstraint { coefficients: coefficients.to_vec(), total }
    }

    fn value(&self, x: &[i64]) -> i64 {
        self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn nonnegative(&self) -> bool {
        self.coefficients.iter().all(|c| *c >= 0)
    }
}

/// The set `X ⊆ Z₊^d` the chain lives on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpaceSpec {
    /// Explicit list, kept sorted.
    Enumerated(Vec<State>),
    /// Non-negative integer points satisfying linear equalities and
    /// inequalities, with optional per-coordinate caps.
    Conservation {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        equalities: Vec<LinearConstraint>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        upper_bounds: Vec<LinearConstraint>,
        #[serde(default, skip_serializing_if = "all_none")]
        caps: Vec<Option<i64>>,
    },
    /// `0 ≤ x_i ≤ caps[i]`.
    Box { caps: Vec<i64> },
}

fn all_none(caps: &[Option<i64>]) -> bool {
    caps.iter().all(Option::is_none)
}

impl StateSpaceSpec {
    pub fn conservation(equalities: Vec<LinearConstraint>) -> Self {
        StateSpaceSpec::Conservation { equalities, upper_bounds: vec![], caps: vec![] }
    }

    fn dims(&self) -> Option<usize> {
        match self {
            StateSpaceSpec::Enumerated(s) => s.first().map(Vec::len),
            StateSpaceSpec::Conservation { equalities, upper_bounds, caps } => equalities
                .iter()
                .chain(upper_bounds)
                .map(|c| c.coefficients.len())
                .next()
                .or((!caps.is_empty()).then_some(caps.len())),
            StateSpaceSpec::Box { caps } => Some(caps.len()),
        }
    }

    fn validate(&mut self, d: usize) -> Result<()> {
        let bad = |what: &str, got: usize| {
            Err(Error::Validation(format!("{what} has length {got}, expected {d}")))
        };
        match self {
            StateSpaceSpec::Enumerated(states) => {
                if states.is_empty() {
                    return Err(Error::Validation("enumerated state space is empty".into()));
                }
                for s in states.iter() {
                    if s.len() != d {
                        return bad("an enumerated state", s.len());
                    }
                    if s.iter().any(|v| *v < 0) {
                        return Err(Error::Validation(format!("state {s:?} has a negative entry")));
                    }
                }
                states.sort();
                states.dedup();
            }
            StateSpaceSpec::Conservation { equalities, upper_bounds, caps } => {
                for c in equalities.iter().chain(upper_bounds.iter()) {
                    if c.coefficients.len() != d {
                        return bad("a constraint", c.coefficients.len());
                    }
                }
                if caps.is_empty() {
                    caps.resize(d, None);
                }
                if caps.len() != d {
                    return bad("caps", caps.len());
                }
            }
            StateSpaceSpec::Box { caps } => {
                if caps.len() != d {
                    return bad("caps", caps.len());
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        match self {
            StateSpaceSpec::Enumerated(states) => states
                .binary_search_by(|s| s.as_slice().cmp(x))
                .is_ok(),
            StateSpaceSpec::Conservation { equalities, upper_bounds, caps } => {
                x.iter().all(|v| *v >= 0)
                    && x.len() == self.dims().unwrap_or(x.len())
                    && equalities.iter().all(|c| c.value(x) == c.total)
                    && upper_bounds.iter().all(|c| c.value(x) <= c.total)
                    && caps.iter().zip(x).all(|(c, v)| c.is_none_or(|c| *v <= c))
            }
            StateSpaceSpec::Box { caps } => {
                x.len() == caps.len() && x.iter().zip(caps).all(|(v, c)| *v >= 0 && v <= c)
            }
        }
    }

    /// Intersect with the box `‖x‖∞ ≤ m`.
    pub fn truncated(&self, m: i64) -> StateSpaceSpec {
        match self {
            StateSpaceSpec::Enumerated(states) => StateSpaceSpec::Enumerated(
                states.iter().filter(|s| s.iter().all(|v| *v <= m)).cloned().collect(),
            ),
            StateSpaceSpec::Conservation { equalities, upper_bounds, caps } => {
                let d = self.dims().unwrap_or(caps.len());
                let caps = (0..d)
                    .map(|i| Some(caps.get(i).copied().flatten().map_or(m, |c| c.min(m))))
                    .collect();
                StateSpaceSpec::Conservation {
                    equalities: equalities.clone(),
                    upper_bounds: upper_bounds.clone(),
                    caps,
                }
            }
            StateSpaceSpec::Box { caps } => {
                StateSpaceSpec::Box { caps: caps.iter().map(|c| (*c).min(m)).collect() }
            }
        }
    }

    /// Per-coordinate upper bounds implied by the description, if finite.
    fn coordinate_bounds(&self) -> Option<Vec<i64>> {
        match self {
            StateSpaceSpec::Enumerated(states) => {
                let d = states.first()?.len();
                Some((0..d).map(|i| states.iter().map(|s| s[i]).max().unwrap_or(0)).collect())
            }
            StateSpaceSpec::Box { caps } => Some(caps.clone()),
            StateSpaceSpec::Conservation { equalities, upper_bounds, caps } => {
                let d = self.dims()?;
                (0..d)
                    .map(|i| {
                        let from_constraints = equalities
                            .iter()
                            .chain(upper_bounds)
                            .filter(|c| c.nonnegative() && c.coefficients[i] > 0)
                            .map(|c| c.total.div_euclid(c.coefficients[i]))
                            .min();
                        let cap = caps.get(i).copied().flatten();
                        match (cap, from_constraints) {
                            (Some(a), Some(b)) => Some(a.min(b)),
                            (a, b) => a.or(b),
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coordinate_bounds().is_some()
    }
}

/// Enumerate a finite state space in lexicographic order.
pub fn enumerate_states(spec: &StateSpaceSpec) -> Result<Vec<State>> {
    enumerate_states_capped(spec, DEFAULT_STATE_LIMIT)
}

pub fn enumerate_states_capped(spec: &StateSpaceSpec, limit: usize) -> Result<Vec<State>> {
    if let StateSpaceSpec::Enumerated(states) = spec {
        if states.len() > limit {
            return Err(Error::CapExceeded { limit });
        }
        let mut s = states.clone();
        s.sort();
        s.dedup();
        return Ok(s);
    }
    let bounds = spec.coordinate_bounds().ok_or(Error::InfiniteSpace)?;
    // Constraints with non-negative coefficients prune partial assignments.
    let pruning: Vec<LinearConstraint> = match spec {
        StateSpaceSpec::Conservation { equalities, upper_bounds, .. } => equalities
            .iter()
            .chain(upper_bounds)
            .filter(|c| c.nonnegative())
            .cloned()
            .collect(),
        _ => vec![],
    };
    let d = bounds.len();
    let mut out = Vec::new();
    let mut x = vec![0i64; d];
    let mut partial = vec![0i64; pruning.len()];
    fn rec(
        i: usize,
        x: &mut State,
        partial: &mut [i64],
        bounds: &[i64],
        pruning: &[LinearConstraint],
        spec: &StateSpaceSpec,
        out: &mut Vec<State>,
        limit: usize,
    ) -> Result<()> {
        if i == x.len() {
            if spec.contains(x) {
                if out.len() == limit {
                    return Err(Error::CapExceeded { limit });
                }
                out.push(x.clone());
            }
            return Ok(());
        }
        for v in 0..=bounds[i] {
            if pruning
                .iter()
                .zip(partial.iter())
                .any(|(c, p)| p + c.coefficients[i] * v > c.total)
            {
                break;
            }
            x[i] = v;
            for (c, p) in pruning.iter().zip(partial.iter_mut()) {
                *p += c.coefficients[i] * v;
            }
            let r = rec(i + 1, x, partial, bounds, pruning, spec, out, limit);
            for (c, p) in pruning.iter().zip(partial.iter_mut()) {
                *p -= c.coefficients[i] * v;
            }
            r?;
        }
        x[i] = 0;
        Ok(())
    }
    rec(0, &mut x, &mut partial, &bounds, &pruning, spec, &mut out, limit)?;
    Ok(out)
}

#[derive(Debug, Clone)]
enum Kernel<S> {
    MassAction { coef: S, factors: Vec<(usize, u32)> },
    Expr(Bound<S>),
}

impl<S: Scalar> Kernel<S> {
    fn build(r: &Reaction, params: &BTreeMap<String, BigRational>) -> Result<Self> {
        Ok(match &r.rate {
            Propensity::MassAction(k) => {
                let coef = k.bind::<S>(params)?;
                let coef = coef.as_const().cloned().ok_or_else(|| {
                    Error::Validation(format!("mass-action constant `{k}` depends on the state"))
                })?;
                if coef.is_negative() {
                    return Err(Error::Validation(format!("mass-action constant `{k}` is negative")));
                }
                let factors = r
                    .reactant
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| **n > 0)
                    .map(|(i, n)| (i, *n))
                    .collect();
                Kernel::MassAction { coef, factors }
            }
            Propensity::Expr(e) => Kernel::Expr(e.bind(params)?),
        })
    }

    fn eval(&self, x: &[i64]) -> Result<S> {
        match self {
            Kernel::MassAction { coef, factors } => {
                let mut acc = coef.clone();
                for &(i, n) in factors {
                    let xi = x[i];
                    for k in 0..n as i64 {
                        if xi - k <= 0 {
                            return Ok(S::zero());
                        }
                        acc = acc.mul(&S::from_i64(xi - k));
                    }
                }
                Ok(acc)
            }
            Kernel::Expr(e) => {
                let v = e.eval(x)?;
                if v.is_negative() {
                    Err(Error::Evaluation(format!("negative propensity {v:?} at {x:?}")))
                } else {
                    Ok(v)
                }
            }
        }
    }
}

/// A validated reaction network.
#[derive(Debug, Clone)]
pub struct Network {
    species: Vec<String>,
    params: BTreeMap<String, BigRational>,
    reactions: Vec<Reaction>,
    state_space: StateSpaceSpec,
    order_matrix: Option<Vec<Vec<i64>>>,
    float: Vec<Kernel<f64>>,
    exact: Vec<Kernel<BigRational>>,
}

impl PartialEq for Network {
    fn eq(&self, o: &Self) -> bool {
        self.species == o.species
            && self.params == o.params
            && self.reactions == o.reactions
            && self.state_space == o.state_space
            && self.order_matrix == o.order_matrix
    }
}

impl Network {
    pub fn new(
        species: Vec<String>,
        params: BTreeMap<String, BigRational>,
        reactions: Vec<Reaction>,
        mut state_space: StateSpaceSpec,
    ) -> Result<Self> {
        let d = species.len();
        if d == 0 {
            return Err(Error::Validation("no species".into()));
        }
        let unique: BTreeSet<_> = species.iter().collect();
        if unique.len() != d {
            return Err(Error::Validation("species names must be unique".into()));
        }
        if reactions.is_empty() {
            return Err(Error::Validation("no reactions".into()));
        }
        let mut touched = vec![false; d];
        for (j, r) in reactions.iter().enumerate() {
            if r.reactant.len() != d || r.product.len() != d {
                return Err(Error::Validation(format!(
                    "reaction {} has vectors of length {}/{}, expected {d}",
                    j + 1,
                    r.reactant.len(),
                    r.product.len()
                )));
            }
            for (i, (a, b)) in r.reactant.iter().zip(&r.product).enumerate() {
                touched[i] |= *a > 0 || *b > 0;
            }
            let e = match &r.rate {
                Propensity::MassAction(e) | Propensity::Expr(e) => e,
            };
            if e.var_bound() > d {
                return Err(Error::Validation(format!(
                    "reaction {} refers to x{} but there are {d} species",
                    j + 1,
                    e.var_bound()
                )));
            }
        }
        if let Some(i) = touched.iter().position(|t| !t) {
            return Err(Error::Validation(format!("species `{}` takes part in no reaction", species[i])));
        }
        state_space.validate(d)?;
        let float = reactions.iter().map(|r| Kernel::build(r, &params)).collect::<Result<_>>()?;
        let exact = reactions.iter().map(|r| Kernel::build(r, &params)).collect::<Result<_>>()?;
        Ok(Network { species, params, reactions, state_space, order_matrix: None, float, exact })
    }

    pub fn with_order_matrix(mut self, rows: Vec<Vec<i64>>) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|r| r.len() != self.dim()) {
            return Err(Error::Validation(format!(
                "order_matrix must be a non-empty list of rows of length {}",
                self.dim()
            )));
        }
        self.order_matrix = Some(rows);
        Ok(self)
    }

    /// Rebuild with some parameters replaced.
    pub fn with_params(&self, overrides: &[(&str, BigRational)]) -> Result<Self> {
        let mut params = self.params.clone();
        for (k, v) in overrides {
            params.insert(k.to_string(), v.clone());
        }
        let net = Network::new(self.species.clone(), params, self.reactions.clone(), self.state_space.clone())?;
        Ok(Network { order_matrix: self.order_matrix.clone(), ..net })
    }

    /// Same network on a different state space.
    pub fn with_state_space(&self, space: StateSpaceSpec) -> Result<Self> {
        let net = Network::new(self.species.clone(), self.params.clone(), self.reactions.clone(), space)?;
        Ok(Network { order_matrix: self.order_matrix.clone(), ..net })
    }

    /// Restrict to `‖x‖∞ ≤ m`; transitions leaving the box get rate zero.
    pub fn truncated(&self, m: i64) -> Self {
        Network { state_space: self.state_space.truncated(m), ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.species.len()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn params(&self) -> &BTreeMap<String, BigRational> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).map(ratio_to_f64)
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn state_space(&self) -> &StateSpaceSpec {
        &self.state_space
    }

    pub fn order_matrix(&self) -> Option<&[Vec<i64>]> {
        self.order_matrix.as_deref()
    }

    pub fn propensity(&self, r: usize, x: &[i64]) -> Result<f64> {
        self.float[r].eval(x)
    }

    pub fn propensity_exact(&self, r: usize, x: &[i64]) -> Result<BigRational> {
        self.exact[r].eval(x)
    }

}

/// Scalars a network can evaluate its propensities in.
pub trait RateScalar: Scalar {
    fn propensity(net: &Network, r: usize, x: &[i64]) -> Result<Self>;
}

impl RateScalar for f64 {
    fn propensity(net: &Network, r: usize, x: &[i64]) -> Result<Self> {
        net.float[r].eval(x)
    }
}

impl RateScalar for BigRational {
    fn propensity(net: &Network, r: usize, x: &[i64]) -> Result<Self> {
        net.exact[r].eval(x)
    }
}

/// Distinct net changes `v_j` and the reactions `R_{v_j}` producing them.
///
/// Indices follow first appearance in the reaction list, so a model written
/// in the usual order keeps its textbook numbering. Reactions with zero net
/// change never move the chain and are left out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetStructure {
    vectors: Vec<Vec<i64>>,
    groups: Vec<Vec<usize>>,
}

impl NetStructure {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<i64>] {
        &self.vectors
    }

    pub fn vector(&self, j: usize) -> &[i64] {
        &self.vectors[j]
    }

    /// Reaction indices whose net change is `v_j`.
    pub fn reactions_of(&self, j: usize) -> &[usize] {
        &self.groups[j]
    }
}

pub fn derive_net_structure(net: &Network) -> NetStructure {
    let mut vectors: Vec<Vec<i64>> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (r, reaction) in net.reactions().iter().enumerate() {
        let v = reaction.net_change();
        if v.iter().all(|c| *c == 0) {
            continue;
        }
        match vectors.iter().position(|w| *w == v) {
            Some(j) => groups[j].push(r),
            None => {
                vectors.push(v);
                groups.push(vec![r]);
            }
        }
    }
    NetStructure { vectors, groups }
}

pub(crate) fn shifted(x: &[i64], v: &[i64]) -> State {
    x.iter().zip(v).map(|(a, b)| a + b).collect()
}

/// `Υ_j(x)` for every `j`, zero when `x + v_j ∉ X`.
pub fn rate_vector(net: &Network, ns: &NetStructure, x: &[i64]) -> Result<Vec<f64>> {
    rate_vector_as(net, ns, x)
}

pub fn rate_vector_exact(net: &Network, ns: &NetStructure, x: &[i64]) -> Result<Vec<BigRational>> {
    rate_vector_as(net, ns, x)
}

pub fn rate_vector_as<S: RateScalar>(
    net: &Network,
    ns: &NetStructure,
    x: &[i64],
) -> Result<Vec<S>> {
    if x.len() != net.dim() {
        return Err(Error::DimensionMismatch { expected: net.dim(), got: x.len() });
    }
    let mut y = x.to_vec();
    (0..ns.len())
        .map(|j| {
            for (k, vk) in ns.vector(j).iter().enumerate() {
                y[k] = x[k] + vk;
            }
            if !net.state_space().contains(&y) {
                return Ok(S::zero());
            }
            let mut acc = S::zero();
            for &r in ns.reactions_of(j) {
                acc = acc.add(&S::propensity(net, r, x)?);
            }
            Ok(acc)
        })
        .collect()
}

/// [`rate_vector`] into a reused buffer.
pub fn rate_vector_into(
    net: &Network,
    ns: &NetStructure,
    x: &[i64],
    out: &mut Vec<f64>,
    scratch: &mut State,
) -> Result<()> {
    out.clear();
    scratch.clear();
    scratch.extend_from_slice(x);
    for j in 0..ns.len() {
        for (k, vk) in ns.vector(j).iter().enumerate() {
            scratch[k] = x[k] + vk;
        }
        let mut acc = 0.0;
        if net.state_space().contains(scratch) {
            for &r in ns.reactions_of(j) {
                acc += net.propensity(r, x)?;
            }
        }
        out.push(acc);
    }
    Ok(())
}

/// Off-diagonal entries `Q_{x,x+v_j}` with positive rate, and `Q_{x,x}`.
pub fn generator_row(
    net: &Network,
    ns: &NetStructure,
    x: &[i64],
) -> Result<(BTreeMap<State, f64>, f64)> {
    let rates = rate_vector(net, ns, x)?;
    let mut row = BTreeMap::new();
    let mut diag = 0.0;
    for (j, r) in rates.into_iter().enumerate() {
        if r > 0.0 {
            row.insert(shifted(x, ns.vector(j)), r);
            diag -= r;
        }
    }
    Ok((row, diag))
}

/// A set of states `Γ`, listed or described by a predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSet {
    States(Vec<State>),
    Predicate(crate::expr::Predicate),
}

impl StateSet {
    pub fn single(x: State) -> Self {
        StateSet::States(vec![x])
    }

    /// Parse a predicate such as `x1 == 0 && x2 >= 3`.
    pub fn predicate(src: &str) -> Result<Self> {
        Ok(StateSet::Predicate(crate::expr::Predicate::parse(src)?))
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        match self {
            StateSet::States(s) => s.iter().any(|s| s.as_slice() == x),
            StateSet::Predicate(p) => p.holds(x).unwrap_or(false),
        }
    }
}

impl std::fmt::Display for StateSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateSet::States(s) => write!(f, "{s:?}"),
            StateSet::Predicate(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParamValue {
    Num(f64),
    Text(String),
}

impl ParamValue {
    fn to_rational(&self, name: &str) -> Result<BigRational> {
        match self {
            ParamValue::Num(v) => rational_from_f64(*v),
            ParamValue::Text(s) => parse_rational(s),
        }
        .ok_or_else(|| Error::Validation(format!("parameter `{name}` is not a finite rational")))
    }

    fn from_rational(r: &BigRational) -> Self {
        let f = ratio_to_f64(r);
        if rational_from_f64(f).as_ref() == Some(r) {
            ParamValue::Num(f)
        } else {
            ParamValue::Text(format!("{}/{}", r.numer(), r.denom()))
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RateFile {
    MassAction(ParamValue),
    Expr(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionFile {
    reactant: Vec<u32>,
    product: Vec<u32>,
    rate: RateFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    species: Vec<String>,
    #[serde(default)]
    params: BTreeMap<String, ParamValue>,
    reactions: Vec<ReactionFile>,
    state_space: StateSpaceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order_matrix: Option<Vec<Vec<i64>>>,
}

/// Position of `needle` (a JSON string body) in the source, 1-based.
fn locate(text: &str, needle: &str) -> (usize, usize) {
    let quoted = serde_json::to_string(needle).unwrap_or_default();
    match text.find(&quoted) {
        Some(off) => {
            let before = &text[..off];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 2;
            (line, col)
        }
        None => (0, 0),
    }
}

/// Parse a JSON model file.
pub fn parse_model(text: &str) -> Result<Network> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut params = BTreeMap::new();
    for (k, v) in &file.params {
        params.insert(k.clone(), v.to_rational(k)?);
    }
    let mut reactions = Vec::new();
    for (j, r) in file.reactions.into_iter().enumerate() {
        let src = match &r.rate {
            RateFile::MassAction(ParamValue::Text(s)) | RateFile::Expr(s) => s.clone(),
            RateFile::MassAction(ParamValue::Num(v)) => v.to_string(),
        };
        let expr = Expr::parse(&src).map_err(|e| match e {
            Error::Parse { column, message, .. } => {
                let (line, col) = locate(text, &src);
                Error::Parse {
                    line,
                    column: col + column - 1,
                    message: format!("reaction {}: {message}", j + 1),
                }
            }
            other => other,
        })?;
        let rate = match r.rate {
            RateFile::MassAction(ParamValue::Num(v)) => {
                let q = rational_from_f64(v)
                    .ok_or_else(|| Error::Validation(format!("reaction {}: bad constant", j + 1)))?;
                Propensity::MassAction(Expr::Num(q))
            }
            RateFile::MassAction(_) => Propensity::MassAction(expr),
            RateFile::Expr(_) => Propensity::Expr(expr),
        };
        reactions.push(Reaction { reactant: r.reactant, product: r.product, rate });
    }
    let net = Network::new(file.species, params, reactions, file.state_space)?;
    match file.order_matrix {
        Some(a) => net.with_order_matrix(a),
        None => Ok(net),
    }
}

/// Serialize to the JSON model format read by [`parse_model`].
pub fn to_model_json(net: &Network) -> String {
    let file = ModelFile {
        species: net.species.clone(),
        params: net.params.iter().map(|(k, v)| (k.clone(), ParamValue::from_rational(v))).collect(),
        reactions: net
            .reactions
            .iter()
            .map(|r| ReactionFile {
                reactant: r.reactant.clone(),
                product: r.product.clone(),
                rate: match &r.rate {
                    Propensity::MassAction(e) => RateFile::MassAction(ParamValue::Text(e.to_string())),
                    Propensity::Expr(e) => RateFile::Expr(e.to_string()),
                },
            })
            .collect(),
        state_space: net.state_space.clone(),
        order_matrix: net.order_matrix.clone(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}
