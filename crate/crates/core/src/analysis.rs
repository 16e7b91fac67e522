//! Comparative statements built from simulated paths: first passage times,
//! stationary distributions, stochastic-order tests, the product-form law of
//! the reversible enzyme network and Foster-Lyapunov drift checks.
//!
//! Replicates run in parallel but every reduction happens after collecting
//! results in replicate order, so estimates do not depend on thread count.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{CoupledPair, Verdict};
use crate::coupling::{replicate_coupled, replicate_rng, ssa_drive, CouplingConfig, Flow, SamplePath};
use crate::expr::Expr;
use crate::model::{
    derive_net_structure, enumerate_states, rate_vector_as, shifted, NetStructure, Network, State,
    StateSet,
};
use crate::order::{preceq, verify_decreasing, verify_increasing};
use crate::scalar::{ratio_to_f64, Scalar};
use crate::{Error, Result};

/// `inf { t : X(t) ∈ Γ }` read off a path; `None` when censored.
pub fn first_passage(path: &SamplePath, gamma: &StateSet) -> Option<f64> {
    path.events.iter().find(|(_, x)| gamma.contains(x)).map(|(t, _)| *t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfptEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Uncensored samples entering the mean.
    pub n_samples: usize,
    /// Paths that had not reached `Γ` by the horizon.
    pub n_censored: usize,
}

impl MfptEstimate {
    /// Mean and standard error over the uncensored entries.
    pub fn from_samples(samples: &[Option<f64>]) -> Result<Self> {
        let hits: Vec<f64> = samples.iter().flatten().copied().collect();
        if hits.is_empty() {
            return Err(Error::AllCensored { n: samples.len() });
        }
        let (mean, std_error) = mean_se(&hits);
        Ok(MfptEstimate { mean, std_error, n_samples: hits.len(), n_censored: samples.len() - hits.len() })
    }

    pub fn censored_fraction(&self) -> f64 {
        self.n_censored as f64 / (self.n_samples + self.n_censored) as f64
    }
}

/// Sample mean and standard error of the mean (`n - 1` denominator).
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Hitting times of `Γ` from `x0` for `n` independent SSA replicates.
pub fn mfpt_samples(
    net: &Network,
    x0: &[i64],
    gamma: &StateSet,
    horizon: f64,
    n: u64,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    if !net.state_space().contains(x0) {
        return Err(Error::Validation(format!("{x0:?} is not in the state space")));
    }
    if gamma.contains(x0) {
        return Ok(vec![Some(0.0); n as usize]);
    }
    let ns = derive_net_structure(net);
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = replicate_rng(seed, k);
            let mut hit = None;
            ssa_drive(net, &ns, x0, horizon, &mut rng, |t, x| {
                if gamma.contains(x) {
                    hit = Some(t);
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            })?;
            Ok(hit)
        })
        .collect()
}

/// Monte Carlo mean first passage time from `x0` to `Γ`.
pub fn estimate_mfpt(
    net: &Network,
    x0: &[i64],
    gamma: &StateSet,
    horizon: f64,
    n: u64,
    seed: u64,
) -> Result<MfptEstimate> {
    MfptEstimate::from_samples(&mfpt_samples(net, x0, gamma, horizon, n, seed)?)
}

/// Which way `Γ` sits in the preorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `x ∈ Γ, x ≼ y ⇒ y ∈ Γ`; the upper chain hits first.
    Increasing,
    /// `x ∈ Γ, y ≼ x ⇒ y ∈ Γ`; the lower chain hits first.
    Decreasing,
}

/// Classify `Γ` over `states`. Sets that are both (such as `∅`) count as
/// increasing.
pub fn gamma_direction(pair: &CoupledPair, states: &[State], gamma: &StateSet) -> Result<Direction> {
    let inside = |x: &[i64]| gamma.contains(x);
    if verify_increasing(pair.order(), states, inside).is_ok() {
        Ok(Direction::Increasing)
    } else if verify_decreasing(pair.order(), states, inside).is_ok() {
        Ok(Direction::Decreasing)
    } else {
        Err(Error::DirectionUnknown)
    }
}

/// Outcome of [`usual_stochastic_order_test`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticOrderTest {
    /// `F_a(t) ≥ F_b(t)` at every grid point.
    pub holds: bool,
    /// `max_t (F_b(t) − F_a(t))⁺`.
    pub max_violation: f64,
    /// Where the largest violation occurs.
    pub at: Option<f64>,
}

/// Empirical check of `a ≼_st b`, i.e. `F_a ≥ F_b`, on the merged sample
/// grid. Infinite entries stand for censored samples.
pub fn usual_stochastic_order_test(a: &[f64], b: &[f64]) -> StochasticOrderTest {
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    let cdf = |v: &[f64], t: f64| {
        if v.is_empty() {
            0.0
        } else {
            v.partition_point(|s| *s <= t) as f64 / v.len() as f64
        }
    };
    let mut worst = (0.0, None);
    for &t in a.iter().chain(&b).filter(|t| t.is_finite()) {
        let gap = cdf(&b, t) - cdf(&a, t);
        if gap > worst.0 {
            worst = (gap, Some(t));
        }
    }
    StochasticOrderTest { holds: worst.0 == 0.0, max_violation: worst.0, at: worst.1 }
}

/// Paired hitting times from coupled runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfptComparison {
    pub direction: Direction,
    pub replicates: u64,
    /// `(T_Γ, T̆_Γ)` per replicate, `None` when censored.
    pub pairs: Vec<(Option<f64>, Option<f64>)>,
    /// Replicates where the chain expected to hit first did so (ties count).
    pub pathwise_holds: u64,
    pub pathwise_violations: u64,
    /// Neither chain hit by the horizon, so the pair says nothing.
    pub both_censored: u64,
    /// Replicates whose paths stayed ordered the whole time.
    pub ordered_throughout: u64,
    pub base: Option<MfptEstimate>,
    pub variant: Option<MfptEstimate>,
    /// Expected-later minus expected-earlier time over pairs where both hit:
    /// `T − T̆` for increasing `Γ`, `T̆ − T` for decreasing.
    pub paired_difference: Option<PairedDifference>,
    /// Test of `earlier ≼_st later`, censored times treated as `+∞`.
    pub cdf_dominance: StochasticOrderTest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedDifference {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Run `n` coupled replicates until both chains reach `Γ` and compare the
/// hitting times pairwise. `Γ` is classified on the finite state space, or
/// on the first truncation box of `cfg` for infinite ones.
pub fn compare_mfpt_coupled(
    pair: &CoupledPair,
    x0: &[i64],
    x0_breve: &[i64],
    gamma: &StateSet,
    cfg: &CouplingConfig,
    n: u64,
) -> Result<MfptComparison> {
    if !preceq(pair.order(), x0, x0_breve)? {
        return Err(Error::PreconditionFailed("initial states are not ordered".into()));
    }
    let space = pair.base().state_space();
    let states = if space.is_finite() {
        enumerate_states(space)?
    } else {
        let m = cfg
            .truncation
            .and_then(|t| t.initial)
            .unwrap_or_else(|| x0.iter().chain(x0_breve).copied().max().unwrap_or(0).max(8) * 2);
        enumerate_states(&space.truncated(m))?
    };
    let direction = gamma_direction(pair, &states, gamma)?;
    let cfg = cfg.clone().with_target(gamma.clone(), true);
    let runs = replicate_coupled(pair, x0, x0_breve, &cfg, n)?;

    let pairs: Vec<(Option<f64>, Option<f64>)> = runs.iter().map(|r| (r.hit_x, r.hit_xbreve)).collect();
    let (mut holds, mut violations, mut both_censored) = (0, 0, 0);
    let mut diffs = Vec::new();
    let (mut early, mut late) = (Vec::new(), Vec::new());
    for &(t, tb) in &pairs {
        let (first, second) = match direction {
            Direction::Increasing => (tb, t),
            Direction::Decreasing => (t, tb),
        };
        early.push(first.unwrap_or(f64::INFINITY));
        late.push(second.unwrap_or(f64::INFINITY));
        match (first, second) {
            (None, None) => both_censored += 1,
            (Some(a), Some(b)) => {
                diffs.push(b - a);
                if a <= b {
                    holds += 1;
                } else {
                    violations += 1;
                }
            }
            (Some(_), None) => holds += 1,
            (None, Some(_)) => violations += 1,
        }
    }
    let paired_difference = (!diffs.is_empty()).then(|| {
        let (mean, std_error) = mean_se(&diffs);
        PairedDifference { mean, std_error, n: diffs.len() }
    });
    let base: Vec<Option<f64>> = pairs.iter().map(|p| p.0).collect();
    let variant: Vec<Option<f64>> = pairs.iter().map(|p| p.1).collect();
    Ok(MfptComparison {
        direction,
        replicates: n,
        pathwise_holds: holds,
        pathwise_violations: violations,
        both_censored,
        ordered_throughout: runs.iter().filter(|r| r.ordered_throughout).count() as u64,
        base: MfptEstimate::from_samples(&base).ok(),
        variant: MfptEstimate::from_samples(&variant).ok(),
        paired_difference,
        cdf_dominance: usual_stochastic_order_test(&early, &late),
        pairs,
    })
}

/// A probability distribution on finitely many states, sorted by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub support: Vec<State>,
    pub mass: Vec<f64>,
}

impl DistributionTable {
    /// Normalize non-negative weights; zero weights are dropped.
    pub fn from_weights(weights: BTreeMap<State, f64>) -> Result<Self> {
        let total: f64 = weights.values().sum();
        if !(total > 0.0) || weights.values().any(|w| *w < 0.0) {
            return Err(Error::Validation("weights must be non-negative with positive sum".into()));
        }
        let (support, mass) = weights.into_iter().filter(|(_, w)| *w > 0.0).map(|(s, w)| (s, w / total)).unzip();
        Ok(DistributionTable { support, mass })
    }

    pub fn point(x: State) -> Self {
        DistributionTable { support: vec![x], mass: vec![1.0] }
    }

    pub fn get(&self, x: &[i64]) -> f64 {
        self.support
            .binary_search_by(|s| s.as_slice().cmp(x))
            .map_or(0.0, |i| self.mass[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&State, f64)> {
        self.support.iter().zip(self.mass.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// `Σ_{x∈Γ} π_x`.
pub fn stationary_set_mass(dist: &DistributionTable, gamma: &StateSet) -> f64 {
    dist.iter().filter(|(x, _)| gamma.contains(x)).map(|(_, m)| m).sum()
}

/// `½ Σ |p_x − q_x|` over the union of supports.
pub fn total_variation(p: &DistributionTable, q: &DistributionTable) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < p.support.len() || j < q.support.len() {
        let ord = match (p.support.get(i), q.support.get(j)) {
            (Some(a), Some(b)) => a.cmp(b),
            (Some(_), None) => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Greater,
        };
        match ord {
            std::cmp::Ordering::Less => {
                acc += p.mass[i];
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                acc += q.mass[j];
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                acc += (p.mass[i] - q.mass[j]).abs();
                i += 1;
                j += 1;
            }
        }
    }
    acc / 2.0
}

/// Occupation-time estimate split into equal batches after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchedStationary {
    pub pooled: DistributionTable,
    pub batches: Vec<DistributionTable>,
    pub burn_in: f64,
    pub total_time: f64,
    pub jumps: u64,
}

/// A set mass with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SetMassEstimate {
    pub mass: f64,
    pub std_error: f64,
    pub batches: usize,
}

impl BatchedStationary {
    pub fn set_mass(&self, gamma: &StateSet) -> SetMassEstimate {
        let per: Vec<f64> = self.batches.iter().map(|d| stationary_set_mass(d, gamma)).collect();
        let (_, std_error) = mean_se(&per);
        SetMassEstimate { mass: stationary_set_mass(&self.pooled, gamma), std_error, batches: per.len() }
    }
}

/// Time-average of one long SSA path over `[burn_in, total_time]`, kept
/// per batch. `burn_in` defaults to 10% of `total_time`.
pub fn empirical_stationary_batched(
    net: &Network,
    x0: &[i64],
    burn_in: Option<f64>,
    total_time: f64,
    batches: usize,
    seed: u64,
) -> Result<BatchedStationary> {
    if !net.state_space().contains(x0) {
        return Err(Error::Validation(format!("{x0:?} is not in the state space")));
    }
    let burn = burn_in.unwrap_or(0.1 * total_time);
    if !(total_time > burn && burn >= 0.0) || batches == 0 {
        return Err(Error::Validation("need 0 ≤ burn_in < total_time and at least one batch".into()));
    }
    let width = (total_time - burn) / batches as f64;
    let mut occ: Vec<HashMap<State, f64>> = vec![HashMap::new(); batches];
    // Spread the holding interval [a, b) of state x across the batches.
    let credit = |occ: &mut Vec<HashMap<State, f64>>, x: &State, a: f64, b: f64| {
        let (a, b) = (a.max(burn), b.min(total_time));
        if b <= a {
            return;
        }
        let mut s = a;
        while s < b {
            let k = (((s - burn) / width) as usize).min(batches - 1);
            let end = if k + 1 == batches { b } else { b.min(burn + (k + 1) as f64 * width) };
            *occ[k].entry(x.clone()).or_insert(0.0) += end - s;
            if end <= s {
                break;
            }
            s = end;
        }
    };
    let ns = derive_net_structure(net);
    let mut rng = replicate_rng(seed, 0);
    let (mut cur, mut since, mut jumps) = (x0.to_vec(), 0.0, 0u64);
    ssa_drive(net, &ns, x0, total_time, &mut rng, |t, x| {
        credit(&mut occ, &cur, since, t);
        cur.clone_from(x);
        since = t;
        jumps += 1;
        Flow::Continue
    })?;
    credit(&mut occ, &cur, since, total_time);

    let mut pooled: BTreeMap<State, f64> = BTreeMap::new();
    let mut tables = Vec::with_capacity(batches);
    for b in occ {
        let sorted: BTreeMap<State, f64> = b.into_iter().collect();
        for (x, w) in &sorted {
            *pooled.entry(x.clone()).or_insert(0.0) += w;
        }
        tables.push(DistributionTable::from_weights(sorted)?);
    }
    Ok(BatchedStationary {
        pooled: DistributionTable::from_weights(pooled)?,
        batches: tables,
        burn_in: burn,
        total_time,
        jumps,
    })
}

/// Occupation-time estimate of the stationary law from one long path.
pub fn empirical_stationary(
    net: &Network,
    x0: &[i64],
    burn_in: Option<f64>,
    total_time: f64,
    seed: u64,
) -> Result<DistributionTable> {
    Ok(empirical_stationary_batched(net, x0, burn_in, total_time, 1, seed)?.pooled)
}

fn ln_factorials(n: i64) -> Vec<f64> {
    let mut v = vec![0.0; n as usize + 1];
    for k in 1..=n as usize {
        v[k] = v[k - 1] + (k as f64).ln();
    }
    v
}

/// Stationary law of the reversible enzyme network with inflow and outflow
/// (`k1..k6` in reaction order): two Poisson factors times a binomial split
/// of the `Etot` enzymes, restricted to `x1 ≤ caps.0`, `x2 ≤ caps.1` and
/// renormalized. Computed in log space.
pub fn product_form_stationary(e_tot: i64, kappa: [f64; 6], caps: (i64, i64)) -> Result<DistributionTable> {
    if kappa.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
        return Err(Error::InvalidParams("all rate constants must be positive".into()));
    }
    if e_tot < 0 || caps.0 < 0 || caps.1 < 0 {
        return Err(Error::InvalidParams("Etot and caps must be non-negative".into()));
    }
    let [k1, k2, k3, k4, k5, k6] = kappa;
    let c1 = k5 / k6;
    let c2 = k1 * k3 * k5 / (k2 * k4 * k6);
    let r = k1 * k5 / (k2 * k6);
    let (ln_c3, ln_c4) = (-(r.ln_1p()), r.ln() - r.ln_1p());
    let lf = ln_factorials(caps.0.max(caps.1).max(e_tot));
    let mut logs = Vec::new();
    for x1 in 0..=caps.0 {
        for x2 in 0..=caps.1 {
            for x3 in 0..=e_tot {
                let x4 = e_tot - x3;
                let l = x1 as f64 * c1.ln() - c1 - lf[x1 as usize]
                    + x2 as f64 * c2.ln() - c2 - lf[x2 as usize]
                    + lf[e_tot as usize]
                    + x3 as f64 * ln_c3 - lf[x3 as usize]
                    + x4 as f64 * ln_c4 - lf[x4 as usize];
                logs.push((vec![x1, x2, x3, x4], l));
            }
        }
    }
    let top = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    DistributionTable::from_weights(logs.into_iter().map(|(x, l)| (x, (l - top).exp())).collect())
}

/// `QV(x) = Σ_j Υ_j(x)(V(x + v_j) − V(x))`. `V` may use the network's
/// parameters; it is only evaluated where the rate is positive.
pub fn drift_value_as<S: crate::model::RateScalar>(
    net: &Network,
    ns: &NetStructure,
    v: &crate::expr::Bound<S>,
    x: &[i64],
) -> Result<S> {
    let rates: Vec<S> = rate_vector_as(net, ns, x)?;
    let vx = v.eval(x)?;
    let mut acc = S::zero();
    for (j, r) in rates.iter().enumerate() {
        if r.is_zero() {
            continue;
        }
        let vy = v.eval(&shifted(x, ns.vector(j)))?;
        acc = acc.add(&r.mul(&vy.sub(&vx)));
    }
    Ok(acc)
}

pub fn drift_value(net: &Network, v: &Expr, x: &[i64]) -> Result<f64> {
    let ns = derive_net_structure(net);
    drift_value_as(net, &ns, &v.bind::<f64>(net.params())?, x)
}

pub fn drift_value_exact(net: &Network, v: &Expr, x: &[i64]) -> Result<BigRational> {
    let ns = derive_net_structure(net);
    drift_value_as(net, &ns, &v.bind::<BigRational>(net.params())?, x)
}

/// Which Foster-Lyapunov inequality to check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// `QV ≤ −c + d·1_C`. Without `set`, `C = {x : QV(x) > −c}` on the
    /// truncation; without `d`, the smallest admissible `d` is reported.
    NegDriftOutsideCompact {
        #[serde(serialize_with = "ser_ratio")]
        c: BigRational,
        #[serde(serialize_with = "ser_opt_ratio")]
        d: Option<BigRational>,
        #[serde(skip)]
        set: Option<StateSet>,
    },
    /// `QV ≤ −c·V + d`.
    ExponentialDrift {
        #[serde(serialize_with = "ser_ratio")]
        c: BigRational,
        #[serde(serialize_with = "ser_ratio")]
        d: BigRational,
    },
}

fn ser_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(ratio_to_f64(r))
}

fn ser_opt_ratio<S: serde::Serializer>(r: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_some(&ratio_to_f64(r)),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSpec {
    pub v: Expr,
    pub mode: DriftMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub verdict: Verdict,
    pub states_checked: usize,
    /// State with the largest `QV(x) − bound(x)`.
    pub worst_state: Option<State>,
    /// That largest margin; non-positive on a pass.
    pub worst_margin: f64,
    /// The set `C` that was used, when it was derived automatically.
    pub compact_set: Option<Vec<State>>,
    /// Smallest `d` that makes the compact-set inequality hold.
    pub d_required: Option<f64>,
    pub reason: Option<String>,
}

/// States whose chain can step out of `trunc` through a positive rate of
/// the untruncated network.
fn touches_boundary(net: &Network, ns: &NetStructure, trunc: &crate::model::StateSpaceSpec, x: &[i64]) -> Result<bool> {
    let rates: Vec<f64> = rate_vector_as(net, ns, x)?;
    Ok(rates.iter().enumerate().any(|(j, r)| *r > 0.0 && !trunc.contains(&shifted(x, ns.vector(j)))))
}

/// Check a drift inequality at every state of the space, or of its box
/// truncation `‖x‖∞ ≤ m` when the space is infinite. Rates are those of
/// the untruncated chain. An automatically chosen `C` must stay clear of
/// the truncation boundary, otherwise the check cannot conclude that `C`
/// is finite and fails.
pub fn verify_drift(net: &Network, spec: &LyapunovSpec, truncation: Option<i64>) -> Result<DriftReport> {
    let space = match truncation {
        Some(m) => net.state_space().truncated(m),
        None if net.state_space().is_finite() => net.state_space().clone(),
        None => return Err(Error::InfiniteSpace),
    };
    let states = enumerate_states(&space)?;
    let ns = derive_net_structure(net);
    let v = spec.v.bind::<BigRational>(net.params())?;
    let evals: Vec<(BigRational, BigRational)> = states
        .par_iter()
        .map(|x| Ok((v.eval(x)?, drift_value_as(net, &ns, &v, x)?)))
        .collect::<Result<_>>()?;
    let mut report = DriftReport {
        verdict: Verdict::Pass,
        states_checked: states.len(),
        worst_state: None,
        worst_margin: f64::NEG_INFINITY,
        compact_set: None,
        d_required: None,
        reason: None,
    };
    if let Some(i) = evals.iter().position(|(vx, _)| Scalar::is_negative(vx)) {
        report.verdict = Verdict::Fail;
        report.worst_state = Some(states[i].clone());
        report.reason = Some("V is negative here".into());
        return Ok(report);
    }
    let zero = BigRational::from_integer(0.into());
    let mut worst: Option<(usize, BigRational)> = None;
    let mut consider = |i: usize, margin: BigRational| {
        let bad = margin > zero;
        if worst.as_ref().is_none_or(|(_, m)| margin > *m) {
            worst = Some((i, margin));
        }
        bad
    };
    let mut fail = false;
    match &spec.mode {
        DriftMode::ExponentialDrift { c, d } => {
            for (i, (vx, qv)) in evals.iter().enumerate() {
                fail |= consider(i, qv - (d - c * vx));
            }
        }
        DriftMode::NegDriftOutsideCompact { c, d, set } => {
            let neg_c = -c.clone();
            let in_c: Vec<bool> = match set {
                Some(s) => states.iter().map(|x| s.contains(x)).collect(),
                None => evals.iter().map(|(_, qv)| *qv > neg_c).collect(),
            };
            let mut max_c: Option<BigRational> = None;
            for (i, ((_, qv), inside)) in evals.iter().zip(&in_c).enumerate() {
                if *inside {
                    if max_c.as_ref().is_none_or(|m| qv > m) {
                        max_c = Some(qv.clone());
                    }
                    if let Some(d) = d {
                        fail |= consider(i, qv - (&neg_c + d));
                    }
                } else {
                    fail |= consider(i, qv - &neg_c);
                }
            }
            // d must be positive and cover max_C QV + c.
            let need = max_c.map(|m| m + c).filter(|v| !Scalar::is_negative(v) && !Scalar::is_zero(v));
            report.d_required = Some(need.as_ref().map_or(0.0, ratio_to_f64));
            let members: Vec<State> =
                states.iter().zip(&in_c).filter(|(_, i)| **i).map(|(x, _)| x.clone()).collect();
            if set.is_none() {
                if truncation.is_some() {
                    for x in &members {
                        if touches_boundary(net, &ns, &space, x)? {
                            fail = true;
                            report.reason = Some(format!("C reaches the truncation boundary at {x:?}"));
                            break;
                        }
                    }
                }
                report.compact_set = Some(members);
            }
        }
    }
    if let Some((i, m)) = worst {
        report.worst_state = Some(states[i].clone());
        report.worst_margin = ratio_to_f64(&m);
    }
    if fail {
        report.verdict = Verdict::Fail;
        report.reason.get_or_insert_with(|| "drift inequality violated".into());
    }
    Ok(report)
}

/// States reachable from `x0` through positive rates, in BFS order.
pub fn reachable_states(net: &Network, x0: &[i64], limit: usize) -> Result<Vec<State>> {
    if !net.state_space().contains(x0) {
        return Err(Error::Validation(format!("{x0:?} is not in the state space")));
    }
    let ns = derive_net_structure(net);
    let mut seen: HashSet<State> = HashSet::from([x0.to_vec()]);
    let mut order = vec![x0.to_vec()];
    let mut queue = VecDeque::from([x0.to_vec()]);
    while let Some(x) = queue.pop_front() {
        let rates: Vec<f64> = rate_vector_as(net, &ns, &x)?;
        for (j, r) in rates.iter().enumerate() {
            if *r > 0.0 {
                let y = shifted(&x, ns.vector(j));
                if seen.insert(y.clone()) {
                    if seen.len() > limit {
                        return Err(Error::CapExceeded { limit });
                    }
                    order.push(y.clone());
                    queue.push_back(y);
                }
            }
        }
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrreducibilityReport {
    pub irreducible: bool,
    pub states: usize,
    /// States not reachable from the first state, or unable to return to it.
    pub unreachable: Vec<State>,
    pub cannot_return: Vec<State>,
}

/// Whether the chain restricted to the (possibly truncated) space is one
/// communicating class.
pub fn check_irreducible(net: &Network, truncation: Option<i64>) -> Result<IrreducibilityReport> {
    let net = match truncation {
        Some(m) => net.truncated(m),
        None if net.state_space().is_finite() => net.clone(),
        None => return Err(Error::InfiniteSpace),
    };
    let states = enumerate_states(net.state_space())?;
    let index: HashMap<&State, usize> = states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let ns = derive_net_structure(&net);
    let mut fwd = vec![Vec::new(); states.len()];
    let mut back = vec![Vec::new(); states.len()];
    for (i, x) in states.iter().enumerate() {
        let rates: Vec<f64> = rate_vector_as(&net, &ns, x)?;
        for (j, r) in rates.iter().enumerate() {
            if *r > 0.0 {
                if let Some(&k) = index.get(&shifted(x, ns.vector(j))) {
                    fwd[i].push(k);
                    back[k].push(i);
                }
            }
        }
    }
    let sweep = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; adj.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &k in &adj[i] {
                if !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        seen
    };
    let (f, b) = (sweep(&fwd), sweep(&back));
    let pick = |seen: &[bool]| states.iter().zip(seen).filter(|(_, s)| !**s).map(|(x, _)| x.clone()).collect::<Vec<_>>();
    let (unreachable, cannot_return) = (pick(&f), pick(&b));
    Ok(IrreducibilityReport {
        irreducible: unreachable.is_empty() && cannot_return.is_empty(),
        states: states.len(),
        unreachable,
        cannot_return,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundles::{build, ExampleId};
    use crate::coupling::{simulate_ssa, CouplingMode};
    use crate::model::{LinearConstraint, Reaction, StateSpaceSpec};

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    /// `A → B` at rate `k` with one molecule.
    fn decay(k: i64) -> Network {
        let params = BTreeMap::from([("k".to_string(), q(k, 1))]);
        Network::new(
            vec!["A".into(), "B".into()],
            params,
            vec![Reaction::mass_action(&[1, 0], &[0, 1], "k").unwrap()],
            StateSpaceSpec::conservation(vec![LinearConstraint::new(&[1, 1], 1)]),
        )
        .unwrap()
    }

    /// One molecule switching `A ⇌ B` at rates `a`, `b`.
    fn two_state(a: i64, b: i64) -> Network {
        let params = BTreeMap::from([("a".to_string(), q(a, 1)), ("b".to_string(), q(b, 1))]);
        Network::new(
            vec!["A".into(), "B".into()],
            params,
            vec![
                Reaction::mass_action(&[1, 0], &[0, 1], "a").unwrap(),
                Reaction::mass_action(&[0, 1], &[1, 0], "b").unwrap(),
            ],
            StateSpaceSpec::conservation(vec![LinearConstraint::new(&[1, 1], 1)]),
        )
        .unwrap()
    }

    #[test]
    fn first_passage_reads_paths() {
        let path = SamplePath {
            events: vec![(0.0, vec![1, 0]), (0.5, vec![0, 1])],
            end_time: 2.0,
            terminal: crate::coupling::Terminal::Horizon,
        };
        assert_eq!(first_passage(&path, &StateSet::single(vec![1, 0])), Some(0.0));
        assert_eq!(first_passage(&path, &StateSet::single(vec![0, 1])), Some(0.5));
        assert_eq!(first_passage(&path, &StateSet::single(vec![2, 2])), None);
    }

    #[test]
    fn enzyme_absorption_time_is_last_event() {
        let b = build(ExampleId::Enzyme1, &[]).unwrap();
        let path = simulate_ssa(&b.network, b.initial("s").unwrap(), 1e6, 3).unwrap();
        let p = b.target("p").unwrap();
        assert!(p.contains(path.final_state()));
        assert_eq!(first_passage(&path, p), Some(path.events.last().unwrap().0));
    }

    #[test]
    fn mfpt_trivial_and_exponential() {
        let net = decay(2);
        let e = estimate_mfpt(&net, &[1, 0], &StateSet::single(vec![1, 0]), 10.0, 50, 1).unwrap();
        assert_eq!((e.mean, e.std_error, e.n_censored), (0.0, 0.0, 0));
        let e = estimate_mfpt(&net, &[1, 0], &StateSet::single(vec![0, 1]), 100.0, 20_000, 1).unwrap();
        assert!((e.mean - 0.5).abs() < 3.0 * e.std_error, "{e:?}");
        assert!(matches!(
            estimate_mfpt(&net, &[1, 0], &StateSet::single(vec![3, 3]), 1.0, 10, 1),
            Err(Error::AllCensored { n: 10 })
        ));
    }

    #[test]
    fn mfpt_is_thread_independent() {
        let net = decay(1);
        let g = StateSet::single(vec![0, 1]);
        let a = mfpt_samples(&net, &[1, 0], &g, 10.0, 200, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mfpt_samples(&net, &[1, 0], &g, 10.0, 200, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stochastic_order_test_cases() {
        let a = [0.3, 1.0, 2.0];
        let t = usual_stochastic_order_test(&a, &a);
        assert!(t.holds && t.max_violation == 0.0);
        let t = usual_stochastic_order_test(&[0.0; 4], &[1.0; 4]);
        assert!(t.holds);
        let t = usual_stochastic_order_test(&[1.0; 4], &[0.0; 4]);
        assert!(!t.holds && t.max_violation == 1.0 && t.at == Some(0.0));
        let t = usual_stochastic_order_test(&[1.0, f64::INFINITY], &[f64::INFINITY, f64::INFINITY]);
        assert!(t.holds);
    }

    #[test]
    fn identical_pairs_hit_together() {
        let b = build(ExampleId::Enzyme1, &[]).unwrap();
        let pair = b.pair(&[], "default").unwrap();
        let s = b.initial("s").unwrap();
        let cfg = CouplingConfig::new(CouplingMode::PerIndex, 1e4, 5);
        let r = compare_mfpt_coupled(&pair, s, s, b.target("p").unwrap(), &cfg, 50).unwrap();
        assert_eq!(r.direction, Direction::Increasing);
        assert!(r.pairs.iter().all(|(a, b)| a == b && a.is_some()));
        assert_eq!(r.pathwise_violations, 0);
        assert_eq!(r.paired_difference.unwrap().mean, 0.0);
    }

    #[test]
    fn faster_conversion_hits_first() {
        let b = build(ExampleId::Enzyme1, &[]).unwrap();
        let pair = b.pair(&[("k3", 3.0)], "default").unwrap();
        let s = b.initial("s").unwrap();
        let cfg = CouplingConfig::new(CouplingMode::PerIndex, 1e4, 11);
        let r = compare_mfpt_coupled(&pair, s, s, b.target("p").unwrap(), &cfg, 300).unwrap();
        assert_eq!(r.pathwise_violations, 0);
        assert_eq!(r.ordered_throughout, 300);
        assert!(r.cdf_dominance.holds);
        assert!(r.paired_difference.unwrap().mean > 0.0);
    }

    #[test]
    fn mixed_target_has_no_direction() {
        let b = build(ExampleId::Enzyme1, &[]).unwrap();
        let pair = b.pair(&[], "default").unwrap();
        let s = b.initial("s").unwrap();
        let g = StateSet::States(vec![vec![3, 0, 2, 0], vec![0, 3, 2, 0]]);
        let cfg = CouplingConfig::new(CouplingMode::PerIndex, 10.0, 1);
        assert_eq!(compare_mfpt_coupled(&pair, s, s, &g, &cfg, 1).unwrap_err(), Error::DirectionUnknown);
    }

    #[test]
    fn tv_and_set_mass() {
        let p = DistributionTable::from_weights(BTreeMap::from([(vec![0], 1.0), (vec![1], 3.0)])).unwrap();
        let r = DistributionTable::from_weights(BTreeMap::from([(vec![1], 1.0), (vec![2], 1.0)])).unwrap();
        assert!((total_variation(&p, &r) - 0.5).abs() < 1e-15);
        assert_eq!(total_variation(&p, &p), 0.0);
        assert_eq!(stationary_set_mass(&p, &StateSet::States(vec![])), 0.0);
        assert_eq!(stationary_set_mass(&p, &StateSet::States(p.support.clone())), 1.0);
        assert_eq!(p.get(&[1]), 0.75);
    }

    #[test]
    fn absorbing_start_gives_unit_mass() {
        let net = decay(1);
        let d = empirical_stationary(&net, &[0, 1], None, 100.0, 1).unwrap();
        assert_eq!(d, DistributionTable::point(vec![0, 1]));
    }

    #[test]
    fn two_state_occupation() {
        let net = two_state(1, 3);
        let d = empirical_stationary(&net, &[1, 0], None, 20_000.0, 4).unwrap();
        let exact = DistributionTable { support: vec![vec![0, 1], vec![1, 0]], mass: vec![0.25, 0.75] };
        assert!(total_variation(&d, &exact) < 0.02);
        assert!((d.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batches_cover_the_window() {
        let net = two_state(2, 2);
        let r = empirical_stationary_batched(&net, &[1, 0], Some(10.0), 1010.0, 10, 2).unwrap();
        assert_eq!(r.batches.len(), 10);
        let m = r.set_mass(&StateSet::single(vec![1, 0]));
        assert!(m.std_error > 0.0 && (m.mass - 0.5).abs() < 5.0 * m.std_error + 0.02);
    }

    #[test]
    fn product_form_small_case() {
        let d = product_form_stationary(1, [1.0; 6], (2, 2)).unwrap();
        // π ∝ 1/(x1! x2!) · ½ for x3 + x4 = 1.
        let w = |x1: i64, x2: i64| 1.0 / ((1..=x1).product::<i64>() * (1..=x2).product::<i64>()) as f64;
        let z: f64 = (0..=2).flat_map(|a| (0..=2).map(move |b| w(a, b))).sum::<f64>() * 2.0;
        assert!((d.get(&[1, 2, 0, 1]) - w(1, 2) / z).abs() < 1e-14);
        assert!((d.total() - 1.0).abs() < 1e-12);
        assert!(d.support.iter().all(|x| x[2] + x[3] == 1));
        assert!(matches!(product_form_stationary(1, [1.0, 0.0, 1.0, 1.0, 1.0, 1.0], (1, 1)), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn drift_of_constants_vanishes() {
        let b = build(ExampleId::Enzyme2, &[]).unwrap();
        let v = Expr::parse("7").unwrap();
        assert_eq!(drift_value(&b.network, &v, &[2, 1, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn drift_of_tf_count() {
        let b = build(ExampleId::HistoneTf, &[("k5a", 3.0), ("k6a", 2.0)]).unwrap();
        let v = Expr::parse("x3").unwrap();
        for x in [[0, 3, 4], [1, 1, 0], [2, 0, 7]] {
            let exact = drift_value_exact(&b.network, &v, &x).unwrap();
            assert_eq!(exact, q(3 * x[1] - 2 * x[2], 1));
        }
    }

    #[test]
    fn zero_lyapunov_fails() {
        let b = build(ExampleId::Enzyme2, &[]).unwrap();
        let spec = LyapunovSpec {
            v: Expr::num(0),
            mode: DriftMode::NegDriftOutsideCompact { c: q(1, 1), d: None, set: None },
        };
        let r = verify_drift(&b.network, &spec, Some(4)).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.reason.unwrap().contains("boundary"));
    }

    #[test]
    fn reachability() {
        let b = build(ExampleId::Enzyme1, &[]).unwrap();
        let r = reachable_states(&b.network, b.initial("p").unwrap(), 100).unwrap();
        assert_eq!(r, vec![vec![0, 3, 2, 0]]);
        assert!(!check_irreducible(&b.network, None).unwrap().irreducible);
        let h = build(ExampleId::Histone, &[]).unwrap();
        assert!(check_irreducible(&h.network, None).unwrap().irreducible);
        let e = build(ExampleId::Enzyme2, &[]).unwrap();
        assert!(check_irreducible(&e.network, Some(5)).unwrap().irreducible);
    }
}
