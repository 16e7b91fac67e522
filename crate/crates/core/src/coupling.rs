//! Order-preserving coupled simulation by uniformization.
//!
//! Both chains share one Poisson clock of rate `λ = 1 + n·max(sup Σ_j Υ_j,
//! sup Σ_j Ῠ_j)` and one uniform `U` per potential jump. A map turns
//! `(state, U)` into the next state:
//!
//! * per index (`Φ_λ`): `U ∈ [j/n, j/n + Υ_j(x)/λ)` fires transition `j`;
//! * grouped (`Ψ_λ`): the interval of block `k` starts at `p_{k-1}/n` and
//!   its transitions are stacked in `σ` order with widths `Υ_{σ(q)}(x)/λ`.
//!
//! When the matching sufficient condition holds, `X(0) ≼ X̆(0)` implies
//! `X(t) ≼ X̆(t)` for all `t`; every run checks this after each potential
//! jump and records the first violation instead of aborting.
//!
//! Unbounded rates are handled with box truncations `‖x‖∞ ≤ M`: `λ` is
//! computed on the box, and when a chain leaves it the run continues from
//! that instant with a larger box and a new `λ`. Memorylessness of the
//! clock makes the splice exact.
//!
//! Random numbers come from a ChaCha8 stream per replicate (`seed`,
//! replicate index), so results do not depend on the thread count. Each
//! potential jump draws its exponential holding time first and then its
//! uniform.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{CoupledPair, GroupPartition};
use crate::model::{
    enumerate_states, rate_vector_into, NetStructure, Network, State, StateSet,
};
use crate::order::OrderSpec;
use crate::{Error, Result};

/// Random stream for replicate `index` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Exponential holding time by inverse CDF.
pub fn exp_sample(rng: &mut impl Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    PerIndex,
    Grouped(GroupPartition),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    /// One event per actual state change of a chain.
    #[default]
    AcceptedJumps,
    /// Both paths get an event at every potential jump time.
    AllPotentialJumps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// First box size; chosen from the initial states when absent.
    pub initial: Option<i64>,
    /// Factor applied to `M` each time a chain leaves the box.
    pub growth: f64,
    pub hard_cap: i64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { initial: None, growth: 2.0, hard_cap: 1 << 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub mode: CouplingMode,
    pub horizon: f64,
    pub seed: u64,
    /// Only used when the state space is infinite.
    pub truncation: Option<TruncationPolicy>,
    pub record: RecordMode,
    /// Hitting times of this set are tracked for both chains.
    #[serde(skip)]
    pub target: Option<StateSet>,
    /// End the run once both chains have hit `target`.
    pub stop_when_both_hit: bool,
    /// Times at which both states are reported in run summaries.
    pub observe_at: Vec<f64>,
}

impl CouplingConfig {
    pub fn new(mode: CouplingMode, horizon: f64, seed: u64) -> Self {
        CouplingConfig {
            mode,
            horizon,
            seed,
            truncation: Some(TruncationPolicy::default()),
            record: RecordMode::default(),
            target: None,
            stop_when_both_hit: false,
            observe_at: vec![],
        }
    }

    pub fn with_target(mut self, target: StateSet, stop_when_both_hit: bool) -> Self {
        self.target = Some(target);
        self.stop_when_both_hit = stop_when_both_hit;
        self
    }

    pub fn observing(mut self, times: Vec<f64>) -> Self {
        self.observe_at = times;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    /// Reached the horizon (possibly fast-forwarded after absorption).
    Horizon,
    /// Both chains reached the target set.
    TargetReached,
}

/// Piecewise-constant trajectory: state `events[k].1` holds from
/// `events[k].0` until the next event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub events: Vec<(f64, State)>,
    pub end_time: f64,
    pub terminal: Terminal,
}

impl SamplePath {
    pub fn state_at(&self, t: f64) -> &State {
        let k = self.events.partition_point(|(s, _)| *s <= t);
        &self.events[k.saturating_sub(1)].1
    }

    pub fn final_state(&self) -> &State {
        &self.events.last().expect("paths start with the initial state").1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub time: f64,
    pub x: State,
    pub xbreve: State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub path_x: SamplePath,
    pub path_xbreve: SamplePath,
    pub ordered_throughout: bool,
    pub first_violation: Option<Violation>,
    pub potential_jumps: u64,
    pub hit_x: Option<f64>,
    pub hit_xbreve: Option<f64>,
    /// Largest box used, for infinite state spaces.
    pub truncation: Option<i64>,
}

/// Per-replicate outcome without the paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub replicate: u64,
    pub ordered_throughout: bool,
    pub first_violation: Option<Violation>,
    pub potential_jumps: u64,
    pub jumps_x: u64,
    pub jumps_xbreve: u64,
    pub hit_x: Option<f64>,
    pub hit_xbreve: Option<f64>,
    pub final_x: State,
    pub final_xbreve: State,
    /// `(X(t), X̆(t))` for each requested observation time.
    pub observed: Vec<(State, State)>,
    pub end_time: f64,
    pub terminal: Terminal,
    pub truncation: Option<i64>,
}

/// Index of the transition fired by `u` under the per-index map, if any.
pub fn phi_select(rates: &[f64], lambda: f64, u: f64) -> Option<usize> {
    let n = rates.len();
    let j = ((u * n as f64) as usize).min(n.saturating_sub(1));
    let lo = j as f64 / n as f64;
    (u >= lo && u < lo + rates[j] / lambda).then_some(j)
}

/// Index of the transition fired by `u` under the grouped map, if any.
pub fn psi_select(rates: &[f64], lambda: f64, u: f64, gp: &GroupPartition) -> Option<usize> {
    let n = rates.len() as f64;
    let mut start = 0usize;
    for g in &gp.groups {
        let end = start + g.len();
        if u < end as f64 / n {
            let mut acc = start as f64 / n;
            for &j in g {
                acc += rates[j] / lambda;
                if u < acc {
                    return Some(j);
                }
            }
            return None;
        }
        start = end;
    }
    None
}

fn apply(x: &[i64], ns: &NetStructure, j: Option<usize>) -> State {
    match j {
        Some(j) => x.iter().zip(ns.vector(j)).map(|(a, b)| a + b).collect(),
        None => x.to_vec(),
    }
}

/// `Φ_λ(x, u)`.
pub fn phi_map(net: &Network, ns: &NetStructure, lambda: f64, x: &[i64], u: f64) -> Result<State> {
    let rates = crate::model::rate_vector(net, ns, x)?;
    Ok(apply(x, ns, phi_select(&rates, lambda, u)))
}

/// `Ψ_λ(x, u)` for the partition `gp`.
pub fn psi_map(
    net: &Network,
    ns: &NetStructure,
    gp: &GroupPartition,
    lambda: f64,
    x: &[i64],
    u: f64,
) -> Result<State> {
    let rates = crate::model::rate_vector(net, ns, x)?;
    Ok(apply(x, ns, psi_select(&rates, lambda, u, gp)))
}

/// `1 + n·max(sup Σ Υ, sup Σ Ῠ)` over a finite state space; fails with
/// `UnboundedRates` on an infinite one.
pub fn choose_lambda(pair: &CoupledPair) -> Result<f64> {
    if !pair.base().state_space().is_finite() {
        return Err(Error::UnboundedRates);
    }
    let states = enumerate_states(pair.base().state_space())?;
    Ok(Level::build(pair, &states, None)?.lambda)
}

/// State lookup for a finite set: a dense mixed-radix array when small,
/// a hash map otherwise.
enum StateIndex {
    Dense { bounds: Vec<i64>, strides: Vec<usize>, slots: Vec<u32> },
    Hashed(HashMap<State, u32>),
}

const DENSE_LIMIT: usize = 1 << 24;

impl StateIndex {
    fn build(states: &[State]) -> StateIndex {
        let d = states.first().map_or(0, Vec::len);
        let bounds: Vec<i64> = (0..d).map(|i| states.iter().map(|s| s[i]).max().unwrap_or(0)).collect();
        let size = bounds
            .iter()
            .try_fold(1usize, |acc, b| acc.checked_mul(*b as usize + 1))
            .filter(|s| *s <= DENSE_LIMIT);
        match size {
            Some(size) => {
                let mut strides = vec![1usize; d];
                for i in (0..d.saturating_sub(1)).rev() {
                    strides[i] = strides[i + 1] * (bounds[i + 1] as usize + 1);
                }
                let mut slots = vec![u32::MAX; size];
                for (k, s) in states.iter().enumerate() {
                    let off: usize = s.iter().zip(&strides).map(|(v, st)| *v as usize * st).sum();
                    slots[off] = k as u32;
                }
                StateIndex::Dense { bounds, strides, slots }
            }
            None => StateIndex::Hashed(
                states.iter().enumerate().map(|(k, s)| (s.clone(), k as u32)).collect(),
            ),
        }
    }

    fn get(&self, x: &[i64]) -> Option<usize> {
        match self {
            StateIndex::Dense { bounds, strides, slots } => {
                let mut off = 0usize;
                for ((v, b), st) in x.iter().zip(bounds).zip(strides) {
                    if *v < 0 || v > b {
                        return None;
                    }
                    off += *v as usize * st;
                }
                let k = slots[off];
                (k != u32::MAX).then_some(k as usize)
            }
            StateIndex::Hashed(m) => m.get(x).map(|k| *k as usize),
        }
    }
}

/// Rates of both networks tabulated on a finite set of states.
struct Level {
    cap: Option<i64>,
    lambda: f64,
    n: usize,
    index: StateIndex,
    base: Vec<f64>,
    variant: Vec<f64>,
}

impl Level {
    fn build(pair: &CoupledPair, states: &[State], cap: Option<i64>) -> Result<Level> {
        let ns = pair.net();
        let n = ns.len();
        let table = |net: &Network| -> Result<Vec<f64>> {
            let rows: Vec<Vec<f64>> = states
                .par_iter()
                .map_init(
                    || (Vec::new(), Vec::new()),
                    |(buf, scratch), x| {
                        rate_vector_into(net, ns, x, buf, scratch)?;
                        Ok(buf.clone())
                    },
                )
                .collect::<Result<_>>()?;
            Ok(rows.concat())
        };
        let base = table(pair.base())?;
        let variant = table(pair.variant())?;
        let sup = |t: &[f64]| t.chunks(n.max(1)).map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
        let lambda = 1.0 + n as f64 * sup(&base).max(sup(&variant));
        if !lambda.is_finite() {
            return Err(Error::UnboundedRates);
        }
        Ok(Level { cap, lambda, n, index: StateIndex::build(states), base, variant })
    }

    fn row(&self, k: usize) -> std::ops::Range<usize> {
        k * self.n..(k + 1) * self.n
    }
}

/// Levels shared by all replicates of a run.
pub(crate) struct Ladder {
    finite: bool,
    caps: Vec<i64>,
    levels: Vec<OnceLock<Result<Arc<Level>>>>,
}

impl Ladder {
    fn new(pair: &CoupledPair, cfg: &CouplingConfig, starts: &[&[i64]]) -> Result<Ladder> {
        if pair.base().state_space().is_finite() {
            return Ok(Ladder { finite: true, caps: vec![0], levels: vec![OnceLock::new()] });
        }
        let policy = cfg.truncation.ok_or(Error::UnboundedRates)?;
        if !(policy.growth > 1.0) {
            return Err(Error::Validation("truncation growth factor must exceed 1".into()));
        }
        let need = starts.iter().flat_map(|s| s.iter()).copied().max().unwrap_or(0);
        let first = policy.initial.unwrap_or((2 * need).max(16)).max(need).max(1);
        let mut caps = vec![first];
        while *caps.last().unwrap() < policy.hard_cap {
            let last = *caps.last().unwrap();
            let next = ((last as f64 * policy.growth).ceil() as i64).max(last + 1).min(policy.hard_cap);
            caps.push(next);
        }
        let levels = caps.iter().map(|_| OnceLock::new()).collect();
        Ok(Ladder { finite: false, caps, levels })
    }

    fn level(&self, pair: &CoupledPair, k: usize) -> Result<Arc<Level>> {
        self.levels[k]
            .get_or_init(|| {
                let (space, cap) = if self.finite {
                    (pair.base().state_space().clone(), None)
                } else {
                    (pair.base().state_space().truncated(self.caps[k]), Some(self.caps[k]))
                };
                let states = enumerate_states(&space)?;
                Level::build(pair, &states, cap).map(Arc::new)
            })
            .clone()
    }

    /// Smallest level whose box contains both states.
    fn level_for(&self, pair: &CoupledPair, x: &[i64], y: &[i64]) -> Result<Arc<Level>> {
        if self.finite {
            return self.level(pair, 0);
        }
        let need = x.iter().chain(y).copied().max().unwrap_or(0);
        let k = self
            .caps
            .iter()
            .position(|c| *c >= need)
            .ok_or(Error::TruncationLimit { cap: *self.caps.last().unwrap() })?;
        self.level(pair, k)
    }
}

struct Recorder {
    keep: Option<RecordMode>,
    path_x: Vec<(f64, State)>,
    path_y: Vec<(f64, State)>,
    jumps_x: u64,
    jumps_y: u64,
}

struct Outcome {
    run: CoupledRun,
    jumps: (u64, u64),
    last: (State, State),
}

fn select(mode: &CouplingMode, rates: &[f64], lambda: f64, u: f64) -> Option<usize> {
    match mode {
        CouplingMode::PerIndex => phi_select(rates, lambda, u),
        CouplingMode::Grouped(gp) => psi_select(rates, lambda, u, gp),
    }
}

fn run_one(
    pair: &CoupledPair,
    ladder: &Ladder,
    x0: &[i64],
    y0: &[i64],
    cfg: &CouplingConfig,
    replicate: u64,
    keep: Option<RecordMode>,
) -> Result<Outcome> {
    let ns = pair.net();
    let order: &OrderSpec = pair.order();
    let mut rng = replicate_rng(cfg.seed, replicate);
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut rec = Recorder {
        keep,
        path_x: vec![(0.0, x.clone())],
        path_y: vec![(0.0, y.clone())],
        jumps_x: 0,
        jumps_y: 0,
    };
    let mut first_violation = (!order.le(&x, &y)).then(|| Violation { time: 0.0, x: x.clone(), xbreve: y.clone() });
    let target = cfg.target.as_ref();
    let mut hit_x = target.filter(|g| g.contains(&x)).map(|_| 0.0);
    let mut hit_y = target.filter(|g| g.contains(&y)).map(|_| 0.0);
    let mut t = 0.0;
    let mut potential = 0u64;
    let mut level = ladder.level_for(pair, &x, &y)?;
    let mut max_cap = level.cap;
    let mut terminal = Terminal::Horizon;
    let (mut kx, mut ky) = (
        level.index.get(&x).ok_or_else(|| Error::Validation(format!("{x:?} is not in the state space")))?,
        level.index.get(&y).ok_or_else(|| Error::Validation(format!("{y:?} is not in the state space")))?,
    );
    loop {
        if cfg.stop_when_both_hit && hit_x.is_some() && hit_y.is_some() {
            terminal = Terminal::TargetReached;
            break;
        }
        let rx = &level.base[level.row(kx)];
        let ry = &level.variant[level.row(ky)];
        if rx.iter().all(|r| *r == 0.0) && ry.iter().all(|r| *r == 0.0) {
            break;
        }
        let dt = exp_sample(&mut rng, level.lambda);
        if t + dt > cfg.horizon {
            break;
        }
        t += dt;
        let u: f64 = rng.random();
        potential += 1;
        let jx = select(&cfg.mode, rx, level.lambda, u);
        let jy = select(&cfg.mode, ry, level.lambda, u);
        if let Some(j) = jx {
            for (a, v) in x.iter_mut().zip(ns.vector(j)) {
                *a += v;
            }
            rec.jumps_x += 1;
            if hit_x.is_none() && target.is_some_and(|g| g.contains(&x)) {
                hit_x = Some(t);
            }
        }
        if let Some(j) = jy {
            for (a, v) in y.iter_mut().zip(ns.vector(j)) {
                *a += v;
            }
            rec.jumps_y += 1;
            if hit_y.is_none() && target.is_some_and(|g| g.contains(&y)) {
                hit_y = Some(t);
            }
        }
        match rec.keep {
            Some(RecordMode::AllPotentialJumps) => {
                rec.path_x.push((t, x.clone()));
                rec.path_y.push((t, y.clone()));
            }
            Some(RecordMode::AcceptedJumps) => {
                if jx.is_some() {
                    rec.path_x.push((t, x.clone()));
                }
                if jy.is_some() {
                    rec.path_y.push((t, y.clone()));
                }
            }
            None => {}
        }
        if first_violation.is_none() && !order.le(&x, &y) {
            first_violation = Some(Violation { time: t, x: x.clone(), xbreve: y.clone() });
        }
        if jx.is_none() && jy.is_none() {
            continue;
        }
        match (level.index.get(&x), level.index.get(&y)) {
            (Some(a), Some(b)) => {
                kx = a;
                ky = b;
            }
            _ => {
                level = ladder.level_for(pair, &x, &y)?;
                max_cap = max_cap.max(level.cap);
                kx = level.index.get(&x).expect("level covers x");
                ky = level.index.get(&y).expect("level covers y");
            }
        }
    }
    let end_time = if terminal == Terminal::TargetReached { t } else { cfg.horizon };
    let path = |events: Vec<(f64, State)>| SamplePath { events, end_time, terminal };
    Ok(Outcome {
        jumps: (rec.jumps_x, rec.jumps_y),
        last: (x, y),
        run: CoupledRun {
            path_x: path(rec.path_x),
            path_xbreve: path(rec.path_y),
            ordered_throughout: first_violation.is_none(),
            first_violation,
            potential_jumps: potential,
            hit_x,
            hit_xbreve: hit_y,
            truncation: max_cap,
        },
    })
}

fn check_mode(pair: &CoupledPair, cfg: &CouplingConfig) -> Result<()> {
    if let CouplingMode::Grouped(gp) = &cfg.mode {
        gp.validate(pair.net().len())?;
    }
    if !(cfg.horizon >= 0.0) {
        return Err(Error::Validation("horizon must be non-negative".into()));
    }
    Ok(())
}

/// One coupled run on stream 0 of `cfg.seed`.
pub fn simulate_coupled(
    pair: &CoupledPair,
    x0: &[i64],
    x0_breve: &[i64],
    cfg: &CouplingConfig,
) -> Result<CoupledRun> {
    simulate_coupled_replicate(pair, x0, x0_breve, cfg, 0)
}

/// Coupled run `index` of the replicate family seeded by `cfg.seed`.
pub fn simulate_coupled_replicate(
    pair: &CoupledPair,
    x0: &[i64],
    x0_breve: &[i64],
    cfg: &CouplingConfig,
    index: u64,
) -> Result<CoupledRun> {
    check_mode(pair, cfg)?;
    let ladder = Ladder::new(pair, cfg, &[x0, x0_breve])?;
    Ok(run_one(pair, &ladder, x0, x0_breve, cfg, index, Some(cfg.record))?.run)
}

/// Independent coupled replicates, in parallel; replicate `k` uses stream
/// `k` of `cfg.seed`.
pub fn replicate_coupled(
    pair: &CoupledPair,
    x0: &[i64],
    x0_breve: &[i64],
    cfg: &CouplingConfig,
    replicates: u64,
) -> Result<Vec<RunSummary>> {
    check_mode(pair, cfg)?;
    let ladder = Ladder::new(pair, cfg, &[x0, x0_breve])?;
    let keep = (!cfg.observe_at.is_empty()).then_some(RecordMode::AcceptedJumps);
    (0..replicates)
        .into_par_iter()
        .map(|k| {
            let out = run_one(pair, &ladder, x0, x0_breve, cfg, k, keep)?;
            let r = out.run;
            let observed = cfg
                .observe_at
                .iter()
                .map(|t| (r.path_x.state_at(*t).clone(), r.path_xbreve.state_at(*t).clone()))
                .collect();
            Ok(RunSummary {
                replicate: k,
                ordered_throughout: r.ordered_throughout,
                first_violation: r.first_violation,
                potential_jumps: r.potential_jumps,
                jumps_x: out.jumps.0,
                jumps_xbreve: out.jumps.1,
                hit_x: r.hit_x,
                hit_xbreve: r.hit_xbreve,
                final_x: out.last.0,
                final_xbreve: out.last.1,
                observed,
                end_time: r.path_x.end_time,
                terminal: r.path_x.terminal,
                truncation: r.truncation,
            })
        })
        .collect()
}

/// What the SSA driver should do after a jump.
pub(crate) enum Flow {
    Continue,
    Stop,
}

/// Gillespie direct method. Calls `on_jump(t, state)` after every jump and
/// returns the time the run ended.
pub(crate) fn ssa_drive(
    net: &Network,
    ns: &NetStructure,
    x0: &[i64],
    horizon: f64,
    rng: &mut ChaCha8Rng,
    mut on_jump: impl FnMut(f64, &State) -> Flow,
) -> Result<f64> {
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let (mut rates, mut scratch) = (Vec::with_capacity(ns.len()), Vec::with_capacity(x.len()));
    loop {
        rate_vector_into(net, ns, &x, &mut rates, &mut scratch)?;
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            return Ok(horizon);
        }
        let dt = exp_sample(rng, total);
        if t + dt > horizon {
            return Ok(horizon);
        }
        t += dt;
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = rates.len() - 1;
        for (j, r) in rates.iter().enumerate() {
            acc += r;
            if target < acc {
                pick = j;
                break;
            }
        }
        while rates[pick] == 0.0 {
            pick -= 1;
        }
        for (a, v) in x.iter_mut().zip(ns.vector(pick)) {
            *a += v;
        }
        if let Flow::Stop = on_jump(t, &x) {
            return Ok(t);
        }
    }
}

/// A single uncoupled path by the direct method.
pub fn simulate_ssa(net: &Network, x0: &[i64], horizon: f64, seed: u64) -> Result<SamplePath> {
    ssa_replicate(net, x0, horizon, seed, 0)
}

/// SSA replicate `index` of the family seeded by `seed`.
pub fn ssa_replicate(net: &Network, x0: &[i64], horizon: f64, seed: u64, index: u64) -> Result<SamplePath> {
    if !net.state_space().contains(x0) {
        return Err(Error::Validation(format!("{x0:?} is not in the state space")));
    }
    let ns = crate::model::derive_net_structure(net);
    let mut rng = replicate_rng(seed, index);
    let mut events = vec![(0.0, x0.to_vec())];
    let end = ssa_drive(net, &ns, x0, horizon, &mut rng, |t, x| {
        events.push((t, x.clone()));
        Flow::Continue
    })?;
    Ok(SamplePath { events, end_time: end, terminal: Terminal::Horizon })
}
