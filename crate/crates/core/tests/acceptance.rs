//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on
//! any failure. Tolerances are fixed here and never loosened.

mod support;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use scrn::analysis::{
    compare_mfpt_coupled, empirical_stationary, empirical_stationary_batched, estimate_mfpt,
    product_form_stationary, total_variation, verify_drift, DistributionTable,
};
use scrn::bundles::{build, Bundle, ExampleId};
use scrn::conditions::{check, CheckOptions, ConditionReport, CoupledPair, GroupPartition, Theorem, Verdict};
use scrn::coupling::{replicate_coupled, ssa_replicate, CouplingConfig, CouplingMode};
use scrn::model::{derive_net_structure, enumerate_states, generator_row, State, StateSet};
use scrn::Result;

type Outcome = std::result::Result<String, String>;

/// One configuration of criterion 1.
struct Golden {
    label: &'static str,
    bundle: Bundle,
    pair: CoupledPair,
    theorem: Theorem,
    groups: Option<GroupPartition>,
    truncation: Option<i64>,
    start: &'static str,
}

fn golden(
    label: &'static str,
    id: ExampleId,
    base: &[(&str, f64)],
    variant: &[(&str, f64)],
    order: &str,
    theorem: Theorem,
    truncation: Option<i64>,
    start: &'static str,
) -> Result<Golden> {
    let bundle = build(id, base)?;
    let pair = bundle.pair(variant, order)?;
    let groups = matches!(theorem, Theorem::Grouped | Theorem::Permuted)
        .then(|| bundle.groups(order).cloned())
        .transpose()?;
    Ok(Golden { label, bundle, pair, theorem, groups, truncation, start })
}

fn goldens() -> Result<Vec<Golden>> {
    let fig = [("Stot", 20.0), ("k1", 30.0), ("k2", 50.0), ("k3", 10.0), ("k4", 10.0)];
    let up = [("Stot", 20.0), ("k1", 30.0), ("k2", 10.0), ("k3", 10.0), ("k4", 50.0)];
    Ok(vec![
        golden("enzyme1 k3 1→2", ExampleId::Enzyme1, &[], &[("k3", 2.0)], "default", Theorem::Facet, None, "s")?,
        golden("enzyme2 k5 1→2, M=12", ExampleId::Enzyme2, &[], &[("k5", 2.0)], "default", Theorem::Facet, Some(12), "empty")?,
        golden("histone mu 1→2", ExampleId::Histone, &[], &[("mu", 2.0)], "default", Theorem::Facet, None, "r")?,
        golden("histone_tf k5a 1→2, M=30", ExampleId::HistoneTf, &[], &[("k5a", 2.0)], "default", Theorem::Facet, Some(30), "r")?,
        golden("braess Stot=20 k2=k4, k5 1→10", ExampleId::Braess, &[("Stot", 20.0)], &[("k5", 10.0)], "default", Theorem::Grouped, None, "start")?,
        golden(
            "braess shortcut_down k5 1000→10",
            ExampleId::Braess,
            &[fig.as_slice(), &[("k5", 1000.0)]].concat(),
            &[("k5", 10.0)],
            "shortcut_down",
            Theorem::Permuted,
            None,
            "start",
        )?,
        golden(
            "braess shortcut_up k5 10→1000",
            ExampleId::Braess,
            &[up.as_slice(), &[("k5", 10.0)]].concat(),
            &[("k5", 1000.0)],
            "shortcut_up",
            Theorem::Permuted,
            None,
            "start",
        )?,
    ])
}

fn run_check(g: &Golden) -> Result<ConditionReport> {
    let opts = CheckOptions { truncation: g.truncation, ..CheckOptions::default() };
    check(g.theorem, &g.pair, g.groups.as_ref(), &opts)
}

fn criterion_1() -> Outcome {
    let mut lines = Vec::new();
    for g in goldens().map_err(|e| e.to_string())? {
        let t = Instant::now();
        let r = run_check(&g).map_err(|e| format!("{}: {e}", g.label))?;
        let took = t.elapsed();
        if r.verdict != Verdict::Pass {
            return Err(format!("{}: verdict fail, witness {:?}", g.label, r.witness));
        }
        if took > Duration::from_secs(30) {
            return Err(format!("{}: took {took:?}", g.label));
        }
        lines.push(format!("{} ({} states, {:.2?})", g.label, r.states, took));
    }
    Ok(lines.join("; "))
}

fn criterion_2() -> Outcome {
    let cases = [
        ("enzyme1 k3 1→0.5", ExampleId::Enzyme1, vec![], vec![("k3", 0.5)], Theorem::Facet),
        ("braess k2=2≠k4", ExampleId::Braess, vec![("k2", 2.0)], vec![("k5", 3.0)], Theorem::Grouped),
        ("histone mu 1→0.5", ExampleId::Histone, vec![], vec![("mu", 0.5)], Theorem::Facet),
    ];
    let mut lines = Vec::new();
    for (label, id, base, variant, theorem) in cases {
        let b = build(id, &base).map_err(|e| e.to_string())?;
        let pair = b.pair(&variant, "default").map_err(|e| e.to_string())?;
        let groups = b.groups("default").ok();
        let r = check(theorem, &pair, groups, &CheckOptions::default()).map_err(|e| e.to_string())?;
        let Some(w) = r.witness.filter(|_| r.verdict == Verdict::Fail) else {
            return Err(format!("{label}: expected a failure with witness"));
        };
        lines.push(format!("{label}: x={:?} y={:?} {:?}", w.x, w.y, w.obligation));
    }
    Ok(lines.join("; "))
}

fn coupling_mode(g: &Golden) -> CouplingMode {
    match &g.groups {
        Some(gp) => CouplingMode::Grouped(gp.clone()),
        None => CouplingMode::PerIndex,
    }
}

fn criterion_3() -> Outcome {
    let mut lines = Vec::new();
    for g in goldens().map_err(|e| e.to_string())? {
        let t = Instant::now();
        let x0 = g.bundle.initial(g.start).map_err(|e| e.to_string())?;
        let cfg = CouplingConfig::new(coupling_mode(&g), 10.0, 3);
        let runs = replicate_coupled(&g.pair, x0, x0, &cfg, 1000).map_err(|e| format!("{}: {e}", g.label))?;
        let ordered = runs.iter().filter(|r| r.ordered_throughout).count();
        if ordered != 1000 {
            let v = runs.iter().find_map(|r| r.first_violation.clone());
            return Err(format!("{}: {ordered}/1000 ordered, first violation {v:?}", g.label));
        }
        lines.push(format!("{} 1000/1000 ({:.1?})", g.label, t.elapsed()));
    }
    Ok(lines.join("; "))
}

fn law(samples: impl Iterator<Item = State>) -> DistributionTable {
    let mut w: BTreeMap<State, f64> = BTreeMap::new();
    for s in samples {
        *w.entry(s).or_insert(0.0) += 1.0;
    }
    DistributionTable::from_weights(w).expect("non-empty")
}

fn criterion_4() -> Outcome {
    let b = build(ExampleId::Enzyme1, &[]).map_err(|e| e.to_string())?;
    let pair = b.pair(&[("k3", 2.0)], "default").map_err(|e| e.to_string())?;
    let x0 = b.initial("s").map_err(|e| e.to_string())?.clone();
    let n = 100_000u64;
    let cfg = CouplingConfig::new(CouplingMode::PerIndex, 1.0, 41).observing(vec![1.0]);
    let runs = replicate_coupled(&pair, &x0, &x0, &cfg, n).map_err(|e| e.to_string())?;
    let coupled = law(runs.iter().map(|r| r.observed[0].0.clone()));
    let coupled_variant = law(runs.iter().map(|r| r.observed[0].1.clone()));
    let ssa = |net: &scrn::model::Network, seed: u64| -> std::result::Result<DistributionTable, String> {
        let finals: Vec<State> = (0..n)
            .map(|k| ssa_replicate(net, &x0, 1.0, seed, k).map(|p| p.state_at(1.0).clone()))
            .collect::<Result<_>>()
            .map_err(|e| e.to_string())?;
        Ok(law(finals.into_iter()))
    };
    let tv = total_variation(&coupled, &ssa(pair.base(), 42)?);
    let tv_variant = total_variation(&coupled_variant, &ssa(pair.variant(), 43)?);
    let states = enumerate_states(pair.base().state_space()).map_err(|e| e.to_string())?.len();
    let detail = format!("{states}-state class, TV base {tv:.4}, TV variant {tv_variant:.4} (limit 0.02)");
    if tv <= 0.02 && tv_variant <= 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    let mut est = Vec::new();
    for (k5, seed) in [(0.1, 51), (10.0, 52)] {
        let b = build(ExampleId::Braess, &[("k5", k5)]).map_err(|e| e.to_string())?;
        let x0 = b.initial("start").map_err(|e| e.to_string())?;
        let goal = b.target("goal").map_err(|e| e.to_string())?;
        est.push(estimate_mfpt(&b.network, x0, goal, 1e4, 10_000, seed).map_err(|e| e.to_string())?);
    }
    let pooled = (est[0].std_error.powi(2) + est[1].std_error.powi(2)).sqrt();
    let diff = (est[0].mean - est[1].mean).abs();
    let detail = format!(
        "k5=0.1: {:.4}±{:.4}, k5=10: {:.4}±{:.4}, |diff| {:.4} vs 3·SE {:.4}, censored {}+{}",
        est[0].mean, est[0].std_error, est[1].mean, est[1].std_error, diff, 3.0 * pooled,
        est[0].n_censored, est[1].n_censored
    );
    if diff <= 3.0 * pooled && est.iter().all(|e| e.n_censored == 0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let g = goldens().map_err(|e| e.to_string())?.into_iter().nth(5).expect("shortcut_down golden");
    let x0 = g.bundle.initial("start").map_err(|e| e.to_string())?;
    let goal = g.bundle.target("goal").map_err(|e| e.to_string())?;
    let cfg = CouplingConfig::new(coupling_mode(&g), 1e3, 61);
    let r = compare_mfpt_coupled(&g.pair, x0, x0, goal, &cfg, 1000).map_err(|e| e.to_string())?;
    let d = r.paired_difference.clone().ok_or("no uncensored pairs")?;
    let detail = format!(
        "T ≥ T̆ in {}/1000, violations {}, both censored {}, mean(T − T̆) {:.4} ± {:.4}",
        r.pathwise_holds, r.pathwise_violations, r.both_censored, d.mean, d.std_error
    );
    if r.pathwise_holds == 1000 && d.mean >= 3.0 * d.std_error && d.mean > 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome {
    let b = build(ExampleId::Enzyme2, &[]).map_err(|e| e.to_string())?;
    let net = b.network.truncated(15);
    let x0 = b.initial("empty").map_err(|e| e.to_string())?;
    let sim = empirical_stationary(&net, x0, None, 1e5, 71).map_err(|e| e.to_string())?;
    let oracle = product_form_stationary(2, [1.0; 6], (15, 15)).map_err(|e| e.to_string())?;
    let tv = total_variation(&sim, &oracle);
    let detail = format!("TV {tv:.4} over {} oracle states (limit 0.05)", oracle.support.len());
    if tv <= 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Stationary law of a finite chain by solving `πQ = 0`, `Σπ = 1` with
/// partial-pivot Gaussian elimination.
fn exact_stationary(net: &scrn::model::Network) -> Result<BTreeMap<State, f64>> {
    let states = enumerate_states(net.state_space())?;
    let n = states.len();
    let index: BTreeMap<&State, usize> = states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let ns = derive_net_structure(net);
    // Rows are the equations Σ_x π_x Q_{x,y} = 0; the last is replaced by Σ π = 1.
    let mut m = vec![vec![0.0; n + 1]; n];
    for (i, x) in states.iter().enumerate() {
        let (row, diag) = generator_row(net, &ns, x)?;
        m[i][i] += diag;
        for (y, r) in row {
            m[index[&y]][i] += r;
        }
    }
    m[n - 1] = vec![1.0; n + 1];
    for c in 0..n {
        let p = (c..n).max_by(|a, b| m[*a][c].abs().total_cmp(&m[*b][c].abs())).unwrap();
        m.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    Ok(states.into_iter().enumerate().map(|(i, s)| { let v = m[i][n] / m[i][i]; (s, v) }).collect())
}

fn criterion_8() -> Outcome {
    let b = build(ExampleId::Histone, &[]).map_err(|e| e.to_string())?;
    let pair = b.pair(&[("mu", 2.0)], "default").map_err(|e| e.to_string())?;
    let (a, r) = (b.initial("a").map_err(|e| e.to_string())?, b.initial("r").map_err(|e| e.to_string())?);
    let (ga, gr) = (StateSet::single(a.clone()), StateSet::single(r.clone()));

    let mut parts = Vec::new();
    let mut ok = true;
    let est = |net, seed| empirical_stationary_batched(net, a, None, 2e5, 20, seed).map_err(|e| e.to_string());
    let (base, variant) = (est(pair.base(), 81)?, est(pair.variant(), 82)?);
    for (name, g, increasing) in [("a", &ga, true), ("r", &gr, false)] {
        let (m, mv) = (base.set_mass(g), variant.set_mass(g));
        let margin = 3.0 * (m.std_error.powi(2) + mv.std_error.powi(2)).sqrt();
        let (lo, hi) = if increasing { (m.mass, mv.mass) } else { (mv.mass, m.mass) };
        ok &= lo <= hi + margin;
        parts.push(format!("π_{name} {:.4}±{:.4} vs π̆_{name} {:.4}±{:.4}", m.mass, m.std_error, mv.mass, mv.std_error));
    }
    let (pe, pve) = (
        exact_stationary(pair.base()).map_err(|e| e.to_string())?,
        exact_stationary(pair.variant()).map_err(|e| e.to_string())?,
    );
    ok &= pe[a] <= pve[a] && pe[r] >= pve[r];
    parts.push(format!("exact π_a {:.4} ≤ {:.4}, π_r {:.4} ≥ {:.4}", pe[a], pve[a], pe[r], pve[r]));

    let cfg = CouplingConfig::new(CouplingMode::PerIndex, 1e4, 83);
    for (label, from, g) in [("h_{r,a}", r, &ga), ("h_{a,r}", a, &gr)] {
        let c = compare_mfpt_coupled(&pair, from, from, g, &cfg, 1000).map_err(|e| e.to_string())?;
        ok &= c.pathwise_violations == 0 && c.both_censored == 0;
        let (t, tv) = (c.base.map_or(f64::NAN, |e| e.mean), c.variant.map_or(f64::NAN, |e| e.mean));
        parts.push(format!("{label}: {}/1000 pathwise, mean {t:.3} vs variant {tv:.3}", c.pathwise_holds));
    }
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for params in [vec![], vec![("k5a", 3.0), ("k6a", 0.5), ("Dtot", 4.0)]] {
        let b = build(ExampleId::HistoneTf, &params).map_err(|e| e.to_string())?;
        let spec = b.lyapunov().map_err(|e| e.to_string())?.ok_or("no Lyapunov function")?;
        let r = verify_drift(&b.network, &spec, Some(100)).map_err(|e| e.to_string())?;
        ok &= r.verdict == Verdict::Pass;
        parts.push(format!("histone_tf {params:?}: {:?} on {} states, worst margin {}", r.verdict, r.states_checked, r.worst_margin));
    }
    // The second set has C reaching x2 = 67, so it needs a larger box.
    for (params, m) in [(vec![], 50), (vec![("k2", 2.0), ("k5", 3.0), ("k6", 0.5)], 100)] {
        let b = build(ExampleId::Enzyme2, &params).map_err(|e| e.to_string())?;
        let spec = b.lyapunov().map_err(|e| e.to_string())?.ok_or("no Lyapunov function")?;
        let r = verify_drift(&b.network, &spec, Some(m)).map_err(|e| e.to_string())?;
        ok &= r.verdict == Verdict::Pass;
        parts.push(format!(
            "enzyme2 {params:?} M={m}: {:?}, |C| = {}, d = {:.3}",
            r.verdict,
            r.compact_set.map_or(0, |c| c.len()),
            r.d_required.unwrap_or(f64::NAN)
        ));
    }
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_10() -> Outcome {
    let results = support::run_all(256);
    let failed: Vec<String> =
        results.iter().filter_map(|(n, f)| f.as_ref().map(|f| format!("{n}: {f}"))).collect();
    if failed.is_empty() {
        Ok(results.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "))
    } else {
        Err(failed.join("; "))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("checker goldens", criterion_1),
        ("checker falsification", criterion_2),
        ("pathwise ordering", criterion_3),
        ("marginal law vs SSA", criterion_4),
        ("braess insensitivity", criterion_5),
        ("braess directionality", criterion_6),
        ("product-form oracle", criterion_7),
        ("histone monotonicity", criterion_8),
        ("drift verification", criterion_9),
        ("property suites", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let out = f();
        let took = t.elapsed();
        match out {
            Ok(d) => println!("PASS {id:>2} {name} [{took:.1?}]: {d}"),
            Err(d) => {
                failures += 1;
                println!("FAIL {id:>2} {name} [{took:.1?}]: {d}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
