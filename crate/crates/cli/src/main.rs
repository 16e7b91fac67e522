//! `scrn`: check coupling conditions, run coupled simulations and analyses.
//!
//! Exit status: 0 on success or pass, 1 when a checker fails or a coupled
//! run loses its ordering, 2 on usage and precondition errors.

mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use scrn::analysis::{
    check_irreducible, compare_mfpt_coupled, empirical_stationary_batched, mfpt_samples,
    product_form_stationary, total_variation, verify_drift, DistributionTable, DriftMode,
    LyapunovSpec, MfptEstimate,
};
use scrn::bundles::{build, ExampleId};
use scrn::conditions::{check, CheckOptions, Theorem, Verdict};
use scrn::coupling::{
    replicate_coupled, simulate_coupled_replicate, ssa_replicate, CouplingConfig, CouplingMode,
    RecordMode, SamplePath,
};
use scrn::expr::Expr;
use scrn::model::{to_model_json, StateSet};
use scrn::scalar::{parse_rational, Tolerance};

use inputs::{gamma, groups, state, Inputs, ModelArgs, PairArgs};
use manifest::Envelope;

#[derive(Parser)]
#[command(name = "scrn", version, about = "Order-preserving couplings of stochastic reaction networks")]
struct Cli {
    /// Worker threads for replicate parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a sufficient condition for an order-preserving coupling.
    Check(CheckCmd),
    /// Coupled simulation (or a single SSA path when no variant is given).
    Simulate(SimulateCmd),
    /// Monte Carlo mean first passage time.
    Mfpt(MfptCmd),
    /// Paired first passage times from coupled runs.
    MfptCompare(MfptCompareCmd),
    /// Occupation-time estimate of the stationary distribution.
    Stationary(StationaryCmd),
    /// Product-form stationary law of the open enzyme network.
    StationaryOracle(OracleCmd),
    /// Foster-Lyapunov drift check on a finite (truncated) space.
    Drift(DriftCmd),
    /// Print a bundled example as a model file.
    Demo(DemoCmd),
}

#[derive(Args, Serialize)]
struct CheckCmd {
    /// 3.1 (pairwise), 3.2 (facets), 3.3 (grouped) or S.2 (permuted groups).
    #[arg(long)]
    theorem: String,
    #[command(flatten)]
    pair: PairArgs,
    /// Group partition: inline JSON, an example grouping name, or a file.
    /// Defaults to the example grouping named like the order.
    #[arg(long)]
    groups: Option<String>,
    /// Check on the box `max_i x_i <= M`.
    #[arg(long)]
    truncation: Option<i64>,
    #[arg(long, value_enum, default_value_t = Arith::Exact)]
    arithmetic: Arith,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Arith {
    /// Exact rationals.
    Exact,
    /// f64 with relative tolerance 1e-9 and absolute 1e-12.
    Float,
}

#[derive(Args, Serialize)]
struct SimulateCmd {
    #[command(flatten)]
    pair: PairArgs,
    /// Initial state of the base chain: `3,0,2,0` or an example state name.
    #[arg(long)]
    x0: String,
    /// Initial state of the variant chain (defaults to x0).
    #[arg(long)]
    x0b: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    /// Couple with the grouped map on this partition (per-index otherwise).
    #[arg(long)]
    groups: Option<String>,
    #[arg(long, env = "SCRN_SEED", default_value_t = 1)]
    seed: u64,
    /// Write the trajectory of replicate 0 as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct MfptCmd {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    x0: String,
    /// Target: example target name, JSON state-list file, or predicate like `x2 >= 3`.
    #[arg(long)]
    gamma: String,
    #[arg(long, default_value_t = 1e4)]
    horizon: f64,
    #[arg(long, default_value_t = 1000)]
    replicates: u64,
    #[arg(long, env = "SCRN_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct MfptCompareCmd {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    x0: String,
    #[arg(long)]
    x0b: Option<String>,
    #[arg(long)]
    gamma: String,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long, default_value_t = 1e4)]
    horizon: f64,
    #[arg(long, default_value_t = 1000)]
    replicates: u64,
    #[arg(long, env = "SCRN_SEED", default_value_t = 1)]
    seed: u64,
    /// Write per-replicate `(T, T̆)` pairs as CSV.
    #[arg(long)]
    pairs_csv: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct StationaryCmd {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    x0: String,
    #[arg(long, default_value_t = 1e4)]
    total_time: f64,
    /// Defaults to 10% of the total time.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Batches for the batch-means standard errors.
    #[arg(long, default_value_t = 20)]
    batches: usize,
    /// Simulate on the box `max_i x_i <= M`.
    #[arg(long)]
    truncation: Option<i64>,
    /// Also report the mass of this set.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long, env = "SCRN_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct OracleCmd {
    #[arg(long, default_value_t = 2)]
    etot: i64,
    /// k1..k6, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0; 6])]
    kappa: Vec<f64>,
    /// Caps on x1 and x2.
    #[arg(long, value_delimiter = ',', default_values_t = [15, 15])]
    caps: Vec<i64>,
    /// A `stationary` report to compare against in total variation.
    #[arg(long)]
    against: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct DriftCmd {
    #[command(flatten)]
    model: ModelArgs,
    /// Lyapunov function; defaults to the example's own.
    #[arg(long)]
    v: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<DriftKind>,
    /// `c` (or `c'`), exact: `1`, `0.5`, `3/4`.
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    d: Option<String>,
    /// Predicate for `C` in compact mode; derived as `{QV > -c}` when absent.
    #[arg(long = "compact-set")]
    compact_set: Option<String>,
    #[arg(long)]
    truncation: Option<i64>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DriftKind {
    /// `QV <= -c + d·1_C`.
    Compact,
    /// `QV <= -c·V + d`.
    Exponential,
}

#[derive(Args, Serialize)]
struct DemoCmd {
    /// enzyme1, enzyme2, braess, histone or histone_tf.
    id: String,
    #[arg(long = "set", value_delimiter = ',')]
    set: Vec<String>,
    /// Order matrix written into the model file.
    #[arg(long, default_value = "default")]
    order: String,
}

/// A JSON report and whether it counts as a pass.
struct Report {
    result: Value,
    pass: bool,
}

fn config<T: Serialize>(cmd: &T) -> Value {
    serde_json::to_value(cmd).unwrap_or(Value::Null)
}

fn run_check(cmd: &CheckCmd, inputs: &mut Inputs) -> Result<Report> {
    let theorem: Theorem = cmd.theorem.parse()?;
    let lp = cmd.pair.load(inputs)?;
    let gp = match &cmd.groups {
        Some(g) => Some(groups(g, lp.bundle.as_ref(), inputs)?),
        None => lp.bundle.as_ref().and_then(|b| b.groups(&cmd.pair.order).ok().cloned()),
    };
    let tolerance = match cmd.arithmetic {
        Arith::Exact => Tolerance::Exact,
        Arith::Float => Tolerance::default(),
    };
    let opts = CheckOptions { truncation: cmd.truncation, tolerance };
    let report = check(theorem, &lp.pair, gp.as_ref(), &opts)?;
    let defaulted = lp.bundle.map(|b| b.defaulted).unwrap_or_default();
    Ok(Report {
        pass: report.verdict == Verdict::Pass,
        result: json!({ "report": report, "defaulted_parameters": defaulted }),
    })
}

fn mode_for(spec: &Option<String>, bundle: Option<&scrn::bundles::Bundle>, inputs: &mut Inputs) -> Result<CouplingMode> {
    Ok(match spec {
        Some(g) => CouplingMode::Grouped(groups(g, bundle, inputs)?),
        None => CouplingMode::PerIndex,
    })
}

fn write_path_csv(path: &PathBuf, species: &[String], chains: &[(&str, &SamplePath)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["chain".to_string(), "time".to_string()];
    header.extend(species.iter().cloned());
    w.write_record(&header)?;
    for (name, p) in chains {
        for (t, x) in &p.events {
            let mut rec = vec![name.to_string(), t.to_string()];
            rec.extend(x.iter().map(i64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_simulate(cmd: &SimulateCmd, inputs: &mut Inputs) -> Result<Report> {
    let lp = cmd.pair.load(inputs)?;
    let b = lp.bundle.as_ref();
    let base = lp.pair.base();
    let x0 = state(&cmd.x0, b, base.dim())?;
    if !cmd.pair.is_pair() {
        let paths: Vec<SamplePath> = (0..cmd.replicates)
            .map(|k| ssa_replicate(base, &x0, cmd.horizon, cmd.seed, k))
            .collect::<scrn::Result<_>>()?;
        if let (Some(path), Some(p0)) = (&cmd.csv, paths.first()) {
            write_path_csv(path, base.species(), &[("x", p0)])?;
        }
        let finals: Vec<_> = paths.iter().map(|p| p.final_state().clone()).collect();
        let jumps: Vec<usize> = paths.iter().map(|p| p.events.len() - 1).collect();
        return Ok(Report {
            pass: true,
            result: json!({ "replicates": cmd.replicates, "final_states": finals, "jumps": jumps }),
        });
    }
    let x0b = state(cmd.x0b.as_deref().unwrap_or(&cmd.x0), b, base.dim())?;
    let cfg = CouplingConfig::new(mode_for(&cmd.groups, b, inputs)?, cmd.horizon, cmd.seed);
    let runs = replicate_coupled(&lp.pair, &x0, &x0b, &cfg, cmd.replicates)?;
    if let Some(path) = &cmd.csv {
        let mut c = cfg.clone();
        c.record = RecordMode::AcceptedJumps;
        let r = simulate_coupled_replicate(&lp.pair, &x0, &x0b, &c, 0)?;
        write_path_csv(path, base.species(), &[("x", &r.path_x), ("xbreve", &r.path_xbreve)])?;
    }
    let ordered = runs.iter().filter(|r| r.ordered_throughout).count() as u64;
    let violations: Vec<Value> = runs
        .iter()
        .filter_map(|r| r.first_violation.as_ref().map(|v| json!({ "replicate": r.replicate, "violation": v })))
        .collect();
    let jumps: Vec<f64> = runs.iter().map(|r| r.potential_jumps as f64).collect();
    let (mean_jumps, se_jumps) = scrn::analysis::mean_se(&jumps);
    Ok(Report {
        pass: ordered == cmd.replicates,
        result: json!({
            "replicates": cmd.replicates,
            "ordered_throughout": ordered,
            "violations": violations,
            "potential_jumps": { "mean": mean_jumps, "std_error": se_jumps, "n": jumps.len() },
            "max_truncation": runs.iter().filter_map(|r| r.truncation).max(),
            "final_states": runs.iter().map(|r| (&r.final_x, &r.final_xbreve)).collect::<Vec<_>>(),
        }),
    })
}

fn run_mfpt(cmd: &MfptCmd, inputs: &mut Inputs) -> Result<Report> {
    let l = cmd.model.load(inputs)?;
    let x0 = state(&cmd.x0, l.bundle.as_ref(), l.net.dim())?;
    let g = gamma(&cmd.gamma, l.bundle.as_ref(), inputs)?;
    let samples = mfpt_samples(&l.net, &x0, &g, cmd.horizon, cmd.replicates, cmd.seed)?;
    let est = MfptEstimate::from_samples(&samples)?;
    Ok(Report {
        pass: true,
        result: json!({ "estimate": est, "censored_fraction": est.censored_fraction(), "gamma": g.to_string() }),
    })
}

fn run_mfpt_compare(cmd: &MfptCompareCmd, inputs: &mut Inputs) -> Result<Report> {
    let lp = cmd.pair.load(inputs)?;
    let b = lp.bundle.as_ref();
    let dim = lp.pair.base().dim();
    let x0 = state(&cmd.x0, b, dim)?;
    let x0b = state(cmd.x0b.as_deref().unwrap_or(&cmd.x0), b, dim)?;
    let g = gamma(&cmd.gamma, b, inputs)?;
    let cfg = CouplingConfig::new(mode_for(&cmd.groups, b, inputs)?, cmd.horizon, cmd.seed);
    let cmp = compare_mfpt_coupled(&lp.pair, &x0, &x0b, &g, &cfg, cmd.replicates)?;
    if let Some(path) = &cmd.pairs_csv {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["replicate", "t", "t_breve"])?;
        let show = |v: Option<f64>| v.map_or(String::new(), |t| t.to_string());
        for (k, (t, tb)) in cmp.pairs.iter().enumerate() {
            w.write_record([k.to_string(), show(*t), show(*tb)])?;
        }
        w.flush()?;
    }
    let mut result = serde_json::to_value(&cmp)?;
    if let Some(obj) = result.as_object_mut() {
        obj.remove("pairs");
    }
    Ok(Report { pass: cmp.pathwise_violations == 0, result })
}

fn run_stationary(cmd: &StationaryCmd, inputs: &mut Inputs) -> Result<Report> {
    let l = cmd.model.load(inputs)?;
    let net = match cmd.truncation {
        Some(m) => l.net.truncated(m),
        None => l.net.clone(),
    };
    let x0 = state(&cmd.x0, l.bundle.as_ref(), net.dim())?;
    let est = empirical_stationary_batched(&net, &x0, cmd.burn_in, cmd.total_time, cmd.batches, cmd.seed)?;
    let set_mass = match &cmd.gamma {
        Some(g) => Some(est.set_mass(&gamma(g, l.bundle.as_ref(), inputs)?)),
        None => None,
    };
    Ok(Report {
        pass: true,
        result: json!({
            "distribution": est.pooled,
            "set_mass": set_mass,
            "burn_in": est.burn_in,
            "total_time": est.total_time,
            "jumps": est.jumps,
            "batches": est.batches.len(),
        }),
    })
}

fn run_oracle(cmd: &OracleCmd, inputs: &mut Inputs) -> Result<Report> {
    let kappa: [f64; 6] = cmd.kappa.as_slice().try_into().context("--kappa needs six values")?;
    let [c1, c2] = cmd.caps[..] else { bail!("--caps needs two values") };
    let dist = product_form_stationary(cmd.etot, kappa, (c1, c2))?;
    let tv = match &cmd.against {
        Some(path) => {
            let report: Value = serde_json::from_str(&inputs.read(path)?)?;
            let other: DistributionTable = serde_json::from_value(report["result"]["distribution"].clone())
                .with_context(|| format!("{} is not a stationary report", path.display()))?;
            Some(total_variation(&dist, &other))
        }
        None => None,
    };
    Ok(Report { pass: true, result: json!({ "distribution": dist, "total_variation": tv }) })
}

fn run_drift(cmd: &DriftCmd, inputs: &mut Inputs) -> Result<Report> {
    let l = cmd.model.load(inputs)?;
    let exact = |s: &Option<String>, name: &str| -> Result<Option<_>> {
        s.as_deref()
            .map(|v| parse_rational(v).with_context(|| format!("--{name} must be a number or p/q")))
            .transpose()
    };
    let spec = match (&cmd.v, cmd.mode) {
        (Some(v), Some(kind)) => {
            let v = Expr::parse(v)?;
            let c = exact(&cmd.c, "c")?.context("--c is required")?;
            let mode = match kind {
                DriftKind::Exponential => {
                    DriftMode::ExponentialDrift { c, d: exact(&cmd.d, "d")?.context("--d is required")? }
                }
                DriftKind::Compact => DriftMode::NegDriftOutsideCompact {
                    c,
                    d: exact(&cmd.d, "d")?,
                    set: cmd.compact_set.as_deref().map(StateSet::predicate).transpose()?,
                },
            };
            LyapunovSpec { v, mode }
        }
        (None, None) => match l.bundle.as_ref().map(|b| b.lyapunov()).transpose()?.flatten() {
            Some(s) => s,
            None => bail!("give --v EXPR and --mode; this model has no built-in Lyapunov function"),
        },
        _ => bail!("--v and --mode go together"),
    };
    let report = verify_drift(&l.net, &spec, cmd.truncation)?;
    let irreducible = check_irreducible(&l.net, cmd.truncation).ok().map(|r| r.irreducible);
    Ok(Report {
        pass: report.verdict == Verdict::Pass,
        result: json!({ "lyapunov": spec, "report": report, "irreducible_on_truncation": irreducible }),
    })
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut inputs = Inputs::default();
    if let Command::Demo(cmd) = &cli.command {
        let b = build(cmd.id.parse::<ExampleId>()?, &inputs::overrides(&cmd.set)?)?;
        let net = b.network.clone().with_order_matrix(b.order(&cmd.order)?.rows().to_vec())?;
        manifest::emit_raw(cli.out.as_deref(), &to_model_json(&net))?;
        return Ok(true);
    }
    let (name, seed, cfg, report) = match &cli.command {
        Command::Check(c) => ("check", None, config(c), run_check(c, &mut inputs)?),
        Command::Simulate(c) => ("simulate", Some(c.seed), config(c), run_simulate(c, &mut inputs)?),
        Command::Mfpt(c) => ("mfpt", Some(c.seed), config(c), run_mfpt(c, &mut inputs)?),
        Command::MfptCompare(c) => ("mfpt-compare", Some(c.seed), config(c), run_mfpt_compare(c, &mut inputs)?),
        Command::Stationary(c) => ("stationary", Some(c.seed), config(c), run_stationary(c, &mut inputs)?),
        Command::StationaryOracle(c) => ("stationary-oracle", None, config(c), run_oracle(c, &mut inputs)?),
        Command::Drift(c) => ("drift", None, config(c), run_drift(c, &mut inputs)?),
        Command::Demo(_) => unreachable!("handled above"),
    };
    let env = Envelope::new(name, cfg, seed, cli.threads, inputs.digests, report.result, report.pass);
    manifest::emit(cli.out.as_deref(), &env)?;
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
