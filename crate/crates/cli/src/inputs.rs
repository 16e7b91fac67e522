//! Turning command-line strings into models, pairs, states and sets.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;
use sha2::{Digest, Sha256};

use scrn::bundles::{build, Bundle, ExampleId};
use scrn::conditions::{CoupledPair, GroupPartition};
use scrn::model::{parse_model, Network, State, StateSet};

/// SHA-256 of one input file.
#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Files read while resolving arguments, for the manifest.
#[derive(Debug, Default)]
pub struct Inputs {
    pub digests: Vec<InputDigest>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.digests.push(InputDigest {
            path: path.display().to_string(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        });
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn model(&mut self, path: &Path) -> Result<Network> {
        let text = self.read(path)?;
        parse_model(&text).with_context(|| format!("in {}", path.display()))
    }
}

/// `k=v` pairs.
pub fn overrides(items: &[String]) -> Result<Vec<(&str, f64)>> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("expected name=value, got `{s}`"))?;
            let v: f64 = v.trim().parse().with_context(|| format!("bad value in `{s}`"))?;
            Ok((k.trim(), v))
        })
        .collect()
}

/// One model, from a file or a bundled example.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Model file (JSON).
    #[arg(long, conflicts_with = "example")]
    pub model: Option<PathBuf>,
    /// Bundled example: enzyme1, enzyme2, braess, histone, histone_tf.
    #[arg(long)]
    pub example: Option<String>,
    /// Example parameter overrides, `name=value` (comma separated or repeated).
    #[arg(long = "set", value_delimiter = ',', requires = "example")]
    pub set: Vec<String>,
}

pub struct Loaded {
    pub net: Network,
    pub bundle: Option<Bundle>,
}

impl ModelArgs {
    pub fn load(&self, inputs: &mut Inputs) -> Result<Loaded> {
        match (&self.model, &self.example) {
            (Some(p), _) => Ok(Loaded { net: inputs.model(p)?, bundle: None }),
            (None, Some(id)) => {
                let b = build(id.parse::<ExampleId>()?, &overrides(&self.set)?)?;
                Ok(Loaded { net: b.network.clone(), bundle: Some(b) })
            }
            (None, None) => bail!("give --model FILE or --example ID"),
        }
    }
}

/// Two models and an order, from files or a bundled example.
#[derive(Debug, Clone, Args, Serialize)]
pub struct PairArgs {
    /// Base model file; its `order_matrix` defines the order.
    #[arg(long = "model-a", conflicts_with = "example", requires = "model_b")]
    pub model_a: Option<PathBuf>,
    /// Variant model file.
    #[arg(long = "model-b", requires = "model_a")]
    pub model_b: Option<PathBuf>,
    /// Bundled example for the base model.
    #[arg(long)]
    pub example: Option<String>,
    /// Base parameter overrides, `name=value`.
    #[arg(long = "set", value_delimiter = ',', requires = "example")]
    pub set: Vec<String>,
    /// Variant parameter overrides, `name=value`.
    #[arg(long = "vary", value_delimiter = ',', requires = "example")]
    pub vary: Vec<String>,
    /// Name of the example's order matrix.
    #[arg(long, default_value = "default")]
    pub order: String,
}

pub struct LoadedPair {
    pub pair: CoupledPair,
    pub bundle: Option<Bundle>,
}

impl PairArgs {
    pub fn load(&self, inputs: &mut Inputs) -> Result<LoadedPair> {
        match (&self.model_a, &self.model_b, &self.example) {
            (Some(a), Some(b), _) => {
                let pair = CoupledPair::from_models(inputs.model(a)?, inputs.model(b)?)?;
                Ok(LoadedPair { pair, bundle: None })
            }
            (None, None, Some(id)) => {
                let b = build(id.parse::<ExampleId>()?, &overrides(&self.set)?)?;
                let pair = b.pair(&overrides(&self.vary)?, &self.order)?;
                Ok(LoadedPair { pair, bundle: Some(b) })
            }
            _ => bail!("give --model-a FILE --model-b FILE, or --example ID [--vary name=value]"),
        }
    }

    /// Whether a variant was given at all.
    pub fn is_pair(&self) -> bool {
        self.model_b.is_some() || !self.vary.is_empty()
    }
}

/// A state written `3,0,2,0`, or the name of an example's initial state.
pub fn state(spec: &str, bundle: Option<&Bundle>, dim: usize) -> Result<State> {
    if let Some(x) = bundle.and_then(|b| b.initial(spec).ok()) {
        return Ok(x.clone());
    }
    let x: State = spec
        .split(',')
        .map(|v| v.trim().parse::<i64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            let names: Vec<&str> = bundle.map(|b| b.initial.iter().map(|(n, _)| n.as_str()).collect()).unwrap_or_default();
            anyhow!("`{spec}` is neither a state like 1,0,2 nor a named initial state {names:?}")
        })?;
    if x.len() != dim {
        bail!("state `{spec}` has {} entries, the model has {dim} species", x.len());
    }
    Ok(x)
}

/// A target set: an example's target name, a JSON file with a list of
/// states, or a predicate such as `x2 >= 3`.
pub fn gamma(spec: &str, bundle: Option<&Bundle>, inputs: &mut Inputs) -> Result<StateSet> {
    if let Some(g) = bundle.and_then(|b| b.target(spec).ok()) {
        return Ok(g.clone());
    }
    let path = Path::new(spec);
    if path.is_file() {
        let states: Vec<State> = serde_json::from_str(&inputs.read(path)?)
            .with_context(|| format!("{spec} should hold a JSON list of states"))?;
        return Ok(StateSet::States(states));
    }
    Ok(StateSet::predicate(spec).with_context(|| format!("`{spec}` is not a target name, file or predicate"))?)
}

/// A partition: inline JSON such as `[[0,2],[1,3],[4]]`, an example's
/// grouping name, or a JSON file.
pub fn groups(spec: &str, bundle: Option<&Bundle>, inputs: &mut Inputs) -> Result<GroupPartition> {
    let text = if spec.trim_start().starts_with('[') {
        spec.to_string()
    } else if let Some(g) = bundle.and_then(|b| b.groups(spec).ok()) {
        return Ok(g.clone());
    } else {
        inputs.read(Path::new(spec))?
    };
    let groups: Vec<Vec<usize>> =
        serde_json::from_str(&text).with_context(|| format!("bad group partition `{spec}`"))?;
    Ok(GroupPartition::new(groups))
}
