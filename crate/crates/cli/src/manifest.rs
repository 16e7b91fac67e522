//! The `{manifest, result}` envelope every report is wrapped in.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::inputs::InputDigest;

#[derive(Debug, Serialize)]
pub struct Versions {
    pub scrn: &'static str,
    pub scrn_cli: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    /// Parsed arguments of the subcommand.
    pub config: Value,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub versions: Versions,
    pub inputs: Vec<InputDigest>,
    /// RFC 3339, UTC.
    pub timestamp: String,
}

#[derive(Debug, Serialize)]
pub struct Envelope {
    pub manifest: Manifest,
    pub pass: bool,
    pub result: Value,
}

impl Envelope {
    pub fn new(
        command: &str,
        config: Value,
        seed: Option<u64>,
        threads: Option<usize>,
        inputs: Vec<InputDigest>,
        result: Value,
        pass: bool,
    ) -> Self {
        Envelope {
            manifest: Manifest {
                command: command.to_string(),
                config,
                seed,
                threads,
                versions: Versions { scrn: scrn::VERSION, scrn_cli: env!("CARGO_PKG_VERSION") },
                inputs,
                timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            },
            pass,
            result,
        }
    }
}

pub fn emit(out: Option<&Path>, env: &Envelope) -> Result<()> {
    emit_raw(out, &serde_json::to_string_pretty(env)?)
}

/// Write `text` plus a newline to `out`, or stdout.
pub fn emit_raw(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            writeln!(so, "{text}")?;
            Ok(())
        }
    }
}
