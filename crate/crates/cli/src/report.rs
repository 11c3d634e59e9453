//! Report assembly, input hashing and the exit-code contract.

use anyhow::{Context, Result};
use robust_transit::{Certificate, Verdict};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    /// sha256 of every input file, keyed by the path as given.
    pub input_hashes: BTreeMap<String, String>,
    pub certificates: Vec<Certificate>,
    pub results: Map<String, Value>,
    pub elapsed_ms: f64,
}

impl Report {
    pub fn new(command: &str, config: impl Serialize) -> Self {
        Report {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            input_hashes: BTreeMap::new(),
            certificates: Vec::new(),
            results: Map::new(),
            elapsed_ms: 0.0,
        }
    }

    pub fn hash_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.input_hashes.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(bytes)
    }

    pub fn result(&mut self, key: &str, v: impl Serialize) {
        self.results.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn verdict(&self) -> Verdict {
        Certificate::worst(self.certificates.iter().map(|c| c.verdict))
    }

    /// Writes `<dir>/<command>_report.json` and prints one line per certificate.
    pub fn finish(mut self, dir: &Path, start: Instant) -> Result<i32> {
        self.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{}_report.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")?;
        for c in &self.certificates {
            println!("{:<28} {:<12} margin {:.6e}", c.check, format!("{:?}", c.verdict).to_lowercase(), c.margin);
        }
        println!("report: {}", path.display());
        Ok(exit_code(self.verdict(), self.certificates.is_empty()))
    }
}

/// 0 all-pass, 1 any fail, 3 inconclusive without failures.
pub fn exit_code(v: Verdict, empty: bool) -> i32 {
    if empty {
        return 0;
    }
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 3,
    }
}

pub fn out_file(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_contract() {
        assert_eq!(exit_code(Verdict::Pass, false), 0);
        assert_eq!(exit_code(Verdict::Fail, false), 1);
        assert_eq!(exit_code(Verdict::Inconclusive, false), 3);
        assert_eq!(exit_code(Verdict::Fail, true), 0);
    }
}
