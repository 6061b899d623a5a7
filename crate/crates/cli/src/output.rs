//! Output files with a provenance header.
//!
//! JSON outputs gain a leading `provenance` object; CSV outputs start with
//! `#`-prefixed comment lines. Nothing time- or host-dependent is written,
//! so identical configurations give byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL: &str = concat!("swipt ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// Hashes the resolved options of a run. Output paths are not part of
    /// the serialized options, so they do not affect the hash.
    pub fn new<T: Serialize>(command: &str, resolved: &T, seed: u64) -> Self {
        let body = serde_json::to_string(resolved).expect("options serialize");
        let digest = Sha256::digest(format!("{command}\n{body}").as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            tool: TOOL,
            config_hash: format!("sha256:{hex}"),
            seed,
        }
    }

    fn csv_lines(&self) -> String {
        format!(
            "# tool: {}\n# config_hash: {}\n# seed: {}\n",
            self.tool, self.config_hash, self.seed
        )
    }
}

/// Prepends the provenance object to a JSON document.
pub fn json_with_provenance(json: &str, prov: &Provenance) -> Result<String, CliError> {
    let body: Value = serde_json::from_str(json).map_err(|e| CliError::usage(e.to_string()))?;
    let Value::Object(fields) = body else {
        return Err(CliError::usage("expected a JSON object"));
    };
    let mut out = Map::new();
    out.insert("provenance".into(), serde_json::to_value(prov).expect("provenance serializes"));
    out.extend(fields);
    let mut text = serde_json::to_string_pretty(&Value::Object(out)).expect("value serializes");
    text.push('\n');
    Ok(text)
}

/// Prepends the provenance comment lines to CSV text.
pub fn csv_with_provenance(csv: &[u8], prov: &Provenance) -> Vec<u8> {
    let mut out = prov.csv_lines().into_bytes();
    out.extend_from_slice(csv);
    out
}

/// Writes `bytes` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::usage(format!("cannot write to stdout: {e}")))
        }
    }
}

