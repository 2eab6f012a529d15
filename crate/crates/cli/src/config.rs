//! The JSON harness configuration.
//!
//! ```json
//! {
//!   "run": {
//!     "shape": { "d": 1, "hidden": 8 },
//!     "init": { "kind": "uniform", "low": -0.5, "high": 0.5, "seed": 0 },
//!     "distribution": { "kind": "uniform_box", "a": 0.0, "b": 1.0, "d": 1 },
//!     "xi": 1.0,
//!     "schedule": { "kind": { "kind": "constant" }, "step": { "fraction_of_bound": 0.9 }, "horizon": 10000 },
//!     "batch_sizes": { "constant": 16 },
//!     "seed": 1,
//!     "mode": "sgd"
//!   },
//!   "output": { "dir": "out/sgd" }
//! }
//! ```
//!
//! Optional `run` keys: `mode` (`gd` | `sgd`, default `sgd`), `bound`
//! (`v-form` | `a-form`), `delta` (default 0.9), `true_risk_every`,
//! `stop_threshold`, `quadrature_resolution`, `override_validation`.

use std::path::{Path, PathBuf};

use relu_lab_core::RunConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// Allowed keys per object, addressed by dotted path; `*` matches any key of
/// an object whose members are variant names.
fn allowed_keys(path: &str) -> Option<&'static [&'static str]> {
    Some(match path {
        "" => &["run", "output"],
        "run" => &[
            "shape",
            "init",
            "distribution",
            "xi",
            "schedule",
            "batch_sizes",
            "seed",
            "mode",
            "bound",
            "delta",
            "true_risk_every",
            "stop_threshold",
            "quadrature_resolution",
            "override_validation",
        ],
        "run.shape" => &["d", "hidden"],
        "run.init" => &["kind", "values", "low", "high", "seed"],
        "run.distribution" => &["kind", "a", "b", "d", "points", "weights"],
        "run.schedule" => &["kind", "step", "horizon"],
        "run.schedule.kind" => &["kind", "power"],
        "run.schedule.step" => &["fixed", "fraction_of_bound"],
        "run.batch_sizes" => &["constant", "per_step"],
        "output" => &["dir"],
        _ => return None,
    })
}

fn scan(value: &Value, path: &str, unknown: &mut Vec<String>) {
    let Value::Object(map) = value else { return };
    let Some(allowed) = allowed_keys(path) else { return };
    for (key, child) in map {
        let child_path = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        if allowed.contains(&key.as_str()) {
            scan(child, &child_path, unknown);
        } else {
            unknown.push(child_path);
        }
    }
}

/// Every unrecognised key in `value`, as dotted paths.
pub fn unknown_keys(value: &Value) -> Vec<String> {
    let mut out = Vec::new();
    scan(value, "", &mut out);
    out
}

impl HarnessConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        let unknown = unknown_keys(&value);
        if !unknown.is_empty() {
            return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        let cfg: HarnessConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.run.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical JSON of the run section, defaults filled in.
    pub fn canonical_run(&self) -> String {
        serde_json::to_string(&self.run).expect("run config serializes")
    }

    /// SHA-256 of [`Self::canonical_run`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_run().as_bytes()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }
}
