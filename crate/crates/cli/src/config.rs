//! Run configuration: a JSON object from `--config`, overridden key by key
//! with `--key value` pairs.

use std::path::{Path, PathBuf};

use hltomo::fock::StatePrep;
use hltomo::ingestion::FringeChannel;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Keys whose override values are always taken verbatim as strings.
const STRING_KEYS: &[&str] = &["prep", "target", "input", "output", "phase_mode", "fringe_channel"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Fit the interference fringe per piezo step.
    Calibrated,
    /// Uniform random phases (phase-insensitive signals).
    Random,
    /// Step phases from the trace's metadata sidecar.
    TrustFile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub prep: Option<StatePrep>,
    pub target: Option<StatePrep>,
    pub lo_magnitude: Option<f64>,
    pub eta_c: Option<f64>,
    pub eta_d: Option<f64>,
    pub n_samples: Option<usize>,
    pub n_steps: Option<usize>,
    pub spread_step: Option<f64>,
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub n_blocks: Option<usize>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub phase_mode: Option<PhaseMode>,
    pub fringe_channel: Option<FringeChannel>,
    pub theta: Option<f64>,
    pub kernel_eta: Option<f64>,
    pub phase_sensitive: Option<bool>,
    pub lenient: Option<bool>,
    pub phase_noise: Option<f64>,
    pub svg: Option<bool>,
}

fn override_value(key: &str, raw: &str) -> Value {
    if STRING_KEYS.contains(&key) {
        return Value::String(raw.to_string());
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Splits `--key value` / `--key=value` tokens; a key followed by another key
/// or by nothing is a boolean flag.
pub fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        let Some(body) = tok.strip_prefix("--") else {
            return Err(CliError::Config(format!("unexpected argument '{tok}', expected --key value")));
        };
        if body.is_empty() {
            return Err(CliError::Config("empty option name".into()));
        }
        if let Some((k, v)) = body.split_once('=') {
            out.push((k.replace('-', "_"), v.to_string()));
            i += 1;
        } else if i + 1 < tokens.len() && !tokens[i + 1].starts_with("--") {
            out.push((body.replace('-', "_"), tokens[i + 1].clone()));
            i += 2;
        } else {
            out.push((body.replace('-', "_"), "true".to_string()));
            i += 1;
        }
    }
    Ok(out)
}

fn read_config_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Config(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => Err(CliError::Config(format!("{}: {e}", path.display()))),
    }
}

/// Builds the configuration from an optional file plus overrides. A
/// `--config` pair inside the overrides names the file as well.
pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let pairs = parse_overrides(overrides)?;
    let mut file = config.map(Path::to_path_buf);
    for (k, v) in &pairs {
        if k == "config" {
            file = Some(PathBuf::from(v));
        }
    }
    let mut map = match &file {
        Some(p) => read_config_file(p)?,
        None => Map::new(),
    };
    for (k, v) in pairs {
        if k != "config" {
            let value = override_value(&k, &v);
            map.insert(k, value);
        }
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))
}

/// SHA-256 of the canonical JSON of `(command, resolved config)`.
pub fn config_hash(command: &str, cfg: &RunConfig) -> String {
    let doc = serde_json::json!({ "command": command, "config": cfg });
    hex::encode(Sha256::digest(serde_json::to_vec(&doc).expect("config serializes")))
}
