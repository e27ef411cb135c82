//! Strict JSON configuration loading with dotted `key=value` overrides.

use std::fmt;
use std::path::Path;

use pca_oracle::ExperimentConfig;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Every problem found while loading a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl ConfigError {
    fn one(msg: impl Into<String>) -> Self {
        Self {
            problems: vec![msg.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for p in &self.problems {
            writeln!(f, "  {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy)]
enum Kind {
    Scalar,
    List,
    Object(&'static [(&'static str, Kind)]),
    Profile,
}

const PROFILE_COMMON: &[&str] = &["kind"];
const PROFILE_KEYS: &[(&str, &[&str])] = &[
    ("polynomial", &["K", "alpha"]),
    ("exponential", &["K", "alpha", "beta"]),
    ("explicit", &["values"]),
];

const MODEL: &[(&str, Kind)] = &[
    ("profile", Kind::Profile),
    ("dim", Kind::Scalar),
    ("truncation_tol", Kind::Scalar),
    ("max_dim", Kind::Scalar),
];

const CONSTANTS: &[(&str, Kind)] = &[
    ("c1", Kind::Scalar),
    ("c2", Kind::Scalar),
    ("C1", Kind::Scalar),
    ("c1p", Kind::Scalar),
    ("c2p", Kind::Scalar),
    ("C1p", Kind::Scalar),
    ("C_dk", Kind::Scalar),
    ("C_hw", Kind::Scalar),
];

const OUTPUTS: &[(&str, Kind)] = &[
    ("records", Kind::Scalar),
    ("summary", Kind::Scalar),
    ("bounds", Kind::Scalar),
    ("sweep", Kind::Scalar),
];

const TOP: &[(&str, Kind)] = &[
    ("model", Kind::Object(MODEL)),
    ("law", Kind::Scalar),
    ("n", Kind::List),
    ("d", Kind::List),
    ("t", Kind::List),
    ("replicates", Kind::Scalar),
    ("seed", Kind::Scalar),
    ("confidence", Kind::Scalar),
    ("constants", Kind::Object(CONSTANTS)),
    ("d_prime", Kind::List),
    ("outputs", Kind::Object(OUTPUTS)),
];

fn profile_keys(kind: Option<&str>) -> Vec<&'static str> {
    let mut keys: Vec<&str> = PROFILE_COMMON.to_vec();
    match PROFILE_KEYS.iter().find(|(k, _)| Some(*k) == kind) {
        Some((_, extra)) => keys.extend_from_slice(extra),
        None => PROFILE_KEYS
            .iter()
            .for_each(|(_, extra)| keys.extend_from_slice(extra)),
    }
    keys
}

/// Records and removes every key the schema does not know, so the rest of the
/// document can still be validated.
fn strip_unknown_keys(
    value: &mut Value,
    schema: &[(&str, Kind)],
    prefix: &str,
    out: &mut Vec<String>,
) {
    let Some(obj) = value.as_object_mut() else {
        return;
    };
    obj.retain(|key, _| {
        let known = schema.iter().any(|(k, _)| k == key);
        if !known {
            out.push(format!("{prefix}{key}: unknown key"));
        }
        known
    });
    for (key, v) in obj.iter_mut() {
        let path = format!("{prefix}{key}");
        match schema.iter().find(|(k, _)| k == key) {
            Some((_, Kind::Object(inner))) => {
                strip_unknown_keys(v, inner, &format!("{path}."), out)
            }
            Some((_, Kind::Profile)) => {
                if let Some(p) = v.as_object_mut() {
                    let allowed = profile_keys(p.get("kind").and_then(Value::as_str));
                    p.retain(|k, _| {
                        let known = allowed.contains(&k.as_str());
                        if !known {
                            out.push(format!("{path}.{k}: unknown key"));
                        }
                        known
                    });
                }
            }
            _ => {}
        }
    }
}

/// Resolves a dotted key against the schema.
fn lookup(key: &str) -> Option<Kind> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut schema = TOP;
    for (i, part) in parts.iter().enumerate() {
        let (_, kind) = schema.iter().find(|(k, _)| k == part)?;
        let last = i + 1 == parts.len();
        match (kind, last) {
            (k, true) => return Some(*k),
            (Kind::Object(inner), false) => schema = inner,
            (Kind::Profile, false) => {
                let rest = &parts[i + 1..];
                let all = profile_keys(None);
                return (rest.len() == 1 && all.contains(&rest[0])).then(|| {
                    if rest[0] == "values" {
                        Kind::List
                    } else {
                        Kind::Scalar
                    }
                });
            }
            _ => return None,
        }
    }
    None
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies one `key=value` override in place. Scalars given for list keys are
/// wrapped into a one-element list.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}`: expected key=value"))?;
    let key = key.trim();
    let kind = lookup(key).ok_or_else(|| format!("{key}: override references an unknown key"))?;
    let mut value = parse_value(raw.trim());
    if matches!(kind, Kind::List) && !value.is_array() {
        value = Value::Array(vec![value]);
    }
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| format!("{key}: parent is not an object"))?;
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    cur.as_object_mut()
        .ok_or_else(|| format!("{key}: parent is not an object"))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses, overrides, and validates a configuration held in memory.
pub fn config_from_str(
    text: &str,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<ExperimentConfig, ConfigError> {
    let mut root: Value =
        serde_json::from_str(text).map_err(|e| ConfigError::one(format!("parse error: {e}")))?;
    if !root.is_object() {
        return Err(ConfigError::one("top level must be a JSON object"));
    }
    let mut problems: Vec<String> = overrides
        .iter()
        .filter_map(|o| apply_override(&mut root, o).err())
        .collect();
    if let Some(seed) = seed {
        root["seed"] = Value::from(seed);
    }
    strip_unknown_keys(&mut root, TOP, "", &mut problems);
    let mut missing = false;
    if let Some(obj) = root.as_object() {
        for (key, _) in TOP {
            let required = !matches!(
                key,
                &"t" | &"confidence" | &"constants" | &"d_prime" | &"outputs"
            );
            if required && !obj.contains_key(*key) {
                problems.push(format!("{key}: missing required key"));
                missing = true;
            }
        }
    }
    if !missing {
        match serde_json::from_value::<ExperimentConfig>(root) {
            Ok(config) if problems.is_empty() && config.violations().is_empty() => {
                return Ok(config)
            }
            Ok(config) => problems.extend(
                config
                    .violations()
                    .into_iter()
                    .map(|(k, m)| format!("{k}: {m}")),
            ),
            Err(e) => problems.push(format!("type error: {e}")),
        }
    }
    Err(ConfigError { problems })
}

pub fn load_config(
    path: &Path,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::one(format!("cannot read {}: {e}", path.display())))?;
    config_from_str(&text, overrides, seed)
}

/// Canonical JSON of a resolved configuration and its SHA-256.
pub fn config_fingerprint(config: &ExperimentConfig) -> (String, String) {
    let json = serde_json::to_string(config).expect("configuration serializes");
    let hash = hex::encode(Sha256::digest(json.as_bytes()));
    (json, hash)
}
