//! Layered run configuration: built-in defaults, then an optional TOML file,
//! then `--section.key=value` flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spex::biencoder::BiTrainConfig;
use spex::eval::{Metric, SynthConfig};
use spex::retrieval::ExclusionParams;
use spex::sae::SaeTrainConfig;
use toml::{Table, Value};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub min_co: usize,
    pub min_excl: usize,
    pub metrics: Vec<String>,
    /// Metric compared by `compare`.
    pub compare_metric: String,
    pub alpha: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            min_co: 10,
            min_excl: 10,
            metrics: Metric::defaults().iter().map(Metric::to_string).collect(),
            compare_metric: "AP@10".into(),
            alpha: 0.01,
        }
    }
}

impl EvalConfig {
    pub fn parsed_metrics(&self) -> Result<Vec<Metric>, UsageError> {
        if self.metrics.is_empty() {
            return Err(UsageError("eval.metrics must not be empty".into()));
        }
        self.metrics
            .iter()
            .map(|m| {
                m.parse()
                    .map_err(|e: spex::Error| UsageError(e.to_string()))
            })
            .collect()
    }

    pub fn compare_metric(&self) -> Result<Metric, UsageError> {
        self.compare_metric
            .parse()
            .map_err(|e: spex::Error| UsageError(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sae: SaeTrainConfig,
    pub bi: BiTrainConfig,
    pub retrieval: ExclusionParams,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), UsageError> {
        let usage = |e: spex::Error| UsageError(e.to_string());
        self.sae.validate().map_err(usage)?;
        self.bi.validate().map_err(usage)?;
        self.retrieval.validate().map_err(usage)?;
        self.synth.validate().map_err(usage)?;
        if self.eval.min_co == 0 || self.eval.min_excl == 0 {
            return Err(UsageError(
                "eval.min_co and eval.min_excl must be at least 1".into(),
            ));
        }
        if !(self.eval.alpha > 0.0 && self.eval.alpha < 1.0) {
            return Err(UsageError("eval.alpha must lie in (0, 1)".into()));
        }
        self.eval.parsed_metrics()?;
        self.eval.compare_metric()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialization")
    }
}

/// Splits `--section.key=value` flags out of an argument list. Everything
/// else is returned untouched, in order.
pub fn split_config_flags(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut flags = Vec::new();
    for arg in args {
        if let Some(body) = arg.strip_prefix("--") {
            if let Some((key, value)) = body.split_once('=') {
                if key.contains('.') {
                    flags.push((key.to_owned(), value.to_owned()));
                    continue;
                }
            }
        }
        rest.push(arg);
    }
    (rest, flags)
}

fn defaults_table() -> Table {
    match Value::try_from(RunConfig::default()).expect("defaults serialize") {
        Value::Table(t) => t,
        _ => unreachable!("config serializes to a table"),
    }
}

/// Looks up the default value at `section.key`.
fn default_at<'a>(defaults: &'a Table, section: &str, key: &str) -> Result<&'a Value, UsageError> {
    let table = defaults
        .get(section)
        .and_then(Value::as_table)
        .ok_or_else(|| {
            UsageError(format!(
                "unknown key {section}.{key}: no section {section:?}"
            ))
        })?;
    table
        .get(key)
        .ok_or_else(|| UsageError(format!("unknown key {section}.{key}")))
}

fn parse_flag_value(name: &str, raw: &str, like: &Value) -> Result<Value, UsageError> {
    let mismatch = |what: &str| UsageError(format!("--{name}: expected {what}, found {raw:?}"));
    Ok(match like {
        Value::Integer(_) => Value::Integer(raw.parse().map_err(|_| mismatch("integer"))?),
        Value::Float(_) => {
            let v: f64 = raw.parse().map_err(|_| mismatch("number"))?;
            if !v.is_finite() {
                return Err(mismatch("finite number"));
            }
            Value::Float(v)
        }
        Value::Boolean(_) => Value::Boolean(raw.parse().map_err(|_| mismatch("boolean"))?),
        Value::String(_) => Value::String(raw.to_owned()),
        Value::Array(_) => Value::Array(
            raw.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Value::String(s.into()))
                .collect(),
        ),
        _ => return Err(mismatch("a scalar")),
    })
}

/// Overlays a parsed file onto the defaults, rejecting unknown keys.
fn overlay_file(merged: &mut Table, file: Table, defaults: &Table) -> Result<(), UsageError> {
    for (section, value) in file {
        let Value::Table(entries) = value else {
            return Err(UsageError(format!(
                "config key {section:?} must be a section"
            )));
        };
        for (key, v) in entries {
            let like = default_at(defaults, &section, &key)?;
            let v = match (like, v) {
                // Integers are accepted where a float is expected.
                (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
                (_, v) => v,
            };
            merged
                .get_mut(&section)
                .and_then(Value::as_table_mut)
                .expect("section exists")
                .insert(key, v);
        }
    }
    Ok(())
}

/// Resolves the configuration: defaults, then `file`, then `flags`.
pub fn parse_config(
    file: Option<&Path>,
    flags: &[(String, String)],
) -> Result<RunConfig, UsageError> {
    let text = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            Some((text, path.display().to_string()))
        }
        None => None,
    };
    resolve(
        text.as_ref()
            .map(|(t, origin)| (t.as_str(), origin.as_str())),
        flags,
    )
}

/// [`parse_config`] with the file contents given as a string.
pub fn parse_config_text(text: &str, flags: &[(String, String)]) -> Result<RunConfig, UsageError> {
    resolve(Some((text, "config")), flags)
}

/// `file` is the TOML text and a name for error messages.
fn resolve(
    file: Option<(&str, &str)>,
    flags: &[(String, String)],
) -> Result<RunConfig, UsageError> {
    let defaults = defaults_table();
    let mut merged = defaults.clone();
    if let Some((text, origin)) = file {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| UsageError(format!("{origin}: {}", e.message())))?;
        overlay_file(&mut merged, table, &defaults)?;
    }
    for (name, raw) in flags {
        let (section, key) = name
            .split_once('.')
            .ok_or_else(|| UsageError(format!("malformed flag --{name}")))?;
        let like = default_at(&defaults, section, key)?;
        let value = parse_flag_value(name, raw, like)?;
        merged
            .get_mut(section)
            .and_then(Value::as_table_mut)
            .expect("section exists")
            .insert(key.to_owned(), value);
    }
    let config: RunConfig = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| UsageError(format!("config: {}", e.message())))?;
    config.validate()?;
    Ok(config)
}
