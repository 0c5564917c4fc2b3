//! Effective configuration: defaults, then the JSON file, then `--set`.

use std::path::Path;

use cuerec_core::{Error, Result, RunConfig};
use serde_json::{Map, Value};

pub fn build(file: Option<&Path>, sets: &[String], deterministic: bool) -> Result<RunConfig> {
    let defaults = serde_json::to_value(RunConfig::default())?;
    let mut value = defaults.clone();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let overlay: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        merge(&mut value, overlay, &defaults, "")?;
    }
    for s in sets {
        apply_set(&mut value, &defaults, s)?;
    }
    let mut cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    if deterministic {
        cfg.deterministic = true;
    }
    let cfg = cfg.resolved();
    cfg.validate()?;
    Ok(cfg)
}

/// Recursively overlays `src` onto `dst`; keys must exist in `schema`
/// unless the schema slot is null (an unset optional section).
fn merge(dst: &mut Value, src: Value, schema: &Value, at: &str) -> Result<()> {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                let sub_schema = match schema {
                    Value::Object(m) => m
                        .get(&k)
                        .ok_or_else(|| Error::Config(format!("unknown config key {path:?}")))?,
                    _ => &Value::Null,
                };
                let slot = d.entry(k).or_insert(Value::Null);
                if slot.is_null() && v.is_object() {
                    *slot = Value::Object(Map::new());
                }
                merge(slot, v, sub_schema, &path)?;
            }
            Ok(())
        }
        (d, s) => {
            *d = s;
            Ok(())
        }
    }
}

/// Applies one `dotted.key=value`; the value is parsed as JSON, falling
/// back to a plain string.
fn apply_set(value: &mut Value, defaults: &Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects key=value, got {spec:?}")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut nested = parsed;
    for part in key.rsplit('.') {
        let mut m = Map::new();
        m.insert(part.to_string(), nested);
        nested = Value::Object(m);
    }
    merge(value, nested, defaults, "")
}
