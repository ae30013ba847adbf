//! Effective configuration of a command: flags override a JSON config
//! file, which overrides the built-in defaults.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{LabError, LabResult};

/// Reads a config file: either a flat JSON object or a run manifest, whose
/// `parameters` object is used.
pub fn read_config_file(path: &Path) -> LabResult<Map<String, Value>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| LabError::Usage(format!("{}: {e}", path.display())))?;
    let value = match value {
        Value::Object(mut m) if m.contains_key("parameters") && m.contains_key("command") => m.remove("parameters").unwrap_or_default(),
        v => v,
    };
    match value {
        Value::Object(m) => Ok(m),
        _ => Err(LabError::Usage(format!("{}: config must be a JSON object", path.display()))),
    }
}

/// Merges `defaults`, then `file`, then `flags` (absent flags are skipped)
/// and deserializes the result.
pub fn merge<F: Serialize, T: Serialize + DeserializeOwned>(
    defaults: Value,
    file: Option<Map<String, Value>>,
    flags: &F,
) -> LabResult<(T, Map<String, Value>)> {
    let mut merged = match defaults {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    if let Some(file) = file {
        merged.extend(file);
    }
    if let Value::Object(f) = serde_json::to_value(flags)? {
        merged.extend(f.into_iter().filter(|(_, v)| !v.is_null()));
    }
    let effective: T = serde_json::from_value(Value::Object(merged.clone())).map_err(usage)?;
    let echoed = match serde_json::to_value(&effective)? {
        Value::Object(m) => m,
        _ => merged,
    };
    Ok((effective, echoed))
}

/// Phrases a deserialization failure in terms of command-line flags.
fn usage(e: serde_json::Error) -> LabError {
    let msg = e.to_string();
    match msg.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
        Some(field) => LabError::Usage(format!("missing required flag --{}", field.replace('_', "-"))),
        None => LabError::Usage(msg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[derive(Serialize)]
    struct Flags {
        a: Option<u32>,
        b: Option<u32>,
    }

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Cfg {
        a: u32,
        b: u32,
        c: u32,
    }

    #[test]
    fn precedence() {
        let file = json!({"b": 20, "c": 30}).as_object().cloned();
        let (cfg, echoed): (Cfg, _) = merge(json!({"a": 1, "b": 2, "c": 3}), file, &Flags { a: None, b: Some(200) }).unwrap();
        assert_eq!(cfg, Cfg { a: 1, b: 200, c: 30 });
        assert_eq!(echoed["b"], json!(200));
    }

    #[test]
    fn missing_field_is_usage_error() {
        let r: LabResult<(Cfg, _)> = merge(json!({"a": 1}), None, &Flags { a: None, b: None });
        let e = r.unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("--b"), "{e}");
    }
}
