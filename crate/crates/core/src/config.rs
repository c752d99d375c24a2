//! Loading [`PipelineConfig`] from JSON and applying `section.field=value`
//! overrides addressed by dotted name.

use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::domain::Category;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {detail}")]
    File { path: String, detail: String },
    #[error("unknown setting {0:?}")]
    UnknownKey(String),
    #[error("setting {key}: {detail}")]
    BadValue { key: String, detail: String },
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let file_err = |detail: String| ConfigError::File {
        path: path.display().to_string(),
        detail,
    };
    let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))
}

/// Every dotted setting name, e.g. `pipeline.batch_threshold` or
/// `thresholds.per_class.table`.
pub fn setting_names() -> Vec<String> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let name = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    if name == "thresholds.per_class" {
                        for c in Category::ALL {
                            out.push(format!("{name}.{c}"));
                        }
                    } else {
                        walk(&name, child, out);
                    }
                }
            }
            _ => out.push(prefix.to_string()),
        }
    }
    let defaults = serde_json::to_value(PipelineConfig::default()).expect("config serializes");
    let mut out = Vec::new();
    walk("", &defaults, &mut out);
    out
}

/// Set one dotted setting. The value is read as JSON when it parses as JSON
/// and as a plain string otherwise.
pub fn apply_override(cfg: &mut PipelineConfig, key: &str, raw: &str) -> Result<(), ConfigError> {
    if !setting_names().iter().any(|n| n == key) {
        return Err(ConfigError::UnknownKey(key.to_string()));
    }
    let bad = |detail: String| ConfigError::BadValue {
        key: key.to_string(),
        detail,
    };
    let mut root = serde_json::to_value(&*cfg).map_err(|e| bad(e.to_string()))?;
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut node = &mut root;
    for p in parents {
        node = node
            .as_object_mut()
            .ok_or_else(|| bad("not an object".into()))?
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    node.as_object_mut()
        .ok_or_else(|| bad("not an object".into()))?
        .insert(last.to_string(), value);
    *cfg = serde_json::from_value(root).map_err(|e| bad(e.to_string()))?;
    Ok(())
}
