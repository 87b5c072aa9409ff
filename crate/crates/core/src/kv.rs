//! Flat `key = value` text used by config, scaler, metrics and checkpoint files.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;

use crate::error::{CaretsError, Result};

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CaretsError::Parse {
            row: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CaretsError::Parse {
                row: i + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(map)
}
