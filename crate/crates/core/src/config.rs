//! TOML loading shared by schedule and scenario files.
//!
//! A file may start with `preset = "<name>"`; its remaining keys are laid
//! over that preset, descending into tables, so a file only needs the keys
//! it changes.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::ConfigError;

pub(crate) fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn overlay<T>(
    text: &str,
    preset: impl Fn(&str) -> Result<T, ConfigError>,
    default: impl FnOnce() -> T,
) -> Result<T, String>
where
    T: Serialize + DeserializeOwned,
{
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    let base = match table.remove("preset") {
        Some(toml::Value::String(name)) => preset(&name).map_err(|e| e.to_string())?,
        Some(_) => return Err("`preset` must be a string".into()),
        None => default(),
    };
    let mut merged = toml::Table::try_from(&base).map_err(|e| e.to_string())?;
    merge(&mut merged, table);
    merged
        .try_into()
        .map_err(|e: toml::de::Error| e.to_string())
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(inner)), toml::Value::Table(sub)) => merge(inner, sub),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Loads `path` as TOML over an optional preset.
pub(crate) fn load<T>(
    path: &Path,
    preset: impl Fn(&str) -> Result<T, ConfigError>,
    default: impl FnOnce() -> T,
) -> Result<T, ConfigError>
where
    T: Serialize + DeserializeOwned,
{
    let text = read(path)?;
    overlay(&text, preset, default).map_err(|message| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    })
}
