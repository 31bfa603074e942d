//! JSON configs, atomic file output and the seed override.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Environment variable that replaces every configured seed.
pub const SEED_ENV: &str = "RTL_SEED";

/// Parses a JSON config; syntax and schema errors carry the file and line.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text, &path.display().to_string())
}

/// Parses JSON text; `origin` names the source in errors.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Config {
        path: origin.to_string(),
        line: Some(e.line()),
        message: e.to_string(),
    })
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so `path` is either untouched or complete. Missing parent
/// directories are created.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    ensure_dir(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Pretty-printed JSON written atomically.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))
    })
}

/// Creates `dir` and its parents.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Opens a file for reading.
pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

/// The seed from [`SEED_ENV`], if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::config(SEED_ENV, format!("expected an unsigned integer, got {v:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::config(SEED_ENV, e.to_string())),
    }
}

/// Reads a JSON object and overlays its fields on `defaults`; keys that
/// `defaults` does not serialize are rejected.
pub fn read_json_over<T: Serialize + DeserializeOwned>(path: &Path, defaults: &T) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let origin = path.display().to_string();
    let user: serde_json::Value = parse_json(&text, &origin)?;
    overlay(defaults, user, &origin)
}

/// Overlays the fields of `user`, which must be an object, on `defaults`.
/// Nested objects merge field by field.
pub fn overlay<T: Serialize + DeserializeOwned>(defaults: &T, user: serde_json::Value, origin: &str) -> Result<T> {
    let mut base = serde_json::to_value(defaults).map_err(|e| CliError::config(origin, e.to_string()))?;
    if !(base.is_object() && user.is_object()) {
        return Err(CliError::config(origin, "expected a JSON object"));
    }
    merge(&mut base, user, "", origin)?;
    serde_json::from_value(base).map_err(|e| CliError::config(origin, e.to_string()))
}

fn merge(base: &mut serde_json::Value, user: serde_json::Value, path: &str, origin: &str) -> Result<()> {
    match (base, user) {
        (serde_json::Value::Object(base_map), serde_json::Value::Object(fields)) => {
            for (k, v) in fields {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match base_map.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key, origin)?,
                    None => return Err(CliError::config(origin, format!("unknown field {key:?}"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}
