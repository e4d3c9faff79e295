//! Versioned canonical JSON files. Keys come out sorted and floats use the
//! shortest round-trip form, so equal values give byte-equal files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const FORMAT: u64 = 1;

/// Serializes `value` (which must be a JSON object) with a top-level
/// `"format"` field.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::Format("top-level value must be an object".into()))?;
    obj.insert("format".into(), FORMAT.into());
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::Format("top-level value must be an object".into()))?;
    match obj.remove("format").and_then(|f| f.as_u64()) {
        Some(FORMAT) => {}
        other => return Err(Error::Format(format!("unsupported format version {other:?}, expected {FORMAT}"))),
    }
    serde_json::from_value(v).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_canonical_json(value)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    from_json(&text)
}
