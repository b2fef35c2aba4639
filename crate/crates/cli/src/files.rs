//! Config loading and output writing.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::failure::{CliResult, Failure};

/// Parse a JSON config; schema violations name the offending field path.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    from_json(&text).map_err(|m| Failure::config(format!("{}: {m}", path.display())))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.into_inner().to_string()
        } else {
            format!("at `{path}`: {}", e.into_inner())
        }
    })
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    statt::io::write_atomic(path, text.as_bytes()).map_err(Failure::from)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serialises");
    text.push('\n');
    write_text(path, &text)
}
