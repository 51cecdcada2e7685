//! JSON-line events on stdout and output-directory handling.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub fn event(name: &str, fields: Value) {
    let mut m = Map::new();
    m.insert("event".into(), Value::String(name.into()));
    if let Value::Object(o) = fields {
        m.extend(o);
    }
    println!("{}", Value::Object(m));
}

/// Creates the configured output directory.
pub fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.path("out")?;
    create_dir(&dir)?;
    Ok(dir)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}
