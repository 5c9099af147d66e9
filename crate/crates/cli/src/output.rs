use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::Failure;

/// Resolved run configuration, written at the top of every output.
#[derive(Debug, Clone, Serialize)]
pub(crate) struct Config {
    command: String,
    version: &'static str,
    seed: u64,
    inputs: BTreeMap<String, String>,
    params: BTreeMap<String, Value>,
}

impl Config {
    pub(crate) fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            inputs: BTreeMap::new(),
            params: BTreeMap::new(),
        }
    }

    pub(crate) fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.to_string(), path.display().to_string());
        self
    }

    pub(crate) fn param(mut self, name: &str, value: impl Serialize) -> Self {
        self.params.insert(name.to_string(), json!(value));
        self
    }
}

/// A file, or stdout when no path is given.
pub(crate) struct Out {
    path: Option<PathBuf>,
}

impl Out {
    pub(crate) fn new(path: Option<&Path>) -> Self {
        Self {
            path: path.map(Path::to_path_buf),
        }
    }

    fn write(&self, body: &str) -> Result<(), Failure> {
        match &self.path {
            Some(p) => fs::write(p, body).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
            None => {
                print!("{body}");
                Ok(())
            }
        }
    }

    /// `{"config": ..., "result": ...}`, pretty-printed.
    pub(crate) fn json(&self, config: &Config, result: Value) -> Result<(), Failure> {
        let doc = json!({ "config": config, "result": result });
        let mut body = serde_json::to_string_pretty(&doc).map_err(Failure::usage)?;
        body.push('\n');
        self.write(&body)
    }

    /// Text body preceded by a `# config: {...}` comment line.
    pub(crate) fn text(&self, config: &Config, body: &str) -> Result<(), Failure> {
        let header = serde_json::to_string(config).map_err(Failure::usage)?;
        self.write(&format!("# config: {header}\n{body}"))
    }
}
