//! Run bookkeeping: every file read or written is hashed, and the resolved
//! configuration is echoed into `manifest.json` next to the outputs.
//!
//! The manifest deliberately omits wall-clock time and the output directory
//! so that a replay produces an identical manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::args::{Command, Global};
use crate::exit::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub global: Global,
    pub command: Command,
    pub resolved: Map<String, Value>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Manifest> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("malformed manifest {}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects what a command read, wrote and decided.
pub struct Run {
    pub out: PathBuf,
    pub resolved: Map<String, Value>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub warnings: Vec<String>,
}

impl Run {
    pub fn new(out: PathBuf) -> CliResult<Run> {
        fs::create_dir_all(&out)
            .map_err(|e| CliError::internal(format!("cannot create output directory {}: {e}", out.display())))?;
        Ok(Run {
            out,
            resolved: Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        if !path.exists() {
            return Err(bankwatch_core::Error::MissingFile(path.to_path_buf()).into());
        }
        let bytes = fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        let digest = FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        };
        if !self.inputs.contains(&digest) {
            self.inputs.push(digest);
        }
        Ok(bytes)
    }

    /// Writes `name` under the output directory and records its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))?;
        let digest = FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        };
        match self.outputs.iter_mut().find(|d| d.path == name) {
            Some(d) => *d = digest,
            None => self.outputs.push(digest),
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn resolve(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("resolved config serializes");
        self.resolved.insert(key.to_string(), value);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn finish(self, global: &Global, command: &Command, outcome: &CliResult<()>) -> CliResult<Manifest> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            global: global.clone(),
            command: command.clone(),
            resolved: self.resolved,
            inputs: self.inputs,
            outputs: self.outputs,
            warnings: self.warnings,
            exit_code: outcome.as_ref().map_or_else(|e| e.kind.code(), |_| 0),
            error: outcome.as_ref().err().map(|e| e.message.clone()),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::internal(e.to_string()))?;
        text.push('\n');
        let path = self.out.join(MANIFEST);
        fs::write(&path, text).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}
