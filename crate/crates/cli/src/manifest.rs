use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use droop_incentive::Result;
use serde::Serialize;

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub overrides: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub exit_status: u8,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            overrides: BTreeMap::new(),
            outputs: Vec::new(),
            exit_status: 0,
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.overrides.insert(key.to_string(), value.to_string());
        self
    }

    /// Writes `contents` to `dir/name` and records the path.
    pub fn emit(&mut self, dir: &Path, name: &str, contents: &str) -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn finish(mut self, dir: &Path, exit_status: u8) -> Result<u8> {
        self.exit_status = exit_status;
        let text = serde_json::to_string_pretty(&self)? + "\n";
        fs::write(dir.join("manifest.json"), text)?;
        Ok(exit_status)
    }
}
