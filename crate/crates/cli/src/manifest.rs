//! Output files and the manifest that lists them.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::Failure;

/// Record of one run: enough to repeat it and find everything it wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: &'static str,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub outputs: Vec<String>,
}

/// Collects files under the output directory, then writes `manifest.json`.
pub struct OutputDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputDir {
    pub fn create(dir: &Path, argv: &[String], config: Option<&Path>, seed: Option<u64>) -> Result<OutputDir, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: argv.to_vec(),
                config_path: config.map(|p| p.display().to_string()),
                seed,
                tool_version: env!("CARGO_PKG_VERSION"),
                timestamp,
                outputs: Vec::new(),
            },
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Engine(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_vec_pretty(value).map_err(|e| Failure::Engine(e.to_string()))?;
        text.push(b'\n');
        self.write(name, &text)
    }

    pub fn finish(self) -> Result<(), Failure> {
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_vec_pretty(&self.manifest).map_err(|e| Failure::Engine(e.to_string()))?;
        text.push(b'\n');
        fs::write(&path, text).map_err(|e| Failure::Engine(format!("cannot write {}: {e}", path.display())))
    }
}
