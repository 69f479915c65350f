//! Run manifests: one `run_manifest.txt` beside every command's outputs,
//! recording the command, the fully resolved config, seeds, paths, the code
//! version, and wall-clock timings.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use optistate_sim::kv;

use crate::error::CliError;

pub struct ManifestBuilder {
    entries: BTreeMap<String, String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert("command".to_string(), command.to_string());
        entries.insert(
            "code_version".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        );
        Self {
            entries,
            started: Instant::now(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn set_config(&mut self, config: &BTreeMap<String, String>) {
        for (k, v) in config {
            self.entries.insert(format!("config.{k}"), v.clone());
        }
    }

    /// Write `<dir>/run_manifest.txt`, recording elapsed wall-clock time.
    pub fn write(mut self, dir: &Path) -> Result<(), CliError> {
        let elapsed = self.started.elapsed().as_secs_f64();
        self.entries
            .insert("wall_clock_s".to_string(), format!("{elapsed:.3}"));
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("run_manifest.txt"), kv::emit(&self.entries))?;
        Ok(())
    }
}
