//! Run manifests: every command records what it read, what it will write,
//! and the full configuration before any output is produced.

use rankscope::error::Result;
use rankscope::io::write_atomic;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        let mut h = Sha256::new();
        h.update(&bytes);
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(h.finalize()),
        });
        Ok(())
    }

    /// Outputs are recorded by file name: they always live next to the
    /// manifest, so the record stays stable if the directory moves.
    pub fn add_output(&mut self, path: &Path) {
        self.outputs
            .push(path.file_name().expect("output has a name").to_string_lossy().into_owned());
    }

    pub fn warn(&mut self, msg: String) {
        self.warnings.push(msg);
    }

    /// Serialize and write the manifest; called before outputs are written.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        write_atomic(&out_dir.join("manifest.json"), &bytes)
    }
}
