use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::args::Command;

pub const FILE_NAME: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to repeat a run. Holds no timestamps so that a rerun
/// writes the same bytes.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub rng: String,
    #[serde(flatten)]
    pub command: Command,
    pub outputs: Vec<String>,
    pub status: serde_json::Value,
}

impl Manifest {
    pub fn new(command: Command, outputs: Vec<String>, status: serde_json::Value) -> Self {
        Self {
            tool: "dynconn".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: SCHEMA_VERSION,
            rng: dynconn::simgen::RNG_ALGORITHM.into(),
            command,
            outputs,
            status,
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            m.schema_version == SCHEMA_VERSION,
            "{}: manifest schema {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            m.schema_version
        );
        Ok(m)
    }
}
