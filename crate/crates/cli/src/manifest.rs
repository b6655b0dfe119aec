//! Run manifest: what ran, with which configuration, producing which files.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::Config;

/// Written as `manifest.json` next to the data outputs. The embedded
/// configuration is the fully resolved one (file plus flag overrides), so a
/// manifest is a complete recipe for reproducing the run; the echoed
/// `config_echo.toml` holds the same thing in runnable form. Timestamps are
/// the only bytes that vary between identical runs.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub started_at_epoch_ms: u64,
    pub finished_at_epoch_ms: u64,
    pub config: &'a Config,
    /// Every file the run wrote, relative to the output directory.
    pub outputs: &'a [String],
    /// Command-specific results (divergence flag, totals, pass/fail).
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

pub fn epoch_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'a str, config: &'a Config, started_at_epoch_ms: u64) -> Self {
        RunManifest {
            tool: "natgrad",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: config.seed,
            started_at_epoch_ms,
            finished_at_epoch_ms: epoch_ms(),
            config,
            outputs: &[],
            extra: Map::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
