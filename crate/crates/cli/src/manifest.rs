use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::Cli;

/// Provenance written next to every output. Everything except `wall_clock`
/// is a function of the command line.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub subcommand: &'static str,
    pub argv: &'a [String],
    pub flags: &'a Cli,
    pub seed: u64,
    pub version: &'static str,
    pub outputs: Vec<PathBuf>,
    pub summary: &'a Value,
    pub wall_clock: WallClock,
}

#[derive(Debug, Serialize)]
pub struct WallClock {
    pub started_unix: f64,
    pub elapsed_secs: f64,
}

impl<'a> RunManifest<'a> {
    pub fn new(
        cli: &'a Cli,
        argv: &'a [String],
        outputs: Vec<PathBuf>,
        summary: &'a Value,
        started: Instant,
    ) -> Self {
        let elapsed = started.elapsed();
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .saturating_sub(elapsed);
        RunManifest {
            subcommand: cli.command.name(),
            argv,
            flags: cli,
            seed: cli.seed,
            version: env!("CARGO_PKG_VERSION"),
            outputs,
            summary,
            wall_clock: WallClock {
                started_unix: now.as_secs_f64(),
                elapsed_secs: elapsed.as_secs_f64(),
            },
        }
    }
}

pub fn manifest_path(prefix: &Path) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
