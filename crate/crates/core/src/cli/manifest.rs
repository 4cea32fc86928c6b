use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use super::{input_err, run, Cli, CliError, Command, ReplayArgs};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written next to every command's outputs. Replaying `args` with one
/// worker reproduces the artifacts byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command line without the program name.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub workers: usize,
    pub artifacts: Vec<PathBuf>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(cli: &Cli, argv: &[String], config: serde_json::Value, artifacts: Vec<PathBuf>) -> Self {
        Self {
            command: cli.command.name().to_string(),
            args: argv.to_vec(),
            config,
            seed: cli.seed,
            workers: cli.workers,
            artifacts,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let path = out_dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

/// Re-parses the recorded arguments and runs them with the current
/// `--out-dir`.
pub fn replay(cli: &Cli, args: &ReplayArgs) -> Result<RunManifest, CliError> {
    let recorded = RunManifest::read(&args.manifest)?;
    let mut original =
        Cli::try_parse_from(std::iter::once("cutout".to_string()).chain(recorded.args.iter().cloned())).map_err(input_err)?;
    if matches!(original.command, Command::Replay(_)) {
        return Err(CliError::Input("a replay manifest cannot be replayed".into()));
    }
    original.out_dir = cli.out_dir.clone();
    run(&original, &recorded.args)
}
