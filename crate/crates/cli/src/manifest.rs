use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::io::CSV_SCHEMA_VERSION;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    /// Header row of the file.
    pub columns: Vec<String>,
}

/// Everything needed to rerun a command and get the same CSV bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub csv_schema_version: u32,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Directory the command ran in; relative paths in `argv` resolve against it.
    pub cwd: PathBuf,
    /// Every option after defaults and derived values were filled in.
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    pub outputs: Vec<OutputFile>,
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
}

/// Collects manifest fields while a command runs.
pub struct ManifestBuilder {
    command: String,
    argv: Vec<String>,
    started: SystemTime,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, argv: &[String]) -> Self {
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn finish(
        self,
        config: serde_json::Value,
        master_seed: Option<u64>,
        outputs: Vec<OutputFile>,
    ) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            csv_schema_version: CSV_SCHEMA_VERSION,
            command: self.command,
            argv: self.argv,
            cwd: std::env::current_dir().unwrap_or_default(),
            config,
            master_seed,
            outputs,
            started_unix_seconds: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
        }
    }
}

pub fn output(path: &Path, columns: &[&str]) -> OutputFile {
    OutputFile {
        path: path.to_path_buf(),
        columns: columns.iter().map(|c| c.to_string()).collect(),
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }
}

/// `<out>.manifest.json` next to a single output file.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}
