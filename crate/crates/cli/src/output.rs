//! CSV tables and JSON files, each paired with a provenance sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const TOOL: &str = "cqed";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Twelve significant digits in scientific notation; `NaN` for missing values.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.11e}")
    }
}

/// Where a command writes: `<dir>/<stem>.<ext>`.
#[derive(Clone, Debug)]
pub struct OutputTarget {
    pub dir: PathBuf,
    pub stem: String,
}

impl OutputTarget {
    /// `--out` wins over `[output].dir`; the stem defaults to the command name.
    pub fn new(cli_out: Option<&Path>, config: &RunConfig, command: &str) -> Self {
        let section = config.output.clone().unwrap_or_default();
        let dir = cli_out
            .map(Path::to_path_buf)
            .or(section.dir.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        OutputTarget {
            dir,
            stem: section.stem.unwrap_or_else(|| command.to_string()),
        }
    }

    pub fn path(&self, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", self.stem))
    }

    fn ensure_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|source| CliError::Io {
            path: self.dir.clone(),
            source,
        })
    }

    /// Writes `<stem>.csv` and its sidecar; returns the CSV path.
    pub fn write_csv(&self, header: &[String], rows: &[Vec<String>], meta: &Provenance) -> Result<PathBuf> {
        self.ensure_dir()?;
        let path = self.path("csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.write_sidecar(meta)?;
        Ok(path)
    }

    /// Writes `<stem>.json` and its sidecar; returns the JSON path.
    pub fn write_json<T: Serialize>(&self, value: &T, meta: &Provenance) -> Result<PathBuf> {
        self.ensure_dir()?;
        let path = self.path("json");
        write_pretty(&path, value)?;
        self.write_sidecar(meta)?;
        Ok(path)
    }

    fn write_sidecar(&self, meta: &Provenance) -> Result<()> {
        write_pretty(&self.path("meta.json"), meta)
    }
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything needed to rerun a command: the input config as given, the
/// values fixed by calibration, and the tool version.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seedless: bool,
    pub config: RunConfig,
    pub resolved: serde_json::Value,
}

impl Provenance {
    pub fn new(command: &str, seedless: bool, config: &RunConfig, resolved: serde_json::Value) -> Self {
        Provenance {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            seedless,
            config: config.clone(),
            resolved,
        }
    }
}
