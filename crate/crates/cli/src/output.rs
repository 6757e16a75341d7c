//! Output files: CSV with one comment line, pretty JSON, and the run
//! manifest that allows a byte-identical re-run.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::commands::{Artifact, Format};
use crate::params::{usage, Params};

pub const OUT_DIR_ENV: &str = "MESOAMP_OUT_DIR";
pub const MANIFEST_SCHEMA: &str = "mesoamp-run-manifest/1";

pub fn default_path(command: &str, format: Format) -> PathBuf {
    let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("{command}.{}", format.extension()))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

pub fn write_artifact(a: &Artifact, format: Format, path: &Path) -> Result<()> {
    create_parent(path)?;
    match format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&a.json)?;
            text.push('\n');
            std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        Format::Csv => {
            let t = a.table.as_ref().ok_or_else(|| usage("this command has no CSV form; use --format json"))?;
            let mut file = std::fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
            writeln!(file, "# {}", t.comment)?;
            let mut w = csv::Writer::from_writer(file);
            w.write_record(&t.headers)?;
            for row in &t.rows {
                w.write_record(row)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    /// Every parameter after defaults, config file and overrides.
    pub params: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub format: Format,
    pub output: String,
    pub library_version: String,
    pub cli_version: String,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub fn new(command: &str, params: &Params, seed: Option<u64>, format: Format, output: &Path, wall: f64) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            params: params.values().clone(),
            seed,
            format,
            output: output.display().to_string(),
            library_version: mesoamp::VERSION.into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_seconds: wall,
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write_manifest(m: &Manifest, out: &Path) -> Result<PathBuf> {
    let path = manifest_path(out);
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read manifest {}: {e}", path.display())))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| usage(format!("{} is not a run manifest: {e}", path.display())))?;
    if m.schema != MANIFEST_SCHEMA {
        return Err(usage(format!("unsupported manifest schema `{}`", m.schema)));
    }
    Ok(m)
}
