//! Report files: JSON documents, CSV tables and the run manifest.
//!
//! JSON reports are wrapped as `{"manifest": <file name>, "report": ...}` so
//! each one points back at the manifest written beside it. Nothing here
//! records times, hosts or thread counts, so equal inputs give equal bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::KernelTrajectory;
use crate::simulate::{EntryKind, TheoryComparison};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Records how a set of outputs was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Fully resolved configuration of the run.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Output file names, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            subcommand: subcommand.to_owned(),
            config: serde_json::to_value(config).map_err(|source| Error::Json {
                context: format!("{subcommand} configuration"),
                source,
            })?,
            seed,
            tool_version: TOOL_VERSION.to_owned(),
            outputs: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    manifest: &'a str,
    report: &'a T,
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_error(path, source),
        other => Error::invalid(format!("{}: CSV error {other:?}", path.display())),
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T, context: &str) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: context.to_owned(),
        source,
    })?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value, &path.display().to_string())?;
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

pub fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Collects outputs for one directory and writes the manifest last.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputDir {
    pub fn create(dir: impl Into<PathBuf>, manifest: RunManifest) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self { dir, manifest })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn register(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_owned());
        self.dir.join(name)
    }

    /// Writes `report` wrapped with a reference to the manifest.
    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> Result<PathBuf> {
        let path = self.register(name);
        write_json(&path, &Envelope { manifest: MANIFEST_FILE, report })?;
        Ok(path)
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
        let path = self.register(name);
        write_csv(&path, rows)?;
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.dir.join(MANIFEST_FILE);
        write_json(&path, &self.manifest)?;
        Ok(path)
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CurveRow {
    pub k_in: f64,
    pub k_out: f64,
    pub diagonal: f64,
}

pub fn curve_rows(curve: &[(f64, f64)]) -> impl Iterator<Item = CurveRow> + '_ {
    curve.iter().map(|&(k_in, k_out)| CurveRow {
        k_in,
        k_out,
        diagonal: k_in,
    })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryRow {
    pub layer: usize,
    pub k: f64,
}

pub fn trajectory_rows(t: &KernelTrajectory) -> impl Iterator<Item = TrajectoryRow> + '_ {
    t.rows().map(|(layer, k)| TrajectoryRow { layer, k })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CovarianceRow {
    pub layer: usize,
    pub alpha: usize,
    pub beta: usize,
    pub kind: EntryKind,
    pub empirical: f64,
    pub stderr: f64,
    pub theory: f64,
    pub band: f64,
    pub z_score: f64,
    pub within_band: bool,
}

pub fn covariance_rows(c: &TheoryComparison) -> impl Iterator<Item = CovarianceRow> + '_ {
    c.entries.iter().map(|e| CovarianceRow {
        layer: e.layer,
        alpha: e.alpha,
        beta: e.beta,
        kind: e.kind,
        empirical: e.empirical,
        stderr: e.stderr,
        theory: e.theory,
        band: e.band,
        z_score: e.z_score,
        within_band: e.within_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_dir_writes_manifest_listing_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = RunManifest::new("flow", &serde_json::json!({"k0": 0.5}), None).unwrap();
        let mut out = OutputDir::create(tmp.path().join("run"), manifest).unwrap();
        out.json("report.json", &serde_json::json!({"x": 1.5})).unwrap();
        out.csv("curve.csv", curve_rows(&[(0.0, 0.25), (1.0, 1.0)])).unwrap();
        let path = out.finish().unwrap();
        let m = RunManifest::load(&path).unwrap();
        assert_eq!(m.outputs, vec!["report.json", "curve.csv"]);
        assert_eq!(m.tool_version, TOOL_VERSION);
        let csv = fs::read_to_string(tmp.path().join("run/curve.csv")).unwrap();
        assert_eq!(csv, "k_in,k_out,diagonal\n0.0,0.25,0.0\n1.0,1.0,1.0\n");
        let report: serde_json::Value = read_json(&tmp.path().join("run/report.json")).unwrap();
        assert_eq!(report["manifest"], MANIFEST_FILE);
        assert_eq!(report["report"]["x"], 1.5);
    }

    #[test]
    fn missing_file_error_names_path() {
        let err = read_json::<RunManifest>(Path::new("/nonexistent/m.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/m.json"));
    }
}
