use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use granular_core::diagnostics::MomentTable;
use granular_core::simulator::{write_convergence_csv, ConvergenceRecord};
use granular_core::RadialDensity;
use serde::Serialize;
use serde_json::Value;

use crate::checks::Check;
use crate::config::{ExperimentConfig, Scenario};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub version: String,
    /// SHA-256 of the materialized config.
    pub config_hash: String,
    pub seed: u64,
    /// `granular-bath-<version>-g<hash prefix>`.
    pub describe: String,
    pub workers: Option<usize>,
}

impl Provenance {
    pub fn new(config: &ExperimentConfig, workers: Option<usize>) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let config_hash = config.hash();
        Provenance {
            describe: format!("granular-bath-{version}-g{}", &config_hash[..12]),
            version,
            config_hash,
            seed: config.simulation.seed,
            workers,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    /// Per-run diagnostics.
    pub runs: Vec<Value>,
    /// Pass/fail table keyed by criterion number.
    pub checks: BTreeMap<u8, Check>,
    pub passed: bool,
    /// Labels of runs that reached `tEnd` without a steady state.
    pub non_converged: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    /// 0 pass, 2 a check failed, 3 a run did not converge.
    pub fn exit_code(&self) -> i32 {
        if !self.non_converged.is_empty() {
            3
        } else if !self.passed {
            2
        } else {
            0
        }
    }
}

/// Output directory with a record of everything written to it.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::output(path, std::io::Error::other(e))
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir.join("snapshots")).map_err(|e| CliError::output(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Record a file written elsewhere.
    pub fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn open(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::output(&path, e))?;
        self.written.push(path.clone());
        Ok((path, BufWriter::new(file)))
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let (path, mut out) = self.open(name)?;
        serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::output(&path, e.into()))?;
        out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| CliError::output(&path, e))
    }

    /// Moment tables of several runs in one file.
    pub fn write_moments(&mut self, tables: &[(String, &MomentTable)]) -> Result<()> {
        let (path, out) = self.open("moments.csv")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "alpha", "time", "n", "p", "value", "std_error"])
            .map_err(|e| csv_error(&path, e))?;
        for (label, t) in tables {
            let alpha = t.alpha.map(|a| a.to_string()).unwrap_or_default();
            for e in &t.entries {
                w.write_record([
                    label.clone(),
                    alpha.clone(),
                    t.time.to_string(),
                    t.n.to_string(),
                    e.p.to_string(),
                    e.value.to_string(),
                    e.std_error.to_string(),
                ])
                .map_err(|e| csv_error(&path, e))?;
            }
        }
        w.flush().map_err(|e| CliError::output(&path, e))
    }

    /// Shell densities of several runs: radius at the shell centre, value, error.
    pub fn write_densities(&mut self, densities: &[(String, &RadialDensity)]) -> Result<()> {
        let (path, out) = self.open("density.csv")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "radius", "value", "error"]).map_err(|e| csv_error(&path, e))?;
        for (label, d) in densities {
            for ((r, v), e) in d.centres().iter().zip(&d.values).zip(&d.errors) {
                w.write_record([label.clone(), r.to_string(), v.to_string(), e.to_string()])
                    .map_err(|e| csv_error(&path, e))?;
            }
        }
        w.flush().map_err(|e| CliError::output(&path, e))
    }

    pub fn write_convergence(&mut self, label: &str, log: &[ConvergenceRecord]) -> Result<()> {
        let (path, out) = self.open(&format!("convergence-{label}.csv"))?;
        write_convergence_csv(log, out).map_err(|e| CliError::output(&path, std::io::Error::other(e)))
    }
}
