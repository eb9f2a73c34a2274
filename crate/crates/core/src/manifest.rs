//! Run manifests: the full config, its hash, input checksums and the metrics
//! each step produced, enough to replay an experiment from the file alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::{run_experiment, RunConfig};
use crate::training::ExperimentResult;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileChecksum {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(FileChecksum {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub config: String,
    pub fold: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub best_epoch: usize,
}

pub fn metric_rows(results: &[ExperimentResult]) -> Vec<MetricRow> {
    results
        .iter()
        .flat_map(|r| {
            r.folds.iter().map(|f| MetricRow {
                config: r.name.clone(),
                fold: f.fold,
                seed: f.seed,
                accuracy: f.test_accuracy,
                macro_f1: f.test_macro_f1,
                best_epoch: f.best_epoch,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub command: String,
    pub config_sha256: String,
    pub run: RunConfig,
    pub inputs: Vec<FileChecksum>,
    pub outputs: Vec<FileChecksum>,
    #[serde(default)]
    pub metrics: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub steps: Vec<Step>,
}

pub fn config_hash(run: &RunConfig) -> String {
    let json = serde_json::to_string(run).expect("run config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

impl Manifest {
    pub fn new() -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            steps: Vec::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&raw)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("manifest version {} is not supported", m.version)));
        }
        Ok(m)
    }

    /// Loads `path` if present, else starts a new manifest.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        if path.as_ref().exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn record(
        &mut self,
        command: &str,
        run: &RunConfig,
        outputs: &[PathBuf],
        metrics: Vec<MetricRow>,
    ) -> Result<()> {
        let inputs = run
            .input_files()
            .iter()
            .map(FileChecksum::of)
            .collect::<Result<_>>()?;
        let outputs = outputs.iter().map(FileChecksum::of).collect::<Result<_>>()?;
        self.steps.push(Step {
            command: command.to_string(),
            config_sha256: config_hash(run),
            run: run.clone(),
            inputs,
            outputs,
            metrics,
        });
        Ok(())
    }

    pub fn last(&self, command: &str) -> Option<&Step> {
        self.steps.iter().rev().find(|s| s.command == command)
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of re-running a recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub results: Vec<ExperimentResult>,
    /// Rows whose metrics differ from the record in any bit.
    pub mismatches: Vec<String>,
}

impl Replay {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn same_bits(a: &MetricRow, b: &MetricRow) -> bool {
    a.config == b.config
        && a.fold == b.fold
        && a.seed == b.seed
        && a.best_epoch == b.best_epoch
        && a.accuracy.to_bits() == b.accuracy.to_bits()
        && a.macro_f1.to_bits() == b.macro_f1.to_bits()
}

/// Verifies input checksums, re-runs the step's experiment and compares every
/// metric bit for bit.
pub fn replay(step: &Step) -> Result<Replay> {
    if config_hash(&step.run) != step.config_sha256 {
        return Err(Error::Validation("recorded config does not match its hash".into()));
    }
    for input in &step.inputs {
        let now = FileChecksum::of(&input.path)?;
        if now.sha256 != input.sha256 {
            return Err(Error::Validation(format!(
                "input {} changed since the run",
                input.path.display()
            )));
        }
    }
    let results = run_experiment(&step.run)?;
    let rows = metric_rows(&results);
    let mut mismatches = Vec::new();
    if rows.len() != step.metrics.len() {
        mismatches.push(format!(
            "{} metric rows recorded, {} reproduced",
            step.metrics.len(),
            rows.len()
        ));
    }
    for (old, new) in step.metrics.iter().zip(&rows) {
        if !same_bits(old, new) {
            mismatches.push(format!("{} fold {}", old.config, old.fold));
        }
    }
    Ok(Replay {
        results,
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_detects_change() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        std::fs::write(&p, "abc").unwrap();
        let a = FileChecksum::of(&p).unwrap();
        assert_eq!(
            a.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        std::fs::write(&p, "abd").unwrap();
        assert_ne!(FileChecksum::of(&p).unwrap(), a);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = Manifest::open(&path).unwrap();
        m.record("synth", &RunConfig::default(), &[], Vec::new()).unwrap();
        m.save(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.last("synth").unwrap().config_sha256, config_hash(&RunConfig::default()));
    }
}
