use std::fs;
use std::path::Path;
use std::time::Instant;

use lambdahat::experiments::{replicate_seed, ExperimentConfig, StudyOutput};
use serde::Serialize;

/// Run metadata written next to the study outputs. The only file whose
/// contents vary between identical runs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: ExperimentConfig,
    /// Dataset seed of every replicate.
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    /// Requested worker threads (0 = all cores).
    pub jobs: usize,
    pub replicates_excluded: usize,
    pub timings: Timings,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub study_seconds: f64,
    pub total_seconds: f64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        cfg: &ExperimentConfig,
        output: &StudyOutput,
        files: Vec<String>,
        jobs: usize,
        study_seconds: f64,
        start: Instant,
    ) -> Self {
        let replicates = match output {
            StudyOutput::OutlierStudy(_) | StudyOutput::OracleCheck(_) => 1,
            _ => cfg.replicates,
        };
        let replicates_excluded = match output {
            StudyOutput::Estimate(s) | StudyOutput::ConsistencyCurve { summary: s, .. } => {
                s.failures.len()
            }
            StudyOutput::BetaGapSweep(r) => r.failures.len(),
            _ => 0,
        };
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: cfg.clone(),
            seeds: (0..replicates).map(|r| replicate_seed(cfg.base_seed, r)).collect(),
            files,
            jobs,
            replicates_excluded,
            timings: Timings {
                study_seconds,
                total_seconds: start.elapsed().as_secs_f64(),
            },
        }
    }

    /// Writes `manifest.json` after checking that every listed file exists.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        for f in self.files.iter().filter(|f| *f != "manifest.json") {
            if !dir.join(f).is_file() {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("listed output {f} was not written"),
                ));
            }
        }
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(dir.join("manifest.json"), text)
    }
}
