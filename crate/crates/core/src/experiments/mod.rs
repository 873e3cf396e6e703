//! Replicate studies: bias/variance/MSE tables, variance decomposition,
//! sample-size curves, the beta-gap sweep, the outlier study and the
//! sampler-versus-quadrature check.
//!
//! Every study is a pure function of its [`ExperimentConfig`]. Replicates run
//! on a bounded rayon pool and are collected in replicate order, so the
//! number of worker threads never changes the output.

mod oracle_check;
mod outlier;
pub mod output;
mod summary;
mod sweep;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::estimators::EstimatorSettings;
use crate::models::{ModelSpec, TrueDistribution};
use crate::sampler::McmcConfig;

pub use oracle_check::{oracle_check, OracleCheckReport, OracleComparison};
pub use outlier::{outlier_study, OutlierPoint, OutlierResult};
pub use summary::{
    consistency_curve, run_replicates, summarize, variance_decomposition, ConsistencyPoint,
    DecompositionRow, EstimatorColumn, EstimatorStats, ExperimentSummary, ReplicateFailure,
    SizeSummary,
};
pub use sweep::{beta_gap_sweep, SweepPoint, SweepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Estimate,
    ConsistencyCurve,
    BetaGapSweep,
    OutlierStudy,
    OracleCheck,
}

impl StudyKind {
    pub const ALL: [StudyKind; 5] = [
        StudyKind::Estimate,
        StudyKind::ConsistencyCurve,
        StudyKind::BetaGapSweep,
        StudyKind::OutlierStudy,
        StudyKind::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Estimate => "estimate",
            StudyKind::ConsistencyCurve => "consistency-curve",
            StudyKind::BetaGapSweep => "beta-gap-sweep",
            StudyKind::OutlierStudy => "outlier-study",
            StudyKind::OracleCheck => "oracle-check",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownId {
                id: s.to_string(),
                reason: format!(
                    "unknown study kind; expected one of {}",
                    Self::ALL.map(|k| k.name()).join(", ")
                ),
            })
    }
}

/// Estimator families, used to select output columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "lambda_W")]
    Watanabe,
    #[serde(rename = "lambda_I")]
    Imai,
    #[serde(rename = "lambda_T")]
    Empirical,
}

/// A study description. In JSON every field except `study` is optional and
/// defaults to the study's desk-scale setting (see
/// [`ExperimentConfig::defaults_for`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: StudyKind,
    pub model: ModelSpec,
    pub truth: TrueDistribution,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub beta0s: Vec<f64>,
    pub pairs: Vec<(f64, f64)>,
    pub mcmc: McmcConfig,
    pub base_seed: u64,
    /// Estimator columns to report; all three when empty.
    pub estimators: Vec<EstimatorKind>,
    /// Beta-gap sweep: `beta2 - beta1` values.
    pub gaps: Vec<f64>,
    /// Outlier study: total log-likelihood shifts.
    pub deltas: Vec<f64>,
    /// Outlier study: number of injected draws.
    pub outlier_count: usize,
    /// Oracle check: chain-bootstrap resamples.
    pub bootstrap_resamples: usize,
}

const KEYS: [&str; 14] = [
    "study",
    "model",
    "truth",
    "sample_sizes",
    "replicates",
    "beta0s",
    "pairs",
    "mcmc",
    "base_seed",
    "estimators",
    "gaps",
    "deltas",
    "outlier_count",
    "bootstrap_resamples",
];

const MCMC_KEYS: [&str; 7] = [
    "total_iters",
    "burn_in",
    "thin",
    "chains",
    "init_scale",
    "target_accept",
    "seed",
];

impl ExperimentConfig {
    pub fn defaults_for(study: StudyKind) -> Self {
        let settings = EstimatorSettings::default();
        let mut cfg = ExperimentConfig {
            study,
            model: ModelSpec::poisson_mixture(2).expect("valid component count"),
            truth: TrueDistribution::Poisson { rate: 3.0 },
            sample_sizes: vec![750],
            replicates: 50,
            beta0s: settings.beta0s,
            pairs: settings.pairs,
            mcmc: McmcConfig::default(),
            base_seed: 1,
            estimators: Vec::new(),
            gaps: vec![0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 20.0, 150.0],
            deltas: vec![0.0, 25.0, 50.0, 100.0, 200.0, 400.0, 800.0],
            outlier_count: 50,
            bootstrap_resamples: 500,
        };
        match study {
            StudyKind::Estimate | StudyKind::BetaGapSweep => {
                // The tempered mixture posterior mixes slowly; 4000 sweeps
                // leave a visible downward bias in every estimator.
                cfg.mcmc.total_iters = 20_000;
                cfg.mcmc.burn_in = 10_000;
            }
            StudyKind::ConsistencyCurve => {
                cfg.model = ModelSpec::normal_meanvar();
                cfg.truth = TrueDistribution::Normal { mean: 0.0, sd: 1.0 };
                cfg.sample_sizes = vec![200, 500, 1000];
            }
            StudyKind::OutlierStudy => {
                cfg.model = ModelSpec::gaussian_mixture(4).expect("valid component count");
                cfg.truth = TrueDistribution::Normal { mean: 0.0, sd: 1.0 };
                cfg.sample_sizes = vec![1500];
                cfg.replicates = 1;
            }
            StudyKind::OracleCheck => {
                cfg.model = ModelSpec::example1_uniform_normal();
                cfg.truth = TrueDistribution::Normal { mean: 0.0, sd: 1.0 };
                cfg.sample_sizes = vec![500];
                cfg.replicates = 1;
                cfg.beta0s = vec![1.0, 5.0];
                cfg.pairs = vec![(1.0, 5.0)];
                cfg.mcmc.chains = 16;
            }
        }
        cfg
    }

    /// Parses a JSON config, overlaying it on the study's defaults. Every
    /// unknown key (top level and inside `mcmc`) is reported at once.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("malformed JSON: {e}")))?;
        let Value::Object(obj) = value else {
            return Err(Error::InvalidConfig("config must be a JSON object".into()));
        };
        let mut unknown: Vec<String> = obj
            .keys()
            .filter(|k| !KEYS.contains(&k.as_str()))
            .cloned()
            .collect();
        if let Some(Value::Object(m)) = obj.get("mcmc") {
            unknown.extend(
                m.keys()
                    .filter(|k| !MCMC_KEYS.contains(&k.as_str()))
                    .map(|k| format!("mcmc.{k}")),
            );
        }
        if !unknown.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "unknown config keys: {}",
                unknown.join(", ")
            )));
        }
        let study = match obj.get("study") {
            Some(Value::String(s)) => StudyKind::parse(s)
                .map_err(|_| Error::InvalidConfig(format!("unknown study kind `{s}`")))?,
            Some(_) => return Err(Error::InvalidConfig("`study` must be a string".into())),
            None => return Err(Error::InvalidConfig("missing key: study".into())),
        };
        let mut base = match serde_json::to_value(Self::defaults_for(study))? {
            Value::Object(m) => m,
            _ => unreachable!("config serialises to an object"),
        };
        overlay(&mut base, obj);
        let cfg: Self = serde_json::from_value(Value::Object(base))
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            beta0s: self.beta0s.clone(),
            pairs: self.pairs.clone(),
        }
    }

    /// Selected estimator families, all three when none are listed.
    pub fn estimator_kinds(&self) -> Vec<EstimatorKind> {
        if self.estimators.is_empty() {
            vec![EstimatorKind::Watanabe, EstimatorKind::Imai, EstimatorKind::Empirical]
        } else {
            let mut v = self.estimators.clone();
            v.sort();
            v.dedup();
            v
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.sample_sizes.is_empty() {
            return bad("sample_sizes must not be empty".into());
        }
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < 2) {
            return Err(Error::SampleSizeTooSmall(n));
        }
        if self.model.support() != self.truth.support() {
            return bad(format!(
                "model {} and truth {} live on different supports",
                self.model,
                self.truth.id()
            ));
        }
        self.mcmc.validate()?;
        self.settings().validate()?;
        match self.study {
            StudyKind::Estimate => {}
            StudyKind::ConsistencyCurve => {
                if self.sample_sizes.len() < 2 {
                    return bad("consistency-curve needs at least two sample sizes".into());
                }
            }
            StudyKind::BetaGapSweep => {
                if self.gaps.is_empty() || self.gaps.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
                    return bad("gaps must be a non-empty list of positive numbers".into());
                }
            }
            StudyKind::OutlierStudy => {
                if self.deltas.is_empty()
                    || self.deltas.iter().any(|&d| !(d >= 0.0 && d.is_finite()))
                    || self.deltas.windows(2).any(|w| w[1] <= w[0])
                {
                    return bad("deltas must be non-negative and strictly increasing".into());
                }
                if self.outlier_count == 0 {
                    return bad("outlier_count must be >= 1".into());
                }
            }
            StudyKind::OracleCheck => {
                if self.model.dim() > 2 {
                    return bad(format!(
                        "oracle-check needs a model with at most 2 parameters, {} has {}",
                        self.model,
                        self.model.dim()
                    ));
                }
                if self.bootstrap_resamples < 2 {
                    return bad("bootstrap_resamples must be >= 2".into());
                }
                if self.mcmc.chains < 2 {
                    return bad("oracle-check needs at least 2 chains".into());
                }
            }
        }
        Ok(())
    }
}

fn overlay(base: &mut Map<String, Value>, user: Map<String, Value>) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(Value::Object(b)), Value::Object(u)) => overlay(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Result of any study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "kebab-case")]
pub enum StudyOutput {
    Estimate(ExperimentSummary),
    ConsistencyCurve {
        summary: ExperimentSummary,
        curve: Vec<ConsistencyPoint>,
    },
    BetaGapSweep(SweepResult),
    OutlierStudy(OutlierResult),
    OracleCheck(OracleCheckReport),
}

/// Runs the study named in `cfg` with at most `jobs` worker threads.
pub fn run_study(cfg: &ExperimentConfig, jobs: usize) -> Result<StudyOutput> {
    cfg.validate()?;
    with_pool(jobs, || match cfg.study {
        StudyKind::Estimate => Ok(StudyOutput::Estimate(run_replicates(cfg)?)),
        StudyKind::ConsistencyCurve => {
            let summary = run_replicates(cfg)?;
            let curve = consistency_curve(&summary);
            Ok(StudyOutput::ConsistencyCurve { summary, curve })
        }
        StudyKind::BetaGapSweep => Ok(StudyOutput::BetaGapSweep(beta_gap_sweep(cfg, &cfg.gaps)?)),
        StudyKind::OutlierStudy => Ok(StudyOutput::OutlierStudy(outlier_study(
            cfg,
            &cfg.deltas,
            cfg.outlier_count,
        )?)),
        StudyKind::OracleCheck => Ok(StudyOutput::OracleCheck(oracle_check(cfg)?)),
    })
}

/// Runs `f` inside a dedicated pool of `jobs` threads (0 means rayon's
/// default).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    pool.install(f)
}

/// Dataset seed of replicate `r`.
pub fn replicate_seed(base_seed: u64, r: usize) -> u64 {
    base_seed.wrapping_add(r as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overlay_and_unknown_keys() {
        let cfg = ExperimentConfig::from_json(
            r#"{"study":"estimate","replicates":3,"mcmc":{"chains":4}}"#,
        )
        .unwrap();
        assert_eq!(cfg.replicates, 3);
        assert_eq!(cfg.mcmc.chains, 4);
        assert_eq!(cfg.mcmc.total_iters, 20_000);
        assert_eq!(cfg.model.id(), "poisson-mix:2");

        let err = ExperimentConfig::from_json(
            r#"{"study":"estimate","replicate":3,"colour":1,"mcmc":{"iters":5}}"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(err.is_usage());
        for k in ["replicate", "colour", "mcmc.iters"] {
            assert!(msg.contains(k), "{msg}");
        }
        assert!(ExperimentConfig::from_json(r#"{"study":"bogus"}"#)
            .unwrap_err()
            .is_usage());
        assert!(ExperimentConfig::from_json(r#"{"replicates":2}"#).is_err());
        assert!(ExperimentConfig::from_json("[1]").is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::defaults_for(StudyKind::Estimate);
        cfg.validate().unwrap();
        cfg.replicates = 0;
        assert!(cfg.validate().is_err());
        cfg.replicates = 1;
        cfg.sample_sizes = vec![1];
        assert!(cfg.validate().is_err());
        cfg.sample_sizes = vec![10];
        cfg.truth = TrueDistribution::Normal { mean: 0.0, sd: 1.0 };
        assert!(cfg.validate().is_err());
        for k in StudyKind::ALL {
            ExperimentConfig::defaults_for(k).validate().unwrap();
            assert_eq!(StudyKind::parse(k.name()).unwrap(), k);
        }
        let mut o = ExperimentConfig::defaults_for(StudyKind::OutlierStudy);
        o.deltas = vec![0.0, 50.0, 25.0];
        assert!(o.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        for k in StudyKind::ALL {
            let cfg = ExperimentConfig::defaults_for(k);
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        }
    }
}
