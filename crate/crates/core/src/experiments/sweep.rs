use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{replicate_seed, ExperimentConfig, ReplicateFailure};
use crate::error::{Error, Result};
use crate::estimators::{lambda_watanabe, run_seed, wbic};
use crate::models::{sample_true, Dataset};
use crate::sampler::{run_mcmc, McmcConfig};
use crate::stats::{mean, population_variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub gap: f64,
    /// `beta2 * log n`.
    pub beta02: f64,
    pub mean: f64,
    pub bias: Option<f64>,
    pub variance: f64,
}

/// One replicate of the sweep: WBIC at `beta1` and, per gap, the WBIC at
/// `beta1 + gap` and the resulting estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReplicate {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub wbic_beta1: f64,
    pub wbic_beta2: Vec<f64>,
    pub lambda_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub true_lambda: Option<f64>,
    pub variance_convention: String,
    pub points: Vec<SweepPoint>,
    pub failures: Vec<ReplicateFailure>,
    pub replicates: Vec<SweepReplicate>,
}

fn sweep_one(
    cfg: &ExperimentConfig,
    data: &Dataset,
    gaps: &[f64],
    seed: u64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let log_n = (data.n() as f64).ln();
    let beta1 = 1.0 / log_n;
    let at = |beta0: f64| -> Result<f64> {
        let mc = McmcConfig {
            seed: run_seed(seed, Some(beta0)),
            ..cfg.mcmc.clone()
        };
        wbic(&run_mcmc(&cfg.model, data, beta0 / log_n, &mc)?)
    };
    let w1 = at(1.0)?;
    let mut w2s = Vec::with_capacity(gaps.len());
    let mut lambdas = Vec::with_capacity(gaps.len());
    for &gap in gaps {
        let beta2 = beta1 + gap;
        let w2 = at(beta2 * log_n)?;
        lambdas.push(lambda_watanabe(w1, w2, beta1, beta2)?);
        w2s.push(w2);
    }
    Ok((w1, w2s, lambdas))
}

/// Two-temperature estimator with `beta1 = 1 / log n` and
/// `beta2 = beta1 + gap`, per gap: mean, bias and variance over replicates.
pub fn beta_gap_sweep(cfg: &ExperimentConfig, gaps: &[f64]) -> Result<SweepResult> {
    if gaps.is_empty() || gaps.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidConfig("gaps must be positive".into()));
    }
    let true_lambda = cfg.model.true_lambda(&cfg.truth);
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    let mut points = Vec::new();
    for &n in &cfg.sample_sizes {
        let results: Vec<_> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = replicate_seed(cfg.base_seed, r);
                let res = sample_true(&cfg.truth, n, seed)
                    .and_then(|data| sweep_one(cfg, &data, gaps, seed));
                (r, seed, res)
            })
            .collect();
        let mut ok = Vec::new();
        for (r, seed, res) in results {
            match res {
                Ok((w1, w2, l)) => ok.push(SweepReplicate {
                    n,
                    replicate: r,
                    seed,
                    wbic_beta1: w1,
                    wbic_beta2: w2,
                    lambda_w: l,
                }),
                Err(e) => {
                    failures.push(ReplicateFailure {
                        n,
                        replicate: r,
                        seed,
                        error: e.to_string(),
                    });
                    first_error.get_or_insert(e);
                }
            }
        }
        if !ok.is_empty() {
            let log_n = (n as f64).ln();
            for (j, &gap) in gaps.iter().enumerate() {
                let v: Vec<f64> = ok.iter().map(|s| s.lambda_w[j]).collect();
                let m = mean(&v);
                points.push(SweepPoint {
                    n,
                    gap,
                    beta02: (1.0 / log_n + gap) * log_n,
                    mean: m,
                    bias: true_lambda.map(|t| m - t),
                    variance: population_variance(&v),
                });
            }
        }
        replicates.extend(ok);
    }
    if replicates.is_empty() {
        return Err(first_error.expect("at least one replicate ran"));
    }
    Ok(SweepResult {
        config: cfg.clone(),
        true_lambda,
        variance_convention: "population".into(),
        points,
        failures,
        replicates,
    })
}
