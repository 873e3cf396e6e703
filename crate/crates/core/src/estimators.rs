//! WBIC, empirical loss and the three learning-coefficient estimators.
//!
//! All quantities are in nats. With `beta = beta0 / log n`:
//!
//! * `lambda_W = (WBIC(beta1) - WBIC(beta2)) / (1/beta1 - 1/beta2)`
//! * `lambda_I = beta^2 * Var_beta[sum_i log p(x_i | theta)]`
//! * `lambda_T = (WBIC(1/log n) - n T_n) / log n`
//!
//! where `T_n` is the mean negative log posterior-predictive density of the
//! training sample under the untempered posterior.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Dataset, ModelSpec, TrueDistribution};
use crate::sampler::{run_mcmc, McmcConfig, PosteriorDraws};
use crate::stats::{mean, mix_seed, population_variance};

/// WBIC: posterior mean of the total negative log-likelihood.
pub fn wbic(draws: &PosteriorDraws) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    Ok(-mean(draws.total_loglik()))
}

/// `log r(x_i | x_1..x_n)` for every observation: the log of the draw-average
/// of `p(x_i | theta_k)`, computed column-wise with max subtraction.
pub fn predictive_log_densities(draws: &PosteriorDraws) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let ll = draws.loglik();
    let mut max = vec![f64::NEG_INFINITY; draws.n()];
    for row in ll.axis_iter(Axis(0)) {
        for (m, &v) in max.iter_mut().zip(row.iter()) {
            *m = m.max(v);
        }
    }
    let mut sums = vec![0.0; draws.n()];
    for row in ll.axis_iter(Axis(0)) {
        for ((s, &v), &m) in sums.iter_mut().zip(row.iter()).zip(&max) {
            *s += (v - m).exp();
        }
    }
    let log_k = (draws.len() as f64).ln();
    Ok(sums
        .iter()
        .zip(&max)
        .map(|(s, m)| m + s.ln() - log_k)
        .collect())
}

/// Empirical loss `T_n` (per-datum nats) from draws of the untempered
/// posterior.
pub fn empirical_loss(draws_at_beta1: &PosteriorDraws) -> Result<f64> {
    if (draws_at_beta1.beta() - 1.0).abs() > 1e-12 {
        return Err(Error::NotUntempered(draws_at_beta1.beta()));
    }
    let log_r = predictive_log_densities(draws_at_beta1)?;
    Ok(-mean(&log_r))
}

/// Watanabe's two-temperature difference quotient.
pub fn lambda_watanabe(wbic1: f64, wbic2: f64, beta1: f64, beta2: f64) -> Result<f64> {
    if !(beta1 > 0.0 && beta2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse temperatures must be positive, got {beta1} and {beta2}"
        )));
    }
    if beta1 == beta2 {
        return Err(Error::DegenerateBetaPair(beta1));
    }
    Ok((wbic1 - wbic2) / (1.0 / beta1 - 1.0 / beta2))
}

/// Imai's estimator: `beta^2` times the population (divide-by-K) variance of
/// the total log-likelihood over the draws.
pub fn lambda_imai(draws: &PosteriorDraws) -> Result<f64> {
    if draws.len() < 2 {
        return Err(Error::TooFewDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    let b = draws.beta();
    Ok(b * b * population_variance(draws.total_loglik()))
}

/// Empirical-loss estimator `(WBIC - n T_n) / log n`.
pub fn lambda_empirical(wbic_at_1_over_logn: f64, tn: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::SampleSizeTooSmall(n));
    }
    let n_f = n as f64;
    Ok((wbic_at_1_over_logn - n_f * tn) / n_f.ln())
}

/// Appends `count` copies of the last retained draw with total
/// log-likelihood lowered by `delta` (each per-datum value by `delta / n`).
pub fn inject_outliers(draws: &PosteriorDraws, count: usize, delta: f64) -> Result<PosteriorDraws> {
    if count == 0 {
        return Err(Error::InvalidArgument("outlier count must be >= 1".into()));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "outlier shift must be finite and >= 0, got {delta}"
        )));
    }
    let mut out = draws.clone();
    out.append_shifted_copies(count, delta)?;
    Ok(out)
}

/// Which inverse temperatures a replicate samples at and which
/// two-temperature pairs it reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    /// `beta0` values; sampling happens at `beta0 / log n`.
    pub beta0s: Vec<f64>,
    /// `(beta01, beta02)` pairs for the two-temperature estimator.
    pub pairs: Vec<(f64, f64)>,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            beta0s: vec![1.0, 1.5, 3.0, 5.0, 1000.0],
            pairs: vec![(1.0, 1.5), (1.0, 3.0), (1.0, 5.0), (1.0, 1000.0)],
        }
    }
}

impl EstimatorSettings {
    pub fn validate(&self) -> Result<()> {
        let all = self.required_beta0s();
        if all.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidConfig("beta0 values must be positive".into()));
        }
        if let Some(&(a, _)) = self.pairs.iter().find(|(a, b)| a == b) {
            return Err(Error::DegenerateBetaPair(a));
        }
        Ok(())
    }

    /// Sorted, deduplicated `beta0` values needed: the listed ones, every pair
    /// member, and 1 (used by the variance and empirical-loss estimators).
    pub fn required_beta0s(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .beta0s
            .iter()
            .copied()
            .chain(self.pairs.iter().flat_map(|&(a, b)| [a, b]))
            .chain([1.0])
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        all.dedup();
        all
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WbicPoint {
    pub beta0: f64,
    pub beta: f64,
    pub wbic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub beta01: f64,
    pub beta02: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    /// `"mcmc"` or `"quadrature"`.
    pub method: String,
    pub prior: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcConfig>,
    /// Lowest post-burn-in acceptance rate over every chain of every run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_acceptance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_acceptance: Option<f64>,
    /// Quadrature boxes, one `[lo, hi]` per dimension per temperature.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_bounds: Option<Vec<Vec<(f64, f64)>>>,
}

/// One replicate's estimates and the intermediates they were built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    pub n: usize,
    pub log_n: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_lambda: Option<f64>,
    pub wbic_by_beta: Vec<WbicPoint>,
    pub n_times_tn: f64,
    /// Mean of `-sum_i log p(x_i | theta)` under the untempered posterior;
    /// never below `n_times_tn`.
    pub plugin_loss_at_beta1: f64,
    pub lambda_w: Vec<PairEstimate>,
    pub lambda_i: f64,
    pub lambda_t: f64,
    pub metadata: RecordMetadata,
}

impl EstimateRecord {
    pub fn wbic_at(&self, beta0: f64) -> Option<f64> {
        self.wbic_by_beta
            .iter()
            .find(|p| p.beta0 == beta0)
            .map(|p| p.wbic)
    }

    pub fn lambda_w_at(&self, beta01: f64, beta02: f64) -> Option<f64> {
        self.lambda_w
            .iter()
            .find(|p| p.beta01 == beta01 && p.beta02 == beta02)
            .map(|p| p.lambda)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let lambdas = self
            .lambda_w
            .iter()
            .map(|p| p.lambda)
            .chain([self.lambda_i, self.lambda_t]);
        if lambdas.into_iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidArgument("non-finite estimate".into()));
        }
        if self.lambda_i < 0.0 {
            return Err(Error::InvalidArgument("negative variance estimate".into()));
        }
        Ok(())
    }
}

/// Temperature-level summaries that the record is assembled from. Both the
/// sampling and the quadrature pipelines produce these.
#[derive(Debug, Clone)]
pub(crate) struct PipelineParts {
    pub wbic_by_beta: Vec<WbicPoint>,
    pub lambda_i: f64,
    pub n_times_tn: f64,
    pub plugin_loss_at_beta1: f64,
}

pub(crate) fn assemble_record(
    parts: PipelineParts,
    settings: &EstimatorSettings,
    n: usize,
    metadata: RecordMetadata,
    model: &ModelSpec,
    truth: Option<&TrueDistribution>,
) -> Result<EstimateRecord> {
    let log_n = (n as f64).ln();
    let wbic_of = |b0: f64| {
        parts
            .wbic_by_beta
            .iter()
            .find(|p| p.beta0 == b0)
            .map(|p| p.wbic)
            .ok_or_else(|| Error::InvalidArgument(format!("no WBIC at beta0 = {b0}")))
    };
    let lambda_w = settings
        .pairs
        .iter()
        .map(|&(b1, b2)| {
            Ok(PairEstimate {
                beta01: b1,
                beta02: b2,
                lambda: lambda_watanabe(wbic_of(b1)?, wbic_of(b2)?, b1 / log_n, b2 / log_n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lambda_t = lambda_empirical(wbic_of(1.0)?, parts.n_times_tn / n as f64, n)?;
    let record = EstimateRecord {
        replicate: 0,
        seed: 0,
        model: model.id(),
        truth: truth.map(TrueDistribution::id),
        n,
        log_n,
        true_lambda: truth.and_then(|t| model.true_lambda(t)),
        wbic_by_beta: parts.wbic_by_beta,
        n_times_tn: parts.n_times_tn,
        plugin_loss_at_beta1: parts.plugin_loss_at_beta1,
        lambda_w,
        lambda_i: parts.lambda_i,
        lambda_t,
        metadata,
    };
    record.check_invariants()?;
    Ok(record)
}

/// Seed of the sampling run at `beta0` (or at `beta = 1` when `None`) within
/// a replicate. Independent of which other temperatures are requested.
pub fn run_seed(replicate_seed: u64, beta0: Option<f64>) -> u64 {
    match beta0 {
        Some(b) => mix_seed(replicate_seed, b.to_bits()),
        None => mix_seed(replicate_seed, u64::MAX),
    }
}

/// Runs the full sampling pipeline on one dataset: one chain set per
/// required `beta0 / log n` plus one at `beta = 1` for the empirical loss.
pub fn estimate_with_mcmc(
    model: &ModelSpec,
    truth: Option<&TrueDistribution>,
    data: &Dataset,
    settings: &EstimatorSettings,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<EstimateRecord> {
    settings.validate()?;
    let n = data.n();
    if n < 2 {
        return Err(Error::SampleSizeTooSmall(n));
    }
    let log_n = (n as f64).ln();
    let mut acc = (f64::INFINITY, f64::NEG_INFINITY);
    let mut track = |d: &PosteriorDraws| {
        for diag in d.diagnostics() {
            acc.0 = acc.0.min(diag.acceptance_rate);
            acc.1 = acc.1.max(diag.acceptance_rate);
        }
    };

    let mut wbic_by_beta = Vec::new();
    let mut lambda_i = f64::NAN;
    for beta0 in settings.required_beta0s() {
        let cfg = McmcConfig {
            seed: run_seed(seed, Some(beta0)),
            ..mcmc.clone()
        };
        let beta = beta0 / log_n;
        let draws = run_mcmc(model, data, beta, &cfg)?;
        track(&draws);
        if beta0 == 1.0 {
            lambda_i = lambda_imai(&draws)?;
        }
        wbic_by_beta.push(WbicPoint {
            beta0,
            beta,
            wbic: wbic(&draws)?,
        });
    }

    let cfg = McmcConfig {
        seed: run_seed(seed, None),
        ..mcmc.clone()
    };
    let untempered = run_mcmc(model, data, 1.0, &cfg)?;
    track(&untempered);
    let n_times_tn = n as f64 * empirical_loss(&untempered)?;
    let plugin_loss_at_beta1 = wbic(&untempered)?;

    let metadata = RecordMetadata {
        method: "mcmc".into(),
        prior: model.prior_description(),
        mcmc: Some(mcmc.clone()),
        min_acceptance: Some(acc.0),
        max_acceptance: Some(acc.1),
        quadrature_bounds: None,
    };
    let mut record = assemble_record(
        PipelineParts {
            wbic_by_beta,
            lambda_i,
            n_times_tn,
            plugin_loss_at_beta1,
        },
        settings,
        n,
        metadata,
        model,
        truth,
    )?;
    record.seed = seed;
    Ok(record)
}
