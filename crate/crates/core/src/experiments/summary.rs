use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{replicate_seed, EstimatorKind, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimators::{estimate_with_mcmc, EstimateRecord};
use crate::models::sample_true;
use crate::stats::{mean, population_variance};

/// One reported estimator column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorColumn {
    pub label: String,
    pub kind: EstimatorKind,
    /// `(beta01, beta02)` for the two-temperature estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<(f64, f64)>,
}

impl EstimatorColumn {
    pub fn for_config(cfg: &ExperimentConfig) -> Vec<Self> {
        let mut cols = Vec::new();
        for kind in cfg.estimator_kinds() {
            match kind {
                EstimatorKind::Watanabe => cols.extend(cfg.pairs.iter().map(|&(a, b)| Self {
                    label: format!("lambda_W({a},{b})"),
                    kind,
                    pair: Some((a, b)),
                })),
                EstimatorKind::Imai => cols.push(Self {
                    label: "lambda_I".into(),
                    kind,
                    pair: None,
                }),
                EstimatorKind::Empirical => cols.push(Self {
                    label: "lambda_T".into(),
                    kind,
                    pair: None,
                }),
            }
        }
        cols
    }

    pub fn value(&self, r: &EstimateRecord) -> Result<f64> {
        match (self.kind, self.pair) {
            (EstimatorKind::Watanabe, Some((a, b))) => r.lambda_w_at(a, b).ok_or_else(|| {
                Error::InvalidArgument(format!("record has no lambda_W at ({a}, {b})"))
            }),
            (EstimatorKind::Watanabe, None) => {
                Err(Error::InvalidArgument("lambda_W column without a pair".into()))
            }
            (EstimatorKind::Imai, _) => Ok(r.lambda_i),
            (EstimatorKind::Empirical, _) => Ok(r.lambda_t),
        }
    }
}

/// Mean, bias, population variance and MSE of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub label: String,
    pub mean: f64,
    pub bias: Option<f64>,
    pub variance: f64,
    pub mse: Option<f64>,
}

impl EstimatorStats {
    pub fn from_values(label: &str, values: &[f64], truth: Option<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("no values for {label}")));
        }
        let m = mean(values);
        let variance = population_variance(values);
        let bias = truth.map(|t| m - t);
        let mse = truth.map(|t| mean(&values.iter().map(|v| (v - t).powi(2)).collect::<Vec<_>>()));
        if let (Some(b), Some(e)) = (bias, mse) {
            if (e - (b * b + variance)).abs() > 1e-9 * e.max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "MSE identity violated for {label}: {e} vs {}",
                    b * b + variance
                )));
            }
        }
        Ok(EstimatorStats {
            label: label.to_string(),
            mean: m,
            bias,
            variance,
            mse,
        })
    }
}

/// `Var[lambda] = Var[numerator] / denominator^2` for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub label: String,
    pub numerator: f64,
    /// Squared denominator: `(1/beta1 - 1/beta2)^2` or `(log n)^2`.
    pub denominator: f64,
    pub ratio: f64,
    pub direct_variance: f64,
}

/// Splits each estimator's variance into the variance of its numerator and
/// its squared (constant) denominator, over records that share `n`.
pub fn variance_decomposition(
    records: &[EstimateRecord],
    pairs: &[(f64, f64)],
    n: usize,
) -> Result<Vec<DecompositionRow>> {
    if records.len() < 2 {
        return Err(Error::TooFewDraws {
            needed: 2,
            got: records.len(),
        });
    }
    if let Some(r) = records.iter().find(|r| r.n != n) {
        return Err(Error::InvalidArgument(format!(
            "record with n = {} in a decomposition at n = {n}",
            r.n
        )));
    }
    let log_n = (n as f64).ln();
    let wbic = |r: &EstimateRecord, b: f64| {
        r.wbic_at(b)
            .ok_or_else(|| Error::InvalidArgument(format!("record has no WBIC at beta0 = {b}")))
    };
    let row = |label: String, num: Vec<f64>, denom: f64, direct: Vec<f64>| {
        let numerator = population_variance(&num);
        let denominator = denom * denom;
        let ratio = numerator / denominator;
        let direct_variance = population_variance(&direct);
        if (ratio - direct_variance).abs() > 1e-9 * direct_variance.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "decomposition of {label} does not reproduce its variance: {ratio} vs {direct_variance}"
            )));
        }
        Ok(DecompositionRow {
            label,
            numerator,
            denominator,
            ratio,
            direct_variance,
        })
    };

    let mut rows = Vec::new();
    for &(b1, b2) in pairs {
        if b1 == b2 {
            return Err(Error::DegenerateBetaPair(b1));
        }
        let num = records
            .iter()
            .map(|r| Ok(wbic(r, b1)? - wbic(r, b2)?))
            .collect::<Result<Vec<_>>>()?;
        let direct = records
            .iter()
            .map(|r| {
                r.lambda_w_at(b1, b2).ok_or_else(|| {
                    Error::InvalidArgument(format!("record has no lambda_W at ({b1}, {b2})"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let denom = 1.0 / (b1 / log_n) - 1.0 / (b2 / log_n);
        rows.push(row(format!("lambda_W({b1},{b2})"), num, denom, direct)?);
    }
    let num = records
        .iter()
        .map(|r| Ok(wbic(r, 1.0)? - r.n_times_tn))
        .collect::<Result<Vec<_>>>()?;
    let direct = records.iter().map(|r| r.lambda_t).collect();
    rows.push(row("lambda_T".into(), num, log_n, direct)?);
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

/// Aggregates at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub true_lambda: Option<f64>,
    pub replicates_used: usize,
    pub replicates_excluded: usize,
    pub estimators: Vec<EstimatorStats>,
    /// Empty with fewer than two replicates.
    pub decomposition: Vec<DecompositionRow>,
    /// `(beta0, Var[WBIC(beta0 / log n)])`.
    pub wbic_variances: Vec<(f64, f64)>,
    pub n_times_tn_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub tool_version: String,
    /// Always `"population"`: variances divide by the replicate count.
    pub variance_convention: String,
    pub columns: Vec<EstimatorColumn>,
    pub sizes: Vec<SizeSummary>,
    pub failures: Vec<ReplicateFailure>,
    pub records: Vec<EstimateRecord>,
}

impl ExperimentSummary {
    pub fn size(&self, n: usize) -> Option<&SizeSummary> {
        self.sizes.iter().find(|s| s.n == n)
    }
}

impl SizeSummary {
    pub fn stats(&self, label: &str) -> Option<&EstimatorStats> {
        self.estimators.iter().find(|s| s.label == label)
    }
}

/// Builds every aggregate from the stored records.
pub fn summarize(
    cfg: &ExperimentConfig,
    records: Vec<EstimateRecord>,
    failures: Vec<ReplicateFailure>,
) -> Result<ExperimentSummary> {
    let columns = EstimatorColumn::for_config(cfg);
    let true_lambda = cfg.model.true_lambda(&cfg.truth);
    let beta0s = cfg.settings().required_beta0s();
    let mut sizes = Vec::new();
    for &n in &cfg.sample_sizes {
        let recs: Vec<EstimateRecord> = records.iter().filter(|r| r.n == n).cloned().collect();
        let excluded = failures.iter().filter(|f| f.n == n).count();
        if recs.is_empty() {
            sizes.push(SizeSummary {
                n,
                true_lambda,
                replicates_used: 0,
                replicates_excluded: excluded,
                estimators: Vec::new(),
                decomposition: Vec::new(),
                wbic_variances: Vec::new(),
                n_times_tn_variance: f64::NAN,
            });
            continue;
        }
        let estimators = columns
            .iter()
            .map(|c| {
                let v = recs.iter().map(|r| c.value(r)).collect::<Result<Vec<_>>>()?;
                EstimatorStats::from_values(&c.label, &v, true_lambda)
            })
            .collect::<Result<Vec<_>>>()?;
        let decomposition = if recs.len() >= 2 {
            variance_decomposition(&recs, &cfg.pairs, n)?
        } else {
            Vec::new()
        };
        let wbic_variances = beta0s
            .iter()
            .map(|&b| {
                let v = recs
                    .iter()
                    .map(|r| {
                        r.wbic_at(b).ok_or_else(|| {
                            Error::InvalidArgument(format!("record has no WBIC at beta0 = {b}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((b, population_variance(&v)))
            })
            .collect::<Result<Vec<_>>>()?;
        let ntn: Vec<f64> = recs.iter().map(|r| r.n_times_tn).collect();
        sizes.push(SizeSummary {
            n,
            true_lambda,
            replicates_used: recs.len(),
            replicates_excluded: excluded,
            estimators,
            decomposition,
            wbic_variances,
            n_times_tn_variance: population_variance(&ntn),
        });
    }
    Ok(ExperimentSummary {
        config: cfg.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        variance_convention: "population".into(),
        columns,
        sizes,
        failures,
        records,
    })
}

/// Runs every replicate at every sample size. Replicate `r` samples its
/// dataset with seed `base_seed + r` and uses the same seed for its sampling
/// runs, so `estimate --seed <base_seed + r>` reproduces it. Failed
/// replicates are excluded and listed; the study fails only when none
/// succeed.
pub fn run_replicates(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let settings = cfg.settings();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for &n in &cfg.sample_sizes {
        let results: Vec<(usize, u64, Result<EstimateRecord>)> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = replicate_seed(cfg.base_seed, r);
                let result = sample_true(&cfg.truth, n, seed).and_then(|data| {
                    estimate_with_mcmc(&cfg.model, Some(&cfg.truth), &data, &settings, &cfg.mcmc, seed)
                });
                (r, seed, result)
            })
            .collect();
        for (r, seed, result) in results {
            match result {
                Ok(mut rec) => {
                    rec.replicate = r;
                    records.push(rec);
                }
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
    }
    if records.is_empty() {
        return Err(first_error.expect("at least one replicate ran"));
    }
    summarize(cfg, records, failures)
}

/// Mean of every reported estimator at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub n: usize,
    pub true_lambda: Option<f64>,
    /// `(column label, mean)` in column order.
    pub means: Vec<(String, f64)>,
}

pub fn consistency_curve(summary: &ExperimentSummary) -> Vec<ConsistencyPoint> {
    summary
        .sizes
        .iter()
        .filter(|s| s.replicates_used > 0)
        .map(|s| ConsistencyPoint {
            n: s.n,
            true_lambda: s.true_lambda,
            means: s.estimators.iter().map(|e| (e.label.clone(), e.mean)).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{PairEstimate, RecordMetadata, WbicPoint};
    use crate::experiments::StudyKind;

    /// A synthetic record whose estimates are consistent with its WBICs.
    fn record(n: usize, w: &[(f64, f64)], ntn: f64) -> EstimateRecord {
        let log_n = (n as f64).ln();
        let wb = |b: f64| w.iter().find(|p| p.0 == b).unwrap().1;
        let pairs = [(1.0, 1.5), (1.0, 3.0), (1.0, 5.0), (1.0, 1000.0)];
        EstimateRecord {
            replicate: 0,
            seed: 0,
            model: "poisson-mix:2".into(),
            truth: Some("poisson:3".into()),
            n,
            log_n,
            true_lambda: Some(0.75),
            wbic_by_beta: w
                .iter()
                .map(|&(beta0, wbic)| WbicPoint {
                    beta0,
                    beta: beta0 / log_n,
                    wbic,
                })
                .collect(),
            n_times_tn: ntn,
            plugin_loss_at_beta1: ntn + 1.0,
            lambda_w: pairs
                .iter()
                .map(|&(a, b)| PairEstimate {
                    beta01: a,
                    beta02: b,
                    lambda: (wb(a) - wb(b)) / (1.0 / (a / log_n) - 1.0 / (b / log_n)),
                })
                .collect(),
            lambda_i: 0.7 + ntn * 1e-4,
            lambda_t: (wb(1.0) - n as f64 * (ntn / n as f64)) / log_n,
            metadata: RecordMetadata {
                method: "mcmc".into(),
                prior: String::new(),
                mcmc: None,
                min_acceptance: None,
                max_acceptance: None,
                quadrature_bounds: None,
            },
        }
    }

    fn records() -> Vec<EstimateRecord> {
        (0..7)
            .map(|i| {
                let s = i as f64;
                let w1 = 1500.0 + 3.1 * s - 0.2 * s * s;
                record(
                    750,
                    &[
                        (1.0, w1),
                        (1.5, w1 - 2.0 + 0.1 * s),
                        (3.0, w1 - 3.5 + 0.05 * s),
                        (5.0, w1 - 4.0 - 0.02 * s * s),
                        (1000.0, w1 - 5.0 + 0.3 * s),
                    ],
                    w1 - 4.9 - 0.07 * s,
                )
            })
            .collect()
    }

    #[test]
    fn decomposition_denominators_at_750() {
        let pairs = [(1.0, 1.5), (1.0, 3.0), (1.0, 5.0)];
        let rows = variance_decomposition(&records(), &pairs, 750).unwrap();
        let want = [4.869485, 19.47794, 28.04824, 43.82537];
        for (row, w) in rows.iter().zip(want) {
            assert!((row.denominator - w).abs() < 5e-6, "{} {}", row.label, row.denominator);
            assert!((row.ratio - row.direct_variance).abs() < 1e-9);
        }
        assert!(matches!(
            variance_decomposition(&records(), &[(1.0, 1.0)], 750),
            Err(Error::DegenerateBetaPair(_))
        ));
        assert!(variance_decomposition(&records()[..1], &pairs, 750).is_err());
        assert!(variance_decomposition(&records(), &pairs, 700).is_err());
    }

    #[test]
    fn single_replicate_has_zero_variance() {
        let s = EstimatorStats::from_values("x", &[0.9], Some(0.75)).unwrap();
        assert_eq!(s.variance, 0.0);
        assert!((s.mse.unwrap() - s.bias.unwrap().powi(2)).abs() < 1e-15);
        let s = EstimatorStats::from_values("x", &[0.9, 0.5, 0.7], None).unwrap();
        assert!(s.bias.is_none() && s.mse.is_none());
    }

    #[test]
    fn summary_is_recomputable_and_obeys_mse_identity() {
        let cfg = ExperimentConfig::defaults_for(StudyKind::Estimate);
        let recs = records();
        let a = summarize(&cfg, recs.clone(), Vec::new()).unwrap();
        let b = summarize(&cfg, a.records.clone(), Vec::new()).unwrap();
        assert_eq!(a, b);
        let size = a.size(750).unwrap();
        assert_eq!(size.estimators.len(), 6);
        for e in &size.estimators {
            let (b, v, m) = (e.bias.unwrap(), e.variance, e.mse.unwrap());
            assert!((m - (b * b + v)).abs() < 1e-9);
        }
        assert_eq!(size.decomposition.len(), 5);
        assert_eq!(size.wbic_variances.len(), 5);

        let mut only_t = cfg.clone();
        only_t.estimators = vec![EstimatorKind::Empirical];
        let s = summarize(&only_t, recs, Vec::new()).unwrap();
        let curve = consistency_curve(&s);
        assert_eq!(curve[0].means.len(), 1);
        assert_eq!(curve[0].means[0].0, "lambda_T");
    }
}
