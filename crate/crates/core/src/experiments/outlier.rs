use serde::{Deserialize, Serialize};

use super::{replicate_seed, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimators::{empirical_loss, inject_outliers, lambda_empirical, lambda_imai, run_seed, wbic};
use crate::models::sample_true;
use crate::sampler::{run_mcmc, McmcConfig, PosteriorDraws};
use crate::stats::{mean, polyfit, population_variance, PolyFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierPoint {
    pub delta: f64,
    pub lambda_i: f64,
    pub lambda_t: f64,
    /// Change relative to the estimate without injected draws.
    pub deviation_i: f64,
    pub deviation_t: f64,
    /// `beta^2` times the variance change predicted by the two-group
    /// mean/variance decomposition.
    pub closed_form_deviation_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierResult {
    pub config: ExperimentConfig,
    pub n: usize,
    pub seed: u64,
    pub beta: f64,
    pub true_lambda: Option<f64>,
    /// Retained draws before injection.
    pub draws: usize,
    pub injected: usize,
    pub baseline_lambda_i: f64,
    pub baseline_lambda_t: f64,
    pub points: Vec<OutlierPoint>,
    pub fit_i_linear: PolyFit,
    pub fit_i_quadratic: PolyFit,
    pub fit_t_linear: PolyFit,
    pub fit_t_quadratic: PolyFit,
    /// Quadratic-fit residual over linear-fit residual.
    pub rss_ratio_i: f64,
    pub rss_ratio_t: f64,
    /// `deviation_t` at the largest shift over that at the second largest.
    pub largest_shift_ratio_t: Option<f64>,
    /// The corresponding ratio of shifts.
    pub largest_shift_ratio: Option<f64>,
    /// Largest relative gap between `deviation_i` and its closed form.
    pub max_identity_error: f64,
}

/// Variance change of the totals when `count` copies of the last draw,
/// shifted down by `delta`, are appended.
fn closed_form_variance_shift(draws: &PosteriorDraws, count: usize, delta: f64) -> f64 {
    let totals = draws.total_loglik();
    let k = totals.len() as f64;
    let c = count as f64;
    let m = mean(totals);
    let v = population_variance(totals);
    let outlier = totals[totals.len() - 1] - delta;
    k * v / (k + c) + k * c * (m - outlier).powi(2) / ((k + c) * (k + c)) - v
}

fn rss_ratio(quadratic: &PolyFit, linear: &PolyFit) -> f64 {
    if linear.rss == 0.0 {
        0.0
    } else {
        quadratic.rss / linear.rss
    }
}

/// Injects `count` shifted copies of the last tempered draw for each shift
/// and tracks how the variance and empirical-loss estimators move. Uses the
/// first sample size and replicate seed `base_seed`.
pub fn outlier_study(cfg: &ExperimentConfig, deltas: &[f64], count: usize) -> Result<OutlierResult> {
    if deltas.is_empty()
        || deltas.iter().any(|&d| !(d >= 0.0 && d.is_finite()))
        || deltas.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidConfig(
            "deltas must be non-negative and strictly increasing".into(),
        ));
    }
    if count == 0 {
        return Err(Error::InvalidConfig("outlier count must be >= 1".into()));
    }
    let n = cfg.sample_sizes[0];
    let seed = replicate_seed(cfg.base_seed, 0);
    let data = sample_true(&cfg.truth, n, seed)?;
    let log_n = (n as f64).ln();
    let beta = 1.0 / log_n;

    let (tempered, untempered) = rayon::join(
        || {
            let mc = McmcConfig {
                seed: run_seed(seed, Some(1.0)),
                ..cfg.mcmc.clone()
            };
            run_mcmc(&cfg.model, &data, beta, &mc)
        },
        || {
            let mc = McmcConfig {
                seed: run_seed(seed, None),
                ..cfg.mcmc.clone()
            };
            run_mcmc(&cfg.model, &data, 1.0, &mc)
        },
    );
    let tempered = tempered?;
    let tn = empirical_loss(&untempered?)?;

    let base_i = lambda_imai(&tempered)?;
    let base_t = lambda_empirical(wbic(&tempered)?, tn, n)?;
    let mut points = Vec::with_capacity(deltas.len());
    let mut max_identity_error: f64 = 0.0;
    for &delta in deltas {
        let inj = inject_outliers(&tempered, count, delta)?;
        let lambda_i = lambda_imai(&inj)?;
        let lambda_t = lambda_empirical(wbic(&inj)?, tn, n)?;
        let deviation_i = lambda_i - base_i;
        let closed = beta * beta * closed_form_variance_shift(&tempered, count, delta);
        max_identity_error =
            max_identity_error.max((closed - deviation_i).abs() / deviation_i.abs().max(1.0));
        points.push(OutlierPoint {
            delta,
            lambda_i,
            lambda_t,
            deviation_i,
            deviation_t: lambda_t - base_t,
            closed_form_deviation_i: closed,
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.delta).collect();
    let di: Vec<f64> = points.iter().map(|p| p.deviation_i).collect();
    let dt: Vec<f64> = points.iter().map(|p| p.deviation_t).collect();
    let fit_i_linear = polyfit(&xs, &di, 1);
    let fit_i_quadratic = polyfit(&xs, &di, 2);
    let fit_t_linear = polyfit(&xs, &dt, 1);
    let fit_t_quadratic = polyfit(&xs, &dt, 2);
    let (largest_shift_ratio_t, largest_shift_ratio) = match points.len() {
        0 | 1 => (None, None),
        m => {
            let (a, b) = (&points[m - 2], &points[m - 1]);
            (Some(b.deviation_t / a.deviation_t), Some(b.delta / a.delta))
        }
    };
    Ok(OutlierResult {
        config: cfg.clone(),
        n,
        seed,
        beta,
        true_lambda: cfg.model.true_lambda(&cfg.truth),
        draws: tempered.len(),
        injected: count,
        baseline_lambda_i: base_i,
        baseline_lambda_t: base_t,
        rss_ratio_i: rss_ratio(&fit_i_quadratic, &fit_i_linear),
        rss_ratio_t: rss_ratio(&fit_t_quadratic, &fit_t_linear),
        fit_i_linear,
        fit_i_quadratic,
        fit_t_linear,
        fit_t_quadratic,
        largest_shift_ratio_t,
        largest_shift_ratio,
        max_identity_error,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::StudyKind;
    use crate::models::{ModelSpec, TrueDistribution};

    #[test]
    fn small_outlier_study_shapes() {
        let mut cfg = ExperimentConfig::defaults_for(StudyKind::OutlierStudy);
        cfg.model = ModelSpec::gaussian_mixture(2).unwrap();
        cfg.truth = TrueDistribution::Normal { mean: 0.0, sd: 1.0 };
        cfg.sample_sizes = vec![200];
        cfg.mcmc.total_iters = 1500;
        cfg.mcmc.burn_in = 500;
        let res = outlier_study(&cfg, &[0.0, 100.0, 400.0, 800.0], 20).unwrap();
        assert_eq!(res.points.len(), 4);
        assert!(res.max_identity_error < 1e-9);
        assert!(res.rss_ratio_i < 1e-6);
        let r = res.largest_shift_ratio_t.unwrap();
        assert!((r - 2.0).abs() < 0.2, "{r}");
        assert!(outlier_study(&cfg, &[10.0, 5.0], 20).is_err());
        assert!(outlier_study(&cfg, &[10.0], 0).is_err());
    }
}
