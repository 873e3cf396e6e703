use serde::{Deserialize, Serialize};

use super::{replicate_seed, ExperimentConfig};
use crate::bootstrap::{chain_bootstrap_se, unit_weights, ChainStats};
use crate::error::{Error, Result};
use crate::estimators::{run_seed, EstimateRecord};
use crate::models::sample_true;
use crate::oracle::{quad_lambda_estimates, quad_wbic_curve, GridPosterior, QuadratureGrid};
use crate::sampler::{run_mcmc, McmcConfig};

/// One quantity computed both ways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub quantity: String,
    pub oracle: f64,
    pub mcmc: f64,
    /// Chain-bootstrap Monte-Carlo standard error of `mcmc`.
    pub mc_se: f64,
    /// `|mcmc - oracle| / mc_se`.
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub config: ExperimentConfig,
    pub n: usize,
    pub seed: u64,
    /// Pass threshold in standard errors.
    pub tolerance_se: f64,
    pub comparisons: Vec<OracleComparison>,
    pub properties: Vec<PropertyCheck>,
    pub min_acceptance: f64,
    pub max_acceptance: f64,
    pub oracle_record: EstimateRecord,
    pub pass: bool,
}

/// Sampling pipeline versus quadrature on one dataset, plus oracle-level
/// properties: WBIC decreasing in beta, the variance estimator matching the
/// WBIC slope, and grid-refinement stability. Compares every pair in the
/// config's estimator settings.
pub fn oracle_check(cfg: &ExperimentConfig) -> Result<OracleCheckReport> {
    let model = &cfg.model;
    if model.dim() > 2 {
        return Err(Error::InvalidConfig(format!(
            "oracle-check needs at most 2 parameters, {model} has {}",
            model.dim()
        )));
    }
    let n = cfg.sample_sizes[0];
    let seed = replicate_seed(cfg.base_seed, 0);
    let data = sample_true(&cfg.truth, n, seed)?;
    let settings = cfg.settings();
    let oracle = quad_lambda_estimates(model, Some(&cfg.truth), &data, &settings)?;
    let log_n = (n as f64).ln();

    let beta0s = settings.required_beta0s();
    let mut tempered = Vec::with_capacity(beta0s.len());
    let mut acc = (f64::INFINITY, f64::NEG_INFINITY);
    for &b0 in &beta0s {
        let mc = McmcConfig {
            seed: run_seed(seed, Some(b0)),
            ..cfg.mcmc.clone()
        };
        let d = run_mcmc(model, &data, b0 / log_n, &mc)?;
        for diag in d.diagnostics() {
            acc = (acc.0.min(diag.acceptance_rate), acc.1.max(diag.acceptance_rate));
        }
        tempered.push(ChainStats::from_draws(&d, false));
    }
    let mc = McmcConfig {
        seed: run_seed(seed, None),
        ..cfg.mcmc.clone()
    };
    let d = run_mcmc(model, &data, 1.0, &mc)?;
    for diag in d.diagnostics() {
        acc = (acc.0.min(diag.acceptance_rate), acc.1.max(diag.acceptance_rate));
    }
    let untempered = ChainStats::from_draws(&d, true);
    drop(d);

    // Weight vectors: one per tempered run, then the untempered run.
    let idx = |b0: f64| beta0s.iter().position(|&b| b == b0).expect("required beta0");
    let i1 = idx(1.0);
    let u = beta0s.len();
    type Stat<'a> = Box<dyn Fn(&[Vec<f64>]) -> f64 + 'a>;
    let mut quantities: Vec<(String, f64, Stat)> = vec![
        (
            "wbic(1/log n)".into(),
            oracle.wbic_at(1.0).expect("oracle has beta0 = 1"),
            Box::new(|w: &[Vec<f64>]| tempered[i1].wbic(&w[i1])),
        ),
        (
            "n_times_tn".into(),
            oracle.n_times_tn,
            Box::new(|w: &[Vec<f64>]| untempered.n_times_tn(&w[u])),
        ),
    ];
    for &(a, b) in &settings.pairs {
        let (ia, ib) = (idx(a), idx(b));
        let denom = log_n / a - log_n / b;
        let tempered = &tempered;
        quantities.push((
            format!("lambda_W({a},{b})"),
            oracle.lambda_w_at(a, b).expect("oracle has every pair"),
            Box::new(move |w: &[Vec<f64>]| (tempered[ia].wbic(&w[ia]) - tempered[ib].wbic(&w[ib])) / denom),
        ));
    }
    quantities.push((
        "lambda_I".into(),
        oracle.lambda_i,
        Box::new(|w: &[Vec<f64>]| tempered[i1].lambda_imai(&w[i1])),
    ));
    quantities.push((
        "lambda_T".into(),
        oracle.lambda_t,
        Box::new(|w: &[Vec<f64>]| {
            (tempered[i1].wbic(&w[i1]) - untempered.n_times_tn(&w[u])) / log_n
        }),
    ));

    let chains: Vec<usize> = tempered
        .iter()
        .map(ChainStats::chains)
        .chain([untempered.chains()])
        .collect();
    let unit: Vec<Vec<f64>> = chains.iter().map(|&c| unit_weights(c)).collect();
    let tolerance_se = 3.0;
    let comparisons: Vec<OracleComparison> = quantities
        .iter()
        .map(|(name, oracle_value, stat)| {
            let mcmc = stat(&unit);
            let mc_se = chain_bootstrap_se(&chains, cfg.bootstrap_resamples, seed, stat);
            let diff = (mcmc - oracle_value).abs();
            OracleComparison {
                quantity: name.clone(),
                oracle: *oracle_value,
                mcmc,
                mc_se,
                z: diff / mc_se,
                pass: diff <= tolerance_se * mc_se,
            }
        })
        .collect();

    let properties = oracle_properties(cfg, &data, log_n)?;
    let pass = comparisons.iter().all(|c| c.pass) && properties.iter().all(|p| p.pass);
    Ok(OracleCheckReport {
        config: cfg.clone(),
        n,
        seed,
        tolerance_se,
        comparisons,
        properties,
        min_acceptance: acc.0,
        max_acceptance: acc.1,
        oracle_record: oracle,
        pass,
    })
}

fn oracle_properties(
    cfg: &ExperimentConfig,
    data: &crate::models::Dataset,
    log_n: f64,
) -> Result<Vec<PropertyCheck>> {
    let model = &cfg.model;
    let nodes = QuadratureGrid::default_nodes(model.dim());

    let betas: Vec<f64> = (1..=20).map(|i| 0.05 * i as f64).collect();
    let grid = QuadratureGrid::fit(model, data, betas[0], nodes)?;
    let curve = quad_wbic_curve(model, data, &betas, &grid)?;
    let min_step = curve
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min);

    let beta = 1.0 / log_n;
    let h = 1e-4 * beta;
    let grid = QuadratureGrid::fit(model, data, beta - h, nodes)?;
    let pair = quad_wbic_curve(model, data, &[beta - h, beta + h], &grid)?;
    let slope = -beta * beta * (pair[1] - pair[0]) / (2.0 * h);
    let li = GridPosterior::new(model, data, beta, &grid)?.lambda_imai();
    let slope_gap = (slope - li).abs() / li.abs().max(1e-12);

    let coarse = GridPosterior::new(model, data, beta, &QuadratureGrid::fit(model, data, beta, nodes)?)?;
    let fine = GridPosterior::new(
        model,
        data,
        beta,
        &QuadratureGrid::fit(model, data, beta, 2 * nodes - 1)?,
    )?;
    let refine_gap = (coarse.wbic() - fine.wbic()).abs() / fine.wbic().abs().max(1e-12);

    Ok(vec![
        PropertyCheck {
            name: "wbic_decreasing_min_step".into(),
            value: min_step,
            pass: min_step > 0.0,
        },
        PropertyCheck {
            name: "imai_vs_wbic_slope_rel_gap".into(),
            value: slope_gap,
            pass: slope_gap < 1e-3,
        },
        PropertyCheck {
            name: "grid_refinement_rel_gap".into(),
            value: refine_gap,
            pass: refine_gap < 1e-6,
        },
    ])
}
