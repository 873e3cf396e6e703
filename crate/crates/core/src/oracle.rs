//! Deterministic quadrature for tempered-posterior expectations when
//! `d <= 2`. This is the sampling-free reference for every estimator.
//!
//! Integration happens in unconstrained coordinates on a tensor-product
//! trapezoid grid. The box is located by two coarse passes over
//! `[-BOX_HALF_WIDTH, BOX_HALF_WIDTH]^d`: nodes whose log weight is within
//! `MASS_WINDOW` nats of the maximum define the box for the next pass, padded
//! by two coarse spacings. The integrand decays like `exp(-MASS_WINDOW)` at
//! the box edges, where the trapezoid rule converges geometrically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    assemble_record, EstimateRecord, EstimatorSettings, PipelineParts, RecordMetadata, WbicPoint,
};
use crate::models::{Dataset, ModelSpec, TrueDistribution};
use crate::sampler::tempered_log_target;

pub const BOX_HALF_WIDTH: f64 = 12.0;
pub const MIN_NODES: usize = 64;
const COARSE_NODES: usize = 257;
const MASS_WINDOW: f64 = 60.0;

/// Tensor-product trapezoid grid over a box in unconstrained space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub nodes_per_dim: usize,
    pub bounds: Vec<(f64, f64)>,
    nodes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl QuadratureGrid {
    pub fn trapezoid(bounds: Vec<(f64, f64)>, nodes_per_dim: usize) -> Result<Self> {
        if nodes_per_dim < MIN_NODES {
            return Err(Error::Quadrature(format!(
                "need at least {MIN_NODES} nodes per dimension, got {nodes_per_dim}"
            )));
        }
        if bounds.iter().any(|&(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::Quadrature(format!("invalid bounds {bounds:?}")));
        }
        let (nodes, weights) = bounds
            .iter()
            .map(|&(lo, hi)| {
                let h = (hi - lo) / (nodes_per_dim - 1) as f64;
                let x: Vec<f64> = (0..nodes_per_dim).map(|i| lo + i as f64 * h).collect();
                let mut w = vec![h; nodes_per_dim];
                w[0] = 0.5 * h;
                w[nodes_per_dim - 1] = 0.5 * h;
                (x, w)
            })
            .unzip();
        Ok(QuadratureGrid {
            nodes_per_dim,
            bounds,
            nodes,
            weights,
        })
    }

    /// Default node count per dimension for a `dim`-dimensional model.
    pub fn default_nodes(dim: usize) -> usize {
        if dim == 1 {
            1025
        } else {
            257
        }
    }

    /// Locates the bulk of the tempered posterior and returns a fine grid
    /// covering it.
    pub fn fit(model: &ModelSpec, data: &Dataset, beta: f64, nodes_per_dim: usize) -> Result<Self> {
        let d = model.dim();
        if d > 2 {
            return Err(Error::Quadrature(format!(
                "quadrature supports d <= 2, model {model} has d = {d}"
            )));
        }
        let mut bounds = vec![(-BOX_HALF_WIDTH, BOX_HALF_WIDTH); d];
        for _ in 0..2 {
            let coarse = QuadratureGrid::trapezoid(bounds.clone(), COARSE_NODES)?;
            let spacing: Vec<f64> = coarse.bounds.iter().map(|&(lo, hi)| (hi - lo) / (COARSE_NODES - 1) as f64).collect();
            let points = coarse.points();
            let logs = points
                .iter()
                .map(|(z, _)| tempered_log_target(model, data, beta, z))
                .collect::<Result<Vec<_>>>()?;
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::Quadrature("target is -inf on the whole grid".into()));
            }
            let mut found = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
            for ((z, _), &l) in points.iter().zip(&logs) {
                if l >= max - MASS_WINDOW {
                    for (f, &zj) in found.iter_mut().zip(z) {
                        f.0 = f.0.min(zj);
                        f.1 = f.1.max(zj);
                    }
                }
            }
            bounds = found
                .iter()
                .zip(&spacing)
                .map(|(&(lo, hi), &h)| {
                    (
                        (lo - 2.0 * h).max(-BOX_HALF_WIDTH),
                        (hi + 2.0 * h).min(BOX_HALF_WIDTH),
                    )
                })
                .collect();
        }
        QuadratureGrid::trapezoid(bounds, nodes_per_dim)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Every node with its (positive) product weight.
    pub fn points(&self) -> Vec<(Vec<f64>, f64)> {
        match self.dim() {
            1 => self.nodes[0]
                .iter()
                .zip(&self.weights[0])
                .map(|(&x, &w)| (vec![x], w))
                .collect(),
            2 => {
                let mut out = Vec::with_capacity(self.nodes_per_dim * self.nodes_per_dim);
                for (&x, &wx) in self.nodes[0].iter().zip(&self.weights[0]) {
                    for (&y, &wy) in self.nodes[1].iter().zip(&self.weights[1]) {
                        out.push((vec![x, y], wx * wy));
                    }
                }
                out
            }
            _ => unreachable!("grids are built for d <= 2 only"),
        }
    }
}

/// The tempered posterior discretised on a grid: constrained parameters and
/// normalised log weights of every node with positive mass.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    pub beta: f64,
    pub grid_bounds: Vec<(f64, f64)>,
    thetas: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    total_loglik: Vec<f64>,
}

impl GridPosterior {
    pub fn new(model: &ModelSpec, data: &Dataset, beta: f64, grid: &QuadratureGrid) -> Result<Self> {
        if grid.dim() != model.dim() {
            return Err(Error::Quadrature("grid and model dimensions differ".into()));
        }
        let mut thetas = Vec::new();
        let mut log_weights = Vec::new();
        let mut total_loglik = Vec::new();
        let mut theta = vec![0.0; model.param_len()];
        for (z, w) in grid.points() {
            let target = tempered_log_target(model, data, beta, &z)?;
            if target == f64::NEG_INFINITY {
                continue;
            }
            if !target.is_finite() {
                return Err(Error::Quadrature(format!("non-finite integrand at z = {z:?}")));
            }
            model.to_constrained(&z, &mut theta);
            total_loglik.push(model.log_likelihood(data, &theta));
            log_weights.push(w.ln() + target);
            thetas.push(theta.clone());
        }
        let log_norm = crate::stats::log_sum_exp(&log_weights);
        if !log_norm.is_finite() {
            return Err(Error::Quadrature("normaliser is not finite".into()));
        }
        for lw in &mut log_weights {
            *lw -= log_norm;
        }
        Ok(GridPosterior {
            beta,
            grid_bounds: grid.bounds.clone(),
            thetas,
            log_weights,
            total_loglik,
        })
    }

    pub fn fit(model: &ModelSpec, data: &Dataset, beta: f64) -> Result<Self> {
        let grid = QuadratureGrid::fit(model, data, beta, QuadratureGrid::default_nodes(model.dim()))?;
        GridPosterior::new(model, data, beta, &grid)
    }

    /// Posterior expectation of `f(theta)`.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (theta, lw) in self.thetas.iter().zip(&self.log_weights) {
            let v = f(theta);
            if !v.is_finite() {
                return Err(Error::Quadrature(format!("non-finite f at theta = {theta:?}")));
            }
            acc += lw.exp() * v;
        }
        Ok(acc)
    }

    pub fn wbic(&self) -> f64 {
        -self.weighted_mean(&self.total_loglik)
    }

    /// Posterior variance of the total log-likelihood.
    pub fn loglik_variance(&self) -> f64 {
        let m = self.weighted_mean(&self.total_loglik);
        self.weighted_mean(
            &self
                .total_loglik
                .iter()
                .map(|l| (l - m) * (l - m))
                .collect::<Vec<_>>(),
        )
    }

    pub fn lambda_imai(&self) -> f64 {
        self.beta * self.beta * self.loglik_variance()
    }

    /// `log r(x_i | x)` for every observation, as a log-sum-exp over nodes.
    pub fn predictive_log_densities(&self, model: &ModelSpec, data: &Dataset) -> Vec<f64> {
        let n = data.n();
        let mut max = vec![f64::NEG_INFINITY; n];
        let mut sum = vec![0.0; n];
        let mut row = vec![0.0; n];
        for (theta, lw) in self.thetas.iter().zip(&self.log_weights) {
            model.log_density_row(data, theta, &mut row);
            for i in 0..n {
                let t = lw + row[i];
                if t <= max[i] {
                    sum[i] += (t - max[i]).exp();
                } else {
                    sum[i] = sum[i] * (max[i] - t).exp() + 1.0;
                    max[i] = t;
                }
            }
        }
        max.iter().zip(&sum).map(|(m, s)| m + s.ln()).collect()
    }

    fn weighted_mean(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.log_weights)
            .map(|(v, lw)| lw.exp() * v)
            .sum()
    }
}

/// `int f w_beta / int w_beta` with `w_beta = phi * prod p^beta`.
pub fn quad_posterior_expectation(
    model: &ModelSpec,
    data: &Dataset,
    beta: f64,
    f: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    GridPosterior::fit(model, data, beta)?.expectation(f)
}

/// Quadrature WBIC at inverse temperature `beta`.
pub fn quad_wbic(model: &ModelSpec, data: &Dataset, beta: f64) -> Result<f64> {
    Ok(GridPosterior::fit(model, data, beta)?.wbic())
}

/// WBIC on a fixed grid at several temperatures. A shared grid keeps the
/// curve smooth in `beta`, which finite differences rely on.
pub fn quad_wbic_curve(
    model: &ModelSpec,
    data: &Dataset,
    betas: &[f64],
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    betas
        .iter()
        .map(|&b| Ok(GridPosterior::new(model, data, b, grid)?.wbic()))
        .collect()
}

/// Every estimator computed from quadrature expectations, in the same
/// record layout the sampling pipeline produces.
pub fn quad_lambda_estimates(
    model: &ModelSpec,
    truth: Option<&TrueDistribution>,
    data: &Dataset,
    settings: &EstimatorSettings,
) -> Result<EstimateRecord> {
    settings.validate()?;
    let n = data.n();
    if n < 2 {
        return Err(Error::SampleSizeTooSmall(n));
    }
    let log_n = (n as f64).ln();
    let mut bounds = Vec::new();
    let mut wbic_by_beta = Vec::new();
    let mut lambda_i = f64::NAN;
    for beta0 in settings.required_beta0s() {
        let beta = beta0 / log_n;
        let post = GridPosterior::fit(model, data, beta)?;
        if beta0 == 1.0 {
            lambda_i = post.lambda_imai();
        }
        bounds.push(post.grid_bounds.clone());
        wbic_by_beta.push(WbicPoint {
            beta0,
            beta,
            wbic: post.wbic(),
        });
    }
    let untempered = GridPosterior::fit(model, data, 1.0)?;
    bounds.push(untempered.grid_bounds.clone());
    let log_r = untempered.predictive_log_densities(model, data);
    let n_times_tn = -log_r.iter().sum::<f64>();
    let metadata = RecordMetadata {
        method: "quadrature".into(),
        prior: model.prior_description(),
        mcmc: None,
        min_acceptance: None,
        max_acceptance: None,
        quadrature_bounds: Some(bounds),
    };
    assemble_record(
        PipelineParts {
            wbic_by_beta,
            lambda_i,
            n_times_tn,
            plugin_loss_at_beta1: untempered.wbic(),
        },
        settings,
        n,
        metadata,
        model,
        truth,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::sample_true;

    fn n01() -> TrueDistribution {
        TrueDistribution::Normal { mean: 0.0, sd: 1.0 }
    }

    #[test]
    fn grid_invariants() {
        assert!(QuadratureGrid::trapezoid(vec![(-1.0, 1.0)], 32).is_err());
        assert!(QuadratureGrid::trapezoid(vec![(1.0, -1.0)], 64).is_err());
        let g = QuadratureGrid::trapezoid(vec![(-1.0, 1.0), (0.0, 2.0)], 65).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 65 * 65);
        assert!(pts.iter().all(|(_, w)| *w > 0.0));
        assert!((pts.iter().map(|(_, w)| w).sum::<f64>() - 4.0).abs() < 1e-12);
        let m = ModelSpec::gaussian_mixture(2).unwrap();
        let data = sample_true(&n01(), 10, 1).unwrap();
        assert!(QuadratureGrid::fit(&m, &data, 1.0, 128).is_err());
    }

    /// Conjugate N(theta, 1) / N(0, 1): posterior mean n xbar / (n + 1).
    #[test]
    fn conjugate_mean_and_normalisation() {
        let m = ModelSpec::normal_mean();
        let data = sample_true(&TrueDistribution::Normal { mean: 0.3, sd: 1.0 }, 40, 4).unwrap();
        let n = data.n() as f64;
        let mean = quad_posterior_expectation(&m, &data, 1.0, |t| t[0]).unwrap();
        assert!((mean - n * data.mean() / (n + 1.0)).abs() < 1e-8);
        let var = quad_posterior_expectation(&m, &data, 1.0, |t| (t[0] - mean).powi(2)).unwrap();
        assert!((var - 1.0 / (n + 1.0)).abs() < 1e-8);
        let one = quad_posterior_expectation(&m, &data, 1.0, |_| 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_refinement_is_stable() {
        let cases = [
            (ModelSpec::example1_uniform_normal(), 500usize),
            (ModelSpec::normal_meanvar(), 300),
        ];
        for (m, n) in cases {
            let data = sample_true(&n01(), n, 12).unwrap();
            for beta in [1.0 / (n as f64).ln(), 1.0] {
                let nodes = QuadratureGrid::default_nodes(m.dim());
                let g1 = QuadratureGrid::fit(&m, &data, beta, nodes).unwrap();
                let g2 = QuadratureGrid::fit(&m, &data, beta, 2 * nodes - 1).unwrap();
                let p1 = GridPosterior::new(&m, &data, beta, &g1).unwrap();
                let p2 = GridPosterior::new(&m, &data, beta, &g2).unwrap();
                let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
                assert!(rel(p1.wbic(), p2.wbic()) < 1e-6, "{m} wbic");
                assert!(rel(p1.loglik_variance(), p2.loglik_variance()) < 1e-6, "{m} var");
                let t1: f64 = p1.predictive_log_densities(&m, &data).iter().sum();
                let t2: f64 = p2.predictive_log_densities(&m, &data).iter().sum();
                assert!(rel(t1, t2) < 1e-6, "{m} tn");
                let e1 = p1.expectation(|t| t[0]).unwrap();
                let e2 = p2.expectation(|t| t[0]).unwrap();
                assert!((e1 - e2).abs() < 1e-6 * e1.abs().max(1e-2), "{m} mean");
            }
        }
    }

    #[test]
    fn wbic_decreasing_in_beta() {
        let m = ModelSpec::example1_uniform_normal();
        let data = sample_true(&n01(), 200, 3).unwrap();
        let betas: Vec<f64> = (1..=20).map(|i| 0.05 * i as f64).collect();
        let grid = QuadratureGrid::fit(&m, &data, betas[0], 2049).unwrap();
        let curve = quad_wbic_curve(&m, &data, &betas, &grid).unwrap();
        assert!(curve.windows(2).all(|w| w[1] < w[0]), "{curve:?}");
    }

    /// d WBIC / d beta = -Var_beta[sum log p], so lambda_I is
    /// -beta^2 times the derivative.
    #[test]
    fn imai_matches_wbic_derivative() {
        let m = ModelSpec::example1_uniform_normal();
        let data = sample_true(&n01(), 500, 9).unwrap();
        let beta = 1.0 / 500f64.ln();
        let h = 1e-4 * beta;
        let grid = QuadratureGrid::fit(&m, &data, beta - h, 2049).unwrap();
        let curve = quad_wbic_curve(&m, &data, &[beta - h, beta + h], &grid).unwrap();
        let deriv = (curve[1] - curve[0]) / (2.0 * h);
        let li = GridPosterior::new(&m, &data, beta, &grid).unwrap().lambda_imai();
        assert!(((-beta * beta * deriv) - li).abs() < 1e-3 * li, "{li} vs {}", -beta * beta * deriv);
    }

    #[test]
    fn estimates_for_example1() {
        let m = ModelSpec::example1_uniform_normal();
        let data = sample_true(&n01(), 1000, 17).unwrap();
        let rec = quad_lambda_estimates(&m, Some(&n01()), &data, &EstimatorSettings::default()).unwrap();
        assert!((rec.lambda_t - 0.5).abs() <= 0.25, "{}", rec.lambda_t);
        assert!(rec.n_times_tn <= rec.plugin_loss_at_beta1);
        assert_eq!(rec.true_lambda, Some(0.5));
        assert_eq!(rec.metadata.method, "quadrature");
        let log_n = rec.log_n;
        let (w1, w5) = (rec.wbic_at(1.0).unwrap(), rec.wbic_at(5.0).unwrap());
        let fwd = crate::estimators::lambda_watanabe(w1, w5, 1.0 / log_n, 5.0 / log_n).unwrap();
        let rev = crate::estimators::lambda_watanabe(w5, w1, 5.0 / log_n, 1.0 / log_n).unwrap();
        assert_eq!(fwd, rev);
        assert_eq!(rec.lambda_w_at(1.0, 5.0), Some(fwd));
    }
}
