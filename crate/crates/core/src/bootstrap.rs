//! Monte-Carlo standard errors by resampling whole chains.
//!
//! Each sampling run is reduced to per-chain sufficient statistics, so a
//! bootstrap replicate only reweights chains instead of copying draw
//! matrices. With unit weights every statistic reproduces the direct
//! estimate on the full draw set.

use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sampler::PosteriorDraws;
use crate::stats::sample_variance;

#[derive(Debug, Clone)]
pub struct ChainStats {
    beta: f64,
    counts: Vec<f64>,
    center: f64,
    /// Per chain: sum of (total log-likelihood - center).
    sums: Vec<f64>,
    /// Per chain: sum of squared centred totals.
    sumsq: Vec<f64>,
    /// Per datum: max log-density over every draw.
    shifts: Vec<f64>,
    /// Per chain, per datum: sum of exp(log-density - shift).
    expsums: Vec<Vec<f64>>,
}

impl ChainStats {
    /// Summarises `draws`. The per-datum predictive sums are only collected
    /// when `predictive` is set (they cost one pass over the K x n matrix).
    pub fn from_draws(draws: &PosteriorDraws, predictive: bool) -> Self {
        let totals = draws.total_loglik();
        let center = crate::stats::mean(totals);
        let ranges = draws.chain_ranges();
        let counts = ranges.iter().map(|r| r.len() as f64).collect();
        let sums = ranges
            .iter()
            .map(|r| totals[r.clone()].iter().map(|t| t - center).sum())
            .collect();
        let sumsq = ranges
            .iter()
            .map(|r| totals[r.clone()].iter().map(|t| (t - center).powi(2)).sum())
            .collect();
        let (shifts, expsums) = if predictive {
            let ll = draws.loglik();
            let mut shifts = vec![f64::NEG_INFINITY; draws.n()];
            for row in ll.axis_iter(Axis(0)) {
                for (s, &v) in shifts.iter_mut().zip(row.iter()) {
                    *s = s.max(v);
                }
            }
            let expsums = ranges
                .iter()
                .map(|r| {
                    let mut acc = vec![0.0; draws.n()];
                    for row in ll.slice(ndarray::s![r.clone(), ..]).axis_iter(Axis(0)) {
                        for ((a, &v), &s) in acc.iter_mut().zip(row.iter()).zip(&shifts) {
                            *a += (v - s).exp();
                        }
                    }
                    acc
                })
                .collect();
            (shifts, expsums)
        } else {
            (Vec::new(), Vec::new())
        };
        ChainStats {
            beta: draws.beta(),
            counts,
            center,
            sums,
            sumsq,
            shifts,
            expsums,
        }
    }

    pub fn chains(&self) -> usize {
        self.counts.len()
    }

    fn weighted(&self, w: &[f64], xs: &[f64]) -> f64 {
        w.iter().zip(xs).map(|(a, b)| a * b).sum()
    }

    fn count(&self, w: &[f64]) -> f64 {
        self.weighted(w, &self.counts)
    }

    pub fn wbic(&self, w: &[f64]) -> f64 {
        -(self.center + self.weighted(w, &self.sums) / self.count(w))
    }

    pub fn loglik_variance(&self, w: &[f64]) -> f64 {
        let c = self.count(w);
        let m1 = self.weighted(w, &self.sums) / c;
        let m2 = self.weighted(w, &self.sumsq) / c;
        (m2 - m1 * m1).max(0.0)
    }

    pub fn lambda_imai(&self, w: &[f64]) -> f64 {
        self.beta * self.beta * self.loglik_variance(w)
    }

    /// `n T_n` under the reweighted draws. Panics if the summary was built
    /// without predictive sums.
    pub fn n_times_tn(&self, w: &[f64]) -> f64 {
        assert!(!self.expsums.is_empty(), "predictive sums were not collected");
        let c = self.count(w).ln();
        -self
            .shifts
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let acc: f64 = w.iter().zip(&self.expsums).map(|(wc, e)| wc * e[i]).sum();
                s + acc.ln() - c
            })
            .sum::<f64>()
    }
}

/// Unit weights for `chains` chains.
pub fn unit_weights(chains: usize) -> Vec<f64> {
    vec![1.0; chains]
}

/// Bootstrap standard error of `stat` when the chains of every run are
/// resampled with replacement, independently across runs. `stat` receives
/// one multiplicity vector per run.
pub fn chain_bootstrap_se(
    chains_per_run: &[usize],
    resamples: usize,
    seed: u64,
    stat: impl Fn(&[Vec<f64>]) -> f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..resamples)
        .map(|_| {
            let weights: Vec<Vec<f64>> = chains_per_run
                .iter()
                .map(|&c| {
                    let mut w = vec![0.0; c];
                    for _ in 0..c {
                        w[rng.random_range(0..c)] += 1.0;
                    }
                    w
                })
                .collect();
            stat(&weights)
        })
        .collect();
    sample_variance(&values).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{empirical_loss, lambda_imai, wbic};
    use crate::models::{sample_true, ModelSpec, TrueDistribution};
    use crate::sampler::{run_mcmc, McmcConfig};

    #[test]
    fn unit_weights_reproduce_direct_estimates() {
        let m = ModelSpec::example1_uniform_normal();
        let data = sample_true(&TrueDistribution::Normal { mean: 0.0, sd: 1.0 }, 80, 2).unwrap();
        let cfg = McmcConfig {
            total_iters: 1000,
            burn_in: 500,
            chains: 4,
            seed: 3,
            ..Default::default()
        };
        for beta in [0.25, 1.0] {
            let d = run_mcmc(&m, &data, beta, &cfg).unwrap();
            let s = ChainStats::from_draws(&d, true);
            let w = unit_weights(s.chains());
            assert!((s.wbic(&w) - wbic(&d).unwrap()).abs() < 1e-9);
            assert!((s.lambda_imai(&w) - lambda_imai(&d).unwrap()).abs() < 1e-9);
            if beta == 1.0 {
                let direct = data.n() as f64 * empirical_loss(&d).unwrap();
                assert!((s.n_times_tn(&w) - direct).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bootstrap_se_of_constant_is_zero_and_deterministic() {
        assert_eq!(chain_bootstrap_se(&[4], 50, 1, |_| 3.0), 0.0);
        let f = |w: &[Vec<f64>]| w[0][0] + 2.0 * w[1][1];
        assert_eq!(chain_bootstrap_se(&[3, 5], 100, 9, f), chain_bootstrap_se(&[3, 5], 100, 9, f));
        assert!(chain_bootstrap_se(&[3, 5], 100, 9, f) > 0.0);
    }
}
