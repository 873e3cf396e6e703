//! Fixtures shared by the criterion benchmarks under `benches/`.

use lambdahat::{run_mcmc, sample_true, Dataset, McmcConfig, ModelSpec, PosteriorDraws, TrueDistribution};

/// `poisson-mix:2` against Po(3).
pub fn poisson_case(n: usize) -> (ModelSpec, Dataset) {
    let model = ModelSpec::poisson_mixture(2).expect("valid component count");
    let data = sample_true(&TrueDistribution::Poisson { rate: 3.0 }, n, 1).expect("valid truth");
    (model, data)
}

/// `example1` against N(0, 1).
pub fn example1_case(n: usize) -> (ModelSpec, Dataset) {
    let data = sample_true(&TrueDistribution::Normal { mean: 0.0, sd: 1.0 }, n, 1).expect("valid truth");
    (ModelSpec::example1_uniform_normal(), data)
}

/// `gauss-mix:4` against N(0, 1).
pub fn gauss_mix_case(n: usize) -> (ModelSpec, Dataset) {
    let model = ModelSpec::gaussian_mixture(4).expect("valid component count");
    let data = sample_true(&TrueDistribution::Normal { mean: 0.0, sd: 1.0 }, n, 1).expect("valid truth");
    (model, data)
}

pub fn short_mcmc(total_iters: usize) -> McmcConfig {
    McmcConfig {
        total_iters,
        burn_in: total_iters / 2,
        seed: 3,
        ..McmcConfig::default()
    }
}

/// Untempered draws for the estimator benchmarks.
pub fn untempered_draws(model: &ModelSpec, data: &Dataset, total_iters: usize) -> PosteriorDraws {
    run_mcmc(model, data, 1.0, &short_mcmc(total_iters)).expect("sampler runs")
}
