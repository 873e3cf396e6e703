//! Statistical models, true distributions and datasets.
//!
//! Every model maps an unconstrained vector `z` in `R^d` onto its constrained
//! parameter vector `theta` and reports the log-Jacobian of that map, so the
//! sampler and the quadrature oracle can work in `R^d` throughout. The
//! constrained vector may be longer than `d` (mixture weights are stored in
//! full even though they live on a `(H-1)`-simplex).

use std::f64::consts::LN_2;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::stats::log1p_exp;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard deviation of the normal prior on mixture component means.
pub const GAUSS_MEAN_PRIOR_SD: f64 = 10.0;
/// Gamma(shape, rate) prior on Poisson mixture rates.
pub const POISSON_RATE_PRIOR: (f64, f64) = (2.0, 0.5);
/// Prior on the location of `normal-meanvar`.
pub const NORMAL_MU_PRIOR_SD: f64 = 10.0;
/// Prior on `log sigma` of `normal-meanvar`.
pub const NORMAL_LOG_SIGMA_PRIOR_SD: f64 = 2.0;

fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    -0.5 * u * u - sd.ln() - LN_SQRT_2PI
}

fn ln_factorial(x: f64) -> f64 {
    ln_gamma(x + 1.0)
}

/// Kind of value an observation takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    Real,
    /// Non-negative integers.
    Count,
}

impl Support {
    pub fn contains(self, x: f64) -> bool {
        match self {
            Support::Real => x.is_finite(),
            Support::Count => x.is_finite() && x >= 0.0 && x.fract() == 0.0,
        }
    }
}

/// Distinct values of a count dataset with multiplicities, so likelihoods
/// cost one density evaluation per distinct value.
#[derive(Debug, Clone, PartialEq)]
struct Tally {
    distinct: Vec<f64>,
    counts: Vec<f64>,
    /// `index[i]` is the position of observation `i` in `distinct`.
    index: Vec<usize>,
}

impl Tally {
    fn build(values: &[f64]) -> Self {
        let mut distinct: Vec<f64> = values.to_vec();
        distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        distinct.dedup();
        let mut counts = vec![0.0; distinct.len()];
        let index: Vec<usize> = values
            .iter()
            .map(|v| {
                let j = distinct
                    .binary_search_by(|d| d.partial_cmp(v).expect("finite"))
                    .expect("value present");
                counts[j] += 1.0;
                j
            })
            .collect();
        Tally {
            distinct,
            counts,
            index,
        }
    }
}

/// An ordered i.i.d. sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    support: Support,
    tally: Option<Tally>,
}

impl Dataset {
    pub fn new(values: Vec<f64>, support: Support) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("dataset must be non-empty".into()));
        }
        if let Some(bad) = values.iter().find(|&&x| !support.contains(x)) {
            return Err(Error::InvalidArgument(format!(
                "observation {bad} outside {support:?} support"
            )));
        }
        let tally = (support == Support::Count).then(|| Tally::build(&values));
        Ok(Dataset {
            values,
            support,
            tally,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.values)
    }
}

/// Which family a [`ModelSpec`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `N(mu, sigma^2)` with both parameters unknown.
    NormalMeanVar,
    /// `N(theta, 1)` with a standard normal prior (conjugate fixture).
    NormalMean,
    /// `N(theta, 1)` with a uniform prior on `[-1, 1]`.
    Example1,
    PoissonMixture { components: usize },
    /// Unit-variance Gaussian mixture.
    GaussianMixture { components: usize },
}

/// A statistical model `p(x | theta)` together with its prior and the
/// unconstrained parameterisation used by the samplers.
///
/// Values are immutable and cheap to clone; every method is pure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec {
    kind: ModelKind,
}

impl ModelSpec {
    pub fn normal_meanvar() -> Self {
        ModelSpec {
            kind: ModelKind::NormalMeanVar,
        }
    }

    pub fn normal_mean() -> Self {
        ModelSpec {
            kind: ModelKind::NormalMean,
        }
    }

    pub fn example1_uniform_normal() -> Self {
        ModelSpec {
            kind: ModelKind::Example1,
        }
    }

    pub fn poisson_mixture(components: usize) -> Result<Self> {
        if components == 0 {
            return Err(Error::InvalidArgument(
                "poisson mixture needs at least one component".into(),
            ));
        }
        Ok(ModelSpec {
            kind: ModelKind::PoissonMixture { components },
        })
    }

    pub fn gaussian_mixture(components: usize) -> Result<Self> {
        if components == 0 {
            return Err(Error::InvalidArgument(
                "gaussian mixture needs at least one component".into(),
            ));
        }
        Ok(ModelSpec {
            kind: ModelKind::GaussianMixture { components },
        })
    }

    /// Parses a zoo id: `normal-meanvar`, `normal-mean`, `example1`,
    /// `poisson-mix:H`, `gauss-mix:K`.
    pub fn parse(id: &str) -> Result<Self> {
        let unknown = |reason: &str| Error::UnknownId {
            id: id.to_string(),
            reason: reason.to_string(),
        };
        let (head, arg) = match id.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (id, None),
        };
        let count = |arg: Option<&str>| -> Result<usize> {
            arg.ok_or_else(|| unknown("missing component count"))?
                .trim()
                .parse::<usize>()
                .map_err(|_| unknown("component count must be a positive integer"))
        };
        match head {
            "normal-meanvar" if arg.is_none() => Ok(Self::normal_meanvar()),
            "normal-mean" if arg.is_none() => Ok(Self::normal_mean()),
            "example1" if arg.is_none() => Ok(Self::example1_uniform_normal()),
            "poisson-mix" => {
                Self::poisson_mixture(count(arg)?).map_err(|e| unknown(&e.to_string()))
            }
            "gauss-mix" => {
                Self::gaussian_mixture(count(arg)?).map_err(|e| unknown(&e.to_string()))
            }
            _ => Err(unknown(
                "expected normal-meanvar, normal-mean, example1, poisson-mix:H or gauss-mix:K",
            )),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn id(&self) -> String {
        match self.kind {
            ModelKind::NormalMeanVar => "normal-meanvar".into(),
            ModelKind::NormalMean => "normal-mean".into(),
            ModelKind::Example1 => "example1".into(),
            ModelKind::PoissonMixture { components } => format!("poisson-mix:{components}"),
            ModelKind::GaussianMixture { components } => format!("gauss-mix:{components}"),
        }
    }

    /// Dimension `d` of the (unconstrained) parameter space.
    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::NormalMeanVar => 2,
            ModelKind::NormalMean | ModelKind::Example1 => 1,
            ModelKind::PoissonMixture { components: h }
            | ModelKind::GaussianMixture { components: h } => 2 * h - 1,
        }
    }

    /// Length of the constrained parameter vector.
    pub fn param_len(&self) -> usize {
        match self.kind {
            ModelKind::PoissonMixture { components: h }
            | ModelKind::GaussianMixture { components: h } => 2 * h,
            _ => self.dim(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self.kind {
            ModelKind::NormalMeanVar => vec!["mu".into(), "sigma".into()],
            ModelKind::NormalMean | ModelKind::Example1 => vec!["theta".into()],
            ModelKind::PoissonMixture { components: h } => (0..h)
                .map(|k| format!("weight{k}"))
                .chain((0..h).map(|k| format!("rate{k}")))
                .collect(),
            ModelKind::GaussianMixture { components: h } => (0..h)
                .map(|k| format!("weight{k}"))
                .chain((0..h).map(|k| format!("mean{k}")))
                .collect(),
        }
    }

    pub fn support(&self) -> Support {
        match self.kind {
            ModelKind::PoissonMixture { .. } => Support::Count,
            _ => Support::Real,
        }
    }

    pub fn prior_description(&self) -> String {
        match self.kind {
            ModelKind::NormalMeanVar => format!(
                "mu ~ N(0, {NORMAL_MU_PRIOR_SD}^2); log sigma ~ N(0, {NORMAL_LOG_SIGMA_PRIOR_SD}^2)"
            ),
            ModelKind::NormalMean => "theta ~ N(0, 1)".into(),
            ModelKind::Example1 => "theta ~ Uniform[-1, 1]".into(),
            ModelKind::PoissonMixture { .. } => format!(
                "weights ~ Dirichlet(1, ..., 1); rates ~ Gamma(shape {}, rate {})",
                POISSON_RATE_PRIOR.0, POISSON_RATE_PRIOR.1
            ),
            ModelKind::GaussianMixture { .. } => format!(
                "weights ~ Dirichlet(1, ..., 1); means ~ N(0, {GAUSS_MEAN_PRIOR_SD}^2)"
            ),
        }
    }

    /// Maps `z` in `R^d` to `theta`, returning `log |d theta / d z|`.
    pub fn to_constrained(&self, z: &[f64], theta: &mut [f64]) -> f64 {
        debug_assert_eq!(z.len(), self.dim());
        debug_assert_eq!(theta.len(), self.param_len());
        match self.kind {
            ModelKind::NormalMeanVar => {
                theta[0] = z[0];
                theta[1] = z[1].exp();
                z[1]
            }
            ModelKind::NormalMean => {
                theta[0] = z[0];
                0.0
            }
            ModelKind::Example1 => {
                // theta = tanh(z / 2); d theta / dz = (1 - theta^2) / 2
                let half = 0.5 * z[0];
                theta[0] = half.tanh();
                -LN_2 - 2.0 * ln_cosh(half)
            }
            ModelKind::PoissonMixture { components: h } => {
                let (w, rates) = theta.split_at_mut(h);
                let mut log_jac = stick_breaking_forward(&z[..h - 1], w);
                for (r, &zr) in rates.iter_mut().zip(&z[h - 1..]) {
                    *r = zr.exp();
                    log_jac += zr;
                }
                log_jac
            }
            ModelKind::GaussianMixture { components: h } => {
                let (w, means) = theta.split_at_mut(h);
                let log_jac = stick_breaking_forward(&z[..h - 1], w);
                means.copy_from_slice(&z[h - 1..]);
                log_jac
            }
        }
    }

    pub fn to_unconstrained(&self, theta: &[f64], z: &mut [f64]) {
        match self.kind {
            ModelKind::NormalMeanVar => {
                z[0] = theta[0];
                z[1] = theta[1].ln();
            }
            ModelKind::NormalMean => z[0] = theta[0],
            ModelKind::Example1 => z[0] = 2.0 * theta[0].atanh(),
            ModelKind::PoissonMixture { components: h } => {
                stick_breaking_inverse(&theta[..h], &mut z[..h - 1]);
                for (zr, r) in z[h - 1..].iter_mut().zip(&theta[h..]) {
                    *zr = r.ln();
                }
            }
            ModelKind::GaussianMixture { components: h } => {
                stick_breaking_inverse(&theta[..h], &mut z[..h - 1]);
                z[h - 1..].copy_from_slice(&theta[h..]);
            }
        }
    }

    /// `log phi(theta)`; `-inf` outside the prior support.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        match self.kind {
            ModelKind::NormalMeanVar => {
                let (mu, sigma) = (theta[0], theta[1]);
                if !(sigma > 0.0) || !mu.is_finite() {
                    return f64::NEG_INFINITY;
                }
                let ls = sigma.ln();
                normal_logpdf(mu, 0.0, NORMAL_MU_PRIOR_SD)
                    + normal_logpdf(ls, 0.0, NORMAL_LOG_SIGMA_PRIOR_SD)
                    - ls
            }
            ModelKind::NormalMean => normal_logpdf(theta[0], 0.0, 1.0),
            ModelKind::Example1 => {
                if theta[0].abs() <= 1.0 {
                    -LN_2
                } else {
                    f64::NEG_INFINITY
                }
            }
            ModelKind::PoissonMixture { components: h } => {
                let Some(lp) = dirichlet1_log_density(&theta[..h]) else {
                    return f64::NEG_INFINITY;
                };
                let (shape, rate) = POISSON_RATE_PRIOR;
                theta[h..].iter().fold(lp, |acc, &r| {
                    if r > 0.0 {
                        acc + shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * r.ln()
                            - rate * r
                    } else {
                        f64::NEG_INFINITY
                    }
                })
            }
            ModelKind::GaussianMixture { components: h } => {
                let Some(lp) = dirichlet1_log_density(&theta[..h]) else {
                    return f64::NEG_INFINITY;
                };
                theta[h..]
                    .iter()
                    .fold(lp, |acc, &m| acc + normal_logpdf(m, 0.0, GAUSS_MEAN_PRIOR_SD))
            }
        }
    }

    /// Per-datum `log p(x | theta)`.
    pub fn log_density(&self, x: f64, theta: &[f64]) -> f64 {
        self.prepare(theta).log_density(x)
    }

    /// `sum_i log p(x_i | theta)`.
    pub fn log_likelihood(&self, data: &Dataset, theta: &[f64]) -> f64 {
        let eval = self.prepare(theta);
        match &data.tally {
            Some(t) => t
                .distinct
                .iter()
                .zip(&t.counts)
                .map(|(&x, &c)| c * eval.log_density(x))
                .sum(),
            None => data.values.iter().map(|&x| eval.log_density(x)).sum(),
        }
    }

    /// Writes `log p(x_i | theta)` for every observation into `out`.
    pub fn log_density_row(&self, data: &Dataset, theta: &[f64], out: &mut [f64]) {
        let eval = self.prepare(theta);
        match &data.tally {
            Some(t) => {
                let per: Vec<f64> = t.distinct.iter().map(|&x| eval.log_density(x)).collect();
                for (o, &j) in out.iter_mut().zip(&t.index) {
                    *o = per[j];
                }
            }
            None => {
                for (o, &x) in out.iter_mut().zip(&data.values) {
                    *o = eval.log_density(x);
                }
            }
        }
    }

    /// Ground-truth learning coefficient for this model paired with `truth`,
    /// when one is known.
    pub fn true_lambda(&self, truth: &TrueDistribution) -> Option<f64> {
        match (self.kind, truth) {
            // Regular and realizable: lambda = d / 2.
            (ModelKind::NormalMeanVar, TrueDistribution::Normal { .. }) => Some(1.0),
            (ModelKind::NormalMean, TrueDistribution::Normal { sd, .. }) if *sd == 1.0 => {
                Some(0.5)
            }
            (ModelKind::Example1, TrueDistribution::Normal { mean, sd })
                if *sd == 1.0 && mean.abs() < 1.0 =>
            {
                Some(0.5)
            }
            (ModelKind::PoissonMixture { components: h }, truth) => {
                let r = truth.poisson_component_count()?;
                (r <= h).then(|| (3 * r + h - 2) as f64 / 4.0)
            }
            (ModelKind::GaussianMixture { components }, TrueDistribution::Normal { sd, .. })
                if *sd == 1.0 && matches!(components, 1 | 2 | 4) =>
            {
                Some((components + 1) as f64 / 4.0)
            }
            _ => None,
        }
    }

    fn prepare<'a>(&self, theta: &'a [f64]) -> Prepared<'a> {
        match self.kind {
            ModelKind::NormalMeanVar => Prepared::Normal {
                mean: theta[0],
                sd: theta[1],
                ln_sd: theta[1].ln(),
            },
            ModelKind::NormalMean | ModelKind::Example1 => Prepared::Normal {
                mean: theta[0],
                sd: 1.0,
                ln_sd: 0.0,
            },
            ModelKind::PoissonMixture { components: h } => Prepared::PoissonMix {
                ln_weights: theta[..h].iter().map(|w| w.ln()).collect(),
                rates: &theta[h..],
                ln_rates: theta[h..].iter().map(|r| r.ln()).collect(),
            },
            ModelKind::GaussianMixture { components: h } => Prepared::GaussMix {
                ln_weights: theta[..h].iter().map(|w| w.ln()).collect(),
                means: &theta[h..],
            },
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.id()
    }
}

/// A model density with `theta`-dependent logarithms hoisted out of the
/// per-datum loop.
enum Prepared<'a> {
    Normal {
        mean: f64,
        sd: f64,
        ln_sd: f64,
    },
    PoissonMix {
        ln_weights: Vec<f64>,
        rates: &'a [f64],
        ln_rates: Vec<f64>,
    },
    GaussMix {
        ln_weights: Vec<f64>,
        means: &'a [f64],
    },
}

impl Prepared<'_> {
    fn log_density(&self, x: f64) -> f64 {
        match self {
            Prepared::Normal { mean, sd, ln_sd } => {
                let u = (x - mean) / sd;
                -0.5 * u * u - ln_sd - LN_SQRT_2PI
            }
            Prepared::PoissonMix {
                ln_weights,
                rates,
                ln_rates,
            } => {
                let terms = ln_weights
                    .iter()
                    .zip(rates.iter().zip(ln_rates))
                    .map(|(lw, (r, lr))| lw + x * lr - r);
                streaming_log_sum_exp(terms) - ln_factorial(x)
            }
            Prepared::GaussMix { ln_weights, means } => {
                let terms = ln_weights.iter().zip(means.iter()).map(|(lw, m)| {
                    let u = x - m;
                    lw - 0.5 * u * u
                });
                streaming_log_sum_exp(terms) - LN_SQRT_2PI
            }
        }
    }
}

fn streaming_log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for t in terms {
        if t <= max {
            sum += (t - max).exp();
        } else if t.is_finite() {
            sum = sum * (max - t).exp() + 1.0;
            max = t;
        }
    }
    if max == f64::NEG_INFINITY {
        max
    } else {
        max + sum.ln()
    }
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// Stick-breaking map from `R^(H-1)` onto the open `(H-1)`-simplex. The
/// offsets `log(H-1-k)` send `z = 0` to the uniform weight vector.
pub fn stick_breaking_forward(z: &[f64], weights: &mut [f64]) -> f64 {
    let h = weights.len();
    debug_assert_eq!(z.len() + 1, h);
    let mut remaining = 1.0;
    let mut log_remaining = 0.0;
    let mut log_jac = 0.0;
    for (k, &zk) in z.iter().enumerate() {
        let a = zk - ((h - 1 - k) as f64).ln();
        let log_v = -log1p_exp(-a);
        let log_1mv = -log1p_exp(a);
        weights[k] = remaining * log_v.exp();
        log_jac += log_v + log_1mv + log_remaining;
        remaining *= log_1mv.exp();
        log_remaining += log_1mv;
    }
    weights[h - 1] = remaining;
    log_jac
}

pub fn stick_breaking_inverse(weights: &[f64], z: &mut [f64]) {
    let h = weights.len();
    let mut remaining = 1.0;
    for k in 0..h - 1 {
        let v = weights[k] / remaining;
        z[k] = (v / (1.0 - v)).ln() + ((h - 1 - k) as f64).ln();
        remaining -= weights[k];
    }
}

/// Dirichlet(1, ..., 1) log-density on the simplex, `None` off it.
fn dirichlet1_log_density(weights: &[f64]) -> Option<f64> {
    let sum: f64 = weights.iter().sum();
    let on_simplex = weights.iter().all(|&w| w > 0.0) && (sum - 1.0).abs() < 1e-9;
    on_simplex.then(|| ln_gamma(weights.len() as f64))
}

/// The data-generating distribution `q(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TrueDistribution {
    Normal { mean: f64, sd: f64 },
    Poisson { rate: f64 },
    PoissonMixture { weights: Vec<f64>, rates: Vec<f64> },
}

impl TrueDistribution {
    /// Parses `normal:MU,SIGMA`, `poisson:RATE` or
    /// `poisson-mix:W1@R1,W2@R2,...`.
    pub fn parse(id: &str) -> Result<Self> {
        let unknown = |reason: &str| Error::UnknownId {
            id: id.to_string(),
            reason: reason.to_string(),
        };
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| unknown(&format!("`{s}` is not a finite number")))
        };
        let (head, arg) = id
            .split_once(':')
            .ok_or_else(|| unknown("expected `family:parameters`"))?;
        let dist = match head {
            "normal" => {
                let (m, s) = arg
                    .split_once(',')
                    .ok_or_else(|| unknown("expected normal:MU,SIGMA"))?;
                TrueDistribution::Normal {
                    mean: num(m)?,
                    sd: num(s)?,
                }
            }
            "poisson" => TrueDistribution::Poisson { rate: num(arg)? },
            "poisson-mix" => {
                let mut weights = Vec::new();
                let mut rates = Vec::new();
                for part in arg.split(',') {
                    let (w, r) = part
                        .split_once('@')
                        .ok_or_else(|| unknown("expected poisson-mix:W1@R1,W2@R2,..."))?;
                    weights.push(num(w)?);
                    rates.push(num(r)?);
                }
                TrueDistribution::PoissonMixture { weights, rates }
            }
            _ => return Err(unknown("expected normal:, poisson: or poisson-mix:")),
        };
        dist.validate().map_err(|e| unknown(&e.to_string()))?;
        Ok(dist)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        match self {
            TrueDistribution::Normal { sd, .. } if !(*sd > 0.0) => bad("sigma must be positive"),
            TrueDistribution::Poisson { rate } if !(*rate > 0.0) => bad("rate must be positive"),
            TrueDistribution::PoissonMixture { weights, rates } => {
                let sum: f64 = weights.iter().sum();
                if weights.iter().any(|&w| !(w > 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    bad("mixture weights must be positive and sum to 1")
                } else if rates.iter().any(|&r| !(r > 0.0)) {
                    bad("rates must be positive")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn id(&self) -> String {
        match self {
            TrueDistribution::Normal { mean, sd } => format!("normal:{mean},{sd}"),
            TrueDistribution::Poisson { rate } => format!("poisson:{rate}"),
            TrueDistribution::PoissonMixture { weights, rates } => {
                let parts: Vec<String> = weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| format!("{w}@{r}"))
                    .collect();
                format!("poisson-mix:{}", parts.join(","))
            }
        }
    }

    pub fn support(&self) -> Support {
        match self {
            TrueDistribution::Normal { .. } => Support::Real,
            _ => Support::Count,
        }
    }

    /// Number of distinct Poisson components, for Poisson-family truths.
    fn poisson_component_count(&self) -> Option<usize> {
        match self {
            TrueDistribution::Poisson { .. } => Some(1),
            TrueDistribution::PoissonMixture { rates, .. } => {
                let mut r = rates.clone();
                r.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                r.dedup();
                Some(r.len())
            }
            TrueDistribution::Normal { .. } => None,
        }
    }

    /// `log q(x)`.
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            TrueDistribution::Normal { mean, sd } => normal_logpdf(x, *mean, *sd),
            TrueDistribution::Poisson { rate } => x * rate.ln() - rate - ln_factorial(x),
            TrueDistribution::PoissonMixture { weights, rates } => {
                streaming_log_sum_exp(
                    weights.iter().zip(rates).map(|(w, r)| w.ln() + x * r.ln() - r),
                ) - ln_factorial(x)
            }
        }
    }

    /// Draws `n` observations deterministically from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = match self {
            TrueDistribution::Normal { mean, sd } => {
                let d = Normal::new(*mean, *sd)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            TrueDistribution::Poisson { rate } => {
                let d = Poisson::new(*rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            TrueDistribution::PoissonMixture { weights, rates } => {
                let pick = WeightedIndex::new(weights)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                let comps: Vec<Poisson<f64>> = rates
                    .iter()
                    .map(|&r| Poisson::new(r).map_err(|e| Error::InvalidArgument(e.to_string())))
                    .collect::<Result<_>>()?;
                (0..n)
                    .map(|_| comps[pick.sample(&mut rng)].sample(&mut rng))
                    .collect()
            }
        };
        Dataset::new(values, self.support())
    }
}

impl fmt::Display for TrueDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl TryFrom<String> for TrueDistribution {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<TrueDistribution> for String {
    fn from(t: TrueDistribution) -> String {
        t.id()
    }
}

/// Deterministic i.i.d. sample of size `n` from `dist`.
pub fn sample_true(dist: &TrueDistribution, n: usize, seed: u64) -> Result<Dataset> {
    dist.sample(n, seed)
}
