//! Small numeric helpers shared by the estimators and the experiment layer.

use nalgebra::{DMatrix, DVector};

/// `log(sum(exp(xs)))` with max subtraction. Returns `-inf` for an empty slice
/// or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `log(mean(exp(xs)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divide by the count), two-pass.
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Sample variance (divide by count - 1). Zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    population_variance(xs) * xs.len() as f64 / (xs.len() - 1) as f64
}

/// Least-squares polynomial fit of the given degree.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolyFit {
    pub degree: usize,
    /// Coefficients, constant term first.
    pub coefficients: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Fits `y ~ sum_j c_j x^j` for `j = 0..=degree` by SVD least squares.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> PolyFit {
    assert_eq!(xs.len(), ys.len());
    let cols = degree + 1;
    // Scale x to [-1, 1]-ish so the Vandermonde matrix stays well conditioned.
    let scale = xs.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1e-300);
    let design = DMatrix::from_fn(xs.len(), cols, |i, j| (xs[i] / scale).powi(j as i32));
    let rhs = DVector::from_column_slice(ys);
    let svd = design.clone().svd(true, true);
    let scaled = svd
        .solve(&rhs, 1e-14)
        .expect("SVD computed with both U and V");
    let coefficients: Vec<f64> = scaled
        .iter()
        .enumerate()
        .map(|(j, c)| c / scale.powi(j as i32))
        .collect();
    let fitted = &design * &scaled;
    let rss = (rhs - fitted).iter().map(|r| r * r).sum();
    PolyFit {
        degree,
        coefficients,
        rss,
    }
}

/// SplitMix64 finaliser, used to derive independent child seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stream.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_large_magnitudes() {
        let xs = [-1500.0, -1500.0];
        assert!((log_sum_exp(&xs) - (-1500.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn log1p_exp_matches_naive_in_safe_range() {
        for &x in &[-30.0, -2.0, 0.0, 1.5, 20.0] {
            let naive = (1.0 + f64::exp(x)).ln();
            assert!((log1p_exp(x) - naive).abs() < 1e-12);
        }
        assert!((log1p_exp(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn variances() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(population_variance(&xs), 1.25);
        assert!((sample_variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(sample_variance(&[3.0]), 0.0);
    }

    #[test]
    fn polyfit_recovers_exact_quadratic() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64 * 100.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 0.01 * x + 3e-4 * x * x).collect();
        let quad = polyfit(&xs, &ys, 2);
        assert!(quad.rss < 1e-16 * ys.iter().map(|y| y * y).sum::<f64>());
        assert!((quad.coefficients[2] - 3e-4).abs() < 1e-12);
        assert!((quad.eval(250.0) - (0.5 - 2.5 + 18.75)).abs() < 1e-8);
        let lin = polyfit(&xs, &ys, 1);
        assert!(lin.rss > 1.0);
    }

    #[test]
    fn mix_seed_spreads_streams() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
        assert_eq!(mix_seed(42, 7), mix_seed(42, 7));
    }
}
