//! Small scalar helpers: logistic link, Bernoulli log-likelihood, quadrature, quantiles.

use nalgebra::{DMatrix, SymmetricEigen};

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `y` under a logistic model with linear predictor `eta`.
#[inline]
pub fn bernoulli_logit_loglik(y: bool, eta: f64) -> f64 {
    if y {
        -log1p_exp(-eta)
    } else {
        -log1p_exp(eta)
    }
}

/// Gauss–Hermite nodes and weights for `∫ f(x) exp(-x²) dx` (Golub–Welsch).
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for i in 1..order {
        let off = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = off;
        jacobi[(i - 1, i)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `E[g(Z)]` for `Z ~ N(mean, sd²)` by Gauss–Hermite quadrature.
pub fn normal_expectation(mean: f64, sd: f64, nodes: &[f64], weights: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    let scale = std::f64::consts::SQRT_2 * sd;
    let norm = std::f64::consts::PI.sqrt();
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * g(mean + scale * x))
        .sum::<f64>()
        / norm
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_symmetric_and_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(3.0) + logistic(-3.0) - 1.0).abs() < 1e-15);
        assert_eq!(logistic(-800.0), 0.0);
        assert_eq!(logistic(800.0), 1.0);
        assert!((log1p_exp(1.0) - (1.0 + 1f64.exp()).ln()).abs() < 1e-15);
        assert!(bernoulli_logit_loglik(true, 50.0).abs() < 1e-20);
    }

    #[test]
    fn gauss_hermite_integrates_normal_moments() {
        let (x, w) = gauss_hermite(20);
        let m2 = normal_expectation(1.0, 2.0, &x, &w, |z| z * z);
        assert!((m2 - 5.0).abs() < 1e-10);
        let m4 = normal_expectation(0.0, 1.0, &x, &w, |z| z.powi(4));
        assert!((m4 - 3.0).abs() < 1e-10);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
    }
}
