//! Exact distribution of the infested count over a few sites whose linear
//! predictors are jointly Gaussian: tensor Gauss–Hermite quadrature over η
//! and exhaustive enumeration of the binary outcomes.

use nalgebra::{DMatrix, DVector};

use crate::linalg::cholesky_with_jitter;
use crate::numerics::{gauss_hermite, logistic};
use crate::{Error, Result};

const MAX_SITES: usize = 10;

/// `P(I₀ = k)` for `k = 0..=n₀` when `η ~ N(mean, cov)` and each site is
/// infested independently with probability `logistic(η)`.
pub fn i0_distribution(mean: &DVector<f64>, cov: &DMatrix<f64>, order: usize) -> Result<Vec<f64>> {
    let d = mean.len();
    if d == 0 {
        return Ok(vec![1.0]);
    }
    if d > MAX_SITES {
        return Err(Error::invalid(
            "sites",
            format!("enumeration supports at most {MAX_SITES} sites"),
        ));
    }
    let l = cholesky_with_jitter(cov, "predictive covariance")?.chol.l();
    let (nodes, weights) = gauss_hermite(order);
    let norm = std::f64::consts::PI.powf(d as f64 / 2.0);
    let outcomes = 1usize << d;

    let mut dist = vec![0.0; d + 1];
    let mut idx = vec![0usize; d];
    let mut z = DVector::zeros(d);
    let mut r = vec![0.0; d];
    loop {
        let mut w = 1.0;
        for k in 0..d {
            z[k] = std::f64::consts::SQRT_2 * nodes[idx[k]];
            w *= weights[idx[k]];
        }
        let eta = mean + &l * &z;
        for k in 0..d {
            r[k] = logistic(eta[k]);
        }
        for y in 0..outcomes {
            let mut p = 1.0;
            for (k, rk) in r.iter().enumerate() {
                p *= if y >> k & 1 == 1 { *rk } else { 1.0 - rk };
            }
            dist[(y as u32).count_ones() as usize] += w * p;
        }
        // odometer over the tensor grid
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    for p in dist.iter_mut() {
        *p /= norm;
    }
    Ok(dist)
}

/// `P(I₀ < threshold)` from an exact count distribution.
pub fn p_below_exact(dist: &[f64], threshold: f64) -> f64 {
    dist.iter()
        .enumerate()
        .filter(|(k, _)| (*k as f64) < threshold)
        .map(|(_, p)| p)
        .sum()
}
