//! Spatial covariance and prior densities.
//!
//! The spatial field has a Matérn (ν = 1) covariance with a penalized-complexity
//! joint prior on (range, sd); the nugget precision has a gamma prior; fixed
//! effects have independent zero-mean normal priors.

pub mod bessel;
pub mod matern;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

pub use bessel::bessel_k1;
pub use matern::{matern_correlation, matern_cov, MaternParams};

use crate::domain::geometry::dist;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Hyperparameters of the latent field, in scaled-coordinate units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Effective range ρ.
    pub rho: f64,
    /// Spatial standard deviation σs; zero when the spatial field is removed.
    pub sigma_s: f64,
    /// Nugget standard deviation σe.
    pub sigma_e: f64,
}

impl HyperParams {
    pub fn new(rho: f64, sigma_s: f64, sigma_e: f64) -> Result<Self> {
        let h = HyperParams { rho, sigma_s, sigma_e };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("sigma_s", self.sigma_s), ("sigma_e", self.sigma_e)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// `P(X < threshold) = probability` (range) or `P(X > threshold) = probability` (sd).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub threshold: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSpec {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Variance of the independent normal prior on each fixed effect.
    pub beta_prior_variance: f64,
    /// PC prior tail on the effective range: `P(ρ < ρ₀) = α₁`.
    pub pc_range: TailSpec,
    /// PC prior tail on the spatial sd: `P(σs > σ₀) = α₂`.
    pub pc_sd: TailSpec,
    /// Gamma prior on the nugget precision `1/σe²`.
    pub nugget_precision: GammaSpec,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            beta_prior_variance: 3.3,
            pc_range: TailSpec {
                threshold: 0.1,
                probability: 0.05,
            },
            pc_sd: TailSpec {
                threshold: 3.0,
                probability: 0.1,
            },
            nugget_precision: GammaSpec { shape: 1.0, rate: 0.01 },
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta_prior_variance", self.beta_prior_variance),
            ("pc_range.threshold", self.pc_range.threshold),
            ("pc_sd.threshold", self.pc_sd.threshold),
            ("nugget_precision.shape", self.nugget_precision.shape),
            ("nugget_precision.rate", self.nugget_precision.rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, p) in [
            ("pc_range.probability", self.pc_range.probability),
            ("pc_sd.probability", self.pc_sd.probability),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(name, format!("must lie in (0, 1), got {p}")));
            }
        }
        Ok(())
    }

    /// λ₁ = −ρ₀ ln α₁.
    pub fn range_rate(&self) -> f64 {
        -self.pc_range.threshold * self.pc_range.probability.ln()
    }

    /// λ₂ = −ln α₂ / σ₀.
    pub fn sd_rate(&self) -> f64 {
        -self.pc_sd.probability.ln() / self.pc_sd.threshold
    }

    /// Marginal PC density of the effective range, `(λ₁/ρ²) e^{−λ₁/ρ}`.
    pub fn range_density(&self, rho: f64) -> f64 {
        self.log_range_density(rho).exp()
    }

    /// Log-density of the range; `−∞` at and below zero, where the density
    /// vanishes.
    pub fn log_range_density(&self, rho: f64) -> f64 {
        if !(rho > 0.0) {
            return f64::NEG_INFINITY;
        }
        let l1 = self.range_rate();
        l1.ln() - 2.0 * rho.ln() - l1 / rho
    }

    /// Marginal PC density of the spatial sd, `λ₂ e^{−λ₂ σs}`.
    pub fn sd_density(&self, sigma_s: f64) -> f64 {
        self.log_sd_density(sigma_s).exp()
    }

    pub fn log_sd_density(&self, sigma_s: f64) -> f64 {
        let l2 = self.sd_rate();
        l2.ln() - l2 * sigma_s
    }

    /// Gamma log-density of the nugget precision `τ = 1/σe²`.
    pub fn log_nugget_precision_density(&self, precision: f64) -> f64 {
        let GammaSpec { shape, rate } = self.nugget_precision;
        shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * precision.ln() - rate * precision
    }

    /// Independent `N(0, v)` log-density of the fixed effects.
    pub fn log_beta_density(&self, beta: &[f64]) -> f64 {
        let v = self.beta_prior_variance;
        beta.iter().map(|b| -0.5 * (LN_2PI + v.ln()) - 0.5 * b * b / v).sum()
    }
}

/// Joint log prior density: PC prior on (ρ, σs), gamma prior on `1/σe²`,
/// normal priors on the fixed effects. Densities are on the natural scale of
/// (ρ, σs, 1/σe², β).
pub fn log_prior(h: &HyperParams, beta: &[f64], cfg: &PriorConfig) -> Result<f64> {
    h.validate()?;
    let pc = cfg.log_range_density(h.rho) + cfg.log_sd_density(h.sigma_s);
    let nugget = cfg.log_nugget_precision_density(1.0 / (h.sigma_e * h.sigma_e));
    Ok(pc + nugget + cfg.log_beta_density(beta))
}

/// Latent covariance `σs² M(ρ) + σe² I` over scaled coordinates.
pub fn build_cov_matrix(coords: &[[f64; 2]], p: &MaternParams, sigma_e: f64) -> Result<DMatrix<f64>> {
    if !(sigma_e >= 0.0 && sigma_e.is_finite()) {
        return Err(Error::invalid(
            "sigma_e",
            format!("must be non-negative, got {sigma_e}"),
        ));
    }
    let n = coords.len();
    let s2 = p.sigma_s() * p.sigma_s();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = s2 + sigma_e * sigma_e;
        for j in 0..i {
            let c = s2 * p.correlation(dist(coords[i], coords[j]));
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    Ok(m)
}
