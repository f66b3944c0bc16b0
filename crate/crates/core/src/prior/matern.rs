use serde::{Deserialize, Serialize};

use super::bessel::x_k1;
use crate::{Error, Result};

/// Matérn smoothness; the model fixes ν = 1.
pub const SMOOTHNESS: f64 = 1.0;

/// Matérn parameters in the effective-range parametrization.
///
/// With ν = 1 the correlation is `(κd) K₁(κd)` and `κ = √(8ν)/ρ`; the
/// correlation at `d = ρ` is about 0.1397.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    nu: f64,
    rho: f64,
    sigma_s: f64,
    kappa_scale: f64,
}

impl MaternParams {
    pub fn new(rho: f64, sigma_s: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid(
                "rho",
                format!("effective range must be positive, got {rho}"),
            ));
        }
        if !(sigma_s > 0.0 && sigma_s.is_finite()) {
            return Err(Error::invalid(
                "sigma_s",
                format!("spatial sd must be positive, got {sigma_s}"),
            ));
        }
        Ok(Self::unchecked(rho, sigma_s))
    }

    pub(crate) fn unchecked(rho: f64, sigma_s: f64) -> Self {
        MaternParams {
            nu: SMOOTHNESS,
            rho,
            sigma_s,
            kappa_scale: (8.0 * SMOOTHNESS).sqrt() / rho,
        }
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn sigma_s(&self) -> f64 {
        self.sigma_s
    }

    pub fn kappa_scale(&self) -> f64 {
        self.kappa_scale
    }

    pub fn correlation(&self, d: f64) -> f64 {
        matern_correlation(d, self.rho)
    }
}

/// Matérn (ν = 1) correlation at distance `d` for effective range `rho`.
#[inline]
pub fn matern_correlation(d: f64, rho: f64) -> f64 {
    let kappa = (8.0 * SMOOTHNESS).sqrt() / rho;
    // 1 / (2^{ν−1} Γ(ν)) = 1 for ν = 1
    x_k1(kappa * d.abs())
}

/// `σs² · corr(d)`.
pub fn matern_cov(d: f64, p: &MaternParams) -> f64 {
    p.sigma_s * p.sigma_s * p.correlation(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_at_zero_lag() {
        let p = MaternParams::new(0.3, 1.7).unwrap();
        assert!((matern_cov(0.0, &p) - 1.7 * 1.7).abs() < 1e-15);
        assert_eq!(p.kappa_scale() * p.rho(), 8f64.sqrt());
    }

    #[test]
    fn correlation_at_effective_range() {
        let p = MaternParams::new(0.4, 1.0).unwrap();
        let c = p.correlation(0.4);
        // scipy: sqrt(8) * k1(sqrt(8))
        assert!((c - 0.139_667_474_015_293_1).abs() < 1e-12);
        assert!(p.correlation(5.0 * 0.4) < 1e-3);
    }

    #[test]
    fn nonincreasing_in_distance() {
        let p = MaternParams::new(0.25, 1.0).unwrap();
        let mut prev = matern_cov(0.0, &p);
        for k in 1..2000 {
            let c = matern_cov(k as f64 * 1e-3, &p);
            assert!(c <= prev + 1e-15);
            prev = c;
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(MaternParams::new(0.0, 1.0).is_err());
        assert!(MaternParams::new(1.0, -1.0).is_err());
        assert!(MaternParams::new(f64::INFINITY, 1.0).is_err());
    }
}
