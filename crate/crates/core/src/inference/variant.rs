//! Model variants and their free hyperparameter coordinates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::prior::{HyperParams, PriorConfig};
use crate::{Error, Result};

/// Nugget sd used when the nugget is removed from the model.
pub const PINNED_NUGGET_SD: f64 = 1e-6;

/// Bounds of the free log-coordinates searched by the optimizer.
const LOG_RHO_BOUNDS: (f64, f64) = (-6.0, 3.0);
const LOG_SD_BOUNDS: (f64, f64) = (-7.0, 3.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Spatial field plus nugget.
    Full,
    /// Spatial field only; the nugget sd is pinned to [`PINNED_NUGGET_SD`].
    SpatialOnly,
    /// Nugget only; the latent covariance is `σe² I`.
    IidOnly,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [ModelVariant::Full, ModelVariant::SpatialOnly, ModelVariant::IidOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelVariant::Full => "full",
            ModelVariant::SpatialOnly => "spatial_only",
            ModelVariant::IidOnly => "iid_only",
        }
    }

    pub fn has_spatial(&self) -> bool {
        !matches!(self, ModelVariant::IidOnly)
    }

    /// Number of free hyperparameters.
    pub fn dim(&self) -> usize {
        match self {
            ModelVariant::Full => 3,
            ModelVariant::SpatialOnly => 2,
            ModelVariant::IidOnly => 1,
        }
    }

    pub fn axis_names(&self) -> &'static [&'static str] {
        match self {
            ModelVariant::Full => &["log_rho", "log_sigma_s", "log_sigma_e"],
            ModelVariant::SpatialOnly => &["log_rho", "log_sigma_s"],
            ModelVariant::IidOnly => &["log_sigma_e"],
        }
    }

    /// Hyperparameters at free coordinates. The iid variant reports `ρ = 0`
    /// and `σs = 0`.
    pub fn hyper(&self, x: &[f64]) -> HyperParams {
        match self {
            ModelVariant::Full => HyperParams {
                rho: x[0].exp(),
                sigma_s: x[1].exp(),
                sigma_e: x[2].exp(),
            },
            ModelVariant::SpatialOnly => HyperParams {
                rho: x[0].exp(),
                sigma_s: x[1].exp(),
                sigma_e: PINNED_NUGGET_SD,
            },
            ModelVariant::IidOnly => HyperParams {
                rho: 0.0,
                sigma_s: 0.0,
                sigma_e: x[0].exp(),
            },
        }
    }

    pub fn free(&self, h: &HyperParams) -> Vec<f64> {
        match self {
            ModelVariant::Full => vec![h.rho.ln(), h.sigma_s.ln(), h.sigma_e.ln()],
            ModelVariant::SpatialOnly => vec![h.rho.ln(), h.sigma_s.ln()],
            ModelVariant::IidOnly => vec![h.sigma_e.ln()],
        }
    }

    /// Optimizer starting point: moderate range, unit spatial sd, nugget at
    /// its prior mode.
    pub fn default_start(&self) -> Vec<f64> {
        self.free(&HyperParams {
            rho: 0.3,
            sigma_s: 1.0,
            sigma_e: 0.1,
        })
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            ModelVariant::Full => vec![LOG_RHO_BOUNDS, LOG_SD_BOUNDS, LOG_SD_BOUNDS],
            ModelVariant::SpatialOnly => vec![LOG_RHO_BOUNDS, LOG_SD_BOUNDS],
            ModelVariant::IidOnly => vec![LOG_SD_BOUNDS],
        }
    }

    pub fn in_bounds(&self, x: &[f64]) -> bool {
        self.bounds().iter().zip(x).all(|(&(lo, hi), &v)| v >= lo && v <= hi)
    }

    /// Prior log-density of the free coordinates, Jacobians included.
    pub fn log_prior(&self, x: &[f64], cfg: &PriorConfig) -> f64 {
        let log_rho = |u: f64| cfg.log_range_density(u.exp()) + u;
        let log_sd = |w: f64| cfg.log_sd_density(w.exp()) + w;
        // τ = σe⁻² = e^{−2u}, |dτ/du| = 2τ
        let log_nugget = |u: f64| {
            let precision = (-2.0 * u).exp();
            cfg.log_nugget_precision_density(precision) + std::f64::consts::LN_2 + precision.ln()
        };
        match self {
            ModelVariant::Full => log_rho(x[0]) + log_sd(x[1]) + log_nugget(x[2]),
            ModelVariant::SpatialOnly => log_rho(x[0]) + log_sd(x[1]),
            ModelVariant::IidOnly => log_nugget(x[0]),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelVariant::Full),
            "spatial_only" | "spatial" => Ok(ModelVariant::SpatialOnly),
            "iid_only" | "iid" => Ok(ModelVariant::IidOnly),
            other => Err(Error::invalid(
                "variant",
                format!("expected full|spatial_only|iid_only, got {other:?}"),
            )),
        }
    }
}
