//! Adaptive geostatistical sampling of households for vector-control treatment.
//!
//! A village is a fixed set of houses with planar coordinates and covariates.
//! Infestation is modelled as a Bernoulli response with a logistic link whose
//! linear predictor combines fixed effects, a Matérn (ν = 1) spatial field and
//! an independent nugget. Houses are visited in batches; after every batch the
//! posterior is refitted with a Laplace approximation integrated over a
//! hyperparameter grid, and sampling stops once the posterior probability that
//! the infestation rate among unvisited houses is below the target exceeds the
//! requested confidence.
//!
//! Module map:
//! - [`domain`]: village ingestion, derived spatial covariates, standardization.
//! - [`prior`]: Matérn kernel, Bessel K₁ and the prior densities.
//! - [`inference`]: Laplace fit, posterior and predictive sampling, DIC,
//!   marginal likelihood and HPDI summaries.
//! - [`design`]: exploration schedule, utility, termination and the adaptive
//!   and random sampling loops.
//! - [`sim`]: synthetic villages and the replicated simulation experiment.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod design;
pub mod domain;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod numerics;
pub mod prior;
pub mod rng;
pub mod sim;

#[cfg(feature = "oracle")]
pub mod oracle;

pub use error::{Error, Result};
