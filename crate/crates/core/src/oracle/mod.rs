//! Independent reference computations used to check the production engine:
//! adaptive quadrature, an integral form of K₁, exact enumeration of the
//! infested-count distribution and a Markov chain Monte Carlo sampler.

pub mod enumeration;
pub mod mcmc;
pub mod quadrature;

pub use enumeration::{i0_distribution, p_below_exact};
pub use mcmc::{run_mcmc, McmcConfig, McmcSummary};
pub use quadrature::{adaptive_simpson, bessel_k1_integral, integrate_to_infinity};
