//! Posterior and posterior-predictive sampling.
//!
//! Draws use pathwise conditioning: a joint prior draw of `(β, η)` is corrected
//! towards the Laplace pseudo-observations at the visited sites. Under the
//! Gaussian approximation this is an exact draw from the node's posterior, and
//! the nugget at unvisited sites keeps its prior distribution.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::correlation_square;
use super::{LatentState, PosteriorFit};
use crate::linalg::cholesky_with_jitter;
use crate::numerics::logistic;
use crate::rng::{stream, StreamRng};
use crate::{Error, Result};

const NODE_STREAM: u64 = 0;
const LATENT_STREAM: u64 = 1;
const BERNOULLI_STREAM: u64 = 2;

/// Joint posterior draws of hyperparameter node, fixed effects and linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub seed: u64,
    /// Grid node of each draw.
    pub node: Vec<usize>,
    /// Fixed effects, one column per draw.
    pub beta: DMatrix<f64>,
    /// Linear predictor at every village site, one column per draw.
    pub eta: DMatrix<f64>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node.is_empty()
    }

    pub fn latent(&self, design: &DMatrix<f64>, b: usize) -> LatentState {
        LatentState::from_eta(
            design,
            self.beta.column(b).into_owned(),
            self.eta.column(b).into_owned(),
        )
    }
}

fn standard_normals(rng: &mut StreamRng, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(rows, cols, data)
}

/// `B` draws from the grid mixture of Gaussian approximations. Deterministic
/// given `seed`.
pub fn sample_posterior(fit: &PosteriorFit, draws: usize, seed: u64) -> Result<PosteriorDraws> {
    if draws == 0 {
        return Err(Error::invalid("mc_draws", "need at least one draw"));
    }
    let frame = fit.frame();
    let n = frame.len();
    let p = frame.n_columns();
    let sites = fit.observed().sites();
    let m = sites.len();
    let x = frame.design();
    let xs = x.select_rows(sites);
    let tau2 = fit.tau2();
    let tau = tau2.sqrt();

    let weights: Vec<f64> = fit.nodes().iter().map(|nd| nd.weight).collect();
    let mut counts = vec![0usize; weights.len()];
    if weights.len() == 1 {
        counts[0] = draws;
    } else {
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::invalid("weights", e.to_string()))?;
        let mut rng = stream(seed, &[NODE_STREAM]);
        for _ in 0..draws {
            counts[dist.sample(&mut rng)] += 1;
        }
    }

    let all: Vec<usize> = (0..n).collect();
    let mut corr_factors: HashMap<u64, Cholesky<f64, Dyn>> = HashMap::new();
    let mut node_of = Vec::with_capacity(draws);
    let mut beta_out = DMatrix::zeros(p, draws);
    let mut eta_out = DMatrix::zeros(n, draws);
    let mut col = 0;

    for (j, &k) in counts.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let node = &fit.nodes()[j];
        let h = node.hyper;
        let solve = &node.solve;
        let mut rng = stream(seed, &[LATENT_STREAM, j as u64]);
        let z_beta = standard_normals(&mut rng, p, k);
        let z_field = standard_normals(&mut rng, n, k);
        let z_nugget = standard_normals(&mut rng, n, k);
        let z_pseudo = standard_normals(&mut rng, m, k);

        // joint prior draw
        let mut eta0 = x * &z_beta * tau + &z_nugget * h.sigma_e;
        if h.sigma_s > 0.0 {
            let key = h.rho.to_bits();
            if let Entry::Vacant(slot) = corr_factors.entry(key) {
                let corr = correlation_square(frame, &all, h.rho);
                slot.insert(cholesky_with_jitter(&corr, "spatial correlation")?.chol);
            }
            let l = corr_factors[&key].l_dirty().lower_triangle();
            eta0 += (l * &z_field) * h.sigma_s;
        }

        // W^½ t with pseudo-data t = f̂ + W⁻¹ â
        let sw = &solve.sqrt_w;
        let mut rhs = DMatrix::zeros(m, k);
        for i in 0..m {
            let target = sw[i] * solve.f[i] + solve.a[i] / sw[i];
            for c in 0..k {
                rhs[(i, c)] = target - sw[i] * eta0[(sites[i], c)] - z_pseudo[(i, c)];
            }
        }
        let mut corr = solve.chol_b.solve(&rhs);
        for i in 0..m {
            let mut row = corr.row_mut(i);
            row *= sw[i];
        }

        let k_all_s = fit.cross_cov(j);
        let eta = eta0 + &k_all_s * &corr;
        let beta = &z_beta * tau + xs.transpose() * &corr * tau2;
        beta_out.columns_mut(col, k).copy_from(&beta);
        eta_out.columns_mut(col, k).copy_from(&eta);
        node_of.extend(std::iter::repeat_n(j, k));
        col += k;
    }

    Ok(PosteriorDraws {
        seed,
        node: node_of,
        beta: beta_out,
        eta: eta_out,
    })
}

/// Binary predictive draws at the unvisited sites and per-site risk summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    /// Unvisited sites (frame indices), ascending.
    pub sites: Vec<usize>,
    /// Row-major `draws × sites` infestation indicators.
    pub samples: Vec<bool>,
    /// Infested count among unvisited sites, per draw.
    pub i0_samples: Vec<u32>,
    /// Posterior mean of the risk `logistic(η)` per unvisited site.
    pub risk_mean: Vec<f64>,
    /// Posterior variance (divisor B) of the risk per unvisited site.
    pub risk_var: Vec<f64>,
}

impl PredictiveDraws {
    pub fn n0(&self) -> usize {
        self.sites.len()
    }

    pub fn draws(&self) -> usize {
        self.i0_samples.len()
    }

    pub fn sample(&self, draw: usize, site: usize) -> bool {
        self.samples[draw * self.sites.len() + site]
    }
}

/// Posterior predictive infestation at every unvisited site.
pub fn predict_unvisited(fit: &PosteriorFit, draws: &PosteriorDraws) -> PredictiveDraws {
    predict_sites(&fit.unvisited(), draws)
}

/// Posterior predictive infestation at the given sites.
pub fn predict_sites(sites: &[usize], draws: &PosteriorDraws) -> PredictiveDraws {
    let b = draws.len();
    let n0 = sites.len();
    let mut rng = stream(draws.seed, &[BERNOULLI_STREAM]);
    let mut samples = Vec::with_capacity(b * n0);
    let mut i0_samples = Vec::with_capacity(b);
    let mut sum = vec![0.0; n0];
    let mut sum_sq = vec![0.0; n0];
    for d in 0..b {
        let eta = draws.eta.column(d);
        let mut count = 0u32;
        for (j, &s) in sites.iter().enumerate() {
            let r = logistic(eta[s]);
            sum[j] += r;
            sum_sq[j] += r * r;
            let infested = rng.gen::<f64>() < r;
            count += infested as u32;
            samples.push(infested);
        }
        i0_samples.push(count);
    }
    let bf = b.max(1) as f64;
    let risk_mean: Vec<f64> = sum.iter().map(|s| s / bf).collect();
    let risk_var = sum_sq
        .iter()
        .zip(&risk_mean)
        .map(|(sq, mu)| (sq / bf - mu * mu).max(0.0))
        .collect();
    PredictiveDraws {
        sites: sites.to_vec(),
        samples,
        i0_samples,
        risk_mean,
        risk_var,
    }
}
