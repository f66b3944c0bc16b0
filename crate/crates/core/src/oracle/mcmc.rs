//! Reference posterior sampler: elliptical slice sampling of the whitened
//! latent vector `(β, v)` alternated with random-walk Metropolis on the free
//! log-hyperparameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::VillageFrame;
use crate::inference::kernel::correlation_square;
use crate::inference::{ModelVariant, Observed};
use crate::linalg::cholesky_with_jitter;
use crate::numerics::{bernoulli_logit_loglik, logistic};
use crate::prior::PriorConfig;
use crate::rng::stream;
use crate::Result;

/// Free log-hyperparameters are kept inside this box for numerical safety.
const FREE_BOUND: f64 = 10.0;
const TARGET_ACCEPTANCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    pub draws: usize,
    pub burn_in: usize,
    pub hyper_updates: usize,
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            draws: 200_000,
            burn_in: 20_000,
            hyper_updates: 1,
            initial_step: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct McmcSummary {
    /// Posterior mean of `logistic(η)` at every village site.
    pub risk_mean: Vec<f64>,
    pub eta_mean: Vec<f64>,
    /// Posterior mean of the free log-hyperparameters.
    pub free_mean: Vec<f64>,
    pub hyper_acceptance: f64,
}

struct State {
    free: Vec<f64>,
    chol: DMatrix<f64>,
    z: DVector<f64>,
    loglik: f64,
    log_prior: f64,
}

struct Model<'a> {
    x: &'a DMatrix<f64>,
    frame: &'a VillageFrame,
    observed: &'a Observed,
    variant: ModelVariant,
    tau: f64,
}

impl Model<'_> {
    fn latent_chol(&self, free: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.frame.len();
        let h = self.variant.hyper(free);
        let all: Vec<usize> = (0..n).collect();
        let mut sigma = if h.sigma_s > 0.0 {
            correlation_square(self.frame, &all, h.rho) * (h.sigma_s * h.sigma_s)
        } else {
            DMatrix::zeros(n, n)
        };
        for i in 0..n {
            sigma[(i, i)] += h.sigma_e * h.sigma_e;
        }
        cholesky_with_jitter(&sigma, "mcmc latent covariance")
            .ok()
            .map(|f| f.chol.l())
    }

    fn eta(&self, chol: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
        let p = self.x.ncols();
        let n = self.x.nrows();
        let beta = z.rows(0, p) * self.tau;
        let v = chol * z.rows(p, n);
        self.x * beta + v
    }

    fn loglik(&self, chol: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
        let eta = self.eta(chol, z);
        self.observed
            .sites()
            .iter()
            .zip(self.observed.y())
            .map(|(&s, &y)| bernoulli_logit_loglik(y, eta[s]))
            .sum()
    }
}

/// Runs the chain on the given design and returns posterior means.
pub fn run_mcmc(
    frame: &VillageFrame,
    observed: &Observed,
    prior: &PriorConfig,
    variant: ModelVariant,
    cfg: &McmcConfig,
) -> Result<McmcSummary> {
    let model = Model {
        x: frame.design(),
        frame,
        observed,
        variant,
        tau: prior.beta_prior_variance.sqrt(),
    };
    let n = frame.len();
    let p = frame.n_columns();
    let d = p + n;
    let mut rng = stream(cfg.seed, &[]);

    let free = variant.default_start();
    let chol = model
        .latent_chol(&free)
        .ok_or_else(|| crate::Error::Factorization("mcmc start".into()))?;
    let z = DVector::zeros(d);
    let loglik = model.loglik(&chol, &z);
    let log_prior = variant.log_prior(&free, prior);
    let mut st = State {
        free,
        chol,
        z,
        loglik,
        log_prior,
    };

    let mut step = cfg.initial_step;
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let mut window_acc = 0usize;
    let mut window_prop = 0usize;

    let mut risk_sum = vec![0.0; n];
    let mut eta_sum = vec![0.0; n];
    let mut free_sum = vec![0.0; variant.dim()];

    for it in 0..cfg.burn_in + cfg.draws {
        // elliptical slice update of z
        let nu: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        let log_y = st.loglik + rng.gen::<f64>().ln();
        let mut angle = rng.gen::<f64>() * std::f64::consts::TAU;
        let (mut lo, mut hi) = (angle - std::f64::consts::TAU, angle);
        loop {
            let cand = &st.z * angle.cos() + &nu * angle.sin();
            let ll = model.loglik(&st.chol, &cand);
            if ll > log_y {
                st.z = cand;
                st.loglik = ll;
                break;
            }
            if angle < 0.0 {
                lo = angle;
            } else {
                hi = angle;
            }
            angle = lo + rng.gen::<f64>() * (hi - lo);
        }

        // Metropolis on the hyperparameters with z held fixed
        for _ in 0..cfg.hyper_updates {
            let cand: Vec<f64> = st
                .free
                .iter()
                .map(|u| u + step * rng.sample::<f64, _>(StandardNormal))
                .collect();
            proposed += 1;
            window_prop += 1;
            if cand.iter().any(|u| u.abs() > FREE_BOUND) {
                continue;
            }
            let Some(chol) = model.latent_chol(&cand) else { continue };
            let ll = model.loglik(&chol, &st.z);
            let lp = variant.log_prior(&cand, prior);
            if rng.gen::<f64>().ln() < ll + lp - st.loglik - st.log_prior {
                st.free = cand;
                st.chol = chol;
                st.loglik = ll;
                st.log_prior = lp;
                accepted += 1;
                window_acc += 1;
            }
        }
        if it < cfg.burn_in && window_prop >= 100 {
            let rate = window_acc as f64 / window_prop as f64;
            step *= ((rate - TARGET_ACCEPTANCE) * 2.0).exp();
            window_acc = 0;
            window_prop = 0;
        }

        if it >= cfg.burn_in {
            let eta = model.eta(&st.chol, &st.z);
            for i in 0..n {
                risk_sum[i] += logistic(eta[i]);
                eta_sum[i] += eta[i];
            }
            for (k, u) in st.free.iter().enumerate() {
                free_sum[k] += u;
            }
        }
    }
    let b = cfg.draws.max(1) as f64;
    Ok(McmcSummary {
        risk_mean: risk_sum.iter().map(|s| s / b).collect(),
        eta_mean: eta_sum.iter().map(|s| s / b).collect(),
        free_mean: free_sum.iter().map(|s| s / b).collect(),
        hyper_acceptance: accepted as f64 / proposed.max(1) as f64,
    })
}
