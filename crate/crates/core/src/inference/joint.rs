//! Log joint density over `(β, v)` with the latent field at every village site.
//!
//! This is the direct parametrization of the model; the engine itself works in
//! the equivalent visited-site form. It provides exact derivatives and a
//! reference Newton solver.

use nalgebra::{DMatrix, DVector};

use super::kernel::correlation_square;
use super::laplace::NewtonConfig;
use super::Observed;
use crate::domain::VillageFrame;
use crate::linalg::cholesky_with_jitter;
use crate::numerics::{bernoulli_logit_loglik, logistic};
use crate::prior::HyperParams;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LogJoint {
    x: DMatrix<f64>,
    sites: Vec<usize>,
    y: Vec<bool>,
    tau2: f64,
    sigma_inv: DMatrix<f64>,
}

/// Mode found by [`LogJoint::newton`], with the objective after every step.
#[derive(Debug, Clone)]
pub struct JointMode {
    pub theta: DVector<f64>,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogJoint {
    pub fn new(frame: &VillageFrame, observed: &Observed, h: &HyperParams, tau2: f64) -> Result<Self> {
        let n = frame.len();
        let all: Vec<usize> = (0..n).collect();
        let mut sigma = if h.sigma_s > 0.0 {
            correlation_square(frame, &all, h.rho) * (h.sigma_s * h.sigma_s)
        } else {
            DMatrix::zeros(n, n)
        };
        for i in 0..n {
            sigma[(i, i)] += h.sigma_e * h.sigma_e;
        }
        let factor = cholesky_with_jitter(&sigma, "latent covariance")?;
        Ok(LogJoint {
            x: frame.design().clone(),
            sites: observed.sites().to_vec(),
            y: observed.y().to_vec(),
            tau2,
            sigma_inv: factor.chol.inverse(),
        })
    }

    pub fn n_beta(&self) -> usize {
        self.x.ncols()
    }

    /// Length of `θ = [β; v]`.
    pub fn dim(&self) -> usize {
        self.x.ncols() + self.x.nrows()
    }

    fn split(&self, theta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = self.n_beta();
        (
            theta.rows(0, p).into_owned(),
            theta.rows(p, self.x.nrows()).into_owned(),
        )
    }

    fn eta_at(&self, beta: &DVector<f64>, v: &DVector<f64>, k: usize) -> f64 {
        let s = self.sites[k];
        self.x.row(s).dot(&beta.transpose()) + v[s]
    }

    /// Log joint density up to an additive constant.
    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let (beta, v) = self.split(theta);
        let loglik: f64 = (0..self.sites.len())
            .map(|k| bernoulli_logit_loglik(self.y[k], self.eta_at(&beta, &v, k)))
            .sum();
        loglik - 0.5 * beta.norm_squared() / self.tau2 - 0.5 * v.dot(&(&self.sigma_inv * &v))
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let p = self.n_beta();
        let (beta, v) = self.split(theta);
        let mut g = DVector::zeros(self.dim());
        for k in 0..self.sites.len() {
            let s = self.sites[k];
            let r = logistic(self.eta_at(&beta, &v, k));
            let d = if self.y[k] { 1.0 - r } else { -r };
            for j in 0..p {
                g[j] += d * self.x[(s, j)];
            }
            g[p + s] += d;
        }
        for j in 0..p {
            g[j] -= beta[j] / self.tau2;
        }
        let sv = &self.sigma_inv * &v;
        for i in 0..v.len() {
            g[p + i] -= sv[i];
        }
        g
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let p = self.n_beta();
        let n = self.x.nrows();
        let (beta, v) = self.split(theta);
        let mut h = DMatrix::zeros(p + n, p + n);
        for k in 0..self.sites.len() {
            let s = self.sites[k];
            let r = logistic(self.eta_at(&beta, &v, k));
            let w = r * (1.0 - r);
            let mut u = DVector::zeros(p + n);
            for j in 0..p {
                u[j] = self.x[(s, j)];
            }
            u[p + s] = 1.0;
            h.ger(-w, &u, &u, 1.0);
        }
        for j in 0..p {
            h[(j, j)] -= 1.0 / self.tau2;
        }
        let mut block = h.view_mut((p, p), (n, n));
        block -= &self.sigma_inv;
        h
    }

    /// Newton ascent with step halving from `start`.
    pub fn newton(&self, start: &DVector<f64>, cfg: &NewtonConfig) -> Result<JointMode> {
        let mut theta = start.clone();
        let mut value = self.value(&theta);
        let mut trace = vec![value];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < cfg.max_iterations {
            let g = self.gradient(&theta);
            if g.amax() < cfg.gradient_tolerance {
                converged = true;
                break;
            }
            iterations += 1;
            let neg_h = -self.hessian(&theta);
            let step = cholesky_with_jitter(&neg_h, "negative Hessian")?.chol.solve(&g);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &theta + t * &step;
                let v = self.value(&cand);
                if v.is_finite() && v >= value {
                    theta = cand;
                    value = v;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            trace.push(value);
            if !accepted {
                converged = self.gradient(&theta).amax() < 1e-3;
                break;
            }
        }
        if !converged && self.gradient(&theta).amax() < cfg.gradient_tolerance {
            converged = true;
        }
        if !converged && self.gradient(&theta).amax() > 1e-3 {
            return Err(Error::Divergence("joint Newton did not converge".into()));
        }
        Ok(JointMode {
            theta,
            trace,
            iterations,
            converged,
        })
    }
}
