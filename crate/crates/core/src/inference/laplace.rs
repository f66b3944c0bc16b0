//! Laplace approximation of the latent posterior at a fixed hyperparameter node.
//!
//! The Newton iteration runs on the linear predictor at the visited sites,
//! `f = η_S`, whose prior covariance is `K = τ² X_S X_Sᵀ + σs² M_SS + σe² I`.
//! Writing `f = K a` avoids ever inverting `K`: only `B = I + W^½ K W^½` is
//! factored, and it is well conditioned whatever the hyperparameters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::linalg::cholesky_with_jitter;
use crate::numerics::{bernoulli_logit_loglik, logistic};
use crate::{Error, Result};

/// Curvature floor; keeps `W^{-½}` finite in the pathwise sampler.
const MIN_CURVATURE: f64 = 1e-14;
/// Gradient size past which an unconverged solve is treated as divergent.
const DIVERGENCE_GRADIENT: f64 = 1e-3;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the ∞-norm of the gradient.
    pub gradient_tolerance: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iterations: 50,
            gradient_tolerance: 1e-6,
        }
    }
}

/// Converged mode of `log p(y | f) − ½ fᵀK⁻¹f` and the quantities needed for
/// evidence, prediction and sampling.
#[derive(Debug, Clone)]
pub struct NodeSolve {
    /// `K⁻¹ f̂`, equal to the likelihood gradient at the mode.
    pub a: DVector<f64>,
    /// Mode of η at the visited sites.
    pub f: DVector<f64>,
    /// `W^½` at the mode.
    pub sqrt_w: DVector<f64>,
    /// Factor of `I + W^½ K W^½` at the mode.
    pub chol_b: Cholesky<f64, Dyn>,
    /// Laplace approximation of `log p(y | θ)`.
    pub log_evidence: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Objective value after each accepted step, starting point included.
    pub trace: Vec<f64>,
    pub jitter: f64,
}

fn objective(y: &[bool], a: &DVector<f64>, f: &DVector<f64>) -> f64 {
    let loglik: f64 = y
        .iter()
        .zip(f.iter())
        .map(|(&yi, &fi)| bernoulli_logit_loglik(yi, fi))
        .sum();
    loglik - 0.5 * a.dot(f)
}

fn gradient_and_curvature(y: &[bool], f: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = y.len();
    let mut grad = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let p = logistic(f[i]);
        grad[i] = if y[i] { 1.0 - p } else { -p };
        w[i] = (p * (1.0 - p)).max(MIN_CURVATURE);
    }
    (grad, w)
}

fn factor_b(k: &DMatrix<f64>, sqrt_w: &DVector<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mut b = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            b[(i, j)] = sqrt_w[i] * k[(i, j)] * sqrt_w[j];
        }
        b[(j, j)] += 1.0;
    }
    let factor = cholesky_with_jitter(&b, "I + W^1/2 K W^1/2")?;
    Ok((factor.chol, factor.jitter))
}

/// Newton iteration with step halving for the mode of the latent posterior at
/// the visited sites. `warm` is a previous `a`, used when it improves on zero.
pub fn solve_node(k: &DMatrix<f64>, y: &[bool], warm: Option<&DVector<f64>>, cfg: &NewtonConfig) -> Result<NodeSolve> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyDesign);
    }
    assert_eq!(k.nrows(), n, "covariance and observations disagree");

    let mut a = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let mut psi = objective(y, &a, &f);
    if let Some(w0) = warm.filter(|w| w.len() == n) {
        let f0 = k * w0;
        let psi0 = objective(y, w0, &f0);
        if psi0.is_finite() && psi0 > psi {
            a = w0.clone();
            f = f0;
            psi = psi0;
        }
    }

    let mut trace = vec![psi];
    let mut jitter = 0.0f64;
    let mut iterations = 0;
    let mut converged = false;
    let mut gradient_norm;

    loop {
        let (grad, w) = gradient_and_curvature(y, &f);
        gradient_norm = (&grad - &a).amax();
        if gradient_norm < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }
        iterations += 1;

        let sqrt_w = w.map(f64::sqrt);
        let (chol, j) = factor_b(k, &sqrt_w)?;
        jitter = jitter.max(j);
        let b = w.component_mul(&f) + &grad;
        let kb = k * &b;
        let inner = chol.solve(&sqrt_w.component_mul(&kb));
        let a_full = &b - sqrt_w.component_mul(&inner);
        let direction = &a_full - &a;

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let a_try = &a + step * &direction;
            let f_try = k * &a_try;
            let psi_try = objective(y, &a_try, &f_try);
            if psi_try.is_finite() && psi_try >= psi {
                a = a_try;
                f = f_try;
                psi = psi_try;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        trace.push(psi);
        if !accepted {
            // no ascent along the Newton direction: the mode is reached to
            // within floating-point resolution
            let (grad, _) = gradient_and_curvature(y, &f);
            gradient_norm = (&grad - &a).amax();
            converged = gradient_norm < DIVERGENCE_GRADIENT;
            break;
        }
    }

    if !converged && !(gradient_norm < DIVERGENCE_GRADIENT) {
        return Err(Error::Divergence(format!(
            "gradient norm {gradient_norm:.3e} after {iterations} iterations"
        )));
    }

    let (_, w) = gradient_and_curvature(y, &f);
    let sqrt_w = w.map(f64::sqrt);
    let (chol_b, j) = factor_b(k, &sqrt_w)?;
    jitter = jitter.max(j);
    let half_log_det: f64 = chol_b.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let log_evidence = psi - half_log_det;
    if !log_evidence.is_finite() {
        return Err(Error::Divergence("non-finite Laplace evidence".into()));
    }

    Ok(NodeSolve {
        a,
        f,
        sqrt_w,
        chol_b,
        log_evidence,
        iterations,
        converged,
        gradient_norm,
        trace,
        jitter,
    })
}

impl NodeSolve {
    /// Posterior covariance of η at targets with prior cross-covariance
    /// `k_ts` (targets × visited) and prior covariance `k_tt`:
    /// `K_tt − K_tS W^½ B⁻¹ W^½ K_St`.
    pub fn conditional_covariance(&self, k_ts: &DMatrix<f64>, k_tt: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = k_ts.transpose();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.sqrt_w[i];
        }
        let l = self.chol_b.l();
        let v = l
            .solve_lower_triangular(&scaled)
            .expect("factor of B has a positive diagonal");
        k_tt - v.transpose() * v
    }

    /// Posterior mean of η at targets: `K_tS a`.
    pub fn conditional_mean(&self, k_ts: &DMatrix<f64>) -> DVector<f64> {
        k_ts * &self.a
    }
}
