//! Dense factorization helpers shared by the kernel, inference and generator code.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::{Error, Result};

/// Relative size of the first diagonal jitter, as a fraction of the mean diagonal.
pub const JITTER_BASE: f64 = 1e-10;
/// Number of jittered retries after the plain factorization fails.
pub const JITTER_RETRIES: usize = 3;

/// A Cholesky factor together with the diagonal jitter that was needed to obtain it.
#[derive(Debug, Clone)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

/// Cholesky factorization with the escalating diagonal-jitter policy.
///
/// The plain matrix is tried first; on failure `1e-10 · mean(diag)` is added and
/// the attempt repeated with a tenfold increase, at most three times.
pub fn cholesky_with_jitter(matrix: &DMatrix<f64>, what: &str) -> Result<Factor> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::Factorization(format!("{what}: matrix is not square")));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization(format!("{what}: non-finite entries")));
    }
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok(Factor { chol, jitter: 0.0 });
    }
    let mean_diag = if n == 0 {
        1.0
    } else {
        (matrix.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64).max(f64::MIN_POSITIVE)
    };
    let mut jitter = JITTER_BASE * mean_diag;
    for _ in 0..JITTER_RETRIES {
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(Factor { chol, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::Factorization(format!(
        "{what}: not positive definite after {JITTER_RETRIES} jittered retries"
    )))
}

/// `log det` of the factored matrix.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
