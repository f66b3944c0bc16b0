//! Prior covariance blocks of the linear predictor `η = Xβ + v`.

use nalgebra::DMatrix;

use crate::domain::VillageFrame;
use crate::prior::{matern_correlation, HyperParams};

/// Matérn correlation between two site lists.
pub fn correlation_block(frame: &VillageFrame, rows: &[usize], cols: &[usize], rho: f64) -> DMatrix<f64> {
    let d = frame.distances();
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        matern_correlation(d[(rows[i], cols[j])], rho)
    })
}

/// Symmetric Matérn correlation over one site list.
pub fn correlation_square(frame: &VillageFrame, sites: &[usize], rho: f64) -> DMatrix<f64> {
    let d = frame.distances();
    let n = sites.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = 1.0;
        for i in 0..j {
            let c = matern_correlation(d[(sites[i], sites[j])], rho);
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    m
}

/// `Cov(η_rows, η_cols) = τ² X_r X_cᵀ + σs² M_rc + σe² 1[same site]`.
///
/// `corr` may supply the precomputed correlation block; it is ignored when
/// the spatial sd is zero.
pub fn eta_cov(
    frame: &VillageFrame,
    rows: &[usize],
    cols: &[usize],
    h: &HyperParams,
    tau2: f64,
    corr: Option<&DMatrix<f64>>,
) -> DMatrix<f64> {
    let x = frame.design();
    let xr = x.select_rows(rows);
    let xc = x.select_rows(cols);
    let mut k = (xr * xc.transpose()) * tau2;
    if h.sigma_s > 0.0 {
        let s2 = h.sigma_s * h.sigma_s;
        match corr {
            Some(m) => k += m * s2,
            None => k += correlation_block(frame, rows, cols, h.rho) * s2,
        }
    }
    let e2 = h.sigma_e * h.sigma_e;
    if e2 > 0.0 {
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                if r == c {
                    k[(i, j)] += e2;
                }
            }
        }
    }
    k
}

/// Prior covariance of η over the visited sites.
pub fn eta_cov_square(frame: &VillageFrame, sites: &[usize], h: &HyperParams, tau2: f64) -> DMatrix<f64> {
    let xs = frame.design().select_rows(sites);
    let mut k = (&xs * xs.transpose()) * tau2;
    if h.sigma_s > 0.0 {
        k += correlation_square(frame, sites, h.rho) * (h.sigma_s * h.sigma_s);
    }
    for i in 0..sites.len() {
        k[(i, i)] += h.sigma_e * h.sigma_e;
    }
    k
}
