//! Exploration schedule, utility, termination rule and batch selection.

use serde::{Deserialize, Serialize};

use super::DesignConfig;
use crate::inference::PredictiveDraws;
use crate::numerics::quantile;
use crate::{Error, Result};

/// `t = ((m_i − m₁)/(n − m₁))^α`, with `0⁰ = 1`.
pub fn schedule_t(m_i: usize, m1: usize, n: usize, alpha: f64) -> Result<f64> {
    if n <= m1 {
        return Err(Error::invalid(
            "initial_size",
            format!("schedule undefined for n = {n} ≤ m1 = {m1}"),
        ));
    }
    if m_i < m1 || m_i > n {
        return Err(Error::invalid("m_i", format!("{m_i} outside [{m1}, {n}]")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("must be non-negative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    Ok(((m_i - m1) as f64 / (n - m1) as f64).powf(alpha))
}

/// Centers and scales by the population sd; constant columns become zeros.
pub fn standardize_population(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return vec![];
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 1e-14 * (1.0 + mean.abs())) {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / sd).collect()
}

/// Utility of one unvisited house and its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    pub utility: f64,
    pub t: f64,
    pub risk_std: f64,
    pub variance_std: f64,
}

/// `U = t·r̃ + (1 − t)·ν̃` per unvisited site, in the order of `pred.sites`.
pub fn utility_scores(pred: &PredictiveDraws, t: f64) -> Vec<UtilityBreakdown> {
    combine_utility(&pred.risk_mean, &pred.risk_var, t)
}

pub fn combine_utility(risk_mean: &[f64], risk_var: &[f64], t: f64) -> Vec<UtilityBreakdown> {
    let r = standardize_population(risk_mean);
    let v = standardize_population(risk_var);
    r.iter()
        .zip(&v)
        .map(|(&r, &v)| UtilityBreakdown {
            utility: t * r + (1.0 - t) * v,
            t,
            risk_std: r,
            variance_std: v,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationReport {
    /// Fraction of predictive draws with `I₀ < κn`.
    pub p_below: f64,
    pub decision: bool,
    pub n: usize,
    pub n0: usize,
    /// `κn`, unrounded; the comparison is strict.
    pub threshold: f64,
    pub draws: usize,
    pub i0_mean: f64,
    pub i0_q05: f64,
    pub i0_median: f64,
    pub i0_q95: f64,
}

/// Monte Carlo estimate of `P(I₀ < κn)` and the decision `p_below ≥ γ`.
pub fn check_termination(pred: &PredictiveDraws, cfg: &DesignConfig, n: usize) -> TerminationReport {
    let threshold = cfg.target_rate * n as f64;
    let draws = pred.i0_samples.len();
    let (p_below, i0s) = if pred.n0() == 0 || draws == 0 {
        (1.0, vec![0.0])
    } else {
        let below = pred.i0_samples.iter().filter(|&&c| (c as f64) < threshold).count();
        (
            below as f64 / draws as f64,
            pred.i0_samples.iter().map(|&c| c as f64).collect::<Vec<_>>(),
        )
    };
    TerminationReport {
        p_below,
        decision: p_below >= cfg.confidence,
        n,
        n0: pred.n0(),
        threshold,
        draws,
        i0_mean: i0s.iter().sum::<f64>() / i0s.len() as f64,
        i0_q05: quantile(&i0s, 0.05),
        i0_median: quantile(&i0s, 0.5),
        i0_q95: quantile(&i0s, 0.95),
    }
}

/// Positions of the `b` highest utilities; ties go to the smaller house id.
pub fn select_batch(ids: &[&str], utility: &[f64], b: usize) -> Vec<usize> {
    assert_eq!(ids.len(), utility.len());
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&i, &j| utility[j].total_cmp(&utility[i]).then_with(|| ids[i].cmp(ids[j])));
    order.truncate(b);
    order
}
