//! Model comparison and posterior summaries: DIC, marginal likelihood, HPDIs,
//! the effective-range posterior and the JSON fit report.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampling::PosteriorDraws;
use super::{FitDiagnostics, ModelVariant, Observed, PosteriorFit};
use crate::domain::CovariateSet;
use crate::numerics::bernoulli_logit_loglik;
use crate::prior::HyperParams;
use crate::rng::stream;
use crate::{Error, Result};

const RANGE_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub dic: f64,
    pub p_d: f64,
    /// Posterior mean deviance.
    pub mean_deviance: f64,
    /// Deviance at the posterior mean of η.
    pub deviance_at_mean: f64,
}

fn deviance(observed: &Observed, eta: impl Fn(usize) -> f64) -> f64 {
    -2.0 * observed
        .sites()
        .iter()
        .zip(observed.y())
        .map(|(&s, &y)| bernoulli_logit_loglik(y, eta(s)))
        .sum::<f64>()
}

/// `DIC = D(η̄) + 2 p_D` with `p_D = mean D − D(η̄)`; η̄ is the posterior mean
/// linear predictor.
pub fn compute_dic(draws: &PosteriorDraws, observed: &Observed) -> Result<Dic> {
    let b = draws.len();
    if b == 0 {
        return Err(Error::invalid("draws", "DIC needs at least one draw"));
    }
    let mean_deviance = (0..b)
        .map(|d| {
            let col = draws.eta.column(d);
            deviance(observed, |s| col[s])
        })
        .sum::<f64>()
        / b as f64;
    let eta_bar = draws.eta.column_mean();
    let deviance_at_mean = deviance(observed, |s| eta_bar[s]);
    let p_d = mean_deviance - deviance_at_mean;
    Ok(Dic {
        dic: deviance_at_mean + 2.0 * p_d,
        p_d,
        mean_deviance,
        deviance_at_mean,
    })
}

pub fn log_marginal_likelihood(fit: &PosteriorFit) -> f64 {
    fit.log_ml()
}

/// Narrowest interval holding `⌈mass·B⌉` of the sorted samples; the first
/// such window wins ties.
pub fn hpdi(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "HPDI of an empty sample"));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::invalid("mass", format!("must lie in (0, 1), got {mass}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((mass * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let (lo, _) = (0..=sorted.len() - k)
        .map(|i| (i, sorted[i + k - 1] - sorted[i]))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok((sorted[lo], sorted[lo + k - 1]))
}

/// Half-sample mode (Bickel): repeatedly keep the narrowest half of the
/// sorted sample.
pub fn half_sample_mode(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "mode of an empty sample"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let mut lo = 0;
    let mut len = s.len();
    while len > 3 {
        let half = len.div_ceil(2);
        let mut best = lo;
        let mut width = f64::INFINITY;
        for i in lo..=lo + len - half {
            let w = s[i + half - 1] - s[i];
            if w < width {
                width = w;
                best = i;
            }
        }
        lo = best;
        len = half;
    }
    Ok(match len {
        1 => s[lo],
        2 => 0.5 * (s[lo] + s[lo + 1]),
        _ => {
            let (a, b, c) = (s[lo], s[lo + 1], s[lo + 2]);
            if b - a < c - b {
                0.5 * (a + b)
            } else if b - a > c - b {
                0.5 * (b + c)
            } else {
                b
            }
        }
    })
}

/// Effective-range draws in meters. Each draw's log-range is spread uniformly
/// over its grid cell so that the summaries are not confined to grid values.
pub fn effective_range_draws_m(fit: &PosteriorFit, draws: &PosteriorDraws) -> Option<Vec<f64>> {
    if !fit.variant().has_spatial() {
        return None;
    }
    let step = fit.grid_steps().first().copied().unwrap_or(0.0);
    let mut rng = stream(draws.seed, &[RANGE_STREAM]);
    let d = fit.frame().diameter_m();
    Some(
        draws
            .node
            .iter()
            .map(|&j| {
                let u = fit.nodes()[j].free[0] + step * (rng.gen::<f64>() - 0.5);
                u.exp() * d
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridNodeReport {
    pub rho: f64,
    pub rho_m: f64,
    pub sigma_s: f64,
    pub sigma_e: f64,
    pub log_likelihood: f64,
    pub log_evidence: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectSummary {
    pub name: String,
    pub mode: f64,
    pub mean: f64,
    pub sd: f64,
    pub hpdi50: (f64, f64),
    pub hpdi95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSummary {
    pub mode_m: f64,
    pub hpdi95_m: (f64, f64),
}

/// JSON-exportable summary of one fitted variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub variant: ModelVariant,
    pub covariate_set: CovariateSet,
    pub n_houses: usize,
    pub n_observed: usize,
    pub diameter_m: f64,
    pub mc_draws: usize,
    pub seed: u64,
    pub log_marginal_likelihood: f64,
    pub dic: Dic,
    pub hyper_map: HyperParams,
    pub grid: Vec<GridNodeReport>,
    pub fixed_effects: Vec<FixedEffectSummary>,
    pub effective_range: Option<RangeSummary>,
    pub diagnostics: FitDiagnostics,
}

impl FitReport {
    pub fn build(fit: &PosteriorFit, draws: &PosteriorDraws) -> Result<Self> {
        let frame = fit.frame();
        let b = draws.len();
        let map_mode = fit
            .nodes()
            .iter()
            .max_by(|a, b| a.log_evidence().total_cmp(&b.log_evidence()))
            .expect("grid is nonempty");
        let fixed_effects = frame
            .columns()
            .iter()
            .enumerate()
            .map(|(k, col)| {
                let xs: Vec<f64> = draws.beta.row(k).iter().copied().collect();
                let mean = xs.iter().sum::<f64>() / b as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b.max(2) - 1) as f64;
                Ok(FixedEffectSummary {
                    name: col.name.clone(),
                    mode: map_mode.mode.beta[k],
                    mean,
                    sd: var.sqrt(),
                    hpdi50: hpdi(&xs, 0.5)?,
                    hpdi95: hpdi(&xs, 0.95)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let effective_range = match effective_range_draws_m(fit, draws) {
            Some(r) => Some(RangeSummary {
                mode_m: half_sample_mode(&r)?,
                hpdi95_m: hpdi(&r, 0.95)?,
            }),
            None => None,
        };
        let d = frame.diameter_m();
        Ok(FitReport {
            variant: fit.variant(),
            covariate_set: frame.covariate_set(),
            n_houses: frame.len(),
            n_observed: fit.observed().len(),
            diameter_m: d,
            mc_draws: b,
            seed: draws.seed,
            log_marginal_likelihood: fit.log_ml(),
            dic: compute_dic(draws, fit.observed())?,
            hyper_map: fit.variant().hyper(fit.map_free()),
            grid: fit
                .nodes()
                .iter()
                .map(|nd| GridNodeReport {
                    rho: nd.hyper.rho,
                    rho_m: nd.hyper.rho * d,
                    sigma_s: nd.hyper.sigma_s,
                    sigma_e: nd.hyper.sigma_e,
                    log_likelihood: nd.log_likelihood,
                    log_evidence: nd.log_evidence(),
                    weight: nd.weight,
                })
                .collect(),
            fixed_effects,
            effective_range,
            diagnostics: fit.diagnostics().clone(),
        })
    }
}
