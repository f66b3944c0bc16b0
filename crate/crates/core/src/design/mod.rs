//! Sequential design: fit, check the stopping rule, score and select the next
//! batch, repeat.

pub mod rules;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::domain::VillageFrame;
use crate::inference::{predict_unvisited, sample_posterior, ModelSettings, Observed, PosteriorFit, PredictiveDraws};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

pub use rules::{
    check_termination, combine_utility, schedule_t, select_batch, standardize_population, utility_scores,
    TerminationReport, UtilityBreakdown,
};

const INITIAL_STREAM: u64 = 0;
const FIT_STREAM: u64 = 1;
const RANDOM_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    /// Exploration parameter α ≥ 0.
    pub alpha: f64,
    pub batch_size: usize,
    /// Size m₁ of the uniform initial design.
    pub initial_size: usize,
    /// Target infestation rate κ.
    pub target_rate: f64,
    /// Confidence γ.
    pub confidence: f64,
    /// Monte Carlo draws B per fit.
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            alpha: 0.3,
            batch_size: 3,
            initial_size: 10,
            target_rate: 0.05,
            confidence: 0.95,
            mc_draws: 5000,
            seed: 0,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(
                "alpha",
                format!("must be non-negative, got {}", self.alpha),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.initial_size == 0 {
            return Err(Error::invalid("initial_size", "must be at least 1"));
        }
        if self.initial_size > n {
            return Err(Error::invalid(
                "initial_size",
                format!(
                    "initial design of {} exceeds the {n} houses in the village",
                    self.initial_size
                ),
            ));
        }
        for (name, v) in [("target_rate", self.target_rate), ("confidence", self.confidence)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        if self.mc_draws == 0 {
            return Err(Error::invalid("mc_draws", "must be at least 1"));
        }
        Ok(())
    }
}

/// Source of true statuses for visited houses.
pub trait StatusOracle {
    fn status(&mut self, frame: &VillageFrame, site: usize) -> Result<bool>;
}

/// Answers from the frame's simulated ground truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct TruthOracle;

impl StatusOracle for TruthOracle {
    fn status(&mut self, frame: &VillageFrame, site: usize) -> Result<bool> {
        let h = frame.house(site);
        h.true_status.ok_or_else(|| Error::Oracle {
            id: h.id.clone(),
            message: "house has no true status".into(),
        })
    }
}

/// Uniform initial design of `m1` distinct sites.
pub fn initial_design(n: usize, m1: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, &[INITIAL_STREAM]);
    index::sample(&mut rng, n, m1.min(n)).into_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Adaptive,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub id: String,
    pub site: usize,
    /// 0 for the initial design.
    pub batch: usize,
    pub infested: bool,
}

/// A recommended house with its utility parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub id: String,
    pub site: usize,
    #[serde(flatten)]
    pub breakdown: UtilityBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Visited count when the posterior was fitted.
    pub m_i: usize,
    pub p_below: f64,
    pub decision: bool,
    /// Schedule weight used for the batch; absent when stopping or for random batches.
    pub t: Option<f64>,
    /// Houses selected after this check.
    pub added: Vec<String>,
    pub batch: Vec<Recommendation>,
    pub termination: TerminationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignState {
    pub strategy: Strategy,
    pub config: DesignConfig,
    pub n: usize,
    pub visited: Vec<Visit>,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    pub terminated: bool,
}

impl DesignState {
    pub fn m_i(&self) -> usize {
        self.visited.len()
    }

    pub fn observed(&self, n: usize) -> Result<Observed> {
        Observed::new(n, self.visited.iter().map(|v| (v.site, v.infested)))
    }

    pub fn visited_sites(&self) -> Vec<usize> {
        self.visited.iter().map(|v| v.site).collect()
    }
}

/// Posterior, predictive draws and stopping check after one fit.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub fit: PosteriorFit,
    pub prediction: PredictiveDraws,
    pub termination: TerminationReport,
}

/// Fits the design and evaluates the stopping rule; `iteration` selects the
/// random stream for the Monte Carlo draws.
pub fn assess(
    frame: &VillageFrame,
    observed: &Observed,
    cfg: &DesignConfig,
    model: &ModelSettings,
    iteration: usize,
    warm: Option<&[f64]>,
) -> Result<Assessment> {
    let fit = model.fit(frame, observed, warm)?;
    let draws = sample_posterior(
        &fit,
        cfg.mc_draws,
        derive_seed(cfg.seed, &[FIT_STREAM, iteration as u64]),
    )?;
    let prediction = predict_unvisited(&fit, &draws);
    let termination = check_termination(&prediction, cfg, frame.len());
    Ok(Assessment {
        fit,
        prediction,
        termination,
    })
}

/// Top-`b` houses by utility at schedule weight `t`.
pub fn recommend(frame: &VillageFrame, prediction: &PredictiveDraws, t: f64, b: usize) -> Vec<Recommendation> {
    let scores = utility_scores(prediction, t);
    let ids: Vec<&str> = prediction.sites.iter().map(|&s| frame.house(s).id.as_str()).collect();
    let utility: Vec<f64> = scores.iter().map(|s| s.utility).collect();
    select_batch(&ids, &utility, b)
        .into_iter()
        .map(|k| Recommendation {
            id: ids[k].to_string(),
            site: prediction.sites[k],
            breakdown: scores[k],
        })
        .collect()
}

/// Adaptive design from a uniform initial design drawn from `cfg.seed`.
pub fn run_adaptive(
    frame: &VillageFrame,
    cfg: &DesignConfig,
    model: &ModelSettings,
    oracle: &mut dyn StatusOracle,
) -> Result<DesignState> {
    let initial = initial_design(frame.len(), cfg.initial_size, cfg.seed);
    run_design(frame, cfg, model, oracle, Strategy::Adaptive, &initial)
}

/// Random-batch baseline from a uniform initial design drawn from `cfg.seed`.
pub fn run_random(
    frame: &VillageFrame,
    cfg: &DesignConfig,
    model: &ModelSettings,
    oracle: &mut dyn StatusOracle,
) -> Result<DesignState> {
    let initial = initial_design(frame.len(), cfg.initial_size, cfg.seed);
    run_design(frame, cfg, model, oracle, Strategy::Random, &initial)
}

/// The sampling loop from a given initial design.
pub fn run_design(
    frame: &VillageFrame,
    cfg: &DesignConfig,
    model: &ModelSettings,
    oracle: &mut dyn StatusOracle,
    strategy: Strategy,
    initial: &[usize],
) -> Result<DesignState> {
    let n = frame.len();
    cfg.validate(n)?;
    model.validate()?;
    if initial.len() != cfg.initial_size {
        return Err(Error::invalid(
            "initial_design",
            format!("expected {} houses, got {}", cfg.initial_size, initial.len()),
        ));
    }
    let mut state = DesignState {
        strategy,
        config: *cfg,
        n,
        visited: Vec::with_capacity(n),
        iteration: 0,
        history: Vec::new(),
        terminated: false,
    };
    let mut seen = vec![false; n];
    let mut visit = |state: &mut DesignState, site: usize, batch: usize, oracle: &mut dyn StatusOracle| -> Result<()> {
        if site >= n || seen[site] {
            return Err(Error::invalid(
                "design",
                format!("site {site} is out of range or already visited"),
            ));
        }
        seen[site] = true;
        let infested = oracle.status(frame, site)?;
        state.visited.push(Visit {
            id: frame.house(site).id.clone(),
            site,
            batch,
            infested,
        });
        Ok(())
    };
    for &s in initial {
        visit(&mut state, s, 0, oracle)?;
    }

    let mut warm: Option<Vec<f64>> = None;
    loop {
        state.iteration += 1;
        let i = state.iteration;
        let at = |e: Error| Error::AtIteration {
            iteration: i,
            source: Box::new(e),
        };
        let observed = state.observed(n).map_err(at)?;
        let a = assess(frame, &observed, cfg, model, i, warm.as_deref()).map_err(at)?;
        warm = Some(a.fit.map_free().to_vec());
        let m_i = state.m_i();
        let mut record = IterationRecord {
            iteration: i,
            m_i,
            p_below: a.termination.p_below,
            decision: a.termination.decision,
            t: None,
            added: vec![],
            batch: vec![],
            termination: a.termination.clone(),
        };
        if a.termination.decision || a.prediction.n0() == 0 {
            state.terminated = true;
            state.history.push(record);
            break;
        }
        let picks: Vec<usize> = match strategy {
            Strategy::Adaptive => {
                let t = schedule_t(m_i, cfg.initial_size, n, cfg.alpha).map_err(at)?;
                record.t = Some(t);
                record.batch = recommend(frame, &a.prediction, t, cfg.batch_size);
                record.batch.iter().map(|r| r.site).collect()
            }
            Strategy::Random => {
                let unvisited = &a.prediction.sites;
                let mut rng = stream(cfg.seed, &[RANDOM_STREAM, i as u64]);
                let mut idx = index::sample(&mut rng, unvisited.len(), cfg.batch_size.min(unvisited.len())).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|k| unvisited[k]).collect()
            }
        };
        for &s in &picks {
            visit(&mut state, s, i, oracle).map_err(at)?;
        }
        record.added = picks.iter().map(|&s| frame.house(s).id.clone()).collect();
        state.history.push(record);
    }
    Ok(state)
}
