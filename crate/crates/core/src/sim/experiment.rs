//! Replicated comparison of adaptive and random designs on synthetic villages.

use std::fmt;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{default_villages, generate_village, GeneratorConfig, SyntheticVillage};
use crate::design::{initial_design, run_design, DesignConfig, DesignState, Strategy, TruthOracle};
use crate::domain::{CovariateSet, VillageFrame};
use crate::inference::ModelSettings;
use crate::rng::derive_seed;
use crate::{Error, Result};

const INITIAL_STREAM: u64 = 0;
const RUN_STREAM: u64 = 1;

/// One arm of the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    Adaptive { alpha: f64 },
    Random,
}

impl StrategySpec {
    pub fn label(&self) -> String {
        match self {
            StrategySpec::Adaptive { alpha } => format!("alpha={alpha}"),
            StrategySpec::Random => "random".into(),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            StrategySpec::Adaptive { alpha } => Some(*alpha),
            StrategySpec::Random => None,
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn paper_strategies() -> Vec<StrategySpec> {
    let mut s: Vec<StrategySpec> = [0.0, 0.15, 0.3, 0.7, 1.0, 2.0]
        .into_iter()
        .map(|alpha| StrategySpec::Adaptive { alpha })
        .collect();
    s.push(StrategySpec::Random);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub villages: Vec<GeneratorConfig>,
    pub strategies: Vec<StrategySpec>,
    pub covariate_sets: Vec<CovariateSet>,
    pub reps: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            villages: default_villages(),
            strategies: paper_strategies(),
            covariate_sets: vec![CovariateSet::Global, CovariateSet::All],
            reps: 50,
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn run_count(&self) -> usize {
        self.villages.len() * self.strategies.len() * self.covariate_sets.len() * self.reps
    }
}

/// Outcome of one design run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub village: String,
    pub strategy: String,
    pub covset: CovariateSet,
    pub rep: usize,
    pub design_size: usize,
    pub design_frac: f64,
    /// Truly infested houses outside the design over the village size.
    pub remaining_rate: f64,
    pub terminated_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub village: String,
    pub strategy: String,
    pub covset: CovariateSet,
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub master_seed: u64,
    pub runs: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

/// `(true infested among unvisited) / n`.
pub fn remaining_rate(frame: &VillageFrame, visited: &[usize]) -> f64 {
    let mut in_design = vec![false; frame.len()];
    for &s in visited {
        in_design[s] = true;
    }
    let remaining = frame
        .houses()
        .iter()
        .enumerate()
        .filter(|(i, h)| !in_design[*i] && h.true_status == Some(true))
        .count();
    remaining as f64 / frame.len() as f64
}

/// Shared initial design of replication `rep` in village `village`.
pub fn replication_initial_design(master_seed: u64, village: usize, rep: usize, n: usize, m1: usize) -> Vec<usize> {
    initial_design(
        n,
        m1,
        derive_seed(master_seed, &[INITIAL_STREAM, village as u64, rep as u64]),
    )
}

/// Seed of one run: a function of the master seed and the run's indices only.
pub fn run_seed(master_seed: u64, village: usize, strategy: usize, covset: usize, rep: usize) -> u64 {
    derive_seed(
        master_seed,
        &[RUN_STREAM, village as u64, strategy as u64, covset as u64, rep as u64],
    )
}

/// Runs one strategy from a given initial design.
pub fn run_strategy(
    frame: &VillageFrame,
    strategy: StrategySpec,
    design: &DesignConfig,
    model: &ModelSettings,
    initial: &[usize],
    seed: u64,
) -> Result<DesignState> {
    let mut cfg = *design;
    cfg.seed = seed;
    let kind = match strategy {
        StrategySpec::Adaptive { alpha } => {
            cfg.alpha = alpha;
            Strategy::Adaptive
        }
        StrategySpec::Random => Strategy::Random,
    };
    run_design(frame, &cfg, model, &mut TruthOracle, kind, initial)
}

struct Task {
    village: usize,
    strategy: usize,
    covset: usize,
    rep: usize,
}

/// Generates the configured villages and runs the full protocol.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    design: &DesignConfig,
    model: &ModelSettings,
    master_seed: u64,
) -> Result<ExperimentResult> {
    let villages = cfg.villages.iter().map(generate_village).collect::<Result<Vec<_>>>()?;
    run_on_villages(&villages, cfg, design, model, master_seed)
}

/// Runs every (village, strategy, covariate set, replication) combination.
/// Within a replication all strategies and covariate sets start from the
/// same initial design.
pub fn run_on_villages(
    villages: &[SyntheticVillage],
    cfg: &ExperimentConfig,
    design: &DesignConfig,
    model: &ModelSettings,
    master_seed: u64,
) -> Result<ExperimentResult> {
    run_on_villages_resuming(villages, cfg, design, model, master_seed, &[], &|_| {})
}

/// Either outcome of one run, as reported to a progress sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RunOutcome {
    Done(RunResult),
    Failed(RunFailure),
}

/// As [`run_on_villages`], but runs already in `previous` are taken as given
/// and every new outcome is passed to `sink` as soon as it is known. Results
/// come back in the same order as an uninterrupted experiment.
pub fn run_on_villages_resuming(
    villages: &[SyntheticVillage],
    cfg: &ExperimentConfig,
    design: &DesignConfig,
    model: &ModelSettings,
    master_seed: u64,
    previous: &[RunResult],
    sink: &(dyn Fn(&RunOutcome) + Sync),
) -> Result<ExperimentResult> {
    if cfg.reps == 0 || cfg.strategies.is_empty() || cfg.covariate_sets.is_empty() || villages.is_empty() {
        return Err(Error::invalid(
            "experiment",
            "needs villages, strategies, covariate sets and reps",
        ));
    }
    let frames: Vec<Vec<VillageFrame>> = villages
        .iter()
        .map(|v| {
            if !v.houses.iter().all(|h| h.true_status.is_some()) {
                return Err(Error::invalid("villages", format!("{} lacks true statuses", v.name)));
            }
            cfg.covariate_sets.iter().map(|&set| v.frame(set)).collect()
        })
        .collect::<Result<_>>()?;
    for f in &frames {
        design.validate(f[0].len())?;
    }
    model.validate()?;

    let known: std::collections::HashMap<(String, String, CovariateSet, usize), &RunResult> = previous
        .iter()
        .map(|r| ((r.village.clone(), r.strategy.clone(), r.covset, r.rep), r))
        .collect();
    let mut tasks = Vec::with_capacity(cfg.run_count());
    for village in 0..villages.len() {
        for rep in 0..cfg.reps {
            for covset in 0..cfg.covariate_sets.len() {
                for strategy in 0..cfg.strategies.len() {
                    tasks.push(Task {
                        village,
                        strategy,
                        covset,
                        rep,
                    });
                }
            }
        }
    }

    let run_task = |t: &Task, frame: &VillageFrame, spec: StrategySpec| -> std::result::Result<RunResult, RunFailure> {
        let initial = replication_initial_design(master_seed, t.village, t.rep, frame.len(), design.initial_size);
        let seed = run_seed(master_seed, t.village, t.strategy, t.covset, t.rep);
        match run_strategy(frame, spec, design, model, &initial, seed) {
            Ok(state) => Ok(RunResult {
                village: villages[t.village].name.clone(),
                strategy: spec.label(),
                covset: cfg.covariate_sets[t.covset],
                rep: t.rep,
                design_size: state.m_i(),
                design_frac: state.m_i() as f64 / frame.len() as f64,
                remaining_rate: remaining_rate(frame, &state.visited_sites()),
                terminated_iter: state.iteration,
            }),
            Err(e) => Err(RunFailure {
                village: villages[t.village].name.clone(),
                strategy: spec.label(),
                covset: cfg.covariate_sets[t.covset],
                rep: t.rep,
                error: e.to_string(),
            }),
        }
    };

    let execute = |t: &Task| -> std::result::Result<RunResult, RunFailure> {
        let frame = &frames[t.village][t.covset];
        let spec = cfg.strategies[t.strategy];
        let key = (
            villages[t.village].name.clone(),
            spec.label(),
            cfg.covariate_sets[t.covset],
            t.rep,
        );
        if let Some(r) = known.get(&key) {
            return Ok((*r).clone());
        }
        let outcome = run_task(t, frame, spec);
        sink(&match &outcome {
            Ok(r) => RunOutcome::Done(r.clone()),
            Err(f) => RunOutcome::Failed(f.clone()),
        });
        outcome
    };

    let outcomes: Vec<_> = if cfg.workers == 1 {
        tasks.iter().map(execute).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::invalid("workers", e.to_string()))?;
        pool.install(|| tasks.par_iter().map(execute).collect())
    };

    let mut runs = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => {
                warn!(
                    "run failed and is excluded: village {} strategy {} covset {} rep {}: {}",
                    f.village,
                    f.strategy,
                    f.covset.as_str(),
                    f.rep,
                    f.error
                );
                failures.push(f);
            }
        }
    }
    Ok(ExperimentResult {
        master_seed,
        runs,
        failures,
    })
}

impl ExperimentResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record([
            "village",
            "strategy",
            "covset",
            "rep",
            "design_size",
            "design_frac",
            "remaining_rate",
            "terminated_iter",
        ])
        .map_err(csv_error)?;
        for r in &self.runs {
            w.write_record([
                r.village.clone(),
                r.strategy.clone(),
                r.covset.as_str().to_string(),
                r.rep.to_string(),
                r.design_size.to_string(),
                r.design_frac.to_string(),
                r.remaining_rate.to_string(),
                r.terminated_iter.to_string(),
            ])
            .map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Csv {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    }
}
