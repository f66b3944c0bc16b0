//! Posterior inference for the spatial logistic model.
//!
//! For each hyperparameter node the latent posterior is approximated by a
//! Gaussian at its mode; nodes are placed on a log-scale grid around the
//! hyperparameter MAP and weighted by their Laplace evidence.

pub mod grid;
pub mod joint;
pub mod kernel;
pub mod laplace;
pub mod optimize;
pub mod sampling;
pub mod summary;
pub mod variant;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::VillageFrame;
use crate::prior::{HyperParams, PriorConfig};
use crate::{Error, Result};

pub use laplace::{NewtonConfig, NodeSolve};
pub use optimize::NelderMeadConfig;
pub use sampling::{predict_unvisited, sample_posterior, PosteriorDraws, PredictiveDraws};
pub use summary::{compute_dic, half_sample_mode, hpdi, log_marginal_likelihood, Dic, FitReport};
pub use variant::{ModelVariant, PINNED_NUGGET_SD};

/// Fixed-effect estimates past this magnitude flag (quasi-)separation.
pub const SEPARATION_BOUND: f64 = 10.0;

/// The design: visited sites (frame indices) and their observed statuses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observed {
    sites: Vec<usize>,
    y: Vec<bool>,
}

impl Observed {
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, bool)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut sites = Vec::new();
        let mut y = Vec::new();
        for (site, status) in pairs {
            if site >= n {
                return Err(Error::invalid(
                    "observed",
                    format!("site {site} outside a village of {n} houses"),
                ));
            }
            if !seen.insert(site) {
                return Err(Error::invalid("observed", format!("site {site} observed twice")));
            }
            sites.push(site);
            y.push(status);
        }
        Ok(Observed { sites, y })
    }

    /// Houses whose `status` column is infested or clear.
    pub fn from_status(frame: &VillageFrame) -> Self {
        let (sites, y) = frame
            .houses()
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.status.observed().map(|s| (i, s)))
            .unzip();
        Observed { sites, y }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn y(&self) -> &[bool] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Sites of an `n`-house village that are not in the design, ascending.
    pub fn unvisited(&self, n: usize) -> Vec<usize> {
        let mut visited = vec![false; n];
        for &s in &self.sites {
            visited[s] = true;
        }
        (0..n).filter(|&i| !visited[i]).collect()
    }
}

/// Fixed effects, latent field and linear predictor at every village site.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub beta: DVector<f64>,
    pub v: DVector<f64>,
    pub eta: DVector<f64>,
}

impl LatentState {
    pub fn from_eta(x: &DMatrix<f64>, beta: DVector<f64>, eta: DVector<f64>) -> Self {
        let v = &eta - x * &beta;
        LatentState { beta, v, eta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HyperMode {
    /// MAP plus grid integration.
    Integrate,
    /// A single node at the given hyperparameters.
    Fixed(HyperParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Grid points per hyperparameter axis.
    pub grid_points: usize,
    /// Half-width of each grid axis in approximate posterior sds.
    pub grid_span_sd: f64,
    pub newton: NewtonConfig,
    pub optimizer: NelderMeadConfig,
    /// Finite-difference step for the curvature at the MAP, in log units.
    pub hessian_step: f64,
    pub hyper: HyperMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            grid_points: 5,
            grid_span_sd: 2.5,
            newton: NewtonConfig::default(),
            optimizer: NelderMeadConfig::default(),
            hessian_step: 0.05,
            hyper: HyperMode::Integrate,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points == 0 {
            return Err(Error::invalid("engine.grid_points", "must be at least 1"));
        }
        if !(self.grid_span_sd > 0.0) {
            return Err(Error::invalid("engine.grid_span_sd", "must be positive"));
        }
        if self.newton.max_iterations == 0 {
            return Err(Error::invalid("engine.newton.max_iterations", "must be at least 1"));
        }
        if !(self.hessian_step > 0.0) {
            return Err(Error::invalid("engine.hessian_step", "must be positive"));
        }
        if let HyperMode::Fixed(h) = &self.hyper {
            h.validate()?;
        }
        Ok(())
    }
}

/// Everything needed to fit one model to a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub variant: ModelVariant,
    pub prior: PriorConfig,
    pub engine: EngineConfig,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            variant: ModelVariant::Full,
            prior: PriorConfig::default(),
            engine: EngineConfig::default(),
        }
    }
}

impl ModelSettings {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.engine.validate()
    }

    pub fn fit(&self, frame: &VillageFrame, observed: &Observed, start: Option<&[f64]>) -> Result<PosteriorFit> {
        laplace_fit_from(frame, observed, &self.prior, self.variant, &self.engine, start)
    }
}

/// One hyperparameter node with its conditional Laplace approximation.
#[derive(Debug, Clone)]
pub struct GridNode {
    /// Free log-coordinates of the node.
    pub free: Vec<f64>,
    pub hyper: HyperParams,
    /// Laplace approximation of `log p(y | θ)`.
    pub log_likelihood: f64,
    /// Prior log-density of the free coordinates.
    pub log_prior: f64,
    /// Normalized weight.
    pub weight: f64,
    pub mode: LatentState,
    pub solve: NodeSolve,
    corr_block: Option<usize>,
}

impl GridNode {
    /// Unnormalized log posterior of the node.
    pub fn log_evidence(&self) -> f64 {
        self.log_likelihood + self.log_prior
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub optimizer_evaluations: usize,
    pub optimizer_converged: bool,
    /// Approximate posterior sd per free axis used to size the grid.
    pub axis_sd: Vec<f64>,
    /// Curvature at the MAP was not positive definite; per-axis fallbacks used.
    pub hessian_fallback: bool,
    pub newton_iterations: Vec<usize>,
    pub unconverged_nodes: usize,
    pub failed_nodes: usize,
    pub jitter_events: usize,
    pub max_jitter: f64,
    /// Some node mode has a fixed effect outside `±SEPARATION_BOUND`.
    pub separation: bool,
}

/// Laplace-approximated posterior integrated over a hyperparameter grid.
#[derive(Debug, Clone)]
pub struct PosteriorFit {
    frame: VillageFrame,
    observed: Observed,
    variant: ModelVariant,
    prior: PriorConfig,
    nodes: Vec<GridNode>,
    map_free: Vec<f64>,
    grid_steps: Vec<f64>,
    log_cell_volume: f64,
    log_ml: f64,
    /// Correlation blocks `M(all, S)`, one per distinct range among the nodes.
    corr_blocks: Vec<(f64, DMatrix<f64>)>,
    diagnostics: FitDiagnostics,
}

impl PosteriorFit {
    pub fn frame(&self) -> &VillageFrame {
        &self.frame
    }

    pub fn observed(&self) -> &Observed {
        &self.observed
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn tau2(&self) -> f64 {
        self.prior.beta_prior_variance
    }

    pub fn nodes(&self) -> &[GridNode] {
        &self.nodes
    }

    pub fn map_free(&self) -> &[f64] {
        &self.map_free
    }

    pub fn log_cell_volume(&self) -> f64 {
        self.log_cell_volume
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn unvisited(&self) -> Vec<usize> {
        self.observed.unvisited(self.frame.len())
    }

    /// Grid spacing per free axis (zero for a single node).
    pub fn grid_steps(&self) -> &[f64] {
        &self.grid_steps
    }

    /// Log of the normalizing constant `Σ evidence × cell volume`.
    pub fn log_ml(&self) -> f64 {
        self.log_ml
    }

    /// `Cov(η_all, η_S)` at a node.
    pub fn cross_cov(&self, node: usize) -> DMatrix<f64> {
        let nd = &self.nodes[node];
        let all: Vec<usize> = (0..self.frame.len()).collect();
        let corr = nd.corr_block.map(|b| &self.corr_blocks[b].1);
        kernel::eta_cov(&self.frame, &all, self.observed.sites(), &nd.hyper, self.tau2(), corr)
    }

    /// Gaussian approximation of η at `targets` conditional on the node's
    /// hyperparameters: mean and covariance.
    pub fn predictive_moments(&self, node: usize, targets: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let nd = &self.nodes[node];
        let k_ts = kernel::eta_cov(
            &self.frame,
            targets,
            self.observed.sites(),
            &nd.hyper,
            self.tau2(),
            None,
        );
        let k_tt = kernel::eta_cov(&self.frame, targets, targets, &nd.hyper, self.tau2(), None);
        (
            nd.solve.conditional_mean(&k_ts),
            nd.solve.conditional_covariance(&k_ts, &k_tt),
        )
    }

    /// Weight-averaged hyperparameters (free coordinates averaged in log space).
    pub fn posterior_mean_free(&self) -> Vec<f64> {
        let d = self.variant.dim();
        (0..d)
            .map(|k| self.nodes.iter().map(|n| n.weight * n.free[k]).sum())
            .collect()
    }
}

/// Conditional Laplace approximation at fixed hyperparameters.
pub fn conditional_laplace(
    frame: &VillageFrame,
    observed: &Observed,
    h: &HyperParams,
    prior: &PriorConfig,
    newton: &NewtonConfig,
    warm: Option<&DVector<f64>>,
) -> Result<NodeSolve> {
    let k = kernel::eta_cov_square(frame, observed.sites(), h, prior.beta_prior_variance);
    laplace::solve_node(&k, observed.y(), warm, newton)
}

/// Fits the posterior with the default optimizer start.
pub fn laplace_fit(
    frame: &VillageFrame,
    observed: &Observed,
    prior: &PriorConfig,
    variant: ModelVariant,
    engine: &EngineConfig,
) -> Result<PosteriorFit> {
    laplace_fit_from(frame, observed, prior, variant, engine, None)
}

/// Fits the posterior, starting the MAP search at `start` (free coordinates)
/// when given.
pub fn laplace_fit_from(
    frame: &VillageFrame,
    observed: &Observed,
    prior: &PriorConfig,
    variant: ModelVariant,
    engine: &EngineConfig,
    start: Option<&[f64]>,
) -> Result<PosteriorFit> {
    if observed.is_empty() {
        return Err(Error::EmptyDesign);
    }
    prior.validate()?;
    engine.validate()?;
    let tau2 = prior.beta_prior_variance;
    let mut diagnostics = FitDiagnostics::default();

    let neg_log_post = |x: &[f64], warm: Option<&DVector<f64>>| -> Option<NodeSolve> {
        if !variant.in_bounds(x) {
            return None;
        }
        let h = variant.hyper(x);
        conditional_laplace(frame, observed, &h, prior, &engine.newton, warm).ok()
    };

    let (map_free, axis_sd, map_solve) = match engine.hyper {
        HyperMode::Fixed(h) => {
            let x = variant.free(&h);
            let s = conditional_laplace(frame, observed, &variant.hyper(&x), prior, &engine.newton, None)?;
            diagnostics.optimizer_converged = true;
            (x, vec![0.0; variant.dim()], s)
        }
        HyperMode::Integrate => {
            let default_start = variant.default_start();
            let warm_start = start.filter(|s| s.len() == variant.dim() && variant.in_bounds(s));
            let x0 = warm_start.unwrap_or(&default_start);
            let mut optimizer = engine.optimizer;
            if warm_start.is_some() {
                optimizer.initial_step = optimizer.warm_step;
            }
            let mut warm: Option<DVector<f64>> = None;
            let objective = |x: &[f64]| -> f64 {
                match neg_log_post(x, warm.as_ref()) {
                    Some(s) => {
                        let v = -(s.log_evidence + variant.log_prior(x, prior));
                        warm = Some(s.a);
                        v
                    }
                    None => f64::INFINITY,
                }
            };
            let min = optimize::nelder_mead(objective, x0, &optimizer);
            diagnostics.optimizer_evaluations = min.evaluations;
            diagnostics.optimizer_converged = min.converged;
            if !min.value.is_finite() {
                return Err(Error::Divergence(
                    "no hyperparameter value gave a finite posterior".into(),
                ));
            }
            let s = neg_log_post(&min.x, None)
                .ok_or_else(|| Error::Divergence("Laplace solve failed at the hyperparameter MAP".into()))?;
            let (sd, fallback) = if engine.grid_points > 1 {
                axis_sd(&min.x, min.value, engine.hessian_step, |x| {
                    match neg_log_post(x, Some(&s.a)) {
                        Some(t) => -(t.log_evidence + variant.log_prior(x, prior)),
                        None => f64::INFINITY,
                    }
                })
            } else {
                (vec![0.0; variant.dim()], false)
            };
            diagnostics.hessian_fallback = fallback;
            (min.x, sd, s)
        }
    };

    let points = match engine.hyper {
        HyperMode::Fixed(_) => 1,
        HyperMode::Integrate => engine.grid_points,
    };
    let (grid, grid_steps) = grid::tensor(&map_free, &axis_sd, &grid::offsets(points, engine.grid_span_sd));
    let log_cell_volume: f64 = if points > 1 {
        grid_steps.iter().map(|s| s.ln()).sum()
    } else {
        0.0
    };

    let solved: Vec<Result<(Vec<f64>, HyperParams, NodeSolve)>> = grid
        .into_par_iter()
        .map(|x| {
            let h = variant.hyper(&x);
            let s = conditional_laplace(frame, observed, &h, prior, &engine.newton, Some(&map_solve.a))?;
            Ok((x, h, s))
        })
        .collect();

    let mut corr_blocks: Vec<(f64, DMatrix<f64>)> = Vec::new();
    let all: Vec<usize> = (0..frame.len()).collect();
    let mut nodes = Vec::with_capacity(solved.len());
    let mut last_error = None;
    for r in solved {
        let (free, hyper, solve) = match r {
            Ok(v) => v,
            Err(e) => {
                diagnostics.failed_nodes += 1;
                last_error = Some(e);
                continue;
            }
        };
        let corr_block = if hyper.sigma_s > 0.0 {
            let idx = match corr_blocks.iter().position(|(rho, _)| *rho == hyper.rho) {
                Some(i) => i,
                None => {
                    corr_blocks.push((
                        hyper.rho,
                        kernel::correlation_block(frame, &all, observed.sites(), hyper.rho),
                    ));
                    corr_blocks.len() - 1
                }
            };
            Some(idx)
        } else {
            None
        };
        let k_all_s = kernel::eta_cov(
            frame,
            &all,
            observed.sites(),
            &hyper,
            tau2,
            corr_block.map(|b| &corr_blocks[b].1),
        );
        let xs = frame.design().select_rows(observed.sites());
        let beta = xs.transpose() * &solve.a * tau2;
        let eta = &k_all_s * &solve.a;
        let mode = LatentState::from_eta(frame.design(), beta, eta);

        diagnostics.newton_iterations.push(solve.iterations);
        if !solve.converged {
            diagnostics.unconverged_nodes += 1;
        }
        if solve.jitter > 0.0 {
            diagnostics.jitter_events += 1;
            diagnostics.max_jitter = diagnostics.max_jitter.max(solve.jitter);
        }
        if mode.beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            diagnostics.separation = true;
        }
        let log_prior = variant.log_prior(&free, prior);
        nodes.push(GridNode {
            free,
            hyper,
            log_likelihood: solve.log_evidence,
            log_prior,
            weight: 0.0,
            mode,
            solve,
            corr_block,
        });
    }
    if nodes.is_empty() {
        return Err(last_error.unwrap_or(Error::Divergence("empty hyperparameter grid".into())));
    }

    let log_ml = match engine.hyper {
        HyperMode::Fixed(_) => {
            nodes[0].weight = 1.0;
            nodes[0].log_likelihood
        }
        HyperMode::Integrate => {
            let log_values: Vec<f64> = nodes.iter().map(GridNode::log_evidence).collect();
            let (weights, log_ml) = grid::integrate(&log_values, log_cell_volume);
            for (n, w) in nodes.iter_mut().zip(weights) {
                n.weight = w;
            }
            log_ml
        }
    };
    diagnostics.axis_sd = axis_sd;

    Ok(PosteriorFit {
        frame: frame.clone(),
        observed: observed.clone(),
        variant,
        prior: *prior,
        nodes,
        map_free,
        grid_steps,
        log_cell_volume,
        log_ml,
        corr_blocks,
        diagnostics,
    })
}

const MIN_AXIS_SD: f64 = 0.02;
const MAX_AXIS_SD: f64 = 1.5;
const FALLBACK_AXIS_SD: f64 = 1.0;

/// Approximate posterior sd per axis from a central-difference Hessian of the
/// negative log posterior. Falls back to conditional sds, then to a default,
/// when the curvature is not positive definite.
fn axis_sd(x: &[f64], fx: f64, step: f64, mut f: impl FnMut(&[f64]) -> f64) -> (Vec<f64>, bool) {
    let d = x.len();
    let mut at = |dx: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(k, s) in dx {
            y[k] += s;
        }
        f(&y)
    };
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        let plus = at(&[(i, step)]);
        let minus = at(&[(i, -step)]);
        h[(i, i)] = (plus - 2.0 * fx + minus) / (step * step);
        for j in 0..i {
            let pp = at(&[(i, step), (j, step)]);
            let pm = at(&[(i, step), (j, -step)]);
            let mp = at(&[(i, -step), (j, step)]);
            let mm = at(&[(i, -step), (j, -step)]);
            let v = (pp - pm - mp + mm) / (4.0 * step * step);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let clamp = |s: f64| {
        if s.is_finite() {
            s.clamp(MIN_AXIS_SD, MAX_AXIS_SD)
        } else {
            FALLBACK_AXIS_SD
        }
    };
    if h.iter().all(|v| v.is_finite()) {
        if let Some(chol) = h.clone().cholesky() {
            let cov = chol.inverse();
            return ((0..d).map(|k| clamp(cov[(k, k)].sqrt())).collect(), false);
        }
    }
    let sd = (0..d)
        .map(|k| {
            let c = h[(k, k)];
            if c.is_finite() && c > 0.0 {
                clamp(1.0 / c.sqrt())
            } else {
                FALLBACK_AXIS_SD
            }
        })
        .collect();
    (sd, true)
}
