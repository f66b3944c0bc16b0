//! Synthetic villages drawn from the model with known ground truth.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::{Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::schema::{CovariateKind, CovariateSchema, CovariateSpec};
use crate::domain::{CovariateSet, CovariateValue, HouseRecord, HouseStatus, VillageFrame};
use crate::inference::kernel::correlation_square;
use crate::linalg::cholesky_with_jitter;
use crate::numerics::{gauss_hermite, logistic, normal_expectation};
use crate::prior::HyperParams;
use crate::rng::stream;
use crate::{Error, Result};

const LAYOUT_STREAM: u64 = 0;
const COVARIATE_STREAM: u64 = 1;
const FIELD_STREAM: u64 = 2;
const STATUS_STREAM: u64 = 3;

const CALIBRATION_STEPS: usize = 100;
const CALIBRATION_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layout {
    /// Houses uniform on a square.
    Uniform { side_m: f64 },
    /// Thomas cluster process: parents uniform on the square, houses
    /// normally scattered around a uniformly chosen parent.
    Clustered { side_m: f64, parents: usize, spread_m: f64 },
}

/// How a synthetic covariate is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariateGenerator {
    /// Level probabilities are drawn per village from a flat Dirichlet.
    Categorical { levels: Vec<String> },
    /// Poisson count clipped to `[0, max]`; the mean is drawn per village
    /// uniformly from `[mean_lo, mean_hi]`.
    Count { mean_lo: f64, mean_hi: f64, max: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDraw {
    pub name: String,
    #[serde(flatten)]
    pub generator: CovariateGenerator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub name: String,
    pub n: usize,
    pub layout: Layout,
    /// True hyperparameters; the range is in diameter-scaled units.
    pub hyper: HyperParams,
    /// Target expected infestation rate; the intercept is calibrated to it.
    pub baseline_rate: f64,
    /// True effects on standardized design columns, keyed by column name.
    pub effects: BTreeMap<String, f64>,
    pub covariates: Vec<CovariateDraw>,
    pub seed: u64,
}

fn cat(name: &str, levels: &[&str]) -> CovariateDraw {
    CovariateDraw {
        name: name.into(),
        generator: CovariateGenerator::Categorical {
            levels: levels.iter().map(|s| s.to_string()).collect(),
        },
    }
}

fn count(name: &str, mean_lo: f64, mean_hi: f64, max: u32) -> CovariateDraw {
    CovariateDraw {
        name: name.into(),
        generator: CovariateGenerator::Count { mean_lo, mean_hi, max },
    }
}

/// Household factors with the value sets of the field survey.
pub fn survey_covariates() -> Vec<CovariateDraw> {
    vec![
        cat("bed_hygiene", &["good", "poor"]),
        cat("bird_nests_inside", &["no", "yes"]),
        cat("chicken_coop", &["adjacent", "none", "outside"]),
        cat("bedroom_clutter", &["no", "yes"]),
        cat("bedroom_poorly_lit", &["no", "yes"]),
        cat("floor_material", &["dirt", "other"]),
        cat("construction_material_piles", &["adobe_clay", "none", "wood_metal"]),
        cat("firewood_location", &["directly_outside", "inside", "none", "outside"]),
        cat("grain_storage", &["no", "yes"]),
        cat("house_age", &["2_6_years", "7_plus_years", "under_1_year"]),
        cat("house_hygiene", &["good", "poor"]),
        cat("kitchen_location", &["inside", "outside", "shared_none"]),
        cat("agricultural_land", &["none", "owned", "rented"]),
        cat("rats", &["no", "yes"]),
        cat("small_animals", &["no", "yes"]),
        cat("bedroom_wall", &["deteriorated", "good"]),
        cat("house_walls", &["deteriorated", "good"]),
        cat("wall_material", &["adobe", "bajareque", "brick_other", "palopique"]),
        cat("roof_material", &["aluminum_cement", "clay_vegetal", "nylon"]),
        cat("bedroom_windows", &["no", "yes"]),
        count("residents", 3.0, 6.0, 15),
        count("chickens", 4.0, 15.0, 60),
        count("dogs", 0.5, 2.5, 12),
        count("pigs", 0.2, 1.5, 12),
    ]
}

/// Effects of a handful of household factors; every other column has none.
pub fn default_effects() -> BTreeMap<String, f64> {
    [
        ("bedroom_wall[good]", -0.8),
        ("rats[yes]", 0.7),
        ("kitchen_location[outside]", 0.6),
        ("construction_material_piles[none]", -0.5),
        ("bird_nests_inside[yes]", 0.5),
        ("chickens", 0.4),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// The five default villages: the survey's house counts, a sweep of
/// baseline rates, clustered layouts.
pub fn default_villages() -> Vec<GeneratorConfig> {
    let specs = [
        ("village_a", 172, 0.20),
        ("village_b", 147, 0.10),
        ("village_c", 251, 0.35),
        ("village_d", 108, 0.10),
        ("village_e", 207, 0.20),
    ];
    specs
        .iter()
        .enumerate()
        .map(|(k, &(name, n, rate))| GeneratorConfig {
            name: name.into(),
            n,
            layout: Layout::Clustered {
                side_m: 1200.0,
                parents: (n / 15).max(2),
                spread_m: 70.0,
            },
            hyper: HyperParams {
                rho: 0.25,
                sigma_s: 1.2,
                sigma_e: 0.4,
            },
            baseline_rate: rate,
            effects: default_effects(),
            covariates: survey_covariates(),
            seed: 1000 + k as u64,
        })
        .collect()
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::TooFewHouses(self.n));
        }
        if !(self.baseline_rate > 0.0 && self.baseline_rate < 1.0) {
            return Err(Error::invalid("baseline_rate", "must lie in (0, 1)"));
        }
        let h = &self.hyper;
        if !(h.rho > 0.0) || h.sigma_s < 0.0 || h.sigma_e < 0.0 || !(h.sigma_s + h.sigma_e > 0.0) {
            return Err(Error::invalid(
                "hyper",
                "need ρ > 0, σs ≥ 0, σe ≥ 0 and a nonzero latent variance",
            ));
        }
        match self.layout {
            Layout::Uniform { side_m } if !(side_m > 0.0) => Err(Error::invalid("layout.side_m", "must be positive")),
            Layout::Clustered {
                side_m,
                parents,
                spread_m,
            } if !(side_m > 0.0) || parents == 0 || !(spread_m > 0.0) => Err(Error::invalid(
                "layout",
                "clustered layout needs a positive side, spread and parent count",
            )),
            _ => Ok(()),
        }
    }
}

/// A generated village: houses with true statuses, the covariate schema and
/// the calibrated intercept.
#[derive(Debug, Clone)]
pub struct SyntheticVillage {
    pub name: String,
    pub houses: Vec<HouseRecord>,
    pub schema: CovariateSchema,
    pub intercept: f64,
    /// Expected infestation rate at the calibrated intercept.
    pub expected_rate: f64,
}

impl SyntheticVillage {
    pub fn frame(&self, set: CovariateSet) -> Result<VillageFrame> {
        VillageFrame::from_houses(self.houses.clone(), &self.schema, set)
    }

    pub fn realized_rate(&self) -> f64 {
        self.houses.iter().filter(|h| h.true_status == Some(true)).count() as f64 / self.houses.len() as f64
    }
}

fn layout_points(layout: &Layout, n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    match *layout {
        Layout::Uniform { side_m } => (0..n)
            .map(|_| [rng.gen::<f64>() * side_m, rng.gen::<f64>() * side_m])
            .collect(),
        Layout::Clustered {
            side_m,
            parents,
            spread_m,
        } => {
            let centers: Vec<[f64; 2]> = (0..parents)
                .map(|_| [rng.gen::<f64>() * side_m, rng.gen::<f64>() * side_m])
                .collect();
            let scatter = Normal::new(0.0, spread_m).expect("positive spread");
            (0..n)
                .map(|_| {
                    let c = centers[rng.gen_range(0..parents)];
                    [c[0] + scatter.sample(rng), c[1] + scatter.sample(rng)]
                })
                .collect()
        }
    }
}

/// Intercept whose expected village rate hits `target`, by bisection.
pub fn calibrate_intercept(offsets: &[f64], latent_sd: f64, target: f64) -> Result<(f64, f64)> {
    let (nodes, weights) = gauss_hermite(40);
    let rate = |b0: f64| {
        offsets
            .iter()
            .map(|o| normal_expectation(b0 + o, latent_sd, &nodes, &weights, logistic))
            .sum::<f64>()
            / offsets.len() as f64
    };
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..CALIBRATION_STEPS {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b0 = 0.5 * (lo + hi);
    let r = rate(b0);
    if (r - target).abs() <= CALIBRATION_TOLERANCE * target {
        Ok((b0, r))
    } else {
        Err(Error::Calibration(format!(
            "expected rate {r:.4} after bisection, target {target}"
        )))
    }
}

/// Draws a village from the model.
pub fn generate_village(cfg: &GeneratorConfig) -> Result<SyntheticVillage> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = stream(cfg.seed, &[LAYOUT_STREAM]);
    let points = layout_points(&cfg.layout, n, &mut rng);

    let mut rng = stream(cfg.seed, &[COVARIATE_STREAM]);
    let mut schema = CovariateSchema::default();
    let mut columns: Vec<(String, Vec<CovariateValue>)> = Vec::new();
    for draw in &cfg.covariates {
        match &draw.generator {
            CovariateGenerator::Categorical { levels } => {
                let probs: Vec<f64> = levels.iter().map(|_| -rng.gen::<f64>().ln()).collect();
                let pick = WeightedIndex::new(&probs).map_err(|e| Error::invalid(draw.name.clone(), e.to_string()))?;
                let vals = (0..n)
                    .map(|_| CovariateValue::Categorical(levels[pick.sample(&mut rng)].clone()))
                    .collect();
                schema.covariates.push(CovariateSpec {
                    name: draw.name.clone(),
                    kind: CovariateKind::Categorical { levels: levels.clone() },
                });
                columns.push((draw.name.clone(), vals));
            }
            CovariateGenerator::Count { mean_lo, mean_hi, max } => {
                let mean = mean_lo + (mean_hi - mean_lo) * rng.gen::<f64>();
                let poisson =
                    Poisson::new(mean.max(1e-6)).map_err(|e| Error::invalid(draw.name.clone(), e.to_string()))?;
                let vals = (0..n)
                    .map(|_| {
                        let c: f64 = poisson.sample(&mut rng);
                        CovariateValue::Continuous(c.min(*max as f64))
                    })
                    .collect();
                schema.covariates.push(CovariateSpec {
                    name: draw.name.clone(),
                    kind: CovariateKind::Continuous,
                });
                columns.push((draw.name.clone(), vals));
            }
        }
    }
    schema.validate()?;

    let width = n.to_string().len().max(3);
    let mut houses: Vec<HouseRecord> = (0..n)
        .map(|i| HouseRecord {
            id: format!("h{:0width$}", i + 1),
            x_m: (points[i][0] * 100.0).round() / 100.0,
            y_m: (points[i][1] * 100.0).round() / 100.0,
            covariates: columns
                .iter()
                .map(|(name, vals)| (name.clone(), vals[i].clone()))
                .collect(),
            status: HouseStatus::Unknown,
            true_status: None,
        })
        .collect();

    // effects act on the full design; the intercept is calibrated on top
    let frame = VillageFrame::from_houses(houses.clone(), &schema, CovariateSet::All)?;
    let mut beta = DVector::zeros(frame.n_columns());
    for (name, &value) in &cfg.effects {
        let k = frame
            .columns()
            .iter()
            .position(|c| &c.name == name)
            .ok_or_else(|| Error::invalid("effects", format!("no design column named {name:?}")))?;
        beta[k] = value;
    }
    let offsets: Vec<f64> = (frame.design() * &beta).iter().copied().collect();

    let h = cfg.hyper;
    let latent_sd = (h.sigma_s * h.sigma_s + h.sigma_e * h.sigma_e).sqrt();
    let (intercept, expected_rate) = calibrate_intercept(&offsets, latent_sd, cfg.baseline_rate)?;

    let mut rng = stream(cfg.seed, &[FIELD_STREAM]);
    let z: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    let e: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    let mut v = e * h.sigma_e;
    if h.sigma_s > 0.0 {
        let all: Vec<usize> = (0..n).collect();
        let corr = correlation_square(&frame, &all, h.rho);
        let l = cholesky_with_jitter(&corr, "generator correlation")?.chol.l();
        v += (l * z) * h.sigma_s;
    }

    let mut rng = stream(cfg.seed, &[STATUS_STREAM]);
    for (i, house) in houses.iter_mut().enumerate() {
        let r = logistic(intercept + offsets[i] + v[i]);
        house.true_status = Some(rng.gen::<f64>() < r);
    }
    Ok(SyntheticVillage {
        name: cfg.name.clone(),
        houses,
        schema,
        intercept,
        expected_rate,
    })
}
