#![allow(dead_code)]

pub mod state_machine;

use geosample_campaign::{Campaign, CampaignSpec, Observation, ObservedStatus};
use geosample_core::design::DesignConfig;
use geosample_core::domain::schema::write_village_csv;
use geosample_core::inference::{EngineConfig, HyperMode, ModelSettings};
use geosample_core::prior::HyperParams;
use geosample_core::sim::{generate_village, GeneratorConfig, Layout, SyntheticVillage};

pub fn village(n: usize, rate: f64, seed: u64) -> SyntheticVillage {
    generate_village(&GeneratorConfig {
        name: format!("v{seed}"),
        n,
        layout: Layout::Clustered {
            side_m: 500.0,
            parents: 3,
            spread_m: 60.0,
        },
        hyper: HyperParams::new(0.25, 1.2, 0.4).unwrap(),
        baseline_rate: rate,
        effects: Default::default(),
        covariates: vec![],
        seed,
    })
    .unwrap()
}

pub fn csv(v: &SyntheticVillage) -> String {
    write_village_csv(&v.houses, &v.schema).unwrap()
}

/// A single hyperparameter node keeps refits cheap.
pub fn fixed_model() -> ModelSettings {
    ModelSettings {
        engine: EngineConfig {
            hyper: HyperMode::Fixed(HyperParams::new(0.25, 1.0, 0.4).unwrap()),
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn spec(v: &SyntheticVillage, design: DesignConfig, model: ModelSettings) -> CampaignSpec {
    CampaignSpec {
        village_csv: csv(v),
        schema: Some(v.schema.clone()),
        covariate_set: geosample_core::domain::CovariateSet::Global,
        design,
        model,
    }
}

pub fn quick_design(seed: u64) -> DesignConfig {
    DesignConfig {
        initial_size: 4,
        batch_size: 3,
        mc_draws: 300,
        seed,
        ..Default::default()
    }
}

/// Observations of the given houses read from the ground truth.
pub fn truthful(v: &SyntheticVillage, ids: &[String]) -> Vec<Observation> {
    ids.iter()
        .map(|id| {
            let h = v.houses.iter().find(|h| &h.id == id).unwrap();
            Observation {
                house_id: id.clone(),
                status: if h.true_status == Some(true) {
                    ObservedStatus::Infested
                } else {
                    ObservedStatus::Clear
                },
            }
        })
        .collect()
}

/// Drives a campaign to termination with truthful observations.
pub fn run_to_end(c: &mut Campaign, v: &SyntheticVillage) {
    use geosample_campaign::CampaignStatus::*;
    loop {
        match c.status() {
            AwaitingObservations => {
                let obs = truthful(v, c.outstanding());
                c.observe(&obs).unwrap();
            }
            ReadyForBatch => {
                c.next_batch().unwrap();
            }
            Terminated => break,
        }
    }
}
