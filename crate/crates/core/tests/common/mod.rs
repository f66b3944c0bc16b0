#![allow(dead_code)]

use geosample_core::design::initial_design;
use geosample_core::domain::{CovariateSet, VillageFrame};
use geosample_core::inference::{HyperMode, ModelSettings, Observed};
use geosample_core::prior::HyperParams;
use geosample_core::sim::{generate_village, GeneratorConfig, Layout, SyntheticVillage};

/// Small uniform village without household covariates.
pub fn small_village(n: usize, seed: u64) -> SyntheticVillage {
    generate_village(&GeneratorConfig {
        name: format!("small_{seed}"),
        n,
        layout: Layout::Uniform { side_m: 300.0 },
        hyper: HyperParams::new(0.3, 1.0, 0.3).unwrap(),
        baseline_rate: 0.3,
        effects: Default::default(),
        covariates: vec![],
        seed,
    })
    .unwrap()
}

pub fn global_frame(n: usize, seed: u64) -> VillageFrame {
    small_village(n, seed).frame(CovariateSet::Global).unwrap()
}

/// Truth-labelled observations at `m` uniformly chosen sites.
pub fn observe(frame: &VillageFrame, m: usize, seed: u64) -> Observed {
    let sites = initial_design(frame.len(), m, seed);
    Observed::new(
        frame.len(),
        sites.into_iter().map(|s| (s, frame.house(s).true_status.unwrap())),
    )
    .unwrap()
}

pub fn fixed_model(h: HyperParams) -> ModelSettings {
    let mut m = ModelSettings::default();
    m.engine.hyper = HyperMode::Fixed(h);
    m
}

pub fn observe_all(frame: &VillageFrame) -> Observed {
    Observed::new(
        frame.len(),
        (0..frame.len()).map(|s| (s, frame.house(s).true_status.unwrap())),
    )
    .unwrap()
}
