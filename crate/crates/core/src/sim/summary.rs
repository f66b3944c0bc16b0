//! Report tables: per-group means and intervals, accuracy at the control
//! targets and paired savings against random sampling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentResult, RunResult};
use crate::domain::CovariateSet;
use crate::numerics::quantile;
use crate::{Error, Result};

pub const PRIMARY_TARGET: f64 = 0.05;
pub const SECONDARY_TARGET: f64 = 0.08;
pub const RANDOM_LABEL: &str = "random";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub p05: f64,
    pub p95: f64,
}

impl Interval {
    fn of(xs: &[f64]) -> Self {
        Interval {
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
            p05: quantile(xs, 0.05),
            p95: quantile(xs, 0.95),
        }
    }
}

/// Savings against random in percentage points of the village:
/// `100·(random fraction − strategy fraction)`, paired by replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
    pub pairs: usize,
}

impl PairedDifference {
    fn of(xs: &[f64]) -> Option<Self> {
        (!xs.is_empty()).then(|| PairedDifference {
            median: quantile(xs, 0.5),
            lo: quantile(xs, 0.025),
            hi: quantile(xs, 0.975),
            pairs: xs.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    /// Village name, or `"pooled"` for the all-village rows.
    pub village: String,
    pub strategy: String,
    pub covset: CovariateSet,
    pub runs: usize,
    pub design_frac: Interval,
    pub remaining_rate: Interval,
    /// Percentage of runs whose remaining rate is below 5%.
    pub accuracy_5: f64,
    /// Percentage of runs whose remaining rate is below 8%.
    pub accuracy_8: f64,
    pub savings_vs_random: Option<PairedDifference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub groups: Vec<GroupSummary>,
    pub pooled: Vec<GroupSummary>,
    pub failures: usize,
}

type Key = (String, String, CovariateSet);

fn summarize_group(
    village: &str,
    strategy: &str,
    covset: CovariateSet,
    runs: &[&RunResult],
    random: Option<&BTreeMap<(String, CovariateSet, usize), f64>>,
) -> GroupSummary {
    let frac: Vec<f64> = runs.iter().map(|r| r.design_frac).collect();
    let rem: Vec<f64> = runs.iter().map(|r| r.remaining_rate).collect();
    let pct = |target: f64| 100.0 * rem.iter().filter(|&&x| x < target).count() as f64 / rem.len() as f64;
    let savings = random.and_then(|rnd| {
        let diffs: Vec<f64> = runs
            .iter()
            .filter_map(|r| {
                rnd.get(&(r.village.clone(), r.covset, r.rep))
                    .map(|base| 100.0 * (base - r.design_frac))
            })
            .collect();
        PairedDifference::of(&diffs)
    });
    GroupSummary {
        village: village.to_string(),
        strategy: strategy.to_string(),
        covset,
        runs: runs.len(),
        design_frac: Interval::of(&frac),
        remaining_rate: Interval::of(&rem),
        accuracy_5: pct(PRIMARY_TARGET),
        accuracy_8: pct(SECONDARY_TARGET),
        savings_vs_random: savings,
    }
}

/// Per-(village, strategy, covariate set) and pooled summaries. Groups keep
/// the order in which they first appear in the results.
pub fn summarize(results: &ExperimentResult) -> Result<ExperimentSummary> {
    if results.runs.is_empty() {
        return Err(Error::invalid("results", "nothing to summarize"));
    }
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, Vec<&RunResult>> = BTreeMap::new();
    let mut random: BTreeMap<(String, CovariateSet, usize), f64> = BTreeMap::new();
    for r in &results.runs {
        let key = (r.village.clone(), r.strategy.clone(), r.covset);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
        if r.strategy == RANDOM_LABEL {
            random.insert((r.village.clone(), r.covset, r.rep), r.design_frac);
        }
    }
    let random_ref = (!random.is_empty()).then_some(&random);

    let per_group = order
        .iter()
        .map(|k| summarize_group(&k.0, &k.1, k.2, &groups[k], random_ref))
        .collect();

    let mut pooled_order: Vec<(String, CovariateSet)> = Vec::new();
    let mut pooled: BTreeMap<(String, CovariateSet), Vec<&RunResult>> = BTreeMap::new();
    for r in &results.runs {
        let key = (r.strategy.clone(), r.covset);
        if !pooled.contains_key(&key) {
            pooled_order.push(key.clone());
        }
        pooled.entry(key).or_default().push(r);
    }
    let pooled_groups = pooled_order
        .iter()
        .map(|k| summarize_group("pooled", &k.0, k.1, &pooled[k], random_ref))
        .collect();

    Ok(ExperimentSummary {
        groups: per_group,
        pooled: pooled_groups,
        failures: results.failures.len(),
    })
}

impl ExperimentSummary {
    pub fn group(&self, village: &str, strategy: &str, covset: CovariateSet) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.village == village && g.strategy == strategy && g.covset == covset)
    }

    pub fn pooled_group(&self, strategy: &str, covset: CovariateSet) -> Option<&GroupSummary> {
        self.pooled
            .iter()
            .find(|g| g.strategy == strategy && g.covset == covset)
    }

    /// Cross-hair data for a design-size versus remaining-rate chart.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from(
            "village,strategy,covset,design_pct_mean,design_pct_p05,design_pct_p95,remaining_pct_mean,remaining_pct_p05,remaining_pct_p95\n",
        );
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                g.village,
                g.strategy,
                g.covset.as_str(),
                100.0 * g.design_frac.mean,
                100.0 * g.design_frac.p05,
                100.0 * g.design_frac.p95,
                100.0 * g.remaining_rate.mean,
                100.0 * g.remaining_rate.p05,
                100.0 * g.remaining_rate.p95,
            ));
        }
        out
    }
}
