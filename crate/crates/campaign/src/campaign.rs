//! A live campaign: the sampling loop with a person in the field as the
//! status oracle.
//!
//! State changes happen only through [`Event`]s, so replaying the event log
//! of a campaign rebuilds it exactly.

use std::collections::HashSet;

use geosample_core::design::{
    assess, initial_design, recommend, schedule_t, DesignConfig, DesignState, IterationRecord, Recommendation,
    Strategy, TerminationReport, Visit,
};
use geosample_core::domain::schema::{parse_village_csv, CovariateSchema};
use geosample_core::domain::{CovariateSet, CovariateValue, HouseStatus, VillageFrame};
use geosample_core::inference::ModelSettings;
use geosample_core::prior::HyperParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{ServiceError, ServiceResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    AwaitingObservations,
    ReadyForBatch,
    Terminated,
}

fn global() -> CovariateSet {
    CovariateSet::Global
}

/// Everything needed to recreate a campaign from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    /// Village CSV text; status and ground-truth columns are ignored.
    pub village_csv: String,
    #[serde(default)]
    pub schema: Option<CovariateSchema>,
    #[serde(default = "global")]
    pub covariate_set: CovariateSet,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub model: ModelSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservedStatus {
    Infested,
    Clear,
}

impl ObservedStatus {
    pub fn infested(self) -> bool {
        self == ObservedStatus::Infested
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub house_id: String,
    pub status: ObservedStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        spec: Box<CampaignSpec>,
        initial: Vec<String>,
    },
    Observed {
        observations: Vec<Observation>,
    },
    BatchIssued {
        houses: Vec<String>,
    },
}

/// One line of the append-only audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    /// Position in the log, from 0.
    pub seq: u64,
    pub at_ms: u64,
    pub actor: String,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseRisk {
    pub id: String,
    pub risk_mean: f64,
    pub risk_var: f64,
}

/// What the campaign keeps from its latest posterior fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iteration: usize,
    pub m_i: usize,
    pub termination: TerminationReport,
    pub hyper_map: HyperParams,
    pub log_marginal_likelihood: f64,
    /// Predictive risk of every unvisited house.
    pub risk: Vec<HouseRisk>,
}

/// Serializable campaign state; the village frame is rebuilt from the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSnapshot {
    pub id: String,
    pub spec: CampaignSpec,
    pub design: DesignState,
    pub status: CampaignStatus,
    pub outstanding: Vec<String>,
    /// Batch most recently handed out, while none of it has been observed.
    pub issued: Option<Vec<Recommendation>>,
    /// Batch computed by the latest fit and not yet handed out.
    pub proposal: Option<Vec<Recommendation>>,
    pub fit: Option<FitSummary>,
    pub warm_start: Option<Vec<f64>>,
    /// Number of events applied.
    pub events: u64,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    frame: VillageFrame,
    snap: CampaignSnapshot,
}

/// Per-house part of the read model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseView {
    pub id: String,
    /// Diameter-scaled coordinates.
    pub x: f64,
    pub y: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub visited: bool,
    pub status: HouseStatus,
    pub risk_mean: Option<f64>,
    pub risk_var: Option<f64>,
    pub outstanding: bool,
    pub in_batch: bool,
    pub covariates: BTreeMap<String, CovariateValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfigView {
    pub covariate_set: CovariateSet,
    pub design: DesignConfig,
    pub model: ModelSettings,
}

/// Read model served to the field UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignView {
    pub id: String,
    pub status: CampaignStatus,
    /// True while a refit triggered by the last observation is running.
    pub refitting: bool,
    pub n: usize,
    pub visited: usize,
    pub iteration: usize,
    pub config: CampaignConfigView,
    pub houses: Vec<HouseView>,
    pub outstanding: Vec<String>,
    pub p_below: Vec<f64>,
    pub t: Vec<Option<f64>>,
    pub termination: Option<TerminationReport>,
    pub batch: Option<Vec<Recommendation>>,
    pub events: u64,
}

/// Full history for the report endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub id: String,
    pub status: CampaignStatus,
    pub config: CampaignConfigView,
    pub visits: Vec<Visit>,
    pub history: Vec<IterationRecord>,
    pub fit: Option<FitSummary>,
    pub audit: Vec<AuditEntry>,
}

fn build_frame(spec: &CampaignSpec) -> ServiceResult<VillageFrame> {
    let (mut houses, schema) = parse_village_csv(&spec.village_csv, spec.schema.as_ref())
        .map_err(|e| ServiceError::from(e).with_field("village_csv"))?;
    // the operator is the only source of statuses
    for h in &mut houses {
        h.status = HouseStatus::Unknown;
        h.true_status = None;
    }
    Ok(VillageFrame::from_houses(houses, &schema, spec.covariate_set)?)
}

impl Campaign {
    /// Validates the spec and draws the initial design.
    pub fn create(id: &str, spec: CampaignSpec) -> ServiceResult<(Campaign, Event)> {
        let frame = build_frame(&spec)?;
        spec.design.validate(frame.len()).map_err(|e| prefixed(e, "design"))?;
        spec.model.validate().map_err(|e| prefixed(e, "model"))?;
        let sites = initial_design(frame.len(), spec.design.initial_size, spec.design.seed);
        let initial: Vec<String> = sites.iter().map(|&s| frame.house(s).id.clone()).collect();
        let event = Event::Created {
            spec: Box::new(spec.clone()),
            initial: initial.clone(),
        };
        let campaign = Campaign {
            snap: CampaignSnapshot {
                id: id.to_string(),
                design: DesignState {
                    strategy: Strategy::Adaptive,
                    config: spec.design,
                    n: frame.len(),
                    visited: Vec::new(),
                    iteration: 0,
                    history: Vec::new(),
                    terminated: false,
                },
                spec,
                status: CampaignStatus::AwaitingObservations,
                outstanding: initial,
                issued: None,
                proposal: None,
                fit: None,
                warm_start: None,
                events: 1,
            },
            frame,
        };
        Ok((campaign, event))
    }

    pub fn from_snapshot(snap: CampaignSnapshot) -> ServiceResult<Campaign> {
        let frame = build_frame(&snap.spec)?;
        Ok(Campaign { frame, snap })
    }

    /// Rebuilds a campaign from its full event log.
    pub fn replay(id: &str, events: &[Event]) -> ServiceResult<Campaign> {
        let (first, rest) = events
            .split_first()
            .ok_or_else(|| ServiceError::internal("replay", "empty event log"))?;
        let Event::Created { spec, initial } = first else {
            return Err(ServiceError::internal(
                "replay",
                "log does not start with a creation event",
            ));
        };
        let (mut campaign, _) = Campaign::create(id, (**spec).clone())?;
        if &campaign.snap.outstanding != initial {
            return Err(ServiceError::internal("replay", "initial design differs from the log"));
        }
        for e in rest {
            campaign.apply(e)?;
        }
        Ok(campaign)
    }

    /// Re-applies a logged event, checking that it reproduces the logged outcome.
    pub fn apply(&mut self, event: &Event) -> ServiceResult<()> {
        match event {
            Event::Created { .. } => Err(ServiceError::internal(
                "replay",
                "creation event in the middle of a log",
            )),
            Event::Observed { observations } => self.observe(observations).map(|_| ()),
            Event::BatchIssued { houses } => {
                let (batch, fresh) = self.next_batch()?;
                let ids: Vec<&String> = batch.iter().map(|r| &r.id).collect();
                if fresh.is_none() || ids != houses.iter().collect::<Vec<_>>() {
                    return Err(ServiceError::internal("replay", "issued batch differs from the log"));
                }
                Ok(())
            }
        }
    }

    pub(crate) fn assign_id(&mut self, id: &str) {
        self.snap.id = id.to_string();
    }

    pub fn id(&self) -> &str {
        &self.snap.id
    }

    pub fn status(&self) -> CampaignStatus {
        self.snap.status
    }

    pub fn frame(&self) -> &VillageFrame {
        &self.frame
    }

    pub fn snapshot(&self) -> &CampaignSnapshot {
        &self.snap
    }

    pub fn design(&self) -> &DesignState {
        &self.snap.design
    }

    pub fn outstanding(&self) -> &[String] {
        &self.snap.outstanding
    }

    /// Whether submitting `observations` would complete the outstanding set.
    pub fn completes_outstanding(&self, observations: &[Observation]) -> bool {
        let submitted: HashSet<&str> = observations.iter().map(|o| o.house_id.as_str()).collect();
        !self.snap.outstanding.is_empty() && self.snap.outstanding.iter().all(|id| submitted.contains(id.as_str()))
    }

    fn validate_observations(&self, observations: &[Observation]) -> ServiceResult<()> {
        if self.snap.status == CampaignStatus::Terminated {
            return Err(ServiceError::conflict("terminated", "the campaign has terminated"));
        }
        if observations.is_empty() {
            return Err(ServiceError::invalid("empty", "no observations submitted").with_field("observations"));
        }
        let visited: HashSet<&str> = self.snap.design.visited.iter().map(|v| v.id.as_str()).collect();
        let outstanding: HashSet<&str> = self.snap.outstanding.iter().map(String::as_str).collect();
        let mut seen = HashSet::new();
        for (k, o) in observations.iter().enumerate() {
            let field = format!("observations[{k}].house_id");
            if self.frame.index_of(&o.house_id).is_none() {
                return Err(ServiceError::invalid(
                    "unknown_house",
                    format!("no house {:?} in the village", o.house_id),
                )
                .with_field(field));
            }
            if !seen.insert(o.house_id.as_str()) {
                return Err(ServiceError::invalid(
                    "duplicate_house",
                    format!("house {:?} submitted twice", o.house_id),
                )
                .with_field(field));
            }
            if visited.contains(o.house_id.as_str()) {
                return Err(ServiceError::conflict(
                    "already_observed",
                    format!("house {:?} was already observed", o.house_id),
                )
                .with_field(field));
            }
            if !outstanding.contains(o.house_id.as_str()) {
                return Err(ServiceError::conflict(
                    "not_outstanding",
                    format!("house {:?} is not in the current batch", o.house_id),
                )
                .with_field(field));
            }
        }
        Ok(())
    }

    /// Records observations all or nothing. When the outstanding set
    /// empties the posterior is refitted before returning. On error the
    /// campaign is unchanged.
    pub fn observe(&mut self, observations: &[Observation]) -> ServiceResult<Event> {
        self.validate_observations(observations)?;
        let mut next = self.clone();
        let batch = next.snap.design.iteration;
        for o in observations {
            let site = next.frame.index_of(&o.house_id).expect("validated");
            next.snap.design.visited.push(Visit {
                id: o.house_id.clone(),
                site,
                batch,
                infested: o.status.infested(),
            });
        }
        let done: HashSet<&str> = observations.iter().map(|o| o.house_id.as_str()).collect();
        next.snap.outstanding.retain(|id| !done.contains(id.as_str()));
        next.snap.issued = None;
        if next.snap.outstanding.is_empty() {
            next.refit()?;
        }
        next.snap.events += 1;
        *self = next;
        Ok(Event::Observed {
            observations: observations.to_vec(),
        })
    }

    fn refit(&mut self) -> ServiceResult<()> {
        let snap = &mut self.snap;
        let n = self.frame.len();
        let cfg = snap.spec.design;
        snap.design.iteration += 1;
        let i = snap.design.iteration;
        let observed = snap.design.observed(n)?;
        let a = assess(
            &self.frame,
            &observed,
            &cfg,
            &snap.spec.model,
            i,
            snap.warm_start.as_deref(),
        )?;
        snap.warm_start = Some(a.fit.map_free().to_vec());
        let m_i = snap.design.m_i();
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
        let stop = a.termination.decision || a.prediction.n0() == 0;
        if stop {
            snap.status = CampaignStatus::Terminated;
            snap.design.terminated = true;
            snap.proposal = None;
        } else {
            let t = schedule_t(m_i, cfg.initial_size, n, cfg.alpha)?;
            record.t = Some(t);
            record.batch = recommend(&self.frame, &a.prediction, t, cfg.batch_size);
            snap.proposal = Some(record.batch.clone());
            snap.status = CampaignStatus::ReadyForBatch;
        }
        snap.design.history.push(record);
        snap.fit = Some(FitSummary {
            iteration: i,
            m_i,
            termination: a.termination,
            hyper_map: a.fit.variant().hyper(a.fit.map_free()),
            log_marginal_likelihood: a.fit.log_ml(),
            risk: a
                .prediction
                .sites
                .iter()
                .enumerate()
                .map(|(k, &s)| HouseRisk {
                    id: self.frame.house(s).id.clone(),
                    risk_mean: a.prediction.risk_mean[k],
                    risk_var: a.prediction.risk_var[k],
                })
                .collect(),
        });
        Ok(())
    }

    /// Hands out the proposed batch. Repeating the call before any of the
    /// batch is observed returns the same houses; the second element is the
    /// event to log, absent for such repeats.
    pub fn next_batch(&mut self) -> ServiceResult<(Vec<Recommendation>, Option<Event>)> {
        match self.snap.status {
            CampaignStatus::Terminated => Err(ServiceError::conflict("terminated", "the campaign has terminated")),
            CampaignStatus::AwaitingObservations => match &self.snap.issued {
                Some(batch) => Ok((batch.clone(), None)),
                None => Err(ServiceError::conflict(
                    "awaiting_observations",
                    format!(
                        "{} outstanding houses must be observed first",
                        self.snap.outstanding.len()
                    ),
                )),
            },
            CampaignStatus::ReadyForBatch => {
                let batch = self
                    .snap
                    .proposal
                    .take()
                    .ok_or_else(|| ServiceError::internal("state", "ready for a batch without a proposal"))?;
                let ids: Vec<String> = batch.iter().map(|r| r.id.clone()).collect();
                if let Some(last) = self.snap.design.history.last_mut() {
                    last.added = ids.clone();
                }
                self.snap.outstanding = ids.clone();
                self.snap.issued = Some(batch.clone());
                self.snap.status = CampaignStatus::AwaitingObservations;
                self.snap.events += 1;
                Ok((batch, Some(Event::BatchIssued { houses: ids })))
            }
        }
    }

    fn config_view(&self) -> CampaignConfigView {
        CampaignConfigView {
            covariate_set: self.snap.spec.covariate_set,
            design: self.snap.spec.design,
            model: self.snap.spec.model,
        }
    }

    pub fn view(&self, refitting: bool) -> CampaignView {
        let snap = &self.snap;
        let visits: BTreeMap<&str, bool> = snap
            .design
            .visited
            .iter()
            .map(|v| (v.id.as_str(), v.infested))
            .collect();
        let outstanding: HashSet<&str> = snap.outstanding.iter().map(String::as_str).collect();
        let batch: HashSet<&str> = snap.issued.iter().flatten().map(|r| r.id.as_str()).collect();
        let risk: BTreeMap<&str, &HouseRisk> = snap
            .fit
            .iter()
            .flat_map(|f| f.risk.iter())
            .filter(|r| !visits.contains_key(r.id.as_str()))
            .map(|r| (r.id.as_str(), r))
            .collect();
        let houses = (0..self.frame.len())
            .map(|i| {
                let h = self.frame.house(i);
                let id = h.id.as_str();
                let r = risk.get(id);
                HouseView {
                    id: h.id.clone(),
                    x: self.frame.scaled_coords()[i][0],
                    y: self.frame.scaled_coords()[i][1],
                    x_m: h.x_m,
                    y_m: h.y_m,
                    visited: visits.contains_key(id),
                    status: visits
                        .get(id)
                        .map_or(HouseStatus::Unknown, |&b| HouseStatus::from_infested(b)),
                    risk_mean: r.map(|r| r.risk_mean),
                    risk_var: r.map(|r| r.risk_var),
                    outstanding: outstanding.contains(id),
                    in_batch: batch.contains(id),
                    covariates: h.covariates.clone(),
                }
            })
            .collect();
        CampaignView {
            id: snap.id.clone(),
            status: snap.status,
            refitting,
            n: self.frame.len(),
            visited: snap.design.m_i(),
            iteration: snap.design.iteration,
            config: self.config_view(),
            houses,
            outstanding: snap.outstanding.clone(),
            p_below: snap.design.history.iter().map(|r| r.p_below).collect(),
            t: snap.design.history.iter().map(|r| r.t).collect(),
            termination: snap.fit.as_ref().map(|f| f.termination.clone()),
            batch: snap.issued.clone(),
            events: snap.events,
        }
    }

    pub fn report(&self, audit: Vec<AuditEntry>) -> CampaignReport {
        CampaignReport {
            id: self.snap.id.clone(),
            status: self.snap.status,
            config: self.config_view(),
            visits: self.snap.design.visited.clone(),
            history: self.snap.design.history.clone(),
            fit: self.snap.fit.clone(),
            audit,
        }
    }
}

fn prefixed(e: geosample_core::Error, section: &str) -> ServiceError {
    let mut err = ServiceError::from(e);
    err.field = Some(match err.field.take() {
        Some(f) => format!("{section}.{f}"),
        None => section.to_string(),
    });
    err
}
