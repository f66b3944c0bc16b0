//! Campaign registry with one writer per campaign.
//!
//! Mutations take the campaign's writer lock, work on a copy, commit it to
//! the store and only then publish it. Readers see the last published view
//! and never wait for a refit.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use geosample_core::design::Recommendation;
use tokio::sync::Mutex;

use crate::campaign::{AuditEntry, Campaign, CampaignReport, CampaignSpec, CampaignView, Observation};
use crate::error::{ServiceError, ServiceResult};
use crate::store::Store;

struct Handle {
    writer: Mutex<Campaign>,
    committed: RwLock<Arc<CampaignView>>,
    audit: RwLock<Vec<AuditEntry>>,
    refitting: AtomicBool,
}

impl Handle {
    fn new(campaign: Campaign, audit: Vec<AuditEntry>) -> Self {
        let view = Arc::new(campaign.view(false));
        Handle {
            writer: Mutex::new(campaign),
            committed: RwLock::new(view),
            audit: RwLock::new(audit),
            refitting: AtomicBool::new(false),
        }
    }

    fn publish(&self, campaign: &Campaign, entry: Option<AuditEntry>) {
        *self.committed.write().expect("view lock") = Arc::new(campaign.view(false));
        if let Some(e) = entry {
            self.audit.write().expect("audit lock").push(e);
        }
    }
}

/// Clears the refitting flag however the mutation ends.
struct RefitFlag<'a>(&'a AtomicBool);

impl Drop for RefitFlag<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

pub struct Service {
    store: Store,
    campaigns: RwLock<HashMap<String, Arc<Handle>>>,
    create_lock: Mutex<()>,
    /// Seed used when a creation request does not set one.
    default_seed: Option<u64>,
}

fn join_error(e: tokio::task::JoinError) -> ServiceError {
    ServiceError::internal("worker", e.to_string())
}

impl Service {
    /// Opens the store and loads every campaign in it.
    pub fn open(store: Store, default_seed: Option<u64>) -> ServiceResult<Service> {
        let mut campaigns = HashMap::new();
        for id in store.list()? {
            let (campaign, audit) = store.load(&id)?;
            campaigns.insert(id, Arc::new(Handle::new(campaign, audit)));
        }
        Ok(Service {
            store,
            campaigns: RwLock::new(campaigns),
            create_lock: Mutex::new(()),
            default_seed,
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn handle(&self, id: &str) -> ServiceResult<Arc<Handle>> {
        self.campaigns
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::not_found(id))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.campaigns.read().expect("registry lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// `seed_given` tells whether the request set the design seed itself.
    pub async fn create(&self, mut spec: CampaignSpec, seed_given: bool, actor: &str) -> ServiceResult<CampaignView> {
        if let (false, Some(seed)) = (seed_given, self.default_seed) {
            spec.design.seed = seed;
        }
        let _guard = self.create_lock.lock().await;
        // validate before reserving an id so rejected requests leave no trace
        let (mut campaign, event) = tokio::task::spawn_blocking(move || Campaign::create("pending", spec))
            .await
            .map_err(join_error)??;
        let id = self.store.allocate_id()?;
        campaign.assign_id(&id);
        let store = self.store.clone();
        let actor = actor.to_string();
        let (campaign, entry) = tokio::task::spawn_blocking(move || -> ServiceResult<_> {
            let entry = store.commit(&campaign, &actor, event)?;
            Ok((campaign, entry))
        })
        .await
        .map_err(join_error)??;
        let view = campaign.view(false);
        let handle = Arc::new(Handle::new(campaign, vec![entry]));
        self.campaigns
            .write()
            .expect("registry lock")
            .insert(view.id.clone(), handle);
        Ok(view)
    }

    pub fn snapshot(&self, id: &str) -> ServiceResult<CampaignView> {
        let h = self.handle(id)?;
        let mut view = (**h.committed.read().expect("view lock")).clone();
        view.refitting = h.refitting.load(Ordering::SeqCst);
        Ok(view)
    }

    pub async fn report(&self, id: &str) -> ServiceResult<CampaignReport> {
        let h = self.handle(id)?;
        let campaign = h.writer.lock().await;
        let audit = h.audit.read().expect("audit lock").clone();
        Ok(campaign.report(audit))
    }

    pub async fn observe(&self, id: &str, observations: Vec<Observation>, actor: &str) -> ServiceResult<CampaignView> {
        let h = self.handle(id)?;
        let mut guard = h.writer.lock().await;
        let _flag = guard.completes_outstanding(&observations).then(|| {
            h.refitting.store(true, Ordering::SeqCst);
            RefitFlag(&h.refitting)
        });
        let mut next = guard.clone();
        let store = self.store.clone();
        let actor = actor.to_string();
        let (next, entry) = tokio::task::spawn_blocking(move || -> ServiceResult<_> {
            let event = next.observe(&observations)?;
            let entry = store.commit(&next, &actor, event)?;
            Ok((next, entry))
        })
        .await
        .map_err(join_error)??;
        *guard = next;
        h.publish(&guard, Some(entry));
        Ok(guard.view(false))
    }

    pub async fn next_batch(&self, id: &str, actor: &str) -> ServiceResult<Vec<Recommendation>> {
        let h = self.handle(id)?;
        let mut guard = h.writer.lock().await;
        let mut next = guard.clone();
        let (batch, event) = next.next_batch()?;
        if let Some(event) = event {
            let store = self.store.clone();
            let actor = actor.to_string();
            let (committed, entry) = tokio::task::spawn_blocking(move || -> ServiceResult<_> {
                let entry = store.commit(&next, &actor, event)?;
                Ok((next, entry))
            })
            .await
            .map_err(join_error)??;
            *guard = committed;
            h.publish(&guard, Some(entry));
        }
        Ok(batch)
    }
}
