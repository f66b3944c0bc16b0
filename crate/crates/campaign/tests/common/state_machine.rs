//! Randomized API-call sequences against a seeded campaign, with restarts,
//! torn writes and lagging snapshots mixed in.

use std::collections::{HashMap, HashSet};
use std::fs;

use super::{fixed_model, quick_design, spec, village};
use geosample_campaign::campaign::Event;
use geosample_campaign::{
    Campaign, CampaignStatus, CampaignView, ErrorKind, Observation, ObservedStatus, Service, Store,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const STEPS: usize = 30;

/// What the test expects, tracked independently of the service.
#[derive(Default)]
struct Model {
    visited: HashMap<String, bool>,
    outstanding: Vec<String>,
    issued: Vec<HashSet<String>>,
    /// Batch that a repeated next-batch call must return.
    repeatable: Option<Vec<String>>,
    refits: usize,
}

fn json(view: &CampaignView) -> String {
    serde_json::to_string(view).unwrap()
}

fn check(view: &CampaignView, model: &Model) {
    assert_eq!(view.visited, model.visited.len());
    let visited: Vec<&str> = view
        .houses
        .iter()
        .filter(|h| h.visited)
        .map(|h| h.id.as_str())
        .collect();
    assert_eq!(visited.len(), model.visited.len());
    for h in &view.houses {
        if let Some(&infested) = model.visited.get(&h.id) {
            assert_eq!(h.status.observed(), Some(infested));
        }
        assert_eq!(h.outstanding, model.outstanding.contains(&h.id));
    }
    let mut out = view.outstanding.clone();
    let mut expected = model.outstanding.clone();
    out.sort();
    expected.sort();
    assert_eq!(out, expected);
    assert_eq!(view.iteration, model.refits);
    assert_eq!(view.p_below.len(), model.refits);
    match view.status {
        CampaignStatus::AwaitingObservations => assert!(!view.outstanding.is_empty()),
        CampaignStatus::ReadyForBatch | CampaignStatus::Terminated => assert!(view.outstanding.is_empty()),
    }
    for id in &view.outstanding {
        assert!(
            !model.visited.contains_key(id),
            "{id} is outstanding after being observed"
        );
    }
}

async fn reopen(store: &Store) -> Service {
    Service::open(store.clone(), None).unwrap()
}

/// Returns the number of refits and whether the campaign terminated.
pub async fn run_sequence(seq: usize) -> (usize, bool) {
    let v = village(14, 0.35, 40);
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path(), false).unwrap();
    let mut svc = reopen(&store).await;
    let view = svc
        .create(spec(&v, quick_design(77), fixed_model()), true, "test")
        .await
        .unwrap();
    let id = view.id.clone();
    let mut model = Model {
        outstanding: view.outstanding.clone(),
        ..Default::default()
    };
    let all_ids: Vec<String> = v.houses.iter().map(|h| h.id.clone()).collect();
    let mut rng = StdRng::seed_from_u64(seq as u64);
    let mut saved_snapshot: Option<String> = None;
    check(&svc.snapshot(&id).unwrap(), &model);

    for _ in 0..STEPS {
        let before = json(&svc.snapshot(&id).unwrap());
        match rng.gen_range(0..10) {
            0..=3 => {
                // a valid partial or complete submission
                if model.outstanding.is_empty() {
                    continue;
                }
                let k = rng.gen_range(1..=model.outstanding.len());
                let chosen: Vec<String> = model.outstanding.choose_multiple(&mut rng, k).cloned().collect();
                let obs: Vec<Observation> = chosen
                    .iter()
                    .map(|h| Observation {
                        house_id: h.clone(),
                        status: if rng.gen_bool(0.3) {
                            ObservedStatus::Infested
                        } else {
                            ObservedStatus::Clear
                        },
                    })
                    .collect();
                let view = svc.observe(&id, obs.clone(), "test").await.unwrap();
                for o in &obs {
                    assert!(model.visited.insert(o.house_id.clone(), o.status.infested()).is_none());
                }
                model.outstanding.retain(|h| !chosen.contains(h));
                model.repeatable = None;
                if model.outstanding.is_empty() {
                    model.refits += 1;
                }
                check(&view, &model);
            }
            4 | 5 => {
                // a submission that must be rejected as a whole
                let mut obs: Vec<Observation> = model
                    .outstanding
                    .iter()
                    .take(rng.gen_range(0..=model.outstanding.len()))
                    .map(|h| Observation {
                        house_id: h.clone(),
                        status: ObservedStatus::Clear,
                    })
                    .collect();
                let poison = match rng.gen_range(0..4) {
                    0 => model.visited.keys().next().cloned(),
                    1 => Some("no-such-house".to_string()),
                    2 => obs.first().map(|o| o.house_id.clone()),
                    _ => all_ids
                        .iter()
                        .find(|h| !model.visited.contains_key(*h) && !model.outstanding.contains(h))
                        .cloned(),
                };
                let Some(poison) = poison else { continue };
                obs.insert(
                    rng.gen_range(0..=obs.len()),
                    Observation {
                        house_id: poison,
                        status: ObservedStatus::Infested,
                    },
                );
                let e = svc.observe(&id, obs, "test").await.unwrap_err();
                assert!(matches!(e.kind, ErrorKind::Invalid | ErrorKind::Conflict), "{e}");
                assert_eq!(json(&svc.snapshot(&id).unwrap()), before);
            }
            6 | 7 => {
                let status = svc.snapshot(&id).unwrap().status;
                match svc.next_batch(&id, "test").await {
                    Ok(batch) => {
                        let ids: Vec<String> = batch.iter().map(|r| r.id.clone()).collect();
                        if let Some(prev) = &model.repeatable {
                            assert_eq!(&ids, prev, "repeat call changed the batch");
                        } else {
                            assert_eq!(status, CampaignStatus::ReadyForBatch);
                            let fresh: HashSet<String> = ids.iter().cloned().collect();
                            assert_eq!(fresh.len(), ids.len());
                            let remaining = all_ids.len() - model.visited.len();
                            assert_eq!(ids.len(), remaining.min(3));
                            for h in &ids {
                                assert!(!model.visited.contains_key(h), "{h} reissued after a visit");
                                assert!(model.issued.iter().all(|b| !b.contains(h)), "{h} in two batches");
                            }
                            model.issued.push(fresh);
                            model.outstanding = ids.clone();
                            model.repeatable = Some(ids);
                        }
                    }
                    Err(e) => {
                        assert_eq!(e.kind, ErrorKind::Conflict);
                        assert!(status != CampaignStatus::ReadyForBatch);
                        assert_eq!(json(&svc.snapshot(&id).unwrap()), before);
                    }
                }
                check(&svc.snapshot(&id).unwrap(), &model);
            }
            8 => {
                drop(svc);
                svc = reopen(&store).await;
                assert_eq!(json(&svc.snapshot(&id).unwrap()), before);
            }
            _ => {
                // crash between the log append and the snapshot, or mid-append
                let snap_path = store.snapshot_path(&id).unwrap();
                match saved_snapshot.take() {
                    Some(old) if rng.gen_bool(0.5) => fs::write(&snap_path, old).unwrap(),
                    _ => {
                        saved_snapshot = Some(fs::read_to_string(&snap_path).unwrap());
                        let mut log = fs::OpenOptions::new()
                            .append(true)
                            .open(store.log_path(&id).unwrap())
                            .unwrap();
                        use std::io::Write;
                        write!(log, r#"{{"seq":999,"at_ms":1,"actor":"x","type":"observ"#).unwrap();
                    }
                }
                drop(svc);
                svc = reopen(&store).await;
                assert_eq!(json(&svc.snapshot(&id).unwrap()), before);
            }
        }
    }

    // the log alone rebuilds the committed state
    let events: Vec<Event> = store.read_log(&id).unwrap().into_iter().map(|e| e.event).collect();
    let rebuilt = Campaign::replay(&id, &events).unwrap();
    assert_eq!(json(&rebuilt.view(false)), json(&svc.snapshot(&id).unwrap()));
    let report = svc.report(&id).await.unwrap();
    assert_eq!(report.audit.len(), events.len());
    let visits: HashSet<&str> = report.visits.iter().map(|v| v.id.as_str()).collect();
    assert_eq!(visits.len(), report.visits.len());
    (model.refits, report.status == CampaignStatus::Terminated)
}

/// Runs `count` sequences; returns total refits and terminated campaigns.
pub async fn run_sequences(count: usize) -> (usize, usize) {
    let (mut refits, mut terminated) = (0, 0);
    for seq in 0..count {
        let (r, t) = run_sequence(seq).await;
        refits += r;
        terminated += usize::from(t);
    }
    (refits, terminated)
}
