//! On-disk campaigns: `<root>/<id>/events.jsonl` is the append-only log and
//! `<root>/<id>/snapshot.json` a cache of the state after some prefix of it.
//!
//! A commit appends the event first and then rewrites the snapshot, so after
//! a crash the snapshot may lag the log but never leads it. A torn last line
//! is an uncommitted event and is dropped on load.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;

use crate::campaign::{AuditEntry, Campaign, CampaignSnapshot, Event};
use crate::error::{ServiceError, ServiceResult};

const LOG_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
    /// fsync after every write.
    durable: bool,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>, durable: bool) -> ServiceResult<Store> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Store { root, durable })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> ServiceResult<PathBuf> {
        if !valid_id(id) {
            return Err(ServiceError::not_found(id));
        }
        Ok(self.root.join(id))
    }

    pub fn log_path(&self, id: &str) -> ServiceResult<PathBuf> {
        Ok(self.dir(id)?.join(LOG_FILE))
    }

    pub fn snapshot_path(&self, id: &str) -> ServiceResult<PathBuf> {
        Ok(self.dir(id)?.join(SNAPSHOT_FILE))
    }

    /// Campaign ids with a log, sorted.
    pub fn list(&self) -> ServiceResult<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if valid_id(&name) && entry.path().join(LOG_FILE).exists() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Reserves the next sequential id by creating its directory.
    pub fn allocate_id(&self) -> ServiceResult<String> {
        let mut k = self.list()?.len() + 1;
        loop {
            let id = format!("c{k:06}");
            match fs::create_dir(self.root.join(&id)) {
                Ok(()) => return Ok(id),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => k += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn append(&self, id: &str, entry: &AuditEntry) -> ServiceResult<()> {
        let path = self.log_path(id)?;
        let mut line = serde_json::to_string(entry)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        f.write_all(line.as_bytes())?;
        if self.durable {
            f.sync_data()?;
        }
        Ok(())
    }

    pub fn write_snapshot(&self, snap: &CampaignSnapshot) -> ServiceResult<()> {
        let path = self.snapshot_path(&snap.id)?;
        let tmp = path.with_extension("json.tmp");
        let mut f = File::create(&tmp)?;
        f.write_all(serde_json::to_string(snap)?.as_bytes())?;
        if self.durable {
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Appends the event and refreshes the snapshot.
    pub fn commit(&self, campaign: &Campaign, actor: &str, event: Event) -> ServiceResult<AuditEntry> {
        let entry = AuditEntry {
            seq: campaign.snapshot().events - 1,
            at_ms: now_ms(),
            actor: actor.to_string(),
            event,
        };
        self.append(campaign.id(), &entry)?;
        self.write_snapshot(campaign.snapshot())?;
        Ok(entry)
    }

    /// Committed log entries. A final line without its newline or that
    /// fails to parse is an interrupted write and is skipped.
    pub fn read_log(&self, id: &str) -> ServiceResult<Vec<AuditEntry>> {
        let path = self.log_path(id)?;
        let file = File::open(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ServiceError::not_found(id),
            _ => e.into(),
        })?;
        let mut reader = BufReader::new(file);
        let mut entries = Vec::new();
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            let complete = line.ends_with('\n');
            match serde_json::from_str::<AuditEntry>(line.trim_end()) {
                Ok(e) if complete => {
                    if e.seq != entries.len() as u64 {
                        return Err(ServiceError::internal(
                            "corrupt_log",
                            format!("{}: sequence gap at {}", path.display(), e.seq),
                        ));
                    }
                    entries.push(e);
                }
                _ if !complete => {
                    warn!("{}: dropping an incomplete final record", path.display());
                    break;
                }
                Ok(_) => unreachable!(),
                Err(e) => {
                    return Err(ServiceError::internal(
                        "corrupt_log",
                        format!("{}: record {}: {e}", path.display(), entries.len()),
                    ))
                }
            }
        }
        Ok(entries)
    }

    /// Rewrites the log without a torn tail so later appends start on a
    /// fresh line.
    fn repair_log(&self, id: &str, entries: &[AuditEntry]) -> ServiceResult<()> {
        let path = self.log_path(id)?;
        let len = fs::metadata(&path)?.len();
        let mut text = String::new();
        for e in entries {
            text.push_str(&serde_json::to_string(e)?);
            text.push('\n');
        }
        if text.len() as u64 != len {
            let tmp = path.with_extension("jsonl.tmp");
            fs::write(&tmp, &text)?;
            fs::rename(&tmp, &path)?;
        }
        Ok(())
    }

    /// Loads a campaign from its snapshot, replaying any logged events the
    /// snapshot has not seen. Without a usable snapshot the whole log is
    /// replayed.
    pub fn load(&self, id: &str) -> ServiceResult<(Campaign, Vec<AuditEntry>)> {
        let entries = self.read_log(id)?;
        self.repair_log(id, &entries)?;
        let snapshot = fs::read_to_string(self.snapshot_path(id)?)
            .ok()
            .and_then(|text| serde_json::from_str::<CampaignSnapshot>(&text).ok())
            .filter(|s| s.id == id && s.events >= 1 && s.events <= entries.len() as u64);
        let stale = snapshot.as_ref().is_none_or(|s| s.events != entries.len() as u64);
        let campaign = match snapshot {
            Some(snap) => {
                let start = snap.events as usize;
                let mut c = Campaign::from_snapshot(snap)?;
                for e in &entries[start..] {
                    c.apply(&e.event)?;
                }
                c
            }
            None => Campaign::replay(id, &entries.iter().map(|e| e.event.clone()).collect::<Vec<_>>())?,
        };
        if stale {
            self.write_snapshot(campaign.snapshot())?;
        }
        Ok((campaign, entries))
    }
}
