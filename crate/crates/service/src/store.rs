//! Live sessions backed by one log file each.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use gluing_core::rng::derive_seed;

use crate::error::ServiceError;
use crate::events::{append_events, create_log, read_log, Header, TrialEvent};
use crate::session::{now_ms, trial_order, ActOutcome, FinishOutcome, Session, TrialView};
use crate::stimuli::Registry;

const LOG_EXTENSION: &str = "jsonl";

pub struct Store {
    dir: PathBuf,
    registry: Registry,
    seed: u64,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    counter: Mutex<u64>,
}

impl Store {
    /// Open `dir`, resuming every session logged there.
    pub fn open(dir: impl Into<PathBuf>, registry: Registry, seed: u64) -> Result<Self, ServiceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.retain(|p| p.extension().is_some_and(|x| x == LOG_EXTENSION));
        paths.sort();
        for p in &paths {
            let (header, events) = read_log(p)?;
            let set = Arc::clone(registry.get(&header.stimulus_set)?);
            let s = Session::replay(header, set, &events)?;
            sessions.insert(s.id().to_string(), Arc::new(Mutex::new(s)));
        }
        let counter = Mutex::new(sessions.len() as u64);
        Ok(Self { dir, registry, seed, sessions: Mutex::new(sessions), counter })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.{LOG_EXTENSION}"))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let map = self.sessions.lock().expect("session map poisoned");
        map.get(id).cloned().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().expect("session map poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Create a session. Without an explicit `seed` the trial order comes
    /// from the store seed and the session's sequence number.
    pub fn create(
        &self,
        participant: &str,
        stimulus_set: &str,
        seed: Option<u64>,
        note: Option<String>,
    ) -> Result<(String, TrialView), ServiceError> {
        let set = Arc::clone(self.registry.get(stimulus_set)?);
        let mut counter = self.counter.lock().expect("counter poisoned");
        let (id, n) = loop {
            let n = *counter;
            *counter += 1;
            let id = format!("s{n:06}");
            if !self.log_path(&id).exists() {
                break (id, n);
            }
        };
        let seed = seed.unwrap_or_else(|| derive_seed(self.seed, &[n]));
        let header = Header {
            session_id: id.clone(),
            participant: participant.to_string(),
            stimulus_set: stimulus_set.to_string(),
            seed,
            created_ms: now_ms(),
            note,
            trials: trial_order(&set, seed),
        };
        let session = Session::start(header.clone(), set)?;
        let view = session.view()?;
        create_log(&self.log_path(&id), &header)?;
        self.sessions.lock().expect("session map poisoned").insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok((id, view))
    }

    fn commit(&self, s: &mut Session, events: &[TrialEvent]) -> Result<(), ServiceError> {
        append_events(&self.log_path(s.id()), events)?;
        for e in events {
            s.apply(e)?;
        }
        Ok(())
    }

    pub fn trial(&self, id: &str) -> Result<TrialView, ServiceError> {
        let s = self.session(id)?;
        let s = s.lock().expect("session poisoned");
        s.view()
    }

    pub fn act(
        &self,
        id: &str,
        a: usize,
        b: usize,
        t_select_a_ms: Option<f64>,
        t_select_b_ms: Option<f64>,
    ) -> Result<ActOutcome, ServiceError> {
        let s = self.session(id)?;
        let mut s = s.lock().expect("session poisoned");
        let events = s.act_events(a, b, t_select_a_ms, t_select_b_ms)?;
        self.commit(&mut s, &events)?;
        s.act_outcome(events.last().expect("a pair click logs three events"))
    }

    pub fn finish_trial(&self, id: &str) -> Result<FinishOutcome, ServiceError> {
        let s = self.session(id)?;
        let mut s = s.lock().expect("session poisoned");
        let events = s.finish_events()?;
        self.commit(&mut s, &events)?;
        s.finish_outcome()
    }

    /// The log file followed by one transcript line per finished trial.
    pub fn export(&self, id: &str) -> Result<String, ServiceError> {
        let s = self.session(id)?;
        let s = s.lock().expect("session poisoned");
        let mut out = std::fs::read_to_string(self.log_path(id))?;
        for (trial, records) in s.transcripts().iter().enumerate() {
            let line = serde_json::json!({ "kind": "transcript", "trial": trial, "records": records });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        Ok(out)
    }

    pub fn total(&self, id: &str) -> Result<i64, ServiceError> {
        Ok(self.session(id)?.lock().expect("session poisoned").total())
    }
}
