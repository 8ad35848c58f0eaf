//! Stimulus sets: a fixed practice list followed by experimental towers.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use gluing_core::generator::{generate, GeneratorConfig};
use gluing_core::oracle::{self, OracleResult};
use gluing_core::Tower;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Experimental towers are presented in sets of this many.
pub const SET_LENGTH: usize = 27;

pub const DEFAULT_SET: &str = "default";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Practice,
    Experimental,
}

/// A tower's place in its stimulus set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialRef {
    pub block: Block,
    pub tower: usize,
}

pub struct StimulusSet {
    name: String,
    practice: Vec<Arc<Tower>>,
    experimental: Vec<Arc<Tower>>,
    // Oracle results are computed on first use; a 10-block tower takes a
    // noticeable fraction of a second.
    oracles: Mutex<HashMap<TrialRef, Arc<OracleResult>>>,
}

impl StimulusSet {
    pub fn new(name: impl Into<String>, practice: Vec<Tower>, experimental: Vec<Tower>) -> Self {
        Self {
            name: name.into(),
            practice: practice.into_iter().map(Arc::new).collect(),
            experimental: experimental.into_iter().map(Arc::new).collect(),
            oracles: Mutex::new(HashMap::new()),
        }
    }

    /// Nine practice towers (sizes 2-10 ascending) and 135 experimental
    /// towers (15 of each size), both drawn from `seed`.
    pub fn standard(name: impl Into<String>, seed: u64) -> Result<Self, ServiceError> {
        let (practice, _) = generate(&GeneratorConfig::practice(seed))?;
        let (experimental, _) = generate(&GeneratorConfig::human(seed.wrapping_add(1)))?;
        Ok(Self::new(name, practice, experimental))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_practice(&self) -> usize {
        self.practice.len()
    }

    pub fn n_experimental(&self) -> usize {
        self.experimental.len()
    }

    pub fn tower(&self, r: TrialRef) -> Result<&Arc<Tower>, ServiceError> {
        let list = match r.block {
            Block::Practice => &self.practice,
            Block::Experimental => &self.experimental,
        };
        list.get(r.tower).ok_or_else(|| {
            ServiceError::Corrupt(format!("stimulus set {:?} has no {:?} tower {}", self.name, r.block, r.tower))
        })
    }

    pub fn oracle(&self, r: TrialRef) -> Result<Arc<OracleResult>, ServiceError> {
        if let Some(o) = self.oracles.lock().expect("oracle cache poisoned").get(&r) {
            return Ok(Arc::clone(o));
        }
        let o = Arc::new(oracle::solve(self.tower(r)?)?);
        self.oracles.lock().expect("oracle cache poisoned").insert(r, Arc::clone(&o));
        Ok(o)
    }
}

#[derive(Default)]
pub struct Registry {
    sets: BTreeMap<String, Arc<StimulusSet>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, set: StimulusSet) -> Self {
        self.insert(set);
        self
    }

    pub fn insert(&mut self, set: StimulusSet) {
        self.sets.insert(set.name.clone(), Arc::new(set));
    }

    pub fn get(&self, name: &str) -> Result<&Arc<StimulusSet>, ServiceError> {
        self.sets.get(name).ok_or_else(|| ServiceError::UnknownStimulusSet(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(String::as_str)
    }
}
