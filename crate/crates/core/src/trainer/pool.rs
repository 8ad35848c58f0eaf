use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::oracle::{self, OracleResult};
use crate::{Error, Result, Tower};

/// Towers grouped by size with lazily computed oracle results.
#[derive(Debug, Default)]
pub struct TowerPool {
    by_size: BTreeMap<usize, Vec<Arc<Tower>>>,
    oracle: RefCell<HashMap<(usize, usize), Arc<OracleResult>>>,
}

impl TowerPool {
    pub fn new(towers: impl IntoIterator<Item = Tower>) -> Self {
        let mut by_size: BTreeMap<usize, Vec<Arc<Tower>>> = BTreeMap::new();
        for t in towers {
            by_size.entry(t.n_blocks()).or_default().push(Arc::new(t));
        }
        Self { by_size, oracle: RefCell::default() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.by_size.keys().copied().collect()
    }

    pub fn count(&self, size: usize) -> usize {
        self.by_size.get(&size).map_or(0, Vec::len)
    }

    pub fn towers(&self, size: usize) -> &[Arc<Tower>] {
        self.by_size.get(&size).map_or(&[], Vec::as_slice)
    }

    pub fn tower(&self, size: usize, index: usize) -> Result<&Arc<Tower>> {
        self.towers(size)
            .get(index)
            .ok_or_else(|| Error::Dataset(format!("no tower {index} of size {size}")))
    }

    pub fn oracle(&self, size: usize, index: usize) -> Result<Arc<OracleResult>> {
        if let Some(r) = self.oracle.borrow().get(&(size, index)) {
            return Ok(r.clone());
        }
        let r = Arc::new(oracle::solve(self.tower(size, index)?)?);
        self.oracle.borrow_mut().insert((size, index), r.clone());
        Ok(r)
    }

    pub fn require_sizes(&self, sizes: &[usize]) -> Result<()> {
        for &n in sizes {
            if self.count(n) == 0 {
                return Err(Error::Dataset(format!("the scene set has no towers of size {n}")));
            }
        }
        Ok(())
    }
}
