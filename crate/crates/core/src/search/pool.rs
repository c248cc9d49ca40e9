use serde::{Deserialize, Serialize};

use crate::arch::ArchitectureSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub arch: ArchitectureSpec,
    pub key: String,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertOutcome {
    Admitted,
    /// Pool full and the score does not beat the current minimum.
    BelowMinimum,
    Duplicate,
}

impl InsertOutcome {
    pub fn admitted(self) -> bool {
        self == InsertOutcome::Admitted
    }
}

/// Bounded set of the best candidates seen so far.
///
/// Entries are kept in descending score order; equal scores keep insertion
/// order, so the earlier entry ranks higher and the later one is evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    capacity: usize,
    entries: Vec<PoolEntry>,
}

impl CandidatePool {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "pool capacity must be positive");
        Self { capacity, entries: Vec::with_capacity(capacity + 1) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    /// Best first.
    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn best(&self) -> Option<&PoolEntry> {
        self.entries.first()
    }

    pub fn worst(&self) -> Option<&PoolEntry> {
        self.entries.last()
    }

    pub fn max_score(&self) -> Option<f64> {
        self.best().map(|e| e.mu)
    }

    pub fn contains(&self, arch: &ArchitectureSpec) -> bool {
        let key = arch.compact();
        self.entries.iter().any(|e| e.key == key)
    }
}

pub fn pool_insert(pool: &mut CandidatePool, arch: &ArchitectureSpec, mu: f64, sigma: f64) -> InsertOutcome {
    let key = arch.compact();
    if pool.entries.iter().any(|e| e.key == key) {
        return InsertOutcome::Duplicate;
    }
    if pool.is_full() {
        let min = pool.entries.last().expect("full pool is non-empty").mu;
        if !(mu > min) {
            return InsertOutcome::BelowMinimum;
        }
        pool.entries.pop();
    }
    let at = pool.entries.partition_point(|e| e.mu >= mu);
    pool.entries.insert(at, PoolEntry { arch: arch.clone(), key, mu, sigma });
    InsertOutcome::Admitted
}
