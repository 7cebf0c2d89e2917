//! Bounded append-only record log.

use std::sync::{Arc, RwLock};

use crate::record::{Rejection, ValidatedRecord};

/// Single-writer log. Readers clone an `Arc` to the committed prefix, so
/// processing never observes a partial append.
#[derive(Debug, Clone)]
pub struct RecordLog {
    capacity: usize,
    records: Arc<RwLock<Vec<ValidatedRecord>>>,
}

impl RecordLog {
    pub fn new(capacity: usize) -> Self {
        RecordLog {
            capacity,
            records: Arc::new(RwLock::new(Vec::new())),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append and return the record's offset. Offsets start at 0 and
    /// increase by one per stored record.
    pub fn store(&self, record: ValidatedRecord) -> Result<u64, Rejection> {
        let mut log = self.records.write().expect("log lock poisoned");
        if log.len() >= self.capacity {
            return Err(Rejection::StorageFull);
        }
        log.push(record);
        Ok(log.len() as u64 - 1)
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("log lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records from `offset` to the current end.
    pub fn replay(&self, offset: u64) -> Vec<ValidatedRecord> {
        let log = self.records.read().expect("log lock poisoned");
        log.get(offset as usize..).map(<[_]>::to_vec).unwrap_or_default()
    }

    pub fn get(&self, offset: u64) -> Option<ValidatedRecord> {
        self.records.read().expect("log lock poisoned").get(offset as usize).cloned()
    }
}
