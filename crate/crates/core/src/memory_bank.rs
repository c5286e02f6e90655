//! Bounded FIFO store of the most recent target records.

use std::collections::VecDeque;

use crate::error::{RadarError, Result};
use crate::feature_io::{Modality, ModalityDims, VideoRecord};

/// A bank entry. `seq` is the global insertion number; lower is older.
#[derive(Debug, Clone, Copy)]
pub struct BankEntry<'a> {
    pub record: &'a VideoRecord,
    pub seq: u64,
}

#[derive(Debug, Clone)]
pub struct MemoryBank<'a> {
    capacity: usize,
    dims: ModalityDims,
    entries: VecDeque<BankEntry<'a>>,
    inserted: u64,
}

impl<'a> MemoryBank<'a> {
    pub fn new(capacity: usize, dims: ModalityDims) -> Result<Self> {
        if capacity == 0 {
            return Err(RadarError::invalid(
                "memory bank capacity must be at least 1",
            ));
        }
        Ok(MemoryBank {
            capacity,
            dims,
            entries: VecDeque::with_capacity(capacity),
            inserted: 0,
        })
    }

    /// Appends `records` in order, evicting the oldest entries beyond
    /// capacity. A dimension mismatch rejects the whole batch.
    pub fn insert_batch(&mut self, records: &[&'a VideoRecord]) -> Result<()> {
        for r in records {
            for m in Modality::ALL {
                let (expected, actual) = (self.dims.get(m), r.modality(m).len());
                if expected != actual {
                    return Err(RadarError::DimensionMismatch {
                        context: format!("memory bank insert of {} ({})", r.id, m.key()),
                        expected,
                        actual,
                    });
                }
            }
        }
        for &record in records {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(BankEntry {
                record,
                seq: self.inserted,
            });
            self.inserted += 1;
        }
        Ok(())
    }

    /// Entries oldest to newest.
    pub fn scan(&self) -> impl ExactSizeIterator<Item = &BankEntry<'a>> + '_ {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted_total(&self) -> u64 {
        self.inserted
    }

    pub fn evicted_total(&self) -> u64 {
        self.inserted - self.entries.len() as u64
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.record.id.as_str()).collect()
    }
}
