use std::collections::{BTreeMap, HashMap};

pub const PAGE_SIZE: u64 = 4096;

/// LRU set of 4 KiB pages that currently sit in secure memory.
///
/// Pages are numbered across the simulated resident address space. A page
/// that is touched while absent faults; when the set is full the least
/// recently used page is paged out to make room.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpcModel {
    capacity: u64,
    stamp_of: HashMap<u64, u64>,
    by_stamp: BTreeMap<u64, u64>,
    clock: u64,
}

impl EpcModel {
    pub fn new(limit_bytes: u64) -> Self {
        EpcModel {
            capacity: limit_bytes / PAGE_SIZE,
            ..Default::default()
        }
    }

    /// Touches `page`; returns true when the access faulted.
    pub fn touch(&mut self, page: u64) -> bool {
        self.clock += 1;
        if let Some(old) = self.stamp_of.insert(page, self.clock) {
            self.by_stamp.remove(&old);
            self.by_stamp.insert(self.clock, page);
            return false;
        }
        if self.capacity == 0 {
            self.stamp_of.remove(&page);
            return true;
        }
        self.by_stamp.insert(self.clock, page);
        if self.stamp_of.len() as u64 > self.capacity {
            let (_, victim) = self.by_stamp.pop_first().expect("non-empty");
            self.stamp_of.remove(&victim);
            return true;
        }
        false
    }

    /// New page entering the resident set. Free while secure memory has
    /// room, a fault once it is full.
    pub fn allocate(&mut self, page: u64) -> bool {
        self.touch(page)
    }

    pub fn release(&mut self, page: u64) {
        if let Some(stamp) = self.stamp_of.remove(&page) {
            self.by_stamp.remove(&stamp);
        }
    }

    #[cfg(test)]
    pub fn resident_pages(&self) -> u64 {
        self.stamp_of.len() as u64
    }
}
