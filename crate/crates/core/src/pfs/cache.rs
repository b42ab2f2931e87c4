use std::collections::BTreeMap;

use serde::Serialize;

use super::crypto::{NodeIv, NodeKey, NodeTag};
use super::layout::{NodeAddr, NODE_SIZE};

/// Metadata bytes of an in-cache node besides its two payload buffers.
pub const NODE_META_BYTES: usize = 64;
/// Secure memory taken by one cached node.
pub const NODE_STRUCT_BYTES: usize = 2 * NODE_SIZE + NODE_META_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Interior,
    Data,
}

/// The two 4 KiB buffers every cached node carries.
pub(crate) struct NodeBuffers {
    /// Trusted copy of the ciphertext (baseline read path only).
    pub ciphertext: Box<[u8; NODE_SIZE]>,
    pub plaintext: Box<[u8; NODE_SIZE]>,
}

impl NodeBuffers {
    pub fn new() -> Self {
        NodeBuffers {
            ciphertext: Box::new([0; NODE_SIZE]),
            plaintext: Box::new([0; NODE_SIZE]),
        }
    }
}

/// One tree node held in secure memory.
pub struct NodeRecord {
    pub node_id: u64,
    pub addr: NodeAddr,
    pub key: NodeKey,
    pub iv: NodeIv,
    pub tag: NodeTag,
    pub dirty: bool,
    pub(crate) bufs: NodeBuffers,
}

impl NodeRecord {
    pub fn kind(&self) -> NodeKind {
        if self.addr.is_data() {
            NodeKind::Data
        } else {
            NodeKind::Interior
        }
    }

    pub fn payload(&self) -> &[u8; NODE_SIZE] {
        &self.bufs.plaintext
    }

    pub(crate) fn payload_mut(&mut self) -> &mut [u8; NODE_SIZE] {
        &mut self.bufs.plaintext
    }
}

impl std::fmt::Debug for NodeRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeRecord")
            .field("node_id", &self.node_id)
            .field("addr", &self.addr)
            .field("dirty", &self.dirty)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub capacity: usize,
    pub resident: usize,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

/// Least-recently-used map from node id to node. The root is pinned by the
/// owner and never enters this map.
pub(crate) struct LruCache {
    slots: usize,
    entries: BTreeMap<u64, (u64, NodeRecord)>,
    order: BTreeMap<u64, u64>,
    clock: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

impl LruCache {
    pub fn new(slots: usize) -> Self {
        LruCache {
            slots,
            entries: BTreeMap::new(),
            order: BTreeMap::new(),
            clock: 0,
            hits: 0,
            misses: 0,
            evictions: 0,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.slots
    }

    /// Marks `id` most recently used. Returns false when absent.
    pub fn touch(&mut self, id: u64) -> bool {
        self.clock += 1;
        let now = self.clock;
        match self.entries.get_mut(&id) {
            Some((stamp, _)) => {
                self.order.remove(stamp);
                *stamp = now;
                self.order.insert(now, id);
                true
            }
            None => false,
        }
    }

    pub fn peek(&self, id: u64) -> Option<&NodeRecord> {
        self.entries.get(&id).map(|(_, n)| n)
    }

    pub fn peek_mut(&mut self, id: u64) -> Option<&mut NodeRecord> {
        self.entries.get_mut(&id).map(|(_, n)| n)
    }

    pub fn insert(&mut self, node: NodeRecord) {
        debug_assert!(!self.is_full(), "insert into a full cache");
        self.clock += 1;
        let id = node.node_id;
        self.order.insert(self.clock, id);
        if let Some((old, _)) = self.entries.insert(id, (self.clock, node)) {
            self.order.remove(&old);
        }
    }

    pub fn pop_lru(&mut self) -> Option<NodeRecord> {
        let (_, id) = self.order.pop_first()?;
        self.evictions += 1;
        self.entries.remove(&id).map(|(_, n)| n)
    }

    pub fn drain(&mut self) -> Vec<NodeRecord> {
        self.order.clear();
        std::mem::take(&mut self.entries)
            .into_values()
            .map(|(_, n)| n)
            .collect()
    }

    /// Lowest dirty node, bottom level first.
    pub fn lowest_dirty(&self) -> Option<u64> {
        self.entries
            .values()
            .filter(|(_, n)| n.dirty)
            .min_by_key(|(_, n)| (n.addr.level, n.node_id))
            .map(|(_, n)| n.node_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64) -> NodeRecord {
        NodeRecord {
            node_id: id,
            addr: NodeAddr::data(id),
            key: [0; 16],
            iv: [0; 12],
            tag: [0; 16],
            dirty: false,
            bufs: NodeBuffers::new(),
        }
    }

    #[test]
    fn evicts_least_recently_used() {
        let mut c = LruCache::new(3);
        for id in 1..=3 {
            c.insert(rec(id));
        }
        assert!(c.is_full());
        assert!(c.touch(1));
        assert_eq!(c.pop_lru().unwrap().node_id, 2);
        c.insert(rec(4));
        assert_eq!(c.pop_lru().unwrap().node_id, 3);
        assert_eq!(c.pop_lru().unwrap().node_id, 1);
        assert_eq!(c.pop_lru().unwrap().node_id, 4);
        assert!(c.pop_lru().is_none());
        assert_eq!(c.evictions, 4);
    }

    #[test]
    fn lowest_dirty_prefers_bottom_level() {
        let mut c = LruCache::new(4);
        let mut a = rec(5);
        a.addr = NodeAddr { level: 1, index: 0 };
        a.dirty = true;
        let mut b = rec(9);
        b.dirty = true;
        c.insert(a);
        c.insert(b);
        c.insert(rec(2));
        assert_eq!(c.lowest_dirty(), Some(9));
    }
}
