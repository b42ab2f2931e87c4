//! Tree shape and on-disk node numbering.
//!
//! A file of `logical_size` bytes is cut into `ceil(size / 4096)` data nodes.
//! Interior nodes hold 128 child entries each; levels are stacked until a
//! single node (the root) remains. The root is always an interior node, so an
//! empty file is exactly one node.
//!
//! Levels are counted from the bottom: level 0 holds data nodes, level 1 the
//! interior nodes directly above them, and so on up to the root.
//!
//! Physical node ids follow creation order while the file grows by appending
//! data nodes, with the root pinned at id 0. When the tree gains a level the
//! previous root content is demoted to a fresh id at the end. Existing
//! records therefore never move when a file grows.

use serde::Serialize;

/// Plaintext payload bytes per node.
pub const NODE_SIZE: usize = 4096;
/// One interior entry: child key (16) followed by child tag (16).
pub const ENTRY_SIZE: usize = 32;
/// Children per interior node.
pub const FANOUT: u64 = (NODE_SIZE / ENTRY_SIZE) as u64;
pub const IV_SIZE: usize = 12;
pub const TAG_SIZE: usize = 16;
pub const KEY_SIZE: usize = 16;
/// On-disk record: IV, ciphertext, tag.
pub const RECORD_SIZE: usize = IV_SIZE + NODE_SIZE + TAG_SIZE;
/// Cleartext superblock at offset 0.
pub const HEADER_SIZE: u64 = 64;

/// Position of a node in the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeAddr {
    pub level: u32,
    pub index: u64,
}

impl NodeAddr {
    pub const fn data(index: u64) -> Self {
        NodeAddr { level: 0, index }
    }

    pub fn is_data(&self) -> bool {
        self.level == 0
    }

    pub fn parent(&self) -> NodeAddr {
        NodeAddr {
            level: self.level + 1,
            index: self.index / FANOUT,
        }
    }

    /// Byte offset of this node's entry inside its parent's payload.
    pub fn entry_offset(&self) -> usize {
        (self.index % FANOUT) as usize * ENTRY_SIZE
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeLayout {
    pub data_nodes: u64,
    /// Non-root interior node counts, level 1 first.
    pub interior_nodes_per_level: Vec<u64>,
    pub height: u32,
    pub total_nodes: u64,
}

pub fn data_nodes_for(logical_size: u64) -> u64 {
    logical_size.div_ceil(NODE_SIZE as u64)
}

/// Counts nodes per level for a file of `logical_size` bytes.
pub fn layout_nodes(logical_size: u64) -> NodeLayout {
    Geometry::STANDARD.layout_for_data_nodes(data_nodes_for(logical_size))
}

impl NodeLayout {
    pub fn root_level(&self) -> u32 {
        self.interior_nodes_per_level.len() as u32 + 1
    }

    pub fn root(&self) -> NodeAddr {
        NodeAddr {
            level: self.root_level(),
            index: 0,
        }
    }

    pub fn nodes_at(&self, level: u32) -> u64 {
        match level {
            0 => self.data_nodes,
            l if l == self.root_level() => 1,
            l => self
                .interior_nodes_per_level
                .get(l as usize - 1)
                .copied()
                .unwrap_or(0),
        }
    }

    pub fn contains(&self, addr: NodeAddr) -> bool {
        addr.level <= self.root_level() && addr.index < self.nodes_at(addr.level)
    }

    /// Physical record id of `addr` within this layout.
    pub fn node_id(&self, addr: NodeAddr) -> u64 {
        if addr.level == self.root_level() {
            debug_assert_eq!(addr.index, 0);
            0
        } else {
            Geometry::STANDARD.node_id(addr)
        }
    }

    /// Byte offset of a node record in the file.
    pub fn record_offset(node_id: u64) -> u64 {
        HEADER_SIZE + node_id * RECORD_SIZE as u64
    }

    /// Expected file length for this layout.
    pub fn file_len(&self) -> u64 {
        Self::record_offset(self.total_nodes)
    }
}

/// Fanout-parametric tree arithmetic. Production code uses
/// [`Geometry::STANDARD`]; tests use small fanouts to reach deep trees.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub fanout: u64,
}

impl Geometry {
    pub const STANDARD: Geometry = Geometry { fanout: FANOUT };

    /// `fanout^level`, or `None` once it no longer fits in a u64.
    fn span(&self, level: u32) -> Option<u64> {
        self.fanout.checked_pow(level)
    }

    pub fn root_level(&self, data_nodes: u64) -> u32 {
        let mut level = 1;
        while self.span(level).is_some_and(|s| s < data_nodes) {
            level += 1;
        }
        level
    }

    pub fn layout_for_data_nodes(&self, data_nodes: u64) -> NodeLayout {
        let root_level = self.root_level(data_nodes);
        let interior: Vec<u64> = (1..root_level)
            .map(|l| data_nodes.div_ceil(self.span(l).unwrap_or(u64::MAX)))
            .collect();
        let total = 1 + data_nodes + interior.iter().sum::<u64>();
        let height = if data_nodes == 0 { 1 } else { root_level + 1 };
        NodeLayout {
            data_nodes,
            interior_nodes_per_level: interior,
            height,
            total_nodes: total,
        }
    }

    /// Non-root nodes that exist before data node `t` is appended.
    fn created_before(&self, t: u64) -> u64 {
        if t == 0 {
            return 0;
        }
        let mut count = t;
        let mut level = 1;
        while let Some(span) = self.span(level) {
            if span >= t {
                break;
            }
            // one demoted root plus every interior node with index >= 1 at this level
            count += 1 + (t.div_ceil(span) - 1);
            level += 1;
        }
        count
    }

    fn is_span(&self, t: u64) -> bool {
        let mut level = 1;
        while let Some(span) = self.span(level) {
            if span == t {
                return true;
            }
            if span > t {
                return false;
            }
            level += 1;
        }
        false
    }

    /// Interior nodes above `min_level` whose first data descendant is `t`.
    fn new_interior_above(&self, t: u64, min_level: u32) -> u64 {
        let mut count = 0;
        let mut level = min_level + 1;
        while let Some(span) = self.span(level) {
            if span > t {
                break;
            }
            if t.is_multiple_of(span) {
                count += 1;
            }
            level += 1;
        }
        count
    }

    /// Physical id of a non-root node.
    pub fn node_id(&self, addr: NodeAddr) -> u64 {
        if addr.level == 0 {
            let t = addr.index;
            let demoted = u64::from(t > 0 && self.is_span(t));
            return 1 + self.created_before(t) + demoted + self.new_interior_above(t, 0);
        }
        let span = self.span(addr.level).expect("level within range");
        if addr.index == 0 {
            // demoted former root: first node created at event `span`
            1 + self.created_before(span)
        } else {
            let t = addr.index * span;
            let demoted = u64::from(self.is_span(t));
            1 + self.created_before(t) + demoted + self.new_interior_above(t, addr.level)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn layout_of_empty_file_is_root_only() {
        let l = layout_nodes(0);
        assert_eq!(l.data_nodes, 0);
        assert!(l.interior_nodes_per_level.is_empty());
        assert_eq!(l.height, 1);
        assert_eq!(l.total_nodes, 1);
    }

    #[test]
    fn layout_of_one_full_node() {
        let l = layout_nodes(4096);
        assert_eq!(
            (l.data_nodes, l.interior_nodes_per_level.len(), l.height, l.total_nodes),
            (1, 0, 2, 2)
        );
    }

    #[test]
    fn layout_of_one_mebibyte() {
        // 256 data nodes -> ceil(256/128) = 2 level-1 nodes -> root.
        let l = layout_nodes(1 << 20);
        assert_eq!(l.data_nodes, 256);
        assert_eq!(l.interior_nodes_per_level, vec![2]);
        assert_eq!(l.height, 3);
        assert_eq!(l.total_nodes, 259);
    }

    #[test]
    fn layout_boundaries() {
        assert_eq!(layout_nodes(1).total_nodes, 2);
        assert_eq!(layout_nodes(128 * 4096).total_nodes, 129);
        // 129 data nodes need a second level.
        assert_eq!(layout_nodes(128 * 4096 + 1).total_nodes, 129 + 2 + 1);
        let ten_mib = layout_nodes(10 << 20);
        assert_eq!(ten_mib.data_nodes, 2560);
        assert_eq!(ten_mib.interior_nodes_per_level, vec![20]);
        assert_eq!(ten_mib.total_nodes, 2560 + 20 + 1);
    }

    /// Replays growth one data node at a time, handing out ids in creation
    /// order. Independent of the closed-form id arithmetic.
    fn simulate_growth(fanout: u64, data_nodes: u64) -> (HashMap<NodeAddr, u64>, NodeAddr) {
        let mut ids: HashMap<NodeAddr, u64> = HashMap::new();
        let mut next = 1u64;
        let mut root_level = 1u32;
        let mut counts: HashMap<u32, u64> = HashMap::new();
        for t in 0..data_nodes {
            let needed = t + 1;
            // grow the root while it cannot address `needed` data nodes
            while fanout.pow(root_level) < needed {
                ids.insert(NodeAddr { level: root_level, index: 0 }, next);
                next += 1;
                counts.insert(root_level, 1);
                root_level += 1;
            }
            for level in (1..root_level).rev() {
                let idx = t / fanout.pow(level);
                let have = counts.get(&level).copied().unwrap_or(0);
                if idx >= have {
                    ids.insert(NodeAddr { level, index: idx }, next);
                    next += 1;
                    counts.insert(level, idx + 1);
                }
            }
            ids.insert(NodeAddr::data(t), next);
            next += 1;
        }
        (ids, NodeAddr { level: root_level, index: 0 })
    }

    #[test]
    fn closed_form_ids_match_growth_simulation() {
        for fanout in [2u64, 3, 4, 128] {
            let max = if fanout == 128 { 20_000 } else { 300 };
            let geo = Geometry { fanout };
            for d in [0, 1, 2, 3, 4, 5, 8, 9, 15, 16, 17, 27, 64, 65, 129, max] {
                let (ids, root) = simulate_growth(fanout, d);
                let layout = geo.layout_for_data_nodes(d);
                assert_eq!(layout.root_level(), root.level, "fanout {fanout} d {d}");
                assert_eq!(ids.len() as u64 + 1, layout.total_nodes, "fanout {fanout} d {d}");
                for (addr, id) in &ids {
                    if *addr == root {
                        continue;
                    }
                    assert_eq!(geo.node_id(*addr), *id, "fanout {fanout} d {d} addr {addr:?}");
                }
            }
        }
    }

    #[test]
    fn ids_are_a_bijection_onto_record_slots() {
        let geo = Geometry { fanout: 4 };
        for d in 0..200u64 {
            let layout = geo.layout_for_data_nodes(d);
            let mut seen = vec![false; layout.total_nodes as usize];
            seen[0] = true;
            for level in 0..layout.root_level() {
                for index in 0..layout.nodes_at(level) {
                    let id = geo.node_id(NodeAddr { level, index }) as usize;
                    assert!(!seen[id], "duplicate id {id} at d={d}");
                    seen[id] = true;
                }
            }
            assert!(seen.iter().all(|s| *s), "gap at d={d}");
        }
    }

    #[test]
    fn standard_ids_for_small_files() {
        let l = layout_nodes(2 * 4096);
        assert_eq!(l.node_id(l.root()), 0);
        assert_eq!(l.node_id(NodeAddr::data(0)), 1);
        assert_eq!(l.node_id(NodeAddr::data(1)), 2);
        // at data node 128 the root is demoted (id 129), then (1,1) = 130, data = 131
        let big = layout_nodes(129 * 4096);
        assert_eq!(big.node_id(NodeAddr { level: 1, index: 0 }), 129);
        assert_eq!(big.node_id(NodeAddr { level: 1, index: 1 }), 130);
        assert_eq!(big.node_id(NodeAddr::data(128)), 131);
        assert_eq!(big.node_id(NodeAddr::data(127)), 128);
    }
}
