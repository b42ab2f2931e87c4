use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cache::{CacheStats, LruCache, NodeBuffers, NodeRecord, NODE_STRUCT_BYTES};
use super::counters::{Phase, StoreCounters, WallProfile, WallTimer};
use super::crypto::{self, ct_eq, CipherVariant, NodeKey, NodeTag};
use super::error::{PfsError, Result};
use super::layout::{
    layout_nodes, Geometry, NodeAddr, NodeLayout, ENTRY_SIZE, FANOUT, HEADER_SIZE, IV_SIZE,
    KEY_SIZE, NODE_SIZE, RECORD_SIZE,
};
use super::superblock::{Superblock, VERSION};
use crate::sim::{CostModel, Direction, Simulator};

/// Read path selection. Baseline uses GCM with trusted copy-in and full
/// clearing; optimized uses CCM, decrypts straight from the untrusted read
/// buffer and skips redundant clearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Optimized,
}

impl Variant {
    pub fn cipher(self) -> CipherVariant {
        match self {
            Variant::Baseline => CipherVariant::Gcm,
            Variant::Optimized => CipherVariant::Ccm,
        }
    }

    pub fn for_cipher(cipher: CipherVariant) -> Self {
        match cipher {
            CipherVariant::Gcm => Variant::Baseline,
            CipherVariant::Ccm => Variant::Optimized,
        }
    }
}

/// Where a file's root key comes from.
#[derive(Clone, PartialEq, Eq)]
pub enum KeyPolicy {
    /// Root key derived per file from a master secret (stand-in for a
    /// device-bound sealing key).
    Derived { master_secret: [u8; 32] },
    /// Caller-supplied root key, identical for every file.
    Explicit { key: [u8; 16] },
}

impl KeyPolicy {
    pub fn root_key(&self, sb: &Superblock) -> NodeKey {
        match self {
            KeyPolicy::Derived { master_secret } => {
                crypto::derive_file_key(master_secret, &sb.kdf_salt, &sb.file_nonce)
            }
            KeyPolicy::Explicit { key } => *key,
        }
    }
}

impl std::fmt::Debug for KeyPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KeyPolicy::Derived { .. } => f.write_str("KeyPolicy::Derived(<redacted>)"),
            KeyPolicy::Explicit { .. } => f.write_str("KeyPolicy::Explicit(<redacted>)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Whence {
    Set,
    Cur,
    End,
}

pub const DEFAULT_CACHE_CAPACITY: usize = 48;
const CLEAR_ON_ADD: u64 = NODE_STRUCT_BYTES as u64;

/// Host-side record I/O plus the instrumentation it feeds.
struct RecordIo {
    file: File,
    /// Staging buffer in untrusted memory.
    buf: Box<[u8; RECORD_SIZE]>,
    counters: StoreCounters,
    sim: Simulator,
    wall: WallTimer,
}

impl RecordIo {
    fn read_record(&mut self, node_id: u64) -> Result<()> {
        let offset = NodeLayout::record_offset(node_id);
        let (file, buf) = (&mut self.file, &mut self.buf);
        let res = self.wall.time(Phase::HostIo, || -> io::Result<()> {
            file.seek(SeekFrom::Start(offset))?;
            file.read_exact(&mut buf[..])
        });
        self.counters.boundary_reads += 1;
        self.sim.crossing(Direction::Ocall);
        self.sim.untrusted_io(RECORD_SIZE as u64);
        match res {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Err(PfsError::MissingNode { node_id })
            }
            Err(e) => Err(e.into()),
        }
    }

    fn write_record(&mut self, node_id: u64) -> Result<()> {
        let offset = NodeLayout::record_offset(node_id);
        let (file, buf) = (&mut self.file, &self.buf);
        self.wall.time(Phase::HostIo, || -> io::Result<()> {
            file.seek(SeekFrom::Start(offset))?;
            file.write_all(&buf[..])
        })?;
        self.counters.boundary_writes += 1;
        self.sim.crossing(Direction::Ocall);
        self.sim.untrusted_io(RECORD_SIZE as u64);
        Ok(())
    }

    fn write_header(&mut self, header: &[u8]) -> Result<()> {
        self.file.seek(SeekFrom::Start(0))?;
        self.file.write_all(header)?;
        self.counters.boundary_writes += 1;
        self.sim.crossing(Direction::Ocall);
        self.sim.untrusted_io(header.len() as u64);
        Ok(())
    }
}

/// Associated data binding a non-root record to its slot. The root instead
/// binds the whole superblock.
fn node_aad(node_id: u64) -> [u8; 8] {
    node_id.to_le_bytes()
}

/// An open protected file.
///
/// A handle is single-threaded. Two handles on the same path are not
/// supported and give undefined results.
pub struct ProtectedFile {
    path: PathBuf,
    variant: Variant,
    header: Superblock,
    root_key: NodeKey,
    layout: NodeLayout,
    root: NodeRecord,
    cache: LruCache,
    pool: Vec<NodeBuffers>,
    io: RecordIo,
    cursor: u64,
    meta_dirty: bool,
    closed: bool,
    entry_updates: u64,
}

impl ProtectedFile {
    /// Creates a new, empty protected file. Refuses to overwrite.
    pub fn create(
        path: impl AsRef<Path>,
        policy: &KeyPolicy,
        variant: Variant,
        cache_capacity: usize,
    ) -> Result<Self> {
        Self::create_inner(path.as_ref(), policy, variant, cache_capacity, false)
    }

    /// Like [`create`](Self::create) but truncates an existing file.
    pub fn create_forced(
        path: impl AsRef<Path>,
        policy: &KeyPolicy,
        variant: Variant,
        cache_capacity: usize,
    ) -> Result<Self> {
        Self::create_inner(path.as_ref(), policy, variant, cache_capacity, true)
    }

    fn create_inner(
        path: &Path,
        policy: &KeyPolicy,
        variant: Variant,
        cache_capacity: usize,
        overwrite: bool,
    ) -> Result<Self> {
        if cache_capacity < 2 {
            return Err(PfsError::CacheTooSmall(cache_capacity));
        }
        let mut opts = OpenOptions::new();
        opts.read(true).write(true);
        if overwrite {
            opts.create(true).truncate(true);
        } else {
            opts.create_new(true);
        }
        let file = opts.open(path).map_err(|e| match e.kind() {
            io::ErrorKind::AlreadyExists => PfsError::AlreadyExists(path.to_path_buf()),
            _ => PfsError::Io(e),
        })?;
        let header = Superblock {
            version: VERSION,
            cipher_variant: variant.cipher(),
            logical_size: 0,
            node_count: 1,
            file_nonce: crypto::random_bytes(),
            kdf_salt: crypto::random_bytes(),
        };
        let root_key = policy.root_key(&header);
        let layout = layout_nodes(0);
        let mut io = RecordIo {
            file,
            buf: Box::new([0; RECORD_SIZE]),
            counters: StoreCounters::default(),
            sim: Simulator::default(),
            wall: WallTimer::default(),
        };
        let mut pool = Vec::new();
        let root = Self::fresh_node(&mut io, &mut pool, variant, layout.root(), 0, root_key);
        let mut f = ProtectedFile {
            path: path.to_path_buf(),
            variant,
            header,
            root_key,
            layout,
            root,
            cache: LruCache::new(cache_capacity - 1),
            pool,
            io,
            cursor: 0,
            meta_dirty: true,
            closed: false,
            entry_updates: 0,
        };
        f.flush()?;
        Ok(f)
    }

    /// Opens an existing protected file and authenticates its root.
    pub fn open(
        path: impl AsRef<Path>,
        policy: &KeyPolicy,
        variant: Variant,
        cache_capacity: usize,
    ) -> Result<Self> {
        Self::open_inner(path.as_ref(), policy, Some(variant), cache_capacity, true)
    }

    fn open_inner(
        path: &Path,
        policy: &KeyPolicy,
        variant: Option<Variant>,
        cache_capacity: usize,
        writable: bool,
    ) -> Result<Self> {
        if cache_capacity < 2 {
            return Err(PfsError::CacheTooSmall(cache_capacity));
        }
        let mut file = OpenOptions::new().read(true).write(writable).open(path)?;
        let header = read_header(&mut file)?;
        let variant = match variant {
            Some(v) if v.cipher() != header.cipher_variant => {
                return Err(PfsError::VariantMismatch {
                    expected: v.cipher(),
                    found: header.cipher_variant,
                })
            }
            Some(v) => v,
            None => Variant::for_cipher(header.cipher_variant),
        };
        let layout = layout_nodes(header.logical_size);
        if layout.total_nodes != header.node_count {
            return Err(PfsError::NodeCountMismatch {
                recorded: header.node_count,
                expected: layout.total_nodes,
            });
        }
        let root_key = policy.root_key(&header);
        let mut io = RecordIo {
            file,
            buf: Box::new([0; RECORD_SIZE]),
            counters: StoreCounters::default(),
            sim: Simulator::default(),
            wall: WallTimer::default(),
        };
        io.sim.crossing(Direction::Ocall);
        io.sim.untrusted_io(HEADER_SIZE);
        io.counters.boundary_reads += 1;
        let mut pool = Vec::new();
        let aad = header.encode();
        let root = Self::load_node(
            &mut io,
            &mut pool,
            variant,
            layout.root(),
            0,
            root_key,
            None,
            &aad,
        )?;
        Ok(ProtectedFile {
            path: path.to_path_buf(),
            variant,
            header,
            root_key,
            layout,
            root,
            cache: LruCache::new(cache_capacity - 1),
            pool,
            io,
            cursor: 0,
            meta_dirty: false,
            closed: false,
            entry_updates: 0,
        })
    }

    /// Opens with the variant recorded in the superblock, without write access.
    pub(crate) fn open_read_only(path: &Path, policy: &KeyPolicy, cache_capacity: usize) -> Result<Self> {
        Self::open_inner(path, policy, None, cache_capacity, false)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn logical_size(&self) -> u64 {
        self.header.logical_size
    }

    pub fn node_count(&self) -> u64 {
        self.layout.total_nodes
    }

    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    pub fn position(&self) -> u64 {
        self.cursor
    }

    pub fn counters(&self) -> StoreCounters {
        self.io.counters
    }

    pub fn cache_stats(&self) -> CacheStats {
        CacheStats {
            capacity: self.cache.slots() + 1,
            resident: self.cache.len() + usize::from(!self.closed),
            hits: self.cache.hits,
            misses: self.cache.misses,
            evictions: self.cache.evictions,
        }
    }

    pub fn simulator(&self) -> &Simulator {
        &self.io.sim
    }

    pub fn simulator_mut(&mut self) -> &mut Simulator {
        &mut self.io.sim
    }

    /// Installs a cost model. Charges from opening the file so far are
    /// discarded; the resident cache stays accounted.
    pub fn set_cost_model(&mut self, model: CostModel) {
        self.io.sim.configure(model);
        self.io.sim.clear_charges();
    }

    pub fn set_wall_profiling(&mut self, on: bool) {
        self.io.wall.set_enabled(on);
    }

    pub fn wall_profile(&self) -> WallProfile {
        self.io.wall.profile
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn check_open(&self) -> Result<()> {
        if self.closed {
            Err(PfsError::Closed)
        } else {
            Ok(())
        }
    }

    // ---- node buffers -------------------------------------------------------

    /// Takes a node structure for a node entering the cache. The baseline
    /// clears the whole structure; the optimized path only assigns fields.
    fn acquire(io: &mut RecordIo, pool: &mut Vec<NodeBuffers>, variant: Variant) -> NodeBuffers {
        let mut bufs = pool.pop().unwrap_or_else(NodeBuffers::new);
        if variant == Variant::Baseline {
            io.wall.time(Phase::Clear, || {
                bufs.ciphertext.fill(0);
                bufs.plaintext.fill(0);
            });
            io.counters.bytes_cleared += CLEAR_ON_ADD;
            io.sim.mem(CLEAR_ON_ADD, 0, NODE_STRUCT_BYTES as i64);
        } else {
            io.sim.mem(0, 0, NODE_STRUCT_BYTES as i64);
        }
        bufs
    }

    /// Returns a node's buffers. The baseline clears the plaintext first.
    fn release(io: &mut RecordIo, pool: &mut Vec<NodeBuffers>, variant: Variant, mut node: NodeRecord) {
        if variant == Variant::Baseline {
            io.wall.time(Phase::Clear, || node.bufs.plaintext.fill(0));
            io.counters.bytes_cleared += NODE_SIZE as u64;
            io.sim.mem(NODE_SIZE as u64, 0, -(NODE_STRUCT_BYTES as i64));
        } else {
            io.sim.mem(0, 0, -(NODE_STRUCT_BYTES as i64));
        }
        pool.push(node.bufs);
    }

    fn fresh_node(
        io: &mut RecordIo,
        pool: &mut Vec<NodeBuffers>,
        variant: Variant,
        addr: NodeAddr,
        node_id: u64,
        key: NodeKey,
    ) -> NodeRecord {
        let mut bufs = Self::acquire(io, pool, variant);
        if variant == Variant::Optimized {
            // new payload must read as zeros; this is content, not a redundant clear
            bufs.plaintext.fill(0);
        }
        NodeRecord {
            node_id,
            addr,
            key,
            iv: [0; IV_SIZE],
            tag: [0; 16],
            dirty: true,
            bufs,
        }
    }

    /// Reads and authenticates one record. `expected_tag` comes from the
    /// parent entry; the root has none and relies on its record tag.
    #[allow(clippy::too_many_arguments)]
    fn load_node(
        io: &mut RecordIo,
        pool: &mut Vec<NodeBuffers>,
        variant: Variant,
        addr: NodeAddr,
        node_id: u64,
        key: NodeKey,
        expected_tag: Option<NodeTag>,
        aad: &[u8],
    ) -> Result<NodeRecord> {
        let mut bufs = Self::acquire(io, pool, variant);
        let outcome = Self::decrypt_into(io, variant, node_id, &key, expected_tag, aad, &mut bufs);
        match outcome {
            Ok((iv, tag)) => {
                io.counters.nodes_decrypted += 1;
                Ok(NodeRecord {
                    node_id,
                    addr,
                    key,
                    iv,
                    tag,
                    dirty: false,
                    bufs,
                })
            }
            Err(e) => {
                // never leave unauthenticated bytes behind
                bufs.plaintext.fill(0);
                pool.push(bufs);
                io.sim.mem(0, 0, -(NODE_STRUCT_BYTES as i64));
                Err(e)
            }
        }
    }

    fn decrypt_into(
        io: &mut RecordIo,
        variant: Variant,
        node_id: u64,
        key: &NodeKey,
        expected_tag: Option<NodeTag>,
        aad: &[u8],
        bufs: &mut NodeBuffers,
    ) -> Result<([u8; IV_SIZE], NodeTag)> {
        io.read_record(node_id)?;
        let iv: [u8; IV_SIZE] = io.buf[..IV_SIZE].try_into().unwrap();
        let record_tag: NodeTag = io.buf[IV_SIZE + NODE_SIZE..].try_into().unwrap();
        let tag = match expected_tag {
            Some(t) if !ct_eq(&t, &record_tag) => {
                return Err(PfsError::IntegrityOrKey { node_id });
            }
            Some(t) => t,
            None => record_tag,
        };
        let ciphertext = &io.buf[IV_SIZE..IV_SIZE + NODE_SIZE];
        match variant {
            Variant::Baseline => {
                // edge routine copies the whole record into secure memory
                io.wall.time(Phase::CopyIn, || bufs.ciphertext.copy_from_slice(ciphertext));
                io.counters.ciphertext_bytes_copied_in += RECORD_SIZE as u64;
                io.sim.mem(0, RECORD_SIZE as u64, 0);
                bufs.plaintext.copy_from_slice(&bufs.ciphertext[..]);
            }
            Variant::Optimized => {
                // decrypt straight out of the untrusted buffer
                bufs.plaintext.copy_from_slice(ciphertext);
            }
        }
        let cipher = variant.cipher();
        let plaintext = &mut bufs.plaintext[..];
        io.wall
            .time(Phase::Crypto, || crypto::open(cipher, key, &iv, aad, plaintext, &tag))
            .map_err(|_| PfsError::IntegrityOrKey { node_id })?;
        Ok((iv, tag))
    }

    /// Encrypts `node` under a fresh IV and writes its record.
    fn seal_node(io: &mut RecordIo, variant: Variant, node: &mut NodeRecord, aad: &[u8]) -> Result<()> {
        let iv: [u8; IV_SIZE] = crypto::random_bytes();
        io.buf[IV_SIZE..IV_SIZE + NODE_SIZE].copy_from_slice(&node.bufs.plaintext[..]);
        let key = node.key;
        let buf = &mut io.buf[IV_SIZE..IV_SIZE + NODE_SIZE];
        let tag = io
            .wall
            .time(Phase::Crypto, || crypto::seal(variant.cipher(), &key, &iv, aad, buf));
        io.buf[..IV_SIZE].copy_from_slice(&iv);
        io.buf[IV_SIZE + NODE_SIZE..].copy_from_slice(&tag);
        io.write_record(node.node_id)?;
        io.counters.nodes_encrypted += 1;
        node.iv = iv;
        node.tag = tag;
        node.dirty = false;
        Ok(())
    }

    // ---- tree access ---------------------------------------------------------

    fn node_ref(&self, addr: NodeAddr) -> &NodeRecord {
        if addr == self.layout.root() {
            &self.root
        } else {
            self.cache
                .peek(self.layout.node_id(addr))
                .expect("node ensured resident")
        }
    }

    fn node_mut(&mut self, addr: NodeAddr) -> &mut NodeRecord {
        if addr == self.layout.root() {
            &mut self.root
        } else {
            let id = self.layout.node_id(addr);
            self.cache.peek_mut(id).expect("node ensured resident")
        }
    }

    /// Makes `addr` resident, loading its ancestors as needed.
    fn ensure_cached(&mut self, addr: NodeAddr) -> Result<()> {
        if addr == self.layout.root() {
            return Ok(());
        }
        let id = self.layout.node_id(addr);
        if self.cache.touch(id) {
            self.cache.hits += 1;
            return Ok(());
        }
        self.cache.misses += 1;
        // Evicting a dirty node can reload this node as a parent, or write it
        // back under a new tag; retry until the entry is stable.
        let (key, tag) = loop {
            let entry = self.child_entry(addr)?;
            let generation = self.entry_updates;
            self.make_room()?;
            if self.cache.touch(id) {
                return Ok(());
            }
            if generation == self.entry_updates {
                break entry;
            }
        };
        let node = Self::load_node(
            &mut self.io,
            &mut self.pool,
            self.variant,
            addr,
            id,
            key,
            Some(tag),
            &node_aad(id),
        )?;
        self.cache.insert(node);
        Ok(())
    }

    fn child_entry(&mut self, addr: NodeAddr) -> Result<(NodeKey, NodeTag)> {
        let parent = addr.parent();
        self.ensure_cached(parent)?;
        let off = addr.entry_offset();
        let payload = self.node_ref(parent).payload();
        let key: NodeKey = payload[off..off + KEY_SIZE].try_into().unwrap();
        let tag: NodeTag = payload[off + KEY_SIZE..off + ENTRY_SIZE].try_into().unwrap();
        Ok((key, tag))
    }

    fn set_child_entry(&mut self, addr: NodeAddr, key: NodeKey, tag: NodeTag) -> Result<()> {
        let parent = addr.parent();
        self.ensure_cached(parent)?;
        let off = addr.entry_offset();
        let p = self.node_mut(parent);
        p.payload_mut()[off..off + KEY_SIZE].copy_from_slice(&key);
        p.payload_mut()[off + KEY_SIZE..off + ENTRY_SIZE].copy_from_slice(&tag);
        p.dirty = true;
        self.entry_updates += 1;
        Ok(())
    }

    /// Evicts until one slot is free. Dirty victims are written back and
    /// their parent entry updated before the buffers are released.
    fn make_room(&mut self) -> Result<()> {
        while self.cache.is_full() {
            let mut victim = self.cache.pop_lru().expect("full cache has a victim");
            if victim.dirty {
                let aad = node_aad(victim.node_id);
                Self::seal_node(&mut self.io, self.variant, &mut victim, &aad)?;
                let (addr, key, tag) = (victim.addr, victim.key, victim.tag);
                Self::release(&mut self.io, &mut self.pool, self.variant, victim);
                self.set_child_entry(addr, key, tag)?;
            } else {
                Self::release(&mut self.io, &mut self.pool, self.variant, victim);
            }
        }
        Ok(())
    }

    fn write_back_cached(&mut self, id: u64) -> Result<()> {
        let aad = node_aad(id);
        let node = self.cache.peek_mut(id).expect("dirty node resident");
        Self::seal_node(&mut self.io, self.variant, node, &aad)?;
        let (addr, key, tag) = (node.addr, node.key, node.tag);
        self.set_child_entry(addr, key, tag)
    }

    fn insert_new(&mut self, addr: NodeAddr) -> Result<()> {
        self.make_room()?;
        let id = self.layout.node_id(addr);
        let node = Self::fresh_node(
            &mut self.io,
            &mut self.pool,
            self.variant,
            addr,
            id,
            crypto::random_bytes(),
        );
        self.cache.insert(node);
        Ok(())
    }

    /// Adds data node `layout.data_nodes` and whatever interior nodes it
    /// needs, growing the root when it is full.
    fn append_data_node(&mut self) -> Result<()> {
        let t = self.layout.data_nodes;
        let geo = Geometry::STANDARD;
        let new_layout = geo.layout_for_data_nodes(t + 1);
        let old_root_level = self.layout.root_level();
        if new_layout.root_level() > old_root_level {
            // the old root becomes an ordinary interior node under a new key
            let demoted_addr = NodeAddr { level: old_root_level, index: 0 };
            let demoted_id = geo.node_id(demoted_addr);
            self.make_room()?;
            let new_root = Self::fresh_node(
                &mut self.io,
                &mut self.pool,
                self.variant,
                new_layout.root(),
                0,
                self.root_key,
            );
            let mut demoted = std::mem::replace(&mut self.root, new_root);
            demoted.addr = demoted_addr;
            demoted.node_id = demoted_id;
            demoted.key = crypto::random_bytes();
            demoted.dirty = true;
            self.cache.insert(demoted);
        }
        self.layout = new_layout;
        for level in (1..self.layout.root_level()).rev() {
            let span = FANOUT.pow(level);
            if t.is_multiple_of(span) && t / span >= 1 {
                self.insert_new(NodeAddr { level, index: t / span })?;
            }
        }
        self.insert_new(NodeAddr::data(t))?;
        self.meta_dirty = true;
        Ok(())
    }

    // ---- public file API ----------------------------------------------------

    /// Writes at the cursor. The cursor must not be past the end of file.
    pub fn write(&mut self, data: &[u8]) -> Result<usize> {
        self.check_open()?;
        if self.cursor > self.header.logical_size {
            return Err(PfsError::BeyondEof {
                position: self.cursor,
                size: self.header.logical_size,
            });
        }
        let mut done = 0usize;
        while done < data.len() {
            let idx = self.cursor / NODE_SIZE as u64;
            let off = (self.cursor % NODE_SIZE as u64) as usize;
            let n = (NODE_SIZE - off).min(data.len() - done);
            if idx == self.layout.data_nodes {
                self.append_data_node()?;
            }
            let addr = NodeAddr::data(idx);
            self.ensure_cached(addr)?;
            let node = self.node_mut(addr);
            node.payload_mut()[off..off + n].copy_from_slice(&data[done..done + n]);
            node.dirty = true;
            done += n;
            self.cursor += n as u64;
            if self.cursor > self.header.logical_size {
                self.header.logical_size = self.cursor;
                self.meta_dirty = true;
            }
        }
        Ok(done)
    }

    /// Reads up to `buf.len()` bytes at the cursor; short at end of file.
    pub fn read(&mut self, buf: &mut [u8]) -> Result<usize> {
        self.check_open()?;
        let available = self.header.logical_size.saturating_sub(self.cursor);
        let want = (buf.len() as u64).min(available) as usize;
        let mut done = 0usize;
        while done < want {
            let idx = self.cursor / NODE_SIZE as u64;
            let off = (self.cursor % NODE_SIZE as u64) as usize;
            let n = (NODE_SIZE - off).min(want - done);
            let addr = NodeAddr::data(idx);
            self.ensure_cached(addr)?;
            let node = self.node_ref(addr);
            buf[done..done + n].copy_from_slice(&node.payload()[off..off + n]);
            done += n;
            self.cursor += n as u64;
        }
        Ok(done)
    }

    pub fn read_vec(&mut self, len: usize) -> Result<Vec<u8>> {
        let mut out = vec![0u8; len];
        let n = self.read(&mut out)?;
        out.truncate(n);
        Ok(out)
    }

    /// Moves the cursor. Positions past the end of file are refused.
    pub fn seek(&mut self, offset: i64, whence: Whence) -> Result<u64> {
        self.check_open()?;
        let base = match whence {
            Whence::Set => 0i128,
            Whence::Cur => self.cursor as i128,
            Whence::End => self.header.logical_size as i128,
        };
        let target = base + offset as i128;
        if target < 0 || target > u64::MAX as i128 {
            return Err(PfsError::InvalidPosition);
        }
        let target = target as u64;
        if target > self.header.logical_size {
            return Err(PfsError::BeyondEof {
                position: target,
                size: self.header.logical_size,
            });
        }
        self.cursor = target;
        Ok(target)
    }

    /// Writes every dirty node bottom-up, then the root, then the
    /// superblock. Not atomic: a crash part way leaves a file that either
    /// opens with the previous contents or fails authentication.
    pub fn flush(&mut self) -> Result<()> {
        self.check_open()?;
        while let Some(id) = self.cache.lowest_dirty() {
            self.write_back_cached(id)?;
        }
        if self.root.dirty || self.meta_dirty {
            self.header.node_count = self.layout.total_nodes;
            let header = self.header.encode();
            Self::seal_node(&mut self.io, self.variant, &mut self.root, &header)?;
            self.io.write_header(&header)?;
            self.meta_dirty = false;
        }
        Ok(())
    }

    /// Flushes and releases the cache. Closing twice is a no-op.
    pub fn close(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        let flushed = self.flush();
        for node in self.cache.drain() {
            Self::release(&mut self.io, &mut self.pool, self.variant, node);
        }
        let root = std::mem::replace(
            &mut self.root,
            NodeRecord {
                node_id: 0,
                addr: self.layout.root(),
                key: [0; KEY_SIZE],
                iv: [0; IV_SIZE],
                tag: [0; 16],
                dirty: false,
                bufs: NodeBuffers::new(),
            },
        );
        Self::release(&mut self.io, &mut self.pool, self.variant, root);
        self.pool.clear();
        self.closed = true;
        flushed
    }

    /// Walks every node root-down, authenticating each one.
    pub(crate) fn verify_all(&mut self) -> Result<u64> {
        let mut checked = 1u64;
        for level in (0..self.layout.root_level()).rev() {
            for index in 0..self.layout.nodes_at(level) {
                self.ensure_cached(NodeAddr { level, index })?;
                checked += 1;
            }
        }
        Ok(checked)
    }

    /// Node ids currently resident besides the root.
    pub fn resident_ids(&self) -> Vec<u64> {
        self.cache.ids().collect()
    }
}

impl Drop for ProtectedFile {
    fn drop(&mut self) {
        if !self.closed {
            if let Err(e) = self.close() {
                log::warn!("closing {} on drop failed: {e}", self.path.display());
            }
        }
    }
}

impl std::fmt::Debug for ProtectedFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProtectedFile")
            .field("path", &self.path)
            .field("variant", &self.variant)
            .field("logical_size", &self.header.logical_size)
            .field("cursor", &self.cursor)
            .field("closed", &self.closed)
            .finish_non_exhaustive()
    }
}

fn read_header(file: &mut File) -> Result<Superblock> {
    let mut raw = [0u8; HEADER_SIZE as usize];
    file.seek(SeekFrom::Start(0))?;
    match file.read_exact(&mut raw) {
        Ok(()) => Superblock::decode(&raw),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(PfsError::BadMagic),
        Err(e) => Err(e.into()),
    }
}

/// Reads the cleartext superblock. Needs no key; shows exactly what an
/// observer of the host file system learns.
pub fn inspect_superblock(path: impl AsRef<Path>) -> Result<Superblock> {
    let mut file = File::open(path)?;
    read_header(&mut file)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VerifyReport {
    Ok { nodes_checked: u64 },
    /// Authentication failed: tampered record or wrong key.
    Integrity { node_id: u64 },
    /// The file is missing records or its header disagrees with its size.
    Structure { node_id: Option<u64>, detail: String },
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, VerifyReport::Ok { .. })
    }

    pub fn first_bad_node(&self) -> Option<u64> {
        match self {
            VerifyReport::Ok { .. } => None,
            VerifyReport::Integrity { node_id } => Some(*node_id),
            VerifyReport::Structure { node_id, .. } => *node_id,
        }
    }
}

/// Authenticates the whole tree. Only an unreadable superblock is an error;
/// every other failure is described by the report.
pub fn verify_file(path: impl AsRef<Path>, policy: &KeyPolicy) -> Result<VerifyReport> {
    let path = path.as_ref();
    let header = inspect_superblock(path)?;
    let expected_len = layout_nodes(header.logical_size).file_len();
    let walk = ProtectedFile::open_read_only(path, policy, DEFAULT_CACHE_CAPACITY)
        .and_then(|mut f| {
            let checked = f.verify_all();
            f.closed = true;
            checked
        });
    let report = match walk {
        Ok(nodes_checked) => {
            let actual = std::fs::metadata(path)?.len();
            if actual != expected_len {
                VerifyReport::Structure {
                    node_id: None,
                    detail: format!("file is {actual} bytes, layout needs {expected_len}"),
                }
            } else {
                VerifyReport::Ok { nodes_checked }
            }
        }
        Err(PfsError::IntegrityOrKey { node_id }) => VerifyReport::Integrity { node_id },
        Err(e @ PfsError::MissingNode { node_id }) => VerifyReport::Structure {
            node_id: Some(node_id),
            detail: e.to_string(),
        },
        Err(e @ PfsError::NodeCountMismatch { .. }) => VerifyReport::Structure {
            node_id: None,
            detail: e.to_string(),
        },
        Err(e) => return Err(e),
    };
    Ok(report)
}
