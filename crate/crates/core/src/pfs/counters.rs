use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Per-handle instrumentation. Every field only grows during a session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCounters {
    pub bytes_cleared: u64,
    pub ciphertext_bytes_copied_in: u64,
    pub nodes_decrypted: u64,
    pub nodes_encrypted: u64,
    pub boundary_reads: u64,
    pub boundary_writes: u64,
}

impl StoreCounters {
    pub const FIELDS: [&'static str; 6] = [
        "bytes_cleared",
        "ciphertext_bytes_copied_in",
        "nodes_decrypted",
        "nodes_encrypted",
        "boundary_reads",
        "boundary_writes",
    ];

    pub fn since(&self, earlier: &StoreCounters) -> StoreCounters {
        StoreCounters {
            bytes_cleared: self.bytes_cleared - earlier.bytes_cleared,
            ciphertext_bytes_copied_in: self.ciphertext_bytes_copied_in
                - earlier.ciphertext_bytes_copied_in,
            nodes_decrypted: self.nodes_decrypted - earlier.nodes_decrypted,
            nodes_encrypted: self.nodes_encrypted - earlier.nodes_encrypted,
            boundary_reads: self.boundary_reads - earlier.boundary_reads,
            boundary_writes: self.boundary_writes - earlier.boundary_writes,
        }
    }

    pub fn add(&mut self, other: &StoreCounters) {
        self.bytes_cleared += other.bytes_cleared;
        self.ciphertext_bytes_copied_in += other.ciphertext_bytes_copied_in;
        self.nodes_decrypted += other.nodes_decrypted;
        self.nodes_encrypted += other.nodes_encrypted;
        self.boundary_reads += other.boundary_reads;
        self.boundary_writes += other.boundary_writes;
    }
}

/// Wall-clock time spent in the phases the cost model charges separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WallProfile {
    pub clear: Duration,
    pub copy_in: Duration,
    pub host_io: Duration,
    pub crypto: Duration,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct WallTimer {
    enabled: bool,
    pub profile: WallProfile,
}

pub(crate) enum Phase {
    Clear,
    CopyIn,
    HostIo,
    Crypto,
}

impl WallTimer {
    pub fn set_enabled(&mut self, on: bool) {
        self.enabled = on;
    }

    pub fn time<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T {
        if !self.enabled {
            return f();
        }
        let start = Instant::now();
        let out = f();
        let dt = start.elapsed();
        let slot = match phase {
            Phase::Clear => &mut self.profile.clear,
            Phase::CopyIn => &mut self.profile.copy_in,
            Phase::HostIo => &mut self.profile.host_io,
            Phase::Crypto => &mut self.profile.crypto,
        };
        *slot += dt;
        out
    }
}
