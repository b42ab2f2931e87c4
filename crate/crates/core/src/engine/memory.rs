use std::fmt;
use std::sync::Arc;

pub const WASM_PAGE: usize = 65536;
/// 4 GiB address space.
pub const MAX_PAGES: u32 = 65536;

/// Grows the backing store of a linear memory. Returns false to refuse.
pub trait GuestAllocator: Send + Sync + fmt::Debug {
    fn reserve(&self, buf: &mut Vec<u8>, new_len: usize) -> bool;
}

/// Reserves in fixed-size chunks up to a limit, so most `memory.grow`
/// calls need no host allocation.
#[derive(Debug, Clone, Copy)]
pub struct ChunkedAllocator {
    pub chunk: usize,
    pub limit: usize,
}

impl Default for ChunkedAllocator {
    fn default() -> Self {
        ChunkedAllocator {
            chunk: 4 << 20,
            limit: MAX_PAGES as usize * WASM_PAGE,
        }
    }
}

impl GuestAllocator for ChunkedAllocator {
    fn reserve(&self, buf: &mut Vec<u8>, new_len: usize) -> bool {
        if new_len > self.limit {
            return false;
        }
        if new_len > buf.capacity() {
            let target = new_len.div_ceil(self.chunk).saturating_mul(self.chunk).min(self.limit);
            buf.reserve_exact(target - buf.len());
        }
        true
    }
}

#[derive(Debug, Clone)]
pub enum MemoryPolicy {
    /// Host allocator, reallocated to the exact size on every growth.
    System,
    /// Caller-supplied allocator.
    Custom(Arc<dyn GuestAllocator>),
    /// One buffer of the given size allocated up front; growth beyond it
    /// fails instead of touching the host allocator.
    Preallocated { bytes: usize },
}

impl MemoryPolicy {
    pub fn custom_default() -> Self {
        MemoryPolicy::Custom(Arc::new(ChunkedAllocator::default()))
    }

    /// Parses `system`, `custom` or `prealloc:<bytes>` (with optional
    /// KiB/MiB/GiB suffix).
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "system" => Ok(MemoryPolicy::System),
            "custom" => Ok(MemoryPolicy::custom_default()),
            other => match other.strip_prefix("prealloc:") {
                Some(n) => Ok(MemoryPolicy::Preallocated { bytes: parse_bytes(n)? }),
                None => Err(format!("unknown memory mode `{other}`")),
            },
        }
    }
}

/// `123`, `64KiB`, `8MiB`, `1GiB` (also `K`, `M`, `G`).
pub fn parse_bytes(s: &str) -> Result<usize, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: usize = num.parse().map_err(|_| format!("bad byte count `{s}`"))?;
    let mult = match unit.trim() {
        "" | "B" => 1,
        "K" | "KiB" | "k" => 1 << 10,
        "M" | "MiB" => 1 << 20,
        "G" | "GiB" => 1 << 30,
        u => return Err(format!("unknown unit `{u}`")),
    };
    n.checked_mul(mult).ok_or_else(|| format!("byte count `{s}` overflows"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryStats {
    pub pages: u32,
    /// Times the backing store was (re)allocated on the host.
    pub host_allocations: u64,
    pub capacity_bytes: usize,
}

#[derive(Debug)]
pub struct LinearMemory {
    buf: Vec<u8>,
    max_pages: u32,
    policy: MemoryPolicy,
    host_allocations: u64,
}

impl LinearMemory {
    pub fn new(policy: MemoryPolicy, min_pages: u32, max_pages: Option<u32>) -> Result<Self, String> {
        let max_pages = max_pages.unwrap_or(MAX_PAGES).min(MAX_PAGES);
        let len = min_pages as usize * WASM_PAGE;
        let mut mem = LinearMemory {
            buf: Vec::new(),
            max_pages,
            policy,
            host_allocations: 0,
        };
        if let MemoryPolicy::Preallocated { bytes } = mem.policy {
            if bytes < len {
                return Err(format!(
                    "preallocated buffer of {bytes} bytes is smaller than the module minimum of {len} bytes"
                ));
            }
            mem.buf = Vec::with_capacity(bytes);
            mem.host_allocations = 1;
        }
        if !mem.resize(len) {
            return Err(format!("cannot allocate {len} bytes of linear memory"));
        }
        Ok(mem)
    }

    fn resize(&mut self, new_len: usize) -> bool {
        let before = self.buf.capacity();
        let ok = match &self.policy {
            MemoryPolicy::System => {
                self.buf.reserve_exact(new_len.saturating_sub(self.buf.len()));
                true
            }
            MemoryPolicy::Custom(a) => a.reserve(&mut self.buf, new_len),
            MemoryPolicy::Preallocated { .. } => new_len <= self.buf.capacity(),
        };
        if !ok {
            return false;
        }
        if self.buf.capacity() != before {
            self.host_allocations += 1;
        }
        debug_assert!(self.buf.capacity() >= new_len);
        self.buf.resize(new_len, 0);
        true
    }

    pub fn pages(&self) -> u32 {
        (self.buf.len() / WASM_PAGE) as u32
    }

    /// `memory.grow`: old page count, or -1.
    pub fn grow(&mut self, delta: u32) -> i32 {
        let old = self.pages();
        let Some(new) = old.checked_add(delta).filter(|&n| n <= self.max_pages) else {
            return -1;
        };
        if self.resize(new as usize * WASM_PAGE) {
            old as i32
        } else {
            -1
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.buf
    }

    pub fn stats(&self) -> MemoryStats {
        MemoryStats {
            pages: self.pages(),
            host_allocations: self.host_allocations,
            capacity_bytes: self.buf.capacity(),
        }
    }
}
