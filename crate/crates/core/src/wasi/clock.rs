/// Keeps monotonic time strictly increasing whatever the host reports.
#[derive(Debug, Clone, Copy, Default)]
pub struct MonotonicGuard {
    last: u64,
}

impl MonotonicGuard {
    pub fn next(&mut self, host_ns: u64) -> u64 {
        let v = host_ns.max(self.last.saturating_add(1));
        self.last = v;
        v
    }

    pub fn last(&self) -> u64 {
        self.last
    }
}

pub const REALTIME: u32 = 0;
pub const MONOTONIC: u32 = 1;
