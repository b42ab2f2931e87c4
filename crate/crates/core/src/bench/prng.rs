//! Portable record generator.
//!
//! * `splitmix64(x)`: `z = x + 0x9E3779B97F4A7C15`,
//!   `z = (z ^ z>>30) * 0xBF58476D1CE4E5B9`, `z = (z ^ z>>27) * 0x94D049BB133111EB`,
//!   result `z ^ z>>31` (all wrapping).
//! * `xorshift64*`: `x ^= x>>12; x ^= x<<25; x ^= x>>27`, output
//!   `x * 0x2545F4914F6CDD1D`. A zero seed is replaced by `0x9E3779B97F4A7C15`.
//! * Blob of record `id`: xorshift64* seeded with
//!   `splitmix64(seed ^ splitmix64(id))`, outputs written little-endian in
//!   order, the last output truncated.
//! * Draws in `[0, n)` use Lemire's multiply-shift with rejection.

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        XorShift64Star {
            state: if seed == 0 { 0x9E37_79B9_7F4A_7C15 } else { seed },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn fill(&mut self, buf: &mut [u8]) {
        for chunk in buf.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }

    /// Uniform in `[0, n)`; `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
            }
        }
        (m >> 64) as u64
    }
}

/// Blob bytes of record `id`.
pub fn record_blob(seed: u64, id: u64, buf: &mut [u8]) {
    XorShift64Star::new(mix(seed, id)).fill(buf);
}
