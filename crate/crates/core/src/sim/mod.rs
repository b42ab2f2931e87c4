//! Deterministic cost model for the enclave boundary and secure-memory
//! paging.
//!
//! Instrumentation hooks in the protected store, the WASI bridge and the
//! benchmark harness charge simulated time into named buckets. Nothing here
//! measures hardware: the numbers come from a [`CostModel`] profile.
//!
//! Internally every bucket accumulates integer picoseconds so that charges
//! add up exactly regardless of order.

mod epc;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use epc::PAGE_SIZE;
use epc::EpcModel;

/// Cost of an SGX transition: 13,100 cycles at 3.8 GHz.
pub const CYCLES_CROSSING_NS: f64 = 13_100.0 / 3.8;
/// Usable enclave page cache on the reference machine.
pub const DEFAULT_EPC_LIMIT: u64 = 93 << 20;

const PAPER_PROFILE: &str = include_str!("../../profiles/paper.toml");
const ROUNDTRIP_PROFILE: &str = include_str!("../../profiles/roundtrip-4ms.toml");

pub const PROFILE_NAMES: &[&str] = &["paper", "roundtrip-4ms", "off"];

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("unknown cost profile `{0}` (known: paper, roundtrip-4ms, off, or a path to a .toml file)")]
    Unknown(String),
    #[error("cannot read cost profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed cost profile: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cost profile field `{0}` must be finite and non-negative")]
    Negative(&'static str),
}

/// Simulated costs. Profiles are key-value TOML files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    #[serde(default)]
    pub name: String,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    /// One-way boundary crossing; a call out and back costs twice this.
    pub crossing_ns: f64,
    /// Copying untrusted bytes into secure memory.
    pub secure_write_ns_per_byte: f64,
    /// Zeroing secure memory.
    pub clear_ns_per_byte: f64,
    /// Host-side file reads and writes.
    pub untrusted_io_ns_per_byte: f64,
    /// Application work per record operation.
    pub app_op_ns: f64,
    pub epc_limit: u64,
    pub page_fault_ns: f64,
}

fn enabled_default() -> bool {
    true
}

impl CostModel {
    pub fn disabled() -> Self {
        CostModel {
            name: "off".into(),
            enabled: false,
            crossing_ns: 0.0,
            secure_write_ns_per_byte: 0.0,
            clear_ns_per_byte: 0.0,
            untrusted_io_ns_per_byte: 0.0,
            app_op_ns: 0.0,
            epc_limit: DEFAULT_EPC_LIMIT,
            page_fault_ns: 0.0,
        }
    }

    pub fn paper() -> Self {
        Self::from_toml_str(PAPER_PROFILE).expect("built-in profile parses")
    }

    pub fn from_toml_str(src: &str) -> Result<Self, ProfileError> {
        let model: CostModel = toml::from_str(src)?;
        model.validate()?;
        Ok(model)
    }

    /// Resolves a built-in profile name, `off`, or a path to a TOML file.
    pub fn named(name: &str) -> Result<Self, ProfileError> {
        match name {
            "paper" => Ok(Self::paper()),
            "roundtrip-4ms" => Self::from_toml_str(ROUNDTRIP_PROFILE),
            "off" | "none" | "disabled" => Ok(Self::disabled()),
            other if other.ends_with(".toml") => Self::load(Path::new(other)),
            other => Err(ProfileError::Unknown(other.to_string())),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn with_epc_limit(mut self, bytes: u64) -> Self {
        self.epc_limit = bytes;
        self
    }

    fn validate(&self) -> Result<(), ProfileError> {
        let fields = [
            ("crossing_ns", self.crossing_ns),
            ("secure_write_ns_per_byte", self.secure_write_ns_per_byte),
            ("clear_ns_per_byte", self.clear_ns_per_byte),
            ("untrusted_io_ns_per_byte", self.untrusted_io_ns_per_byte),
            ("app_op_ns", self.app_op_ns),
            ("page_fault_ns", self.page_fault_ns),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ProfileError::Negative(name));
            }
        }
        Ok(())
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self::disabled()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Ocall,
    Ecall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Boundary,
    Clear,
    SecureWrite,
    Paging,
    UntrustedRead,
    App,
}

impl Bucket {
    pub const ALL: [Bucket; 6] = [
        Bucket::Boundary,
        Bucket::Clear,
        Bucket::SecureWrite,
        Bucket::Paging,
        Bucket::UntrustedRead,
        Bucket::App,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Bucket::Boundary => "boundary",
            Bucket::Clear => "clear",
            Bucket::SecureWrite => "secure_write",
            Bucket::Paging => "paging",
            Bucket::UntrustedRead => "untrusted_read",
            Bucket::App => "app",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Snapshot of simulated charges and counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Accounting {
    pub crossings: u64,
    /// Crossings caused by passthrough (untrusted POSIX) calls.
    pub passthrough_crossings: u64,
    pub page_faults: u64,
    buckets_ps: [u64; 6],
    pub resident_bytes: u64,
    pub peak_resident: u64,
}

impl Accounting {
    pub fn bucket_ps(&self, bucket: Bucket) -> u64 {
        self.buckets_ps[bucket as usize]
    }

    pub fn bucket_ns(&self, bucket: Bucket) -> f64 {
        self.bucket_ps(bucket) as f64 / 1000.0
    }

    pub fn total_ps(&self) -> u64 {
        self.buckets_ps.iter().sum()
    }

    /// Simulated total, truncated to whole nanoseconds.
    pub fn total_ns(&self) -> u64 {
        self.total_ps() / 1000
    }

    fn add(&mut self, bucket: Bucket, ps: u64) {
        self.buckets_ps[bucket as usize] += ps;
    }

    /// Explicit aggregation of two independent accountings.
    pub fn merge(&mut self, other: &Accounting) {
        self.crossings += other.crossings;
        self.passthrough_crossings += other.passthrough_crossings;
        self.page_faults += other.page_faults;
        for (a, b) in self.buckets_ps.iter_mut().zip(other.buckets_ps) {
            *a += b;
        }
        self.resident_bytes += other.resident_bytes;
        self.peak_resident = self.peak_resident.max(other.peak_resident);
    }

    /// Charges accumulated since `earlier`; resident figures are taken from `self`.
    pub fn since(&self, earlier: &Accounting) -> Accounting {
        let mut out = self.clone();
        out.crossings -= earlier.crossings;
        out.passthrough_crossings -= earlier.passthrough_crossings;
        out.page_faults -= earlier.page_faults;
        for (a, b) in out.buckets_ps.iter_mut().zip(earlier.buckets_ps) {
            *a -= b;
        }
        out
    }

    pub fn to_report(&self) -> AccountingReport {
        AccountingReport {
            crossings: self.crossings,
            passthrough_crossings: self.passthrough_crossings,
            page_faults: self.page_faults,
            resident_bytes: self.resident_bytes,
            peak_resident: self.peak_resident,
            total_ns: self.total_ps() as f64 / 1000.0,
            simulated_ns: Bucket::ALL
                .iter()
                .map(|b| (b.name().to_string(), self.bucket_ns(*b)))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_report()).expect("report serializes")
    }

    /// Two-column `metric,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("crossings,{}\n", self.crossings));
        out.push_str(&format!("passthrough_crossings,{}\n", self.passthrough_crossings));
        out.push_str(&format!("page_faults,{}\n", self.page_faults));
        out.push_str(&format!("resident_bytes,{}\n", self.resident_bytes));
        out.push_str(&format!("peak_resident,{}\n", self.peak_resident));
        for b in Bucket::ALL {
            out.push_str(&format!("{}_ns,{}\n", b.name(), self.bucket_ns(b)));
        }
        out.push_str(&format!("total_ns,{}\n", self.total_ps() as f64 / 1000.0));
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AccountingReport {
    pub crossings: u64,
    pub passthrough_crossings: u64,
    pub page_faults: u64,
    pub resident_bytes: u64,
    pub peak_resident: u64,
    pub total_ns: f64,
    pub simulated_ns: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct CostsPs {
    crossing: u64,
    secure_write: u64,
    clear: u64,
    untrusted_io: u64,
    app_op: u64,
    page_fault: u64,
}

fn ps(ns: f64) -> u64 {
    (ns * 1000.0).round() as u64
}

impl CostsPs {
    fn from_model(m: &CostModel) -> Self {
        if !m.enabled {
            return CostsPs::default();
        }
        CostsPs {
            crossing: ps(m.crossing_ns),
            secure_write: ps(m.secure_write_ns_per_byte),
            clear: ps(m.clear_ns_per_byte),
            untrusted_io: ps(m.untrusted_io_ns_per_byte),
            app_op: ps(m.app_op_ns),
            page_fault: ps(m.page_fault_ns),
        }
    }
}

/// One accounting context (a file handle, a WASI context, a benchmark run).
#[derive(Debug, Clone)]
pub struct Simulator {
    model: CostModel,
    costs: CostsPs,
    acct: Accounting,
    epc: EpcModel,
}

impl Default for Simulator {
    fn default() -> Self {
        Self::new(CostModel::disabled())
    }
}

impl Simulator {
    pub fn new(model: CostModel) -> Self {
        let mut sim = Simulator {
            costs: CostsPs::default(),
            epc: EpcModel::new(model.epc_limit),
            model: CostModel::disabled(),
            acct: Accounting::default(),
        };
        sim.configure(model);
        sim
    }

    /// Activates `model` for subsequent charges. Accumulated charges and
    /// resident state are kept.
    pub fn configure(&mut self, model: CostModel) {
        if model.epc_limit != self.model.epc_limit {
            self.epc = EpcModel::new(model.epc_limit);
        }
        self.costs = CostsPs::from_model(&model);
        self.model = model;
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    /// One call out of the enclave and back.
    pub fn crossing(&mut self, _direction: Direction) {
        self.acct.crossings += 1;
        self.acct.add(Bucket::Boundary, 2 * self.costs.crossing);
    }

    pub fn passthrough_crossing(&mut self) {
        self.acct.passthrough_crossings += 1;
        self.crossing(Direction::Ocall);
    }

    /// Charges clearing and secure copies and moves the resident size.
    /// Newly allocated pages beyond the secure-memory limit fault.
    pub fn mem(&mut self, bytes_cleared: u64, bytes_secure_written: u64, resident_delta: i64) {
        self.acct.add(Bucket::Clear, bytes_cleared * self.costs.clear);
        self.acct
            .add(Bucket::SecureWrite, bytes_secure_written * self.costs.secure_write);
        if resident_delta == 0 {
            return;
        }
        let old = self.acct.resident_bytes;
        let new = if resident_delta >= 0 {
            old.saturating_add(resident_delta as u64)
        } else {
            let dec = resident_delta.unsigned_abs();
            if dec > old {
                log::warn!("resident size would drop below zero ({old} - {dec}); clamping");
            }
            old.saturating_sub(dec)
        };
        let (old_pages, new_pages) = (old.div_ceil(PAGE_SIZE), new.div_ceil(PAGE_SIZE));
        if new_pages > old_pages {
            for page in old_pages..new_pages {
                if self.epc.allocate(page) {
                    self.fault();
                }
            }
        } else {
            for page in new_pages..old_pages {
                self.epc.release(page);
            }
        }
        self.acct.resident_bytes = new;
        self.acct.peak_resident = self.acct.peak_resident.max(new);
    }

    /// Access to `len` bytes at `offset` of the resident region.
    pub fn touch(&mut self, offset: u64, len: u64) {
        if len == 0 {
            return;
        }
        let first = offset / PAGE_SIZE;
        let last = (offset + len - 1) / PAGE_SIZE;
        for page in first..=last {
            if self.epc.touch(page) {
                self.fault();
            }
        }
    }

    fn fault(&mut self) {
        self.acct.page_faults += 1;
        self.acct.add(Bucket::Paging, self.costs.page_fault);
    }

    pub fn untrusted_io(&mut self, bytes: u64) {
        self.acct
            .add(Bucket::UntrustedRead, bytes * self.costs.untrusted_io);
    }

    pub fn app(&mut self, ops: u64) {
        self.acct.add(Bucket::App, ops * self.costs.app_op);
    }

    pub fn report(&self) -> Accounting {
        self.acct.clone()
    }

    /// Zeroes charges and counters but keeps the resident state.
    pub fn clear_charges(&mut self) {
        let (resident, epc) = (self.acct.resident_bytes, std::mem::take(&mut self.epc));
        self.acct = Accounting {
            resident_bytes: resident,
            peak_resident: resident,
            ..Default::default()
        };
        self.epc = epc;
    }

    /// Clears accumulated charges and the resident state.
    pub fn reset(&mut self) {
        self.acct = Accounting::default();
        self.epc = EpcModel::new(self.model.epc_limit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CostModel {
        CostModel {
            name: "test".into(),
            enabled: true,
            crossing_ns: 100.0,
            secure_write_ns_per_byte: 0.5,
            clear_ns_per_byte: 0.25,
            untrusted_io_ns_per_byte: 1.0,
            app_op_ns: 10.0,
            epc_limit: 93 << 20,
            page_fault_ns: 12_000.0,
        }
    }

    #[test]
    fn nothing_charged_means_all_zero() {
        let sim = Simulator::new(CostModel::paper());
        assert_eq!(sim.report(), Accounting::default());
    }

    #[test]
    fn paper_defaults_come_from_reference_constants() {
        let m = CostModel::paper();
        assert!((m.crossing_ns - 3447.0).abs() < 1.0, "{}", m.crossing_ns);
        assert!((CYCLES_CROSSING_NS - 3447.37).abs() < 0.01);
        assert_eq!(m.epc_limit, 93 * 1024 * 1024);
        assert_eq!(m.page_fault_ns, 12_000.0);
    }

    #[test]
    fn disabled_model_counts_but_charges_nothing() {
        let mut sim = Simulator::new(CostModel::disabled());
        sim.crossing(Direction::Ocall);
        sim.mem(8192, 4096, 1 << 20);
        sim.untrusted_io(100);
        sim.app(3);
        let r = sim.report();
        assert_eq!(r.crossings, 1);
        assert_eq!(r.total_ps(), 0);
        assert_eq!(r.resident_bytes, 1 << 20);
    }

    #[test]
    fn crossing_charges_round_trip() {
        let mut sim = Simulator::new(model());
        sim.passthrough_crossing();
        let r = sim.report();
        assert_eq!(r.crossings, 1);
        assert_eq!(r.passthrough_crossings, 1);
        assert_eq!(r.bucket_ps(Bucket::Boundary), 200_000);
    }

    #[test]
    fn clear_charge_is_linear() {
        let mut sim = Simulator::new(model());
        sim.mem(8192, 0, 0);
        assert_eq!(sim.report().bucket_ns(Bucket::Clear), 8192.0 * 0.25);
    }

    #[test]
    fn crossing_the_epc_limit_pages_only_the_excess() {
        let mut sim = Simulator::new(model());
        sim.mem(0, 0, 92 << 20);
        assert_eq!(sim.report().page_faults, 0);
        sim.mem(0, 0, 4 << 20);
        let r = sim.report();
        assert_eq!(r.page_faults, 768);
        assert_eq!(r.bucket_ns(Bucket::Paging), 768.0 * 12_000.0);
        assert_eq!(r.resident_bytes, 96 << 20);
    }

    #[test]
    fn zero_epc_limit_charges_every_page() {
        let mut sim = Simulator::new(model().tap(|m| m.epc_limit = 0));
        sim.mem(0, 0, 10 * 4096);
        sim.touch(0, 4096 * 3);
        assert_eq!(sim.report().page_faults, 13);
    }

    #[test]
    fn shrinking_below_zero_clamps() {
        let mut sim = Simulator::new(model());
        sim.mem(0, 0, 4096);
        sim.mem(0, 0, -10_000);
        assert_eq!(sim.report().resident_bytes, 0);
    }

    #[test]
    fn charges_are_additive_across_runs() {
        let run_a = |sim: &mut Simulator| {
            sim.crossing(Direction::Ocall);
            sim.mem(1000, 333, 0);
            sim.app(7);
        };
        let run_b = |sim: &mut Simulator| {
            sim.crossing(Direction::Ecall);
            sim.crossing(Direction::Ocall);
            sim.untrusted_io(4124);
            sim.mem(12, 1, 0);
        };
        let mut both = Simulator::new(model());
        run_a(&mut both);
        run_b(&mut both);
        let mut a = Simulator::new(model());
        run_a(&mut a);
        let mut b = Simulator::new(model());
        run_b(&mut b);
        let mut sum = a.report();
        sum.merge(&b.report());
        assert_eq!(sum, both.report());
        assert_eq!(both.report().since(&a.report()), b.report());
    }

    #[test]
    fn knee_is_monotone_in_working_set() {
        // random touches over a working set W with a 64-page limit
        let per_op = |pages: u64| {
            let mut sim = Simulator::new(model().tap(|m| m.epc_limit = 64 * PAGE_SIZE));
            sim.mem(0, 0, (pages * PAGE_SIZE) as i64);
            let before = sim.report();
            let mut x = 0x1234_5678u64;
            for _ in 0..5000 {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                sim.touch((x % pages) * PAGE_SIZE, 1);
            }
            sim.report().since(&before).total_ps() as f64 / 5000.0
        };
        let costs: Vec<f64> = [16, 32, 64, 80, 128, 256].iter().map(|p| per_op(*p)).collect();
        assert!(costs.windows(2).all(|w| w[1] >= w[0]), "{costs:?}");
        assert_eq!(costs[2], 0.0);
        assert!(costs[3] > costs[2]);
    }

    #[test]
    fn profiles_parse_and_reject_negative_values() {
        for name in PROFILE_NAMES {
            CostModel::named(name).unwrap();
        }
        assert!(CostModel::named("nope").is_err());
        let bad = "crossing_ns = -1.0\nsecure_write_ns_per_byte = 0.0\nclear_ns_per_byte = 0.0\nuntrusted_io_ns_per_byte = 0.0\napp_op_ns = 0.0\nepc_limit = 0\npage_fault_ns = 0.0\n";
        assert!(matches!(CostModel::from_toml_str(bad), Err(ProfileError::Negative("crossing_ns"))));
    }

    trait Tap: Sized {
        fn tap(self, f: impl FnOnce(&mut Self)) -> Self;
    }
    impl Tap for CostModel {
        fn tap(mut self, f: impl FnOnce(&mut Self)) -> Self {
            f(&mut self);
            self
        }
    }
}
