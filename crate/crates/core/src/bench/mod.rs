//! Record-store micro-benchmarks: insert, sequential read and random read
//! over fixed-size slots, on four backends, with CSV output and a cost
//! breakdown for random reads.
//!
//! A slot is `id: u64 LE ‖ blob`, stored at `id * slot_size`. Blobs come
//! from the generator in [`prng`], so record bytes are reproducible from
//! the seed alone.

mod backend;
mod csv_io;
pub mod prng;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pfs::StoreCounters;
use crate::sim::{Accounting, Bucket, CostModel, ProfileError};

pub use backend::{store_path, BackendKind};
pub use csv_io::{emit_csv, parse_csv, read_csv_file, write_csv_file, CSV_HEADER};

use backend::Store;

/// Stream tag separating random-read draws from record blobs.
const DRAW_STREAM: u64 = 0x5241_4E44_5245_4144;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid workload: {0}")]
    Spec(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("store error: {0}")]
    Store(String),
    #[error("record {0} does not match its expected contents")]
    Corruption(u64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<Box<dyn std::error::Error + Send + Sync>> for BenchError {
    fn from(e: Box<dyn std::error::Error + Send + Sync>) -> Self {
        BenchError::Store(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Insert,
    SeqRead,
    RandRead,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Insert => "insert",
            Op::SeqRead => "seq_read",
            Op::RandRead => "rand_read",
        }
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "insert" => Ok(Op::Insert),
            "seq_read" | "seq-read" => Ok(Op::SeqRead),
            "rand_read" | "rand-read" => Ok(Op::RandRead),
            _ => Err(format!("unknown operation `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub record_blob_size: usize,
    pub start_records: u64,
    pub step: u64,
    pub max_records: u64,
    pub seed: u64,
    pub backend: BackendKind,
    /// Profile name (`paper`, `roundtrip-4ms`, `off`) or a path to a TOML file.
    pub cost_profile: String,
    /// Overrides the profile's secure-memory limit.
    pub epc_limit: Option<u64>,
    pub cache_capacity: Option<usize>,
    /// Random draws per sample point; defaults to the record count there.
    pub reads_per_step: Option<u64>,
    /// Where file-backed stores live; a temporary directory otherwise.
    pub dir: Option<PathBuf>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            record_blob_size: 1024,
            start_records: 1000,
            step: 1000,
            max_records: 16_000,
            seed: 42,
            backend: BackendKind::ProtectedBaseline,
            cost_profile: "paper".into(),
            epc_limit: None,
            cache_capacity: None,
            reads_per_step: None,
            dir: None,
        }
    }
}

impl WorkloadSpec {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let spec: WorkloadSpec = toml::from_str(src)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn slot_size(&self) -> usize {
        8 + self.record_blob_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Spec(m.to_string()));
        if self.start_records == 0 {
            return bad("start_records must be at least 1");
        }
        if self.step == 0 {
            return bad("step must be at least 1");
        }
        if self.max_records < self.start_records {
            return bad("max_records must be >= start_records");
        }
        if self.cache_capacity.is_some_and(|c| c < 2) {
            return bad("cache_capacity must be at least 2");
        }
        Ok(())
    }

    /// Record counts at which samples are taken: start, start+step, ... up
    /// to and including max.
    pub fn points(&self) -> Vec<u64> {
        let mut pts: Vec<u64> = (self.start_records..=self.max_records)
            .step_by(self.step as usize)
            .collect();
        if pts.last() != Some(&self.max_records) {
            pts.push(self.max_records);
        }
        pts
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        let model = CostModel::named(&self.cost_profile)?;
        Ok(match self.epc_limit {
            Some(limit) => model.with_epc_limit(limit),
            None => model,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchSample {
    pub records: u64,
    pub op: Op,
    pub backend: BackendKind,
    pub wall_ns: u64,
    pub simulated_ns: u64,
    pub counters: StoreCounters,
    /// Record operations the sample covers.
    pub ops: u64,
}

impl BenchSample {
    pub fn simulated_ns_per_op(&self) -> f64 {
        if self.ops == 0 {
            0.0
        } else {
            self.simulated_ns as f64 / self.ops as f64
        }
    }
}

/// Encodes record `id` into `slot`.
pub fn fill_record(seed: u64, id: u64, slot: &mut [u8]) {
    slot[..8].copy_from_slice(&id.to_le_bytes());
    prng::record_blob(seed, id, &mut slot[8..]);
}

/// Ids drawn by a random-read sample at `records`.
pub fn draw_ids(seed: u64, records: u64, draws: u64) -> Vec<u64> {
    let mut g = prng::XorShift64Star::new(prng::mix(seed ^ DRAW_STREAM, records));
    (0..draws).map(|_| g.below(records)).collect()
}

fn nanos(d: Duration) -> u64 {
    d.as_nanos().min(u128::from(u64::MAX)) as u64
}

/// A store being driven through a workload.
struct Run {
    spec: WorkloadSpec,
    store: Store,
    records: u64,
    slot: Vec<u8>,
    expect: Vec<u8>,
    _scratch: Option<tempfile::TempDir>,
}

impl Run {
    fn new(spec: &WorkloadSpec) -> Result<Self> {
        spec.validate()?;
        let model = spec.cost_model()?;
        let (dir, scratch) = match &spec.dir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                (d.clone(), None)
            }
            None => {
                let t = tempfile::Builder::new().prefix("twinehost-bench").tempdir()?;
                (t.path().to_path_buf(), Some(t))
            }
        };
        let store = Store::create(spec.backend, &dir, model, spec.cache_capacity)?;
        Ok(Run {
            spec: spec.clone(),
            store,
            records: 0,
            slot: vec![0; spec.slot_size()],
            expect: vec![0; spec.slot_size()],
            _scratch: scratch,
        })
    }

    fn insert_until(&mut self, n: u64) -> Result<()> {
        while self.records < n {
            fill_record(self.spec.seed, self.records, &mut self.slot);
            self.store.append(&self.slot)?;
            self.records += 1;
        }
        self.store.flush()?;
        Ok(())
    }

    fn read_verified(&mut self, id: u64) -> Result<()> {
        let offset = id * self.spec.slot_size() as u64;
        self.store.read_at(offset, &mut self.slot)?;
        fill_record(self.spec.seed, id, &mut self.expect);
        if self.slot != self.expect {
            return Err(BenchError::Corruption(id));
        }
        Ok(())
    }

    /// Runs `body` on a cold store and returns the sample it produced.
    fn measure(&mut self, op: Op, body: impl FnOnce(&mut Self) -> Result<u64>) -> Result<BenchSample> {
        self.store.reopen()?;
        let (acct0, ctr0) = (self.store.accounting(), self.store.counters());
        let t0 = Instant::now();
        let ops = body(self)?;
        let wall = t0.elapsed();
        Ok(BenchSample {
            records: self.records,
            op,
            backend: self.spec.backend,
            wall_ns: nanos(wall),
            simulated_ns: self.store.accounting().since(&acct0).total_ns(),
            counters: self.store.counters().since(&ctr0),
            ops,
        })
    }

    fn draws(&self, records: u64) -> u64 {
        self.spec.reads_per_step.unwrap_or(records)
    }

    fn rand_read(&mut self) -> Result<BenchSample> {
        let ids = draw_ids(self.spec.seed, self.records, self.draws(self.records));
        self.measure(Op::RandRead, |r| {
            for &id in &ids {
                r.read_verified(id)?;
            }
            Ok(ids.len() as u64)
        })
    }

    fn finish(mut self) -> Result<()> {
        self.store.close()?;
        Ok(())
    }
}

/// Appends records into a fresh store, flushing at every sample point.
/// Each sample is cumulative: the cost of building the store from empty to
/// `records` records.
pub fn bench_insert(spec: &WorkloadSpec) -> Result<Vec<BenchSample>> {
    let mut run = Run::new(spec)?;
    let start = Instant::now();
    let mut samples = Vec::new();
    for n in spec.points() {
        run.insert_until(n)?;
        samples.push(BenchSample {
            records: n,
            op: Op::Insert,
            backend: spec.backend,
            wall_ns: nanos(start.elapsed()),
            simulated_ns: run.store.accounting().total_ns(),
            counters: run.store.counters(),
            ops: n,
        });
    }
    run.finish()?;
    Ok(samples)
}

/// At every point: reads all records in insertion order from a cold store.
pub fn bench_seq_read(spec: &WorkloadSpec) -> Result<Vec<BenchSample>> {
    let mut run = Run::new(spec)?;
    let mut samples = Vec::new();
    for n in spec.points() {
        run.insert_until(n)?;
        samples.push(run.measure(Op::SeqRead, |r| {
            for id in 0..n {
                r.read_verified(id)?;
            }
            Ok(n)
        })?);
    }
    run.finish()?;
    Ok(samples)
}

/// At every point: uniformly random single-record reads from a cold store.
pub fn bench_rand_read(spec: &WorkloadSpec) -> Result<Vec<BenchSample>> {
    let mut run = Run::new(spec)?;
    let mut samples = Vec::new();
    for n in spec.points() {
        run.insert_until(n)?;
        samples.push(run.rand_read()?);
    }
    run.finish()?;
    Ok(samples)
}

pub fn run_op(op: Op, spec: &WorkloadSpec) -> Result<Vec<BenchSample>> {
    match op {
        Op::Insert => bench_insert(spec),
        Op::SeqRead => bench_seq_read(spec),
        Op::RandRead => bench_rand_read(spec),
    }
}

/// Where the time of one random-read run went.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakdown {
    pub backend: BackendKind,
    pub cost_profile: String,
    pub records: u64,
    pub ops: u64,
    pub simulated_total_ns: f64,
    /// Buckets: clear, boundary (crossings plus the secure copy-in that
    /// each crossing performs), untrusted_read, paging, app.
    pub simulated_ns: BTreeMap<String, f64>,
    pub simulated_share: BTreeMap<String, f64>,
    /// Fraction of the boundary bucket spent copying ciphertext in.
    pub boundary_copy_share: f64,
    pub wall_total_ns: u64,
    pub wall_ns: BTreeMap<String, u64>,
    pub wall_share: BTreeMap<String, f64>,
    pub counters: StoreCounters,
    pub crossings: u64,
    pub page_faults: u64,
}

impl Breakdown {
    pub fn share(&self, bucket: &str) -> f64 {
        self.simulated_share.get(bucket).copied().unwrap_or(0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("breakdown serializes")
    }

    fn from_run(spec: &WorkloadSpec, sample: &BenchSample, acct: &Accounting, wall: crate::pfs::WallProfile) -> Self {
        let ns = |b: Bucket| acct.bucket_ns(b);
        let sim: BTreeMap<String, f64> = [
            ("clear", ns(Bucket::Clear)),
            ("boundary", ns(Bucket::Boundary) + ns(Bucket::SecureWrite)),
            ("untrusted_read", ns(Bucket::UntrustedRead)),
            ("paging", ns(Bucket::Paging)),
            ("app", ns(Bucket::App)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let total: f64 = sim.values().sum();
        let ratio = |part: f64, whole: f64| if whole > 0.0 { part / whole } else { 0.0 };
        let simulated_share = sim.iter().map(|(k, &v)| (k.clone(), ratio(v, total))).collect();

        let wall_total = sample.wall_ns;
        let parts = [
            ("clear", nanos(wall.clear)),
            ("copy_in", nanos(wall.copy_in)),
            ("host_io", nanos(wall.host_io)),
            ("crypto", nanos(wall.crypto)),
        ];
        let measured: u64 = parts.iter().map(|p| p.1).sum();
        let mut wall_ns: BTreeMap<String, u64> = parts.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        wall_ns.insert("other".into(), wall_total.saturating_sub(measured));
        let wall_share = wall_ns
            .iter()
            .map(|(k, &v)| (k.clone(), ratio(v as f64, wall_total as f64)))
            .collect();

        Breakdown {
            backend: spec.backend,
            cost_profile: spec.cost_profile.clone(),
            records: sample.records,
            ops: sample.ops,
            simulated_total_ns: total,
            boundary_copy_share: ratio(ns(Bucket::SecureWrite), sim["boundary"]),
            simulated_ns: sim,
            simulated_share,
            wall_total_ns: wall_total,
            wall_ns,
            wall_share,
            counters: sample.counters,
            crossings: acct.crossings,
            page_faults: acct.page_faults,
        }
    }
}

/// One random-read run at `max_records` with phase timers enabled.
pub fn bench_profile(spec: &WorkloadSpec) -> Result<Breakdown> {
    let mut run = Run::new(spec)?;
    run.insert_until(spec.max_records)?;
    run.store.set_wall_profiling(true);
    let sample = run.rand_read()?;
    let acct = run.store.accounting();
    let wall = run.store.wall_profile();
    run.finish()?;
    Ok(Breakdown::from_run(spec, &sample, &acct, wall))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_include_max() {
        let spec = WorkloadSpec { max_records: 4000, ..Default::default() };
        assert_eq!(spec.points(), [1000, 2000, 3000, 4000]);
        let spec = WorkloadSpec { max_records: 2500, ..Default::default() };
        assert_eq!(spec.points(), [1000, 2000, 2500]);
        let spec = WorkloadSpec { start_records: 7, max_records: 7, ..Default::default() };
        assert_eq!(spec.points(), [7]);
    }

    #[test]
    fn spec_validation() {
        assert!(WorkloadSpec { max_records: 10, ..Default::default() }.validate().is_err());
        assert!(WorkloadSpec { step: 0, ..Default::default() }.validate().is_err());
        assert!(WorkloadSpec { cache_capacity: Some(1), ..Default::default() }.validate().is_err());
        assert!(WorkloadSpec::from_toml_str("max_records = 5000\nbackend = \"in_memory\"\n").is_ok());
        assert!(WorkloadSpec::from_toml_str("max_recs = 5000\n").is_err());
    }

    #[test]
    fn record_layout() {
        let mut slot = vec![0; 1032];
        fill_record(1, 0x0102, &mut slot);
        assert_eq!(&slot[..8], &[2, 1, 0, 0, 0, 0, 0, 0]);
        let mut again = vec![0; 1032];
        fill_record(1, 0x0102, &mut again);
        assert_eq!(slot, again);
        fill_record(2, 0x0102, &mut again);
        assert_ne!(slot, again);
    }
}
