use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::pfs::{KeyPolicy, ProtectedFile, StoreCounters, Variant, WallProfile, Whence, DEFAULT_CACHE_CAPACITY};
use crate::sim::{Accounting, CostModel, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    PlainFile,
    ProtectedBaseline,
    ProtectedOptimized,
    InMemory,
}

impl BackendKind {
    pub const ALL: [BackendKind; 4] = [
        BackendKind::PlainFile,
        BackendKind::ProtectedBaseline,
        BackendKind::ProtectedOptimized,
        BackendKind::InMemory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::PlainFile => "plain_file",
            BackendKind::ProtectedBaseline => "protected_baseline",
            BackendKind::ProtectedOptimized => "protected_optimized",
            BackendKind::InMemory => "in_memory",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            BackendKind::ProtectedBaseline => Some(Variant::Baseline),
            BackendKind::ProtectedOptimized => Some(Variant::Optimized),
            _ => None,
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        BackendKind::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown backend `{s}` (plain_file, protected_baseline, protected_optimized, in_memory)"))
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed key for benchmark stores; the files are scratch data.
const BENCH_SECRET: [u8; 32] = *b"twinehost-bench-master-secret-00";

pub(crate) fn bench_key() -> KeyPolicy {
    KeyPolicy::Derived { master_secret: BENCH_SECRET }
}

/// File a backend keeps its records in when run in `dir`.
pub fn store_path(dir: &Path, kind: BackendKind) -> PathBuf {
    dir.join(format!("records-{}.db", kind.name()))
}

/// Byte-addressed record store under test. Offsets only ever grow by
/// appending at the current end.
pub(crate) enum Store {
    Plain { path: PathBuf, file: File, sim: Simulator },
    Protected { path: PathBuf, file: Box<ProtectedFile>, model: CostModel, cache: usize, wall: bool },
    Memory { bytes: Vec<u8>, sim: Simulator },
}

pub(crate) type StoreResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

impl Store {
    pub fn create(kind: BackendKind, dir: &Path, model: CostModel, cache: Option<usize>) -> StoreResult<Store> {
        let path = store_path(dir, kind);
        Ok(match kind {
            BackendKind::PlainFile => {
                let file = OpenOptions::new().read(true).write(true).create(true).truncate(true).open(&path)?;
                Store::Plain { path, file, sim: Simulator::new(model) }
            }
            BackendKind::ProtectedBaseline | BackendKind::ProtectedOptimized => {
                let variant = kind.variant().expect("protected");
                let cache = cache.unwrap_or(DEFAULT_CACHE_CAPACITY);
                let mut file = ProtectedFile::create_forced(&path, &bench_key(), variant, cache)?;
                file.set_cost_model(model.clone());
                Store::Protected { path, file: Box::new(file), model, cache, wall: false }
            }
            BackendKind::InMemory => Store::Memory { bytes: Vec::new(), sim: Simulator::new(model) },
        })
    }

    pub fn append(&mut self, data: &[u8]) -> StoreResult<()> {
        match self {
            Store::Plain { file, sim, .. } => {
                file.seek(SeekFrom::End(0))?;
                file.write_all(data)?;
                sim.untrusted_io(data.len() as u64);
            }
            Store::Protected { file, .. } => {
                file.seek(0, Whence::End)?;
                file.write(data)?;
            }
            Store::Memory { bytes, sim } => {
                let at = bytes.len() as u64;
                bytes.extend_from_slice(data);
                sim.mem(0, 0, data.len() as i64);
                sim.touch(at, data.len() as u64);
            }
        }
        self.sim_mut().app(1);
        Ok(())
    }

    pub fn read_at(&mut self, offset: u64, buf: &mut [u8]) -> StoreResult<()> {
        match self {
            Store::Plain { file, sim, .. } => {
                file.seek(SeekFrom::Start(offset))?;
                file.read_exact(buf)?;
                sim.untrusted_io(buf.len() as u64);
            }
            Store::Protected { file, .. } => {
                file.seek(offset as i64, Whence::Set)?;
                let mut done = 0;
                while done < buf.len() {
                    match file.read(&mut buf[done..])? {
                        0 => return Err("short read from protected store".into()),
                        n => done += n,
                    }
                }
            }
            Store::Memory { bytes, sim } => {
                let end = offset as usize + buf.len();
                let src = bytes.get(offset as usize..end).ok_or("read past end of in-memory store")?;
                buf.copy_from_slice(src);
                sim.touch(offset, buf.len() as u64);
            }
        }
        self.sim_mut().app(1);
        Ok(())
    }

    pub fn flush(&mut self) -> StoreResult<()> {
        match self {
            Store::Plain { file, .. } => file.flush()?,
            Store::Protected { file, .. } => file.flush()?,
            Store::Memory { .. } => {}
        }
        Ok(())
    }

    /// Closes and reopens file-backed stores so the next phase starts with
    /// a cold cache. Charges and counters restart from zero.
    pub fn reopen(&mut self) -> StoreResult<()> {
        match self {
            Store::Plain { path, file, sim } => {
                file.flush()?;
                *file = OpenOptions::new().read(true).write(true).open(&*path)?;
                sim.clear_charges();
            }
            Store::Protected { path, file, model, cache, wall } => {
                file.close()?;
                let variant = file.variant();
                let mut fresh = ProtectedFile::open(&*path, &bench_key(), variant, *cache)?;
                fresh.set_cost_model(model.clone());
                fresh.set_wall_profiling(*wall);
                **file = fresh;
            }
            Store::Memory { sim, .. } => sim.clear_charges(),
        }
        Ok(())
    }

    pub fn close(&mut self) -> StoreResult<()> {
        if let Store::Protected { file, .. } = self {
            file.close()?;
        }
        Ok(())
    }

    pub fn set_wall_profiling(&mut self, on: bool) {
        if let Store::Protected { file, wall, .. } = self {
            *wall = on;
            file.set_wall_profiling(on);
        }
    }

    pub fn wall_profile(&self) -> WallProfile {
        match self {
            Store::Protected { file, .. } => file.wall_profile(),
            _ => WallProfile::default(),
        }
    }

    pub fn counters(&self) -> StoreCounters {
        match self {
            Store::Protected { file, .. } => file.counters(),
            _ => StoreCounters::default(),
        }
    }

    pub fn accounting(&self) -> Accounting {
        match self {
            Store::Plain { sim, .. } | Store::Memory { sim, .. } => sim.report(),
            Store::Protected { file, .. } => file.simulator().report(),
        }
    }

    fn sim_mut(&mut self) -> &mut Simulator {
        match self {
            Store::Plain { sim, .. } | Store::Memory { sim, .. } => sim,
            Store::Protected { file, .. } => file.simulator_mut(),
        }
    }
}
