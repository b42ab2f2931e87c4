//! Engine adapter: load a module, bind it to a [`WasiContext`] and a memory
//! policy, run `_start` once.
//!
//! Only the built-in stub interpreter ships. It understands straight-line
//! modules (the fixtures in [`fixtures`]); anything else fails validation
//! with a message naming the unsupported construct. Another engine plugs in
//! by implementing [`Engine`].

pub mod fixtures;
pub mod memory;
mod stub;

use std::fmt;
use std::sync::Arc;

use crate::wasi::WasiContext;

pub use memory::{ChunkedAllocator, GuestAllocator, LinearMemory, MemoryPolicy, MemoryStats, WASM_PAGE};
pub use stub::{StubEngine, WASI_MODULE};

/// Process status reported for a trap.
pub const TRAP_EXIT_CODE: i32 = 134;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("link failed: {0}")]
    Link(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("engine `{0}` is not available in this build")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExitStatus {
    Exited(u32),
    Trapped(String),
}

impl ExitStatus {
    pub fn code(&self) -> i32 {
        match self {
            ExitStatus::Exited(c) => *c as i32,
            ExitStatus::Trapped(_) => TRAP_EXIT_CODE,
        }
    }

    pub fn is_success(&self) -> bool {
        *self == ExitStatus::Exited(0)
    }
}

impl fmt::Display for ExitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExitStatus::Exited(c) => write!(f, "exited with {c}"),
            ExitStatus::Trapped(m) => write!(f, "trapped: {m}"),
        }
    }
}

pub trait Engine: Send + Sync {
    fn name(&self) -> &'static str;
    fn load(&self, bytes: &[u8]) -> Result<Arc<dyn Module>, EngineError>;
}

/// A validated module. Shareable; every instantiation is independent.
pub trait Module: Send + Sync + fmt::Debug {
    fn imports(&self) -> Vec<(String, String)>;
    fn min_memory_pages(&self) -> u32;
    fn instantiate(&self, ctx: WasiContext, memory: MemoryPolicy) -> Result<Box<dyn Instance>, EngineError>;
}

/// One instantiation. Confined to a single thread at a time.
pub trait Instance: Send {
    /// Runs `_start`. Only the first call runs; later ones are usage errors.
    fn run_start(&mut self) -> Result<ExitStatus, EngineError>;
    fn status(&self) -> Option<&ExitStatus>;
    fn context(&self) -> &WasiContext;
    fn context_mut(&mut self) -> &mut WasiContext;
    fn into_context(self: Box<Self>) -> WasiContext;
    fn memory_stats(&self) -> Option<MemoryStats>;
}

pub fn available() -> &'static [&'static str] {
    &["stub"]
}

pub fn select(name: &str) -> Result<Box<dyn Engine>, EngineError> {
    match name {
        "stub" | "default" => Ok(Box::new(StubEngine)),
        other => Err(EngineError::Unavailable(other.to_string())),
    }
}
