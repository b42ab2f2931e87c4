//! WASI preview1 host layer: capability-checked paths, a two-tier call
//! router and the file semantics a database-style guest relies on.

pub mod abi;
mod clock;
mod context;
mod errno;
pub mod host;
mod path;
pub mod rights;
pub mod tier;

pub use clock::{MonotonicGuard, MONOTONIC, REALTIME};
pub use context::{
    oflags, Capture, FdStat, FileBacking, Output, StoreSettings, WasiContext, WasiContextBuilder,
    Whence,
};
pub use errno::{Errno, WasiResult};
pub use host::{FileStat, FileType, StdHost, UntrustedHost};
pub use path::{resolve, Preopen, Resolved};
pub use rights::Rights;
