//! Sandboxed WASI host runtime with a protected file store and a boundary
//! cost simulator.

pub mod pfs;
pub mod sim;
pub mod bench;
pub mod engine;
pub mod wasi;
