use std::io;
use std::path::PathBuf;

use thiserror::Error;

use super::crypto::CipherVariant;

#[derive(Debug, Error)]
pub enum PfsError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("{0} already exists")]
    AlreadyExists(PathBuf),
    #[error("not a protected file (bad magic)")]
    BadMagic,
    #[error("unsupported protected file version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown cipher variant {0}")]
    UnknownCipher(u32),
    /// Wrong key and tampered data look the same to an AEAD.
    #[error("integrity check failed for node {node_id} (tampered data or wrong key)")]
    IntegrityOrKey { node_id: u64 },
    #[error("node {node_id} is missing from the file")]
    MissingNode { node_id: u64 },
    #[error("superblock node count {recorded} does not match size-derived count {expected}")]
    NodeCountMismatch { recorded: u64, expected: u64 },
    #[error("file uses {found:?} but the handle was opened for {expected:?}")]
    VariantMismatch {
        expected: CipherVariant,
        found: CipherVariant,
    },
    #[error("cache capacity {0} is below the minimum of 2 nodes")]
    CacheTooSmall(usize),
    #[error("position {position} is beyond end of file ({size} bytes)")]
    BeyondEof { position: u64, size: u64 },
    #[error("negative or overflowing file position")]
    InvalidPosition,
    #[error("file handle is closed")]
    Closed,
}

impl PfsError {
    /// Node that failed authentication or was missing, when known.
    pub fn bad_node(&self) -> Option<u64> {
        match self {
            PfsError::IntegrityOrKey { node_id } | PfsError::MissingNode { node_id } => {
                Some(*node_id)
            }
            _ => None,
        }
    }

    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            PfsError::IntegrityOrKey { .. }
                | PfsError::MissingNode { .. }
                | PfsError::NodeCountMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, PfsError>;
