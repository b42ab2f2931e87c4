//! Protected file store: a Merkle tree of AEAD-encrypted 4 KiB nodes on top
//! of an ordinary host file.
//!
//! File layout: a 64-byte cleartext superblock followed by fixed-size node
//! records (`IV || ciphertext || tag`). Every parent stores the key and tag
//! of each child; the root key comes from a [`KeyPolicy`] and the root record
//! authenticates the superblock as associated data.

mod cache;
mod ccm;
mod counters;
pub mod crypto;
mod error;
mod file;
pub mod layout;
pub mod superblock;

pub use cache::{CacheStats, NodeKind, NodeRecord, NODE_META_BYTES, NODE_STRUCT_BYTES};
pub use ccm::{Aes128Ccm, CcmAuthError};
pub use counters::{StoreCounters, WallProfile};
pub use crypto::CipherVariant;
pub use error::{PfsError, Result};
pub use file::{
    inspect_superblock, verify_file, KeyPolicy, ProtectedFile, Variant, VerifyReport, Whence,
    DEFAULT_CACHE_CAPACITY,
};
pub use layout::{layout_nodes, NodeAddr, NodeLayout};
pub use superblock::Superblock;
