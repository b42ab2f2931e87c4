use serde::Serialize;

use super::crypto::CipherVariant;
use super::error::PfsError;
use super::layout::HEADER_SIZE;

pub const MAGIC: [u8; 8] = *b"TWINEPFS";
pub const VERSION: u32 = 1;

/// Cleartext file header. Everything here is visible without a key.
///
/// ```text
///  0  magic          8   "TWINEPFS"
///  8  version        4   u32 LE
/// 12  cipher         4   u32 LE (0 = GCM, 1 = CCM)
/// 16  logical_size   8   u64 LE
/// 24  node_count     8   u64 LE
/// 32  file_nonce    16
/// 48  kdf_salt      16
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Superblock {
    pub version: u32,
    pub cipher_variant: CipherVariant,
    pub logical_size: u64,
    pub node_count: u64,
    #[serde(serialize_with = "hex_bytes")]
    pub file_nonce: [u8; 16],
    #[serde(serialize_with = "hex_bytes")]
    pub kdf_salt: [u8; 16],
}

fn hex_bytes<S: serde::Serializer>(bytes: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
    let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    s.serialize_str(&hex)
}

impl Superblock {
    pub fn encode(&self) -> [u8; HEADER_SIZE as usize] {
        let mut out = [0u8; HEADER_SIZE as usize];
        out[0..8].copy_from_slice(&MAGIC);
        out[8..12].copy_from_slice(&self.version.to_le_bytes());
        out[12..16].copy_from_slice(&(self.cipher_variant as u32).to_le_bytes());
        out[16..24].copy_from_slice(&self.logical_size.to_le_bytes());
        out[24..32].copy_from_slice(&self.node_count.to_le_bytes());
        out[32..48].copy_from_slice(&self.file_nonce);
        out[48..64].copy_from_slice(&self.kdf_salt);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PfsError> {
        if bytes.len() < HEADER_SIZE as usize || bytes[0..8] != MAGIC {
            return Err(PfsError::BadMagic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(PfsError::UnsupportedVersion(version));
        }
        let raw_cipher = u32_at(12);
        let cipher_variant =
            CipherVariant::from_u32(raw_cipher).ok_or(PfsError::UnknownCipher(raw_cipher))?;
        Ok(Superblock {
            version,
            cipher_variant,
            logical_size: u64_at(16),
            node_count: u64_at(24),
            file_nonce: bytes[32..48].try_into().unwrap(),
            kdf_salt: bytes[48..64].try_into().unwrap(),
        })
    }
}
