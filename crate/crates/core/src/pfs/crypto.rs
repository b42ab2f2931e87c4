use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Aes128Gcm, KeyInit, Nonce, Tag};
use hkdf::Hkdf;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::ccm::Aes128Ccm;
use super::layout::{IV_SIZE, KEY_SIZE, TAG_SIZE};

pub type NodeKey = [u8; KEY_SIZE];
pub type NodeIv = [u8; IV_SIZE];
pub type NodeTag = [u8; TAG_SIZE];

/// AEAD used for every node of a file. Stored in the superblock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CipherVariant {
    /// AES-128-GCM: tag over ciphertext.
    Gcm = 0,
    /// AES-128-CCM: tag over plaintext.
    Ccm = 1,
}

impl CipherVariant {
    pub fn from_u32(v: u32) -> Option<Self> {
        match v {
            0 => Some(CipherVariant::Gcm),
            1 => Some(CipherVariant::Ccm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthFailed;

pub fn seal(
    variant: CipherVariant,
    key: &NodeKey,
    iv: &NodeIv,
    aad: &[u8],
    buf: &mut [u8],
) -> NodeTag {
    match variant {
        CipherVariant::Gcm => {
            let cipher = Aes128Gcm::new(key.into());
            let tag = cipher
                .encrypt_in_place_detached(Nonce::from_slice(iv), aad, buf)
                .expect("node payload within GCM limits");
            tag.into()
        }
        CipherVariant::Ccm => Aes128Ccm::new(key).encrypt_in_place(iv, aad, buf),
    }
}

/// Decrypts in place. On failure the buffer content is unspecified for GCM
/// (left as ciphertext) and zeroed for CCM; callers must discard it.
pub fn open(
    variant: CipherVariant,
    key: &NodeKey,
    iv: &NodeIv,
    aad: &[u8],
    buf: &mut [u8],
    tag: &NodeTag,
) -> Result<(), AuthFailed> {
    match variant {
        CipherVariant::Gcm => {
            let cipher = Aes128Gcm::new(key.into());
            cipher
                .decrypt_in_place_detached(Nonce::from_slice(iv), aad, buf, Tag::from_slice(tag))
                .map_err(|_| AuthFailed)
        }
        CipherVariant::Ccm => Aes128Ccm::new(key)
            .decrypt_in_place(iv, aad, buf, tag)
            .map_err(|_| AuthFailed),
    }
}

/// Root key for a file: HKDF-SHA-256, salt = `kdf_salt`,
/// info = `"pfs-root" || file_nonce`, first 16 output bytes.
pub fn derive_file_key(master_secret: &[u8; 32], kdf_salt: &[u8; 16], file_nonce: &[u8; 16]) -> NodeKey {
    let hk = Hkdf::<Sha256>::new(Some(kdf_salt), master_secret);
    let mut info = [0u8; 8 + 16];
    info[..8].copy_from_slice(b"pfs-root");
    info[8..].copy_from_slice(file_nonce);
    let mut okm = [0u8; KEY_SIZE];
    hk.expand(&info, &mut okm)
        .expect("16 bytes is a valid HKDF-SHA-256 output length");
    okm
}

pub fn random_bytes<const N: usize>() -> [u8; N] {
    let mut out = [0u8; N];
    rand::rngs::OsRng.fill_bytes(&mut out);
    out
}

pub(crate) fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use hmac::{Hmac, Mac};

    /// Plain RFC 5869 HKDF built directly on HMAC-SHA-256.
    fn hkdf_oracle(salt: &[u8], ikm: &[u8], info: &[u8], len: usize) -> Vec<u8> {
        let mut ext = <Hmac<Sha256> as Mac>::new_from_slice(salt).unwrap();
        ext.update(ikm);
        let prk = ext.finalize().into_bytes();
        let mut okm = Vec::new();
        let mut prev: Vec<u8> = Vec::new();
        let mut counter = 1u8;
        while okm.len() < len {
            let mut m = <Hmac<Sha256> as Mac>::new_from_slice(&prk).unwrap();
            m.update(&prev);
            m.update(info);
            m.update(&[counter]);
            prev = m.finalize().into_bytes().to_vec();
            okm.extend_from_slice(&prev);
            counter += 1;
        }
        okm.truncate(len);
        okm
    }

    #[test]
    fn oracle_matches_rfc5869_case_1() {
        let ikm = [0x0bu8; 22];
        let salt: Vec<u8> = (0x00..=0x0c).collect();
        let info: Vec<u8> = (0xf0..=0xf9).collect();
        let okm = hkdf_oracle(&salt, &ikm, &info, 42);
        let expected = "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865";
        let got: String = okm.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn derived_key_for_zero_inputs_matches_oracle() {
        let key = derive_file_key(&[0; 32], &[0; 16], &[0; 16]);
        let mut info = b"pfs-root".to_vec();
        info.extend_from_slice(&[0; 16]);
        let expected = hkdf_oracle(&[0; 16], &[0; 32], &info, 16);
        assert_eq!(key.as_slice(), expected.as_slice());
    }

    #[test]
    fn derivation_is_deterministic_and_separated_by_nonce() {
        let secret = [9u8; 32];
        let salt = [1u8; 16];
        let a = derive_file_key(&secret, &salt, &[2; 16]);
        assert_eq!(a, derive_file_key(&secret, &salt, &[2; 16]));
        assert_ne!(a, derive_file_key(&secret, &salt, &[3; 16]));
    }

    #[test]
    fn both_variants_round_trip_and_reject_wrong_key() {
        for variant in [CipherVariant::Gcm, CipherVariant::Ccm] {
            let key = [5u8; 16];
            let iv = [6u8; 12];
            let mut buf = vec![0xabu8; 4096];
            let tag = seal(variant, &key, &iv, b"aad", &mut buf);
            assert_ne!(buf, vec![0xabu8; 4096]);
            let mut copy = buf.clone();
            open(variant, &key, &iv, b"aad", &mut copy, &tag).unwrap();
            assert_eq!(copy, vec![0xabu8; 4096]);
            let mut copy = buf.clone();
            assert_eq!(open(variant, &[4u8; 16], &iv, b"aad", &mut copy, &tag), Err(AuthFailed));
        }
    }
}
