//! AES-128-CCM with a 12-byte nonce and a 16-byte tag.
//!
//! The tag is a CBC-MAC over the plaintext, so authentication runs on data
//! that already sits in the node's plaintext buffer. Decryption therefore
//! reads ciphertext straight from the untrusted buffer and never keeps a
//! trusted copy of it.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;

const BLOCK: usize = 16;
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;
/// Length-field width: 15 - nonce length.
const L: usize = 15 - NONCE_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CcmAuthError;

pub struct Aes128Ccm {
    cipher: Aes128,
}

impl Aes128Ccm {
    pub fn new(key: &[u8; 16]) -> Self {
        Aes128Ccm {
            cipher: Aes128::new(GenericArray::from_slice(key)),
        }
    }

    fn encrypt_block(&self, block: &mut [u8; BLOCK]) {
        self.cipher
            .encrypt_block(GenericArray::from_mut_slice(&mut block[..]));
    }

    fn counter_block(nonce: &[u8; NONCE_LEN], counter: u32) -> [u8; BLOCK] {
        let mut a = [0u8; BLOCK];
        a[0] = (L - 1) as u8;
        a[1..1 + NONCE_LEN].copy_from_slice(nonce);
        let c = counter.to_be_bytes();
        a[1 + NONCE_LEN..].copy_from_slice(&c[4 - L..]);
        a
    }

    fn mac(&self, nonce: &[u8; NONCE_LEN], aad: &[u8], payload: &[u8]) -> [u8; BLOCK] {
        assert!(payload.len() < 1 << (8 * L), "payload too long for CCM");
        assert!(aad.len() < 0xff00, "associated data too long");
        let mut b0 = [0u8; BLOCK];
        let adata = if aad.is_empty() { 0 } else { 0x40 };
        b0[0] = adata | ((((TAG_LEN - 2) / 2) as u8) << 3) | (L - 1) as u8;
        b0[1..1 + NONCE_LEN].copy_from_slice(nonce);
        let len = (payload.len() as u32).to_be_bytes();
        b0[1 + NONCE_LEN..].copy_from_slice(&len[4 - L..]);

        let mut x = b0;
        self.encrypt_block(&mut x);

        if !aad.is_empty() {
            let mut buf = Vec::with_capacity(2 + aad.len() + BLOCK);
            buf.extend_from_slice(&(aad.len() as u16).to_be_bytes());
            buf.extend_from_slice(aad);
            self.absorb(&mut x, &buf);
        }
        self.absorb(&mut x, payload);
        x
    }

    /// CBC-MAC over `data`, zero-padded to a block boundary.
    fn absorb(&self, x: &mut [u8; BLOCK], data: &[u8]) {
        for chunk in data.chunks(BLOCK) {
            for (xi, di) in x.iter_mut().zip(chunk) {
                *xi ^= di;
            }
            self.encrypt_block(x);
        }
    }

    fn ctr(&self, nonce: &[u8; NONCE_LEN], buf: &mut [u8]) {
        for (i, chunk) in buf.chunks_mut(BLOCK).enumerate() {
            let mut s = Self::counter_block(nonce, i as u32 + 1);
            self.encrypt_block(&mut s);
            for (b, k) in chunk.iter_mut().zip(s.iter()) {
                *b ^= k;
            }
        }
    }

    fn tag_mask(&self, nonce: &[u8; NONCE_LEN]) -> [u8; BLOCK] {
        let mut s0 = Self::counter_block(nonce, 0);
        self.encrypt_block(&mut s0);
        s0
    }

    pub fn encrypt_in_place(
        &self,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        buf: &mut [u8],
    ) -> [u8; TAG_LEN] {
        let mut t = self.mac(nonce, aad, buf);
        let s0 = self.tag_mask(nonce);
        for (ti, si) in t.iter_mut().zip(s0.iter()) {
            *ti ^= si;
        }
        self.ctr(nonce, buf);
        t
    }

    /// Decrypts `buf` in place and checks the MAC over the recovered
    /// plaintext. On failure the buffer is zeroed.
    pub fn decrypt_in_place(
        &self,
        nonce: &[u8; NONCE_LEN],
        aad: &[u8],
        buf: &mut [u8],
        tag: &[u8; TAG_LEN],
    ) -> Result<(), CcmAuthError> {
        self.ctr(nonce, buf);
        let mut expected = self.mac(nonce, aad, buf);
        let s0 = self.tag_mask(nonce);
        for (ei, si) in expected.iter_mut().zip(s0.iter()) {
            *ei ^= si;
        }
        if super::crypto::ct_eq(&expected, tag) {
            Ok(())
        } else {
            buf.fill(0);
            Err(CcmAuthError)
        }
    }
}
