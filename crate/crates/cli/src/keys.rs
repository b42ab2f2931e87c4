use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use twinehost_core::pfs::KeyPolicy;

pub const SECRET_ENV: &str = "TWINEHOST_MASTER_SECRET";

/// Key material for protected files. Values are never logged.
#[derive(Debug, Args, Clone, Default)]
pub struct KeyArgs {
    /// Explicit 128-bit root key as 32 hex digits. Wins over every other source.
    #[arg(long, value_name = "HEX")]
    pub key_hex: Option<String>,
    /// File holding a 32-byte master secret, raw or as 64 hex digits.
    #[arg(long, value_name = "PATH")]
    pub master_secret_file: Option<PathBuf>,
}

impl KeyArgs {
    /// Explicit key, then master-secret file, then the environment.
    pub fn resolve(&self) -> Result<Option<KeyPolicy>> {
        if let Some(h) = &self.key_hex {
            let key: [u8; 16] = decode_hex(h.trim()).context("--key-hex must be 32 hex digits")?;
            return Ok(Some(KeyPolicy::Explicit { key }));
        }
        if let Some(p) = &self.master_secret_file {
            return Ok(Some(KeyPolicy::Derived { master_secret: secret_from_file(p)? }));
        }
        match std::env::var(SECRET_ENV) {
            Ok(v) => {
                let master_secret = decode_hex(v.trim()).with_context(|| format!("{SECRET_ENV} must be 64 hex digits"))?;
                Ok(Some(KeyPolicy::Derived { master_secret }))
            }
            Err(_) => Ok(None),
        }
    }

    pub fn require(&self) -> Result<KeyPolicy> {
        match self.resolve()? {
            Some(k) => Ok(k),
            None => bail!("no key configured: pass --key-hex or --master-secret-file, or set {SECRET_ENV}"),
        }
    }
}

fn secret_from_file(p: &Path) -> Result<[u8; 32]> {
    let raw = std::fs::read(p).with_context(|| format!("reading master secret file {}", p.display()))?;
    if let Ok(secret) = <[u8; 32]>::try_from(raw.as_slice()) {
        return Ok(secret);
    }
    let text = std::str::from_utf8(&raw).unwrap_or("");
    decode_hex(text.trim())
        .with_context(|| format!("{} must hold 32 raw bytes or 64 hex digits", p.display()))
}

fn decode_hex<const N: usize>(s: &str) -> Result<[u8; N]> {
    let mut out = [0u8; N];
    // the hex crate's messages name positions, not the input
    hex::decode_to_slice(s, &mut out)?;
    Ok(out)
}
