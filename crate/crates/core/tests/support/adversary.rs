//! Hostile inputs shared by the WASI tests and the acceptance run.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use twinehost_core::wasi::host::{FileStat, HostFd, HostOpen, HostWhence};
use twinehost_core::wasi::{Errno, UntrustedHost};

pub struct Sandbox {
    _outer: tempfile::TempDir,
    pub outer: PathBuf,
    pub root: PathBuf,
}

/// outer/{root/{sub/file, link -> ../root-evil, dirlink -> sub}, root-evil/f, secret.txt}
pub fn sandbox() -> Sandbox {
    let t = tempfile::tempdir().unwrap();
    let outer = fs::canonicalize(t.path()).unwrap();
    let root = outer.join("root");
    fs::create_dir_all(root.join("sub")).unwrap();
    fs::write(root.join("sub/file"), b"inside").unwrap();
    fs::create_dir_all(outer.join("root-evil")).unwrap();
    fs::write(outer.join("root-evil/f"), b"sibling").unwrap();
    fs::write(outer.join("secret.txt"), b"secret").unwrap();
    #[cfg(unix)]
    {
        std::os::unix::fs::symlink("../root-evil", root.join("link")).unwrap();
        std::os::unix::fs::symlink("sub", root.join("dirlink")).unwrap();
        std::os::unix::fs::symlink("/tmp", root.join("sub/tmplink")).unwrap();
    }
    Sandbox { _outer: t, outer, root }
}

pub fn escape_corpus(sb: &Sandbox) -> Vec<String> {
    let mut v = Vec::new();
    for depth in 1..=5 {
        let up = "../".repeat(depth);
        v.push(format!("{up}secret.txt"));
        v.push(format!("{up}root-evil/f"));
        v.push(format!("{up}etc/passwd"));
        v.push(format!("sub/{up}../secret.txt"));
    }
    v.extend(
        [
            "..",
            "../",
            "./..",
            "sub/../..",
            "sub/./../../x",
            "a/b/../../../x",
            "a/b/c/../../../../secret.txt",
            "../root/../secret.txt",
            "../root-evil",
            "../rootx/f",
            "sub/../../root-evil/f",
            "./../root-evil/../secret.txt",
            "/etc/passwd",
            "/",
            "/tmp",
            "//etc",
            "/root-evil/f",
            "/data/sub/file",
            "\\etc\\passwd",
            "link/f",
            "link",
            "sub/../link/f",
            "dirlink/file",
            "sub/tmplink/x",
            "sub/tmplink",
            "dirlink",
        ]
        .map(String::from),
    );
    v.push(sb.outer.join("secret.txt").display().to_string());
    v.push(sb.outer.join("root-evil/f").display().to_string());
    v.push(sb.root.join("sub/file").display().to_string());
    v.push(format!("{}/../secret.txt", sb.root.display()));
    v
}

pub const LEGIT: [&str; 20] = [
    "f0", "f1", "f2", "./f3", "sub/f4", "sub/./f5", "sub/../f6", "sub//f7", "f8/", "sub/file",
    "sub", ".", "sub/..", "a/../f9", "x/y/../../f10", "sub/../sub/f11", "new.db", "root-evil",
    "..root", "...",
];

/// Monotonic clock that jumps backwards on a tenth of the calls.
pub struct RegressingClock {
    pub rng: rand::rngs::StdRng,
    pub now: u64,
    pub regressions: std::sync::Arc<std::sync::atomic::AtomicU64>,
}

impl RegressingClock {
    /// Returns the host and a live count of the regressions it served.
    pub fn new(seed: u64) -> (Self, std::sync::Arc<std::sync::atomic::AtomicU64>) {
        use rand::SeedableRng;
        let count = std::sync::Arc::default();
        let host = RegressingClock { rng: rand::rngs::StdRng::seed_from_u64(seed), now: 1_000_000, regressions: std::sync::Arc::clone(&count) };
        (host, count)
    }
}

impl UntrustedHost for RegressingClock {
    fn clock_time(&mut self, _: u32) -> Result<u64, u16> {
        self.now += self.rng.gen_range(0..2_000);
        if self.rng.gen_bool(0.1) {
            self.regressions.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            return Ok(self.now.saturating_sub(self.rng.gen_range(1..5_000_000)));
        }
        Ok(self.now)
    }
    fn create_dir(&mut self, _: &Path) -> Result<(), u16> {
        Err(Errno::Acces.raw())
    }
    fn stat(&mut self, _: &Path) -> Result<FileStat, u16> {
        Err(Errno::Noent.raw())
    }
    fn unlink(&mut self, _: &Path) -> Result<(), u16> {
        Err(Errno::Noent.raw())
    }
    fn open(&mut self, _: &Path, _: HostOpen) -> Result<HostFd, u16> {
        Err(Errno::Acces.raw())
    }
    fn read(&mut self, _: HostFd, _: &mut [u8]) -> Result<usize, u16> {
        Err(Errno::Badf.raw())
    }
    fn write(&mut self, _: HostFd, _: &[u8]) -> Result<usize, u16> {
        Err(Errno::Badf.raw())
    }
    fn seek(&mut self, _: HostFd, _: i64, _: HostWhence) -> Result<u64, u16> {
        Err(Errno::Badf.raw())
    }
    fn fstat(&mut self, _: HostFd) -> Result<FileStat, u16> {
        Err(Errno::Badf.raw())
    }
    fn close(&mut self, _: HostFd) -> Result<(), u16> {
        Ok(())
    }
}

