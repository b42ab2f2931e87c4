use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use super::clock::{MONOTONIC, REALTIME};
use super::errno::{Errno, WasiResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[repr(u8)]
pub enum FileType {
    #[default]
    Unknown = 0,
    CharacterDevice = 2,
    Directory = 3,
    RegularFile = 4,
    SymbolicLink = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FileStat {
    pub dev: u64,
    pub ino: u64,
    pub filetype: FileType,
    pub nlink: u64,
    pub size: u64,
    pub atim: u64,
    pub mtim: u64,
    pub ctim: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HostOpen {
    pub create: bool,
    pub exclusive: bool,
    pub truncate: bool,
    pub write: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostWhence {
    Set,
    Cur,
    End,
}

/// Opaque host file handle.
pub type HostFd = u64;

/// Raw host services reached by passthrough calls. Nothing returned from
/// here is trusted: errors are raw errno values and results may be bogus.
/// Wrap implementations in [`Sanitized`] before use.
pub trait UntrustedHost: Send {
    fn clock_time(&mut self, clock_id: u32) -> Result<u64, u16>;
    fn create_dir(&mut self, path: &Path) -> Result<(), u16>;
    fn stat(&mut self, path: &Path) -> Result<FileStat, u16>;
    fn unlink(&mut self, path: &Path) -> Result<(), u16>;
    fn open(&mut self, path: &Path, how: HostOpen) -> Result<HostFd, u16>;
    /// Returns the number of bytes placed in `buf`.
    fn read(&mut self, fd: HostFd, buf: &mut [u8]) -> Result<usize, u16>;
    fn write(&mut self, fd: HostFd, data: &[u8]) -> Result<usize, u16>;
    fn seek(&mut self, fd: HostFd, offset: i64, whence: HostWhence) -> Result<u64, u16>;
    fn fstat(&mut self, fd: HostFd) -> Result<FileStat, u16>;
    fn close(&mut self, fd: HostFd) -> Result<(), u16>;
}

/// Error codes a host may legitimately return. Everything else is treated
/// as an abnormal response.
pub const ERRNO_WHITELIST: &[Errno] = &[
    Errno::Acces,
    Errno::Badf,
    Errno::Exist,
    Errno::Inval,
    Errno::Io,
    Errno::Isdir,
    Errno::Nametoolong,
    Errno::Noent,
    Errno::Nospc,
    Errno::Notdir,
    Errno::Notempty,
    Errno::Perm,
    Errno::Spipe,
];

/// Range and length checks on every host answer. Out-of-contract answers
/// become `Errno::Io`.
pub struct Sanitized {
    inner: Box<dyn UntrustedHost>,
    rejected: u64,
}

impl Sanitized {
    pub fn new(inner: Box<dyn UntrustedHost>) -> Self {
        Sanitized { inner, rejected: 0 }
    }

    /// Host answers thrown away as abnormal so far.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    fn reject<T>(&mut self, what: &str) -> WasiResult<T> {
        self.rejected += 1;
        log::warn!("ignoring abnormal host response: {what}");
        Err(Errno::Io)
    }

    fn errno<T>(&mut self, raw: u16) -> WasiResult<T> {
        match Errno::from_raw(raw) {
            Some(e) if ERRNO_WHITELIST.contains(&e) => Err(e),
            _ => self.reject(&format!("errno {raw} outside whitelist")),
        }
    }

    fn check_stat(&mut self, st: FileStat) -> WasiResult<FileStat> {
        if st.size > i64::MAX as u64 {
            return self.reject("file size beyond i64 range");
        }
        Ok(st)
    }

    pub fn clock_time(&mut self, clock_id: u32) -> WasiResult<u64> {
        match self.inner.clock_time(clock_id) {
            Ok(t) if t > i64::MAX as u64 => self.reject("clock beyond i64 range"),
            Ok(t) => Ok(t),
            Err(raw) => self.errno(raw),
        }
    }

    pub fn create_dir(&mut self, path: &Path) -> WasiResult<()> {
        match self.inner.create_dir(path) {
            Ok(()) => Ok(()),
            Err(raw) => self.errno(raw),
        }
    }

    pub fn stat(&mut self, path: &Path) -> WasiResult<FileStat> {
        match self.inner.stat(path) {
            Ok(st) => self.check_stat(st),
            Err(raw) => self.errno(raw),
        }
    }

    pub fn unlink(&mut self, path: &Path) -> WasiResult<()> {
        match self.inner.unlink(path) {
            Ok(()) => Ok(()),
            Err(raw) => self.errno(raw),
        }
    }

    pub fn open(&mut self, path: &Path, how: HostOpen) -> WasiResult<HostFd> {
        match self.inner.open(path, how) {
            Ok(fd) => Ok(fd),
            Err(raw) => self.errno(raw),
        }
    }

    pub fn read(&mut self, fd: HostFd, buf: &mut [u8]) -> WasiResult<usize> {
        let len = buf.len();
        match self.inner.read(fd, buf) {
            Ok(n) if n > len => self.reject(&format!("read {n} bytes into a {len}-byte buffer")),
            Ok(n) => Ok(n),
            Err(raw) => self.errno(raw),
        }
    }

    pub fn write(&mut self, fd: HostFd, data: &[u8]) -> WasiResult<usize> {
        let len = data.len();
        match self.inner.write(fd, data) {
            Ok(n) if n > len => self.reject(&format!("wrote {n} of {len} bytes")),
            Ok(n) => Ok(n),
            Err(raw) => self.errno(raw),
        }
    }

    pub fn seek(&mut self, fd: HostFd, offset: i64, whence: HostWhence) -> WasiResult<u64> {
        match self.inner.seek(fd, offset, whence) {
            Ok(p) if p > i64::MAX as u64 => self.reject("seek beyond i64 range"),
            Ok(p) if whence == HostWhence::Set && p != offset as u64 => {
                self.reject("absolute seek landed elsewhere")
            }
            Ok(p) => Ok(p),
            Err(raw) => self.errno(raw),
        }
    }

    pub fn fstat(&mut self, fd: HostFd) -> WasiResult<FileStat> {
        match self.inner.fstat(fd) {
            Ok(st) => self.check_stat(st),
            Err(raw) => self.errno(raw),
        }
    }

    pub fn close(&mut self, fd: HostFd) -> WasiResult<()> {
        match self.inner.close(fd) {
            Ok(()) => Ok(()),
            Err(raw) => self.errno(raw),
        }
    }
}

/// The real operating system.
#[derive(Default)]
pub struct StdHost {
    files: HashMap<HostFd, File>,
    next: HostFd,
}

fn raw(e: std::io::Error) -> u16 {
    Errno::from_io(&e).raw()
}

fn nanos(t: std::io::Result<SystemTime>) -> u64 {
    t.ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_nanos() as u64)
}

pub(crate) fn stat_of(md: &fs::Metadata) -> FileStat {
    let filetype = if md.is_dir() {
        FileType::Directory
    } else if md.is_file() {
        FileType::RegularFile
    } else if md.file_type().is_symlink() {
        FileType::SymbolicLink
    } else {
        FileType::Unknown
    };
    #[cfg(unix)]
    let (dev, ino, nlink) = {
        use std::os::unix::fs::MetadataExt;
        (md.dev(), md.ino(), md.nlink())
    };
    #[cfg(not(unix))]
    let (dev, ino, nlink) = (0, 0, 1);
    FileStat {
        dev,
        ino,
        filetype,
        nlink,
        size: md.len(),
        atim: nanos(md.accessed()),
        mtim: nanos(md.modified()),
        ctim: nanos(md.created()),
    }
}

impl StdHost {
    fn file(&mut self, fd: HostFd) -> Result<&mut File, u16> {
        self.files.get_mut(&fd).ok_or(Errno::Badf.raw())
    }
}

impl UntrustedHost for StdHost {
    fn clock_time(&mut self, clock_id: u32) -> Result<u64, u16> {
        match clock_id {
            REALTIME => Ok(nanos(Ok(SystemTime::now()))),
            MONOTONIC => {
                static START: std::sync::OnceLock<std::time::Instant> = std::sync::OnceLock::new();
                let start = START.get_or_init(std::time::Instant::now);
                Ok(start.elapsed().as_nanos() as u64)
            }
            _ => Err(Errno::Inval.raw()),
        }
    }

    fn create_dir(&mut self, path: &Path) -> Result<(), u16> {
        fs::create_dir(path).map_err(raw)
    }

    fn stat(&mut self, path: &Path) -> Result<FileStat, u16> {
        fs::symlink_metadata(path).map(|m| stat_of(&m)).map_err(raw)
    }

    fn unlink(&mut self, path: &Path) -> Result<(), u16> {
        fs::remove_file(path).map_err(raw)
    }

    fn open(&mut self, path: &Path, how: HostOpen) -> Result<HostFd, u16> {
        let mut o = OpenOptions::new();
        o.read(true).write(how.write || how.truncate);
        if how.exclusive {
            o.create_new(true);
        } else if how.create {
            o.create(true);
        }
        if how.truncate {
            o.truncate(true);
        }
        let f = o.open(path).map_err(raw)?;
        self.next += 1;
        self.files.insert(self.next, f);
        Ok(self.next)
    }

    fn read(&mut self, fd: HostFd, buf: &mut [u8]) -> Result<usize, u16> {
        self.file(fd)?.read(buf).map_err(raw)
    }

    fn write(&mut self, fd: HostFd, data: &[u8]) -> Result<usize, u16> {
        self.file(fd)?.write(data).map_err(raw)
    }

    fn seek(&mut self, fd: HostFd, offset: i64, whence: HostWhence) -> Result<u64, u16> {
        let pos = match whence {
            HostWhence::Set => SeekFrom::Start(u64::try_from(offset).map_err(|_| Errno::Inval.raw())?),
            HostWhence::Cur => SeekFrom::Current(offset),
            HostWhence::End => SeekFrom::End(offset),
        };
        self.file(fd)?.seek(pos).map_err(raw)
    }

    fn fstat(&mut self, fd: HostFd) -> Result<FileStat, u16> {
        self.file(fd)?.metadata().map(|m| stat_of(&m)).map_err(raw)
    }

    fn close(&mut self, fd: HostFd) -> Result<(), u16> {
        self.files.remove(&fd).map(drop).ok_or(Errno::Badf.raw())
    }
}
