use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rand::RngCore;

use super::clock::{MonotonicGuard, MONOTONIC, REALTIME};
use super::errno::{Errno, WasiResult};
use super::host::{FileStat, FileType, HostFd, HostOpen, HostWhence, Sanitized, StdHost, UntrustedHost};
use super::path::{resolve, Preopen};
use super::rights::Rights;
use super::tier::{route, Target, Tier, WasiCall};
use crate::pfs::{self, KeyPolicy, PfsError, ProtectedFile, Variant};
use crate::sim::{Accounting, CostModel, Direction, Simulator};

/// How regular files opened by the guest are stored on the host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FileBacking {
    #[default]
    Protected,
    /// Plain host files through passthrough calls.
    Host,
}

#[derive(Debug, Clone)]
pub struct StoreSettings {
    pub policy: KeyPolicy,
    pub variant: Variant,
    pub cache_capacity: usize,
}

/// Shared byte sink for captured guest output.
#[derive(Debug, Clone, Default)]
pub struct Capture(Arc<Mutex<Vec<u8>>>);

impl Capture {
    pub fn contents(&self) -> Vec<u8> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.contents()).into_owned()
    }

    fn append(&self, data: &[u8]) {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).extend_from_slice(data);
    }
}

#[derive(Debug, Clone, Default)]
pub enum Output {
    #[default]
    Inherit,
    Capture(Capture),
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Whence {
    Set,
    Cur,
    End,
}

impl Whence {
    pub fn from_wasi(v: u8) -> Option<Whence> {
        match v {
            0 => Some(Whence::Set),
            1 => Some(Whence::Cur),
            2 => Some(Whence::End),
            _ => None,
        }
    }
}

/// preview1 `oflags`.
pub mod oflags {
    pub const CREAT: u16 = 1;
    pub const DIRECTORY: u16 = 2;
    pub const EXCL: u16 = 4;
    pub const TRUNC: u16 = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FdStat {
    pub filetype: FileType,
    pub flags: u16,
    pub rights_base: u64,
    pub rights_inheriting: u64,
}

enum Descriptor {
    Stdio(u32),
    Dir {
        preopen: usize,
        components: Vec<String>,
        is_preopen: bool,
    },
    Protected {
        file: Box<ProtectedFile>,
        cursor: u64,
        rights: Rights,
    },
    Host {
        hfd: HostFd,
        rights: Rights,
    },
}

impl Descriptor {
    fn target(&self) -> Target {
        match self {
            Descriptor::Stdio(_) => Target::Stdio,
            Descriptor::Dir { .. } => Target::Directory,
            Descriptor::Protected { .. } => Target::ProtectedFile,
            Descriptor::Host { .. } => Target::HostFile,
        }
    }
}

fn io_err(e: PfsError) -> Errno {
    log::error!("protected store: {e}");
    match e {
        PfsError::BeyondEof { .. } | PfsError::InvalidPosition => Errno::Inval,
        PfsError::Closed => Errno::Badf,
        _ => Errno::Io,
    }
}

pub struct WasiContextBuilder {
    args: Vec<String>,
    env: Vec<(String, String)>,
    preopens: Vec<Preopen>,
    passthrough: bool,
    backing: FileBacking,
    store: Option<StoreSettings>,
    host: Option<Box<dyn UntrustedHost>>,
    model: CostModel,
    stdin: Vec<u8>,
    stdout: Output,
    stderr: Output,
}

impl WasiContextBuilder {
    pub fn arg(mut self, a: impl Into<String>) -> Self {
        self.args.push(a.into());
        self
    }

    pub fn args<I: IntoIterator<Item = S>, S: Into<String>>(mut self, args: I) -> Self {
        self.args.extend(args.into_iter().map(Into::into));
        self
    }

    pub fn env(mut self, k: impl Into<String>, v: impl Into<String>) -> Self {
        self.env.push((k.into(), v.into()));
        self
    }

    pub fn preopen(mut self, p: Preopen) -> Self {
        self.preopens.push(p);
        self
    }

    pub fn passthrough(mut self, enabled: bool) -> Self {
        self.passthrough = enabled;
        self
    }

    pub fn file_backing(mut self, b: FileBacking) -> Self {
        self.backing = b;
        self
    }

    pub fn store(mut self, s: StoreSettings) -> Self {
        self.store = Some(s);
        self
    }

    pub fn host(mut self, h: Box<dyn UntrustedHost>) -> Self {
        self.host = Some(h);
        self
    }

    pub fn cost_model(mut self, m: CostModel) -> Self {
        self.model = m;
        self
    }

    pub fn stdin(mut self, bytes: Vec<u8>) -> Self {
        self.stdin = bytes;
        self
    }

    pub fn stdout(mut self, o: Output) -> Self {
        self.stdout = o;
        self
    }

    pub fn stderr(mut self, o: Output) -> Self {
        self.stderr = o;
        self
    }

    pub fn build(self) -> WasiContext {
        let mut fds = BTreeMap::new();
        for i in 0..3 {
            fds.insert(i, Descriptor::Stdio(i));
        }
        for (i, _) in self.preopens.iter().enumerate() {
            fds.insert(
                3 + i as u32,
                Descriptor::Dir {
                    preopen: i,
                    components: Vec::new(),
                    is_preopen: true,
                },
            );
        }
        WasiContext {
            args: self.args,
            env: self.env,
            preopens: self.preopens,
            fds,
            passthrough: self.passthrough,
            backing: self.backing,
            store: self.store,
            host: Sanitized::new(self.host.unwrap_or_else(|| Box::new(StdHost::default()))),
            guard: MonotonicGuard::default(),
            sim: Simulator::new(self.model.clone()),
            model: self.model,
            closed_files: Accounting::default(),
            stdin: self.stdin,
            stdin_pos: 0,
            stdout: self.stdout,
            stderr: self.stderr,
            touched: Vec::new(),
            denials: Vec::new(),
        }
    }
}

/// Per-instance WASI state: descriptor table, capabilities and policy.
pub struct WasiContext {
    args: Vec<String>,
    env: Vec<(String, String)>,
    preopens: Vec<Preopen>,
    fds: BTreeMap<u32, Descriptor>,
    passthrough: bool,
    backing: FileBacking,
    store: Option<StoreSettings>,
    host: Sanitized,
    guard: MonotonicGuard,
    sim: Simulator,
    model: CostModel,
    closed_files: Accounting,
    stdin: Vec<u8>,
    stdin_pos: usize,
    stdout: Output,
    stderr: Output,
    touched: Vec<PathBuf>,
    denials: Vec<String>,
}

impl WasiContext {
    pub fn builder() -> WasiContextBuilder {
        WasiContextBuilder {
            args: Vec::new(),
            env: Vec::new(),
            preopens: Vec::new(),
            passthrough: true,
            backing: FileBacking::Protected,
            store: None,
            host: None,
            model: CostModel::disabled(),
            stdin: Vec::new(),
            stdout: Output::Inherit,
            stderr: Output::Inherit,
        }
    }

    pub fn args(&self) -> &[String] {
        &self.args
    }

    pub fn env(&self) -> &[(String, String)] {
        &self.env
    }

    pub fn preopens(&self) -> &[Preopen] {
        &self.preopens
    }

    pub fn passthrough_enabled(&self) -> bool {
        self.passthrough
    }

    /// Every host path the bridge inspected or handed to the store or host.
    pub fn touched_paths(&self) -> &[PathBuf] {
        &self.touched
    }

    /// Calls refused with a capability error, in order.
    pub fn capability_denials(&self) -> &[String] {
        &self.denials
    }

    pub fn rejected_host_answers(&self) -> u64 {
        self.host.rejected()
    }

    /// Simulated charges of this context plus all its protected files.
    pub fn accounting(&self) -> Accounting {
        let mut total = self.sim.report();
        total.merge(&self.closed_files);
        for d in self.fds.values() {
            if let Descriptor::Protected { file, .. } = d {
                total.merge(&file.simulator().report());
            }
        }
        total
    }

    pub fn open_fds(&self) -> Vec<u32> {
        self.fds.keys().copied().collect()
    }

    fn desc(&mut self, fd: u32) -> WasiResult<&mut Descriptor> {
        self.fds.get_mut(&fd).ok_or(Errno::Badf)
    }

    fn route_fd(&mut self, call: WasiCall, fd: u32) -> WasiResult<Tier> {
        let target = self.desc(fd)?.target();
        let tier = self.checked_route(call, target)?;
        if tier == Tier::Passthrough {
            self.sim.passthrough_crossing();
        }
        Ok(tier)
    }

    fn route_path(&mut self, call: WasiCall, target: Target) -> WasiResult<()> {
        if self.checked_route(call, target)? == Tier::Passthrough {
            self.sim.passthrough_crossing();
        }
        Ok(())
    }

    fn checked_route(&mut self, call: WasiCall, target: Target) -> WasiResult<Tier> {
        route(call, target, self.passthrough).inspect_err(|&e| {
            if e == Errno::Notcapable {
                self.denials.push(format!("{call:?} on {target:?}: untrusted host calls are disabled"));
            }
        })
    }

    fn next_fd(&self) -> u32 {
        (3..).find(|fd| !self.fds.contains_key(fd)).expect("fd space")
    }

    fn dir_of(&self, fd: u32) -> WasiResult<(PathBuf, Vec<String>)> {
        match self.fds.get(&fd) {
            Some(Descriptor::Dir { preopen, components, .. }) => {
                Ok((self.preopens[*preopen].root.clone(), components.clone()))
            }
            Some(_) => Err(Errno::Notdir),
            None => Err(Errno::Badf),
        }
    }

    fn resolve_at(&mut self, dirfd: u32, path: &str) -> WasiResult<(usize, super::path::Resolved)> {
        let (root, base) = self.dir_of(dirfd)?;
        let preopen = match &self.fds[&dirfd] {
            Descriptor::Dir { preopen, .. } => *preopen,
            _ => unreachable!("dir_of checked the kind"),
        };
        let r = resolve(&root, &base, path, &mut self.touched).inspect_err(|&e| {
            if e == Errno::Notcapable {
                self.denials.push(format!("path `{path}` leaves its preopened directory"));
            }
        })?;
        Ok((preopen, r))
    }

    /// Resolves `path` against directory `dirfd` without opening it.
    pub fn resolve_path(&mut self, dirfd: u32, path: &str) -> WasiResult<PathBuf> {
        self.resolve_at(dirfd, path).map(|(_, r)| r.host)
    }

    fn emit(&mut self, which: u32, data: &[u8]) -> WasiResult<()> {
        let out = if which == 1 { &self.stdout } else { &self.stderr };
        match out {
            Output::Inherit => {
                let res = if which == 1 {
                    std::io::stdout().write_all(data).and_then(|_| std::io::stdout().flush())
                } else {
                    std::io::stderr().write_all(data)
                };
                res.map_err(|e| Errno::from_io(&e))
            }
            Output::Capture(c) => {
                c.append(data);
                Ok(())
            }
            Output::Discard => Ok(()),
        }
    }

    // ---- args, environment, clocks, randomness ------------------------------

    pub fn clock_time_get(&mut self, clock_id: u32) -> WasiResult<u64> {
        match clock_id {
            REALTIME => {
                self.sim.crossing(Direction::Ocall);
                self.host.clock_time(REALTIME)
            }
            MONOTONIC => {
                self.sim.crossing(Direction::Ocall);
                let raw = self.host.clock_time(MONOTONIC)?;
                Ok(self.guard.next(raw))
            }
            _ => Err(Errno::Inval),
        }
    }

    pub fn random_get(&mut self, buf: &mut [u8]) -> WasiResult<()> {
        rand::rngs::OsRng.fill_bytes(buf);
        Ok(())
    }

    // ---- descriptors ---------------------------------------------------------

    /// Reads into each buffer in turn, stopping early at end of file.
    pub fn fd_read(&mut self, fd: u32, iovs: &mut [&mut [u8]]) -> WasiResult<usize> {
        let tier = self.route_fd(WasiCall::FdRead, fd)?;
        let passthrough = tier == Tier::Passthrough;
        let mut total = 0;
        match self.fds.get_mut(&fd).ok_or(Errno::Badf)? {
            Descriptor::Stdio(0) => {
                for buf in iovs.iter_mut() {
                    let rest = &self.stdin[self.stdin_pos..];
                    let n = rest.len().min(buf.len());
                    buf[..n].copy_from_slice(&rest[..n]);
                    self.stdin_pos += n;
                    total += n;
                }
            }
            Descriptor::Stdio(_) => return Err(Errno::Badf),
            Descriptor::Dir { .. } => return Err(Errno::Isdir),
            Descriptor::Protected { file, cursor, rights } => {
                if !rights.contains(Rights::READ) {
                    return Err(Errno::Notcapable);
                }
                // the store has no vectored read; one call per buffer
                for buf in iovs.iter_mut() {
                    if buf.is_empty() {
                        continue;
                    }
                    if *cursor >= file.logical_size() {
                        break;
                    }
                    file.seek(*cursor as i64, pfs::Whence::Set).map_err(io_err)?;
                    let n = file.read(buf).map_err(io_err)?;
                    *cursor += n as u64;
                    total += n;
                    if n < buf.len() {
                        break;
                    }
                }
            }
            Descriptor::Host { hfd, rights } => {
                debug_assert!(passthrough);
                if !rights.contains(Rights::READ) {
                    return Err(Errno::Notcapable);
                }
                let hfd = *hfd;
                for buf in iovs.iter_mut() {
                    let n = self.host.read(hfd, buf)?;
                    total += n;
                    if n < buf.len() {
                        break;
                    }
                }
            }
        }
        Ok(total)
    }

    /// Writes each buffer in order. A cursor past end of file is first
    /// materialized by extending the file with zero bytes.
    pub fn fd_write(&mut self, fd: u32, iovs: &[&[u8]]) -> WasiResult<usize> {
        self.route_fd(WasiCall::FdWrite, fd)?;
        let total: usize = iovs.iter().map(|b| b.len()).sum();
        match self.fds.get_mut(&fd).ok_or(Errno::Badf)? {
            Descriptor::Stdio(w @ (1 | 2)) => {
                let w = *w;
                self.sim.crossing(Direction::Ocall);
                let joined: Vec<u8> = iovs.concat();
                self.emit(w, &joined)?;
            }
            Descriptor::Stdio(_) => return Err(Errno::Badf),
            Descriptor::Dir { .. } => return Err(Errno::Isdir),
            Descriptor::Protected { file, cursor, rights } => {
                if !rights.contains(Rights::WRITE) {
                    return Err(Errno::Notcapable);
                }
                let size = file.logical_size();
                if *cursor > size {
                    file.seek(0, pfs::Whence::End).map_err(io_err)?;
                    let zeros = [0u8; 4096];
                    let mut gap = *cursor - size;
                    while gap > 0 {
                        let n = gap.min(zeros.len() as u64) as usize;
                        file.write(&zeros[..n]).map_err(io_err)?;
                        gap -= n as u64;
                    }
                } else {
                    file.seek(*cursor as i64, pfs::Whence::Set).map_err(io_err)?;
                }
                for data in iovs {
                    file.write(data).map_err(io_err)?;
                }
                *cursor += total as u64;
            }
            Descriptor::Host { hfd, rights } => {
                if !rights.contains(Rights::WRITE) {
                    return Err(Errno::Notcapable);
                }
                let hfd = *hfd;
                let mut done = 0;
                for data in iovs {
                    let n = self.host.write(hfd, data)?;
                    done += n;
                    if n < data.len() {
                        break;
                    }
                }
                return Ok(done);
            }
        }
        Ok(total)
    }

    /// Moves the bridge cursor, which may pass end of file.
    pub fn fd_seek(&mut self, fd: u32, delta: i64, whence: Whence) -> WasiResult<u64> {
        self.route_fd(WasiCall::FdSeek, fd)?;
        match self.fds.get_mut(&fd).ok_or(Errno::Badf)? {
            Descriptor::Stdio(_) => Err(Errno::Spipe),
            Descriptor::Dir { .. } => Err(Errno::Isdir),
            Descriptor::Protected { file, cursor, rights } => {
                if !rights.contains(Rights::SEEK) {
                    return Err(Errno::Notcapable);
                }
                let base = match whence {
                    Whence::Set => 0,
                    Whence::Cur => *cursor,
                    Whence::End => file.logical_size(),
                };
                let target = base as i128 + delta as i128;
                if target < 0 || target > i64::MAX as i128 {
                    return Err(Errno::Inval);
                }
                *cursor = target as u64;
                Ok(*cursor)
            }
            Descriptor::Host { hfd, rights } => {
                if !rights.contains(Rights::SEEK) {
                    return Err(Errno::Notcapable);
                }
                let hfd = *hfd;
                let w = match whence {
                    Whence::Set => HostWhence::Set,
                    Whence::Cur => HostWhence::Cur,
                    Whence::End => HostWhence::End,
                };
                if whence == Whence::Set && delta < 0 {
                    return Err(Errno::Inval);
                }
                self.host.seek(hfd, delta, w)
            }
        }
    }

    pub fn fd_tell(&mut self, fd: u32) -> WasiResult<u64> {
        if matches!(self.fds.get(&fd), Some(Descriptor::Host { .. })) {
            return self.fd_seek(fd, 0, Whence::Cur);
        }
        self.route_fd(WasiCall::FdTell, fd)?;
        match self.desc(fd)? {
            Descriptor::Protected { cursor, rights, .. } => {
                if !rights.contains(Rights::SEEK) {
                    return Err(Errno::Notcapable);
                }
                Ok(*cursor)
            }
            Descriptor::Stdio(_) => Err(Errno::Spipe),
            _ => Err(Errno::Badf),
        }
    }

    pub fn fd_close(&mut self, fd: u32) -> WasiResult<()> {
        self.route_fd(WasiCall::FdClose, fd)?;
        match self.fds.remove(&fd).ok_or(Errno::Badf)? {
            Descriptor::Protected { mut file, .. } => {
                let res = file.close();
                self.closed_files.merge(&file.simulator().report());
                res.map_err(io_err)
            }
            Descriptor::Host { hfd, .. } => self.host.close(hfd),
            _ => Ok(()),
        }
    }

    pub fn fd_fdstat_get(&mut self, fd: u32) -> WasiResult<FdStat> {
        self.route_fd(WasiCall::FdFdstatGet, fd)?;
        let (filetype, rights) = match self.desc(fd)? {
            Descriptor::Stdio(_) => (FileType::CharacterDevice, (Rights::READ | Rights::WRITE).to_wasi()),
            Descriptor::Dir { .. } => (FileType::Directory, Rights::directory()),
            Descriptor::Protected { rights, .. } | Descriptor::Host { rights, .. } => {
                (FileType::RegularFile, rights.to_wasi())
            }
        };
        let inheriting = if filetype == FileType::Directory {
            Rights::all().to_wasi()
        } else {
            0
        };
        Ok(FdStat {
            filetype,
            flags: 0,
            rights_base: rights,
            rights_inheriting: inheriting,
        })
    }

    pub fn fd_filestat_get(&mut self, fd: u32) -> WasiResult<FileStat> {
        self.route_fd(WasiCall::FdFilestatGet, fd)?;
        match self.fds.get(&fd).ok_or(Errno::Badf)? {
            Descriptor::Stdio(_) => Ok(FileStat {
                filetype: FileType::CharacterDevice,
                nlink: 1,
                ..Default::default()
            }),
            Descriptor::Protected { file, .. } => Ok(FileStat {
                filetype: FileType::RegularFile,
                nlink: 1,
                size: file.logical_size(),
                ..Default::default()
            }),
            Descriptor::Dir { preopen, components, .. } => {
                let mut p = self.preopens[*preopen].root.clone();
                p.extend(components);
                self.touched.push(p.clone());
                self.host.stat(&p)
            }
            Descriptor::Host { hfd, .. } => {
                let hfd = *hfd;
                self.host.fstat(hfd)
            }
        }
    }

    /// Guest name of a preopened directory.
    pub fn fd_prestat_get(&mut self, fd: u32) -> WasiResult<&str> {
        self.route_fd(WasiCall::FdPrestatGet, fd)?;
        match self.fds.get(&fd) {
            Some(Descriptor::Dir { preopen, is_preopen: true, .. }) => Ok(&self.preopens[*preopen].guest),
            _ => Err(Errno::Badf),
        }
    }

    // ---- paths ---------------------------------------------------------------

    pub fn path_open(&mut self, dirfd: u32, path: &str, oflags: u16, rights_base: u64) -> WasiResult<u32> {
        let (preopen, resolved) = self.resolve_at(dirfd, path)?;
        let want_dir = oflags & oflags::DIRECTORY != 0;
        let target = if want_dir {
            Target::Directory
        } else {
            match self.backing {
                FileBacking::Protected => Target::ProtectedFile,
                FileBacking::Host => Target::HostFile,
            }
        };
        self.route_path(WasiCall::PathOpen, target)?;
        let host_path = resolved.host;
        let meta = std::fs::metadata(&host_path).ok();
        let (create, excl, trunc) = (
            oflags & oflags::CREAT != 0,
            oflags & oflags::EXCL != 0,
            oflags & oflags::TRUNC != 0,
        );
        let rights = Rights::from_wasi(rights_base);
        let desc = match target {
            Target::Directory => match meta {
                Some(m) if m.is_dir() => Descriptor::Dir {
                    preopen,
                    components: resolved.components,
                    is_preopen: false,
                },
                Some(_) => return Err(Errno::Notdir),
                None => return Err(Errno::Noent),
            },
            Target::ProtectedFile => {
                let settings = self.store.clone().ok_or_else(|| {
                    log::error!("no key configured for protected files");
                    Errno::Perm
                })?;
                let exists = match &meta {
                    Some(m) if m.is_dir() => return Err(Errno::Isdir),
                    Some(_) => true,
                    None => false,
                };
                if exists && create && excl {
                    return Err(Errno::Exist);
                }
                if !exists && !create {
                    return Err(Errno::Noent);
                }
                let mut file = if !exists || trunc {
                    ProtectedFile::create_forced(&host_path, &settings.policy, settings.variant, settings.cache_capacity)
                } else {
                    let sb = pfs::inspect_superblock(&host_path).map_err(io_err)?;
                    ProtectedFile::open(
                        &host_path,
                        &settings.policy,
                        Variant::for_cipher(sb.cipher_variant),
                        settings.cache_capacity,
                    )
                }
                .map_err(io_err)?;
                file.set_cost_model(self.model.clone());
                Descriptor::Protected {
                    file: Box::new(file),
                    cursor: 0,
                    rights,
                }
            }
            Target::HostFile => {
                if meta.as_ref().is_some_and(|m| m.is_dir()) {
                    return Err(Errno::Isdir);
                }
                let how = HostOpen {
                    create,
                    exclusive: excl,
                    truncate: trunc,
                    write: rights.contains(Rights::WRITE),
                };
                let hfd = self.host.open(&host_path, how)?;
                Descriptor::Host { hfd, rights }
            }
            _ => unreachable!("path_open targets are files or directories"),
        };
        self.touched.push(host_path);
        let fd = self.next_fd();
        self.fds.insert(fd, desc);
        Ok(fd)
    }

    pub fn path_filestat_get(&mut self, dirfd: u32, path: &str) -> WasiResult<FileStat> {
        let (_, r) = self.resolve_at(dirfd, path)?;
        self.route_path(WasiCall::PathFilestatGet, Target::Directory)?;
        self.host.stat(&r.host)
    }

    pub fn path_create_directory(&mut self, dirfd: u32, path: &str) -> WasiResult<()> {
        let (_, r) = self.resolve_at(dirfd, path)?;
        self.route_path(WasiCall::PathCreateDirectory, Target::Directory)?;
        self.host.create_dir(&r.host)
    }

    pub fn path_unlink_file(&mut self, dirfd: u32, path: &str) -> WasiResult<()> {
        let (_, r) = self.resolve_at(dirfd, path)?;
        match self.backing {
            FileBacking::Protected => {
                self.route_path(WasiCall::PathUnlinkFile, Target::ProtectedFile)?;
                match std::fs::symlink_metadata(&r.host) {
                    Ok(m) if m.is_dir() => Err(Errno::Isdir),
                    Ok(_) => std::fs::remove_file(&r.host).map_err(|e| Errno::from_io(&e)),
                    Err(e) => Err(Errno::from_io(&e)),
                }
            }
            FileBacking::Host => {
                self.route_path(WasiCall::PathUnlinkFile, Target::HostFile)?;
                self.host.unlink(&r.host)
            }
        }
    }

    /// Closes every open file, flushing protected ones.
    pub fn close_all(&mut self) -> WasiResult<()> {
        let fds: Vec<u32> = self
            .fds
            .iter()
            .filter(|(_, d)| matches!(d, Descriptor::Protected { .. } | Descriptor::Host { .. }))
            .map(|(fd, _)| *fd)
            .collect();
        let mut first_err = Ok(());
        for fd in fds {
            if let Err(e) = self.fd_close(fd) {
                first_err = first_err.and(Err(e));
            }
        }
        first_err
    }
}

impl Drop for WasiContext {
    fn drop(&mut self) {
        let _ = self.close_all();
    }
}

impl std::fmt::Debug for WasiContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WasiContext")
            .field("args", &self.args)
            .field("preopens", &self.preopens)
            .field("fds", &self.fds.keys().collect::<Vec<_>>())
            .field("passthrough", &self.passthrough)
            .finish_non_exhaustive()
    }
}

const _: fn() = || {
    fn send<T: Send>() {}
    send::<WasiContext>();
};
