//! Which implementation serves each call.
//!
//! Trusted calls are implemented inside the host runtime (stdio, the
//! protected store, clocks behind the guard, random numbers). Passthrough
//! calls are forwarded to the untrusted host with sanitized results, and are
//! refused outright once passthrough is disabled.

use super::errno::Errno;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WasiCall {
    ArgsGet,
    ArgsSizesGet,
    EnvironGet,
    EnvironSizesGet,
    ClockTimeGet,
    RandomGet,
    ProcExit,
    FdRead,
    FdWrite,
    FdSeek,
    FdTell,
    FdClose,
    FdFdstatGet,
    FdFilestatGet,
    FdPrestatGet,
    FdPrestatDirName,
    PathOpen,
    PathFilestatGet,
    PathCreateDirectory,
    PathUnlinkFile,
}

impl WasiCall {
    pub const ALL: [WasiCall; 20] = [
        WasiCall::ArgsGet,
        WasiCall::ArgsSizesGet,
        WasiCall::EnvironGet,
        WasiCall::EnvironSizesGet,
        WasiCall::ClockTimeGet,
        WasiCall::RandomGet,
        WasiCall::ProcExit,
        WasiCall::FdRead,
        WasiCall::FdWrite,
        WasiCall::FdSeek,
        WasiCall::FdTell,
        WasiCall::FdClose,
        WasiCall::FdFdstatGet,
        WasiCall::FdFilestatGet,
        WasiCall::FdPrestatGet,
        WasiCall::FdPrestatDirName,
        WasiCall::PathOpen,
        WasiCall::PathFilestatGet,
        WasiCall::PathCreateDirectory,
        WasiCall::PathUnlinkFile,
    ];

    pub fn name(self) -> &'static str {
        use WasiCall::*;
        match self {
            ArgsGet => "args_get",
            ArgsSizesGet => "args_sizes_get",
            EnvironGet => "environ_get",
            EnvironSizesGet => "environ_sizes_get",
            ClockTimeGet => "clock_time_get",
            RandomGet => "random_get",
            ProcExit => "proc_exit",
            FdRead => "fd_read",
            FdWrite => "fd_write",
            FdSeek => "fd_seek",
            FdTell => "fd_tell",
            FdClose => "fd_close",
            FdFdstatGet => "fd_fdstat_get",
            FdFilestatGet => "fd_filestat_get",
            FdPrestatGet => "fd_prestat_get",
            FdPrestatDirName => "fd_prestat_dir_name",
            PathOpen => "path_open",
            PathFilestatGet => "path_filestat_get",
            PathCreateDirectory => "path_create_directory",
            PathUnlinkFile => "path_unlink_file",
        }
    }

    pub fn from_name(name: &str) -> Option<WasiCall> {
        WasiCall::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Targets a call can meaningfully be applied to.
    pub fn targets(self) -> &'static [Target] {
        use WasiCall::*;
        const NONE: &[Target] = &[Target::None];
        const FDS: &[Target] = &[Target::Stdio, Target::Directory, Target::ProtectedFile, Target::HostFile];
        const FILES: &[Target] = &[Target::Directory, Target::ProtectedFile, Target::HostFile];
        match self {
            ArgsGet | ArgsSizesGet | EnvironGet | EnvironSizesGet | ClockTimeGet | RandomGet
            | ProcExit => NONE,
            FdRead | FdWrite | FdSeek | FdTell | FdClose | FdFdstatGet | FdFilestatGet
            | FdPrestatGet | FdPrestatDirName => FDS,
            PathOpen | PathFilestatGet | PathCreateDirectory | PathUnlinkFile => FILES,
        }
    }
}

/// What a call operates on. For path calls this is the kind of object the
/// path names or creates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    None,
    Stdio,
    Directory,
    ProtectedFile,
    HostFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    Trusted,
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Trusted,
    Passthrough,
    CapabilityError,
}

pub fn tier(call: WasiCall, target: Target) -> Tier {
    use WasiCall::*;
    match (call, target) {
        (_, Target::HostFile) => Tier::Passthrough,
        (PathFilestatGet | PathCreateDirectory, _) => Tier::Passthrough,
        (FdFilestatGet, Target::Directory) => Tier::Passthrough,
        _ => Tier::Trusted,
    }
}

pub fn outcome(call: WasiCall, target: Target, passthrough_enabled: bool) -> Outcome {
    match tier(call, target) {
        Tier::Trusted => Outcome::Trusted,
        Tier::Passthrough if passthrough_enabled => Outcome::Passthrough,
        Tier::Passthrough => Outcome::CapabilityError,
    }
}

pub(crate) fn route(call: WasiCall, target: Target, passthrough_enabled: bool) -> Result<Tier, Errno> {
    match outcome(call, target, passthrough_enabled) {
        Outcome::Trusted => Ok(Tier::Trusted),
        Outcome::Passthrough => Ok(Tier::Passthrough),
        Outcome::CapabilityError => {
            log::debug!("{} refused: untrusted passthrough disabled", call.name());
            Err(Errno::Notcapable)
        }
    }
}
