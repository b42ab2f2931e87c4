//! preview1 calling convention: arguments are i32/i64 values, pointers index
//! guest linear memory, results are written back through out-pointers and
//! every call but `proc_exit` returns an errno.

use super::context::{WasiContext, Whence};
use super::errno::{Errno, WasiResult};
use super::host::FileStat;
use super::tier::WasiCall;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValType {
    I32,
    I64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Val {
    I32(i32),
    I64(i64),
}

impl Val {
    pub fn ty(self) -> ValType {
        match self {
            Val::I32(_) => ValType::I32,
            Val::I64(_) => ValType::I64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostOutcome {
    /// Normal return carrying the errno.
    Return(Errno),
    /// The guest asked to terminate.
    Exit(u32),
}

use ValType::{I32, I64};

/// Parameter and result types of a supported import.
pub fn signature(call: WasiCall) -> (&'static [ValType], &'static [ValType]) {
    use WasiCall::*;
    const ERRNO: &[ValType] = &[I32];
    let params: &'static [ValType] = match call {
        ArgsGet | ArgsSizesGet | EnvironGet | EnvironSizesGet => &[I32, I32],
        ClockTimeGet => &[I32, I64, I32],
        RandomGet => &[I32, I32],
        ProcExit => return (&[I32], &[]),
        FdRead | FdWrite => &[I32, I32, I32, I32],
        FdSeek => &[I32, I64, I32, I32],
        FdTell | FdFdstatGet | FdFilestatGet | FdPrestatGet => &[I32, I32],
        FdClose => &[I32],
        FdPrestatDirName => &[I32, I32, I32],
        PathOpen => &[I32, I32, I32, I32, I32, I64, I64, I32, I32],
        PathFilestatGet => &[I32, I32, I32, I32, I32],
        PathCreateDirectory | PathUnlinkFile => &[I32, I32, I32],
    };
    (params, ERRNO)
}

/// Bounds-checked view of guest memory.
struct Mem<'a>(&'a mut [u8]);

impl Mem<'_> {
    fn range(&self, ptr: u32, len: u32) -> WasiResult<std::ops::Range<usize>> {
        let start = ptr as usize;
        let end = start.checked_add(len as usize).ok_or(Errno::Fault)?;
        if end > self.0.len() {
            return Err(Errno::Fault);
        }
        Ok(start..end)
    }

    fn bytes(&self, ptr: u32, len: u32) -> WasiResult<&[u8]> {
        let r = self.range(ptr, len)?;
        Ok(&self.0[r])
    }

    fn bytes_mut(&mut self, ptr: u32, len: u32) -> WasiResult<&mut [u8]> {
        let r = self.range(ptr, len)?;
        Ok(&mut self.0[r])
    }

    fn u32(&self, ptr: u32) -> WasiResult<u32> {
        Ok(u32::from_le_bytes(self.bytes(ptr, 4)?.try_into().unwrap()))
    }

    fn put_u8(&mut self, ptr: u32, v: u8) -> WasiResult<()> {
        self.bytes_mut(ptr, 1)?[0] = v;
        Ok(())
    }

    fn put_u16(&mut self, ptr: u32, v: u16) -> WasiResult<()> {
        self.bytes_mut(ptr, 2)?.copy_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn put_u32(&mut self, ptr: u32, v: u32) -> WasiResult<()> {
        self.bytes_mut(ptr, 4)?.copy_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn put_u64(&mut self, ptr: u32, v: u64) -> WasiResult<()> {
        self.bytes_mut(ptr, 8)?.copy_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn str(&self, ptr: u32, len: u32) -> WasiResult<&str> {
        std::str::from_utf8(self.bytes(ptr, len)?).map_err(|_| Errno::Inval)
    }

    /// (offset, len) pairs of an iovec array.
    fn iovecs(&self, ptr: u32, count: u32) -> WasiResult<Vec<(u32, u32)>> {
        (0..count)
            .map(|i| {
                let at = ptr.checked_add(i.checked_mul(8).ok_or(Errno::Fault)?).ok_or(Errno::Fault)?;
                let (buf, len) = (self.u32(at)?, self.u32(at + 4)?);
                self.range(buf, len)?;
                Ok((buf, len))
            })
            .collect()
    }

    fn filestat(&mut self, ptr: u32, st: &FileStat) -> WasiResult<()> {
        self.bytes_mut(ptr, 64)?.fill(0);
        self.put_u64(ptr, st.dev)?;
        self.put_u64(ptr + 8, st.ino)?;
        self.put_u8(ptr + 16, st.filetype as u8)?;
        self.put_u64(ptr + 24, st.nlink)?;
        self.put_u64(ptr + 32, st.size)?;
        self.put_u64(ptr + 40, st.atim)?;
        self.put_u64(ptr + 48, st.mtim)?;
        self.put_u64(ptr + 56, st.ctim)
    }

    /// Writes a string table: pointers at `ptrs`, NUL-terminated bytes at `buf`.
    fn strings(&mut self, items: &[String], ptrs: u32, buf: u32) -> WasiResult<()> {
        let mut at = buf;
        for (i, s) in items.iter().enumerate() {
            self.put_u32(ptrs + 4 * i as u32, at)?;
            let dst = self.bytes_mut(at, s.len() as u32 + 1)?;
            dst[..s.len()].copy_from_slice(s.as_bytes());
            dst[s.len()] = 0;
            at += s.len() as u32 + 1;
        }
        Ok(())
    }
}

fn i32_at(args: &[Val], i: usize) -> WasiResult<u32> {
    match args.get(i) {
        Some(Val::I32(v)) => Ok(*v as u32),
        _ => Err(Errno::Inval),
    }
}

fn i64_at(args: &[Val], i: usize) -> WasiResult<i64> {
    match args.get(i) {
        Some(Val::I64(v)) => Ok(*v),
        _ => Err(Errno::Inval),
    }
}

/// Routes one import call to the context. Unknown names give `Nosys`.
pub fn dispatch(ctx: &mut WasiContext, name: &str, args: &[Val], memory: &mut [u8]) -> HostOutcome {
    let Some(call) = WasiCall::from_name(name) else {
        log::debug!("unsupported WASI call {name}");
        return HostOutcome::Return(Errno::Nosys);
    };
    if call == WasiCall::ProcExit {
        return HostOutcome::Exit(i32_at(args, 0).unwrap_or(1));
    }
    let res = run(ctx, call, args, &mut Mem(memory));
    HostOutcome::Return(res.err().unwrap_or(Errno::Success))
}

fn env_strings(ctx: &WasiContext) -> Vec<String> {
    ctx.env().iter().map(|(k, v)| format!("{k}={v}")).collect()
}

fn run(ctx: &mut WasiContext, call: WasiCall, a: &[Val], m: &mut Mem) -> WasiResult<()> {
    use WasiCall::*;
    let arg = |i| i32_at(a, i);
    match call {
        ArgsSizesGet | EnvironSizesGet => {
            let items = if call == ArgsSizesGet { ctx.args().to_vec() } else { env_strings(ctx) };
            let size: usize = items.iter().map(|s| s.len() + 1).sum();
            m.put_u32(arg(0)?, items.len() as u32)?;
            m.put_u32(arg(1)?, size as u32)
        }
        ArgsGet | EnvironGet => {
            let items = if call == ArgsGet { ctx.args().to_vec() } else { env_strings(ctx) };
            m.strings(&items, arg(0)?, arg(1)?)
        }
        ClockTimeGet => {
            let t = ctx.clock_time_get(arg(0)?)?;
            m.put_u64(arg(2)?, t)
        }
        RandomGet => {
            let buf = m.bytes_mut(arg(0)?, arg(1)?)?;
            ctx.random_get(buf)
        }
        ProcExit => unreachable!("handled by dispatch"),
        FdRead => {
            let iovs = m.iovecs(arg(1)?, arg(2)?)?;
            // read into scratch buffers so overlapping iovecs stay memory safe
            let mut scratch: Vec<Vec<u8>> = iovs.iter().map(|&(_, l)| vec![0; l as usize]).collect();
            let mut views: Vec<&mut [u8]> = scratch.iter_mut().map(|v| v.as_mut_slice()).collect();
            let n = ctx.fd_read(arg(0)?, &mut views)?;
            let mut left = n;
            for ((ptr, _), data) in iovs.iter().zip(&scratch) {
                let k = left.min(data.len());
                m.bytes_mut(*ptr, k as u32)?.copy_from_slice(&data[..k]);
                left -= k;
            }
            m.put_u32(arg(3)?, n as u32)
        }
        FdWrite => {
            let iovs = m.iovecs(arg(1)?, arg(2)?)?;
            let bufs: Vec<&[u8]> = iovs
                .iter()
                .map(|&(p, l)| m.bytes(p, l))
                .collect::<WasiResult<_>>()?;
            let n = ctx.fd_write(arg(0)?, &bufs)?;
            m.put_u32(arg(3)?, n as u32)
        }
        FdSeek => {
            let whence = Whence::from_wasi(arg(2)? as u8).ok_or(Errno::Inval)?;
            let pos = ctx.fd_seek(arg(0)?, i64_at(a, 1)?, whence)?;
            m.put_u64(arg(3)?, pos)
        }
        FdTell => {
            let pos = ctx.fd_tell(arg(0)?)?;
            m.put_u64(arg(1)?, pos)
        }
        FdClose => ctx.fd_close(arg(0)?),
        FdFdstatGet => {
            let st = ctx.fd_fdstat_get(arg(0)?)?;
            let p = arg(1)?;
            m.bytes_mut(p, 24)?.fill(0);
            m.put_u8(p, st.filetype as u8)?;
            m.put_u16(p + 2, st.flags)?;
            m.put_u64(p + 8, st.rights_base)?;
            m.put_u64(p + 16, st.rights_inheriting)
        }
        FdFilestatGet => {
            let st = ctx.fd_filestat_get(arg(0)?)?;
            m.filestat(arg(1)?, &st)
        }
        FdPrestatGet => {
            let len = ctx.fd_prestat_get(arg(0)?)?.len() as u32;
            let p = arg(1)?;
            m.bytes_mut(p, 8)?.fill(0);
            m.put_u8(p, 0)?;
            m.put_u32(p + 4, len)
        }
        FdPrestatDirName => {
            let name = ctx.fd_prestat_get(arg(0)?)?.to_string();
            let (ptr, len) = (arg(1)?, arg(2)?);
            if (len as usize) < name.len() {
                return Err(Errno::Nametoolong);
            }
            m.bytes_mut(ptr, name.len() as u32)?.copy_from_slice(name.as_bytes());
            Ok(())
        }
        PathOpen => {
            let path = m.str(arg(2)?, arg(3)?)?.to_string();
            let fd = ctx.path_open(arg(0)?, &path, arg(4)? as u16, i64_at(a, 5)? as u64)?;
            m.put_u32(arg(8)?, fd)
        }
        PathFilestatGet => {
            let path = m.str(arg(2)?, arg(3)?)?.to_string();
            let st = ctx.path_filestat_get(arg(0)?, &path)?;
            m.filestat(arg(4)?, &st)
        }
        PathCreateDirectory => {
            let path = m.str(arg(1)?, arg(2)?)?.to_string();
            ctx.path_create_directory(arg(0)?, &path)
        }
        PathUnlinkFile => {
            let path = m.str(arg(1)?, arg(2)?)?.to_string();
            ctx.path_unlink_file(arg(0)?, &path)
        }
    }
}
