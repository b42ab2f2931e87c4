//! Hand-assembled Wasm modules for tests and demos, plus the small builder
//! that emits them. Each fixture is a single `_start` function importing
//! what it needs from `wasi_snapshot_preview1`.
//!
//! Memory layout used by the fixtures: scratch words (out-pointers, iovecs)
//! live below 1024, constant data from 1024 up.

use crate::wasi::abi::{signature, ValType};
use crate::wasi::tier::WasiCall;
use crate::wasi::{oflags, MONOTONIC};

use super::stub::WASI_MODULE;

const SCRATCH: i32 = 0;
const DATA: u32 = 1024;

fn uleb(mut v: u64, out: &mut Vec<u8>) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

fn sleb(mut v: i64, out: &mut Vec<u8>) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        let done = (v == 0 && b & 0x40 == 0) || (v == -1 && b & 0x40 != 0);
        out.push(if done { b } else { b | 0x80 });
        if done {
            return;
        }
    }
}

fn name(s: &str, out: &mut Vec<u8>) {
    uleb(s.len() as u64, out);
    out.extend_from_slice(s.as_bytes());
}

fn valtype(t: ValType) -> u8 {
    match t {
        ValType::I32 => 0x7f,
        ValType::I64 => 0x7e,
    }
}

fn section(id: u8, body: Vec<u8>, out: &mut Vec<u8>) {
    out.push(id);
    uleb(body.len() as u64, out);
    out.extend(body);
}

/// Instruction emitter for the `_start` body.
#[derive(Debug, Default, Clone)]
pub struct Code(Vec<u8>);

impl Code {
    pub fn i32_const(&mut self, v: i32) -> &mut Self {
        self.0.push(0x41);
        sleb(v.into(), &mut self.0);
        self
    }

    pub fn i64_const(&mut self, v: i64) -> &mut Self {
        self.0.push(0x42);
        sleb(v, &mut self.0);
        self
    }

    pub fn call(&mut self, func: u32) -> &mut Self {
        self.0.push(0x10);
        uleb(func.into(), &mut self.0);
        self
    }

    fn local(&mut self, op: u8, i: u32) -> &mut Self {
        self.0.push(op);
        uleb(i.into(), &mut self.0);
        self
    }

    pub fn local_get(&mut self, i: u32) -> &mut Self {
        self.local(0x20, i)
    }

    pub fn local_set(&mut self, i: u32) -> &mut Self {
        self.local(0x21, i)
    }

    pub fn local_tee(&mut self, i: u32) -> &mut Self {
        self.local(0x22, i)
    }

    pub fn i32_load(&mut self, offset: u32) -> &mut Self {
        self.0.extend([0x28, 2]);
        uleb(offset.into(), &mut self.0);
        self
    }

    pub fn i32_store(&mut self, offset: u32) -> &mut Self {
        self.0.extend([0x36, 2]);
        uleb(offset.into(), &mut self.0);
        self
    }

    pub fn memory_size(&mut self) -> &mut Self {
        self.raw(&[0x3f, 0])
    }

    pub fn memory_grow(&mut self) -> &mut Self {
        self.raw(&[0x40, 0])
    }

    pub fn i32_add(&mut self) -> &mut Self {
        self.raw(&[0x6a])
    }

    pub fn i32_sub(&mut self) -> &mut Self {
        self.raw(&[0x6b])
    }

    pub fn drop_(&mut self) -> &mut Self {
        self.raw(&[0x1a])
    }

    pub fn unreachable(&mut self) -> &mut Self {
        self.raw(&[0x00])
    }

    pub fn ret(&mut self) -> &mut Self {
        self.raw(&[0x0f])
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.extend_from_slice(bytes);
        self
    }

    /// Stores an i32 constant at a constant address.
    pub fn store_const(&mut self, addr: i32, v: i32) -> &mut Self {
        self.i32_const(addr).i32_const(v).i32_store(0)
    }
}

#[derive(Debug, Clone)]
pub struct ModuleBuilder {
    imports: Vec<WasiCall>,
    memory: Option<(u32, Option<u32>)>,
    data: Vec<(u32, Vec<u8>)>,
    data_end: u32,
    i32_locals: u32,
    pub code: Code,
}

impl Default for ModuleBuilder {
    fn default() -> Self {
        ModuleBuilder {
            imports: Vec::new(),
            memory: None,
            data: Vec::new(),
            data_end: DATA,
            i32_locals: 0,
            code: Code::default(),
        }
    }
}

impl ModuleBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Imports a WASI call (once) and returns its function index.
    pub fn import(&mut self, call: WasiCall) -> u32 {
        match self.imports.iter().position(|&c| c == call) {
            Some(i) => i as u32,
            None => {
                self.imports.push(call);
                self.imports.len() as u32 - 1
            }
        }
    }

    pub fn memory(&mut self, min: u32, max: Option<u32>) -> &mut Self {
        self.memory = Some((min, max));
        self
    }

    /// Places bytes in the data area and returns their address.
    pub fn data(&mut self, bytes: &[u8]) -> i32 {
        if self.memory.is_none() {
            self.memory = Some((1, None));
        }
        let at = self.data_end;
        self.data.push((at, bytes.to_vec()));
        self.data_end += (bytes.len() as u32).next_multiple_of(8);
        at as i32
    }

    /// Declares an i32 local for `_start` and returns its index.
    pub fn local_i32(&mut self) -> u32 {
        self.i32_locals += 1;
        self.i32_locals - 1
    }

    /// Emits `fd_write(fd, [ptr,len])` leaving the errno on the stack.
    pub fn write_bytes(&mut self, fd: i32, bytes: &[u8]) -> &mut Self {
        let ptr = self.data(bytes);
        let f = self.import(WasiCall::FdWrite);
        self.code
            .store_const(SCRATCH + 8, ptr)
            .store_const(SCRATCH + 12, bytes.len() as i32)
            .i32_const(fd)
            .i32_const(SCRATCH + 8)
            .i32_const(1)
            .i32_const(SCRATCH + 16)
            .call(f);
        self
    }

    /// Emits `proc_exit` with the i32 on top of the stack.
    pub fn exit_with_top(&mut self) -> &mut Self {
        let f = self.import(WasiCall::ProcExit);
        self.code.call(f);
        self
    }

    pub fn build(&self) -> Vec<u8> {
        let mut types: Vec<(Vec<ValType>, Vec<ValType>)> = Vec::new();
        let mut type_of = |p: &[ValType], r: &[ValType]| -> u32 {
            let key = (p.to_vec(), r.to_vec());
            match types.iter().position(|t| *t == key) {
                Some(i) => i as u32,
                None => {
                    types.push(key);
                    types.len() as u32 - 1
                }
            }
        };
        let import_types: Vec<u32> = self
            .imports
            .iter()
            .map(|&c| {
                let (p, r) = signature(c);
                type_of(p, r)
            })
            .collect();
        let start_type = type_of(&[], &[]);

        let mut out = b"\0asm\x01\0\0\0".to_vec();

        let mut s = Vec::new();
        uleb(types.len() as u64, &mut s);
        for (p, r) in &types {
            s.push(0x60);
            uleb(p.len() as u64, &mut s);
            s.extend(p.iter().map(|&t| valtype(t)));
            uleb(r.len() as u64, &mut s);
            s.extend(r.iter().map(|&t| valtype(t)));
        }
        section(1, s, &mut out);

        if !self.imports.is_empty() {
            let mut s = Vec::new();
            uleb(self.imports.len() as u64, &mut s);
            for (c, &ty) in self.imports.iter().zip(&import_types) {
                name(WASI_MODULE, &mut s);
                name(c.name(), &mut s);
                s.push(0x00);
                uleb(ty.into(), &mut s);
            }
            section(2, s, &mut out);
        }

        section(3, vec![1, start_type as u8], &mut out);

        if let Some((min, max)) = self.memory {
            let mut s = vec![1];
            match max {
                Some(max) => {
                    s.push(1);
                    uleb(min.into(), &mut s);
                    uleb(max.into(), &mut s);
                }
                None => {
                    s.push(0);
                    uleb(min.into(), &mut s);
                }
            }
            section(5, s, &mut out);
        }

        let start_index = self.imports.len() as u32;
        let mut s = Vec::new();
        let exports = if self.memory.is_some() { 2 } else { 1 };
        uleb(exports, &mut s);
        name("_start", &mut s);
        s.push(0x00);
        uleb(start_index.into(), &mut s);
        if self.memory.is_some() {
            name("memory", &mut s);
            s.extend([0x02, 0]);
        }
        section(7, s, &mut out);

        let mut body = Vec::new();
        if self.i32_locals > 0 {
            body.push(1);
            uleb(self.i32_locals.into(), &mut body);
            body.push(0x7f);
        } else {
            body.push(0);
        }
        body.extend(&self.code.0);
        body.push(0x0b);
        let mut s = vec![1];
        uleb(body.len() as u64, &mut s);
        s.extend(body);
        section(10, s, &mut out);

        if !self.data.is_empty() {
            let mut s = Vec::new();
            uleb(self.data.len() as u64, &mut s);
            for (at, bytes) in &self.data {
                s.push(0);
                s.push(0x41);
                sleb(i64::from(*at), &mut s);
                s.push(0x0b);
                uleb(bytes.len() as u64, &mut s);
                s.extend(bytes);
            }
            section(11, s, &mut out);
        }
        out
    }
}

/// Writes `hello\n` to stdout and returns normally (exit 0).
pub fn hello() -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    b.write_bytes(1, b"hello\n");
    b.code.drop_();
    b.build()
}

pub fn exit_with(code: i32) -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    b.code.i32_const(code);
    b.exit_with_top();
    b.build()
}

pub fn unreachable_trap() -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    b.code.unreachable();
    b.build()
}

/// Declares `pages` pages of initial memory and does nothing else.
pub fn needs_pages(pages: u32) -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    b.memory(pages, None);
    b.code.raw(&[0x01]);
    b.build()
}

/// Grows memory by `delta` pages and exits with the page count afterwards.
pub fn memory_grow(delta: i32) -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    b.memory(1, None);
    b.code.i32_const(delta).memory_grow().drop_().memory_size();
    b.exit_with_top();
    b.build()
}

/// Only trusted-tier calls: monotonic clock, random bytes, stdout. Exits
/// with the sum of the errnos (0 when all succeed).
pub fn trusted_only() -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    b.memory(1, None);
    let clock = b.import(WasiCall::ClockTimeGet);
    let random = b.import(WasiCall::RandomGet);
    b.code
        .i32_const(MONOTONIC as i32)
        .i64_const(1)
        .i32_const(SCRATCH + 32)
        .call(clock)
        .i32_const(SCRATCH + 64)
        .i32_const(16)
        .call(random)
        .i32_add();
    b.write_bytes(1, b"trusted\n");
    b.code.i32_add();
    b.exit_with_top();
    b.build()
}

/// Creates directory `name` under the first preopen and exits with the
/// errno, so a refused passthrough call shows up as exit 76.
pub fn passthrough_dependent(name: &str) -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    let path = b.data(name.as_bytes());
    let mkdir = b.import(WasiCall::PathCreateDirectory);
    b.code.i32_const(3).i32_const(path).i32_const(name.len() as i32).call(mkdir);
    b.exit_with_top();
    b.build()
}

const RW_RIGHTS: i64 = (1 << 1) | (1 << 2) | (1 << 5) | (1 << 6) | (1 << 10);

/// Emits path_open(3, path, CREAT, rw) with the errno on the stack and the
/// new fd stored at `SCRATCH`.
fn open_file(b: &mut ModuleBuilder, path: &str) {
    let p = b.data(path.as_bytes());
    let open = b.import(WasiCall::PathOpen);
    b.code
        .i32_const(3)
        .i32_const(0)
        .i32_const(p)
        .i32_const(path.len() as i32)
        .i32_const(oflags::CREAT as i32)
        .i64_const(RW_RIGHTS)
        .i64_const(0)
        .i32_const(0)
        .i32_const(SCRATCH)
        .call(open);
}

fn push_fd(b: &mut ModuleBuilder) {
    b.code.i32_const(SCRATCH).i32_load(0);
}

/// Opens `path` in the first preopen, writes `contents`, seeks to 0, reads
/// it back into memory, echoes what was read to stdout and closes. Exits
/// with the sum of all errnos.
pub fn file_round_trip(path: &str, contents: &[u8]) -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    b.memory(1, None);
    let (write, seek, read, close) = (
        b.import(WasiCall::FdWrite),
        b.import(WasiCall::FdSeek),
        b.import(WasiCall::FdRead),
        b.import(WasiCall::FdClose),
    );
    let src = b.data(contents);
    let dst = b.data(&vec![0u8; contents.len()]);
    let len = contents.len() as i32;
    open_file(&mut b, path);
    b.code.store_const(SCRATCH + 8, src).store_const(SCRATCH + 12, len);
    push_fd(&mut b);
    b.code.i32_const(SCRATCH + 8).i32_const(1).i32_const(SCRATCH + 16).call(write).i32_add();
    push_fd(&mut b);
    b.code.i64_const(0).i32_const(0).i32_const(SCRATCH + 24).call(seek).i32_add();
    b.code.store_const(SCRATCH + 8, dst).store_const(SCRATCH + 12, len);
    push_fd(&mut b);
    b.code.i32_const(SCRATCH + 8).i32_const(1).i32_const(SCRATCH + 16).call(read).i32_add();
    // echo exactly the bytes that came back
    b.code
        .i32_const(SCRATCH + 12)
        .i32_const(SCRATCH + 16)
        .i32_load(0)
        .i32_store(0)
        .i32_const(1)
        .i32_const(SCRATCH + 8)
        .i32_const(1)
        .i32_const(SCRATCH + 16)
        .call(write)
        .i32_add();
    push_fd(&mut b);
    b.code.call(close).i32_add();
    b.exit_with_top();
    b.build()
}

/// Opens `path`, seeks to `offset` past the (empty) end, writes one byte
/// `x` and closes. Exits with the sum of the errnos.
pub fn seek_then_write(path: &str, offset: i64) -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    b.memory(1, None);
    let (write, seek, close) = (
        b.import(WasiCall::FdWrite),
        b.import(WasiCall::FdSeek),
        b.import(WasiCall::FdClose),
    );
    let x = b.data(b"x");
    open_file(&mut b, path);
    push_fd(&mut b);
    b.code.i64_const(offset).i32_const(0).i32_const(SCRATCH + 24).call(seek).i32_add();
    b.code.store_const(SCRATCH + 8, x).store_const(SCRATCH + 12, 1);
    push_fd(&mut b);
    b.code.i32_const(SCRATCH + 8).i32_const(1).i32_const(SCRATCH + 16).call(write).i32_add();
    push_fd(&mut b);
    b.code.call(close).i32_add();
    b.exit_with_top();
    b.build()
}

/// Recurses into itself until the call stack is exhausted.
pub fn deep_recursion() -> Vec<u8> {
    let mut b = ModuleBuilder::new();
    b.code.call(0);
    b.build()
}
