//! Decoder and validator for the subset of the Wasm binary format the stub
//! interpreter executes: straight-line function bodies, one memory, active
//! data segments and function imports.

use std::collections::HashSet;

use crate::engine::memory::MAX_PAGES;
use crate::wasi::abi::ValType;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuncType {
    pub params: Vec<ValType>,
    pub results: Vec<ValType>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Import {
    pub module: String,
    pub name: String,
    pub ty: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Func,
    Memory,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Export {
    pub name: String,
    pub kind: ExportKind,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub min: u32,
    pub max: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instr {
    Unreachable,
    Nop,
    Return,
    Call(u32),
    Drop,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    I32Load(u32),
    I32Store(u32),
    MemorySize,
    MemoryGrow,
    I32Const(i32),
    I64Const(i64),
    I32Add,
    I32Sub,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Body {
    pub locals: Vec<ValType>,
    pub code: Vec<Instr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSegment {
    pub offset: u32,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Module {
    pub types: Vec<FuncType>,
    pub imports: Vec<Import>,
    pub funcs: Vec<u32>,
    pub memory: Option<Limits>,
    pub exports: Vec<Export>,
    pub bodies: Vec<Body>,
    pub data: Vec<DataSegment>,
}

impl Module {
    pub fn func_type(&self, idx: u32) -> Option<&FuncType> {
        let n = self.imports.len() as u32;
        let ty = if idx < n {
            self.imports[idx as usize].ty
        } else {
            *self.funcs.get((idx - n) as usize)?
        };
        self.types.get(ty as usize)
    }

    pub fn export(&self, name: &str) -> Option<&Export> {
        self.exports.iter().find(|e| e.name == name)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

type R<T> = Result<T, String>;

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn byte(&mut self) -> R<u8> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| format!("unexpected end of input at offset {}", self.pos))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> R<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("length {n} at offset {} runs past the end", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn leb_u(&mut self, bits: u32) -> R<u64> {
        let mut result = 0u64;
        let mut shift = 0;
        loop {
            let b = self.byte()?;
            if shift >= bits {
                return Err("integer representation too long".into());
            }
            result |= u64::from(b & 0x7f) << shift;
            shift += 7;
            if b & 0x80 == 0 {
                break;
            }
        }
        if bits < 64 && result >> bits != 0 {
            return Err("integer too large".into());
        }
        Ok(result)
    }

    fn u32(&mut self) -> R<u32> {
        self.leb_u(32).map(|v| v as u32)
    }

    fn leb_s(&mut self, bits: u32) -> R<i64> {
        let mut result = 0i64;
        let mut shift = 0;
        let mut b;
        loop {
            b = self.byte()?;
            if shift >= bits + 7 {
                return Err("integer representation too long".into());
            }
            result |= i64::from(b & 0x7f) << shift.min(63);
            shift += 7;
            if b & 0x80 == 0 {
                break;
            }
        }
        if shift < 64 && b & 0x40 != 0 {
            result |= -1i64 << shift;
        }
        if bits < 64 {
            let min = -(1i64 << (bits - 1));
            let max = (1i64 << (bits - 1)) - 1;
            if result < min || result > max {
                return Err("integer too large".into());
            }
        }
        Ok(result)
    }

    fn name(&mut self) -> R<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| "malformed UTF-8 name".to_string())
    }

    fn valtype(&mut self) -> R<ValType> {
        match self.byte()? {
            0x7f => Ok(ValType::I32),
            0x7e => Ok(ValType::I64),
            b => Err(format!("value type 0x{b:02x} not supported")),
        }
    }

    fn vec<T>(&mut self, mut f: impl FnMut(&mut Self) -> R<T>) -> R<Vec<T>> {
        let n = self.u32()?;
        if n as usize > self.bytes.len() {
            return Err("vector length exceeds input".into());
        }
        (0..n).map(|_| f(self)).collect()
    }

    fn limits(&mut self) -> R<Limits> {
        match self.byte()? {
            0x00 => Ok(Limits { min: self.u32()?, max: None }),
            0x01 => Ok(Limits {
                min: self.u32()?,
                max: Some(self.u32()?),
            }),
            b => Err(format!("bad limits flag 0x{b:02x}")),
        }
    }
}

pub fn decode(bytes: &[u8]) -> R<Module> {
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(|_| "missing magic".to_string())? != b"\0asm" {
        return Err("bad magic".into());
    }
    if r.take(4).map_err(|_| "missing version".to_string())? != [1, 0, 0, 0] {
        return Err("unsupported binary version".into());
    }
    let mut m = Module::default();
    let mut func_count = None;
    let mut last_id = 0u8;
    while !r.done() {
        let id = r.byte()?;
        let len = r.u32()? as usize;
        let payload = r.take(len)?;
        if id != 0 {
            // datacount (12) sits between function (3)... and code (10)
            let order = |id: u8| if id == 12 { 9 } else { id };
            if order(id) <= order(last_id) && last_id != 0 {
                return Err(format!("section {id} out of order"));
            }
            last_id = id;
        }
        let mut s = Reader::new(payload);
        match id {
            0 => continue,
            1 => {
                m.types = s.vec(|s| {
                    if s.byte()? != 0x60 {
                        return Err("expected function type".into());
                    }
                    Ok(FuncType {
                        params: s.vec(Reader::valtype)?,
                        results: s.vec(Reader::valtype)?,
                    })
                })?
            }
            2 => {
                m.imports = s.vec(|s| {
                    let module = s.name()?;
                    let name = s.name()?;
                    match s.byte()? {
                        0x00 => Ok(Import { module, name, ty: s.u32()? }),
                        k => Err(format!("import kind 0x{k:02x} of {module}.{name} not supported")),
                    }
                })?
            }
            3 => m.funcs = s.vec(Reader::u32)?,
            5 => {
                let mems = s.vec(Reader::limits)?;
                if mems.len() > 1 {
                    return Err("multiple memories".into());
                }
                m.memory = mems.first().copied();
            }
            7 => {
                m.exports = s.vec(|s| {
                    let name = s.name()?;
                    let kind = match s.byte()? {
                        0x00 => ExportKind::Func,
                        0x02 => ExportKind::Memory,
                        k => return Err(format!("export kind 0x{k:02x} not supported")),
                    };
                    Ok(Export { name, kind, index: s.u32()? })
                })?
            }
            8 => return Err("start section not supported; export `_start` instead".into()),
            10 => {
                m.bodies = s.vec(|s| {
                    let size = s.u32()? as usize;
                    let body = s.take(size)?;
                    decode_body(body)
                })?
            }
            11 => {
                m.data = s.vec(|s| {
                    if s.u32()? != 0 {
                        return Err("only active data segments for memory 0 are supported".into());
                    }
                    let offset = match (s.byte()?, s.leb_s(32)?, s.byte()?) {
                        (0x41, v, 0x0b) => v as i32 as u32,
                        _ => return Err("data offset must be a constant i32 expression".into()),
                    };
                    let n = s.u32()? as usize;
                    Ok(DataSegment { offset, bytes: s.take(n)?.to_vec() })
                })?
            }
            12 => func_count = Some(s.u32()?),
            4 | 6 | 9 => return Err(format!("section {id} not supported by this engine")),
            _ => return Err(format!("unknown section id {id}")),
        }
        if !s.done() {
            return Err(format!("section {id} has trailing bytes"));
        }
    }
    if let Some(n) = func_count {
        if n as usize != m.data.len() {
            return Err("data count mismatch".into());
        }
    }
    validate(&m)?;
    Ok(m)
}

fn decode_body(bytes: &[u8]) -> R<Body> {
    let mut r = Reader::new(bytes);
    let mut locals = Vec::new();
    for _ in 0..r.u32()? {
        let n = r.u32()?;
        let ty = r.valtype()?;
        if locals.len() + n as usize > 50_000 {
            return Err("too many locals".into());
        }
        locals.extend(std::iter::repeat_n(ty, n as usize));
    }
    let mut code = Vec::new();
    loop {
        let op = r.byte()?;
        let ins = match op {
            0x00 => Instr::Unreachable,
            0x01 => Instr::Nop,
            0x0b => break,
            0x0f => Instr::Return,
            0x10 => Instr::Call(r.u32()?),
            0x1a => Instr::Drop,
            0x20 => Instr::LocalGet(r.u32()?),
            0x21 => Instr::LocalSet(r.u32()?),
            0x22 => Instr::LocalTee(r.u32()?),
            0x28 | 0x36 => {
                let align = r.u32()?;
                if align > 2 {
                    return Err("alignment exceeds natural alignment".into());
                }
                let offset = r.u32()?;
                if op == 0x28 {
                    Instr::I32Load(offset)
                } else {
                    Instr::I32Store(offset)
                }
            }
            0x3f | 0x40 => {
                if r.byte()? != 0 {
                    return Err("memory index must be zero".into());
                }
                if op == 0x3f {
                    Instr::MemorySize
                } else {
                    Instr::MemoryGrow
                }
            }
            0x41 => Instr::I32Const(r.leb_s(32)? as i32),
            0x42 => Instr::I64Const(r.leb_s(64)?),
            0x6a => Instr::I32Add,
            0x6b => Instr::I32Sub,
            _ => return Err(format!("opcode 0x{op:02x} not supported by this engine")),
        };
        code.push(ins);
    }
    if !r.done() {
        return Err("bytes after function end".into());
    }
    Ok(Body { locals, code })
}

fn validate(m: &Module) -> R<()> {
    for imp in &m.imports {
        if m.types.get(imp.ty as usize).is_none() {
            return Err(format!("import {}.{} has unknown type", imp.module, imp.name));
        }
    }
    if m.funcs.len() != m.bodies.len() {
        return Err("function and code section sizes differ".into());
    }
    for &t in &m.funcs {
        if m.types.get(t as usize).is_none() {
            return Err(format!("unknown type index {t}"));
        }
    }
    if let Some(l) = m.memory {
        if l.min > MAX_PAGES || l.max.is_some_and(|x| x > MAX_PAGES || x < l.min) {
            return Err("invalid memory limits".into());
        }
    }
    let total_funcs = (m.imports.len() + m.funcs.len()) as u32;
    let mut names = HashSet::new();
    for e in &m.exports {
        if !names.insert(e.name.as_str()) {
            return Err(format!("duplicate export `{}`", e.name));
        }
        let ok = match e.kind {
            ExportKind::Func => e.index < total_funcs,
            ExportKind::Memory => e.index == 0 && m.memory.is_some(),
        };
        if !ok {
            return Err(format!("export `{}` refers to a missing item", e.name));
        }
    }
    match m.export("_start") {
        Some(Export { kind: ExportKind::Func, index, .. }) => {
            let ty = m.func_type(*index).expect("index checked");
            if !ty.params.is_empty() || !ty.results.is_empty() {
                return Err("`_start` must take and return nothing".into());
            }
        }
        _ => return Err("module does not export a `_start` function".into()),
    }
    for d in &m.data {
        let Some(mem) = m.memory else {
            return Err("data segment without memory".into());
        };
        let end = d.offset as u64 + d.bytes.len() as u64;
        if end > mem.min as u64 * crate::engine::memory::WASM_PAGE as u64 {
            return Err("data segment does not fit in initial memory".into());
        }
    }
    for (i, body) in m.bodies.iter().enumerate() {
        let ty = &m.types[m.funcs[i] as usize];
        check_body(m, ty, body).map_err(|e| format!("function {}: {e}", i + m.imports.len()))?;
    }
    Ok(())
}

/// Operand-stack type check of one straight-line body.
fn check_body(m: &Module, ty: &FuncType, body: &Body) -> R<()> {
    let locals: Vec<ValType> = ty.params.iter().chain(&body.locals).copied().collect();
    let mut stack: Vec<ValType> = Vec::new();
    let mut polymorphic = false;

    fn pop(stack: &mut Vec<ValType>, poly: bool, want: Option<ValType>) -> R<()> {
        match stack.pop() {
            Some(t) if want.is_none_or(|w| w == t) => Ok(()),
            Some(t) => Err(format!("type mismatch: expected {want:?}, found {t:?}")),
            None if poly => Ok(()),
            None => Err("operand stack underflow".into()),
        }
    }
    let local = |i: u32| locals.get(i as usize).copied().ok_or_else(|| format!("unknown local {i}"));
    let need_mem = || m.memory.map(|_| ()).ok_or_else(|| "memory instruction without memory".to_string());

    for ins in &body.code {
        use Instr::*;
        use ValType::*;
        let p = polymorphic;
        match *ins {
            Unreachable => {
                stack.clear();
                polymorphic = true;
            }
            Nop => {}
            Return => {
                for &t in ty.results.iter().rev() {
                    pop(&mut stack, p, Some(t))?;
                }
                stack.clear();
                polymorphic = true;
            }
            Call(f) => {
                let ft = m.func_type(f).ok_or_else(|| format!("call to unknown function {f}"))?;
                for &t in ft.params.iter().rev() {
                    pop(&mut stack, p, Some(t))?;
                }
                stack.extend(&ft.results);
            }
            Drop => pop(&mut stack, p, None)?,
            LocalGet(i) => stack.push(local(i)?),
            LocalSet(i) => pop(&mut stack, p, Some(local(i)?))?,
            LocalTee(i) => {
                let t = local(i)?;
                pop(&mut stack, p, Some(t))?;
                stack.push(t);
            }
            I32Load(_) => {
                need_mem()?;
                pop(&mut stack, p, Some(I32))?;
                stack.push(I32);
            }
            I32Store(_) => {
                need_mem()?;
                pop(&mut stack, p, Some(I32))?;
                pop(&mut stack, p, Some(I32))?;
            }
            MemorySize => {
                need_mem()?;
                stack.push(I32);
            }
            MemoryGrow => {
                need_mem()?;
                pop(&mut stack, p, Some(I32))?;
                stack.push(I32);
            }
            I32Const(_) => stack.push(I32),
            I64Const(_) => stack.push(I64),
            I32Add | I32Sub => {
                pop(&mut stack, p, Some(I32))?;
                pop(&mut stack, p, Some(I32))?;
                stack.push(I32);
            }
        }
    }
    for &t in ty.results.iter().rev() {
        pop(&mut stack, polymorphic, Some(t))?;
    }
    if !stack.is_empty() {
        return Err("values left on the stack at function end".into());
    }
    Ok(())
}
