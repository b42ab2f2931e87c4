//! Built-in interpreter for straight-line modules: no control flow besides
//! `call` and `return`, i32/i64 values, one linear memory and WASI imports.

mod decode;

use std::sync::Arc;

use super::memory::{LinearMemory, MemoryPolicy, MemoryStats};
use super::{EngineError, ExitStatus, Instance, Module};
use crate::wasi::abi::{self, HostOutcome, Val, ValType};
use crate::wasi::tier::WasiCall;
use crate::wasi::WasiContext;

use decode::{Instr, Module as Decoded};

pub const WASI_MODULE: &str = "wasi_snapshot_preview1";
const MAX_CALL_DEPTH: usize = 1024;

#[derive(Debug, Default, Clone, Copy)]
pub struct StubEngine;

impl super::Engine for StubEngine {
    fn name(&self) -> &'static str {
        "stub"
    }

    fn load(&self, bytes: &[u8]) -> Result<Arc<dyn Module>, EngineError> {
        let decoded = decode::decode(bytes).map_err(EngineError::Validation)?;
        Ok(Arc::new(StubModule { decoded: Arc::new(decoded) }))
    }
}

#[derive(Debug)]
struct StubModule {
    decoded: Arc<Decoded>,
}

impl Module for StubModule {
    fn imports(&self) -> Vec<(String, String)> {
        self.decoded.imports.iter().map(|i| (i.module.clone(), i.name.clone())).collect()
    }

    fn min_memory_pages(&self) -> u32 {
        self.decoded.memory.map_or(0, |l| l.min)
    }

    fn instantiate(&self, ctx: WasiContext, policy: MemoryPolicy) -> Result<Box<dyn Instance>, EngineError> {
        let m = &self.decoded;
        let mut calls = Vec::with_capacity(m.imports.len());
        for imp in &m.imports {
            let qualified = format!("{}.{}", imp.module, imp.name);
            let call = (imp.module == WASI_MODULE)
                .then(|| WasiCall::from_name(&imp.name))
                .flatten()
                .ok_or_else(|| EngineError::Link(format!("unsupported import {qualified}")))?;
            let (params, results) = abi::signature(call);
            let ty = &m.types[imp.ty as usize];
            if ty.params != params || ty.results != results {
                return Err(EngineError::Link(format!("import {qualified} has the wrong signature")));
            }
            calls.push(call);
        }
        let memory = match m.memory {
            Some(l) => {
                let mut mem = LinearMemory::new(policy, l.min, l.max).map_err(EngineError::Link)?;
                for seg in &m.data {
                    let at = seg.offset as usize;
                    mem.bytes_mut()[at..at + seg.bytes.len()].copy_from_slice(&seg.bytes);
                }
                Some(mem)
            }
            None => None,
        };
        Ok(Box::new(StubInstance {
            module: Arc::clone(m),
            calls,
            memory,
            ctx,
            status: None,
            started: false,
        }))
    }
}

enum Unwind {
    Exit(u32),
    Trap(String),
}

struct StubInstance {
    module: Arc<Decoded>,
    calls: Vec<WasiCall>,
    memory: Option<LinearMemory>,
    ctx: WasiContext,
    status: Option<ExitStatus>,
    started: bool,
}

fn trap<T>(msg: &str) -> Result<T, Unwind> {
    Err(Unwind::Trap(msg.to_string()))
}

fn zero(t: ValType) -> Val {
    match t {
        ValType::I32 => Val::I32(0),
        ValType::I64 => Val::I64(0),
    }
}

impl StubInstance {
    fn invoke(&mut self, func: u32, args: Vec<Val>, depth: usize) -> Result<Vec<Val>, Unwind> {
        if depth > MAX_CALL_DEPTH {
            return trap("call stack exhausted");
        }
        let n_imports = self.calls.len() as u32;
        if func < n_imports {
            let call = self.calls[func as usize];
            let mem = self.memory.as_mut().map_or(&mut [][..], |m| m.bytes_mut());
            return match abi::dispatch(&mut self.ctx, call.name(), &args, mem) {
                HostOutcome::Return(e) => Ok(vec![Val::I32(e.raw() as i32)]),
                HostOutcome::Exit(code) => Err(Unwind::Exit(code)),
            };
        }
        let module = Arc::clone(&self.module);
        let idx = (func - n_imports) as usize;
        let body = &module.bodies[idx];
        let ty = &module.types[module.funcs[idx] as usize];
        let mut locals = args;
        locals.extend(body.locals.iter().map(|&t| zero(t)));
        let mut stack: Vec<Val> = Vec::new();

        // validation guarantees operand types, so mismatches here are bugs
        fn pop_i32(s: &mut Vec<Val>) -> i32 {
            match s.pop() {
                Some(Val::I32(v)) => v,
                other => unreachable!("validated stack held {other:?}"),
            }
        }

        for ins in &body.code {
            match *ins {
                Instr::Unreachable => return trap("unreachable executed"),
                Instr::Nop => {}
                Instr::Return => break,
                Instr::Call(f) => {
                    let fty = module.func_type(f).expect("validated");
                    let args = stack.split_off(stack.len() - fty.params.len());
                    let results = self.invoke(f, args, depth + 1)?;
                    stack.extend(results);
                }
                Instr::Drop => {
                    stack.pop();
                }
                Instr::LocalGet(i) => stack.push(locals[i as usize]),
                Instr::LocalSet(i) => locals[i as usize] = stack.pop().expect("validated"),
                Instr::LocalTee(i) => locals[i as usize] = *stack.last().expect("validated"),
                Instr::I32Load(offset) => {
                    let addr = pop_i32(&mut stack) as u32 as usize + offset as usize;
                    let mem = self.memory.as_ref().expect("validated").bytes();
                    let Some(b) = mem.get(addr..addr + 4) else {
                        return trap("out of bounds memory access");
                    };
                    stack.push(Val::I32(i32::from_le_bytes(b.try_into().unwrap())));
                }
                Instr::I32Store(offset) => {
                    let v = pop_i32(&mut stack);
                    let addr = pop_i32(&mut stack) as u32 as usize + offset as usize;
                    let mem = self.memory.as_mut().expect("validated").bytes_mut();
                    let Some(b) = mem.get_mut(addr..addr + 4) else {
                        return trap("out of bounds memory access");
                    };
                    b.copy_from_slice(&v.to_le_bytes());
                }
                Instr::MemorySize => {
                    let pages = self.memory.as_ref().expect("validated").pages();
                    stack.push(Val::I32(pages as i32));
                }
                Instr::MemoryGrow => {
                    let delta = pop_i32(&mut stack) as u32;
                    let old = self.memory.as_mut().expect("validated").grow(delta);
                    stack.push(Val::I32(old));
                }
                Instr::I32Const(v) => stack.push(Val::I32(v)),
                Instr::I64Const(v) => stack.push(Val::I64(v)),
                Instr::I32Add | Instr::I32Sub => {
                    let b = pop_i32(&mut stack);
                    let a = pop_i32(&mut stack);
                    let r = if matches!(ins, Instr::I32Add) { a.wrapping_add(b) } else { a.wrapping_sub(b) };
                    stack.push(Val::I32(r));
                }
            }
        }
        Ok(stack.split_off(stack.len() - ty.results.len()))
    }
}

impl Instance for StubInstance {
    fn run_start(&mut self) -> Result<ExitStatus, EngineError> {
        if self.started {
            return Err(EngineError::Usage("`_start` already invoked on this instance".into()));
        }
        self.started = true;
        let start = self.module.export("_start").expect("validated").index;
        let status = match self.invoke(start, Vec::new(), 0) {
            Ok(_) => ExitStatus::Exited(0),
            Err(Unwind::Exit(code)) => ExitStatus::Exited(code),
            Err(Unwind::Trap(msg)) => ExitStatus::Trapped(msg),
        };
        self.status = Some(status.clone());
        Ok(status)
    }

    fn status(&self) -> Option<&ExitStatus> {
        self.status.as_ref()
    }

    fn context(&self) -> &WasiContext {
        &self.ctx
    }

    fn context_mut(&mut self) -> &mut WasiContext {
        &mut self.ctx
    }

    fn into_context(self: Box<Self>) -> WasiContext {
        self.ctx
    }

    fn memory_stats(&self) -> Option<MemoryStats> {
        self.memory.as_ref().map(|m| m.stats())
    }
}
