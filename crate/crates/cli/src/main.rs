mod keys;

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use twinehost_core::bench::{self, BackendKind, BenchError, Op, WorkloadSpec};
use twinehost_core::engine::{self, memory::parse_bytes, ExitStatus, MemoryPolicy, TRAP_EXIT_CODE};
use twinehost_core::pfs::{self, PfsError, ProtectedFile, Variant, VerifyReport, DEFAULT_CACHE_CAPACITY};
use twinehost_core::sim::CostModel;
use twinehost_core::wasi::{Preopen, StoreSettings, WasiContext};

use keys::KeyArgs;

/// Exit code for usage, configuration and host I/O errors.
const HOST_ERROR: u8 = 2;
const INTEGRITY_ERROR: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "twinehost", version, about = "Run WASI modules behind a two-way sandbox and inspect protected files")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a module's `_start` export.
    Run(RunArgs),
    /// Inspect, verify or convert protected files.
    #[command(subcommand)]
    Pfs(PfsCmd),
    /// Storage micro-benchmarks; CSV on stdout unless --out is given.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Baseline,
    Optimized,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Baseline => Variant::Baseline,
            VariantArg::Optimized => Variant::Optimized,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    module: PathBuf,
    /// Arguments passed to the guest after its program name.
    #[arg(trailing_var_arg = true)]
    args: Vec<String>,
    /// Grant the guest a directory, GUEST=HOST. Repeatable.
    #[arg(long = "dir", value_name = "GUEST=HOST")]
    dirs: Vec<String>,
    #[arg(long = "env", value_name = "K=V")]
    envs: Vec<String>,
    /// Refuse every call that would be served by the untrusted host.
    #[arg(long)]
    no_untrusted_posix: bool,
    /// system, custom or prealloc:<bytes>
    #[arg(long, default_value = "system")]
    memory: String,
    #[arg(long, default_value = "paper", value_name = "NAME|PATH")]
    cost_profile: String,
    /// Secure-memory limit for the cost model, e.g. 8MiB.
    #[arg(long, value_name = "BYTES")]
    epc: Option<String>,
    /// Print the simulated cost report to stderr on exit.
    #[arg(long)]
    report: bool,
    #[arg(long, value_enum, default_value = "optimized")]
    variant: VariantArg,
    #[arg(long, default_value_t = DEFAULT_CACHE_CAPACITY)]
    cache: usize,
    #[arg(long, default_value = "default")]
    engine: String,
    #[command(flatten)]
    key: KeyArgs,
}

#[derive(Debug, Subcommand)]
enum PfsCmd {
    /// Print the cleartext superblock. Needs no key.
    Inspect { path: PathBuf },
    /// Authenticate every node; exit 1 and name the first bad node on failure.
    Verify {
        path: PathBuf,
        #[command(flatten)]
        key: KeyArgs,
    },
    /// Convert a plain file into a protected file.
    Encrypt {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value = "optimized")]
        variant: VariantArg,
        /// Overwrite an existing output file.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        key: KeyArgs,
    },
    /// Convert a protected file back into a plain file.
    Decrypt {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        key: KeyArgs,
    },
}

#[derive(Debug, Subcommand)]
enum BenchCmd {
    Insert(BenchArgs),
    SeqRead(BenchArgs),
    RandRead(BenchArgs),
    /// Cost breakdown of a random-read run as JSON.
    Profile(BenchArgs),
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// TOML workload file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    start: Option<u64>,
    #[arg(long)]
    step: Option<u64>,
    #[arg(long)]
    max: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Random reads per sample (default: one per record).
    #[arg(long)]
    reads: Option<u64>,
    #[arg(long)]
    blob_size: Option<usize>,
    /// Node cache capacity of the protected backends.
    #[arg(long)]
    cache: Option<usize>,
    #[arg(long, value_name = "NAME|PATH")]
    cost_profile: Option<String>,
    #[arg(long, value_name = "BYTES")]
    epc: Option<String>,
    /// Directory for the store files (default: a temporary directory).
    #[arg(long)]
    work_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error carrying the process exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: HOST_ERROR, err: e.into() }
    }
}

fn fail(code: u8, err: anyhow::Error) -> Failure {
    Failure { code, err }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Run(a) => cmd_run(a),
        Command::Pfs(p) => cmd_pfs(p),
        Command::Bench(b) => cmd_bench(b),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("twinehost: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn parse_pair<'a>(s: &'a str, what: &str) -> Result<(&'a str, &'a str)> {
    s.split_once('=').ok_or_else(|| anyhow!("{what} expects NAME=VALUE, got `{s}`"))
}

fn cost_model(profile: &str, epc: Option<&str>) -> Result<CostModel> {
    let model = CostModel::named(profile)?;
    Ok(match epc {
        Some(e) => model.with_epc_limit(parse_bytes(e).map_err(|m| anyhow!("--epc: {m}"))? as u64),
        None => model,
    })
}

fn cmd_run(a: RunArgs) -> Result<u8, Failure> {
    let bytes = std::fs::read(&a.module).with_context(|| format!("reading {}", a.module.display()))?;
    let engine = engine::select(&a.engine)?;
    let module = engine.load(&bytes)?;
    drop(bytes);

    let prog = a.module.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut b = WasiContext::builder()
        .arg(prog)
        .args(a.args)
        .passthrough(!a.no_untrusted_posix)
        .cost_model(cost_model(&a.cost_profile, a.epc.as_deref())?);
    for d in &a.dirs {
        let (guest, host) = parse_pair(d, "--dir")?;
        let p = Preopen::new(guest, host).with_context(|| format!("--dir {guest}: cannot use {host}"))?;
        b = b.preopen(p);
    }
    for e in &a.envs {
        let (k, v) = parse_pair(e, "--env")?;
        b = b.env(k, v);
    }
    match a.key.resolve()? {
        Some(policy) => {
            b = b.store(StoreSettings { policy, variant: a.variant.into(), cache_capacity: a.cache });
        }
        None if !a.dirs.is_empty() => warn!("no key configured; the guest cannot open protected files"),
        None => {}
    }
    let memory = MemoryPolicy::parse(&a.memory).map_err(|m| anyhow!("--memory: {m}"))?;

    let mut inst = module.instantiate(b.build(), memory)?;
    let status = inst.run_start()?;
    let mut ctx = inst.into_context();
    if let Err(e) = ctx.close_all() {
        warn!("closing guest files failed: {e:?}");
    }
    for d in ctx.capability_denials() {
        eprintln!("capability error: {d}");
    }
    if a.report {
        eprintln!("{}", ctx.accounting().to_json());
    }
    match status {
        ExitStatus::Trapped(msg) => {
            eprintln!("trap: {msg}");
            Ok(TRAP_EXIT_CODE as u8)
        }
        ExitStatus::Exited(code) => {
            info!("guest exited with {code}");
            // process exit statuses are 8 bits wide
            Ok(u8::try_from(code).unwrap_or(u8::MAX))
        }
    }
}

fn pfs_failure(e: PfsError) -> Failure {
    let code = if e.is_integrity() { INTEGRITY_ERROR } else { HOST_ERROR };
    fail(code, e.into())
}

fn cmd_pfs(cmd: PfsCmd) -> Result<u8, Failure> {
    match cmd {
        PfsCmd::Inspect { path } => {
            let sb = pfs::inspect_superblock(&path).map_err(pfs_failure)?;
            let layout = pfs::layout_nodes(sb.logical_size);
            let mut v = serde_json::to_value(&sb)?;
            v["data_nodes"] = layout.data_nodes.into();
            v["file_bytes"] = layout.file_len().into();
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(0)
        }
        PfsCmd::Verify { path, key } => {
            let key = key.require()?;
            match pfs::verify_file(&path, &key).map_err(pfs_failure)? {
                VerifyReport::Ok { nodes_checked } => {
                    println!("ok: {nodes_checked} nodes authenticated");
                    Ok(0)
                }
                VerifyReport::Integrity { node_id } => {
                    println!("integrity failure at node {node_id}");
                    Ok(INTEGRITY_ERROR)
                }
                VerifyReport::Structure { node_id, detail } => {
                    match node_id {
                        Some(n) => println!("structure error at node {n}: {detail}"),
                        None => println!("structure error: {detail}"),
                    }
                    Ok(INTEGRITY_ERROR)
                }
            }
        }
        PfsCmd::Encrypt { input, output, variant, force, key } => {
            let key = key.require()?;
            let mut src = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let create = if force { ProtectedFile::create_forced } else { ProtectedFile::create };
            let mut dst = create(&output, &key, variant.into(), DEFAULT_CACHE_CAPACITY).map_err(pfs_failure)?;
            let mut buf = vec![0u8; 1 << 16];
            loop {
                let n = src.read(&mut buf)?;
                if n == 0 {
                    break;
                }
                dst.write(&buf[..n]).map_err(pfs_failure)?;
            }
            dst.close().map_err(pfs_failure)?;
            Ok(0)
        }
        PfsCmd::Decrypt { input, output, key } => {
            let key = key.require()?;
            decrypt(&input, &output, &key)
        }
    }
}

fn decrypt(input: &Path, output: &Path, key: &pfs::KeyPolicy) -> Result<u8, Failure> {
    let sb = pfs::inspect_superblock(input).map_err(pfs_failure)?;
    let variant = Variant::for_cipher(sb.cipher_variant);
    let mut src = ProtectedFile::open(input, key, variant, DEFAULT_CACHE_CAPACITY).map_err(pfs_failure)?;
    // decrypt to a sibling and rename so a failed run leaves no partial plaintext
    let tmp = output.with_extension("partial");
    let res = (|| -> Result<(), Failure> {
        let mut dst = io::BufWriter::new(File::create(&tmp)?);
        let mut buf = vec![0u8; 1 << 16];
        loop {
            let n = src.read(&mut buf).map_err(pfs_failure)?;
            if n == 0 {
                break;
            }
            dst.write_all(&buf[..n])?;
        }
        dst.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, output)?;
        Ok(())
    })();
    if res.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    res.map(|()| 0)
}

fn bench_spec(a: &BenchArgs) -> Result<WorkloadSpec, BenchError> {
    let mut s = match &a.config {
        Some(p) => WorkloadSpec::load(p)?,
        None => WorkloadSpec::default(),
    };
    if let Some(v) = a.backend {
        s.backend = v;
    }
    if let Some(v) = a.max {
        s.max_records = v;
        if a.start.is_none() && a.config.is_none() {
            s.start_records = s.start_records.min(v);
        }
    }
    if let Some(v) = a.start {
        s.start_records = v;
    }
    if let Some(v) = a.step {
        s.step = v;
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if a.reads.is_some() {
        s.reads_per_step = a.reads;
    }
    if let Some(v) = a.blob_size {
        s.record_blob_size = v;
    }
    if a.cache.is_some() {
        s.cache_capacity = a.cache;
    }
    if let Some(v) = &a.cost_profile {
        s.cost_profile = v.clone();
    }
    if let Some(e) = &a.epc {
        s.epc_limit = Some(parse_bytes(e).map_err(|m| BenchError::Spec(format!("--epc: {m}")))? as u64);
    }
    if a.work_dir.is_some() {
        s.dir = a.work_dir.clone();
    }
    s.validate()?;
    s.cost_model()?;
    Ok(s)
}

fn bench_failure(e: BenchError) -> Failure {
    let code = if matches!(e, BenchError::Corruption(_)) { INTEGRITY_ERROR } else { HOST_ERROR };
    fail(code, e.into())
}

fn cmd_bench(cmd: BenchCmd) -> Result<u8, Failure> {
    let (op, a) = match &cmd {
        BenchCmd::Insert(a) => (Some(Op::Insert), a),
        BenchCmd::SeqRead(a) => (Some(Op::SeqRead), a),
        BenchCmd::RandRead(a) => (Some(Op::RandRead), a),
        BenchCmd::Profile(a) => (None, a),
    };
    let spec = bench_spec(a).map_err(bench_failure)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(io::BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    };
    match op {
        Some(op) => {
            let samples = bench::run_op(op, &spec).map_err(bench_failure)?;
            bench::emit_csv(&samples, &mut out).map_err(bench_failure)?;
        }
        None => {
            let b = bench::bench_profile(&spec).map_err(bench_failure)?;
            writeln!(out, "{}", b.to_json())?;
        }
    }
    out.flush()?;
    Ok(0)
}
