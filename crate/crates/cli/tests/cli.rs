use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use twinehost_core::engine::fixtures;

const KEY: &str = "000102030405060708090a0b0c0d0e0f";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_twinehost"));
    c.env_remove("TWINEHOST_MASTER_SECRET");
    c
}

fn twinehost(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn module(dir: &Path, name: &str, bytes: &[u8]) -> String {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_hello() {
    let t = tempfile::tempdir().unwrap();
    let o = twinehost(&["run", &module(t.path(), "hello.wasm", &fixtures::hello())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "hello\n");
}

#[test]
fn run_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let o = twinehost(&["run", &module(t.path(), "e.wasm", &fixtures::exit_with(7))]);
    assert_eq!(o.status.code(), Some(7));

    let o = twinehost(&["run", &module(t.path(), "u.wasm", &fixtures::unreachable_trap())]);
    assert_eq!(o.status.code(), Some(134));
    assert!(stderr(&o).contains("unreachable"), "{}", stderr(&o));

    let o = twinehost(&["run", &module(t.path(), "bad.wasm", b"\0asmjunk")]);
    assert_eq!(o.status.code(), Some(2));
    let o = twinehost(&["run", &t.path().join("missing.wasm").display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    let o = twinehost(&["run", "--engine", "nope", &module(t.path(), "h.wasm", &fixtures::hello())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_without_untrusted_posix() {
    let t = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    let dir = format!("data={}", data.path().display());

    let m = module(t.path(), "p.wasm", &fixtures::passthrough_dependent("made"));
    let o = twinehost(&["run", "--dir", &dir, "--no-untrusted-posix", &m]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("capability error"), "{}", stderr(&o));
    assert!(!data.path().join("made").exists());

    let o = twinehost(&["run", "--dir", &dir, &m]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(data.path().join("made").is_dir());

    let m = module(t.path(), "t.wasm", &fixtures::trusted_only());
    let o = twinehost(&["run", "--no-untrusted-posix", "--report", &m]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "trusted\n");
    let err = stderr(&o);
    let json: serde_json::Value = serde_json::from_str(&err[err.find('{').unwrap()..]).unwrap();
    assert_eq!(json["passthrough_crossings"], 0);
    assert!(json["crossings"].as_u64().unwrap() > 0);
}

#[test]
fn run_stores_guest_files_protected() {
    let t = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    let m = module(t.path(), "f.wasm", &fixtures::file_round_trip("x", b"guest data"));
    let dir = format!("data={}", data.path().display());
    let o = twinehost(&["run", "--dir", &dir, "--key-hex", KEY, &m]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "guest data");
    let stored = std::fs::read(data.path().join("x")).unwrap();
    assert!(stored.starts_with(b"TWINEPFS"));
    assert!(!stored.windows(10).any(|w| w == b"guest data"));

    let x = data.path().join("x").display().to_string();
    let o = twinehost(&["pfs", "decrypt", &x, &t.path().join("x.plain").display().to_string(), "--key-hex", KEY]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(t.path().join("x.plain")).unwrap(), b"guest data");

    // without a key the guest's open is refused
    let o = twinehost(&["run", "--dir", &dir, &module(t.path(), "g.wasm", &fixtures::file_round_trip("y", b"z"))]);
    assert_ne!(o.status.code(), Some(0));
    assert!(!data.path().join("y").exists());
}

fn encrypt(plain: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["pfs", "encrypt"];
    let (p, o) = (plain.display().to_string(), out.display().to_string());
    args.extend([p.as_str(), o.as_str()]);
    args.extend(extra);
    twinehost(&args)
}

#[test]
fn pfs_round_trip_inspect_and_verify() {
    let t = tempfile::tempdir().unwrap();
    let plain = t.path().join("plain");
    let body: Vec<u8> = (0..1u32 << 20).map(|i| (i * 31 % 251) as u8).collect();
    std::fs::write(&plain, &body).unwrap();
    let prot = t.path().join("prot");

    for variant in ["baseline", "optimized"] {
        let o = encrypt(&plain, &prot, &["--key-hex", KEY, "--variant", variant, "--force"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let back = t.path().join("back");
        let o = twinehost(&["pfs", "decrypt", &prot.display().to_string(), &back.display().to_string(), "--key-hex", KEY]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(std::fs::read(&back).unwrap(), body);
    }

    let p = prot.display().to_string();
    let o = twinehost(&["pfs", "inspect", &p]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["node_count"], 259);
    assert_eq!(json["logical_size"], 1 << 20);

    let o = twinehost(&["pfs", "verify", &p, "--key-hex", KEY]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    // the refusal to overwrite is an I/O error
    assert_eq!(encrypt(&plain, &prot, &["--key-hex", KEY]).status.code(), Some(2));

    let mut bytes = std::fs::read(&prot).unwrap();
    let node = 17u64;
    bytes[(64 + node * 4124 + 100) as usize] ^= 0x04;
    std::fs::write(&prot, &bytes).unwrap();
    let o = twinehost(&["pfs", "verify", &p, "--key-hex", KEY]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains(&format!("node {node}")), "{}", stdout(&o));

    let o = twinehost(&["pfs", "decrypt", &p, &t.path().join("d").display().to_string(), "--key-hex", KEY]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!t.path().join("d").exists());
}

#[test]
fn pfs_key_sources() {
    let t = tempfile::tempdir().unwrap();
    let plain = t.path().join("plain");
    std::fs::write(&plain, b"abc").unwrap();
    let prot = t.path().join("prot");
    let p = prot.display().to_string();

    let o = encrypt(&plain, &prot, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no key"));

    let secret = "5a".repeat(32);
    let o = bin().args(["pfs", "encrypt", &plain.display().to_string(), &p]).env("TWINEHOST_MASTER_SECRET", &secret).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let file: PathBuf = t.path().join("secret");
    std::fs::write(&file, &secret).unwrap();
    let o = twinehost(&["pfs", "verify", &p, "--master-secret-file", &file.display().to_string()]);
    assert_eq!(o.status.code(), Some(0));
    // an explicit key wins over the file and is the wrong one here
    let o = twinehost(&["pfs", "verify", &p, "--master-secret-file", &file.display().to_string(), "--key-hex", KEY]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).contains(&secret) && !stdout(&o).contains(KEY));

    let o = twinehost(&["pfs", "inspect", &plain.display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_rand_read_csv() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("r.csv");
    let o = twinehost(&[
        "bench", "rand-read", "--backend", "protected_baseline", "--max", "4000", "--reads", "200",
        "--out", &out.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("records,op,backend,wall_ns"));
    assert!(lines[1..].iter().all(|l| l.contains(",rand_read,protected_baseline,")));
}

#[test]
fn bench_rejects_bad_specs() {
    for args in [
        &["bench", "insert", "--backend", "floppy"][..],
        &["bench", "insert", "--max", "0"],
        &["bench", "insert", "--step", "0"],
        &["bench", "insert", "--cost-profile", "warp"],
        &["bench", "insert", "--epc", "lots"],
    ] {
        let o = twinehost(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn bench_profile_json() {
    let o = twinehost(&["bench", "profile", "--backend", "protected_baseline", "--cost-profile", "paper", "--max", "8000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let clear = json["simulated_share"]["clear"].as_f64().unwrap();
    assert!((0.40..=0.60).contains(&clear), "{clear}");
}
