use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::errno::{Errno, WasiResult};

/// A directory capability granted at startup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preopen {
    pub guest: String,
    /// Canonical host path.
    pub root: PathBuf,
}

impl Preopen {
    pub fn new(guest: impl Into<String>, host: impl AsRef<Path>) -> io::Result<Self> {
        let root = fs::canonicalize(host.as_ref())?;
        if !root.is_dir() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("{} is not a directory", root.display()),
            ));
        }
        Ok(Preopen { guest: guest.into(), root })
    }
}

/// Result of resolving a guest path against a directory capability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    pub host: PathBuf,
    /// Components below the preopen root.
    pub components: Vec<String>,
}

/// Lexically normalizes `path` relative to `base` (components below the
/// root) and checks it stays inside `root`. Symbolic links anywhere below
/// the root are refused. Every host path inspected is appended to `touched`.
pub fn resolve(
    root: &Path,
    base: &[String],
    path: &str,
    touched: &mut Vec<PathBuf>,
) -> WasiResult<Resolved> {
    if path.is_empty() {
        return Err(Errno::Noent);
    }
    if path.contains('\0') {
        return Err(Errno::Inval);
    }
    if path.starts_with('/') || path.starts_with('\\') || looks_like_drive(path) {
        return Err(Errno::Notcapable);
    }
    let mut stack: Vec<String> = base.to_vec();
    for part in path.split('/') {
        match part {
            "" | "." => {}
            ".." => {
                if stack.pop().is_none() {
                    return Err(Errno::Notcapable);
                }
            }
            name => stack.push(name.to_string()),
        }
    }
    let mut host = root.to_path_buf();
    for (i, name) in stack.iter().enumerate() {
        host.push(name);
        touched.push(host.clone());
        match fs::symlink_metadata(&host) {
            Ok(md) if md.file_type().is_symlink() => {
                log::warn!("refusing symbolic link under sandbox root");
                return Err(Errno::Notcapable);
            }
            Ok(md) if !md.is_dir() && i + 1 < stack.len() => return Err(Errno::Notdir),
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                for rest in &stack[i + 1..] {
                    host.push(rest);
                }
                break;
            }
            Err(e) => return Err(Errno::from_io(&e)),
        }
    }
    debug_assert!(host.starts_with(root));
    Ok(Resolved { host, components: stack })
}

fn looks_like_drive(path: &str) -> bool {
    let b = path.as_bytes();
    cfg!(windows) && b.len() >= 2 && b[1] == b':'
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn lexical_cases() {
        let dir = tempfile::tempdir().unwrap();
        let root = fs::canonicalize(dir.path()).unwrap();
        let mut log = Vec::new();
        let r = resolve(&root, &[], "a/b.txt", &mut log).unwrap();
        assert_eq!(r.host, root.join("a").join("b.txt"));
        assert_eq!(r.components, names(&["a", "b.txt"]));
        assert_eq!(resolve(&root, &[], "../../etc/passwd", &mut log), Err(Errno::Notcapable));
        assert_eq!(resolve(&root, &[], "a/../..", &mut log), Err(Errno::Notcapable));
        assert_eq!(resolve(&root, &[], "/etc", &mut log), Err(Errno::Notcapable));
        assert_eq!(resolve(&root, &[], "", &mut log), Err(Errno::Noent));
        assert_eq!(resolve(&root, &[], "a\0b", &mut log), Err(Errno::Inval));
        let r = resolve(&root, &names(&["sub"]), "../x", &mut log).unwrap();
        assert_eq!(r.components, names(&["x"]));
        assert_eq!(resolve(&root, &names(&["sub"]), "../../x", &mut log), Err(Errno::Notcapable));
        assert!(log.iter().all(|p| p.starts_with(&root)));
    }

    #[cfg(unix)]
    #[test]
    fn symlinks_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let root = fs::canonicalize(dir.path()).unwrap();
        fs::create_dir(root.join("d")).unwrap();
        std::os::unix::fs::symlink("/tmp", root.join("d/link")).unwrap();
        std::os::unix::fs::symlink("d", root.join("inner")).unwrap();
        let mut log = Vec::new();
        assert_eq!(resolve(&root, &[], "d/link/x", &mut log), Err(Errno::Notcapable));
        assert_eq!(resolve(&root, &[], "inner/file", &mut log), Err(Errno::Notcapable));
        assert!(resolve(&root, &[], "d/file", &mut log).is_ok());
    }
}
