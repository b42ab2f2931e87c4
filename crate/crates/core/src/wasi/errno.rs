use std::fmt;

/// WASI preview1 error codes (the subset this host produces).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Errno {
    Success = 0,
    Acces = 2,
    Badf = 8,
    Exist = 20,
    Fault = 21,
    Inval = 28,
    Io = 29,
    Isdir = 31,
    Loop = 32,
    Nametoolong = 37,
    Noent = 44,
    Nospc = 51,
    Nosys = 52,
    Notdir = 54,
    Notempty = 55,
    Overflow = 61,
    Perm = 63,
    Spipe = 70,
    Notcapable = 76,
}

impl Errno {
    pub fn raw(self) -> u16 {
        self as u16
    }

    pub fn from_raw(v: u16) -> Option<Errno> {
        use Errno::*;
        Some(match v {
            0 => Success,
            2 => Acces,
            8 => Badf,
            20 => Exist,
            21 => Fault,
            28 => Inval,
            29 => Io,
            31 => Isdir,
            32 => Loop,
            37 => Nametoolong,
            44 => Noent,
            51 => Nospc,
            52 => Nosys,
            54 => Notdir,
            55 => Notempty,
            61 => Overflow,
            63 => Perm,
            70 => Spipe,
            76 => Notcapable,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        use Errno::*;
        match self {
            Success => "success",
            Acces => "permission denied",
            Badf => "bad file descriptor",
            Exist => "file exists",
            Fault => "bad address",
            Inval => "invalid argument",
            Io => "I/O error",
            Isdir => "is a directory",
            Loop => "too many levels of symbolic links",
            Nametoolong => "file name too long",
            Noent => "no such file or directory",
            Nospc => "no space left on device",
            Nosys => "function not supported",
            Notdir => "not a directory",
            Notempty => "directory not empty",
            Overflow => "value too large",
            Perm => "operation not permitted",
            Spipe => "invalid seek",
            Notcapable => "capabilities insufficient",
        }
    }

    /// Maps a host I/O error; anything unexpected becomes `Io`.
    pub fn from_io(e: &std::io::Error) -> Errno {
        use std::io::ErrorKind::*;
        match e.kind() {
            NotFound => Errno::Noent,
            PermissionDenied => Errno::Acces,
            AlreadyExists => Errno::Exist,
            InvalidInput => Errno::Inval,
            _ => match e.raw_os_error() {
                Some(20) => Errno::Notdir,
                Some(21) => Errno::Isdir,
                Some(39) => Errno::Notempty,
                Some(28) => Errno::Nospc,
                _ => Errno::Io,
            },
        }
    }
}

impl fmt::Display for Errno {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (errno {})", self.name(), self.raw())
    }
}

impl std::error::Error for Errno {}

pub type WasiResult<T> = Result<T, Errno>;
