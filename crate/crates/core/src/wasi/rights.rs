use bitflags::bitflags;

bitflags! {
    /// What a descriptor may be used for.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct Rights: u8 {
        const READ = 1;
        const WRITE = 1 << 1;
        const SEEK = 1 << 2;
        const CREATE = 1 << 3;
    }
}

// preview1 rights bits
const FD_READ: u64 = 1 << 1;
const FD_SEEK: u64 = 1 << 2;
const FD_TELL: u64 = 1 << 5;
const FD_WRITE: u64 = 1 << 6;
const PATH_CREATE_DIRECTORY: u64 = 1 << 9;
const PATH_CREATE_FILE: u64 = 1 << 10;
const PATH_OPEN: u64 = 1 << 13;
const PATH_FILESTAT_GET: u64 = 1 << 18;
const FD_FILESTAT_GET: u64 = 1 << 21;
const PATH_UNLINK_FILE: u64 = 1 << 26;

impl Rights {
    pub fn from_wasi(bits: u64) -> Rights {
        let mut r = Rights::empty();
        if bits & FD_READ != 0 {
            r |= Rights::READ;
        }
        if bits & FD_WRITE != 0 {
            r |= Rights::WRITE;
        }
        if bits & (FD_SEEK | FD_TELL) != 0 {
            r |= Rights::SEEK;
        }
        if bits & (PATH_CREATE_FILE | PATH_CREATE_DIRECTORY) != 0 {
            r |= Rights::CREATE;
        }
        r
    }

    pub fn to_wasi(self) -> u64 {
        let mut bits = FD_FILESTAT_GET;
        if self.contains(Rights::READ) {
            bits |= FD_READ;
        }
        if self.contains(Rights::WRITE) {
            bits |= FD_WRITE;
        }
        if self.contains(Rights::SEEK) {
            bits |= FD_SEEK | FD_TELL;
        }
        if self.contains(Rights::CREATE) {
            bits |= PATH_CREATE_FILE | PATH_CREATE_DIRECTORY;
        }
        bits
    }

    /// Rights a preopened directory hands out.
    pub fn directory() -> u64 {
        Rights::all().to_wasi() | PATH_OPEN | PATH_FILESTAT_GET | PATH_UNLINK_FILE
    }
}
