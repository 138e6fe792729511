//! The abstract OS interface and its real-syscall instance.
//!
//! Every effect the semantics performs goes through [`Os`]. The calls fall
//! into four groups:
//!
//! * process: `fork_shell`, `execve`, `wait`, `getpid`, `kill`,
//!   `pending_signal`, `set_signal`, `times`
//! * fd: `pipe`, `close`, `dup2`, `is_open`, `read`, `read_all`,
//!   `read_line`, `write_all`, `file_redir`, `close_and_save`, `renumber`,
//!   `heredoc`, `isatty`
//! * fs: `file_exists`, `file_executable`, `access`, `read_dir`, `stat`
//!   (one call standing in for the stat-kind family), `getcwd`, `chdir`,
//!   `umask`, `home_dir`, `read_file`
//! * parser prompts: `set_ps1`, `set_ps2`

use std::ffi::{CString, OsStr};
use std::os::unix::ffi::OsStrExt;
use std::sync::atomic::{AtomicI32, AtomicUsize, Ordering};

use thiserror::Error;

use crate::ast::{Bytes, Command, Fd, FileMode, Pid, SavedFd};
use crate::state::ShellState;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct OsError {
    pub errno: i32,
    pub message: String,
}

impl OsError {
    pub fn new(errno: i32, message: impl Into<String>) -> Self {
        OsError { errno, message: message.into() }
    }

    pub fn from_errno(errno: i32) -> Self {
        OsError { errno, message: errno_message(errno) }
    }

    fn last() -> Self {
        OsError::from_errno(std::io::Error::last_os_error().raw_os_error().unwrap_or(libc::EIO))
    }
}

pub fn errno_message(errno: i32) -> String {
    match errno {
        libc::ENOENT => "No such file or directory".into(),
        libc::EACCES => "Permission denied".into(),
        libc::EEXIST => "File exists".into(),
        libc::EISDIR => "Is a directory".into(),
        libc::ENOTDIR => "Not a directory".into(),
        libc::EBADF => "Bad file descriptor".into(),
        libc::EPIPE => "Broken pipe".into(),
        libc::ECHILD => "No child processes".into(),
        libc::ESRCH => "No such process".into(),
        libc::ENOEXEC => "Exec format error".into(),
        other => std::io::Error::from_raw_os_error(other).to_string(),
    }
}

pub type OsResult<T> = Result<T, OsError>;

/// Signals the shell knows by name. `Exit` is the pseudo-signal for EXIT traps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Signal {
    Exit,
    Hup,
    Int,
    Quit,
    Abrt,
    Kill,
    Usr1,
    Usr2,
    Pipe,
    Alrm,
    Term,
    Chld,
    Cont,
    Stop,
    Tstp,
    Ttin,
    Ttou,
}

impl Signal {
    pub const ALL: [Signal; 17] = [
        Signal::Exit,
        Signal::Hup,
        Signal::Int,
        Signal::Quit,
        Signal::Abrt,
        Signal::Kill,
        Signal::Usr1,
        Signal::Usr2,
        Signal::Pipe,
        Signal::Alrm,
        Signal::Term,
        Signal::Chld,
        Signal::Cont,
        Signal::Stop,
        Signal::Tstp,
        Signal::Ttin,
        Signal::Ttou,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Exit => "EXIT",
            Signal::Hup => "HUP",
            Signal::Int => "INT",
            Signal::Quit => "QUIT",
            Signal::Abrt => "ABRT",
            Signal::Kill => "KILL",
            Signal::Usr1 => "USR1",
            Signal::Usr2 => "USR2",
            Signal::Pipe => "PIPE",
            Signal::Alrm => "ALRM",
            Signal::Term => "TERM",
            Signal::Chld => "CHLD",
            Signal::Cont => "CONT",
            Signal::Stop => "STOP",
            Signal::Tstp => "TSTP",
            Signal::Ttin => "TTIN",
            Signal::Ttou => "TTOU",
        }
    }

    /// Host signal number (Linux numbering); 0 for EXIT.
    pub fn number(self) -> i32 {
        match self {
            Signal::Exit => 0,
            Signal::Hup => libc::SIGHUP,
            Signal::Int => libc::SIGINT,
            Signal::Quit => libc::SIGQUIT,
            Signal::Abrt => libc::SIGABRT,
            Signal::Kill => libc::SIGKILL,
            Signal::Usr1 => libc::SIGUSR1,
            Signal::Usr2 => libc::SIGUSR2,
            Signal::Pipe => libc::SIGPIPE,
            Signal::Alrm => libc::SIGALRM,
            Signal::Term => libc::SIGTERM,
            Signal::Chld => libc::SIGCHLD,
            Signal::Cont => libc::SIGCONT,
            Signal::Stop => libc::SIGSTOP,
            Signal::Tstp => libc::SIGTSTP,
            Signal::Ttin => libc::SIGTTIN,
            Signal::Ttou => libc::SIGTTOU,
        }
    }

    pub fn from_number(n: i32) -> Option<Signal> {
        Signal::ALL.into_iter().find(|s| s.number() == n)
    }

    /// Accepts `TERM`, `SIGTERM`, `term`, or a number.
    pub fn parse(s: &[u8]) -> Option<Signal> {
        if !s.is_empty() && s.iter().all(u8::is_ascii_digit) {
            return std::str::from_utf8(s).ok()?.parse().ok().and_then(Signal::from_number);
        }
        let up = s.to_ascii_uppercase();
        let name = up.strip_prefix(b"SIG").unwrap_or(&up);
        Signal::ALL.into_iter().find(|sig| sig.name().as_bytes() == name)
    }

    /// Whether the default action ends the process.
    pub fn terminates_by_default(self) -> bool {
        !matches!(self, Signal::Exit | Signal::Chld | Signal::Cont | Signal::Stop | Signal::Tstp | Signal::Ttin | Signal::Ttou)
    }

    pub fn can_catch(self) -> bool {
        !matches!(self, Signal::Kill | Signal::Stop)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalAction {
    Default,
    Ignore,
    Catch,
}

/// Child-side fd wiring applied by `fork_shell` before running the command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdSetup {
    Dup2(Fd, Fd),
    Close(Fd),
    /// Point fd 0 at /dev/null (background jobs).
    NullStdin,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WaitResult {
    Exited(u8),
    /// The target cannot progress right now (symbolic only).
    Blocked(Pid),
    NoSuchChild,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReadAll {
    Data(Bytes),
    Blocked(Pid),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LineRead {
    /// A line without its newline; `terminated` is false when EOF ended it.
    Line { data: Bytes, terminated: bool },
    Eof,
    Blocked(Pid),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExecOutcome {
    /// The simulated program ran to completion with this status.
    Exited(u8),
    /// The simulated program needs input from this process first.
    Blocked(Pid),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Regular,
    Directory,
    Symlink,
    CharDevice,
    BlockDevice,
    Fifo,
    Socket,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FileStat {
    pub kind: FileKind,
    pub size: u64,
    pub mode: u32,
    pub mtime: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
    Execute,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Times {
    pub user: f64,
    pub system: f64,
    pub child_user: f64,
    pub child_system: f64,
}

pub trait Os {
    // Process calls.
    fn fork_shell(&mut self, st: &ShellState, cmd: Command, setup: &[FdSetup]) -> OsResult<Pid>;
    /// Replace the process image. Returns only on failure, or with the
    /// status of a simulated program.
    fn execve(&mut self, path: &[u8], args: &[Bytes], env: &[(Bytes, Bytes)]) -> OsResult<ExecOutcome>;
    fn wait(&mut self, pid: Pid) -> WaitResult;
    fn getpid(&self) -> Pid;
    fn kill(&mut self, pid: Pid, sig: Signal) -> OsResult<()>;
    fn pending_signal(&mut self) -> Option<Signal>;
    fn set_signal(&mut self, sig: Signal, action: SignalAction);
    fn times(&self) -> Times;

    // Fd calls.
    fn pipe(&mut self) -> OsResult<(Fd, Fd)>;
    fn close(&mut self, fd: Fd);
    fn dup2(&mut self, from: Fd, to: Fd) -> OsResult<()>;
    fn is_open(&self, fd: Fd) -> bool;
    fn read(&mut self, fd: Fd, max: usize) -> OsResult<ReadAll>;
    fn read_all(&mut self, fd: Fd) -> OsResult<ReadAll>;
    fn read_line(&mut self, fd: Fd, allow_continuation: bool) -> OsResult<LineRead>;
    fn write_all(&mut self, fd: Fd, data: &[u8]) -> OsResult<()>;
    fn file_redir(&mut self, mode: FileMode, path: &[u8]) -> OsResult<Fd>;
    fn close_and_save(&mut self, fd: Fd) -> OsResult<SavedFd>;
    fn renumber(&mut self, close_orig: bool, orig: Fd, wanted: Fd) -> OsResult<SavedFd>;
    fn heredoc(&mut self, body: &[u8]) -> OsResult<Fd>;
    fn isatty(&self, fd: Fd) -> bool;

    // Filesystem calls.
    fn file_exists(&self, path: &[u8]) -> bool;
    fn file_executable(&self, path: &[u8]) -> bool;
    fn access(&self, path: &[u8], mode: Access) -> bool;
    fn read_dir(&self, path: &[u8]) -> Option<Vec<Bytes>>;
    fn stat(&self, path: &[u8], follow: bool) -> Option<FileStat>;
    fn getcwd(&self) -> OsResult<Bytes>;
    fn chdir(&mut self, path: &[u8]) -> OsResult<()>;
    fn umask(&mut self, new: Option<u32>) -> u32;
    fn home_dir(&self, user: &[u8]) -> Option<Bytes>;
    fn read_file(&mut self, path: &[u8]) -> OsResult<Bytes>;

    // Parser prompt calls; prompts are inert bytes.
    fn set_ps1(&mut self, text: &[u8]);
    fn set_ps2(&mut self, text: &[u8]);
}

/// Restore an fd saved by `close_and_save`/`renumber`.
pub fn restore_fd(os: &mut dyn Os, fd: Fd, saved: SavedFd) {
    match saved {
        SavedFd::RestoreFrom(from) => {
            let _ = os.dup2(from, fd);
            os.close(from);
        }
        SavedFd::Close => os.close(fd),
    }
}

// ---------------------------------------------------------------------------
// System instance

const SIGNAL_RING: usize = 64;
static RING: [AtomicI32; SIGNAL_RING] = [const { AtomicI32::new(0) }; SIGNAL_RING];
static RING_TAIL: AtomicUsize = AtomicUsize::new(0);

extern "C" fn record_signal(sig: libc::c_int) {
    let slot = RING_TAIL.fetch_add(1, Ordering::SeqCst);
    RING[slot % SIGNAL_RING].store(sig, Ordering::SeqCst);
}

fn cstring(b: &[u8]) -> OsResult<CString> {
    CString::new(b.to_vec()).map_err(|_| OsError::new(libc::EINVAL, "path contains NUL"))
}

fn os_path(b: &[u8]) -> &std::path::Path {
    std::path::Path::new(OsStr::from_bytes(b))
}

/// Decode a raw wait status into a shell status.
pub fn decode_wait_status(status: libc::c_int) -> u8 {
    if libc::WIFEXITED(status) {
        libc::WEXITSTATUS(status) as u8
    } else if libc::WIFSIGNALED(status) {
        (128 + libc::WTERMSIG(status)).min(255) as u8
    } else {
        255
    }
}

/// The real-syscall instance.
#[derive(Debug)]
pub struct SystemOs {
    ring_head: usize,
    ps1: Bytes,
    ps2: Bytes,
}

impl Default for SystemOs {
    fn default() -> Self {
        SystemOs::new()
    }
}

impl SystemOs {
    pub fn new() -> Self {
        // SAFETY: resetting a disposition has no memory-safety preconditions.
        unsafe {
            libc::signal(libc::SIGPIPE, libc::SIG_DFL);
        }
        SystemOs { ring_head: RING_TAIL.load(Ordering::SeqCst), ps1: Vec::new(), ps2: Vec::new() }
    }

    fn cloexec_dup_high(fd: Fd) -> OsResult<Fd> {
        // SAFETY: plain fcntl on an integer fd.
        let r = unsafe { libc::fcntl(fd, libc::F_DUPFD_CLOEXEC, 10) };
        if r < 0 {
            Err(OsError::last())
        } else {
            Ok(r)
        }
    }

    fn apply_setup(setup: &[FdSetup]) {
        for s in setup {
            // SAFETY: fd manipulation in the freshly forked child.
            unsafe {
                match *s {
                    FdSetup::Dup2(from, to) => {
                        if from != to {
                            libc::dup2(from, to);
                        }
                    }
                    FdSetup::Close(fd) => {
                        libc::close(fd);
                    }
                    FdSetup::NullStdin => {
                        let fd = libc::open(c"/dev/null".as_ptr(), libc::O_RDONLY);
                        if fd > 0 {
                            libc::dup2(fd, 0);
                            libc::close(fd);
                        }
                    }
                }
            }
        }
    }

    fn install(sig: Signal, action: SignalAction) {
        let n = sig.number();
        if n == 0 || !sig.can_catch() {
            return;
        }
        // SAFETY: installing a handler that only touches atomics.
        unsafe {
            let mut sa: libc::sigaction = std::mem::zeroed();
            sa.sa_sigaction = match action {
                SignalAction::Default => libc::SIG_DFL,
                SignalAction::Ignore => libc::SIG_IGN,
                SignalAction::Catch => record_signal as extern "C" fn(libc::c_int) as usize,
            };
            libc::sigemptyset(&mut sa.sa_mask);
            sa.sa_flags = 0;
            libc::sigaction(n, &sa, std::ptr::null_mut());
        }
    }
}

impl Os for SystemOs {
    fn fork_shell(&mut self, st: &ShellState, cmd: Command, setup: &[FdSetup]) -> OsResult<Pid> {
        // SAFETY: the child only runs the evaluator and then `_exit`s.
        let pid = unsafe { libc::fork() };
        if pid < 0 {
            return Err(OsError::last());
        }
        if pid == 0 {
            Self::apply_setup(setup);
            for (sig, handler) in &st.traps {
                if !handler.is_empty() {
                    Self::install(*sig, SignalAction::Default);
                }
            }
            self.ring_head = RING_TAIL.load(Ordering::SeqCst);
            let child = st.for_subshell();
            let status = crate::eval::run_to_exit(self, child, cmd);
            // SAFETY: terminate the child without running parent destructors.
            unsafe { libc::_exit(status as i32) }
        }
        Ok(Pid(pid))
    }

    fn execve(&mut self, path: &[u8], args: &[Bytes], env: &[(Bytes, Bytes)]) -> OsResult<ExecOutcome> {
        let cpath = cstring(path)?;
        let cargs: Vec<CString> = args.iter().map(|a| cstring(a)).collect::<OsResult<_>>()?;
        let cenv: Vec<CString> = env
            .iter()
            .map(|(k, v)| {
                let mut kv = k.clone();
                kv.push(b'=');
                kv.extend_from_slice(v);
                cstring(&kv)
            })
            .collect::<OsResult<_>>()?;
        let mut argv: Vec<*const libc::c_char> = cargs.iter().map(|c| c.as_ptr()).collect();
        argv.push(std::ptr::null());
        let mut envp: Vec<*const libc::c_char> = cenv.iter().map(|c| c.as_ptr()).collect();
        envp.push(std::ptr::null());
        // Caught signals revert to default across exec anyway; ignored ones stay.
        // SAFETY: argv/envp are NUL-terminated arrays of valid C strings.
        unsafe {
            libc::execve(cpath.as_ptr(), argv.as_ptr(), envp.as_ptr());
        }
        Err(OsError::last())
    }

    fn wait(&mut self, pid: Pid) -> WaitResult {
        loop {
            let mut status = 0;
            // SAFETY: waitpid with a valid out-pointer.
            let r = unsafe { libc::waitpid(pid.0, &mut status, 0) };
            if r == pid.0 {
                return WaitResult::Exited(decode_wait_status(status));
            }
            let err = std::io::Error::last_os_error().raw_os_error().unwrap_or(0);
            if err != libc::EINTR {
                return WaitResult::NoSuchChild;
            }
        }
    }

    fn getpid(&self) -> Pid {
        // SAFETY: getpid has no preconditions.
        Pid(unsafe { libc::getpid() })
    }

    fn kill(&mut self, pid: Pid, sig: Signal) -> OsResult<()> {
        // SAFETY: kill has no memory preconditions.
        let r = unsafe { libc::kill(pid.0, sig.number()) };
        if r < 0 {
            Err(OsError::last())
        } else {
            Ok(())
        }
    }

    fn pending_signal(&mut self) -> Option<Signal> {
        let tail = RING_TAIL.load(Ordering::SeqCst);
        if self.ring_head >= tail {
            return None;
        }
        let n = RING[self.ring_head % SIGNAL_RING].load(Ordering::SeqCst);
        self.ring_head += 1;
        Signal::from_number(n)
    }

    fn set_signal(&mut self, sig: Signal, action: SignalAction) {
        Self::install(sig, action);
    }

    fn times(&self) -> Times {
        fn secs(tv: libc::timeval) -> f64 {
            tv.tv_sec as f64 + tv.tv_usec as f64 / 1e6
        }
        // SAFETY: getrusage writes into the zeroed structs.
        unsafe {
            let mut me: libc::rusage = std::mem::zeroed();
            let mut kids: libc::rusage = std::mem::zeroed();
            libc::getrusage(libc::RUSAGE_SELF, &mut me);
            libc::getrusage(libc::RUSAGE_CHILDREN, &mut kids);
            Times {
                user: secs(me.ru_utime),
                system: secs(me.ru_stime),
                child_user: secs(kids.ru_utime),
                child_system: secs(kids.ru_stime),
            }
        }
    }

    fn pipe(&mut self) -> OsResult<(Fd, Fd)> {
        let mut fds = [0; 2];
        // SAFETY: pipe writes two fds into the array.
        let r = unsafe { libc::pipe(fds.as_mut_ptr()) };
        if r < 0 {
            Err(OsError::last())
        } else {
            Ok((fds[0], fds[1]))
        }
    }

    fn close(&mut self, fd: Fd) {
        // SAFETY: closing an integer fd.
        unsafe {
            libc::close(fd);
        }
    }

    fn dup2(&mut self, from: Fd, to: Fd) -> OsResult<()> {
        // SAFETY: dup2 on integer fds.
        let r = unsafe { libc::dup2(from, to) };
        if r < 0 {
            Err(OsError::last())
        } else {
            Ok(())
        }
    }

    fn is_open(&self, fd: Fd) -> bool {
        // SAFETY: F_GETFD query.
        unsafe { libc::fcntl(fd, libc::F_GETFD) >= 0 }
    }

    fn read(&mut self, fd: Fd, max: usize) -> OsResult<ReadAll> {
        let mut buf = vec![0u8; max.max(1)];
        loop {
            // SAFETY: buf has room for max bytes.
            let n = unsafe { libc::read(fd, buf.as_mut_ptr().cast(), buf.len()) };
            if n >= 0 {
                buf.truncate(n as usize);
                return Ok(ReadAll::Data(buf));
            }
            let e = OsError::last();
            if e.errno != libc::EINTR {
                return Err(e);
            }
        }
    }

    fn read_all(&mut self, fd: Fd) -> OsResult<ReadAll> {
        let mut out = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            // SAFETY: buf is a valid buffer of its length.
            let n = unsafe { libc::read(fd, buf.as_mut_ptr().cast(), buf.len()) };
            if n > 0 {
                out.extend_from_slice(&buf[..n as usize]);
            } else if n == 0 {
                return Ok(ReadAll::Data(out));
            } else {
                let e = OsError::last();
                if e.errno != libc::EINTR {
                    return Err(e);
                }
            }
        }
    }

    fn read_line(&mut self, fd: Fd, allow_continuation: bool) -> OsResult<LineRead> {
        let mut out = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            // SAFETY: one-byte read so nothing past the newline is consumed.
            let n = unsafe { libc::read(fd, byte.as_mut_ptr().cast(), 1) };
            if n < 0 {
                let e = OsError::last();
                if e.errno == libc::EINTR {
                    continue;
                }
                return Err(e);
            }
            if n == 0 {
                return Ok(if out.is_empty() {
                    LineRead::Eof
                } else {
                    LineRead::Line { data: out, terminated: false }
                });
            }
            if byte[0] == b'\n' {
                if allow_continuation && ends_with_unescaped_backslash(&out) {
                    out.push(b'\n');
                    continue;
                }
                return Ok(LineRead::Line { data: out, terminated: true });
            }
            out.push(byte[0]);
        }
    }

    fn write_all(&mut self, fd: Fd, mut data: &[u8]) -> OsResult<()> {
        while !data.is_empty() {
            // SAFETY: data is a valid slice.
            let n = unsafe { libc::write(fd, data.as_ptr().cast(), data.len()) };
            if n < 0 {
                let e = OsError::last();
                if e.errno == libc::EINTR {
                    continue;
                }
                return Err(e);
            }
            data = &data[n as usize..];
        }
        Ok(())
    }

    fn file_redir(&mut self, mode: FileMode, path: &[u8]) -> OsResult<Fd> {
        let flags = match mode {
            FileMode::Write | FileMode::Clobber => libc::O_WRONLY | libc::O_CREAT | libc::O_TRUNC,
            FileMode::Append => libc::O_WRONLY | libc::O_CREAT | libc::O_APPEND,
            FileMode::Read => libc::O_RDONLY,
            FileMode::ReadWrite => libc::O_RDWR | libc::O_CREAT,
        };
        let c = cstring(path)?;
        // SAFETY: c is a valid C string.
        let fd = unsafe { libc::open(c.as_ptr(), flags, 0o666) };
        if fd < 0 {
            Err(OsError::last())
        } else {
            Ok(fd)
        }
    }

    fn close_and_save(&mut self, fd: Fd) -> OsResult<SavedFd> {
        if !self.is_open(fd) {
            return Ok(SavedFd::Close);
        }
        let saved = Self::cloexec_dup_high(fd)?;
        self.close(fd);
        Ok(SavedFd::RestoreFrom(saved))
    }

    fn renumber(&mut self, close_orig: bool, orig: Fd, wanted: Fd) -> OsResult<SavedFd> {
        if orig == wanted {
            // The open landed on the target itself, so it was closed before.
            return Ok(SavedFd::Close);
        }
        let saved = if self.is_open(wanted) {
            SavedFd::RestoreFrom(Self::cloexec_dup_high(wanted)?)
        } else {
            SavedFd::Close
        };
        if let Err(e) = self.dup2(orig, wanted) {
            if let SavedFd::RestoreFrom(s) = saved {
                self.close(s);
            }
            return Err(e);
        }
        if close_orig {
            self.close(orig);
        }
        Ok(saved)
    }

    fn heredoc(&mut self, body: &[u8]) -> OsResult<Fd> {
        use std::io::{Seek, Write};
        use std::os::fd::IntoRawFd;
        // An unlinked temp file never blocks, whatever the body size.
        let mut f = tempfile::tempfile().map_err(|e| OsError::new(e.raw_os_error().unwrap_or(libc::EIO), e.to_string()))?;
        f.write_all(body).map_err(|e| OsError::new(libc::EIO, e.to_string()))?;
        f.rewind().map_err(|e| OsError::new(libc::EIO, e.to_string()))?;
        Ok(f.into_raw_fd())
    }

    fn isatty(&self, fd: Fd) -> bool {
        // SAFETY: isatty on an integer fd.
        unsafe { libc::isatty(fd) == 1 }
    }

    fn file_exists(&self, path: &[u8]) -> bool {
        std::fs::symlink_metadata(os_path(path)).is_ok()
    }

    fn file_executable(&self, path: &[u8]) -> bool {
        match std::fs::metadata(os_path(path)) {
            Ok(m) => m.is_file() && self.access(path, Access::Execute),
            Err(_) => false,
        }
    }

    fn access(&self, path: &[u8], mode: Access) -> bool {
        let Ok(c) = cstring(path) else { return false };
        let m = match mode {
            Access::Read => libc::R_OK,
            Access::Write => libc::W_OK,
            Access::Execute => libc::X_OK,
        };
        // SAFETY: c is a valid C string.
        unsafe { libc::access(c.as_ptr(), m) == 0 }
    }

    fn read_dir(&self, path: &[u8]) -> Option<Vec<Bytes>> {
        let rd = std::fs::read_dir(os_path(path)).ok()?;
        let mut names: Vec<Bytes> = rd.filter_map(|e| e.ok()).map(|e| e.file_name().as_bytes().to_vec()).collect();
        names.sort();
        Some(names)
    }

    fn stat(&self, path: &[u8], follow: bool) -> Option<FileStat> {
        use std::os::unix::fs::{FileTypeExt, MetadataExt};
        let m = if follow { std::fs::metadata(os_path(path)) } else { std::fs::symlink_metadata(os_path(path)) }.ok()?;
        let ft = m.file_type();
        let kind = if ft.is_symlink() {
            FileKind::Symlink
        } else if ft.is_dir() {
            FileKind::Directory
        } else if ft.is_char_device() {
            FileKind::CharDevice
        } else if ft.is_block_device() {
            FileKind::BlockDevice
        } else if ft.is_fifo() {
            FileKind::Fifo
        } else if ft.is_socket() {
            FileKind::Socket
        } else {
            FileKind::Regular
        };
        Some(FileStat { kind, size: m.size(), mode: m.mode(), mtime: m.mtime() })
    }

    fn getcwd(&self) -> OsResult<Bytes> {
        std::env::current_dir()
            .map(|p| p.as_os_str().as_bytes().to_vec())
            .map_err(|e| OsError::new(e.raw_os_error().unwrap_or(libc::EIO), e.to_string()))
    }

    fn chdir(&mut self, path: &[u8]) -> OsResult<()> {
        let c = cstring(path)?;
        // SAFETY: c is a valid C string.
        if unsafe { libc::chdir(c.as_ptr()) } < 0 {
            Err(OsError::last())
        } else {
            Ok(())
        }
    }

    fn umask(&mut self, new: Option<u32>) -> u32 {
        // SAFETY: umask has no preconditions.
        unsafe {
            let old = libc::umask(new.unwrap_or(0) as libc::mode_t);
            if new.is_none() {
                libc::umask(old);
            }
            old as u32
        }
    }

    fn home_dir(&self, user: &[u8]) -> Option<Bytes> {
        let c = cstring(user).ok()?;
        // SAFETY: getpwnam returns a pointer to static storage or null.
        unsafe {
            let pw = libc::getpwnam(c.as_ptr());
            if pw.is_null() || (*pw).pw_dir.is_null() {
                return None;
            }
            Some(std::ffi::CStr::from_ptr((*pw).pw_dir).to_bytes().to_vec())
        }
    }

    fn read_file(&mut self, path: &[u8]) -> OsResult<Bytes> {
        std::fs::read(os_path(path)).map_err(|e| {
            let errno = e.raw_os_error().unwrap_or(libc::EIO);
            OsError::from_errno(errno)
        })
    }

    fn set_ps1(&mut self, text: &[u8]) {
        self.ps1 = text.to_vec();
    }

    fn set_ps2(&mut self, text: &[u8]) {
        self.ps2 = text.to_vec();
    }
}

/// True if the line ends in a backslash that is not itself escaped.
pub fn ends_with_unescaped_backslash(line: &[u8]) -> bool {
    let n = line.iter().rev().take_while(|c| **c == b'\\').count();
    n % 2 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_names_parse() {
        assert_eq!(Signal::parse(b"TERM"), Some(Signal::Term));
        assert_eq!(Signal::parse(b"SIGint"), Some(Signal::Int));
        assert_eq!(Signal::parse(b"0"), Some(Signal::Exit));
        assert_eq!(Signal::parse(b"15"), Some(Signal::Term));
        assert_eq!(Signal::parse(b"BOGUS"), None);
    }

    #[test]
    fn pipe_roundtrip() {
        let mut os = SystemOs::new();
        let (r, w) = os.pipe().unwrap();
        os.write_all(w, b"x").unwrap();
        os.close(w);
        assert_eq!(os.read_all(r).unwrap(), ReadAll::Data(b"x".to_vec()));
        os.close(r);
        assert!(os.read_all(r).is_err());
    }

    #[test]
    fn large_heredoc_does_not_block() {
        let mut os = SystemOs::new();
        let body = vec![b'z'; 1 << 20];
        let fd = os.heredoc(&body).unwrap();
        assert_eq!(os.read_all(fd).unwrap(), ReadAll::Data(body));
        os.close(fd);
    }

    #[test]
    fn renumber_saves_high() {
        let mut os = SystemOs::new();
        let (r, w) = os.pipe().unwrap();
        let (r2, w2) = os.pipe().unwrap();
        let saved = os.renumber(true, w2, w).unwrap();
        match saved {
            SavedFd::RestoreFrom(s) => assert!(s >= 10),
            SavedFd::Close => panic!("target was open"),
        }
        os.write_all(w, b"to second").unwrap();
        restore_fd(&mut os, w, saved);
        os.write_all(w, b"to first").unwrap();
        os.close(w);
        assert_eq!(os.read_all(r).unwrap(), ReadAll::Data(b"to first".to_vec()));
        assert_eq!(os.read(r2, 64).unwrap(), ReadAll::Data(b"to second".to_vec()));
        os.close(r);
        os.close(r2);
    }

    #[test]
    fn backslash_parity() {
        assert!(ends_with_unescaped_backslash(b"a\\"));
        assert!(!ends_with_unescaped_backslash(b"a\\\\"));
        assert!(!ends_with_unescaped_backslash(b""));
    }
}
