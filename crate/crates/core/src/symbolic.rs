//! A deterministic simulated OS and the scheduler for symbolic runs.
//!
//! Processes, fds, pipes and the filesystem are plain data. The scheduler
//! is demand driven: the root process runs until a step blocks on another
//! process, which then runs for a small batch of steps before the blocked
//! one retries. All maps are ordered, so runs are reproducible.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde_json::Value;
use thiserror::Error;

use crate::ast::*;
use crate::eval::{eval_frame, Runner};
use crate::os::*;
use crate::state::ShellState;
use crate::trace::{lossy, FinalState, StepRecord, Trace};

pub const DEFAULT_FUEL: usize = 5000;
/// Steps a process gets when another process is waiting on it.
const BATCH: usize = 10;
const ROOT: Pid = Pid(1);
const SYMLINK_DEPTH: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FsSpecError {
    #[error("fs spec node must be an object with one of dir, file or link")]
    BadNode,
    #[error("fs spec {0} value has the wrong type")]
    BadValue(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Dir(BTreeMap<Bytes, Node>),
    File { data: Bytes, exec: bool },
    Link(Bytes),
    /// A simulated utility (`ls`, `cat`).
    Program(Bytes),
    /// `/dev/null`.
    Null,
}

impl Node {
    /// Parse `{"dir":{..}}`, `{"file":".."}` or `{"link":".."}`. A file may
    /// carry `"exec": true`.
    pub fn from_spec(v: &Value) -> Result<Node, FsSpecError> {
        let obj = v.as_object().ok_or(FsSpecError::BadNode)?;
        if let Some(d) = obj.get("dir") {
            let d = d.as_object().ok_or(FsSpecError::BadValue("dir"))?;
            let mut m = BTreeMap::new();
            for (k, v) in d {
                m.insert(k.as_bytes().to_vec(), Node::from_spec(v)?);
            }
            return Ok(Node::Dir(m));
        }
        if let Some(f) = obj.get("file") {
            let data = f.as_str().ok_or(FsSpecError::BadValue("file"))?.as_bytes().to_vec();
            let exec = obj.get("exec").and_then(Value::as_bool).unwrap_or(false);
            return Ok(Node::File { data, exec });
        }
        if let Some(l) = obj.get("link") {
            return Ok(Node::Link(l.as_str().ok_or(FsSpecError::BadValue("link"))?.as_bytes().to_vec()));
        }
        Err(FsSpecError::BadNode)
    }

    fn dir_mut(&mut self) -> Option<&mut BTreeMap<Bytes, Node>> {
        match self {
            Node::Dir(m) => Some(m),
            _ => None,
        }
    }
}

/// The default tree: `/bin` with the simulated utilities, `/dev/null`, `/tmp`.
fn with_defaults(mut root: Node) -> Node {
    if !matches!(root, Node::Dir(_)) {
        root = Node::Dir(BTreeMap::new());
    }
    let top = root.dir_mut().expect("root is a directory");
    let bin = top.entry(b"bin".to_vec()).or_insert_with(|| Node::Dir(BTreeMap::new()));
    if let Some(b) = bin.dir_mut() {
        for p in [&b"ls"[..], b"cat"] {
            b.entry(p.to_vec()).or_insert_with(|| Node::Program(p.to_vec()));
        }
    }
    let dev = top.entry(b"dev".to_vec()).or_insert_with(|| Node::Dir(BTreeMap::new()));
    if let Some(d) = dev.dir_mut() {
        d.entry(b"null".to_vec()).or_insert(Node::Null);
    }
    top.entry(b"tmp".to_vec()).or_insert_with(|| Node::Dir(BTreeMap::new()));
    root
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stream {
    Out,
    Err,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Desc {
    Input { data: Bytes, pos: usize },
    Capture(Stream),
    PipeR(usize),
    PipeW(usize),
    File { path: Vec<Bytes>, pos: usize, append: bool, read: bool, write: bool },
    Null,
}

#[derive(Clone, Debug, Default)]
struct Pipe {
    buf: VecDeque<u8>,
    r: usize,
    w: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct FdEntry {
    desc: usize,
    cloexec: bool,
}

type FdTable = BTreeMap<Fd, FdEntry>;

/// The simulated OS. `current` is the process whose step is running.
#[derive(Clone, Debug)]
pub struct SymbolicOs {
    root: Node,
    passwd: BTreeMap<Bytes, Bytes>,
    descs: Vec<Desc>,
    pipes: Vec<Pipe>,
    fds: BTreeMap<Pid, FdTable>,
    cwd: BTreeMap<Pid, Vec<Bytes>>,
    umasks: BTreeMap<Pid, u32>,
    sigs: BTreeMap<Pid, BTreeMap<Signal, SignalAction>>,
    pending: BTreeMap<Pid, VecDeque<Signal>>,
    pub current: Pid,
    next_pid: i32,
    alive: BTreeSet<Pid>,
    exited: BTreeMap<Pid, u8>,
    killed: BTreeMap<Pid, u8>,
    spawned: Vec<(Pid, ShellState, Command)>,
    pub stdout: Bytes,
    pub stderr: Bytes,
    events: Vec<Bytes>,
    ps1: Bytes,
    ps2: Bytes,
}

fn err(errno: i32) -> OsError {
    OsError::from_errno(errno)
}

fn comps_to_path(c: &[Bytes]) -> Bytes {
    if c.is_empty() {
        return b"/".to_vec();
    }
    let mut out = Vec::new();
    for p in c {
        out.push(b'/');
        out.extend_from_slice(p);
    }
    out
}

enum Avail {
    Data(Bytes, bool),
    Blocked(Pid),
}

impl SymbolicOs {
    pub fn new(root: Node, passwd: BTreeMap<Bytes, Bytes>, stdin: Bytes) -> Self {
        let mut os = SymbolicOs {
            root: with_defaults(root),
            passwd,
            descs: vec![Desc::Input { data: stdin, pos: 0 }, Desc::Capture(Stream::Out), Desc::Capture(Stream::Err)],
            pipes: Vec::new(),
            fds: BTreeMap::new(),
            cwd: BTreeMap::new(),
            umasks: BTreeMap::new(),
            sigs: BTreeMap::new(),
            pending: BTreeMap::new(),
            current: ROOT,
            next_pid: ROOT.0 + 1,
            alive: BTreeSet::new(),
            exited: BTreeMap::new(),
            killed: BTreeMap::new(),
            spawned: Vec::new(),
            stdout: Vec::new(),
            stderr: Vec::new(),
            events: Vec::new(),
            ps1: Vec::new(),
            ps2: Vec::new(),
        };
        let mut t = FdTable::new();
        for fd in 0..3 {
            t.insert(fd, FdEntry { desc: fd as usize, cloexec: false });
        }
        os.fds.insert(ROOT, t);
        os.cwd.insert(ROOT, Vec::new());
        os.umasks.insert(ROOT, 0o022);
        os.alive.insert(ROOT);
        os
    }

    fn table(&self) -> &FdTable {
        self.fds.get(&self.current).expect("current process has an fd table")
    }

    fn table_mut(&mut self) -> &mut FdTable {
        self.fds.entry(self.current).or_default()
    }

    fn desc_of(&self, fd: Fd) -> OsResult<usize> {
        self.table().get(&fd).map(|e| e.desc).ok_or_else(|| err(libc::EBADF))
    }

    fn lowest_free(&self, from: Fd) -> Fd {
        let t = self.table();
        (from..).find(|fd| !t.contains_key(fd)).expect("fd space is unbounded")
    }

    fn new_desc(&mut self, d: Desc) -> usize {
        self.descs.push(d);
        self.descs.len() - 1
    }

    fn install(&mut self, d: Desc) -> Fd {
        let id = self.new_desc(d);
        let fd = self.lowest_free(0);
        self.table_mut().insert(fd, FdEntry { desc: id, cloexec: false });
        fd
    }

    /// Processes other than the current one holding `desc` open.
    fn holders(&self, desc: usize) -> Vec<Pid> {
        self.fds
            .iter()
            .filter(|(p, t)| self.alive.contains(p) && t.values().any(|e| e.desc == desc))
            .map(|(p, _)| *p)
            .collect()
    }

    fn cur_cwd(&self) -> Vec<Bytes> {
        self.cwd.get(&self.current).cloned().unwrap_or_default()
    }

    fn node_at(&self, comps: &[Bytes]) -> Option<&Node> {
        let mut n = &self.root;
        for c in comps {
            match n {
                Node::Dir(m) => n = m.get(c)?,
                _ => return None,
            }
        }
        Some(n)
    }

    fn node_at_mut(&mut self, comps: &[Bytes]) -> Option<&mut Node> {
        let mut n = &mut self.root;
        for c in comps {
            match n {
                Node::Dir(m) => n = m.get_mut(c)?,
                _ => return None,
            }
        }
        Some(n)
    }

    /// Resolve a path to canonical components. The final component need
    /// not exist.
    fn resolve(&self, base: &[Bytes], path: &[u8], follow_last: bool, depth: usize) -> OsResult<Vec<Bytes>> {
        if depth > SYMLINK_DEPTH {
            return Err(err(libc::ELOOP));
        }
        if path.is_empty() {
            return Err(err(libc::ENOENT));
        }
        let mut comps: Vec<Bytes> = if path.starts_with(b"/") { Vec::new() } else { base.to_vec() };
        let parts: Vec<&[u8]> = path.split(|c| *c == b'/').filter(|p| !p.is_empty()).collect();
        let n = parts.len();
        for (i, p) in parts.into_iter().enumerate() {
            match p {
                b"." => continue,
                b".." => {
                    comps.pop();
                    continue;
                }
                _ => {}
            }
            comps.push(p.to_vec());
            let last = i + 1 == n;
            match self.node_at(&comps) {
                None if last => return Ok(comps),
                None => return Err(err(libc::ENOENT)),
                Some(Node::Link(t)) if !last || follow_last => {
                    let t = t.clone();
                    comps.pop();
                    comps = self.resolve(&comps, &t, true, depth + 1)?;
                }
                Some(Node::Dir(_)) | Some(Node::Link(_)) => {}
                Some(_) if !last => return Err(err(libc::ENOTDIR)),
                Some(_) => {}
            }
        }
        Ok(comps)
    }

    fn lookup(&self, path: &[u8], follow: bool) -> Option<(&Node, Vec<Bytes>)> {
        let comps = self.resolve(&self.cur_cwd(), path, follow, 0).ok()?;
        self.node_at(&comps).map(|n| (n, comps))
    }

    fn first_writer(&self, pipe: usize) -> Option<Pid> {
        let w = self.pipes[pipe].w;
        self.holders(w).into_iter().find(|p| *p != self.current)
    }

    fn avail(&self, fd: Fd) -> OsResult<Avail> {
        let id = self.desc_of(fd)?;
        match &self.descs[id] {
            Desc::Input { data, pos } => Ok(Avail::Data(data[*pos..].to_vec(), true)),
            Desc::Null => Ok(Avail::Data(Vec::new(), true)),
            Desc::File { path, pos, read: true, .. } => match self.node_at(path) {
                Some(Node::File { data, .. }) => Ok(Avail::Data(data.get(*pos..).unwrap_or_default().to_vec(), true)),
                Some(Node::Dir(_)) => Err(err(libc::EISDIR)),
                _ => Ok(Avail::Data(Vec::new(), true)),
            },
            Desc::PipeR(p) => {
                let data: Bytes = self.pipes[*p].buf.iter().copied().collect();
                match self.first_writer(*p) {
                    None => Ok(Avail::Data(data, true)),
                    Some(w) if data.is_empty() => Ok(Avail::Blocked(w)),
                    Some(_) => Ok(Avail::Data(data, false)),
                }
            }
            _ => Err(err(libc::EBADF)),
        }
    }

    fn consume(&mut self, fd: Fd, n: usize) {
        let Ok(id) = self.desc_of(fd) else { return };
        match &mut self.descs[id] {
            Desc::Input { pos, .. } | Desc::File { pos, .. } => *pos += n,
            Desc::PipeR(p) => {
                let p = *p;
                self.pipes[p].buf.drain(..n);
            }
            _ => {}
        }
    }

    fn sigpipe(&mut self) {
        let action = self.sigs.get(&self.current).and_then(|m| m.get(&Signal::Pipe)).copied();
        match action.unwrap_or(SignalAction::Default) {
            SignalAction::Default => {
                self.killed.insert(self.current, 128 + libc::SIGPIPE as u8);
            }
            SignalAction::Catch => self.pending.entry(self.current).or_default().push_back(Signal::Pipe),
            SignalAction::Ignore => {}
        }
    }

    fn drop_cloexec(&mut self) {
        self.table_mut().retain(|_, e| !e.cloexec);
    }

    fn run_ls(&mut self, args: &[Bytes]) -> u8 {
        let mut all = false;
        let mut paths = Vec::new();
        for a in &args[1..] {
            if a.starts_with(b"-") && a.len() > 1 {
                all |= a.contains(&b'a');
            } else {
                paths.push(a.clone());
            }
        }
        let many = paths.len() > 1;
        if paths.is_empty() {
            paths.push(b".".to_vec());
        }
        let mut out = Vec::new();
        let mut errs = Vec::new();
        let mut status = 0;
        let mut files = Vec::new();
        let mut dirs = Vec::new();
        for p in &paths {
            match self.lookup(p, true) {
                Some((Node::Dir(m), _)) => {
                    let names: Vec<Bytes> = m.keys().filter(|k| all || !k.starts_with(b".")).cloned().collect();
                    dirs.push((p.clone(), names));
                }
                Some(_) => files.push(p.clone()),
                None => {
                    errs.extend_from_slice(format!("ls: cannot access '{}': No such file or directory\n", lossy(p)).as_bytes());
                    status = 2;
                }
            }
        }
        files.sort();
        for f in &files {
            out.extend_from_slice(f);
            out.push(b'\n');
        }
        for (i, (p, names)) in dirs.iter().enumerate() {
            if many {
                if i > 0 || !files.is_empty() {
                    out.push(b'\n');
                }
                out.extend_from_slice(p);
                out.extend_from_slice(b":\n");
            }
            for n in names {
                out.extend_from_slice(n);
                out.push(b'\n');
            }
        }
        let _ = self.write_all(2, &errs);
        if self.write_all(1, &out).is_err() {
            return 1;
        }
        status
    }

    fn run_cat(&mut self, args: &[Bytes]) -> Result<u8, Pid> {
        let mut inputs: Vec<Option<Bytes>> = Vec::new();
        let mut files: Vec<Bytes> = args[1..].iter().filter(|a| a.as_slice() != b"-u").cloned().collect();
        if files.is_empty() {
            files.push(b"-".to_vec());
        }
        // Gather everything first so a blocked read leaves no side effects.
        let mut stdin_data = None;
        if files.iter().any(|f| f == b"-") {
            match self.avail(0) {
                Ok(Avail::Data(d, true)) => stdin_data = Some(d),
                Ok(Avail::Data(_, false)) => {
                    let p = self.desc_of(0).ok().and_then(|id| match self.descs[id] {
                        Desc::PipeR(p) => self.first_writer(p),
                        _ => None,
                    });
                    return Err(p.unwrap_or(self.current));
                }
                Ok(Avail::Blocked(p)) => return Err(p),
                Err(_) => stdin_data = Some(Vec::new()),
            }
        }
        let mut errs = Vec::new();
        let mut status = 0;
        for f in &files {
            if f == b"-" {
                inputs.push(stdin_data.take());
                continue;
            }
            match self.lookup(f, true) {
                Some((Node::File { data, .. }, _)) => inputs.push(Some(data.clone())),
                Some((Node::Dir(_), _)) => {
                    errs.extend_from_slice(format!("cat: {}: Is a directory\n", lossy(f)).as_bytes());
                    status = 1;
                }
                Some(_) => inputs.push(Some(Vec::new())),
                None => {
                    errs.extend_from_slice(format!("cat: {}: No such file or directory\n", lossy(f)).as_bytes());
                    status = 1;
                }
            }
        }
        if let Some(Ok(Avail::Data(d, _))) = files.iter().any(|f| f == b"-").then(|| self.avail(0)) {
            self.consume(0, d.len());
        }
        let out: Bytes = inputs.into_iter().flatten().flatten().collect();
        let _ = self.write_all(2, &errs);
        if self.write_all(1, &out).is_err() {
            return Ok(1);
        }
        Ok(status)
    }
}

impl Os for SymbolicOs {
    fn fork_shell(&mut self, st: &ShellState, cmd: Command, setup: &[FdSetup]) -> OsResult<Pid> {
        let pid = Pid(self.next_pid);
        self.next_pid += 1;
        let parent = self.current;
        let table = self.fds.get(&parent).cloned().unwrap_or_default();
        self.fds.insert(pid, table);
        self.cwd.insert(pid, self.cwd.get(&parent).cloned().unwrap_or_default());
        self.umasks.insert(pid, self.umasks.get(&parent).copied().unwrap_or(0o022));
        let mut sigs = self.sigs.get(&parent).cloned().unwrap_or_default();
        for a in sigs.values_mut() {
            if *a == SignalAction::Catch {
                *a = SignalAction::Default;
            }
        }
        self.sigs.insert(pid, sigs);
        self.alive.insert(pid);
        self.current = pid;
        for s in setup {
            match *s {
                FdSetup::Dup2(from, to) => {
                    if from != to {
                        let _ = self.dup2(from, to);
                    }
                }
                FdSetup::Close(fd) => self.close(fd),
                FdSetup::NullStdin => {
                    let id = self.new_desc(Desc::Null);
                    self.table_mut().insert(0, FdEntry { desc: id, cloexec: false });
                }
            }
        }
        self.current = parent;
        self.spawned.push((pid, st.for_subshell(), cmd));
        Ok(pid)
    }

    fn execve(&mut self, path: &[u8], args: &[Bytes], _env: &[(Bytes, Bytes)]) -> OsResult<ExecOutcome> {
        let node = self.lookup(path, true).map(|(n, _)| n.clone());
        let name = args.first().cloned().unwrap_or_else(|| path.to_vec());
        match node {
            None => Err(err(libc::ENOENT)),
            Some(Node::Program(p)) => {
                let status = match p.as_slice() {
                    b"ls" => self.run_ls(args),
                    b"cat" => match self.run_cat(args) {
                        Ok(s) => s,
                        Err(pid) => return Ok(ExecOutcome::Blocked(pid)),
                    },
                    _ => 0,
                };
                self.drop_cloexec();
                Ok(ExecOutcome::Exited(status))
            }
            Some(Node::File { exec: true, data }) => {
                if data.is_empty() {
                    let mut ev = b"external exec: ".to_vec();
                    ev.extend_from_slice(&name);
                    self.events.push(ev);
                    self.drop_cloexec();
                    Ok(ExecOutcome::Exited(0))
                } else {
                    Err(err(libc::ENOEXEC))
                }
            }
            Some(_) => Err(err(libc::EACCES)),
        }
    }

    fn wait(&mut self, pid: Pid) -> WaitResult {
        if let Some(s) = self.exited.remove(&pid) {
            return WaitResult::Exited(s);
        }
        if self.alive.contains(&pid) && pid != self.current {
            return WaitResult::Blocked(pid);
        }
        WaitResult::NoSuchChild
    }

    fn getpid(&self) -> Pid {
        self.current
    }

    fn kill(&mut self, pid: Pid, sig: Signal) -> OsResult<()> {
        if !self.alive.contains(&pid) {
            return Err(err(libc::ESRCH));
        }
        if sig == Signal::Exit {
            return Ok(());
        }
        let action = self.sigs.get(&pid).and_then(|m| m.get(&sig)).copied().unwrap_or(SignalAction::Default);
        match action {
            SignalAction::Default if sig.terminates_by_default() || !sig.can_catch() => {
                self.killed.insert(pid, (128 + sig.number()) as u8);
            }
            SignalAction::Catch if sig.can_catch() => self.pending.entry(pid).or_default().push_back(sig),
            _ => {}
        }
        Ok(())
    }

    fn pending_signal(&mut self) -> Option<Signal> {
        self.pending.get_mut(&self.current)?.pop_front()
    }

    fn set_signal(&mut self, sig: Signal, action: SignalAction) {
        self.sigs.entry(self.current).or_default().insert(sig, action);
    }

    fn times(&self) -> Times {
        Times::default()
    }

    fn pipe(&mut self) -> OsResult<(Fd, Fd)> {
        let p = self.pipes.len();
        let r = self.new_desc(Desc::PipeR(p));
        let w = self.new_desc(Desc::PipeW(p));
        self.pipes.push(Pipe { buf: VecDeque::new(), r, w });
        let rfd = self.lowest_free(0);
        self.table_mut().insert(rfd, FdEntry { desc: r, cloexec: false });
        let wfd = self.lowest_free(0);
        self.table_mut().insert(wfd, FdEntry { desc: w, cloexec: false });
        Ok((rfd, wfd))
    }

    fn close(&mut self, fd: Fd) {
        self.table_mut().remove(&fd);
    }

    fn dup2(&mut self, from: Fd, to: Fd) -> OsResult<()> {
        let id = self.desc_of(from)?;
        if from != to {
            self.table_mut().insert(to, FdEntry { desc: id, cloexec: false });
        }
        Ok(())
    }

    fn is_open(&self, fd: Fd) -> bool {
        self.table().contains_key(&fd)
    }

    fn read(&mut self, fd: Fd, max: usize) -> OsResult<ReadAll> {
        match self.avail(fd)? {
            Avail::Blocked(p) => Ok(ReadAll::Blocked(p)),
            Avail::Data(d, _) => {
                let n = d.len().min(max.max(1));
                self.consume(fd, n);
                Ok(ReadAll::Data(d[..n].to_vec()))
            }
        }
    }

    fn read_all(&mut self, fd: Fd) -> OsResult<ReadAll> {
        match self.avail(fd)? {
            Avail::Blocked(p) => Ok(ReadAll::Blocked(p)),
            Avail::Data(d, true) => {
                self.consume(fd, d.len());
                Ok(ReadAll::Data(d))
            }
            Avail::Data(_, false) => {
                let id = self.desc_of(fd)?;
                let w = match self.descs[id] {
                    Desc::PipeR(p) => self.first_writer(p),
                    _ => None,
                };
                Ok(ReadAll::Blocked(w.unwrap_or(self.current)))
            }
        }
    }

    fn read_line(&mut self, fd: Fd, allow_continuation: bool) -> OsResult<LineRead> {
        let (d, eof) = match self.avail(fd)? {
            Avail::Blocked(p) => return Ok(LineRead::Blocked(p)),
            Avail::Data(d, eof) => (d, eof),
        };
        let mut i = 0;
        while i < d.len() {
            if d[i] == b'\n' && !(allow_continuation && ends_with_unescaped_backslash(&d[..i])) {
                self.consume(fd, i + 1);
                return Ok(LineRead::Line { data: d[..i].to_vec(), terminated: true });
            }
            i += 1;
        }
        if eof {
            if d.is_empty() {
                return Ok(LineRead::Eof);
            }
            self.consume(fd, d.len());
            return Ok(LineRead::Line { data: d, terminated: false });
        }
        let id = self.desc_of(fd)?;
        let w = match self.descs[id] {
            Desc::PipeR(p) => self.first_writer(p),
            _ => None,
        };
        Ok(LineRead::Blocked(w.unwrap_or(self.current)))
    }

    fn write_all(&mut self, fd: Fd, data: &[u8]) -> OsResult<()> {
        let id = self.desc_of(fd)?;
        match self.descs[id].clone() {
            Desc::Capture(Stream::Out) => self.stdout.extend_from_slice(data),
            Desc::Capture(Stream::Err) => self.stderr.extend_from_slice(data),
            Desc::Null => {}
            Desc::PipeW(p) => {
                if self.holders(self.pipes[p].r).is_empty() {
                    self.sigpipe();
                    return Err(err(libc::EPIPE));
                }
                self.pipes[p].buf.extend(data.iter().copied());
            }
            Desc::File { path, pos, append, write: true, .. } => {
                let Some(Node::File { data: content, .. }) = self.node_at_mut(&path) else {
                    return Ok(());
                };
                let start = if append { content.len() } else { pos.min(content.len()) };
                let end = start + data.len();
                if content.len() < end {
                    content.resize(end, 0);
                }
                content[start..end].copy_from_slice(data);
                if let Desc::File { pos, .. } = &mut self.descs[id] {
                    *pos = end;
                }
            }
            _ => return Err(err(libc::EBADF)),
        }
        Ok(())
    }

    fn file_redir(&mut self, mode: FileMode, path: &[u8]) -> OsResult<Fd> {
        let comps = self.resolve(&self.cur_cwd(), path, true, 0)?;
        let read = matches!(mode, FileMode::Read | FileMode::ReadWrite);
        let write = !matches!(mode, FileMode::Read);
        match self.node_at(&comps) {
            Some(Node::Null) => return Ok(self.install(Desc::Null)),
            Some(Node::Dir(_)) => return Err(err(libc::EISDIR)),
            Some(Node::File { .. }) | Some(Node::Program(_)) => {
                if matches!(mode, FileMode::Write | FileMode::Clobber) {
                    if let Some(Node::File { data, .. }) = self.node_at_mut(&comps) {
                        data.clear();
                    }
                }
            }
            Some(Node::Link(_)) => return Err(err(libc::ENOENT)),
            None => {
                if !write {
                    return Err(err(libc::ENOENT));
                }
                let (name, parent) = comps.split_last().ok_or_else(|| err(libc::EISDIR))?;
                match self.node_at_mut(parent) {
                    Some(Node::Dir(m)) => {
                        m.insert(name.clone(), Node::File { data: Vec::new(), exec: false });
                    }
                    Some(_) => return Err(err(libc::ENOTDIR)),
                    None => return Err(err(libc::ENOENT)),
                }
            }
        }
        Ok(self.install(Desc::File { path: comps, pos: 0, append: mode == FileMode::Append, read, write }))
    }

    fn close_and_save(&mut self, fd: Fd) -> OsResult<SavedFd> {
        let Some(e) = self.table().get(&fd).copied() else {
            return Ok(SavedFd::Close);
        };
        let high = self.lowest_free(10);
        self.table_mut().insert(high, FdEntry { desc: e.desc, cloexec: true });
        self.table_mut().remove(&fd);
        Ok(SavedFd::RestoreFrom(high))
    }

    fn renumber(&mut self, close_orig: bool, orig: Fd, wanted: Fd) -> OsResult<SavedFd> {
        if orig == wanted {
            return Ok(SavedFd::Close);
        }
        let id = self.desc_of(orig)?;
        let saved = match self.table().get(&wanted).copied() {
            Some(e) => {
                let high = self.lowest_free(10);
                self.table_mut().insert(high, FdEntry { desc: e.desc, cloexec: true });
                SavedFd::RestoreFrom(high)
            }
            None => SavedFd::Close,
        };
        self.table_mut().insert(wanted, FdEntry { desc: id, cloexec: false });
        if close_orig {
            self.table_mut().remove(&orig);
        }
        Ok(saved)
    }

    fn heredoc(&mut self, body: &[u8]) -> OsResult<Fd> {
        Ok(self.install(Desc::Input { data: body.to_vec(), pos: 0 }))
    }

    fn isatty(&self, _fd: Fd) -> bool {
        false
    }

    fn file_exists(&self, path: &[u8]) -> bool {
        self.lookup(path, false).is_some()
    }

    fn file_executable(&self, path: &[u8]) -> bool {
        matches!(self.lookup(path, true), Some((Node::Program(_), _)) | Some((Node::File { exec: true, .. }, _)))
    }

    fn access(&self, path: &[u8], mode: Access) -> bool {
        match self.lookup(path, true) {
            None => false,
            Some((n, _)) => match mode {
                Access::Read | Access::Write => true,
                Access::Execute => matches!(n, Node::Program(_) | Node::File { exec: true, .. } | Node::Dir(_)),
            },
        }
    }

    fn read_dir(&self, path: &[u8]) -> Option<Vec<Bytes>> {
        let p = if path.is_empty() { b".".as_slice() } else { path };
        match self.lookup(p, true)? {
            (Node::Dir(m), _) => Some(m.keys().cloned().collect()),
            _ => None,
        }
    }

    fn stat(&self, path: &[u8], follow: bool) -> Option<FileStat> {
        let (n, _) = self.lookup(path, follow)?;
        let (kind, size, mode) = match n {
            Node::Dir(_) => (FileKind::Directory, 0, 0o755),
            Node::File { data, exec } => (FileKind::Regular, data.len() as u64, if *exec { 0o755 } else { 0o644 }),
            Node::Program(_) => (FileKind::Regular, 0, 0o755),
            Node::Link(_) => (FileKind::Symlink, 0, 0o777),
            Node::Null => (FileKind::CharDevice, 0, 0o666),
        };
        Some(FileStat { kind, size, mode, mtime: 0 })
    }

    fn getcwd(&self) -> OsResult<Bytes> {
        Ok(comps_to_path(&self.cur_cwd()))
    }

    fn chdir(&mut self, path: &[u8]) -> OsResult<()> {
        let comps = self.resolve(&self.cur_cwd(), path, true, 0)?;
        match self.node_at(&comps) {
            Some(Node::Dir(_)) => {
                self.cwd.insert(self.current, comps);
                Ok(())
            }
            Some(_) => Err(err(libc::ENOTDIR)),
            None => Err(err(libc::ENOENT)),
        }
    }

    fn umask(&mut self, new: Option<u32>) -> u32 {
        let cur = self.umasks.get(&self.current).copied().unwrap_or(0o022);
        if let Some(m) = new {
            self.umasks.insert(self.current, m);
        }
        cur
    }

    fn home_dir(&self, user: &[u8]) -> Option<Bytes> {
        self.passwd.get(user).cloned()
    }

    fn read_file(&mut self, path: &[u8]) -> OsResult<Bytes> {
        match self.lookup(path, true) {
            Some((Node::File { data, .. }, _)) => Ok(data.clone()),
            Some((Node::Dir(_), _)) => Err(err(libc::EISDIR)),
            Some(_) => Ok(Vec::new()),
            None => Err(err(libc::ENOENT)),
        }
    }

    fn set_ps1(&mut self, text: &[u8]) {
        self.ps1 = text.to_vec();
    }

    fn set_ps2(&mut self, text: &[u8]) {
        self.ps2 = text.to_vec();
    }
}

// ---------------------------------------------------------------------------
// Scheduler

/// Inputs to a symbolic run.
#[derive(Clone, Debug, Default)]
pub struct SymbolicConfig {
    pub env: Vec<(Bytes, Bytes)>,
    /// Root directory spec; `None` gives the default tree.
    pub fs: Option<Node>,
    pub passwd: BTreeMap<Bytes, Bytes>,
    pub stdin: Bytes,
    pub fuel: usize,
}

struct Proc {
    st: ShellState,
    runner: Runner,
}

fn var_delta(before: &BTreeMap<Bytes, Bytes>, after: &BTreeMap<Bytes, Bytes>) -> BTreeMap<String, Option<String>> {
    let mut d = BTreeMap::new();
    for (k, v) in after {
        if before.get(k) != Some(v) {
            d.insert(lossy(k), Some(lossy(v)));
        }
    }
    for k in before.keys() {
        if !after.contains_key(k) {
            d.insert(lossy(k), None);
        }
    }
    d
}

/// Run a program symbolically and record the root process's steps.
pub fn run_symbolic(source: &[u8], cfg: &SymbolicConfig) -> Trace {
    let src_text = lossy(source);
    if let Err(msg) = crate::parser::parse_program(source) {
        let text = format!("smolsh: {msg}\n");
        return Trace {
            source: src_text,
            steps: vec![StepRecord {
                n: 0,
                phase: "eval",
                rule: "ParseError".into(),
                term: String::new(),
                env_delta: BTreeMap::new(),
                stdout: String::new(),
                stderr: text.clone(),
            }],
            final_state: FinalState { status: 2, stdout: String::new(), stderr: text, fuel_exhausted: false },
        };
    }

    let mut os = SymbolicOs::new(cfg.fs.clone().unwrap_or(Node::Dir(BTreeMap::new())), cfg.passwd.clone(), cfg.stdin.clone());
    let mut st = ShellState::new(ROOT);
    st.import_env(cfg.env.iter().cloned());
    if st.lookup(b"PATH").is_none() {
        st.env.insert(b"PATH".to_vec(), b"/bin:/usr/bin".to_vec());
    }
    if st.lookup(b"PWD").is_none() {
        st.env.insert(b"PWD".to_vec(), b"/".to_vec());
    }
    st.cwd = b"/".to_vec();
    let frame = eval_frame(source.to_vec(), EvalKind::Top, false);
    let mut procs: BTreeMap<Pid, Proc> = BTreeMap::new();
    procs.insert(ROOT, Proc { st, runner: Runner::new(Command::EvalLoop(Box::new(frame))) });

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut stack: Vec<(Pid, usize)> = vec![(ROOT, usize::MAX)];
    let mut fuel_used = 0usize;
    let mut out_mark = 0usize;
    let mut err_mark = 0usize;
    let mut root_status: Option<u8> = None;
    let mut exhausted = false;

    let finalize = |os: &mut SymbolicOs, pid: Pid, status: u8| {
        os.fds.remove(&pid);
        os.alive.remove(&pid);
        os.pending.remove(&pid);
        os.exited.insert(pid, status);
    };

    loop {
        if root_status.is_some() {
            break;
        }
        if fuel_used >= cfg.fuel {
            exhausted = true;
            break;
        }
        let Some(&(pid, budget)) = stack.last() else { break };
        if !procs.contains_key(&pid) || budget == 0 {
            stack.pop();
            continue;
        }
        let mut p = procs.remove(&pid).expect("process exists");
        os.current = pid;
        let is_root = pid == ROOT;
        let term = if is_root { render_string(&p.runner.cmd) } else { String::new() };
        let before = if is_root { Some(p.st.visible_vars()) } else { None };
        let info = p.runner.step(&mut os, &mut p.st);
        fuel_used += 1;
        for (cpid, cst, cmd) in std::mem::take(&mut os.spawned) {
            procs.insert(cpid, Proc { st: cst, runner: Runner::new(cmd) });
        }
        match info {
            None => {
                let status = p.runner.finished.unwrap_or(p.st.last_status);
                finalize(&mut os, pid, status);
                if is_root {
                    root_status = Some(status);
                }
            }
            Some(i) => {
                if is_root && i.blocked.is_none() {
                    let after = p.st.visible_vars();
                    let delta = var_delta(before.as_ref().expect("root snapshot"), &after);
                    steps.push(StepRecord {
                        n: steps.len(),
                        phase: i.phase.as_str(),
                        rule: i.rule.to_string(),
                        term,
                        env_delta: delta,
                        stdout: lossy(&os.stdout[out_mark..]),
                        stderr: lossy(&os.stderr[err_mark..]),
                    });
                    out_mark = os.stdout.len();
                    err_mark = os.stderr.len();
                }
                procs.insert(pid, p);
                match i.blocked {
                    Some(q) if q != pid && procs.contains_key(&q) && !stack.iter().any(|(s, _)| *s == q) => {
                        stack.push((q, BATCH));
                    }
                    Some(_) => {
                        // A cycle of blocked processes: nothing can progress.
                        if stack.len() > 1 {
                            stack.pop();
                        } else {
                            os.stderr.extend_from_slice(b"smolsh: deadlock\n");
                            root_status = Some(2);
                        }
                    }
                    None => {
                        if let Some(top) = stack.last_mut() {
                            top.1 = top.1.saturating_sub(1);
                        }
                    }
                }
            }
        }
        for (k, status) in std::mem::take(&mut os.killed) {
            if procs.remove(&k).is_some() {
                finalize(&mut os, k, status);
                if k == ROOT {
                    root_status = Some(status);
                }
            }
        }
        for e in std::mem::take(&mut os.events) {
            steps.push(StepRecord {
                n: steps.len(),
                phase: "eval",
                rule: lossy(&e),
                term: String::new(),
                env_delta: BTreeMap::new(),
                stdout: String::new(),
                stderr: String::new(),
            });
        }
    }
    let status = root_status.unwrap_or_else(|| procs.get(&ROOT).map_or(0, |p| p.st.last_status));
    Trace {
        source: src_text,
        steps,
        final_state: FinalState { status, stdout: lossy(&os.stdout), stderr: lossy(&os.stderr), fuel_exhausted: exhausted },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(src: &str) -> Trace {
        run_symbolic(src.as_bytes(), &SymbolicConfig { fuel: DEFAULT_FUEL, ..Default::default() })
    }

    #[test]
    fn echo_and_status() {
        let t = run("echo hi; false");
        assert_eq!(t.final_state.stdout, "hi\n");
        assert_eq!(t.final_state.status, 1);
    }

    #[test]
    fn infinite_writer_into_true_terminates() {
        let t = run("while true; do echo 5; done | true");
        assert!(!t.final_state.fuel_exhausted);
        assert_eq!(t.final_state.status, 0);
    }

    #[test]
    fn infinite_writer_into_reader() {
        let t = run("while true; do echo 5; done | { read x; echo $((x+42)); }");
        assert_eq!(t.final_state.stdout, "47\n");
    }

    #[test]
    fn fuel_one_is_one_step() {
        let t = run_symbolic(b"echo a; echo b", &SymbolicConfig { fuel: 1, ..Default::default() });
        assert_eq!(t.steps.len(), 1);
        assert!(t.final_state.fuel_exhausted);
    }

    #[test]
    fn files_and_cat() {
        let t = run("echo data > /tmp/f; cat /tmp/f; cat < /tmp/f | cat");
        assert_eq!(t.final_state.stdout, "data\ndata\n");
    }

    #[test]
    fn parse_error_trace() {
        let t = run("if then");
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.final_state.status, 2);
    }
}
