//! Small-step command evaluation.
//!
//! [`step_eval`] rewrites a command by one rule. Source forms are turned
//! into runtime frames (`CmdArgs`, `WhileCond`, `Call`, ...) which are
//! stepped until they reach a terminal form (`Done`, `Exit`, ...).

use crate::ast::*;
use crate::builtins::{self, Flow};
use crate::expansion::{start, step_expansion};
use crate::os::{restore_fd, Access, ExecOutcome, FdSetup, Os, Signal, WaitResult};
use crate::parser::{parse_one, ParseResult, ParseSession};
use crate::pattern;
use crate::state::{JobInfo, JobStatus, ShellOption, ShellState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Expand,
    Eval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Expand => "expand",
            Phase::Eval => "eval",
        }
    }
}

/// What a step did: its phase, the rule applied, and whether it blocked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepInfo {
    pub phase: Phase,
    pub rule: &'static str,
    /// The step made no progress because this process must run first.
    pub blocked: Option<Pid>,
}

fn ev(rule: &'static str) -> StepInfo {
    StepInfo { phase: Phase::Eval, rule, blocked: None }
}

fn ex(rule: &'static str) -> StepInfo {
    StepInfo { phase: Phase::Expand, rule, blocked: None }
}

fn blocked(phase: Phase, rule: &'static str, pid: Pid) -> StepInfo {
    StepInfo { phase, rule, blocked: Some(pid) }
}

/// Write `smolsh: <msg>` to stderr.
pub fn diag(os: &mut dyn Os, msg: &[u8]) {
    let mut out = b"smolsh: ".to_vec();
    out.extend_from_slice(msg);
    out.push(b'\n');
    let _ = os.write_all(2, &out);
}

fn errexit_now(st: &ShellState, checking: bool) -> bool {
    st.last_status != 0 && !checking && st.has(ShellOption::ErrExit)
}

fn finish(st: &ShellState, checking: bool) -> Command {
    if errexit_now(st, checking) {
        Command::Exit
    } else {
        Command::Done
    }
}

fn fatal_or_done(st: &ShellState) -> Command {
    if st.interactive {
        Command::Done
    } else {
        Command::Exit
    }
}

pub fn restore_redirs(os: &mut dyn Os, saved: SavedFds) {
    for (fd, s) in saved.into_iter().rev() {
        restore_fd(os, fd, s);
    }
}

/// Drop saved copies without restoring, keeping the redirections in force.
fn forget_redirs(os: &mut dyn Os, saved: SavedFds) {
    for (_, s) in saved {
        if let SavedFd::RestoreFrom(fd) = s {
            os.close(fd);
        }
    }
}

/// Report an expansion error and abort the command.
fn exp_error(os: &mut dyn Os, st: &mut ShellState, msg: Fields, saved: SavedFds) -> (Command, StepInfo) {
    diag(os, &msg.concat());
    restore_redirs(os, saved);
    st.last_status = 2;
    (fatal_or_done(st), ex("ExpError"))
}

/// Run a pending trap handler, if a signal arrived.
fn check_traps(os: &mut dyn Os, st: &mut ShellState, cont: Command) -> Command {
    while let Some(sig) = os.pending_signal() {
        let Some(h) = st.traps.get(&sig).cloned() else { continue };
        if h.is_empty() {
            continue;
        }
        let frame = EvalFrame {
            session: ParseSession::from_bytes(h),
            kind: EvalKind::Trap,
            interactive: false,
            fatal_errors: false,
            ran_any: false,
        };
        return Command::Trapped {
            signal: sig,
            status: st.last_status,
            handler: Box::new(Command::EvalLoop(Box::new(frame))),
            cont: Box::new(cont),
        };
    }
    cont
}

/// A fresh eval loop over in-memory source.
pub fn eval_frame(src: Bytes, kind: EvalKind, interactive: bool) -> EvalFrame {
    EvalFrame { session: ParseSession::from_bytes(src), kind, interactive, fatal_errors: !interactive, ran_any: false }
}

// ---------------------------------------------------------------------------
// Redirections

enum RedirProgress {
    Step(RedirState, StepInfo),
    Ready(Vec<ExpandedRedir>),
    Error(Fields),
}

fn step_redirs(os: &mut dyn Os, st: &mut ShellState, mut rs: RedirState) -> RedirProgress {
    match rs.in_progress.take() {
        Some((r, es)) if !es.is_final() => {
            let s = step_expansion(os, st, es);
            let info = StepInfo { phase: Phase::Expand, rule: s.rule, blocked: s.blocked };
            rs.in_progress = Some((r, s.state));
            RedirProgress::Step(rs, info)
        }
        Some((_, ExpansionState::Error(msg))) => RedirProgress::Error(msg),
        Some((r, ExpansionState::Done(fields))) => {
            let text = fields.concat();
            let e = match r {
                Redirection::File { fd, mode, .. } => ExpandedRedir::File { mode, fd, path: text },
                Redirection::Dup { fd, dir, .. } => {
                    let target = if text == b"-" {
                        None
                    } else {
                        match std::str::from_utf8(&text).ok().and_then(|s| s.parse::<Fd>().ok()) {
                            Some(n) if text.iter().all(u8::is_ascii_digit) => Some(n),
                            _ => {
                                let mut m = text.clone();
                                m.extend_from_slice(b": bad fd number");
                                return RedirProgress::Error(vec![m]);
                            }
                        }
                    };
                    ExpandedRedir::Dup { dir, fd, target }
                }
                Redirection::Here { fd, kind, .. } => ExpandedRedir::Here { kind, fd, body: text },
            };
            rs.done.push(e);
            RedirProgress::Step(rs, ex("RedirExpanded"))
        }
        Some(_) => unreachable!("final states handled above"),
        None => {
            if rs.todo.is_empty() {
                return RedirProgress::Ready(rs.done);
            }
            let r = rs.todo.remove(0);
            match r {
                Redirection::Here { fd, kind: HereKind::NoExpand, body } => {
                    let text = body
                        .iter()
                        .filter_map(|p| match p {
                            WordPart::Lit(b) => Some(b.as_slice()),
                            _ => None,
                        })
                        .collect::<Vec<_>>()
                        .concat();
                    rs.done.push(ExpandedRedir::Here { kind: HereKind::NoExpand, fd, body: text });
                    RedirProgress::Step(rs, ev("RedirHere"))
                }
                Redirection::Here { kind: HereKind::Expand, ref body, .. } => {
                    // Heredoc bodies expand like double-quoted text.
                    let w = vec![WordPart::Ctrl(Control::Quoted(body.clone()))];
                    rs.in_progress = Some((r, start(ExpansionOptions::STRING, w)));
                    RedirProgress::Step(rs, ev("RedirStart"))
                }
                Redirection::File { ref target, .. } | Redirection::Dup { ref target, .. } => {
                    let t = target.clone();
                    rs.in_progress = Some((r, start(ExpansionOptions::STRING, t)));
                    RedirProgress::Step(rs, ev("RedirStart"))
                }
            }
        }
    }
}

/// Apply expanded redirections, returning what to restore.
pub fn apply_redirs(os: &mut dyn Os, st: &ShellState, rs: &[ExpandedRedir]) -> Result<SavedFds, Bytes> {
    let mut saved: SavedFds = Vec::new();
    for r in rs {
        let res = match r {
            ExpandedRedir::File { mode, fd, path } => {
                if *mode == FileMode::Write
                    && st.has(ShellOption::NoClobber)
                    && os.stat(path, true).is_some_and(|s| s.kind == crate::os::FileKind::Regular)
                {
                    Err(msg_with(b"cannot create ", path, ": File exists"))
                } else {
                    match os.file_redir(*mode, path) {
                        Ok(nfd) => os.renumber(true, nfd, *fd).map_err(|e| e.message.into_bytes()),
                        Err(e) => {
                            let verb: &[u8] = if *mode == FileMode::Read { b"cannot open " } else { b"cannot create " };
                            Err(msg_with(verb, path, &format!(": {}", e.message)))
                        }
                    }
                }
            }
            ExpandedRedir::Dup { fd, target: Some(t), .. } => {
                if t == fd {
                    if os.is_open(*t) {
                        continue;
                    }
                    Err(format!("{t}: Bad file descriptor").into_bytes())
                } else if !os.is_open(*t) {
                    Err(format!("{t}: Bad file descriptor").into_bytes())
                } else {
                    os.renumber(false, *t, *fd).map_err(|e| e.message.into_bytes())
                }
            }
            ExpandedRedir::Dup { fd, target: None, .. } => os.close_and_save(*fd).map_err(|e| e.message.into_bytes()),
            ExpandedRedir::Here { fd, body, .. } => match os.heredoc(body) {
                Ok(hfd) => os.renumber(true, hfd, *fd).map_err(|e| e.message.into_bytes()),
                Err(e) => Err(e.message.into_bytes()),
            },
        };
        match res {
            Ok(s) => saved.push((redir_fd(r), s)),
            Err(m) => {
                restore_redirs(os, saved);
                return Err(m);
            }
        }
    }
    Ok(saved)
}

fn redir_fd(r: &ExpandedRedir) -> Fd {
    match r {
        ExpandedRedir::File { fd, .. } | ExpandedRedir::Dup { fd, .. } | ExpandedRedir::Here { fd, .. } => *fd,
    }
}

fn msg_with(a: &[u8], b: &[u8], c: &str) -> Bytes {
    let mut m = a.to_vec();
    m.extend_from_slice(b);
    m.extend_from_slice(c.as_bytes());
    m
}

// ---------------------------------------------------------------------------
// Command resolution

pub enum Resolved {
    Found(Bytes),
    NotExecutable(Bytes),
    NotFound,
}

pub const DEFAULT_PATH: &[u8] = b"/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin";

/// Search PATH for an executable.
pub fn resolve_path(os: &dyn Os, st: &ShellState, name: &[u8]) -> Resolved {
    if name.contains(&b'/') {
        return if os.file_exists(name) { Resolved::Found(name.to_vec()) } else { Resolved::NotFound };
    }
    let path = st.lookup(b"PATH").unwrap_or_else(|| DEFAULT_PATH.to_vec());
    let mut fallback = None;
    for dir in path.split(|c| *c == b':') {
        let mut cand = if dir.is_empty() { b".".to_vec() } else { dir.to_vec() };
        cand.push(b'/');
        cand.extend_from_slice(name);
        if os.file_executable(&cand) {
            return Resolved::Found(cand);
        }
        if fallback.is_none() && os.stat(&cand, true).is_some_and(|s| s.kind == crate::os::FileKind::Regular) {
            fallback = Some(cand);
        }
    }
    match fallback {
        Some(p) => Resolved::NotExecutable(p),
        None => Resolved::NotFound,
    }
}

/// Search PATH for a readable file, as `.` does.
pub fn resolve_readable(os: &dyn Os, st: &ShellState, name: &[u8]) -> Option<Bytes> {
    if name.contains(&b'/') {
        return Some(name.to_vec());
    }
    let path = st.lookup(b"PATH").unwrap_or_else(|| DEFAULT_PATH.to_vec());
    for dir in path.split(|c| *c == b':') {
        let mut cand = if dir.is_empty() { b".".to_vec() } else { dir.to_vec() };
        cand.push(b'/');
        cand.extend_from_slice(name);
        if os.stat(&cand, true).is_some_and(|s| s.kind == crate::os::FileKind::Regular) && os.access(&cand, Access::Read)
        {
            return Some(cand);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Stepping

/// Step a command by one rule. `checking` suppresses errexit.
pub fn step_eval(os: &mut dyn Os, st: &mut ShellState, checking: bool, cmd: Command) -> (Command, StepInfo) {
    use Command::*;
    match cmd {
        Simple { assigns, words, redirs } => (
            CmdArgs { assigns, args: start(ExpansionOptions::FIELDS, words), redirs, opts: CommandOptions::default() },
            ev("CmdStart"),
        ),
        CmdArgs { assigns, args, redirs, mut opts } => match args {
            ExpansionState::Error(msg) => exp_error(os, st, msg, Vec::new()),
            ExpansionState::Done(fields) => {
                (CmdRedirs { assigns, fields, state: RedirState::new(redirs), opts }, ev("CmdArgsDone"))
            }
            es => {
                let s = step_expansion(os, st, es);
                opts.did_cmd_subst |= s.did_cmd_subst;
                let info = StepInfo { phase: Phase::Expand, rule: s.rule, blocked: s.blocked };
                (CmdArgs { assigns, args: s.state, redirs, opts }, info)
            }
        },
        CmdRedirs { assigns, fields, state, opts } => match step_redirs(os, st, state) {
            RedirProgress::Step(state, info) => (CmdRedirs { assigns, fields, state, opts }, info),
            RedirProgress::Error(msg) => exp_error(os, st, msg, Vec::new()),
            RedirProgress::Ready(done) => match apply_redirs(os, st, &done) {
                Ok(saved) => {
                    st.push_scope();
                    let pending = assigns
                        .into_iter()
                        .map(|(n, w)| (n, start(ExpansionOptions::STRING, w)))
                        .collect();
                    (CmdAssigns { pending, fields, saved, opts }, ev("CmdRedirDone"))
                }
                Err(msg) => {
                    diag(os, &msg);
                    st.last_status = 2;
                    let special = !opts.simple_invocation && fields.first().is_some_and(|n| builtins::is_special(n));
                    let next = if (special && !st.interactive) || errexit_now(st, checking) { Exit } else { Done };
                    (next, ev("CmdRedirError"))
                }
            },
        },
        CmdAssigns { mut pending, fields, saved, mut opts } => {
            if let Some(i) = pending.iter().position(|(_, es)| !matches!(es, ExpansionState::Done(_))) {
                let (name, es) = std::mem::replace(&mut pending[i], (Vec::new(), ExpansionState::Done(Vec::new())));
                if let ExpansionState::Error(msg) = es {
                    st.pop_scope();
                    return exp_error(os, st, msg, saved);
                }
                let s = step_expansion(os, st, es);
                opts.did_cmd_subst |= s.did_cmd_subst;
                let info = StepInfo { phase: Phase::Expand, rule: s.rule, blocked: s.blocked };
                if let ExpansionState::Done(f) = &s.state {
                    let value = f.concat();
                    if let Err(e) = st.set_local(&name, Some(value)) {
                        diag(os, e.to_string().as_bytes());
                        st.pop_scope();
                        restore_redirs(os, saved);
                        st.last_status = 2;
                        return (fatal_or_done(st), ev("CmdAssignError"));
                    }
                    if !fields.is_empty() {
                        st.set_exported(&name);
                    }
                    pending[i] = (name, s.state);
                    return (CmdAssigns { pending, fields, saved, opts }, StepInfo { rule: "CmdAssign", ..info });
                }
                pending[i] = (name, s.state);
                return (CmdAssigns { pending, fields, saved, opts }, info);
            }
            let env: Vec<(Bytes, Bytes)> = pending
                .into_iter()
                .map(|(n, es)| match es {
                    ExpansionState::Done(f) => (n, f.concat()),
                    _ => unreachable!("all assignments are expanded"),
                })
                .collect();
            xtrace(os, st, &env, &fields);
            if fields.is_empty() {
                st.pop_scope();
                for (n, v) in &env {
                    if let Err(e) = st.set_global(n, v.clone()) {
                        diag(os, e.to_string().as_bytes());
                    }
                }
                restore_redirs(os, saved);
                st.last_status = if opts.did_cmd_subst { st.last_status } else { 0 };
                (finish(st, checking), ev("CmdAssignDoneNoCmd"))
            } else {
                let mut fields = fields;
                let name = fields.remove(0);
                (CmdReady { env, name, args: fields, saved, opts }, ev("CmdAssignDoneCmd"))
            }
        }
        CmdReady { env, name, args, saved, opts } => {
            if st.has(ShellOption::NoExec) && !st.interactive {
                st.pop_scope();
                restore_redirs(os, saved);
                return (Done, ev("CmdRunNoexec"));
            }
            (Run { env, name, args, saved, opts }, ev("CmdReady"))
        }
        Run { env, name, args, saved, opts } => run_command(os, st, checking, env, name, args, saved, opts),

        Pipeline { commands, background } => pipeline(os, st, checking, commands, background),
        Redirected(c, redirs) => (RedirExpand { cmd: c, state: RedirState::new(redirs) }, ev("RedirStart")),
        RedirExpand { cmd, state } => match step_redirs(os, st, state) {
            RedirProgress::Step(state, info) => (RedirExpand { cmd, state }, info),
            RedirProgress::Error(msg) => exp_error(os, st, msg, Vec::new()),
            RedirProgress::Ready(done) => match apply_redirs(os, st, &done) {
                Ok(saved) => (Redirs(cmd, saved), ev("RedirApply")),
                Err(msg) => {
                    diag(os, &msg);
                    st.last_status = 2;
                    (finish(st, checking), ev("RedirError"))
                }
            },
        },
        Redirs(c, saved) => {
            if c.is_terminal() {
                restore_redirs(os, saved);
                return (*c, ev("RedirRestore"));
            }
            let (c2, info) = step_eval(os, st, checking, *c);
            (Redirs(Box::new(c2), saved), info)
        }
        Background(c) => {
            let setup: &[FdSetup] = if st.interactive { &[] } else { &[FdSetup::NullStdin] };
            match os.fork_shell(st, *c.clone(), setup) {
                Ok(pid) => {
                    record_job(st, vec![pid], &c);
                    st.last_status = 0;
                    (Done, ev("Background"))
                }
                Err(e) => {
                    diag(os, format!("cannot fork: {}", e.message).as_bytes());
                    st.last_status = 2;
                    (Done, ev("Background"))
                }
            }
        }
        Subshell(c) => match os.fork_shell(st, *c, &[]) {
            Ok(pid) => (Wait { pids: vec![pid], checked: checking, record: true }, ev("Subshell")),
            Err(e) => {
                diag(os, format!("cannot fork: {}", e.message).as_bytes());
                st.last_status = 2;
                (Done, ev("Subshell"))
            }
        },
        Wait { mut pids, checked, record } => {
            let Some(&pid) = pids.last() else {
                return (finish(st, checking), ev("WaitDone"));
            };
            let status = match os.wait(pid) {
                WaitResult::Exited(s) => s,
                WaitResult::NoSuchChild => 127,
                WaitResult::Blocked(p) => {
                    return (Wait { pids, checked, record }, blocked(Phase::Eval, "Wait", p));
                }
            };
            pids.pop();
            mark_job_done(st, pid, status);
            if record {
                st.last_status = status;
            }
            if pids.is_empty() {
                let next = finish(st, checking);
                (check_traps(os, st, next), ev("WaitDone"))
            } else {
                (Wait { pids, checked, record: false }, ev("Wait"))
            }
        }
        Seq(a, b) => match *a {
            Done => (check_traps(os, st, *b), ev("SeqNext")),
            c if c.is_ctrl() => (c, ev("SeqCtrl")),
            c => {
                let (a2, info) = step_eval(os, st, checking, c);
                (Seq(Box::new(a2), b), info)
            }
        },
        And(a, b) => match *a {
            Done => {
                if st.last_status == 0 {
                    (*b, ev("AndTrue"))
                } else {
                    (Done, ev("AndFalse"))
                }
            }
            c if c.is_ctrl() => (c, ev("AndCtrl")),
            c => {
                let (a2, info) = step_eval(os, st, true, c);
                (And(Box::new(a2), b), info)
            }
        },
        Or(a, b) => match *a {
            Done => {
                if st.last_status != 0 {
                    (*b, ev("OrFalse"))
                } else {
                    (Done, ev("OrTrue"))
                }
            }
            c if c.is_ctrl() => (c, ev("OrCtrl")),
            c => {
                let (a2, info) = step_eval(os, st, true, c);
                (Or(Box::new(a2), b), info)
            }
        },
        Not(c) => match *c {
            Done => {
                st.last_status = if st.last_status == 0 { 1 } else { 0 };
                (Done, ev("NotDone"))
            }
            c if c.is_ctrl() => (c, ev("NotCtrl")),
            c => {
                let (c2, info) = step_eval(os, st, true, c);
                (Not(Box::new(c2)), info)
            }
        },
        If { cond, then, otherwise } => match *cond {
            Done => {
                if st.last_status == 0 {
                    (*then, ev("IfTrue"))
                } else {
                    match otherwise {
                        Some(e) => (*e, ev("IfFalse")),
                        None => {
                            st.last_status = 0;
                            (Done, ev("IfFalseNoElse"))
                        }
                    }
                }
            }
            c if c.is_ctrl() => (c, ev("IfCtrl")),
            c => {
                let (c2, info) = step_eval(os, st, true, c);
                (If { cond: Box::new(c2), then, otherwise }, info)
            }
        },
        While { cond, body } => {
            st.loop_depth += 1;
            let cur = cond.clone();
            (WhileCond { cond, cur, body, body_status: 0 }, ev("WhileStart"))
        }
        WhileCond { cond, cur, body, body_status } => match *cur {
            Done => {
                if st.last_status == 0 {
                    let cur = body.clone();
                    (WhileBody { cond, cur, body }, ev("WhileCondTrue"))
                } else {
                    st.last_status = body_status;
                    st.loop_depth -= 1;
                    (Done, ev("WhileCondFalse"))
                }
            }
            c if c.is_ctrl() => loop_ctrl(st, c, || {
                let cur = cond.clone();
                WhileCond { cond, cur, body, body_status: 0 }
            }),
            c => {
                let (c2, info) = step_eval(os, st, true, c);
                (WhileCond { cond, cur: Box::new(c2), body, body_status }, info)
            }
        },
        WhileBody { cond, cur, body } => match *cur {
            Done => {
                let body_status = st.last_status;
                let cur = cond.clone();
                (check_traps(os, st, WhileCond { cond, cur, body, body_status }), ev("WhileBodyDone"))
            }
            c if c.is_ctrl() => loop_ctrl(st, c, || {
                let cur = cond.clone();
                WhileCond { cond, cur, body, body_status: 0 }
            }),
            c => {
                let (c2, info) = step_eval(os, st, checking, c);
                (WhileBody { cond, cur: Box::new(c2), body }, info)
            }
        },
        For { var, words, body } => (ForArgs { var, args: start(ExpansionOptions::FIELDS, words), body }, ev("ForStart")),
        ForArgs { var, args, body } => match args {
            ExpansionState::Error(msg) => exp_error(os, st, msg, Vec::new()),
            ExpansionState::Done(fields) => {
                st.loop_depth += 1;
                if fields.is_empty() {
                    st.last_status = 0;
                }
                (ForStart { var, fields, body }, ev("ForArgsDone"))
            }
            es => {
                let s = step_expansion(os, st, es);
                let info = StepInfo { phase: Phase::Expand, rule: s.rule, blocked: s.blocked };
                (ForArgs { var, args: s.state, body }, info)
            }
        },
        ForStart { var, mut fields, body } => {
            if fields.is_empty() {
                st.loop_depth -= 1;
                return (Done, ev("ForDone"));
            }
            let v = fields.remove(0);
            if let Err(e) = st.set_global(&var, v) {
                diag(os, e.to_string().as_bytes());
                st.loop_depth -= 1;
                st.last_status = 2;
                return (fatal_or_done(st), ev("ForAssignError"));
            }
            let cur = body.clone();
            (ForRunning { var, rest: fields, body, cur }, ev("ForIter"))
        }
        ForRunning { var, rest, body, cur } => match *cur {
            Done => (check_traps(os, st, ForStart { var, fields: rest, body }), ev("ForBodyDone")),
            c if c.is_ctrl() => loop_ctrl(st, c, || ForStart { var, fields: rest, body }),
            c => {
                let (c2, info) = step_eval(os, st, checking, c);
                (ForRunning { var, rest, body, cur: Box::new(c2) }, info)
            }
        },
        Case { scrutinee, branches } => {
            (CaseArg { scrutinee: start(ExpansionOptions::STRING, scrutinee), branches }, ev("CaseStart"))
        }
        CaseArg { scrutinee, branches } => match scrutinee {
            ExpansionState::Error(msg) => exp_error(os, st, msg, Vec::new()),
            ExpansionState::Done(f) => (CaseMatch { value: f.concat(), branches }, ev("CaseArgDone")),
            es => {
                let s = step_expansion(os, st, es);
                let info = StepInfo { phase: Phase::Expand, rule: s.rule, blocked: s.blocked };
                (CaseArg { scrutinee: s.state, branches }, info)
            }
        },
        CaseMatch { value, mut branches } => {
            if branches.is_empty() {
                st.last_status = 0;
                return (Done, ev("CaseNoMatch"));
            }
            let b = branches.remove(0);
            let mut pats = b.patterns.into_iter();
            let Some(first) = pats.next() else {
                return (CaseMatch { value, branches }, ev("CaseNext"));
            };
            (
                CaseCheck {
                    value,
                    pattern: start(ExpansionOptions::PATTERN, first),
                    rest: pats.collect(),
                    body: b.body.map(Box::new),
                    branches,
                },
                ev("CaseBranch"),
            )
        }
        CaseCheck { value, pattern, mut rest, body, branches } => match pattern {
            ExpansionState::Error(msg) => exp_error(os, st, msg, Vec::new()),
            ExpansionState::Done(f) => {
                let p = pattern::compile(&f.concat());
                if pattern::matches(&p, &value) {
                    match body {
                        Some(b) => (*b, ev("CaseMatched")),
                        None => {
                            st.last_status = 0;
                            (Done, ev("CaseMatched"))
                        }
                    }
                } else if !rest.is_empty() {
                    let next = rest.remove(0);
                    (
                        CaseCheck { value, pattern: start(ExpansionOptions::PATTERN, next), rest, body, branches },
                        ev("CaseNextPattern"),
                    )
                } else {
                    (CaseMatch { value, branches }, ev("CaseNext"))
                }
            }
            es => {
                let s = step_expansion(os, st, es);
                let info = StepInfo { phase: Phase::Expand, rule: s.rule, blocked: s.blocked };
                (CaseCheck { value, pattern: s.state, rest, body, branches }, info)
            }
        },
        FnDef { name, body } => {
            st.functions.insert(name, *body);
            st.last_status = 0;
            (Done, ev("FnDef"))
        }
        Call { loop_depth, positional, name, orig, cur } => {
            if cur.is_terminal() {
                st.function_depth -= 1;
                st.positional = positional;
                st.loop_depth = loop_depth;
                st.pop_scope();
                let next = match *cur {
                    Done | Return => Done,
                    c => c,
                };
                return (next, ev("CallReturn"));
            }
            let (c2, info) = step_eval(os, st, checking, *cur);
            (Call { loop_depth, positional, name, orig, cur: Box::new(c2) }, info)
        }
        EvalLoop(mut frame) => {
            let ps1 = st.lookup(b"PS1").unwrap_or_default();
            let ps2 = st.lookup(b"PS2").unwrap_or_default();
            let aliases = st.aliases.clone();
            match frame.session.parse_next(os, &aliases, &ps1, &ps2) {
                ParseResult::Complete(c) => {
                    frame.ran_any = true;
                    if st.has(ShellOption::Verbose) {
                        let _ = os.write_all(2, &render(&c));
                        let _ = os.write_all(2, b"\n");
                    }
                    (EvalLoopCmd(frame, Box::new(c)), ev("EvalLoopParse"))
                }
                ParseResult::Blank => (EvalLoop(frame), ev("EvalLoopBlank")),
                ParseResult::Eof => {
                    if frame.kind == EvalKind::Dot {
                        st.dot_depth -= 1;
                    }
                    if frame.interactive && frame.kind == EvalKind::Top {
                        let _ = os.write_all(2, b"\n");
                    }
                    (Done, ev("EvalLoopEof"))
                }
                ParseResult::SyntaxError(msg) => {
                    diag(os, msg.as_bytes());
                    st.last_status = 2;
                    if frame.interactive {
                        (EvalLoop(frame), ev("EvalLoopSyntaxError"))
                    } else if frame.fatal_errors || !st.interactive {
                        (Exit, ev("EvalLoopSyntaxError"))
                    } else {
                        if frame.kind == EvalKind::Dot {
                            st.dot_depth -= 1;
                        }
                        (Done, ev("EvalLoopSyntaxError"))
                    }
                }
                ParseResult::Blocked(p) => (EvalLoop(frame), blocked(Phase::Eval, "EvalLoopRead", p)),
            }
        }
        EvalLoopCmd(frame, c) => match *c {
            Done => (check_traps(os, st, EvalLoop(frame)), ev("EvalLoopNext")),
            Exit => (Exit, ev("EvalLoopExit")),
            Return => match frame.kind {
                EvalKind::Dot => {
                    st.dot_depth -= 1;
                    (Done, ev("EvalLoopReturn"))
                }
                EvalKind::Top => (EvalLoop(frame), ev("EvalLoopReturn")),
                _ => (Return, ev("EvalLoopReturn")),
            },
            c @ (Break(_) | Continue(_)) => {
                if frame.kind == EvalKind::Top {
                    (EvalLoop(frame), ev("EvalLoopCtrl"))
                } else {
                    if frame.kind == EvalKind::Dot {
                        st.dot_depth -= 1;
                    }
                    (c, ev("EvalLoopCtrl"))
                }
            }
            c => {
                let chk = checking && frame.kind != EvalKind::Top;
                let (c2, info) = step_eval(os, st, chk, c);
                (EvalLoopCmd(frame, Box::new(c2)), info)
            }
        },
        Trapped { signal, status, handler, cont } => match *handler {
            Done => {
                st.last_status = status;
                (*cont, ev("TrapDone"))
            }
            Exit => (Exit, ev("TrapExit")),
            c if c.is_ctrl() => {
                st.last_status = status;
                (*cont, ev("TrapDone"))
            }
            c => {
                let (c2, info) = step_eval(os, st, false, c);
                (Trapped { signal, status, handler: Box::new(c2), cont }, info)
            }
        },
        Exec { path, name, args, env, as_script } => exec_step(os, st, path, name, args, env, as_script),
        c @ (Break(_) | Continue(_) | Return | Exit | Done) => (c, ev("Terminal")),
    }
}

/// Break/continue reaching a loop frame. `again` rebuilds the next iteration.
fn loop_ctrl(st: &mut ShellState, c: Command, again: impl FnOnce() -> Command) -> (Command, StepInfo) {
    match c {
        Command::Break(n) => {
            st.loop_depth -= 1;
            if n > 1 {
                (Command::Break(n - 1), ev("LoopBreak"))
            } else {
                st.last_status = 0;
                (Command::Done, ev("LoopBreak"))
            }
        }
        Command::Continue(n) => {
            if n > 1 {
                st.loop_depth -= 1;
                (Command::Continue(n - 1), ev("LoopContinue"))
            } else {
                st.last_status = 0;
                (again(), ev("LoopContinue"))
            }
        }
        other => {
            st.loop_depth -= 1;
            (other, ev("LoopCtrl"))
        }
    }
}

fn xtrace(os: &mut dyn Os, st: &ShellState, env: &[(Bytes, Bytes)], fields: &[Bytes]) {
    if !st.has(ShellOption::XTrace) || (env.is_empty() && fields.is_empty()) {
        return;
    }
    let mut line = st.lookup(b"PS4").unwrap_or_default();
    let mut first = true;
    for (n, v) in env {
        if !first {
            line.push(b' ');
        }
        first = false;
        line.extend_from_slice(n);
        line.push(b'=');
        line.extend_from_slice(v);
    }
    for f in fields {
        if !first {
            line.push(b' ');
        }
        first = false;
        line.extend_from_slice(f);
    }
    line.push(b'\n');
    let _ = os.write_all(2, &line);
}

fn record_job(st: &mut ShellState, pids: Vec<Pid>, c: &Command) {
    let id = st.jobs.keys().next_back().map_or(1, |k| k + 1);
    let leader = *pids.last().expect("a job has a process");
    st.last_bg_pid = Some(leader);
    st.jobs.insert(id, JobInfo { id, pids, leader, command: render(c), status: JobStatus::Running });
}

fn mark_job_done(st: &mut ShellState, pid: Pid, status: u8) {
    st.jobs.retain(|_, j| {
        if j.leader == pid {
            j.status = JobStatus::Done(status);
        }
        !j.pids.iter().all(|p| *p == pid) || j.pids.len() > 1
    });
}

fn pipeline(
    os: &mut dyn Os,
    st: &mut ShellState,
    checking: bool,
    commands: Vec<Command>,
    background: bool,
) -> (Command, StepInfo) {
    let n = commands.len();
    if n == 1 && !background {
        let c = commands.into_iter().next().expect("one command");
        return (c, ev("PipelineSingle"));
    }
    let whole = Command::Pipeline { commands: commands.clone(), background };
    let mut pids = Vec::new();
    let mut prev: Option<Fd> = None;
    for (i, c) in commands.into_iter().enumerate() {
        let mut setup = Vec::new();
        match prev {
            Some(pr) => {
                setup.push(FdSetup::Dup2(pr, 0));
                if pr != 0 {
                    setup.push(FdSetup::Close(pr));
                }
            }
            None if background && !st.interactive => setup.push(FdSetup::NullStdin),
            None => {}
        }
        let mut out = None;
        if i + 1 < n {
            match os.pipe() {
                Ok((r, w)) => {
                    setup.push(FdSetup::Close(r));
                    setup.push(FdSetup::Dup2(w, 1));
                    if w != 1 {
                        setup.push(FdSetup::Close(w));
                    }
                    out = Some((r, w));
                }
                Err(e) => {
                    diag(os, format!("cannot create pipe: {}", e.message).as_bytes());
                    if let Some(pr) = prev {
                        os.close(pr);
                    }
                    st.last_status = 2;
                    return (Command::Wait { pids, checked: checking, record: false }, ev("PipelineError"));
                }
            }
        }
        match os.fork_shell(st, c, &setup) {
            Ok(pid) => pids.push(pid),
            Err(e) => diag(os, format!("cannot fork: {}", e.message).as_bytes()),
        }
        if let Some(pr) = prev {
            os.close(pr);
        }
        prev = None;
        if let Some((r, w)) = out {
            os.close(w);
            prev = Some(r);
        }
    }
    if background {
        if !pids.is_empty() {
            record_job(st, pids, &whole);
        }
        st.last_status = 0;
        return (Command::Done, ev("PipelineBackground"));
    }
    (Command::Wait { pids, checked: checking, record: true }, ev("Pipeline"))
}

#[allow(clippy::too_many_arguments)]
fn run_command(
    os: &mut dyn Os,
    st: &mut ShellState,
    checking: bool,
    env: Vec<(Bytes, Bytes)>,
    name: Bytes,
    args: Fields,
    saved: SavedFds,
    mut opts: CommandOptions,
) -> (Command, StepInfo) {
    use Command::*;
    let special = builtins::is_special(&name) && !opts.simple_invocation;
    if name == b"command" {
        let mut args = args;
        while args.first().is_some_and(|a| a == b"-p") {
            args.remove(0);
        }
        if args.first().is_some_and(|a| a == b"--") {
            args.remove(0);
        } else if args.first().is_some_and(|a| a.starts_with(b"-")) {
            let r = builtin_outcome(os, st, checking, &name, &args, saved, false, true, "CmdRunBuiltin");
            if r.1.blocked.is_none() {
                st.pop_scope();
            }
            return r;
        }
        if args.is_empty() {
            st.pop_scope();
            restore_redirs(os, saved);
            st.last_status = 0;
            return (Done, ev("CmdCommand"));
        }
        let name = args.remove(0);
        opts.simple_invocation = true;
        return (Run { env, name, args, saved, opts }, ev("CmdCommand"));
    }
    if special || builtins::is_special(&name) {
        let scope = st.pop_scope();
        if special {
            for (n, l) in scope {
                if let Some(v) = l.value {
                    if let Err(e) = st.set_global(&n, v) {
                        diag(os, e.to_string().as_bytes());
                    }
                }
            }
        }
        let fatal_ok = special && !st.interactive;
        return builtin_outcome(os, st, checking, &name, &args, saved, fatal_ok, opts.simple_invocation, "CmdRunSpecial");
    }
    if !opts.simple_invocation {
        if let Some(body) = st.functions.get(&name).cloned() {
            st.function_depth += 1;
            let positional = std::mem::replace(&mut st.positional, args);
            let loop_depth = st.loop_depth;
            if !st.has(ShellOption::NonLexicalCtrl) {
                st.loop_depth = 0;
            }
            let call = Call { loop_depth, positional, name, orig: Box::new(body.clone()), cur: Box::new(body) };
            return (Redirs(Box::new(call), saved), ev("CmdRunFunction"));
        }
    }
    if builtins::is_regular(&name) {
        let r = builtin_outcome(os, st, checking, &name, &args, saved, false, opts.simple_invocation, "CmdRunBuiltin");
        if r.1.blocked.is_none() {
            st.pop_scope();
        }
        return r;
    }
    if builtins::is_unsupported(&name) {
        st.pop_scope();
        restore_redirs(os, saved);
        diag(os, &msg_with(&name, b"", ": not supported"));
        st.last_status = 127;
        return (finish(st, checking), ev("CmdUnsupported"));
    }
    let path = match resolve_path(os, st, &name) {
        Resolved::Found(p) | Resolved::NotExecutable(p) => p,
        Resolved::NotFound => {
            st.pop_scope();
            restore_redirs(os, saved);
            diag(os, &msg_with(&name, b"", ": not found"));
            st.last_status = 127;
            return (finish(st, checking), ev("CmdNotFound"));
        }
    };
    if !name.contains(&b'/') {
        st.hashed.insert(name.clone(), path.clone());
    }
    let xenv = st.export_env(&[]);
    st.pop_scope();
    let exec = Exec { path, name, args, env: xenv, as_script: true };
    match os.fork_shell(st, exec, &[]) {
        Ok(pid) => (Redirs(Box::new(Wait { pids: vec![pid], checked: checking, record: true }), saved), ev("CmdRunExternal")),
        Err(e) => {
            restore_redirs(os, saved);
            diag(os, format!("cannot fork: {}", e.message).as_bytes());
            st.last_status = 2;
            (finish(st, checking), ev("CmdRunExternal"))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn builtin_outcome(
    os: &mut dyn Os,
    st: &mut ShellState,
    checking: bool,
    name: &[u8],
    args: &[Bytes],
    saved: SavedFds,
    fatal_ok: bool,
    simple: bool,
    rule: &'static str,
) -> (Command, StepInfo) {
    let out = builtins::run(os, st, name, args, simple);
    if let Some(p) = out.blocked {
        let cmd = Command::Run {
            env: Vec::new(),
            name: name.to_vec(),
            args: args.to_vec(),
            saved,
            opts: CommandOptions { simple_invocation: simple, ..Default::default() },
        };
        return (cmd, blocked(Phase::Eval, rule, p));
    }
    st.last_status = out.status;
    match out.flow {
        Flow::Normal => {
            restore_redirs(os, saved);
            (finish(st, checking), ev(rule))
        }
        Flow::Fatal => {
            restore_redirs(os, saved);
            let next = if fatal_ok { Command::Exit } else { finish(st, checking) };
            (next, ev(rule))
        }
        Flow::KeepRedirs => {
            forget_redirs(os, saved);
            (finish(st, checking), ev(rule))
        }
        Flow::Cont(c) => (Command::Redirs(Box::new(c), saved), ev(rule)),
    }
}

fn exec_step(
    os: &mut dyn Os,
    st: &mut ShellState,
    path: Bytes,
    name: Bytes,
    args: Fields,
    env: Vec<(Bytes, Bytes)>,
    as_script: bool,
) -> (Command, StepInfo) {
    let mut argv = vec![name.clone()];
    argv.extend(args.iter().cloned());
    match os.execve(&path, &argv, &env) {
        Ok(ExecOutcome::Exited(s)) => {
            st.last_status = s;
            (Command::Exit, ev("ExecDone"))
        }
        Ok(ExecOutcome::Blocked(p)) => {
            (Command::Exec { path, name, args, env, as_script }, blocked(Phase::Eval, "Exec", p))
        }
        Err(e) if e.errno == libc::ENOEXEC && as_script => match os.read_file(&path) {
            Ok(src) => {
                reset_for_script(st, &env);
                st.positional = args;
                st.arg0 = name;
                let frame = eval_frame(src, EvalKind::Top, false);
                (Command::EvalLoop(Box::new(frame)), ev("ExecScript"))
            }
            Err(e) => {
                diag(os, &msg_with(&name, b"", &format!(": {}", e.message)));
                st.last_status = 126;
                (Command::Exit, ev("ExecError"))
            }
        },
        Err(e) => {
            st.last_status = if e.errno == libc::ENOENT { 127 } else { 126 };
            let msg = if e.errno == libc::ENOENT { "not found".to_string() } else { e.message };
            diag(os, &msg_with(&name, b"", &format!(": {msg}")));
            (Command::Exit, ev("ExecError"))
        }
    }
}

/// A script run via ENOEXEC starts from the exported environment only.
fn reset_for_script(st: &mut ShellState, env: &[(Bytes, Bytes)]) {
    let mut fresh = ShellState::new(st.root_pid);
    fresh.import_env(env.iter().cloned());
    fresh.cwd = st.cwd.clone();
    fresh.outermost = false;
    *st = fresh;
}

// ---------------------------------------------------------------------------
// Driving a process to completion

/// One shell process: its command plus EXIT-trap bookkeeping.
#[derive(Clone, Debug)]
pub struct Runner {
    pub cmd: Command,
    trap_saved: Option<u8>,
    pub finished: Option<u8>,
}

impl Runner {
    pub fn new(cmd: Command) -> Self {
        Runner { cmd, trap_saved: None, finished: None }
    }

    /// Take one step. Returns `None` once the process has finished.
    pub fn step(&mut self, os: &mut dyn Os, st: &mut ShellState) -> Option<StepInfo> {
        if self.finished.is_some() {
            return None;
        }
        if self.cmd.is_terminal() {
            let explicit_exit = self.cmd == Command::Exit;
            if let Some(saved) = self.trap_saved.take() {
                let status = if explicit_exit { st.last_status } else { saved };
                self.finished = Some(status);
                st.last_status = status;
                return None;
            }
            let handler = st.traps.get(&Signal::Exit).cloned().filter(|h| !h.is_empty());
            if let Some(h) = handler {
                if !st.exiting {
                    st.exiting = true;
                    st.traps.remove(&Signal::Exit);
                    self.trap_saved = Some(st.last_status);
                    let frame = eval_frame(h, EvalKind::Trap, false);
                    self.cmd = Command::EvalLoop(Box::new(frame));
                    return Some(ev("ExitTrap"));
                }
            }
            self.finished = Some(st.last_status);
            return None;
        }
        let cmd = std::mem::replace(&mut self.cmd, Command::Done);
        let (next, info) = step_eval(os, st, false, cmd);
        self.cmd = next;
        Some(info)
    }
}

/// Run a command to completion in this process, including the EXIT trap.
pub fn run_to_exit(os: &mut dyn Os, mut st: ShellState, cmd: Command) -> u8 {
    let mut r = Runner::new(cmd);
    loop {
        match r.step(os, &mut st) {
            Some(StepInfo { blocked: Some(_), .. }) => {
                // Nothing else can run this process's dependency here.
                return 2;
            }
            Some(_) => {}
            None => return r.finished.unwrap_or(st.last_status),
        }
    }
}

/// Parse and run a program string to completion.
pub fn run_string(os: &mut dyn Os, st: ShellState, src: &[u8]) -> u8 {
    let frame = eval_frame(src.to_vec(), EvalKind::Top, false);
    run_to_exit(os, st, Command::EvalLoop(Box::new(frame)))
}

/// Parse a handler or eval string into one command.
pub fn parse_handler(src: &[u8]) -> Result<Command, String> {
    parse_one(src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::os::SystemOs;

    fn status_of(src: &str) -> u8 {
        let mut os = SystemOs::new();
        let st = ShellState::new(os.getpid());
        // Run in a child so stdout and exits stay contained.
        let frame = eval_frame(src.as_bytes().to_vec(), EvalKind::Top, false);
        let pid = os.fork_shell(&st, Command::EvalLoop(Box::new(frame)), &[FdSetup::Close(1)]).unwrap();
        match os.wait(pid) {
            WaitResult::Exited(s) => s,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn statuses() {
        assert_eq!(status_of("true"), 0);
        assert_eq!(status_of("false"), 1);
        assert_eq!(status_of("! true"), 1);
        assert_eq!(status_of("exit 7"), 7);
        assert_eq!(status_of("x=$(exit 5)"), 5);
        assert_eq!(status_of("f() { return 3; }; f"), 3);
        assert_eq!(status_of("for i in 1 2; do false; done"), 1);
        assert_eq!(status_of("while false; do :; done"), 0);
        assert_eq!(status_of("case a in b) false;; esac"), 0);
        assert_eq!(status_of("set -e; false; exit 4"), 1);
        assert_eq!(status_of("set -e; if false; then :; fi; exit 4"), 4);
        assert_eq!(status_of("nonexistent_command_xyz"), 127);
    }
}
