//! The shell: runs the semantics against real syscalls.
//!
//! Options follow the usual `sh` conventions (`-c`, `-s`, `-i`, option
//! letters, `-o name`, `+o name`, `--`), which is why they are parsed by
//! hand. With `SMOLSH_TRACE=1` the root process also writes its step trace
//! as JSON to fd 9.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::os::fd::FromRawFd;
use std::os::unix::ffi::{OsStrExt, OsStringExt};

use smolsh::ast::{render_string, Command, EvalFrame, EvalKind};
use smolsh::eval::{eval_frame, Runner};
use smolsh::parser::ParseSession;
use smolsh::trace::{lossy, FinalState, StepRecord, Trace};
use smolsh::{Bytes, Os, ShellOption, ShellState, SystemOs};

const TRACE_FD: i32 = 9;

#[derive(Debug, Default)]
struct Invocation {
    command: Option<Bytes>,
    force_stdin: bool,
    interactive: Option<bool>,
    options: Vec<(ShellOption, bool)>,
    operands: Vec<Bytes>,
}

fn usage_error(msg: &str) -> ! {
    eprintln!("smolsh: {msg}");
    std::process::exit(2);
}

fn parse_args(args: Vec<Bytes>) -> Invocation {
    let mut inv = Invocation::default();
    let mut want_command = false;
    let mut it = args.into_iter().peekable();
    while let Some(a) = it.peek().cloned() {
        if a == b"--" || a == b"-" {
            it.next();
            break;
        }
        let on = match a.first() {
            Some(b'-') => true,
            Some(b'+') => false,
            _ => break,
        };
        if a.len() < 2 {
            break;
        }
        it.next();
        for &c in &a[1..] {
            match c {
                b'c' if on => want_command = true,
                b's' if on => inv.force_stdin = true,
                b'i' => inv.interactive = Some(on),
                b'o' => {
                    let name = it.next().unwrap_or_else(|| usage_error("-o requires an option name"));
                    match ShellOption::from_name(&name) {
                        Some(o) => inv.options.push((o, on)),
                        None => usage_error(&format!("illegal option -o {}", lossy(&name))),
                    }
                }
                _ => match ShellOption::from_letter(c) {
                    Some(o) => inv.options.push((o, on)),
                    None => usage_error(&format!("illegal option {}{}", if on { '-' } else { '+' }, c as char)),
                },
            }
        }
    }
    let mut rest: Vec<Bytes> = it.collect();
    if want_command {
        if rest.is_empty() {
            usage_error("-c requires an argument");
        }
        inv.command = Some(rest.remove(0));
    }
    inv.operands = rest;
    inv
}

fn open_trace_sink() -> Option<std::fs::File> {
    if std::env::var_os("SMOLSH_TRACE").is_none_or(|v| v != "1") {
        return None;
    }
    // SAFETY: fcntl only queries whether fd 9 is open.
    if unsafe { libc::fcntl(TRACE_FD, libc::F_GETFD) } < 0 {
        return None;
    }
    // SAFETY: fd 9 is open and from here on owned by this file handle.
    Some(unsafe { std::fs::File::from_raw_fd(TRACE_FD) })
}

fn delta(before: &BTreeMap<Bytes, Bytes>, after: &BTreeMap<Bytes, Bytes>) -> BTreeMap<String, Option<String>> {
    let mut d = BTreeMap::new();
    for (k, v) in after {
        if before.get(k) != Some(v) {
            d.insert(lossy(k), Some(lossy(v)));
        }
    }
    for k in before.keys().filter(|k| !after.contains_key(*k)) {
        d.insert(lossy(k), None);
    }
    d
}

fn main() {
    let args: Vec<Bytes> = std::env::args_os().skip(1).map(OsString::into_vec).collect();
    let inv = parse_args(args);
    let mut os = SystemOs::new();
    let mut st = ShellState::new(os.getpid());
    st.import_env(std::env::vars_os().map(|(k, v)| (k.into_vec(), v.into_vec())));
    if let Ok(cwd) = os.getcwd() {
        // Keep an inherited PWD only if it names the working directory.
        let same = |a: &[u8], b: &[u8]| {
            let (Ok(x), Ok(y)) = (std::fs::metadata(std::ffi::OsStr::from_bytes(a)), std::fs::metadata(std::ffi::OsStr::from_bytes(b))) else {
                return false;
            };
            use std::os::unix::fs::MetadataExt;
            (x.dev(), x.ino()) == (y.dev(), y.ino())
        };
        match st.lookup(b"PWD") {
            Some(p) if p.starts_with(b"/") && same(&p, &cwd) => st.cwd = p,
            _ => {
                let _ = st.set_global(b"PWD", cwd.clone());
                st.cwd = cwd;
            }
        }
    }
    for (o, on) in &inv.options {
        st.set_option(*o, *on);
    }

    let mut operands = inv.operands.into_iter();
    let mut source_text = String::new();
    let (source, interactive): (EvalFrame, bool) = if let Some(cmd) = inv.command {
        if let Some(name) = operands.next() {
            st.arg0 = name;
        }
        let interactive = inv.interactive.unwrap_or(false);
        source_text = lossy(&cmd);
        (eval_frame(cmd, EvalKind::Top, interactive), interactive)
    } else if let (false, Some(path)) = (inv.force_stdin, operands.as_slice().first().cloned()) {
        operands.next();
        let text = match std::fs::read(std::ffi::OsStr::from_bytes(&path)) {
            Ok(t) => t,
            Err(e) => {
                let msg = e.raw_os_error().map_or_else(|| e.to_string(), smolsh::os::errno_message);
                eprintln!("smolsh: {}: {msg}", lossy(&path));
                std::process::exit(127);
            }
        };
        st.arg0 = path;
        source_text = lossy(&text);
        let interactive = inv.interactive.unwrap_or(false);
        (eval_frame(text, EvalKind::Top, interactive), interactive)
    } else {
        let interactive = inv.interactive.unwrap_or_else(|| os.isatty(0) && os.isatty(2));
        let frame = EvalFrame {
            session: ParseSession::from_fd(0),
            kind: EvalKind::Top,
            interactive,
            fatal_errors: !interactive,
            ran_any: false,
        };
        (frame, interactive)
    };
    st.positional = operands.collect();
    st.interactive = interactive;

    let mut sink = open_trace_sink();
    let mut runner = Runner::new(Command::EvalLoop(Box::new(source)));
    let mut steps = Vec::new();
    let status = loop {
        let traced = sink.is_some();
        let term = if traced { render_string(&runner.cmd) } else { String::new() };
        let before = traced.then(|| st.visible_vars());
        match runner.step(&mut os, &mut st) {
            None => break runner.finished.unwrap_or(st.last_status),
            Some(info) if info.blocked.is_some() => break 2,
            Some(info) => {
                if let Some(b) = before {
                    steps.push(StepRecord {
                        n: steps.len(),
                        phase: info.phase.as_str(),
                        rule: info.rule.to_string(),
                        term,
                        env_delta: delta(&b, &st.visible_vars()),
                        stdout: String::new(),
                        stderr: String::new(),
                    });
                }
            }
        }
    };
    if let Some(f) = sink.as_mut() {
        let trace = Trace {
            source: source_text,
            steps,
            final_state: FinalState { status, stdout: String::new(), stderr: String::new(), fuel_exhausted: false },
        };
        let _ = writeln!(f, "{}", trace.to_json_string());
    }
    std::process::exit(status as i32);
}
