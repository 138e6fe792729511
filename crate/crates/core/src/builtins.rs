//! Built-in utilities.
//!
//! Builtins run inside the shell process and return an [`Outcome`]: a
//! status plus a control [`Flow`] for the evaluator (for example `eval`
//! continues with an eval loop, `exit` with `Exit`).

use crate::ast::*;
use crate::eval::{eval_frame, resolve_path, resolve_readable, Resolved};
use crate::os::{LineRead, Os, Signal, SignalAction};
use crate::state::{ShellOption, ShellState};

/// How evaluation continues after a builtin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Flow {
    Normal,
    /// An error that aborts a non-interactive shell when special.
    Fatal,
    /// Keep the command's redirections in force (`exec` with no command).
    KeepRedirs,
    /// Continue with this command, redirections still applied.
    Cont(Command),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub status: u8,
    pub flow: Flow,
    /// The builtin needs input from this process first.
    pub blocked: Option<Pid>,
}

impl Outcome {
    fn ok(status: u8) -> Self {
        Outcome { status, flow: Flow::Normal, blocked: None }
    }

    fn fatal(status: u8) -> Self {
        Outcome { status, flow: Flow::Fatal, blocked: None }
    }

    fn cont(status: u8, c: Command) -> Self {
        Outcome { status, flow: Flow::Cont(c), blocked: None }
    }
}

pub const SPECIAL: &[&str] =
    &["break", ":", "continue", ".", "eval", "exec", "exit", "export", "readonly", "return", "set", "shift", "times", "trap", "unset", "local"];

pub const REGULAR: &[&str] = &[
    "alias", "cd", "command", "false", "getopts", "kill", "pwd", "read", "true", "umask", "unalias", "wait", "type",
    "hash", "echo", "printf", "test", "[",
];

pub const UNSUPPORTED: &[&str] = &["fg", "bg", "jobs", "fc", "newgrp"];

fn listed(list: &[&str], name: &[u8]) -> bool {
    list.iter().any(|n| n.as_bytes() == name)
}

pub fn is_special(name: &[u8]) -> bool {
    listed(SPECIAL, name)
}

pub fn is_regular(name: &[u8]) -> bool {
    listed(REGULAR, name)
}

pub fn is_unsupported(name: &[u8]) -> bool {
    listed(UNSUPPORTED, name)
}

pub fn is_builtin(name: &[u8]) -> bool {
    is_special(name) || is_regular(name)
}

struct Ctx<'a> {
    os: &'a mut dyn Os,
    st: &'a mut ShellState,
    name: &'a [u8],
    simple: bool,
}

impl Ctx<'_> {
    fn out(&mut self, b: &[u8]) -> bool {
        self.os.write_all(1, b).is_ok()
    }

    fn err(&mut self, msg: impl AsRef<[u8]>) {
        let mut m = b"smolsh: ".to_vec();
        m.extend_from_slice(self.name);
        m.extend_from_slice(b": ");
        m.extend_from_slice(msg.as_ref());
        m.push(b'\n');
        let _ = self.os.write_all(2, &m);
    }

    /// Error exit for a special builtin, plain failure for `command x`.
    fn special_error(&mut self, msg: impl AsRef<[u8]>, status: u8) -> Outcome {
        self.err(msg);
        if self.simple {
            Outcome::ok(status)
        } else {
            Outcome::fatal(status)
        }
    }
}

fn lossy(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn parse_int(b: &[u8]) -> Option<i64> {
    let s = std::str::from_utf8(b).ok()?;
    let t = s.trim_start();
    let t = t.strip_prefix('+').unwrap_or(t);
    if t.is_empty() {
        return None;
    }
    t.parse().ok()
}

fn parse_status(b: &[u8]) -> Option<u8> {
    if b.is_empty() || !b.iter().all(u8::is_ascii_digit) {
        return None;
    }
    std::str::from_utf8(b).ok()?.parse::<u64>().ok().map(|n| (n & 0xff) as u8)
}

/// Run builtin `name`. `simple` is set when invoked through `command`.
pub fn run(os: &mut dyn Os, st: &mut ShellState, name: &[u8], args: &[Bytes], simple: bool) -> Outcome {
    let mut c = Ctx { os, st, name, simple };
    match name {
        b":" | b"true" => Outcome::ok(0),
        b"false" => Outcome::ok(1),
        b"break" => loop_ctl(&mut c, args, true),
        b"continue" => loop_ctl(&mut c, args, false),
        b"." => dot(&mut c, args),
        b"eval" => eval(&mut c, args),
        b"exec" => exec(&mut c, args),
        b"exit" => exit(&mut c, args),
        b"export" => export(&mut c, args, false),
        b"readonly" => export(&mut c, args, true),
        b"return" => ret(&mut c, args),
        b"set" => set(&mut c, args),
        b"shift" => shift(&mut c, args),
        b"times" => times(&mut c),
        b"trap" => trap(&mut c, args),
        b"unset" => unset(&mut c, args),
        b"local" => local(&mut c, args),
        b"alias" => alias(&mut c, args),
        b"unalias" => unalias(&mut c, args),
        b"cd" => cd(&mut c, args),
        b"pwd" => pwd(&mut c, args),
        b"command" => command(&mut c, args),
        b"type" => type_(&mut c, args),
        b"hash" => hash(&mut c, args),
        b"getopts" => getopts(&mut c, args),
        b"kill" => kill(&mut c, args),
        b"umask" => umask(&mut c, args),
        b"wait" => wait(&mut c, args),
        b"read" => read(&mut c, args),
        b"echo" => echo(&mut c, args),
        b"printf" => printf(&mut c, args),
        b"test" => test(&mut c, args, false),
        b"[" => test(&mut c, args, true),
        _ => {
            c.err("not a builtin");
            Outcome::ok(127)
        }
    }
}

// ---------------------------------------------------------------------------
// Control builtins

fn loop_ctl(c: &mut Ctx, args: &[Bytes], brk: bool) -> Outcome {
    let n = match args.first() {
        None => 1,
        Some(a) => match parse_int(a) {
            Some(n) if n >= 1 => n as usize,
            _ => return c.special_error(format!("Illegal number: {}", lossy(a)), 2),
        },
    };
    if c.st.loop_depth == 0 {
        return Outcome::ok(0);
    }
    let n = n.min(c.st.loop_depth);
    Outcome::cont(0, if brk { Command::Break(n) } else { Command::Continue(n) })
}

fn dot(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let Some(file) = args.first() else {
        return c.special_error("filename argument required", 2);
    };
    let Some(path) = resolve_readable(c.os, c.st, file) else {
        return c.special_error(format!("{}: not found", lossy(file)), 2);
    };
    match c.os.read_file(&path) {
        Ok(src) => {
            c.st.dot_depth += 1;
            c.st.last_status = 0;
            Outcome::cont(0, Command::EvalLoop(Box::new(eval_frame(src, EvalKind::Dot, false))))
        }
        Err(e) => c.special_error(format!("{}: {}", lossy(file), e.message), 2),
    }
}

fn eval(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let src = args.join(&b' ');
    c.st.last_status = 0;
    let mut frame = eval_frame(src, EvalKind::Eval, false);
    frame.fatal_errors = !c.st.interactive;
    Outcome::cont(0, Command::EvalLoop(Box::new(frame)))
}

fn exec(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let mut args = args;
    if args.first().is_some_and(|a| a == b"--") {
        args = &args[1..];
    }
    let Some(name) = args.first() else {
        return Outcome { status: 0, flow: Flow::KeepRedirs, blocked: None };
    };
    match resolve_path(c.os, c.st, name) {
        Resolved::Found(path) | Resolved::NotExecutable(path) => {
            let env = c.st.export_env(&[]);
            Outcome::cont(
                0,
                Command::Exec { path, name: name.clone(), args: args[1..].to_vec(), env, as_script: true },
            )
        }
        Resolved::NotFound => {
            c.err(format!("{}: not found", lossy(name)));
            if c.st.interactive {
                Outcome::ok(127)
            } else {
                Outcome::cont(127, Command::Exit)
            }
        }
    }
}

fn exit(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let status = match args.first() {
        None => c.st.last_status,
        Some(a) => match parse_status(a) {
            Some(n) => n,
            None => return c.special_error(format!("Illegal number: {}", lossy(a)), 2),
        },
    };
    Outcome::cont(status, Command::Exit)
}

fn ret(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let status = match args.first() {
        None => c.st.last_status,
        Some(a) => match parse_status(a) {
            Some(n) => n,
            None => return c.special_error(format!("Illegal number: {}", lossy(a)), 2),
        },
    };
    if c.st.function_depth == 0 && c.st.dot_depth == 0 {
        // Outside any function or sourced file, `return` ends the shell.
        return Outcome::cont(status, Command::Exit);
    }
    Outcome::cont(status, Command::Return)
}

fn shift(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let n = match args.first() {
        None => 1,
        Some(a) => match parse_int(a) {
            Some(n) if n >= 0 => n as usize,
            _ => return c.special_error(format!("Illegal number: {}", lossy(a)), 2),
        },
    };
    if n > c.st.positional.len() {
        return c.special_error("can't shift that many", 2);
    }
    c.st.positional.drain(..n);
    Outcome::ok(0)
}

fn times(c: &mut Ctx) -> Outcome {
    let t = c.os.times();
    let f = |s: f64| format!("{}m{:.6}s", (s / 60.0) as u64, s % 60.0);
    let line = format!("{} {}\n{} {}\n", f(t.user), f(t.system), f(t.child_user), f(t.child_system));
    c.out(line.as_bytes());
    Outcome::ok(0)
}

// ---------------------------------------------------------------------------
// Variables

fn split_assign(a: &[u8]) -> (&[u8], Option<&[u8]>) {
    match a.iter().position(|b| *b == b'=') {
        Some(i) => (&a[..i], Some(&a[i + 1..])),
        None => (a, None),
    }
}

fn export(c: &mut Ctx, args: &[Bytes], readonly: bool) -> Outcome {
    let mut args = args;
    let mut print = false;
    while let Some(a) = args.first() {
        match a.as_slice() {
            b"-p" => print = true,
            b"--" => {
                args = &args[1..];
                break;
            }
            _ if a.starts_with(b"-") && a.len() > 1 => {
                return c.special_error(format!("Illegal option {}", lossy(a)), 2);
            }
            _ => break,
        }
        args = &args[1..];
    }
    if args.is_empty() || print {
        let verb: &[u8] = if readonly { b"readonly " } else { b"export " };
        let vars = c.st.visible_vars();
        let mut names: Vec<Bytes> = if readonly {
            c.st.readonly.iter().cloned().collect()
        } else {
            c.st.exported.iter().cloned().collect()
        };
        for scope in &c.st.locals {
            for (k, l) in scope {
                if (readonly && l.readonly) || (!readonly && l.exported) {
                    names.push(k.clone());
                }
            }
        }
        names.sort();
        names.dedup();
        let mut out = Vec::new();
        for n in names {
            out.extend_from_slice(verb);
            out.extend_from_slice(&n);
            if let Some(v) = vars.get(&n) {
                out.push(b'=');
                out.extend(single_quote(v));
            }
            out.push(b'\n');
        }
        c.out(&out);
        return Outcome::ok(0);
    }
    for a in args {
        let (name, value) = split_assign(a);
        if !is_name(name) {
            return c.special_error(format!("{}: bad variable name", lossy(name)), 2);
        }
        if let Some(v) = value {
            if let Err(e) = c.st.set_global(name, v.to_vec()) {
                return c.special_error(e.to_string(), 2);
            }
        }
        if readonly {
            c.st.set_readonly(name);
        } else {
            c.st.set_exported(name);
        }
    }
    Outcome::ok(0)
}

fn unset(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let mut funcs = false;
    let mut args = args;
    while let Some(a) = args.first() {
        match a.as_slice() {
            b"-f" => funcs = true,
            b"-v" => funcs = false,
            b"--" => {
                args = &args[1..];
                break;
            }
            _ if a.starts_with(b"-") && a.len() > 1 => {
                return c.special_error(format!("Illegal option {}", lossy(a)), 2);
            }
            _ => break,
        }
        args = &args[1..];
    }
    let mut status = 0;
    for name in args {
        if funcs {
            c.st.functions.remove(name);
        } else if let Err(e) = c.st.unset(name) {
            c.err(e.to_string());
            status = 1;
        }
    }
    if status != 0 && !c.simple {
        return Outcome::fatal(2);
    }
    Outcome::ok(status)
}

fn local(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    if c.st.function_depth == 0 {
        return c.special_error("not in a function", 2);
    }
    for a in args {
        let (name, value) = split_assign(a);
        if !is_name(name) {
            return c.special_error(format!("{}: bad variable name", lossy(name)), 2);
        }
        // Special builtins run after their own scope is popped, so the
        // innermost scope is the function's.
        let target = c.st.locals.len() - 1;
        let was_readonly = c.st.is_readonly(name);
        if was_readonly && value.is_some() {
            return c.special_error(format!("{}: is read only", lossy(name)), 2);
        }
        let scope = &mut c.st.locals[target];
        let entry = scope.entry(name.to_vec()).or_insert(crate::state::LocalVar {
            value: None,
            readonly: false,
            exported: false,
        });
        if let Some(v) = value {
            entry.value = Some(v.to_vec());
        }
    }
    Outcome::ok(0)
}

fn set(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    if args.is_empty() {
        let mut out = Vec::new();
        for (k, v) in c.st.visible_vars() {
            out.extend_from_slice(&k);
            out.push(b'=');
            out.extend(single_quote(&v));
            out.push(b'\n');
        }
        c.out(&out);
        return Outcome::ok(0);
    }
    let mut i = 0;
    let mut set_positional = false;
    while i < args.len() {
        let a = &args[i];
        if a == b"--" {
            set_positional = true;
            i += 1;
            break;
        }
        if a == b"-" {
            c.st.set_option(ShellOption::XTrace, false);
            c.st.set_option(ShellOption::Verbose, false);
            set_positional = true;
            i += 1;
            break;
        }
        let on = match a.first() {
            Some(b'-') => true,
            Some(b'+') => false,
            _ => break,
        };
        if a.len() == 2 && a[1] == b'o' {
            match args.get(i + 1) {
                None => {
                    print_options(c, on);
                    i += 1;
                    continue;
                }
                Some(n) => match ShellOption::from_name(n) {
                    Some(o) => {
                        c.st.set_option(o, on);
                        i += 2;
                        continue;
                    }
                    None => return c.special_error(format!("Illegal option -o {}", lossy(n)), 2),
                },
            }
        }
        for &l in &a[1..] {
            match ShellOption::from_letter(l) {
                Some(o) => c.st.set_option(o, on),
                None => return c.special_error(format!("Illegal option {}{}", on_char(on), l as char), 2),
            }
        }
        i += 1;
    }
    if set_positional || i < args.len() {
        c.st.positional = args[i..].to_vec();
    }
    Outcome::ok(0)
}

fn on_char(on: bool) -> char {
    if on {
        '-'
    } else {
        '+'
    }
}

fn print_options(c: &mut Ctx, human: bool) {
    let mut out = String::new();
    for o in ShellOption::ALL {
        let on = c.st.has(o);
        if human {
            out.push_str(&format!("{:<16}{}\n", o.name(), if on { "on" } else { "off" }));
        } else {
            out.push_str(&format!("set {}o {}\n", on_char(on), o.name()));
        }
    }
    c.out(out.as_bytes());
}

// ---------------------------------------------------------------------------
// Traps

fn trap(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let mut args = args;
    if args.first().is_some_and(|a| a == b"--") {
        args = &args[1..];
    }
    if args.is_empty() || (args.len() == 1 && args[0] == b"-p") {
        let traps = c.st.supershell_traps.clone().unwrap_or_else(|| c.st.traps.clone());
        let mut out = Vec::new();
        for (sig, h) in traps {
            out.extend_from_slice(b"trap -- ");
            out.extend(single_quote(&h));
            out.push(b' ');
            out.extend_from_slice(sig.name().as_bytes());
            out.push(b'\n');
        }
        c.out(&out);
        return Outcome::ok(0);
    }
    let (action, sigs): (Option<&Bytes>, &[Bytes]) = if parse_unsigned(&args[0]) || args.len() == 1 {
        (None, args)
    } else if args[0] == b"-" {
        (None, &args[1..])
    } else {
        (Some(&args[0]), &args[1..])
    };
    c.st.supershell_traps = None;
    let mut status = 0;
    for s in sigs {
        let Some(sig) = Signal::parse(s) else {
            c.err(format!("{}: bad trap", lossy(s)));
            status = 1;
            continue;
        };
        match action {
            None => {
                c.st.traps.remove(&sig);
                c.os.set_signal(sig, SignalAction::Default);
            }
            Some(h) => {
                c.st.traps.insert(sig, h.clone());
                let act = if h.is_empty() { SignalAction::Ignore } else { SignalAction::Catch };
                c.os.set_signal(sig, act);
            }
        }
    }
    Outcome::ok(status)
}

fn parse_unsigned(b: &[u8]) -> bool {
    !b.is_empty() && b.iter().all(u8::is_ascii_digit)
}

// ---------------------------------------------------------------------------
// Aliases, directories, lookup

fn alias(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let print = |c: &mut Ctx, n: &[u8], v: &[u8]| {
        let mut out = n.to_vec();
        out.push(b'=');
        out.extend(single_quote(v));
        out.push(b'\n');
        c.out(&out);
    };
    if args.is_empty() {
        for (n, v) in c.st.aliases.clone() {
            print(c, &n, &v);
        }
        return Outcome::ok(0);
    }
    let mut status = 0;
    for a in args {
        match split_assign(a) {
            (n, Some(v)) => {
                c.st.aliases.insert(n.to_vec(), v.to_vec());
            }
            (n, None) => match c.st.aliases.get(n).cloned() {
                Some(v) => print(c, n, &v),
                None => {
                    c.err(format!("{}: not found", lossy(n)));
                    status = 1;
                }
            },
        }
    }
    Outcome::ok(status)
}

fn unalias(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    if args.first().is_some_and(|a| a == b"-a") {
        c.st.aliases.clear();
        return Outcome::ok(0);
    }
    let mut status = 0;
    for a in args {
        if c.st.aliases.remove(a).is_none() {
            c.err(format!("{}: not found", lossy(a)));
            status = 1;
        }
    }
    Outcome::ok(status)
}

/// Lexically canonicalize an absolute path: drop `.`, fold `..`.
pub fn canonical_path(p: &[u8]) -> Bytes {
    let mut parts: Vec<&[u8]> = Vec::new();
    for comp in p.split(|c| *c == b'/') {
        match comp {
            b"" | b"." => {}
            b".." => {
                parts.pop();
            }
            other => parts.push(other),
        }
    }
    let mut out = Vec::new();
    for part in parts {
        out.push(b'/');
        out.extend_from_slice(part);
    }
    if out.is_empty() {
        out.push(b'/');
    }
    out
}

fn join_path(base: &[u8], rel: &[u8]) -> Bytes {
    let mut out = base.to_vec();
    if !out.ends_with(b"/") {
        out.push(b'/');
    }
    out.extend_from_slice(rel);
    out
}

fn current_dir(c: &Ctx) -> Bytes {
    c.st.lookup(b"PWD").filter(|p| p.starts_with(b"/")).unwrap_or_else(|| c.st.cwd.clone())
}

fn cd(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let mut args = args;
    let mut physical = false;
    while let Some(a) = args.first() {
        match a.as_slice() {
            b"-L" => physical = false,
            b"-P" => physical = true,
            b"--" => {
                args = &args[1..];
                break;
            }
            _ => break,
        }
        args = &args[1..];
    }
    let mut print = false;
    let target = match args.first() {
        None => match c.st.lookup(b"HOME") {
            Some(h) => h,
            None => {
                c.err("HOME not set");
                return Outcome::ok(1);
            }
        },
        Some(a) if a == b"-" => {
            print = true;
            match c.st.lookup(b"OLDPWD") {
                Some(o) => o,
                None => {
                    c.err("OLDPWD not set");
                    return Outcome::ok(1);
                }
            }
        }
        Some(a) => a.clone(),
    };
    let cur = current_dir(c);
    let mut candidates: Vec<(Bytes, bool)> = Vec::new();
    if target.starts_with(b"/") {
        candidates.push((target.clone(), false));
    } else {
        let dotted = target == b"." || target == b".." || target.starts_with(b"./") || target.starts_with(b"../");
        if !dotted {
            if let Some(cdpath) = c.st.lookup(b"CDPATH") {
                for dir in cdpath.split(|c| *c == b':') {
                    if dir.is_empty() {
                        candidates.push((join_path(&cur, &target), false));
                    } else {
                        let base = if dir.starts_with(b"/") { dir.to_vec() } else { join_path(&cur, dir) };
                        candidates.push((join_path(&base, &target), true));
                    }
                }
            }
        }
        candidates.push((join_path(&cur, &target), false));
    }
    for (cand, via_cdpath) in candidates {
        let path = if physical { cand.clone() } else { canonical_path(&cand) };
        if c.os.stat(&path, true).is_some_and(|s| s.kind == crate::os::FileKind::Directory) && c.os.chdir(&path).is_ok() {
            let newpwd = if physical { c.os.getcwd().unwrap_or(path) } else { path };
            let _ = c.st.set_global(b"OLDPWD", cur.clone());
            let _ = c.st.set_global(b"PWD", newpwd.clone());
            c.st.cwd = newpwd.clone();
            if print || via_cdpath {
                let mut line = newpwd;
                line.push(b'\n');
                c.out(&line);
            }
            return Outcome::ok(0);
        }
    }
    c.err(format!("can't cd to {}", lossy(&target)));
    Outcome::ok(2)
}

fn pwd(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let physical = args.iter().any(|a| a == b"-P");
    let mut p = if physical { c.os.getcwd().unwrap_or_else(|_| c.st.cwd.clone()) } else { current_dir(c) };
    p.push(b'\n');
    c.out(&p);
    Outcome::ok(0)
}

/// How a name resolves, for `command -v` and `type`.
enum Kind {
    Alias(Bytes),
    Keyword,
    Function,
    Special,
    Builtin,
    Path(Bytes),
    Missing,
}

fn classify(c: &Ctx, name: &[u8]) -> Kind {
    if let Some(v) = c.st.aliases.get(name) {
        return Kind::Alias(v.clone());
    }
    if is_reserved(name) {
        return Kind::Keyword;
    }
    if is_special(name) {
        return Kind::Special;
    }
    if c.st.functions.contains_key(name) {
        return Kind::Function;
    }
    if is_regular(name) {
        return Kind::Builtin;
    }
    match resolve_path(c.os, c.st, name) {
        Resolved::Found(p) if c.os.file_executable(&p) => Kind::Path(p),
        _ => Kind::Missing,
    }
}

fn describe(name: &[u8], k: &Kind) -> Bytes {
    let n = lossy(name);
    let s = match k {
        Kind::Alias(v) => format!("{n} is an alias for {}", lossy(v)),
        Kind::Keyword => format!("{n} is a shell keyword"),
        Kind::Function => format!("{n} is a shell function"),
        Kind::Special => format!("{n} is a special shell builtin"),
        Kind::Builtin => format!("{n} is a shell builtin"),
        Kind::Path(p) => format!("{n} is {}", lossy(p)),
        Kind::Missing => format!("{n}: not found"),
    };
    let mut b = s.into_bytes();
    b.push(b'\n');
    b
}

fn command(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let mut verbose = None;
    let mut i = 0;
    while i < args.len() {
        match args[i].as_slice() {
            b"-v" => verbose = Some(false),
            b"-V" => verbose = Some(true),
            b"-p" => {}
            b"--" => {
                i += 1;
                break;
            }
            _ => break,
        }
        i += 1;
    }
    let Some(long) = verbose else {
        return Outcome::ok(0);
    };
    let mut status = 0;
    for name in &args[i..] {
        let k = classify(c, name);
        if matches!(k, Kind::Missing) {
            if long {
                let d = describe(name, &k);
                c.out(&d);
            }
            status = 127;
            continue;
        }
        let line = if long {
            describe(name, &k)
        } else {
            let mut l = match &k {
                Kind::Alias(v) => {
                    let mut l = b"alias ".to_vec();
                    l.extend_from_slice(name);
                    l.push(b'=');
                    l.extend(single_quote(v));
                    l
                }
                Kind::Path(p) => p.clone(),
                _ => name.clone(),
            };
            l.push(b'\n');
            l
        };
        c.out(&line);
    }
    if status != 0 && !long {
        status = 1;
    }
    Outcome::ok(status)
}

fn type_(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let mut status = 0;
    for name in args {
        let k = classify(c, name);
        if matches!(k, Kind::Missing) {
            status = 127;
        }
        let d = describe(name, &k);
        c.out(&d);
    }
    Outcome::ok(status)
}

fn hash(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    if args.is_empty() {
        let mut out = Vec::new();
        for p in c.st.hashed.values() {
            out.extend_from_slice(p);
            out.push(b'\n');
        }
        c.out(&out);
        return Outcome::ok(0);
    }
    if args[0] == b"-r" {
        c.st.hashed.clear();
        return Outcome::ok(0);
    }
    let mut status = 0;
    for name in args {
        if is_builtin(name) || c.st.functions.contains_key(name) {
            continue;
        }
        match resolve_path(c.os, c.st, name) {
            Resolved::Found(p) => {
                c.st.hashed.insert(name.clone(), p);
            }
            _ => {
                c.err(format!("{}: not found", lossy(name)));
                status = 1;
            }
        }
    }
    Outcome::ok(status)
}

// ---------------------------------------------------------------------------
// getopts

fn getopts(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    if args.len() < 2 {
        c.err("usage: getopts optstring var [arg...]");
        return Outcome::ok(2);
    }
    let optstring = args[0].clone();
    let var = args[1].clone();
    let params: Vec<Bytes> = if args.len() > 2 { args[2..].to_vec() } else { c.st.positional.clone() };
    let silent = optstring.first() == Some(&b':');
    let optind_raw = c.st.lookup(b"OPTIND").unwrap_or_else(|| b"1".to_vec());
    let mut optind = parse_int(&optind_raw).filter(|n| *n >= 1).unwrap_or(1) as usize;
    let offset = if c.st.getopts_optind.as_deref() == Some(optind_raw.as_slice()) { c.st.getopts_offset } else { None };

    let set = |c: &mut Ctx, opt: &[u8], optarg: Option<Bytes>, optind: usize, offset: Option<usize>| {
        if let Err(e) = c.st.set_global(&var, opt.to_vec()) {
            c.err(e.to_string());
        }
        match optarg {
            Some(a) => {
                let _ = c.st.set_global(b"OPTARG", a);
            }
            None => {
                let _ = c.st.unset(b"OPTARG");
            }
        }
        let v = optind.to_string().into_bytes();
        let _ = c.st.set_global(b"OPTIND", v.clone());
        c.st.getopts_offset = offset;
        c.st.getopts_optind = Some(v);
    };

    let (arg, pos) = match offset {
        Some(k) if optind >= 2 && params.get(optind - 2).is_some_and(|a| k < a.len()) => (params[optind - 2].clone(), k),
        _ => {
            let idx = optind - 1;
            let Some(a) = params.get(idx) else {
                set(c, b"?", None, optind, None);
                return Outcome::ok(1);
            };
            if a == b"--" {
                set(c, b"?", None, idx + 2, None);
                return Outcome::ok(1);
            }
            if !a.starts_with(b"-") || a.len() < 2 {
                set(c, b"?", None, optind, None);
                return Outcome::ok(1);
            }
            optind = idx + 2;
            (a.clone(), 1)
        }
    };
    let ch = arg[pos];
    let next = pos + 1;
    let mut offset = if next < arg.len() { Some(next) } else { None };
    let spec = optstring.iter().position(|o| *o == ch && ch != b':');
    match spec {
        None => {
            if silent {
                set(c, b"?", Some(vec![ch]), optind, offset);
            } else {
                c.err(format!("Illegal option -{}", ch as char));
                set(c, b"?", None, optind, offset);
            }
        }
        Some(i) if optstring.get(i + 1) == Some(&b':') => {
            let optarg = if let Some(k) = offset {
                offset = None;
                Some(arg[k..].to_vec())
            } else if let Some(a) = params.get(optind - 1) {
                optind += 1;
                Some(a.clone())
            } else {
                None
            };
            match optarg {
                Some(a) => set(c, &[ch], Some(a), optind, offset),
                None if silent => set(c, b":", Some(vec![ch]), optind, None),
                None => {
                    c.err(format!("No arg for -{} option", ch as char));
                    set(c, b"?", None, optind, None);
                }
            }
        }
        Some(_) => set(c, &[ch], Some(Vec::new()), optind, offset),
    }
    Outcome::ok(0)
}

// ---------------------------------------------------------------------------
// Processes

fn kill(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let mut sig = Signal::Term;
    let mut args = args;
    match args.first().map(|a| a.as_slice()) {
        Some(b"-l") => {
            let mut out = Vec::new();
            if let Some(n) = args.get(1) {
                let num = parse_int(n).unwrap_or(-1);
                let num = if num > 128 { num - 128 } else { num };
                match Signal::from_number(num as i32) {
                    Some(s) => out.extend_from_slice(s.name().as_bytes()),
                    None => {
                        c.err(format!("invalid signal number or exit status: {}", lossy(n)));
                        return Outcome::ok(1);
                    }
                }
                out.push(b'\n');
            } else {
                for s in Signal::ALL.iter().skip(1) {
                    out.extend_from_slice(s.name().as_bytes());
                    out.push(b'\n');
                }
            }
            c.out(&out);
            return Outcome::ok(0);
        }
        Some(b"-s") | Some(b"-n") => {
            let Some(s) = args.get(1).and_then(|s| Signal::parse(s)) else {
                c.err("invalid signal");
                return Outcome::ok(2);
            };
            sig = s;
            args = &args[2..];
        }
        Some(a) if a.starts_with(b"-") && a.len() > 1 && a != b"--" => {
            let Some(s) = Signal::parse(&a[1..]) else {
                c.err(format!("invalid signal {}", lossy(&a[1..])));
                return Outcome::ok(2);
            };
            sig = s;
            args = &args[1..];
        }
        _ => {}
    }
    if args.first().is_some_and(|a| a == b"--") {
        args = &args[1..];
    }
    if args.is_empty() {
        c.err("usage: kill [-s sigspec | -signum | -sigspec] pid...");
        return Outcome::ok(2);
    }
    let mut status = 0;
    for a in args {
        let pid = if let Some(job) = a.strip_prefix(b"%") {
            parse_int(job).and_then(|n| c.st.jobs.get(&(n as usize))).map(|j| j.leader.0 as i64)
        } else {
            parse_int(a)
        };
        match pid {
            Some(p) => {
                if let Err(e) = c.os.kill(Pid(p as i32), sig) {
                    c.err(format!("{}: {}", lossy(a), e.message));
                    status = 1;
                }
            }
            None => {
                c.err(format!("{}: arguments must be process or job IDs", lossy(a)));
                status = 1;
            }
        }
    }
    Outcome::ok(status)
}

fn umask(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let symbolic = args.first().is_some_and(|a| a == b"-S");
    let rest: Vec<&Bytes> = args.iter().filter(|a| a.as_slice() != b"-S").collect();
    match rest.first() {
        None => {
            let m = c.os.umask(None);
            let line = if symbolic {
                let part = |shift: u32| {
                    let bits = !(m >> shift) & 7;
                    let mut s = String::new();
                    if bits & 4 != 0 {
                        s.push('r');
                    }
                    if bits & 2 != 0 {
                        s.push('w');
                    }
                    if bits & 1 != 0 {
                        s.push('x');
                    }
                    s
                };
                format!("u={},g={},o={}\n", part(6), part(3), part(0))
            } else {
                format!("{m:04o}\n")
            };
            c.out(line.as_bytes());
            Outcome::ok(0)
        }
        Some(a) => match std::str::from_utf8(a).ok().and_then(|s| u32::from_str_radix(s, 8).ok()) {
            Some(m) if m <= 0o777 => {
                c.os.umask(Some(m));
                Outcome::ok(0)
            }
            _ => {
                c.err(format!("Illegal mode: {}", lossy(a)));
                Outcome::ok(1)
            }
        },
    }
}

fn wait(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    if args.is_empty() {
        let pids: Vec<Pid> = c.st.jobs.values().flat_map(|j| j.pids.clone()).collect();
        c.st.last_status = 0;
        return Outcome::cont(0, Command::Wait { pids, checked: false, record: false });
    }
    let mut pids = Vec::new();
    for a in args {
        let pid = if let Some(job) = a.strip_prefix(b"%") {
            parse_int(job).and_then(|n| c.st.jobs.get(&(n as usize))).map(|j| j.leader)
        } else {
            parse_int(a).map(|n| Pid(n as i32))
        };
        match pid {
            Some(p) => pids.push(p),
            None => {
                c.err(format!("{}: bad pid", lossy(a)));
                return Outcome::ok(2);
            }
        }
    }
    Outcome::cont(0, Command::Wait { pids, checked: false, record: true })
}

// ---------------------------------------------------------------------------
// read

fn read(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let mut raw = false;
    let mut i = 0;
    while i < args.len() {
        match args[i].as_slice() {
            b"-r" => raw = true,
            b"--" => {
                i += 1;
                break;
            }
            a if a.starts_with(b"-") && a.len() > 1 => {
                c.err(format!("Illegal option {}", lossy(a)));
                return Outcome::ok(2);
            }
            _ => break,
        }
        i += 1;
    }
    let names = &args[i..];
    if names.is_empty() {
        c.err("arg count");
        return Outcome::ok(2);
    }
    for n in names {
        if !is_name(n) {
            c.err(format!("{}: bad variable name", lossy(n)));
            return Outcome::ok(2);
        }
    }
    let (line, status) = match c.os.read_line(0, !raw) {
        Ok(LineRead::Line { data, terminated }) => (data, if terminated { 0 } else { 1 }),
        Ok(LineRead::Eof) => (Vec::new(), 1),
        Ok(LineRead::Blocked(p)) => return Outcome { status: 0, flow: Flow::Normal, blocked: Some(p) },
        Err(e) => {
            c.err(format!("read error: {}", e.message));
            (Vec::new(), 1)
        }
    };
    // (byte, escaped) pairs; escaped bytes never delimit.
    let mut chars: Vec<(u8, bool)> = Vec::new();
    let mut it = line.iter().copied().peekable();
    while let Some(b) = it.next() {
        if b == b'\\' && !raw {
            match it.next() {
                Some(b'\n') => {}
                Some(n) => chars.push((n, true)),
                None => {}
            }
        } else {
            chars.push((b, false));
        }
    }
    let ifs = c.st.ifs();
    let values = split_read(&chars, &ifs, names.len());
    for (n, v) in names.iter().zip(values) {
        if let Err(e) = c.st.set_global(n, v) {
            c.err(e.to_string());
            return Outcome::ok(2);
        }
    }
    Outcome::ok(status)
}

/// Split a read line into at most `n` fields; the last takes the rest.
pub fn split_read(chars: &[(u8, bool)], ifs: &[u8], n: usize) -> Vec<Bytes> {
    let is_ws = |c: u8| ifs.contains(&c) && b" \t\n".contains(&c);
    let is_delim = |(c, esc): (u8, bool)| !esc && ifs.contains(&c);
    let is_wsd = |(c, esc): (u8, bool)| !esc && is_ws(c);
    let mut out = Vec::new();
    let mut i = 0;
    let len = chars.len();
    while i < len && is_wsd(chars[i]) {
        i += 1;
    }
    while out.len() + 1 < n && i < len {
        let mut field = Vec::new();
        while i < len && !is_delim(chars[i]) {
            field.push(chars[i].0);
            i += 1;
        }
        out.push(field);
        // Consume one delimiter with surrounding IFS whitespace.
        while i < len && is_wsd(chars[i]) {
            i += 1;
        }
        if i < len && is_delim(chars[i]) && !is_wsd(chars[i]) {
            i += 1;
            while i < len && is_wsd(chars[i]) {
                i += 1;
            }
        }
    }
    if out.len() < n {
        let mut end = len;
        while end > i && is_wsd(chars[end - 1]) {
            end -= 1;
        }
        out.push(chars[i.min(end)..end].iter().map(|c| c.0).collect());
    }
    while out.len() < n {
        out.push(Vec::new());
    }
    out
}

// ---------------------------------------------------------------------------
// echo and printf

fn echo(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let (newline, words) = match args.first() {
        Some(a) if a == b"-n" => (false, &args[1..]),
        _ => (true, args),
    };
    let mut out = words.join(&b' ');
    if newline {
        out.push(b'\n');
    }
    if c.out(&out) {
        Outcome::ok(0)
    } else {
        Outcome::ok(1)
    }
}

/// Interpret backslash escapes as printf's format does. Returns the bytes
/// and whether `\c` stopped output.
fn escapes(s: &[u8], in_b: bool) -> (Bytes, bool) {
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        if s[i] != b'\\' || i + 1 >= s.len() {
            out.push(s[i]);
            i += 1;
            continue;
        }
        let e = s[i + 1];
        i += 2;
        match e {
            b'\\' => out.push(b'\\'),
            b'a' => out.push(7),
            b'b' => out.push(8),
            b'f' => out.push(12),
            b'n' => out.push(b'\n'),
            b'r' => out.push(b'\r'),
            b't' => out.push(b'\t'),
            b'v' => out.push(11),
            b'"' if !in_b => out.push(b'"'),
            b'\'' if !in_b => out.push(b'\''),
            b'c' if in_b => return (out, true),
            b'0'..=b'7' => {
                let mut v: u32 = 0;
                let mut j = i - 1;
                let max = if in_b && e == b'0' { 4 } else { 3 };
                let mut n = 0;
                while j < s.len() && n < max && (b'0'..=b'7').contains(&s[j]) {
                    v = v * 8 + (s[j] - b'0') as u32;
                    j += 1;
                    n += 1;
                }
                out.push(v as u8);
                i = j;
            }
            other => {
                out.push(b'\\');
                out.push(other);
            }
        }
    }
    (out, false)
}

fn numeric_arg(c: &mut Ctx, a: &[u8], failed: &mut bool) -> i64 {
    if let Some(rest) = a.strip_prefix(b"'").or_else(|| a.strip_prefix(b"\"")) {
        return rest.first().map_or(0, |b| *b as i64);
    }
    let s = lossy(a);
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let parsed = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()
    } else if body.len() > 1 && body.starts_with('0') {
        i64::from_str_radix(&body[1..], 8).ok()
    } else {
        body.parse::<i64>().ok()
    };
    match parsed {
        Some(v) if !body.is_empty() => {
            if neg {
                -v
            } else {
                v
            }
        }
        _ => {
            c.err(format!("{s}: expected numeric value"));
            *failed = true;
            0
        }
    }
}

struct Spec {
    flags: Vec<u8>,
    width: Option<usize>,
    precision: Option<usize>,
    conv: u8,
}

fn pad(spec: &Spec, body: Bytes, numeric: bool) -> Bytes {
    let width = spec.width.unwrap_or(0);
    if body.len() >= width {
        return body;
    }
    let fill = width - body.len();
    if spec.flags.contains(&b'-') {
        let mut b = body;
        b.extend(std::iter::repeat_n(b' ', fill));
        b
    } else if numeric && spec.flags.contains(&b'0') && spec.precision.is_none() {
        let sign = body.first().is_some_and(|c| *c == b'-' || *c == b'+' || *c == b' ');
        let (head, tail) = body.split_at(if sign { 1 } else { 0 });
        let mut b = head.to_vec();
        b.extend(std::iter::repeat_n(b'0', fill));
        b.extend_from_slice(tail);
        b
    } else {
        let mut b: Bytes = std::iter::repeat_n(b' ', fill).collect();
        b.extend(body);
        b
    }
}

fn format_int(spec: &Spec, v: i64) -> Bytes {
    let mut digits = match spec.conv {
        b'd' | b'i' => v.unsigned_abs().to_string(),
        b'u' => (v as u64).to_string(),
        b'o' => format!("{:o}", v as u64),
        b'x' => format!("{:x}", v as u64),
        b'X' => format!("{:X}", v as u64),
        _ => unreachable!("integer conversion"),
    };
    if let Some(p) = spec.precision {
        if digits.len() < p {
            digits = "0".repeat(p - digits.len()) + &digits;
        }
        if p == 0 && v == 0 {
            digits.clear();
        }
    }
    if spec.flags.contains(&b'#') {
        match spec.conv {
            b'o' if !digits.starts_with('0') => digits.insert(0, '0'),
            b'x' if v != 0 => digits.insert_str(0, "0x"),
            b'X' if v != 0 => digits.insert_str(0, "0X"),
            _ => {}
        }
    }
    let mut s = String::new();
    if matches!(spec.conv, b'd' | b'i') {
        if v < 0 {
            s.push('-');
        } else if spec.flags.contains(&b'+') {
            s.push('+');
        } else if spec.flags.contains(&b' ') {
            s.push(' ');
        }
    }
    s.push_str(&digits);
    pad(spec, s.into_bytes(), true)
}

fn printf(c: &mut Ctx, args: &[Bytes]) -> Outcome {
    let mut args = args;
    if args.first().is_some_and(|a| a == b"--") {
        args = &args[1..];
    }
    let Some(fmt) = args.first().cloned() else {
        c.err("usage: printf format [arg ...]");
        return Outcome::ok(2);
    };
    let mut rest = args[1..].iter();
    let mut out = Vec::new();
    let mut failed = false;
    loop {
        let mut consumed = false;
        let mut i = 0;
        while i < fmt.len() {
            let b = fmt[i];
            if b == b'\\' {
                let end = (i + 2).min(fmt.len());
                let mut j = end;
                if fmt.get(i + 1).is_some_and(|d| (b'0'..=b'7').contains(d)) {
                    while j < fmt.len() && j < i + 4 && (b'0'..=b'7').contains(&fmt[j]) {
                        j += 1;
                    }
                }
                out.extend(escapes(&fmt[i..j], false).0);
                i = j;
                continue;
            }
            if b != b'%' {
                out.push(b);
                i += 1;
                continue;
            }
            i += 1;
            if fmt.get(i) == Some(&b'%') {
                out.push(b'%');
                i += 1;
                continue;
            }
            let mut spec = Spec { flags: Vec::new(), width: None, precision: None, conv: 0 };
            while i < fmt.len() && b"-+ #0".contains(&fmt[i]) {
                spec.flags.push(fmt[i]);
                i += 1;
            }
            let mut num = |i: &mut usize, rest: &mut std::slice::Iter<Bytes>, c: &mut Ctx, consumed: &mut bool| {
                if fmt.get(*i) == Some(&b'*') {
                    *i += 1;
                    *consumed = true;
                    let a = rest.next().cloned().unwrap_or_default();
                    return Some(numeric_arg(c, &a, &mut failed).max(0) as usize);
                }
                let s = *i;
                while *i < fmt.len() && fmt[*i].is_ascii_digit() {
                    *i += 1;
                }
                if *i > s {
                    Some(lossy(&fmt[s..*i]).parse().unwrap_or(0))
                } else {
                    None
                }
            };
            spec.width = num(&mut i, &mut rest, c, &mut consumed);
            if fmt.get(i) == Some(&b'.') {
                i += 1;
                spec.precision = Some(num(&mut i, &mut rest, c, &mut consumed).unwrap_or(0));
            }
            let Some(&conv) = fmt.get(i) else {
                c.err("missing format character");
                return Outcome::ok(1);
            };
            i += 1;
            spec.conv = conv;
            let arg = rest.next();
            if arg.is_some() {
                consumed = true;
            }
            match conv {
                b's' => {
                    let mut s = arg.cloned().unwrap_or_default();
                    if let Some(p) = spec.precision {
                        s.truncate(p);
                    }
                    out.extend(pad(&spec, s, false));
                }
                b'b' => {
                    let (mut s, stop) = escapes(arg.map_or(&[][..], |a| a.as_slice()), true);
                    if let Some(p) = spec.precision {
                        s.truncate(p);
                    }
                    out.extend(pad(&spec, s, false));
                    if stop {
                        c.out(&out);
                        return Outcome::ok(u8::from(failed));
                    }
                }
                b'c' => {
                    let s = arg.and_then(|a| a.first().copied()).map(|b| vec![b]).unwrap_or_default();
                    out.extend(pad(&spec, s, false));
                }
                b'd' | b'i' | b'o' | b'u' | b'x' | b'X' => {
                    let v = match arg {
                        Some(a) => {
                            let mut f = false;
                            let v = numeric_arg(c, a, &mut f);
                            failed |= f;
                            v
                        }
                        None => 0,
                    };
                    out.extend(format_int(&spec, v));
                }
                other => {
                    c.err(format!("%{}: invalid directive", other as char));
                    c.out(&out);
                    return Outcome::ok(1);
                }
            }
        }
        if !consumed || rest.len() == 0 {
            break;
        }
    }
    c.out(&out);
    Outcome::ok(u8::from(failed))
}

// ---------------------------------------------------------------------------
// test

#[derive(Debug)]
struct TestError(String);

fn test(c: &mut Ctx, args: &[Bytes], bracket: bool) -> Outcome {
    let mut args = args.to_vec();
    if bracket {
        if args.last().is_none_or(|a| a != b"]") {
            c.err("missing ]");
            return Outcome::ok(2);
        }
        args.pop();
    }
    let r = match args.len() {
        0 => Ok(false),
        1 => Ok(!args[0].is_empty()),
        2 => test2(c, &args[0], &args[1]),
        3 => test3(c, &args),
        4 if args[0] == b"!" => test3(c, &args[1..]).map(|b| !b),
        4 if args[0] == b"(" && args[3] == b")" => test2(c, &args[1], &args[2]),
        _ => {
            let mut p = TestParser { args: &args, pos: 0 };
            p.or_expr(c).and_then(|v| {
                if p.pos == args.len() {
                    Ok(v)
                } else {
                    Err(TestError(format!("{}: unexpected operator", lossy(&args[p.pos]))))
                }
            })
        }
    };
    match r {
        Ok(true) => Outcome::ok(0),
        Ok(false) => Outcome::ok(1),
        Err(TestError(m)) => {
            c.err(m);
            Outcome::ok(2)
        }
    }
}

fn is_unary(op: &[u8]) -> bool {
    matches!(
        op,
        b"-b" | b"-c" | b"-d" | b"-e" | b"-f" | b"-g" | b"-h" | b"-L" | b"-n" | b"-p" | b"-r" | b"-S" | b"-s" | b"-t"
            | b"-u" | b"-w" | b"-x" | b"-z"
    )
}

fn is_binary(op: &[u8]) -> bool {
    matches!(
        op,
        b"=" | b"!=" | b"-eq" | b"-ne" | b"-gt" | b"-ge" | b"-lt" | b"-le" | b"-nt" | b"-ot" | b"-ef" | b"<" | b">"
    )
}

fn test2(c: &mut Ctx, a: &[u8], b: &[u8]) -> Result<bool, TestError> {
    if a == b"!" {
        return Ok(b.is_empty());
    }
    if is_unary(a) {
        return Ok(unary(c, a, b));
    }
    Err(TestError(format!("{}: unexpected operator", lossy(a))))
}

fn test3(c: &mut Ctx, args: &[Bytes]) -> Result<bool, TestError> {
    if is_binary(&args[1]) {
        return binary(c, &args[0], &args[1], &args[2]);
    }
    if args[0] == b"!" {
        return test2(c, &args[1], &args[2]).map(|v| !v);
    }
    if args[0] == b"(" && args[2] == b")" {
        return Ok(!args[1].is_empty());
    }
    if args[1] == b"-a" {
        return Ok(!args[0].is_empty() && !args[2].is_empty());
    }
    if args[1] == b"-o" {
        return Ok(!args[0].is_empty() || !args[2].is_empty());
    }
    Err(TestError(format!("{}: unexpected operator", lossy(&args[1]))))
}

fn unary(c: &mut Ctx, op: &[u8], x: &[u8]) -> bool {
    use crate::os::{Access, FileKind};
    let st = |follow| c.os.stat(x, follow);
    match op {
        b"-n" => !x.is_empty(),
        b"-z" => x.is_empty(),
        b"-e" => st(true).is_some(),
        b"-f" => st(true).is_some_and(|s| s.kind == FileKind::Regular),
        b"-d" => st(true).is_some_and(|s| s.kind == FileKind::Directory),
        b"-b" => st(true).is_some_and(|s| s.kind == FileKind::BlockDevice),
        b"-c" => st(true).is_some_and(|s| s.kind == FileKind::CharDevice),
        b"-p" => st(true).is_some_and(|s| s.kind == FileKind::Fifo),
        b"-S" => st(true).is_some_and(|s| s.kind == FileKind::Socket),
        b"-h" | b"-L" => st(false).is_some_and(|s| s.kind == FileKind::Symlink),
        b"-s" => st(true).is_some_and(|s| s.size > 0),
        b"-g" => st(true).is_some_and(|s| s.mode & 0o2000 != 0),
        b"-u" => st(true).is_some_and(|s| s.mode & 0o4000 != 0),
        b"-r" => c.os.access(x, Access::Read),
        b"-w" => c.os.access(x, Access::Write),
        b"-x" => c.os.access(x, Access::Execute),
        b"-t" => parse_int(x).is_some_and(|fd| c.os.isatty(fd as Fd)),
        _ => false,
    }
}

fn test_int(x: &[u8]) -> Result<i64, TestError> {
    parse_int(x).ok_or_else(|| TestError(format!("{}: bad number", lossy(x))))
}

fn binary(c: &mut Ctx, a: &[u8], op: &[u8], b: &[u8]) -> Result<bool, TestError> {
    Ok(match op {
        b"=" => a == b,
        b"!=" => a != b,
        b"<" => a < b,
        b">" => a > b,
        b"-eq" => test_int(a)? == test_int(b)?,
        b"-ne" => test_int(a)? != test_int(b)?,
        b"-gt" => test_int(a)? > test_int(b)?,
        b"-ge" => test_int(a)? >= test_int(b)?,
        b"-lt" => test_int(a)? < test_int(b)?,
        b"-le" => test_int(a)? <= test_int(b)?,
        b"-nt" | b"-ot" => {
            let ma = c.os.stat(a, true).map(|s| s.mtime);
            let mb = c.os.stat(b, true).map(|s| s.mtime);
            match (ma, mb, op) {
                (Some(x), Some(y), b"-nt") => x > y,
                (Some(x), Some(y), _) => x < y,
                (Some(_), None, b"-nt") => true,
                (None, Some(_), b"-ot") => true,
                _ => false,
            }
        }
        b"-ef" => {
            let ca = c.os.stat(a, true);
            let cb = c.os.stat(b, true);
            ca.is_some() && cb.is_some() && canonical_path(a) == canonical_path(b)
        }
        _ => return Err(TestError(format!("{}: unknown operator", lossy(op)))),
    })
}

/// General expression grammar for five or more arguments.
struct TestParser<'a> {
    args: &'a [Bytes],
    pos: usize,
}

impl TestParser<'_> {
    fn peek(&self) -> Option<&[u8]> {
        self.args.get(self.pos).map(|a| a.as_slice())
    }

    fn or_expr(&mut self, c: &mut Ctx) -> Result<bool, TestError> {
        let mut v = self.and_expr(c)?;
        while self.peek() == Some(b"-o") {
            self.pos += 1;
            let r = self.and_expr(c)?;
            v = v || r;
        }
        Ok(v)
    }

    fn and_expr(&mut self, c: &mut Ctx) -> Result<bool, TestError> {
        let mut v = self.not_expr(c)?;
        while self.peek() == Some(b"-a") {
            self.pos += 1;
            let r = self.not_expr(c)?;
            v = v && r;
        }
        Ok(v)
    }

    fn not_expr(&mut self, c: &mut Ctx) -> Result<bool, TestError> {
        if self.peek() == Some(b"!") {
            self.pos += 1;
            return self.not_expr(c).map(|v| !v);
        }
        self.primary(c)
    }

    fn primary(&mut self, c: &mut Ctx) -> Result<bool, TestError> {
        let Some(a) = self.peek().map(|a| a.to_vec()) else {
            return Err(TestError("argument expected".into()));
        };
        if a == b"(" {
            self.pos += 1;
            let v = self.or_expr(c)?;
            if self.peek() != Some(b")") {
                return Err(TestError("closing paren expected".into()));
            }
            self.pos += 1;
            return Ok(v);
        }
        if let Some(op) = self.args.get(self.pos + 1) {
            if is_binary(op) && self.pos + 2 < self.args.len() {
                let b = self.args[self.pos + 2].clone();
                let op = op.clone();
                self.pos += 3;
                return binary(c, &a, &op, &b);
            }
        }
        if is_unary(&a) && self.pos + 1 < self.args.len() {
            let x = self.args[self.pos + 1].clone();
            self.pos += 2;
            return Ok(unary(c, &a, &x));
        }
        self.pos += 1;
        Ok(!a.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(s: &str) -> Vec<(u8, bool)> {
        s.bytes().map(|b| (b, false)).collect()
    }

    #[test]
    fn read_splitting() {
        let f = split_read(&plain("  a b  c  "), b" \t\n", 2);
        assert_eq!(f, vec![b"a".to_vec(), b"b  c".to_vec()]);
        let f = split_read(&plain("a:b:c"), b":", 2);
        assert_eq!(f, vec![b"a".to_vec(), b"b:c".to_vec()]);
        let f = split_read(&plain("x"), b" ", 3);
        assert_eq!(f, vec![b"x".to_vec(), vec![], vec![]]);
        let f = split_read(&plain("a::b"), b":", 3);
        assert_eq!(f, vec![b"a".to_vec(), vec![], b"b".to_vec()]);
    }

    #[test]
    fn canonical() {
        assert_eq!(canonical_path(b"/a/./b/../c/"), b"/a/c");
        assert_eq!(canonical_path(b"/.."), b"/");
    }

    #[test]
    fn escape_table() {
        assert_eq!(escapes(b"a\\tb\\101", false).0, b"a\tbA");
        assert_eq!(escapes(b"x\\cy", true), (b"x".to_vec(), true));
    }
}
