//! The word-expansion state machine.
//!
//! A word moves through `Start → Expand → (Split) → Path → Quote → Done`,
//! or to `Error` from `Expand`. Each call to [`step_expansion`] fires one
//! rule and reports its name.

use crate::arith;
use crate::ast::*;
use crate::os::{FdSetup, Os, ReadAll, WaitResult};
use crate::pattern;
use crate::state::{ShellOption, ShellState};

/// Result of one expansion step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpStep {
    pub state: ExpansionState,
    pub rule: &'static str,
    pub did_cmd_subst: bool,
    /// Set when the step could not fire because a process must run first.
    pub blocked: Option<Pid>,
}

/// Outcome of expanding one control code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CtrlResult {
    /// Fully expanded.
    Done(ExpandedWords),
    /// Replace the control code with these parts and keep going.
    More(Word),
    Err(ExpandedWords),
    Blocked(Pid),
}

/// Outcome of consuming one element of a word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WordsResult {
    Progress(ExpandedWords, Word),
    Err(ExpandedWords),
    Blocked(Pid),
}

fn err_words(msg: impl Into<Bytes>) -> ExpandedWords {
    vec![Expanded::QuotedStr(msg.into())]
}

/// Start expanding `w` under `eo`.
pub fn start(eo: ExpansionOptions, w: Word) -> ExpansionState {
    ExpansionState::Start(eo, w)
}

pub fn step_expansion(os: &mut dyn Os, st: &mut ShellState, es: ExpansionState) -> ExpStep {
    let step = |state, rule| ExpStep { state, rule, did_cmd_subst: false, blocked: None };
    match es {
        ExpansionState::Start(eo, w) => step(ExpansionState::Expand(eo, Vec::new(), w), "ExpStart"),
        ExpansionState::Expand(eo, acc, w) => {
            if w.is_empty() {
                return if eo.split {
                    step(ExpansionState::Split(eo, acc), "ExpExpandSplit")
                } else {
                    step(ExpansionState::Path(eo, skip_splitting(&acc)), "ExpExpandNoSplit")
                };
            }
            let wo = WordOptions { split: eo.split, in_dquotes: false, generated: false };
            let (res, rule, did) = step_words(os, st, wo, acc.clone(), w.clone());
            match res {
                WordsResult::Progress(acc, w) => {
                    ExpStep { state: ExpansionState::Expand(eo, acc, w), rule, did_cmd_subst: did, blocked: None }
                }
                WordsResult::Err(e) => ExpStep {
                    state: ExpansionState::Error(to_fields(&e)),
                    rule: "ExpExpandErr",
                    did_cmd_subst: did,
                    blocked: None,
                },
                WordsResult::Blocked(pid) => ExpStep {
                    state: ExpansionState::Expand(eo, acc, w),
                    rule,
                    did_cmd_subst: false,
                    blocked: Some(pid),
                },
            }
        }
        ExpansionState::Split(eo, acc) => {
            let ifs = st.lookup(b"IFS");
            step(ExpansionState::Path(eo, field_split(ifs.as_deref(), &acc)), "ExpSplit")
        }
        ExpansionState::Path(eo, i) => {
            if eo.glob && !st.has(ShellOption::NoGlob) {
                step(ExpansionState::Quote(eo, pathname_expand(os, &i)), "ExpPath")
            } else {
                step(ExpansionState::Quote(eo, i), "ExpPathNoGlob")
            }
        }
        ExpansionState::Quote(eo, i) => step(ExpansionState::Done(combine_fields(&i, eo.pattern)), "ExpQuote"),
        done @ (ExpansionState::Done(_) | ExpansionState::Error(_)) => step(done, "ExpDone"),
    }
}

/// Expand a word to completion. Returns `Err(message)` on an expansion
/// error, or `Ok(Err(pid))` if it blocked (symbolic mode only).
pub fn expand_fully(
    os: &mut dyn Os,
    st: &mut ShellState,
    eo: ExpansionOptions,
    w: Word,
) -> Result<Result<Fields, Pid>, Bytes> {
    let mut es = start(eo, w);
    loop {
        match es {
            ExpansionState::Done(f) => return Ok(Ok(f)),
            ExpansionState::Error(f) => return Err(f.concat()),
            _ => {}
        }
        let s = step_expansion(os, st, es);
        if let Some(pid) = s.blocked {
            return Ok(Err(pid));
        }
        es = s.state;
    }
}

/// Consume one element of `w`.
pub fn step_words(
    os: &mut dyn Os,
    st: &mut ShellState,
    wo: WordOptions,
    mut acc: ExpandedWords,
    mut w: Word,
) -> (WordsResult, &'static str, bool) {
    if w.is_empty() {
        return (WordsResult::Progress(acc, w), "EWDone", false);
    }
    let first = w.remove(0);
    match first {
        WordPart::Sep => {
            acc.push(Expanded::Sep);
            (WordsResult::Progress(acc, w), "EWSep", false)
        }
        WordPart::Lit(b) => {
            acc.push(if wo.in_dquotes {
                Expanded::QuotedStr(b)
            } else if wo.generated {
                Expanded::Exp(b)
            } else {
                Expanded::Src(b)
            });
            (WordsResult::Progress(acc, w), "EWLit", false)
        }
        WordPart::Ctrl(c) => {
            let orig = c.clone();
            let (res, rule, did) = expand_control(os, st, wo, c);
            match res {
                CtrlResult::Done(e) => {
                    acc.extend(e);
                    (WordsResult::Progress(acc, w), rule, did)
                }
                CtrlResult::More(parts) => {
                    let mut nw = parts;
                    nw.extend(w);
                    (WordsResult::Progress(acc, nw), rule, did)
                }
                CtrlResult::Err(e) => (WordsResult::Err(e), "EWCtrlErr", did),
                CtrlResult::Blocked(pid) => {
                    w.insert(0, WordPart::Ctrl(orig));
                    let _ = &mut w;
                    (WordsResult::Blocked(pid), rule, false)
                }
            }
        }
    }
}

fn ctrl(c: Control) -> WordPart {
    WordPart::Ctrl(c)
}

fn emit(wo: WordOptions, v: Bytes) -> Expanded {
    if wo.in_dquotes {
        Expanded::QuotedStr(v)
    } else {
        Expanded::Exp(v)
    }
}

/// Concatenate expanded words into one string.
pub fn flatten(e: &ExpandedWords) -> Bytes {
    let mut out = Vec::new();
    for x in e {
        match x {
            Expanded::Sep => out.push(b' '),
            Expanded::Src(b) | Expanded::Exp(b) | Expanded::QuotedStr(b) => out.extend_from_slice(b),
            Expanded::At { fields, .. } => out.extend_from_slice(&fields.join(&b' ')),
        }
    }
    out
}

/// Concatenate into a pattern: quoted text is escaped, the rest stays active.
fn flatten_pattern(e: &ExpandedWords) -> Bytes {
    let mut out = Vec::new();
    for x in e {
        match x {
            Expanded::Sep => out.push(b' '),
            Expanded::Src(b) | Expanded::Exp(b) => out.extend_from_slice(b),
            Expanded::QuotedStr(b) => out.extend(pattern::escape(b)),
            Expanded::At { fields, quoted } => {
                let j = fields.join(&b' ');
                if *quoted {
                    out.extend(pattern::escape(&j));
                } else {
                    out.extend_from_slice(&j);
                }
            }
        }
    }
    out
}

/// Step an accumulating runtime code's inner word; `finish` runs once it is empty.
fn step_accumulating(
    os: &mut dyn Os,
    st: &mut ShellState,
    inner_wo: WordOptions,
    acc: ExpandedWords,
    w: Word,
    rebuild: impl FnOnce(ExpandedWords, Word) -> Control,
    rule: &'static str,
) -> (CtrlResult, &'static str, bool) {
    let (res, inner_rule, did) = step_words(os, st, inner_wo, acc, w);
    match res {
        WordsResult::Progress(acc, w) => (CtrlResult::More(vec![ctrl(rebuild(acc, w))]), inner_rule, did),
        WordsResult::Err(e) => (CtrlResult::Err(e), rule, did),
        WordsResult::Blocked(pid) => (CtrlResult::Blocked(pid), inner_rule, false),
    }
}

pub fn expand_control(os: &mut dyn Os, st: &mut ShellState, wo: WordOptions, c: Control) -> (CtrlResult, &'static str, bool) {
    match c {
        Control::Quoted(mut inner) => {
            if inner.is_empty() {
                return (CtrlResult::Done(vec![Expanded::QuotedStr(Vec::new())]), "Quoted", false);
            }
            if inner.len() > 1 {
                let rest = inner.split_off(1);
                return (CtrlResult::More(vec![ctrl(Control::Quoted(inner)), ctrl(Control::Quoted(rest))]), "QuotedSplit", false);
            }
            let dq = WordOptions { in_dquotes: true, ..wo };
            match inner.pop().expect("one part") {
                WordPart::Lit(b) => (CtrlResult::Done(vec![Expanded::QuotedStr(b)]), "QuotedLit", false),
                WordPart::Sep => (CtrlResult::Done(vec![]), "QuotedSep", false),
                WordPart::Ctrl(k) => {
                    let (r, rule, did) = expand_control(os, st, dq, k);
                    let r = match r {
                        CtrlResult::Done(e) if e.is_empty() => CtrlResult::Done(vec![Expanded::QuotedStr(Vec::new())]),
                        CtrlResult::More(parts) => CtrlResult::More(vec![ctrl(Control::Quoted(parts))]),
                        other => other,
                    };
                    (r, rule, did)
                }
            }
        }
        Control::Generated(mut inner) => {
            if inner.is_empty() {
                return (CtrlResult::Done(vec![]), "Generated", false);
            }
            if inner.len() > 1 {
                let rest = inner.split_off(1);
                return (
                    CtrlResult::More(vec![ctrl(Control::Generated(inner)), ctrl(Control::Generated(rest))]),
                    "GeneratedSplit",
                    false,
                );
            }
            let gw = WordOptions { generated: true, ..wo };
            match inner.pop().expect("one part") {
                WordPart::Lit(b) => (CtrlResult::Done(vec![emit(wo, b)]), "GeneratedLit", false),
                WordPart::Sep => (CtrlResult::Done(vec![Expanded::Sep]), "GeneratedSep", false),
                WordPart::Ctrl(k) => {
                    let (r, rule, did) = expand_control(os, st, gw, k);
                    let r = match r {
                        CtrlResult::More(parts) => CtrlResult::More(vec![ctrl(Control::Generated(parts))]),
                        other => other,
                    };
                    (r, rule, did)
                }
            }
        }
        Control::Tilde(user) => {
            let home = match &user {
                None => st.lookup(b"HOME").or_else(|| os.home_dir(b"")),
                Some(u) => os.home_dir(u),
            };
            let v = match home {
                Some(h) => h,
                None => {
                    let mut t = b"~".to_vec();
                    if let Some(u) = user {
                        t.extend(u);
                    }
                    t
                }
            };
            (CtrlResult::Done(vec![Expanded::QuotedStr(v)]), "Tilde", false)
        }
        Control::Param(name, fmt) => (expand_param(st, wo, name, fmt), "Param", false),
        Control::Arith(w) => (CtrlResult::More(vec![ctrl(Control::ArithFmt(Vec::new(), w))]), "Arith", false),
        Control::ArithFmt(acc, w) => {
            if w.is_empty() {
                let src = flatten(&acc);
                return match arith::eval_str(st, &src) {
                    Ok(n) => (CtrlResult::Done(vec![emit(wo, n.to_string().into_bytes())]), "ArithEval", false),
                    Err(e) => {
                        let msg = format!("arithmetic expression: {e}: \"{}\"", String::from_utf8_lossy(&src));
                        (CtrlResult::Err(err_words(msg)), "ArithErr", false)
                    }
                };
            }
            let inner = WordOptions { split: false, in_dquotes: true, generated: false };
            step_accumulating(os, st, inner, acc, w, Control::ArithFmt, "ArithErr")
        }
        Control::Assign(name, acc, w) => {
            if w.is_empty() {
                let v = flatten(&acc);
                if !is_name(&name) {
                    let msg = format!("{}: bad variable name", String::from_utf8_lossy(&name));
                    return (CtrlResult::Err(err_words(msg)), "AssignErr", false);
                }
                return match st.set_global(&name, v.clone()) {
                    Ok(()) => (CtrlResult::Done(vec![emit(wo, v)]), "AssignDone", false),
                    Err(e) => (CtrlResult::Err(err_words(e.to_string())), "AssignErr", false),
                };
            }
            let inner = WordOptions { split: false, ..wo };
            step_accumulating(os, st, inner, acc, w, |a, w| Control::Assign(name, a, w), "AssignErr")
        }
        Control::ErrorFmt(name, acc, w) => {
            if w.is_empty() {
                let mut msg = name.clone();
                msg.extend_from_slice(b": ");
                if acc.is_empty() {
                    msg.extend_from_slice(b"parameter not set");
                } else {
                    msg.extend(flatten(&acc));
                }
                return (CtrlResult::Err(err_words(msg)), "ErrorFmt", false);
            }
            let inner = WordOptions { split: false, ..wo };
            step_accumulating(os, st, inner, acc, w, |a, w| Control::ErrorFmt(name, a, w), "ErrorFmt")
        }
        Control::MatchFmt(value, side, mode, acc, w) => {
            if w.is_empty() {
                let p = pattern::compile(&flatten_pattern(&acc));
                let r = pattern::remove_affix(side, mode, &p, &value);
                return (CtrlResult::Done(vec![emit(wo, r)]), "MatchDone", false);
            }
            let inner = WordOptions { split: false, in_dquotes: false, generated: false };
            step_accumulating(os, st, inner, acc, w, |a, w| Control::MatchFmt(value, side, mode, a, w), "MatchErr")
        }
        Control::CmdSubst(c) => match os.pipe() {
            Ok((r, w)) => {
                let mut setup = vec![FdSetup::Close(r), FdSetup::Dup2(w, 1)];
                if w != 1 {
                    setup.push(FdSetup::Close(w));
                }
                match os.fork_shell(st, (*c).clone(), &setup) {
                    Ok(pid) => {
                        os.close(w);
                        (CtrlResult::More(vec![ctrl(Control::CmdSubstRunning(c, pid, r))]), "CmdSubst", true)
                    }
                    Err(e) => {
                        os.close(r);
                        os.close(w);
                        (CtrlResult::Err(err_words(format!("cannot fork: {}", e.message))), "CmdSubst", true)
                    }
                }
            }
            Err(e) => (CtrlResult::Err(err_words(format!("cannot create pipe: {}", e.message))), "CmdSubst", true),
        },
        Control::CmdSubstRunning(c, pid, fd) => match os.read_all(fd) {
            Ok(ReadAll::Data(d)) => {
                os.close(fd);
                (CtrlResult::More(vec![ctrl(Control::CmdWait(c, pid, trim_rnl(&d)))]), "CmdSubstRead", true)
            }
            Ok(ReadAll::Blocked(p)) => (CtrlResult::Blocked(p), "CmdSubstRead", false),
            Err(e) => (CtrlResult::Err(err_words(format!("read error: {}", e.message))), "CmdSubstReadErr", true),
        },
        Control::CmdWait(c, pid, d) => match os.wait(pid) {
            WaitResult::Exited(s) => {
                st.last_status = s;
                (CtrlResult::Done(vec![emit(wo, d)]), "CmdSubstWait", true)
            }
            WaitResult::Blocked(p) => {
                let _ = c;
                (CtrlResult::Blocked(p), "CmdSubstWait", false)
            }
            WaitResult::NoSuchChild => {
                st.last_status = 127;
                (CtrlResult::Done(vec![emit(wo, d)]), "CmdSubstWait", true)
            }
        },
    }
}

fn considered_unset(value: &Option<Bytes>, mode: NullMode) -> bool {
    match value {
        None => true,
        Some(v) => mode == NullMode::UnsetOrNull && v.is_empty(),
    }
}

fn param_value(st: &ShellState, name: &[u8]) -> Option<Bytes> {
    match name {
        b"@" | b"*" => {
            if st.positional.is_empty() {
                None
            } else {
                Some(st.join_positional(b" "))
            }
        }
        _ => st.lookup(name),
    }
}

fn unset_error(st: &ShellState, name: &[u8]) -> Option<CtrlResult> {
    if st.has(ShellOption::NoUnset) && name != b"@" && name != b"*" {
        let mut m = name.to_vec();
        m.extend_from_slice(b": parameter not set");
        Some(CtrlResult::Err(err_words(m)))
    } else {
        None
    }
}

fn normal_value(st: &ShellState, wo: WordOptions, name: &[u8]) -> CtrlResult {
    match name {
        b"@" => CtrlResult::Done(vec![Expanded::At { fields: st.positional.clone(), quoted: wo.in_dquotes }]),
        b"*" => {
            if wo.in_dquotes {
                let sep = match st.lookup(b"IFS") {
                    None => b" ".to_vec(),
                    Some(ifs) => ifs.first().map(|c| vec![*c]).unwrap_or_default(),
                };
                CtrlResult::Done(vec![Expanded::QuotedStr(st.join_positional(&sep))])
            } else {
                CtrlResult::Done(vec![Expanded::At { fields: st.positional.clone(), quoted: false }])
            }
        }
        _ => match st.lookup(name) {
            Some(v) => CtrlResult::Done(vec![emit(wo, v)]),
            None => unset_error(st, name).unwrap_or(CtrlResult::Done(vec![])),
        },
    }
}

fn expand_param(st: &mut ShellState, wo: WordOptions, name: Bytes, fmt: ParamFormat) -> CtrlResult {
    let value = param_value(st, &name);
    match fmt {
        ParamFormat::Normal => normal_value(st, wo, &name),
        ParamFormat::Length => {
            let n = match name.as_slice() {
                b"@" | b"*" => st.positional.len(),
                _ => match &value {
                    Some(v) => v.len(),
                    None => {
                        if let Some(e) = unset_error(st, &name) {
                            return e;
                        }
                        0
                    }
                },
            };
            CtrlResult::Done(vec![emit(wo, n.to_string().into_bytes())])
        }
        ParamFormat::Default(m, w) => {
            if considered_unset(&value, m) {
                CtrlResult::More(vec![ctrl(Control::Generated(w))])
            } else {
                normal_value(st, wo, &name)
            }
        }
        ParamFormat::Alt(m, w) => {
            if considered_unset(&value, m) {
                CtrlResult::Done(vec![])
            } else {
                CtrlResult::More(vec![ctrl(Control::Generated(w))])
            }
        }
        ParamFormat::Assign(m, w) => {
            if considered_unset(&value, m) {
                CtrlResult::More(vec![ctrl(Control::Assign(name, Vec::new(), w))])
            } else {
                normal_value(st, wo, &name)
            }
        }
        ParamFormat::Error(m, w) => {
            if considered_unset(&value, m) {
                if w.is_empty() {
                    let mut msg = name.clone();
                    msg.extend_from_slice(match m {
                        NullMode::Unset => b": parameter not set".as_slice(),
                        NullMode::UnsetOrNull => b": parameter null or not set".as_slice(),
                    });
                    return CtrlResult::Err(err_words(msg));
                }
                CtrlResult::More(vec![ctrl(Control::ErrorFmt(name, Vec::new(), w))])
            } else {
                normal_value(st, wo, &name)
            }
        }
        ParamFormat::Sub(side, mode, w) => {
            let v = match value {
                Some(v) => v,
                None => {
                    if let Some(e) = unset_error(st, &name) {
                        return e;
                    }
                    Vec::new()
                }
            };
            CtrlResult::More(vec![ctrl(Control::MatchFmt(v, side, mode, Vec::new(), w))])
        }
    }
}

/// Remove the maximal trailing run of newlines.
pub fn trim_rnl(s: &[u8]) -> Bytes {
    let mut end = s.len();
    while end > 0 && s[end - 1] == b'\n' {
        end -= 1;
    }
    s[..end].to_vec()
}

fn is_ifs_ws(c: u8) -> bool {
    matches!(c, b' ' | b'\t' | b'\n')
}

/// Split one expansion result on IFS.
fn split_exp(b: &[u8], ifs: &[u8], out: &mut IntermediateFields) {
    if ifs.is_empty() {
        if !b.is_empty() {
            out.push(Inter::Str(b.to_vec()));
        }
        return;
    }
    let in_ifs = |c: u8| ifs.contains(&c);
    let ws = |c: u8| in_ifs(c) && is_ifs_ws(c);
    let mut i = 0;
    while i < b.len() {
        if in_ifs(b[i]) {
            while i < b.len() && ws(b[i]) {
                i += 1;
            }
            if i < b.len() && in_ifs(b[i]) && !ws(b[i]) {
                i += 1;
                while i < b.len() && ws(b[i]) {
                    i += 1;
                }
                out.push(Inter::Str(Vec::new()));
            }
            out.push(Inter::FieldSep);
        } else {
            let start = i;
            while i < b.len() && !in_ifs(b[i]) {
                i += 1;
            }
            out.push(Inter::Str(b[start..i].to_vec()));
        }
    }
}

/// Split expansion results into intermediate fields. `ifs` of `None` means unset.
pub fn field_split(ifs: Option<&[u8]>, e: &ExpandedWords) -> IntermediateFields {
    let ifs: &[u8] = ifs.unwrap_or(b" \t\n");
    let mut out = Vec::new();
    for x in e {
        match x {
            Expanded::Sep => out.push(Inter::Sep),
            Expanded::Src(b) => out.push(Inter::Str(b.clone())),
            Expanded::QuotedStr(b) => out.push(Inter::QuotedStr(b.clone())),
            Expanded::Exp(b) => split_exp(b, ifs, &mut out),
            Expanded::At { fields, quoted } => {
                for (k, f) in fields.iter().enumerate() {
                    if k > 0 {
                        out.push(Inter::FieldSep);
                    }
                    if *quoted {
                        out.push(Inter::QuotedStr(f.clone()));
                    } else {
                        split_exp(f, ifs, &mut out);
                    }
                }
            }
        }
    }
    out
}

/// Structure-preserving conversion without IFS splitting.
pub fn skip_splitting(e: &ExpandedWords) -> IntermediateFields {
    e.iter()
        .map(|x| match x {
            Expanded::Sep => Inter::Sep,
            Expanded::Src(b) | Expanded::Exp(b) => Inter::Str(b.clone()),
            Expanded::QuotedStr(b) => Inter::QuotedStr(b.clone()),
            Expanded::At { fields, quoted } => {
                let j = fields.join(&b' ');
                if *quoted {
                    Inter::QuotedStr(j)
                } else {
                    Inter::Str(j)
                }
            }
        })
        .collect()
}

/// Quote removal plus concatenation of runs between separators.
pub fn combine_fields(i: &IntermediateFields, pattern_mode: bool) -> Fields {
    let mut out = Vec::new();
    let mut cur: Option<Bytes> = None;
    for x in i {
        match x {
            Inter::FieldSep | Inter::Sep => {
                if let Some(c) = cur.take() {
                    out.push(c);
                }
            }
            Inter::Str(b) => cur.get_or_insert_with(Vec::new).extend_from_slice(b),
            Inter::QuotedStr(b) => {
                let c = cur.get_or_insert_with(Vec::new);
                if pattern_mode {
                    c.extend(pattern::escape(b));
                } else {
                    c.extend_from_slice(b);
                }
            }
        }
    }
    if let Some(c) = cur {
        out.push(c);
    }
    out
}

/// Fields of an expanded-word sequence without splitting.
pub fn to_fields(e: &ExpandedWords) -> Fields {
    combine_fields(&skip_splitting(e), false)
}

fn join_path(base: &[u8], name: &[u8]) -> Bytes {
    let mut p = base.to_vec();
    if !p.is_empty() && !p.ends_with(b"/") {
        p.push(b'/');
    }
    p.extend_from_slice(name);
    p
}

fn is_dir(os: &dyn Os, path: &[u8]) -> bool {
    let p: &[u8] = if path.is_empty() { b"." } else { path };
    os.stat(p, true).is_some_and(|s| s.kind == crate::os::FileKind::Directory)
}

/// Match a pattern against the filesystem, one component at a time.
pub fn glob(os: &dyn Os, pat: &[u8]) -> Vec<Bytes> {
    let absolute = pat.first() == Some(&b'/');
    let comps: Vec<&[u8]> = pat.split(|c| *c == b'/').collect();
    let mut bases: Vec<Bytes> = vec![if absolute { b"/".to_vec() } else { Vec::new() }];
    let start = usize::from(absolute);
    let n = comps.len();
    for (idx, comp) in comps.iter().enumerate().skip(start) {
        let last = idx + 1 == n;
        if comp.is_empty() {
            if last {
                bases = bases.into_iter().filter(|b| is_dir(os, b)).map(|mut b| {
                    b.push(b'/');
                    b
                }).collect();
            }
            continue;
        }
        let cp = pattern::compile(comp);
        if cp.is_dynamic() {
            let mut next = Vec::new();
            for base in &bases {
                let dir: &[u8] = if base.is_empty() { b"." } else { base };
                if let Some(mut entries) = os.read_dir(dir) {
                    entries.sort();
                    for e in entries {
                        if pattern::match_filename(&cp, &e, true) {
                            next.push(join_path(base, &e));
                        }
                    }
                }
            }
            bases = next;
        } else {
            let lit = pattern::unescape(comp);
            bases = bases.iter().map(|b| join_path(b, &lit)).collect();
            if last {
                bases.retain(|b| os.stat(b, false).is_some());
            }
        }
        if bases.is_empty() {
            break;
        }
    }
    bases.sort();
    bases
}

/// Pathname expansion over intermediate fields.
pub fn pathname_expand(os: &dyn Os, i: &IntermediateFields) -> IntermediateFields {
    let mut out = Vec::new();
    let mut group: Vec<Inter> = Vec::new();
    let flush = |group: &mut Vec<Inter>, out: &mut IntermediateFields| {
        if group.is_empty() {
            return;
        }
        let mut pat = Vec::new();
        let mut active = false;
        for x in group.iter() {
            match x {
                Inter::Str(b) => {
                    pat.extend_from_slice(b);
                    active = true;
                }
                Inter::QuotedStr(b) => pat.extend(pattern::escape(b)),
                _ => {}
            }
        }
        if active && pattern::compile(&pat).is_dynamic() {
            let matches = glob(os, &pat);
            if !matches.is_empty() {
                for (k, m) in matches.into_iter().enumerate() {
                    if k > 0 {
                        out.push(Inter::FieldSep);
                    }
                    out.push(Inter::QuotedStr(m));
                }
                group.clear();
                return;
            }
        }
        out.append(group);
    };
    for x in i {
        match x {
            Inter::FieldSep | Inter::Sep => {
                flush(&mut group, &mut out);
                out.push(x.clone());
            }
            _ => group.push(x.clone()),
        }
    }
    flush(&mut group, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(s: &str) -> Expanded {
        Expanded::Exp(s.as_bytes().to_vec())
    }

    fn split(ifs: &str, e: Vec<Expanded>) -> Vec<String> {
        combine_fields(&field_split(Some(ifs.as_bytes()), &e), false)
            .into_iter()
            .map(|f| String::from_utf8(f).unwrap())
            .collect()
    }

    #[test]
    fn splits_unquoted_only() {
        assert_eq!(split(" \t\n", vec![exp("a b")]), ["a", "b"]);
        assert_eq!(split(" \t\n", vec![Expanded::QuotedStr(b"a b".to_vec())]), ["a b"]);
    }

    #[test]
    fn non_whitespace_delimiters_keep_empties() {
        assert_eq!(split(",", vec![exp("a,,b")]), ["a", "", "b"]);
        assert_eq!(split(",", vec![exp("a,")]), ["a"]);
        assert_eq!(split(" ,", vec![exp(" a , b ")]), ["a", "b"]);
    }

    #[test]
    fn whitespace_only_gives_no_fields() {
        assert!(split(" \t\n", vec![exp("   ")]).is_empty());
        assert_eq!(split(" ", vec![Expanded::QuotedStr(vec![])]), [""]);
    }

    #[test]
    fn quoted_at_gives_one_field_each() {
        let at = Expanded::At { fields: vec![b"a b".to_vec(), b"".to_vec()], quoted: true };
        assert_eq!(split(" ", vec![at]), ["a b", ""]);
        let none = Expanded::At { fields: vec![], quoted: true };
        assert!(split(" ", vec![none]).is_empty());
    }

    #[test]
    fn trims_trailing_newlines() {
        assert_eq!(trim_rnl(b"abc\n\n"), b"abc");
        assert_eq!(trim_rnl(b"\n"), b"");
        assert_eq!(trim_rnl(b"a\nb"), b"a\nb");
    }

    #[test]
    fn to_fields_concatenates() {
        assert_eq!(to_fields(&vec![Expanded::Src(b"x".to_vec()), Expanded::QuotedStr(b"y".to_vec())]), vec![b"xy".to_vec()]);
        assert!(to_fields(&vec![]).is_empty());
    }

    #[test]
    fn pattern_mode_escapes_quoted() {
        let i = vec![Inter::Str(b"a*".to_vec()), Inter::QuotedStr(b"*".to_vec())];
        assert_eq!(combine_fields(&i, true), vec![b"a*\\*".to_vec()]);
    }
}
