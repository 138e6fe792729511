//! The shell state: variables, scopes, options, traps and status registers.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::arith::ArithEnv;
use crate::ast::{Bytes, Command, Pid};
use crate::os::Signal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShellOption {
    AllExport,
    ErrExit,
    NoGlob,
    HashAll,
    Monitor,
    NoExec,
    NoUnset,
    Verbose,
    XTrace,
    NoClobber,
    IgnoreEof,
    NoLog,
    Vi,
    /// Extension: break/continue pass through function calls.
    NonLexicalCtrl,
}

impl ShellOption {
    pub const ALL: [ShellOption; 14] = [
        ShellOption::AllExport,
        ShellOption::ErrExit,
        ShellOption::NoGlob,
        ShellOption::HashAll,
        ShellOption::Monitor,
        ShellOption::NoExec,
        ShellOption::NoUnset,
        ShellOption::Verbose,
        ShellOption::XTrace,
        ShellOption::NoClobber,
        ShellOption::IgnoreEof,
        ShellOption::NoLog,
        ShellOption::Vi,
        ShellOption::NonLexicalCtrl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShellOption::AllExport => "allexport",
            ShellOption::ErrExit => "errexit",
            ShellOption::NoGlob => "noglob",
            ShellOption::HashAll => "hashall",
            ShellOption::Monitor => "monitor",
            ShellOption::NoExec => "noexec",
            ShellOption::NoUnset => "nounset",
            ShellOption::Verbose => "verbose",
            ShellOption::XTrace => "xtrace",
            ShellOption::NoClobber => "noclobber",
            ShellOption::IgnoreEof => "ignoreeof",
            ShellOption::NoLog => "nolog",
            ShellOption::Vi => "vi",
            ShellOption::NonLexicalCtrl => "nonlexicalctrl",
        }
    }

    pub fn letter(self) -> Option<u8> {
        Some(match self {
            ShellOption::AllExport => b'a',
            ShellOption::ErrExit => b'e',
            ShellOption::NoGlob => b'f',
            ShellOption::HashAll => b'h',
            ShellOption::Monitor => b'm',
            ShellOption::NoExec => b'n',
            ShellOption::NoUnset => b'u',
            ShellOption::Verbose => b'v',
            ShellOption::XTrace => b'x',
            ShellOption::NoClobber => b'C',
            _ => return None,
        })
    }

    pub fn from_name(name: &[u8]) -> Option<ShellOption> {
        ShellOption::ALL.into_iter().find(|o| o.name().as_bytes() == name)
    }

    pub fn from_letter(c: u8) -> Option<ShellOption> {
        ShellOption::ALL.into_iter().find(|o| o.letter() == Some(c))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JobStatus {
    Running,
    Done(u8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobInfo {
    pub id: usize,
    pub pids: Vec<Pid>,
    pub leader: Pid,
    pub command: Bytes,
    pub status: JobStatus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalVar {
    pub value: Option<Bytes>,
    pub readonly: bool,
    pub exported: bool,
}

pub type Scope = BTreeMap<Bytes, LocalVar>;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}: is read only", String::from_utf8_lossy(.0))]
pub struct ReadonlyError(pub Bytes);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShellState {
    pub root_pid: Pid,
    pub outermost: bool,
    pub interactive: bool,
    pub options: BTreeSet<ShellOption>,
    pub jobs: BTreeMap<usize, JobInfo>,
    pub traps: BTreeMap<Signal, Bytes>,
    pub supershell_traps: Option<BTreeMap<Signal, Bytes>>,
    pub env: BTreeMap<Bytes, Bytes>,
    pub positional: Vec<Bytes>,
    pub locals: Vec<Scope>,
    pub readonly: BTreeSet<Bytes>,
    pub exported: BTreeSet<Bytes>,
    pub functions: BTreeMap<Bytes, Command>,
    pub aliases: BTreeMap<Bytes, Bytes>,
    pub hashed: BTreeMap<Bytes, Bytes>,
    pub cwd: Bytes,
    pub arg0: Bytes,
    pub last_bg_pid: Option<Pid>,
    pub last_status: u8,
    pub loop_depth: usize,
    pub function_depth: usize,
    pub dot_depth: usize,
    pub getopts_offset: Option<usize>,
    /// The OPTIND value the offset belongs to.
    pub getopts_optind: Option<Bytes>,
    /// Set while an EXIT trap runs, so it runs once.
    pub exiting: bool,
}

impl Default for ShellState {
    fn default() -> Self {
        ShellState::new(Pid(1))
    }
}

impl ShellState {
    pub fn new(root_pid: Pid) -> Self {
        let mut st = ShellState {
            root_pid,
            outermost: true,
            interactive: false,
            options: BTreeSet::new(),
            jobs: BTreeMap::new(),
            traps: BTreeMap::new(),
            supershell_traps: None,
            env: BTreeMap::new(),
            positional: Vec::new(),
            locals: Vec::new(),
            readonly: BTreeSet::new(),
            exported: BTreeSet::new(),
            functions: BTreeMap::new(),
            aliases: BTreeMap::new(),
            hashed: BTreeMap::new(),
            cwd: b"/".to_vec(),
            arg0: b"smolsh".to_vec(),
            last_bg_pid: None,
            last_status: 0,
            loop_depth: 0,
            function_depth: 0,
            dot_depth: 0,
            getopts_offset: None,
            getopts_optind: None,
            exiting: false,
        };
        st.env.insert(b"IFS".to_vec(), b" \t\n".to_vec());
        st.env.insert(b"PS1".to_vec(), b"$ ".to_vec());
        st.env.insert(b"PS2".to_vec(), b"> ".to_vec());
        st.env.insert(b"PS4".to_vec(), b"+ ".to_vec());
        st.env.insert(b"OPTIND".to_vec(), b"1".to_vec());
        st
    }

    /// Import a host environment; every imported name is exported.
    pub fn import_env<I: IntoIterator<Item = (Bytes, Bytes)>>(&mut self, vars: I) {
        for (k, v) in vars {
            if crate::ast::is_name(&k) {
                self.exported.insert(k.clone());
                self.env.insert(k, v);
            }
        }
    }

    pub fn has(&self, o: ShellOption) -> bool {
        self.options.contains(&o)
    }

    pub fn set_option(&mut self, o: ShellOption, on: bool) {
        if on {
            self.options.insert(o);
        } else {
            self.options.remove(&o);
        }
    }

    pub fn set_status(&mut self, n: i32) {
        self.last_status = n.clamp(0, 255) as u8;
    }

    /// Active single-letter flags, sorted by byte value.
    pub fn flags(&self) -> Bytes {
        let mut v: Vec<u8> = self.options.iter().filter_map(|o| o.letter()).collect();
        if self.interactive {
            v.push(b'i');
        }
        v.sort_unstable();
        v
    }

    pub fn is_special_param(name: &[u8]) -> bool {
        name.len() == 1 && b"?$!#-0*@".contains(&name[0]) || (!name.is_empty() && name.iter().all(u8::is_ascii_digit))
    }

    /// Special and positional parameters; `None` for ordinary names.
    pub fn special_param(&self, name: &[u8]) -> Option<Option<Bytes>> {
        let v = match name {
            b"?" => Some(self.last_status.to_string().into_bytes()),
            b"$" => Some(self.root_pid.0.to_string().into_bytes()),
            b"!" => self.last_bg_pid.map(|p| p.0.to_string().into_bytes()),
            b"#" => Some(self.positional.len().to_string().into_bytes()),
            b"-" => Some(self.flags()),
            b"0" => Some(self.arg0.clone()),
            b"*" | b"@" => Some(self.join_positional(b" ")),
            _ if !name.is_empty() && name.iter().all(u8::is_ascii_digit) => {
                let n: usize = std::str::from_utf8(name).ok()?.parse().ok()?;
                self.positional.get(n - 1).cloned()
            }
            _ => return None,
        };
        Some(v)
    }

    pub fn join_positional(&self, sep: &[u8]) -> Bytes {
        let mut out = Vec::new();
        for (i, p) in self.positional.iter().enumerate() {
            if i > 0 {
                out.extend_from_slice(sep);
            }
            out.extend_from_slice(p);
        }
        out
    }

    pub fn lookup(&self, name: &[u8]) -> Option<Bytes> {
        if let Some(v) = self.special_param(name) {
            return v;
        }
        for scope in self.locals.iter().rev() {
            if let Some(l) = scope.get(name) {
                return l.value.clone();
            }
        }
        self.env.get(name).cloned()
    }

    pub fn ifs(&self) -> Bytes {
        self.lookup(b"IFS").unwrap_or_else(|| b" \t\n".to_vec())
    }

    fn innermost_local(&self, name: &[u8]) -> Option<usize> {
        (0..self.locals.len()).rev().find(|&i| self.locals[i].contains_key(name))
    }

    pub fn is_readonly(&self, name: &[u8]) -> bool {
        match self.innermost_local(name) {
            Some(i) => self.locals[i][name].readonly,
            None => self.readonly.contains(name),
        }
    }

    pub fn is_exported(&self, name: &[u8]) -> bool {
        match self.innermost_local(name) {
            Some(i) => self.locals[i][name].exported || self.exported.contains(name),
            None => self.exported.contains(name),
        }
    }

    /// Assign with dynamic-scope write-through to the innermost local.
    pub fn set_global(&mut self, name: &[u8], value: Bytes) -> Result<(), ReadonlyError> {
        let allexport = self.has(ShellOption::AllExport);
        match self.innermost_local(name) {
            Some(i) => {
                let l = self.locals[i].get_mut(name).expect("scope has name");
                if l.readonly {
                    return Err(ReadonlyError(name.to_vec()));
                }
                l.value = Some(value);
                if allexport {
                    l.exported = true;
                }
            }
            None => {
                if self.readonly.contains(name) {
                    return Err(ReadonlyError(name.to_vec()));
                }
                self.env.insert(name.to_vec(), value);
                if allexport {
                    self.exported.insert(name.to_vec());
                }
            }
        }
        if name == b"OPTIND" {
            self.getopts_offset = None;
        }
        Ok(())
    }

    /// Bind in the innermost scope.
    pub fn set_local(&mut self, name: &[u8], value: Option<Bytes>) -> Result<(), ReadonlyError> {
        if self.is_readonly(name) {
            return Err(ReadonlyError(name.to_vec()));
        }
        let exported = self.has(ShellOption::AllExport);
        let scope = self.locals.last_mut().expect("set_local needs a scope");
        match scope.get_mut(name) {
            Some(l) => l.value = value,
            None => {
                scope.insert(name.to_vec(), LocalVar { value, readonly: false, exported });
            }
        }
        Ok(())
    }

    pub fn push_scope(&mut self) {
        self.locals.push(Scope::new());
    }

    pub fn pop_scope(&mut self) -> Scope {
        self.locals.pop().expect("pop_scope on an empty locals stack")
    }

    pub fn unset(&mut self, name: &[u8]) -> Result<(), ReadonlyError> {
        if self.is_readonly(name) {
            return Err(ReadonlyError(name.to_vec()));
        }
        match self.innermost_local(name) {
            Some(i) => {
                self.locals[i].get_mut(name).expect("scope has name").value = None;
            }
            None => {
                self.env.remove(name);
                self.exported.remove(name);
            }
        }
        Ok(())
    }

    pub fn set_readonly(&mut self, name: &[u8]) {
        match self.innermost_local(name) {
            Some(i) => self.locals[i].get_mut(name).expect("scope has name").readonly = true,
            None => {
                self.readonly.insert(name.to_vec());
            }
        }
    }

    pub fn set_exported(&mut self, name: &[u8]) {
        match self.innermost_local(name) {
            Some(i) => self.locals[i].get_mut(name).expect("scope has name").exported = true,
            None => {
                self.exported.insert(name.to_vec());
            }
        }
    }

    /// All visible variables: globals overlaid by locals, newest last.
    pub fn visible_vars(&self) -> BTreeMap<Bytes, Bytes> {
        let mut m = self.env.clone();
        for scope in &self.locals {
            for (k, l) in scope {
                match &l.value {
                    Some(v) => {
                        m.insert(k.clone(), v.clone());
                    }
                    None => {
                        m.remove(k);
                    }
                }
            }
        }
        m
    }

    /// Environment handed to executed programs.
    pub fn export_env(&self, extra: &[(Bytes, Bytes)]) -> Vec<(Bytes, Bytes)> {
        let mut m: BTreeMap<Bytes, Bytes> = BTreeMap::new();
        for (k, v) in &self.env {
            if self.exported.contains(k) {
                m.insert(k.clone(), v.clone());
            }
        }
        for scope in &self.locals {
            for (k, l) in scope {
                match &l.value {
                    Some(v) if l.exported || self.exported.contains(k) => {
                        m.insert(k.clone(), v.clone());
                    }
                    _ => {
                        m.remove(k);
                    }
                }
            }
        }
        for (k, v) in extra {
            m.insert(k.clone(), v.clone());
        }
        m.into_iter().collect()
    }

    /// State for a forked subshell.
    pub fn for_subshell(&self) -> ShellState {
        let mut child = self.clone();
        child.outermost = false;
        child.interactive = false;
        child.supershell_traps = Some(self.traps.clone());
        child.traps.retain(|_, h| h.is_empty());
        child.jobs.clear();
        child.exiting = false;
        child
    }
}

impl ArithEnv for ShellState {
    fn get_var(&self, name: &[u8]) -> Option<Bytes> {
        self.lookup(name)
    }

    fn set_var(&mut self, name: &[u8], value: Bytes) -> Result<(), String> {
        self.set_global(name, value).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_lookup() {
        let st = ShellState { last_status: 47, ..ShellState::default() };
        assert_eq!(st.lookup(b"?"), Some(b"47".to_vec()));
    }

    #[test]
    fn local_shadows_global() {
        let mut st = ShellState::default();
        st.set_global(b"x", b"0".to_vec()).unwrap();
        st.push_scope();
        st.set_local(b"x", Some(b"1".to_vec())).unwrap();
        assert_eq!(st.lookup(b"x"), Some(b"1".to_vec()));
        st.pop_scope();
        assert_eq!(st.lookup(b"x"), Some(b"0".to_vec()));
    }

    #[test]
    fn unset_is_none() {
        assert_eq!(ShellState::default().lookup(b"nope"), None);
    }

    #[test]
    fn readonly_blocks_set() {
        let mut st = ShellState::default();
        st.set_global(b"r", b"1".to_vec()).unwrap();
        st.set_readonly(b"r");
        assert!(st.set_global(b"r", b"2".to_vec()).is_err());
        st.push_scope();
        assert!(st.set_local(b"r", None).is_err());
    }

    #[test]
    fn write_through_to_local() {
        let mut st = ShellState::default();
        st.set_global(b"x", b"outer".to_vec()).unwrap();
        st.push_scope();
        st.set_local(b"x", Some(b"1".to_vec())).unwrap();
        st.set_global(b"x", b"2".to_vec()).unwrap();
        assert_eq!(st.lookup(b"x"), Some(b"2".to_vec()));
        st.pop_scope();
        assert_eq!(st.lookup(b"x"), Some(b"outer".to_vec()));
    }

    #[test]
    fn local_without_value_is_unset() {
        let mut st = ShellState::default();
        st.set_global(b"x", b"g".to_vec()).unwrap();
        st.push_scope();
        st.set_local(b"x", None).unwrap();
        assert_eq!(st.lookup(b"x"), None);
    }

    #[test]
    fn special_params() {
        let mut st = ShellState { positional: vec![b"a".to_vec(), b"b".to_vec()], ..ShellState::default() };
        assert_eq!(st.lookup(b"#"), Some(b"2".to_vec()));
        assert_eq!(st.lookup(b"2"), Some(b"b".to_vec()));
        assert_eq!(st.lookup(b"!"), None);
        st.set_option(ShellOption::XTrace, true);
        st.set_option(ShellOption::ErrExit, true);
        assert_eq!(st.lookup(b"-"), Some(b"ex".to_vec()));
    }

    #[test]
    fn nested_scopes_pop_lifo() {
        let mut st = ShellState::default();
        st.push_scope();
        st.set_local(b"a", Some(b"1".to_vec())).unwrap();
        st.push_scope();
        st.set_local(b"a", Some(b"2".to_vec())).unwrap();
        st.pop_scope();
        assert_eq!(st.lookup(b"a"), Some(b"1".to_vec()));
        st.pop_scope();
        assert_eq!(st.lookup(b"a"), None);
    }

    #[test]
    fn export_env_includes_exported_locals() {
        let mut st = ShellState::default();
        st.set_global(b"g", b"1".to_vec()).unwrap();
        st.set_exported(b"g");
        st.set_global(b"h", b"2".to_vec()).unwrap();
        let env = st.export_env(&[(b"t".to_vec(), b"3".to_vec())]);
        assert_eq!(env, vec![(b"g".to_vec(), b"1".to_vec()), (b"t".to_vec(), b"3".to_vec())]);
    }
}
