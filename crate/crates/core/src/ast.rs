//! Source syntax, runtime evaluation forms, and their rendering.
//!
//! One `Command` enum carries both the parsed forms and the runtime frames
//! the evaluator rewrites them into. The parser only ever builds the source
//! variants; see [`Command::is_source`].

use std::fmt;

use crate::parser::ParseSession;

pub type Bytes = Vec<u8>;
pub type Fd = i32;

/// A process id, simulated or real.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pid(pub i32);

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A word is a flat sequence of literals, separators and control codes.
pub type Word = Vec<WordPart>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WordPart {
    Lit(Bytes),
    Sep,
    Ctrl(Control),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Control {
    Tilde(Option<Bytes>),
    Param(Bytes, ParamFormat),
    CmdSubst(Box<Command>),
    Arith(Word),
    Quoted(Word),
    // Runtime-only codes below.
    /// Literal text of a defaulting word; unquoted parts stay splittable.
    Generated(Word),
    /// `${name=w}` with the accumulated expansion of w so far.
    Assign(Bytes, ExpandedWords, Word),
    /// `${name?w}` with the accumulated expansion of w so far.
    ErrorFmt(Bytes, ExpandedWords, Word),
    /// `${name#w}` and friends: value, side, mode, accumulated pattern, rest.
    MatchFmt(Bytes, Side, Mode, ExpandedWords, Word),
    /// `$((w))` with the accumulated expansion of w so far.
    ArithFmt(ExpandedWords, Word),
    CmdSubstRunning(Box<Command>, Pid, Fd),
    CmdWait(Box<Command>, Pid, Bytes),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NullMode {
    /// Only an unset parameter counts as unset (`${x-w}`).
    Unset,
    /// A null value counts as unset too (`${x:-w}`).
    UnsetOrNull,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Prefix,
    Suffix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Shortest,
    Longest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamFormat {
    Normal,
    Default(NullMode, Word),
    Assign(NullMode, Word),
    Error(NullMode, Word),
    Alt(NullMode, Word),
    Length,
    Sub(Side, Mode, Word),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileMode {
    /// `>`
    Write,
    /// `>|`
    Clobber,
    /// `<`
    Read,
    /// `<>`
    ReadWrite,
    /// `>>`
    Append,
}

impl FileMode {
    pub fn symbol(self) -> &'static str {
        match self {
            FileMode::Write => ">",
            FileMode::Clobber => ">|",
            FileMode::Read => "<",
            FileMode::ReadWrite => "<>",
            FileMode::Append => ">>",
        }
    }

    pub fn default_fd(self) -> Fd {
        match self {
            FileMode::Read | FileMode::ReadWrite => 0,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DupDir {
    /// `<&`
    In,
    /// `>&`
    Out,
}

impl DupDir {
    pub fn symbol(self) -> &'static str {
        match self {
            DupDir::In => "<&",
            DupDir::Out => ">&",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HereKind {
    Expand,
    NoExpand,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Redirection {
    File { fd: Fd, mode: FileMode, target: Word },
    Dup { fd: Fd, dir: DupDir, target: Word },
    Here { fd: Fd, kind: HereKind, body: Word },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseBranch {
    pub patterns: Vec<Word>,
    pub body: Option<Command>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExpansionOptions {
    pub split: bool,
    pub glob: bool,
    /// Produce a pattern: quoted bytes come out backslash-escaped.
    pub pattern: bool,
}

impl ExpansionOptions {
    pub const FIELDS: ExpansionOptions = ExpansionOptions { split: true, glob: true, pattern: false };
    pub const STRING: ExpansionOptions = ExpansionOptions { split: false, glob: false, pattern: false };
    pub const PATTERN: ExpansionOptions = ExpansionOptions { split: false, glob: false, pattern: true };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WordOptions {
    pub split: bool,
    pub in_dquotes: bool,
    pub generated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expanded {
    Sep,
    Src(Bytes),
    Exp(Bytes),
    /// Positional parameters from `$@`/`$*`; `quoted` when inside double quotes.
    At { fields: Vec<Bytes>, quoted: bool },
    QuotedStr(Bytes),
}

pub type ExpandedWords = Vec<Expanded>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Inter {
    FieldSep,
    Sep,
    Str(Bytes),
    QuotedStr(Bytes),
}

pub type IntermediateFields = Vec<Inter>;
pub type Fields = Vec<Bytes>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExpansionState {
    Start(ExpansionOptions, Word),
    Expand(ExpansionOptions, ExpandedWords, Word),
    Split(ExpansionOptions, ExpandedWords),
    Path(ExpansionOptions, IntermediateFields),
    Quote(ExpansionOptions, IntermediateFields),
    Error(Fields),
    Done(Fields),
}

impl ExpansionState {
    pub fn is_final(&self) -> bool {
        matches!(self, ExpansionState::Error(_) | ExpansionState::Done(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CommandOptions {
    pub did_cmd_subst: bool,
    pub may_fork: bool,
    pub simple_invocation: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExpandedRedir {
    File { mode: FileMode, fd: Fd, path: Bytes },
    /// `target` of `None` closes the fd.
    Dup { dir: DupDir, fd: Fd, target: Option<Fd> },
    Here { kind: HereKind, fd: Fd, body: Bytes },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedirState {
    pub done: Vec<ExpandedRedir>,
    pub in_progress: Option<(Redirection, ExpansionState)>,
    pub todo: Vec<Redirection>,
}

impl RedirState {
    pub fn new(todo: Vec<Redirection>) -> Self {
        RedirState { done: Vec::new(), in_progress: None, todo }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SavedFd {
    RestoreFrom(Fd),
    Close,
}

/// Disturbed fds in application order; restoration walks it backwards.
pub type SavedFds = Vec<(Fd, SavedFd)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalKind {
    Top,
    Eval,
    Dot,
    Trap,
}

/// State of an eval loop: the parse session plus bookkeeping.
#[derive(Clone, Debug)]
pub struct EvalFrame {
    pub session: ParseSession,
    pub kind: EvalKind,
    pub interactive: bool,
    /// Syntax errors abort the enclosing shell when set.
    pub fatal_errors: bool,
    pub ran_any: bool,
}

impl PartialEq for EvalFrame {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.interactive == other.interactive
            && self.session.line() == other.session.line()
    }
}

impl Eq for EvalFrame {}

/// Source and runtime commands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Simple { assigns: Vec<(Bytes, Word)>, words: Word, redirs: Vec<Redirection> },
    Pipeline { commands: Vec<Command>, background: bool },
    Redirected(Box<Command>, Vec<Redirection>),
    Background(Box<Command>),
    Subshell(Box<Command>),
    Seq(Box<Command>, Box<Command>),
    And(Box<Command>, Box<Command>),
    Or(Box<Command>, Box<Command>),
    Not(Box<Command>),
    While { cond: Box<Command>, body: Box<Command> },
    For { var: Bytes, words: Word, body: Box<Command> },
    If { cond: Box<Command>, then: Box<Command>, otherwise: Option<Box<Command>> },
    Case { scrutinee: Word, branches: Vec<CaseBranch> },
    FnDef { name: Bytes, body: Box<Command> },

    // Runtime forms.
    RedirExpand { cmd: Box<Command>, state: RedirState },
    CmdArgs { assigns: Vec<(Bytes, Word)>, args: ExpansionState, redirs: Vec<Redirection>, opts: CommandOptions },
    CmdRedirs { assigns: Vec<(Bytes, Word)>, fields: Fields, state: RedirState, opts: CommandOptions },
    CmdAssigns { pending: Vec<(Bytes, ExpansionState)>, fields: Fields, saved: SavedFds, opts: CommandOptions },
    CmdReady { env: Vec<(Bytes, Bytes)>, name: Bytes, args: Fields, saved: SavedFds, opts: CommandOptions },
    Run { env: Vec<(Bytes, Bytes)>, name: Bytes, args: Fields, saved: SavedFds, opts: CommandOptions },
    WhileCond { cond: Box<Command>, cur: Box<Command>, body: Box<Command>, body_status: u8 },
    WhileBody { cond: Box<Command>, cur: Box<Command>, body: Box<Command> },
    ForArgs { var: Bytes, args: ExpansionState, body: Box<Command> },
    ForStart { var: Bytes, fields: Fields, body: Box<Command> },
    ForRunning { var: Bytes, rest: Fields, body: Box<Command>, cur: Box<Command> },
    CaseArg { scrutinee: ExpansionState, branches: Vec<CaseBranch> },
    CaseMatch { value: Bytes, branches: Vec<CaseBranch> },
    CaseCheck { value: Bytes, pattern: ExpansionState, rest: Vec<Word>, body: Option<Box<Command>>, branches: Vec<CaseBranch> },
    Call { loop_depth: usize, positional: Vec<Bytes>, name: Bytes, orig: Box<Command>, cur: Box<Command> },
    Break(usize),
    Continue(usize),
    Return,
    Exit,
    Done,
    Redirs(Box<Command>, SavedFds),
    EvalLoop(Box<EvalFrame>),
    EvalLoopCmd(Box<EvalFrame>, Box<Command>),
    Exec { path: Bytes, name: Bytes, args: Fields, env: Vec<(Bytes, Bytes)>, as_script: bool },
    Wait { pids: Vec<Pid>, checked: bool, record: bool },
    Trapped { signal: crate::os::Signal, status: u8, handler: Box<Command>, cont: Box<Command> },
}

impl Command {
    pub fn seq(a: Command, b: Command) -> Command {
        Command::Seq(Box::new(a), Box::new(b))
    }

    /// A command is terminal when no rule steps it further.
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            Command::Done | Command::Exit | Command::Return | Command::Break(_) | Command::Continue(_)
        )
    }

    /// Control forms that propagate through sequencing.
    pub fn is_ctrl(&self) -> bool {
        matches!(self, Command::Exit | Command::Return | Command::Break(_) | Command::Continue(_))
    }

    /// True if this command and everything below it are source forms.
    pub fn is_source(&self) -> bool {
        use Command::*;
        let w = |w: &Word| word_is_source(w);
        let r = |rs: &[Redirection]| rs.iter().all(redir_is_source);
        match self {
            Simple { assigns, words, redirs } => {
                assigns.iter().all(|(_, v)| w(v)) && w(words) && r(redirs)
            }
            Pipeline { commands, .. } => commands.iter().all(Command::is_source),
            Redirected(c, rs) => c.is_source() && r(rs),
            Background(c) | Subshell(c) | Not(c) => c.is_source(),
            Seq(a, b) | And(a, b) | Or(a, b) => a.is_source() && b.is_source(),
            While { cond, body } => cond.is_source() && body.is_source(),
            For { words, body, .. } => w(words) && body.is_source(),
            If { cond, then, otherwise } => {
                cond.is_source() && then.is_source() && otherwise.as_ref().is_none_or(|c| c.is_source())
            }
            Case { scrutinee, branches } => {
                w(scrutinee)
                    && branches.iter().all(|b| {
                        b.patterns.iter().all(w) && b.body.as_ref().is_none_or(Command::is_source)
                    })
            }
            FnDef { body, .. } => body.is_source(),
            _ => false,
        }
    }
}

fn redir_is_source(r: &Redirection) -> bool {
    match r {
        Redirection::File { target, .. } | Redirection::Dup { target, .. } => word_is_source(target),
        Redirection::Here { body, .. } => word_is_source(body),
    }
}

pub fn word_is_source(w: &Word) -> bool {
    w.iter().all(|p| match p {
        WordPart::Lit(b) => !b.is_empty(),
        WordPart::Sep => true,
        WordPart::Ctrl(c) => match c {
            Control::Tilde(_) => true,
            Control::Param(_, fmt) => match fmt {
                ParamFormat::Normal | ParamFormat::Length => true,
                ParamFormat::Default(_, w)
                | ParamFormat::Assign(_, w)
                | ParamFormat::Error(_, w)
                | ParamFormat::Alt(_, w)
                | ParamFormat::Sub(_, _, w) => word_is_source(w),
            },
            Control::CmdSubst(c) => c.is_source(),
            Control::Arith(w) | Control::Quoted(w) => word_is_source(w),
            _ => false,
        },
    })
}

/// Name of the outermost form, used in diagnostics and traces.
pub fn form_name(c: &Command) -> &'static str {
    use Command::*;
    match c {
        Simple { .. } => "Simple",
        Pipeline { .. } => "Pipeline",
        Redirected(..) => "Redirected",
        Background(_) => "Background",
        Subshell(_) => "Subshell",
        Seq(..) => "Seq",
        And(..) => "And",
        Or(..) => "Or",
        Not(_) => "Not",
        While { .. } => "While",
        For { .. } => "For",
        If { .. } => "If",
        Case { .. } => "Case",
        FnDef { .. } => "FnDef",
        RedirExpand { .. } => "RedirExpand",
        CmdArgs { .. } => "CmdArgs",
        CmdRedirs { .. } => "CmdRedirs",
        CmdAssigns { .. } => "CmdAssigns",
        CmdReady { .. } => "CmdReady",
        Run { .. } => "Run",
        WhileCond { .. } => "WhileCond",
        WhileBody { .. } => "WhileBody",
        ForArgs { .. } => "ForArgs",
        ForStart { .. } => "ForStart",
        ForRunning { .. } => "ForRunning",
        CaseArg { .. } => "CaseArg",
        CaseMatch { .. } => "CaseMatch",
        CaseCheck { .. } => "CaseCheck",
        Call { .. } => "Call",
        Break(_) => "Break",
        Continue(_) => "Continue",
        Return => "Return",
        Exit => "Exit",
        Done => "Done",
        Redirs(..) => "Redirs",
        EvalLoop(_) => "EvalLoop",
        EvalLoopCmd(..) => "EvalLoopCmd",
        Exec { .. } => "Exec",
        Wait { .. } => "Wait",
        Trapped { .. } => "Trapped",
    }
}

const RESERVED: &[&str] = &[
    "!", "{", "}", "case", "do", "done", "elif", "else", "esac", "fi", "for", "if", "in", "then", "until",
    "while",
];

pub fn is_reserved(b: &[u8]) -> bool {
    RESERVED.iter().any(|r| r.as_bytes() == b)
}

pub fn is_name(b: &[u8]) -> bool {
    match b.split_first() {
        Some((c, rest)) => {
            (c.is_ascii_alphabetic() || *c == b'_') && rest.iter().all(|c| c.is_ascii_alphanumeric() || *c == b'_')
        }
        None => false,
    }
}

/// Quote bytes for reinput: bare when safe, else single quotes with `'\''`.
pub fn shell_quote(s: &[u8]) -> Bytes {
    let safe = !s.is_empty()
        && s.iter().all(|c| c.is_ascii_alphanumeric() || b"_-./,:@%+=".contains(c));
    if safe {
        return s.to_vec();
    }
    let mut out = vec![b'\''];
    for &c in s {
        if c == b'\'' {
            out.extend_from_slice(b"'\\''");
        } else {
            out.push(c);
        }
    }
    out.push(b'\'');
    out
}

/// Always single-quoted, as `set` and `export -p` print values.
pub fn single_quote(s: &[u8]) -> Bytes {
    let mut out = vec![b'\''];
    for &c in s {
        if c == b'\'' {
            out.extend_from_slice(b"'\\''");
        } else {
            out.push(c);
        }
    }
    out.push(b'\'');
    out
}

/// Render a command. Source forms reparse to the same tree.
pub fn render(c: &Command) -> Bytes {
    let mut r = Renderer::default();
    r.command(c);
    r.flush_heredocs_final();
    r.out
}

pub fn render_word(w: &Word) -> Bytes {
    let mut r = Renderer::default();
    r.word(w, Ctx::Plain);
    r.out
}

pub fn render_string(c: &Command) -> String {
    String::from_utf8_lossy(&render(c)).into_owned()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Plain,
    DQuote,
    /// Inside `${x-...}` unquoted.
    Brace,
    /// Inside `${x-...}` within double quotes or a heredoc body.
    BraceDq,
    Arith,
    Heredoc,
}

#[derive(Default)]
struct Renderer {
    out: Bytes,
    pending: Vec<(Bytes, Bytes)>,
}

impl Renderer {
    fn push(&mut self, s: &str) {
        self.out.extend_from_slice(s.as_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.out.extend_from_slice(b);
    }

    /// A list separator. Heredoc bodies wait for the end of the whole
    /// command, which is always a valid place for them.
    fn sep(&mut self) {
        self.close();
    }

    /// Before a closing keyword or bracket. A trailing `&` already ends
    /// the list.
    fn close(&mut self) {
        if self.out.ends_with(b" &") {
            self.push(" ");
        } else {
            self.push("; ");
        }
    }

    fn flush_bodies(&mut self) {
        for (body, delim) in std::mem::take(&mut self.pending) {
            self.bytes(&body);
            if !body.is_empty() && !body.ends_with(b"\n") {
                self.push("\n");
            }
            self.bytes(&delim);
            self.push("\n");
        }
    }

    fn flush_heredocs_final(&mut self) {
        if !self.pending.is_empty() {
            self.push("\n");
            self.flush_bodies();
        }
    }

    fn command(&mut self, c: &Command) {
        use Command::*;
        match c {
            Simple { assigns, words, redirs } => {
                let mut first = true;
                for (name, value) in assigns {
                    if !first {
                        self.push(" ");
                    }
                    first = false;
                    self.bytes(name);
                    self.push("=");
                    self.word(value, Ctx::Plain);
                }
                if !words.is_empty() {
                    if !first {
                        self.push(" ");
                    }
                    first = false;
                    self.word(words, Ctx::Plain);
                }
                for r in redirs {
                    if !first {
                        self.push(" ");
                    }
                    first = false;
                    self.redir(r);
                }
            }
            Pipeline { commands, background } => {
                for (i, c) in commands.iter().enumerate() {
                    if i > 0 {
                        self.push(" | ");
                    }
                    self.command_wrapped(c);
                }
                if *background {
                    self.push(" &");
                }
            }
            Redirected(c, rs) => {
                if is_compound(c) {
                    self.command(c);
                } else {
                    self.push("{ ");
                    self.command(c);
                    self.close();
                    self.push("}");
                }
                for r in rs {
                    self.push(" ");
                    self.redir(r);
                }
            }
            Background(c) => {
                self.command_wrapped(c);
                self.push(" &");
            }
            Subshell(c) => {
                self.push("( ");
                self.command(c);
                self.push(" )");
            }
            Seq(a, b) => {
                // Lists nest to the right, so a left-nested list needs braces.
                if matches!(**a, Seq(..)) {
                    self.command_wrapped(a);
                } else {
                    self.command(a);
                }
                if matches!(**a, Background(_)) || matches!(**a, Pipeline { background: true, .. }) {
                    self.push(" ");
                } else {
                    self.sep();
                }
                self.command(b);
            }
            And(a, b) => {
                self.command_wrapped(a);
                self.push(" && ");
                self.command_wrapped(b);
            }
            Or(a, b) => {
                self.command_wrapped(a);
                self.push(" || ");
                self.command_wrapped(b);
            }
            Not(c) => {
                self.push("! ");
                self.command_wrapped(c);
            }
            While { cond, body } => {
                self.push("while ");
                self.command(cond);
                self.close();
                self.push("do ");
                self.command(body);
                self.close();
                self.push("done");
            }
            For { var, words, body } => {
                self.push("for ");
                self.bytes(var);
                self.push(" in ");
                self.word(words, Ctx::Plain);
                self.close();
                self.push("do ");
                self.command(body);
                self.close();
                self.push("done");
            }
            If { cond, then, otherwise } => {
                self.push("if ");
                self.command(cond);
                self.close();
                self.push("then ");
                self.command(then);
                if let Some(e) = otherwise {
                    self.close();
                    self.push("else ");
                    self.command(e);
                }
                self.close();
                self.push("fi");
            }
            Case { scrutinee, branches } => {
                self.push("case ");
                self.word(scrutinee, Ctx::Plain);
                self.push(" in ");
                for b in branches {
                    self.push("(");
                    for (i, p) in b.patterns.iter().enumerate() {
                        if i > 0 {
                            self.push(" | ");
                        }
                        self.word(p, Ctx::Plain);
                    }
                    self.push(") ");
                    if let Some(body) = &b.body {
                        self.command(body);
                    }
                    self.push(";; ");
                }
                self.push("esac");
            }
            FnDef { name, body } => {
                self.bytes(name);
                self.push("() ");
                self.command_wrapped_fn(body);
            }
            other => self.runtime(other),
        }
    }

    /// Wrap forms that would otherwise change meaning when nested.
    fn command_wrapped(&mut self, c: &Command) {
        use Command::*;
        match c {
            Seq(..) | And(..) | Or(..) | Background(_) | Pipeline { background: true, .. } => {
                self.push("{ ");
                self.command(c);
                self.close();
                self.push("}");
            }
            Pipeline { .. } | Not(_) => {
                self.push("{ ");
                self.command(c);
                self.close();
                self.push("}");
            }
            _ => self.command(c),
        }
    }

    fn command_wrapped_fn(&mut self, c: &Command) {
        use Command::*;
        match c {
            While { .. } | For { .. } | If { .. } | Case { .. } | Subshell(_) => self.command(c),
            Redirected(inner, _) if is_compound(inner) => self.command(c),
            _ => {
                self.push("{ ");
                self.command(c);
                self.close();
                self.push("}");
            }
        }
    }

    fn redir(&mut self, r: &Redirection) {
        match r {
            Redirection::File { fd, mode, target } => {
                if *fd != mode.default_fd() {
                    self.push(&fd.to_string());
                }
                self.push(mode.symbol());
                self.word(target, Ctx::Plain);
            }
            Redirection::Dup { fd, dir, target } => {
                let default = if *dir == DupDir::In { 0 } else { 1 };
                if *fd != default {
                    self.push(&fd.to_string());
                }
                self.push(dir.symbol());
                self.word(target, Ctx::Plain);
            }
            Redirection::Here { fd, kind, body } => {
                if *fd != 0 {
                    self.push(&fd.to_string());
                }
                let text = match kind {
                    HereKind::NoExpand => {
                        body.iter()
                            .flat_map(|p| match p {
                                WordPart::Lit(b) => b.clone(),
                                _ => Vec::new(),
                            })
                            .collect::<Bytes>()
                    }
                    HereKind::Expand => {
                        let mut sub = Renderer::default();
                        sub.word(body, Ctx::Heredoc);
                        sub.out
                    }
                };
                let delim = heredoc_delimiter(&text);
                self.push("<<");
                if *kind == HereKind::NoExpand {
                    self.push("'");
                    self.bytes(&delim);
                    self.push("'");
                } else {
                    self.bytes(&delim);
                }
                self.pending.push((text, delim));
            }
        }
    }

    fn word(&mut self, w: &Word, ctx: Ctx) {
        for (i, p) in w.iter().enumerate() {
            match p {
                WordPart::Lit(b) => {
                    let dollar_safe_after = match w.get(i + 1) {
                        None | Some(WordPart::Sep) => true,
                        Some(WordPart::Ctrl(c)) => matches!(c, Control::Quoted(_) | Control::Tilde(_)),
                        Some(WordPart::Lit(_)) => false,
                    };
                    self.literal(b, ctx, dollar_safe_after)
                }
                WordPart::Sep => self.push(" "),
                WordPart::Ctrl(c) => {
                    let next_is_name_char = match w.get(i + 1) {
                        Some(WordPart::Lit(b)) => b.first().is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_'),
                        _ => false,
                    };
                    self.control(c, ctx, next_is_name_char)
                }
            }
        }
    }

    /// A `$` that cannot start an expansion stays bare, so a lone dollar
    /// keeps its unquoted form.
    fn literal(&mut self, b: &[u8], ctx: Ctx, dollar_safe_after: bool) {
        let lone_dollar = |i: usize| match b.get(i + 1) {
            None => dollar_safe_after,
            Some(&n) => !(n.is_ascii_alphanumeric() || b"_({@*#?-$!".contains(&n)),
        };
        match ctx {
            Ctx::Plain | Ctx::Brace => {
                for (i, &c) in b.iter().enumerate() {
                    let special = match c {
                        b'$' => !lone_dollar(i),
                        b'`' | b'\\' | b'"' | b'\'' => true,
                        b'|' | b'&' | b';' | b'<' | b'>' | b'(' | b')' | b' ' | b'\t' | b'\n' => ctx == Ctx::Plain,
                        b'}' => ctx == Ctx::Brace,
                        _ => false,
                    };
                    if special {
                        self.out.push(b'\\');
                    }
                    self.out.push(c);
                }
            }
            Ctx::DQuote | Ctx::BraceDq => {
                for &c in b {
                    if matches!(c, b'$' | b'`' | b'"' | b'\\') || (c == b'}' && ctx == Ctx::BraceDq) {
                        self.out.push(b'\\');
                    }
                    self.out.push(c);
                }
            }
            Ctx::Heredoc => {
                for &c in b {
                    if matches!(c, b'$' | b'`' | b'\\') {
                        self.out.push(b'\\');
                    }
                    self.out.push(c);
                }
            }
            Ctx::Arith => self.bytes(b),
        }
    }

    fn control(&mut self, c: &Control, ctx: Ctx, next_is_name_char: bool) {
        match c {
            Control::Tilde(prefix) => {
                self.push("~");
                if let Some(p) = prefix {
                    self.bytes(p);
                }
            }
            Control::Param(name, fmt) => {
                let inner = if matches!(ctx, Ctx::DQuote | Ctx::Heredoc | Ctx::BraceDq) { Ctx::BraceDq } else { Ctx::Brace };
                self.param(name, fmt, next_is_name_char, inner)
            }
            Control::CmdSubst(c) => {
                self.push("$(");
                let mut sub = Renderer::default();
                sub.command(c);
                sub.flush_heredocs_final();
                if sub.out.first() == Some(&b'(') {
                    self.push(" ");
                }
                self.bytes(&sub.out);
                self.push(")");
            }
            Control::Arith(w) => {
                self.push("$((");
                self.word(w, Ctx::Arith);
                self.push("))");
            }
            Control::Quoted(w) => {
                let plain: Option<Bytes> = match w.as_slice() {
                    [] => Some(Vec::new()),
                    [WordPart::Lit(b)] if !b.contains(&b'\'') => Some(b.clone()),
                    _ => None,
                };
                match (plain, ctx) {
                    (Some(b), Ctx::Plain | Ctx::Brace) => {
                        self.push("'");
                        self.bytes(&b);
                        self.push("'");
                    }
                    _ => {
                        self.push("\"");
                        self.word(w, Ctx::DQuote);
                        self.push("\"");
                    }
                }
            }
            other => self.runtime_control(other),
        }
    }

    fn param(&mut self, name: &[u8], fmt: &ParamFormat, next_is_name_char: bool, inner: Ctx) {
        let special = name.len() == 1 && b"?$!#-0*@123456789".contains(&name[0]);
        match fmt {
            ParamFormat::Normal if special => {
                self.push("$");
                self.bytes(name);
            }
            ParamFormat::Normal if !next_is_name_char && !name[0].is_ascii_digit() => {
                self.push("$");
                self.bytes(name);
            }
            ParamFormat::Normal => {
                self.push("${");
                self.bytes(name);
                self.push("}");
            }
            ParamFormat::Length => {
                self.push("${#");
                self.bytes(name);
                self.push("}");
            }
            ParamFormat::Default(m, w) => self.param_word(name, m, "-", w, inner),
            ParamFormat::Assign(m, w) => self.param_word(name, m, "=", w, inner),
            ParamFormat::Error(m, w) => self.param_word(name, m, "?", w, inner),
            ParamFormat::Alt(m, w) => self.param_word(name, m, "+", w, inner),
            ParamFormat::Sub(side, mode, w) => {
                self.push("${");
                self.bytes(name);
                self.push(match (side, mode) {
                    (Side::Prefix, Mode::Shortest) => "#",
                    (Side::Prefix, Mode::Longest) => "##",
                    (Side::Suffix, Mode::Shortest) => "%",
                    (Side::Suffix, Mode::Longest) => "%%",
                });
                self.word(w, inner);
                self.push("}");
            }
        }
    }

    fn param_word(&mut self, name: &[u8], m: &NullMode, op: &str, w: &Word, inner: Ctx) {
        self.push("${");
        self.bytes(name);
        if *m == NullMode::UnsetOrNull {
            self.push(":");
        }
        self.push(op);
        self.word(w, inner);
        self.push("}");
    }

    fn runtime_control(&mut self, c: &Control) {
        match c {
            Control::Generated(w) => {
                self.push("⟨Generated ");
                self.word(w, Ctx::Plain);
                self.push("⟩");
            }
            Control::Assign(name, acc, w) => {
                self.push("⟨Assign ");
                self.bytes(name);
                self.push(" ");
                self.expanded(acc);
                self.push(" ");
                self.word(w, Ctx::Plain);
                self.push("⟩");
            }
            Control::ErrorFmt(name, acc, w) => {
                self.push("⟨Error ");
                self.bytes(name);
                self.push(" ");
                self.expanded(acc);
                self.push(" ");
                self.word(w, Ctx::Plain);
                self.push("⟩");
            }
            Control::MatchFmt(value, side, mode, acc, w) => {
                self.push("⟨Match ");
                self.bytes(&shell_quote(value));
                self.push(&format!(" {side:?} {mode:?} "));
                self.expanded(acc);
                self.push(" ");
                self.word(w, Ctx::Plain);
                self.push("⟩");
            }
            Control::ArithFmt(acc, w) => {
                self.push("⟨Arith ");
                self.expanded(acc);
                self.push(" ");
                self.word(w, Ctx::Arith);
                self.push("⟩");
            }
            Control::CmdSubstRunning(c, pid, fd) => {
                self.push(&format!("⟨CmdSubst pid={pid} fd={fd} "));
                self.bytes(&render(c));
                self.push("⟩");
            }
            Control::CmdWait(c, pid, s) => {
                self.push(&format!("⟨CmdWait pid={pid} "));
                self.bytes(&shell_quote(s));
                self.push(" ");
                self.bytes(&render(c));
                self.push("⟩");
            }
            _ => unreachable!("source control in runtime_control"),
        }
    }

    fn expanded(&mut self, e: &ExpandedWords) {
        self.push("[");
        for (i, x) in e.iter().enumerate() {
            if i > 0 {
                self.push(" ");
            }
            match x {
                Expanded::Sep => self.push("␣"),
                Expanded::Src(b) => {
                    self.push("src:");
                    self.bytes(&shell_quote(b));
                }
                Expanded::Exp(b) => {
                    self.push("exp:");
                    self.bytes(&shell_quote(b));
                }
                Expanded::QuotedStr(b) => {
                    self.push("\"");
                    self.bytes(b);
                    self.push("\"");
                }
                Expanded::At { fields, quoted } => {
                    self.push(if *quoted { "\"@" } else { "@" });
                    for f in fields {
                        self.push(" ");
                        self.bytes(&shell_quote(f));
                    }
                    if *quoted {
                        self.push("\"");
                    }
                }
            }
        }
        self.push("]");
    }

    fn fields(&mut self, f: &[Bytes]) {
        self.push("[");
        for (i, x) in f.iter().enumerate() {
            if i > 0 {
                self.push(" ");
            }
            self.bytes(&single_quote(x));
        }
        self.push("]");
    }

    fn inter(&mut self, i: &IntermediateFields) {
        self.push("[");
        for (n, x) in i.iter().enumerate() {
            if n > 0 {
                self.push(" ");
            }
            match x {
                Inter::FieldSep => self.push("#"),
                Inter::Sep => self.push("␣"),
                Inter::Str(b) => self.bytes(&shell_quote(b)),
                Inter::QuotedStr(b) => {
                    self.push("\"");
                    self.bytes(b);
                    self.push("\"");
                }
            }
        }
        self.push("]");
    }

    fn expansion(&mut self, es: &ExpansionState) {
        match es {
            ExpansionState::Start(_, w) => {
                self.push("start ");
                self.word(w, Ctx::Plain);
            }
            ExpansionState::Expand(_, e, w) => {
                self.push("expand ");
                self.expanded(e);
                self.push(" ");
                self.word(w, Ctx::Plain);
            }
            ExpansionState::Split(_, e) => {
                self.push("split ");
                self.expanded(e);
            }
            ExpansionState::Path(_, i) => {
                self.push("path ");
                self.inter(i);
            }
            ExpansionState::Quote(_, i) => {
                self.push("quote ");
                self.inter(i);
            }
            ExpansionState::Error(f) => {
                self.push("error ");
                self.fields(f);
            }
            ExpansionState::Done(f) => {
                self.push("done ");
                self.fields(f);
            }
        }
    }

    fn assigns(&mut self, assigns: &[(Bytes, Word)]) {
        for (n, v) in assigns {
            self.push(" ");
            self.bytes(n);
            self.push("=");
            self.word(v, Ctx::Plain);
        }
    }

    fn env(&mut self, env: &[(Bytes, Bytes)]) {
        for (n, v) in env {
            self.push(" ");
            self.bytes(n);
            self.push("=");
            self.bytes(&shell_quote(v));
        }
    }

    fn saved(&mut self, s: &SavedFds) {
        if s.is_empty() {
            return;
        }
        self.push(" {");
        for (i, (fd, sv)) in s.iter().enumerate() {
            if i > 0 {
                self.push(",");
            }
            match sv {
                SavedFd::RestoreFrom(from) => self.push(&format!("{fd}<-{from}")),
                SavedFd::Close => self.push(&format!("{fd}:close")),
            }
        }
        self.push("}");
    }

    fn sub(&mut self, c: &Command) {
        let mut sub = Renderer::default();
        sub.command(c);
        sub.flush_heredocs_final();
        self.bytes(&sub.out);
    }

    fn runtime(&mut self, c: &Command) {
        use Command::*;
        self.push("⟨");
        self.push(form_name(c));
        match c {
            RedirExpand { cmd, state } => {
                self.push(&format!(" done={} todo={} ", state.done.len(), state.todo.len()));
                if let Some((_, es)) = &state.in_progress {
                    self.expansion(es);
                    self.push(" ");
                }
                self.sub(cmd);
            }
            CmdArgs { assigns, args, redirs, .. } => {
                self.assigns(assigns);
                self.push(" ");
                self.expansion(args);
                for r in redirs {
                    self.push(" ");
                    let mut sub = Renderer::default();
                    sub.redir(r);
                    self.bytes(&sub.out);
                }
            }
            CmdRedirs { assigns, fields, state, .. } => {
                self.assigns(assigns);
                self.push(" ");
                self.fields(fields);
                self.push(&format!(" done={}", state.done.len()));
                if let Some((_, es)) = &state.in_progress {
                    self.push(" ");
                    self.expansion(es);
                }
                self.push(&format!(" todo={}", state.todo.len()));
            }
            CmdAssigns { pending, fields, saved, .. } => {
                for (n, es) in pending {
                    self.push(" ");
                    self.bytes(n);
                    self.push("=(");
                    self.expansion(es);
                    self.push(")");
                }
                self.push(" ");
                self.fields(fields);
                self.saved(saved);
            }
            CmdReady { env, name, args, saved, .. } | Run { env, name, args, saved, .. } => {
                self.env(env);
                self.push(" ");
                self.bytes(&shell_quote(name));
                self.push(" ");
                self.fields(args);
                self.saved(saved);
            }
            WhileCond { cur, .. } | WhileBody { cur, .. } => {
                self.push(" ");
                self.sub(cur);
            }
            ForArgs { var, args, .. } => {
                self.push(" ");
                self.bytes(var);
                self.push(" ");
                self.expansion(args);
            }
            ForStart { var, fields, .. } => {
                self.push(" ");
                self.bytes(var);
                self.push(" ");
                self.fields(fields);
            }
            ForRunning { var, rest, cur, .. } => {
                self.push(" ");
                self.bytes(var);
                self.push(" ");
                self.fields(rest);
                self.push(" ");
                self.sub(cur);
            }
            CaseArg { scrutinee, .. } => {
                self.push(" ");
                self.expansion(scrutinee);
            }
            CaseMatch { value, branches } => {
                self.push(" ");
                self.bytes(&shell_quote(value));
                self.push(&format!(" branches={}", branches.len()));
            }
            CaseCheck { value, pattern, .. } => {
                self.push(" ");
                self.bytes(&shell_quote(value));
                self.push(" ");
                self.expansion(pattern);
            }
            Call { name, cur, .. } => {
                self.push(" ");
                self.bytes(name);
                self.push(" ");
                self.sub(cur);
            }
            Break(n) | Continue(n) => self.push(&format!(" {n}")),
            Return | Exit | Done => {}
            Redirs(cmd, saved) => {
                self.saved(saved);
                self.push(" ");
                self.sub(cmd);
            }
            EvalLoop(frame) => self.push(&format!(" {:?} line={}", frame.kind, frame.session.line())),
            EvalLoopCmd(frame, cmd) => {
                self.push(&format!(" {:?} line={} ", frame.kind, frame.session.line()));
                self.sub(cmd);
            }
            Exec { path, args, .. } => {
                self.push(" ");
                self.bytes(path);
                self.push(" ");
                self.fields(args);
            }
            Wait { pids, .. } => {
                for p in pids {
                    self.push(&format!(" {p}"));
                }
            }
            Trapped { signal, status, cont, .. } => {
                self.push(&format!(" {} status={status} ", signal.name()));
                self.sub(cont);
            }
            _ => unreachable!("source form in runtime renderer"),
        }
        self.push("⟩");
    }
}

fn is_compound(c: &Command) -> bool {
    matches!(
        c,
        Command::While { .. } | Command::For { .. } | Command::If { .. } | Command::Case { .. } | Command::Subshell(_)
    )
}

fn heredoc_delimiter(body: &[u8]) -> Bytes {
    let lines: Vec<&[u8]> = body.split(|c| *c == b'\n').collect();
    let mut n = 0;
    loop {
        let cand = if n == 0 { b"EOF".to_vec() } else { format!("EOF{n}").into_bytes() };
        if !lines.contains(&cand.as_slice()) {
            return cand;
        }
        n += 1;
    }
}

/// Render a word list for messages (xtrace, `set`): fields joined by spaces.
pub fn render_fields(f: &[Bytes]) -> Bytes {
    let mut out = Vec::new();
    for (i, x) in f.iter().enumerate() {
        if i > 0 {
            out.push(b' ');
        }
        out.extend_from_slice(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(s: &str) -> WordPart {
        WordPart::Lit(s.as_bytes().to_vec())
    }

    fn simple(words: Word) -> Command {
        Command::Simple { assigns: vec![], words, redirs: vec![] }
    }

    #[test]
    fn renders_negation() {
        let c = Command::Not(Box::new(simple(vec![lit("true")])));
        assert_eq!(render_string(&c), "! true");
    }

    #[test]
    fn renders_assignment_and_redirect() {
        let c = Command::Simple {
            assigns: vec![(b"x".to_vec(), vec![lit("5")])],
            words: vec![lit("echo"), WordPart::Sep, lit("hi")],
            redirs: vec![Redirection::File { fd: 1, mode: FileMode::Write, target: vec![lit("f")] }],
        };
        assert_eq!(render_string(&c), "x=5 echo hi >f");
    }

    #[test]
    fn quoted_literals_prefer_single_quotes() {
        let w = vec![WordPart::Ctrl(Control::Quoted(vec![lit("a b")]))];
        assert_eq!(render_word(&w), b"'a b'");
        let w = vec![WordPart::Ctrl(Control::Quoted(vec![lit("it's")]))];
        assert_eq!(render_word(&w), b"\"it's\"");
    }

    #[test]
    fn shell_quote_escapes_single_quote() {
        assert_eq!(shell_quote(b"a'b"), b"'a'\\''b'");
        assert_eq!(shell_quote(b"plain"), b"plain");
        assert_eq!(shell_quote(b""), b"''");
    }

    #[test]
    fn runtime_forms_render_bracketed() {
        assert_eq!(render_string(&Command::Done), "⟨Done⟩");
        assert_eq!(render_string(&Command::Break(2)), "⟨Break 2⟩");
    }

    #[test]
    fn names() {
        assert!(is_name(b"_x1"));
        assert!(!is_name(b"1x"));
        assert!(!is_name(b""));
        assert!(!is_name(b"a-b"));
    }
}
