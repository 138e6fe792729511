//! Incremental lexer and recursive-descent parser for POSIX shell syntax.
//!
//! `ParseSession::parse_next` yields one complete command (a newline
//! terminated list) at a time. When the buffered input ends inside a
//! construct, a stream session fetches another line and reparses.

use std::collections::BTreeMap;

use crate::arith::{ArithError, ArithExpr};
use crate::ast::*;
use crate::os::{LineRead, Os};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseResult {
    Complete(Command),
    Blank,
    Eof,
    SyntaxError(String),
    /// Input is not available yet (symbolic pipes only).
    Blocked(Pid),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum InputSource {
    Bytes,
    Stream(Fd),
}

/// Parser state carried between calls: unconsumed input and line count.
#[derive(Clone, Debug)]
pub struct ParseSession {
    source: InputSource,
    buf: Bytes,
    pos: usize,
    eof: bool,
    line: usize,
    pub interactive: bool,
    pub aliases_enabled: bool,
}

impl ParseSession {
    pub fn from_bytes(src: impl Into<Bytes>) -> Self {
        ParseSession {
            source: InputSource::Bytes,
            buf: src.into(),
            pos: 0,
            eof: true,
            line: 1,
            interactive: false,
            aliases_enabled: true,
        }
    }

    pub fn from_fd(fd: Fd) -> Self {
        ParseSession {
            source: InputSource::Stream(fd),
            buf: Vec::new(),
            pos: 0,
            eof: false,
            line: 1,
            interactive: false,
            aliases_enabled: true,
        }
    }

    pub fn line(&self) -> usize {
        self.line
    }

    fn fetch_line(&mut self, os: &mut dyn Os, prompt: &[u8]) -> Result<bool, Pid> {
        let fd = match self.source {
            InputSource::Stream(fd) => fd,
            InputSource::Bytes => return Ok(false),
        };
        if self.eof {
            return Ok(false);
        }
        if self.interactive {
            let _ = os.write_all(2, prompt);
        }
        match os.read_line(fd, false) {
            Ok(LineRead::Line { data, terminated }) => {
                self.buf.extend_from_slice(&data);
                if terminated {
                    self.buf.push(b'\n');
                } else {
                    self.eof = true;
                }
                Ok(true)
            }
            Ok(LineRead::Blocked(pid)) => Err(pid),
            Ok(LineRead::Eof) | Err(_) => {
                self.eof = true;
                Ok(false)
            }
        }
    }

    /// Parse the next complete command.
    pub fn parse_next(
        &mut self,
        os: &mut dyn Os,
        aliases: &BTreeMap<Bytes, Bytes>,
        ps1: &[u8],
        ps2: &[u8],
    ) -> ParseResult {
        os.set_ps1(ps1);
        os.set_ps2(ps2);
        let mut fetched_any = false;
        loop {
            if self.pos >= self.buf.len() {
                self.buf.clear();
                self.pos = 0;
                match self.fetch_line(os, ps1) {
                    Ok(true) => fetched_any = true,
                    Ok(false) => return ParseResult::Eof,
                    Err(pid) => return ParseResult::Blocked(pid),
                }
            }
            let aliases_used = if self.aliases_enabled { Some(aliases) } else { None };
            let mut p = Parser::new(self.buf[self.pos..].to_vec(), self.line, aliases_used);
            match p.complete_command() {
                Ok(cmd) => {
                    let consumed = p.consumed_original();
                    self.pos += consumed;
                    self.line = p.line;
                    return match cmd {
                        Some(c) => ParseResult::Complete(c),
                        None => ParseResult::Blank,
                    };
                }
                Err(PErr::Incomplete) if !self.eof => {
                    let _ = fetched_any;
                    match self.fetch_line(os, ps2) {
                        Ok(true) => {}
                        Ok(false) => {}
                        Err(pid) => return ParseResult::Blocked(pid),
                    }
                }
                Err(PErr::Incomplete) => {
                    let line = p.line;
                    self.pos = self.buf.len();
                    return ParseResult::SyntaxError(format!("{line}: syntax error: unexpected end of file"));
                }
                Err(PErr::Syntax(msg, line)) => {
                    // Discard the rest of the offending line.
                    let rest = &self.buf[self.pos..];
                    let skip = rest.iter().position(|c| *c == b'\n').map_or(rest.len(), |i| i + 1);
                    self.pos += skip;
                    self.line += 1;
                    return ParseResult::SyntaxError(format!("{line}: syntax error: {msg}"));
                }
            }
        }
    }
}

/// Parse a whole program from a string. Aliases are not expanded.
pub fn parse_program(src: &[u8]) -> Result<Vec<Command>, String> {
    let mut p = Parser::new(src.to_vec(), 1, None);
    let mut out = Vec::new();
    loop {
        if p.at_end() {
            return Ok(out);
        }
        match p.complete_command() {
            Ok(Some(c)) => out.push(c),
            Ok(None) => {}
            Err(PErr::Incomplete) => return Err(format!("{}: syntax error: unexpected end of file", p.line)),
            Err(PErr::Syntax(m, line)) => return Err(format!("{line}: syntax error: {m}")),
        }
    }
}

/// Parse a program into a single command (sequenced).
pub fn parse_one(src: &[u8]) -> Result<Command, String> {
    let cmds = parse_program(src)?;
    let mut it = cmds.into_iter().rev();
    let mut acc = match it.next() {
        Some(c) => c,
        None => return Ok(empty_command()),
    };
    for c in it {
        acc = Command::seq(c, acc);
    }
    Ok(acc)
}

/// Parse the expanded body of an arithmetic expansion.
pub fn parse_arithmetic(src: &[u8]) -> Result<ArithExpr, ArithError> {
    crate::arith::parse(src)
}

/// The command with no words, assignments or redirections.
pub fn empty_command() -> Command {
    Command::Simple { assigns: vec![], words: vec![], redirs: vec![] }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum PErr {
    Incomplete,
    Syntax(String, usize),
}

type PResult<T> = Result<T, PErr>;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Word(Word),
    IoNumber(Fd),
    Op(&'static str),
    Newline,
    Eof,
}

const OPERATORS: &[&str] =
    &["&&", "||", ";;", "<<-", "<<", ">>", "<&", ">&", "<>", ">|", "|", "&", ";", "<", ">", "(", ")"];

#[derive(Clone, Debug)]
struct PendingHere {
    delim: Bytes,
    strip_tabs: bool,
    expand: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum WordMode {
    Normal,
    DQuote,
    Brace { in_dq: bool },
    Arith,
    Heredoc,
}

struct Parser<'a> {
    buf: Bytes,
    pos: usize,
    /// Net growth of `buf` from alias splices, to map positions back.
    shift: isize,
    peeked: Option<(Tok, usize, usize)>,
    aliases: Option<&'a BTreeMap<Bytes, Bytes>>,
    active_aliases: Vec<(Bytes, usize)>,
    alias_next: bool,
    pending: Vec<PendingHere>,
    bodies: Vec<Word>,
    line: usize,
    depth: usize,
}

fn is_meta(c: u8) -> bool {
    matches!(c, b'|' | b'&' | b';' | b'<' | b'>' | b'(' | b')' | b' ' | b'\t' | b'\n')
}

struct WordBuilder {
    parts: Word,
    lit: Bytes,
}

impl WordBuilder {
    fn new() -> Self {
        WordBuilder { parts: Vec::new(), lit: Vec::new() }
    }

    fn byte(&mut self, c: u8) {
        self.lit.push(c);
    }

    fn flush(&mut self) {
        if !self.lit.is_empty() {
            self.parts.push(WordPart::Lit(std::mem::take(&mut self.lit)));
        }
    }

    fn part(&mut self, p: WordPart) {
        self.flush();
        self.parts.push(p);
    }

    fn finish(mut self) -> Word {
        self.flush();
        self.parts
    }
}

fn plain_text(w: &Word) -> Option<&[u8]> {
    match w.as_slice() {
        [WordPart::Lit(b)] => Some(b),
        _ => None,
    }
}

fn quoted_lit(b: &[u8]) -> WordPart {
    if b.is_empty() {
        WordPart::Ctrl(Control::Quoted(vec![]))
    } else {
        WordPart::Ctrl(Control::Quoted(vec![WordPart::Lit(b.to_vec())]))
    }
}

/// Split `NAME=value` words into an assignment.
fn as_assignment(w: &Word) -> Option<(Bytes, Word)> {
    let WordPart::Lit(first) = w.first()? else { return None };
    let eq = first.iter().position(|c| *c == b'=')?;
    let name = &first[..eq];
    if !is_name(name) {
        return None;
    }
    let mut value = Vec::new();
    if eq + 1 < first.len() {
        value.push(WordPart::Lit(first[eq + 1..].to_vec()));
    }
    value.extend_from_slice(&w[1..]);
    Some((name.to_vec(), tilde_expand_word(value, true)))
}

fn valid_login_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'_' | b'-' | b'.')
}

/// Recognize tilde prefixes at word start (and after `:` in assignments).
fn tilde_expand_word(w: Word, assignment: bool) -> Word {
    let mut out: Word = Vec::new();
    let n = w.len();
    for (idx, part) in w.into_iter().enumerate() {
        let at_start = idx == 0;
        let followed_by_other = idx + 1 < n;
        match part {
            WordPart::Lit(text) if at_start || assignment => {
                out.extend(split_tildes(&text, at_start, assignment, followed_by_other));
            }
            other => out.push(other),
        }
    }
    out
}

fn split_tildes(text: &[u8], at_start: bool, assignment: bool, followed_by_other: bool) -> Word {
    let mut out = Vec::new();
    let mut lit = Vec::new();
    let mut i = 0;
    // Positions where a tilde prefix may start.
    let mut can_start = at_start;
    while i < text.len() {
        if can_start && text[i] == b'~' {
            let stop = |c: u8| c == b'/' || (assignment && c == b':');
            let end = text[i + 1..].iter().position(|c| stop(*c)).map_or(text.len(), |p| i + 1 + p);
            let prefix = &text[i + 1..end];
            let reaches_end = end == text.len();
            if (!reaches_end || !followed_by_other) && prefix.iter().all(|c| valid_login_char(*c)) {
                if !lit.is_empty() {
                    out.push(WordPart::Lit(std::mem::take(&mut lit)));
                }
                let p = if prefix.is_empty() { None } else { Some(prefix.to_vec()) };
                out.push(WordPart::Ctrl(Control::Tilde(p)));
                i = end;
                can_start = false;
                continue;
            }
        }
        can_start = assignment && text[i] == b':';
        lit.push(text[i]);
        i += 1;
    }
    if !lit.is_empty() {
        out.push(WordPart::Lit(lit));
    }
    out
}

impl<'a> Parser<'a> {
    fn new(buf: Bytes, line: usize, aliases: Option<&'a BTreeMap<Bytes, Bytes>>) -> Self {
        Parser {
            buf,
            pos: 0,
            shift: 0,
            peeked: None,
            aliases,
            active_aliases: Vec::new(),
            alias_next: false,
            pending: Vec::new(),
            bodies: Vec::new(),
            line,
            depth: 0,
        }
    }

    fn consumed_original(&self) -> usize {
        let p = match &self.peeked {
            Some((_, start, _)) => *start,
            None => self.pos,
        };
        (p as isize - self.shift).max(0) as usize
    }

    fn at_end(&mut self) -> bool {
        matches!(self.peek(), Ok(Tok::Eof))
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(PErr::Syntax(msg.into(), self.line))
    }

    fn unexpected<T>(&self, t: &Tok) -> PResult<T> {
        match t {
            Tok::Eof => Err(PErr::Incomplete),
            Tok::Newline => self.err("unexpected newline"),
            Tok::Op(op) => self.err(format!("unexpected \"{op}\"")),
            Tok::IoNumber(n) => self.err(format!("unexpected \"{n}\"")),
            Tok::Word(w) => self.err(format!("unexpected \"{}\"", String::from_utf8_lossy(&render_word(w)))),
        }
    }

    // ---- lexing ----

    fn peek(&mut self) -> PResult<Tok> {
        if self.peeked.is_none() {
            let start_hint = self.pos;
            let t = self.lex_token()?;
            let _ = start_hint;
            self.peeked = Some(t);
        }
        Ok(self.peeked.as_ref().expect("peeked").0.clone())
    }

    fn next(&mut self) -> PResult<Tok> {
        self.peek()?;
        Ok(self.peeked.take().expect("peeked").0)
    }

    fn peek_reserved(&mut self) -> PResult<Option<Bytes>> {
        match self.peek()? {
            Tok::Word(w) => Ok(plain_text(&w).filter(|t| is_reserved(t)).map(|t| t.to_vec())),
            _ => Ok(None),
        }
    }

    fn is_reserved_next(&mut self, kw: &str) -> PResult<bool> {
        Ok(self.peek_reserved()?.as_deref() == Some(kw.as_bytes()))
    }

    fn expect_reserved(&mut self, kw: &str) -> PResult<()> {
        if self.is_reserved_next(kw)? {
            self.next()?;
            Ok(())
        } else {
            let t = self.peek()?;
            match t {
                Tok::Eof => Err(PErr::Incomplete),
                _ => self.err(format!("expected \"{kw}\"")),
            }
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        match self.next()? {
            Tok::Op(o) if o == op => Ok(()),
            Tok::Eof => Err(PErr::Incomplete),
            t => self.unexpected(&t),
        }
    }

    fn skip_newlines(&mut self) -> PResult<()> {
        while self.peek()? == Tok::Newline {
            self.next()?;
        }
        Ok(())
    }

    fn skip_blank(&mut self) {
        loop {
            match self.buf.get(self.pos) {
                Some(b' ') | Some(b'\t') => self.pos += 1,
                Some(b'\\') if self.buf.get(self.pos + 1) == Some(&b'\n') => {
                    self.pos += 2;
                    self.line += 1;
                }
                Some(b'#') => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn lex_token(&mut self) -> PResult<(Tok, usize, usize)> {
        self.skip_blank();
        let start = self.pos;
        if self.pos >= self.buf.len() {
            return Ok((Tok::Eof, start, start));
        }
        let c = self.buf[self.pos];
        if c == b'\n' {
            self.pos += 1;
            self.line += 1;
            self.read_heredoc_bodies()?;
            return Ok((Tok::Newline, start, self.pos));
        }
        if matches!(c, b'|' | b'&' | b';' | b'<' | b'>' | b'(' | b')') {
            let op = OPERATORS
                .iter()
                .find(|op| self.buf[self.pos..].starts_with(op.as_bytes()))
                .expect("operator prefix");
            self.pos += op.len();
            return Ok((Tok::Op(op), start, self.pos));
        }
        let w = self.lex_word(WordMode::Normal)?;
        if let Some(t) = plain_text(&w) {
            if t.iter().all(u8::is_ascii_digit) && matches!(self.buf.get(self.pos), Some(b'<') | Some(b'>')) {
                if let Ok(n) = std::str::from_utf8(t).unwrap_or("x").parse::<Fd>() {
                    return Ok((Tok::IoNumber(n), start, self.pos));
                }
            }
        }
        Ok((Tok::Word(w), start, self.pos))
    }

    fn incomplete_or<T>(&self, msg: &str) -> PResult<T> {
        let _ = msg;
        Err(PErr::Incomplete)
    }

    fn lex_word(&mut self, mode: WordMode) -> PResult<Word> {
        let mut b = WordBuilder::new();
        let mut paren_depth = 0usize;
        loop {
            let Some(&c) = self.buf.get(self.pos) else {
                return match mode {
                    WordMode::Normal | WordMode::Heredoc => Ok(b.finish()),
                    _ => self.incomplete_or("unterminated word"),
                };
            };
            match mode {
                WordMode::Normal if is_meta(c) => return Ok(b.finish()),
                WordMode::DQuote if c == b'"' => {
                    self.pos += 1;
                    return Ok(b.finish());
                }
                WordMode::Brace { .. } if c == b'}' => {
                    self.pos += 1;
                    return Ok(b.finish());
                }
                WordMode::Arith if c == b')' => {
                    if paren_depth == 0 {
                        if self.buf.get(self.pos + 1) == Some(&b')') {
                            self.pos += 2;
                            return Ok(b.finish());
                        }
                        return self.err("not arithmetic");
                    }
                    paren_depth -= 1;
                    b.byte(c);
                    self.pos += 1;
                    continue;
                }
                WordMode::Arith if c == b'(' => {
                    paren_depth += 1;
                    b.byte(c);
                    self.pos += 1;
                    continue;
                }
                _ => {}
            }
            match c {
                b'\\' => {
                    let Some(&n) = self.buf.get(self.pos + 1) else {
                        if matches!(mode, WordMode::Normal | WordMode::Heredoc) {
                            b.byte(b'\\');
                            self.pos += 1;
                            continue;
                        }
                        return self.incomplete_or("trailing backslash");
                    };
                    if n == b'\n' {
                        self.pos += 2;
                        self.line += 1;
                        continue;
                    }
                    let escapable = match mode {
                        WordMode::Normal | WordMode::Arith => true,
                        WordMode::Brace { in_dq: false } => true,
                        WordMode::DQuote | WordMode::Brace { in_dq: true } => {
                            matches!(n, b'$' | b'`' | b'"' | b'\\') || (n == b'}' && matches!(mode, WordMode::Brace { .. }))
                        }
                        WordMode::Heredoc => matches!(n, b'$' | b'`' | b'\\'),
                    };
                    if !escapable {
                        b.byte(b'\\');
                        self.pos += 1;
                        continue;
                    }
                    self.pos += 2;
                    match mode {
                        WordMode::DQuote | WordMode::Heredoc | WordMode::Brace { in_dq: true } => b.byte(n),
                        _ => b.part(quoted_lit(&[n])),
                    }
                }
                b'\'' if matches!(mode, WordMode::Normal | WordMode::Arith | WordMode::Brace { in_dq: false }) => {
                    let start = self.pos + 1;
                    let Some(len) = self.buf[start..].iter().position(|c| *c == b'\'') else {
                        return self.incomplete_or("unterminated quote");
                    };
                    let text = self.buf[start..start + len].to_vec();
                    self.line += text.iter().filter(|c| **c == b'\n').count();
                    self.pos = start + len + 1;
                    b.part(quoted_lit(&text));
                }
                b'"' if matches!(mode, WordMode::Normal | WordMode::Arith | WordMode::Brace { .. }) => {
                    self.pos += 1;
                    let inner = self.lex_word(WordMode::DQuote)?;
                    b.part(WordPart::Ctrl(Control::Quoted(inner)));
                }
                b'$' => {
                    let in_dq = matches!(mode, WordMode::DQuote | WordMode::Heredoc | WordMode::Brace { in_dq: true });
                    match self.lex_dollar(in_dq)? {
                        Some(p) => b.part(p),
                        None => {
                            b.byte(b'$');
                            self.pos += 1;
                        }
                    }
                }
                b'`' => {
                    let in_dq = matches!(mode, WordMode::DQuote | WordMode::Brace { in_dq: true });
                    let p = self.lex_backquote(in_dq)?;
                    b.part(p);
                }
                b'\n' => {
                    self.line += 1;
                    b.byte(c);
                    self.pos += 1;
                }
                _ => {
                    b.byte(c);
                    self.pos += 1;
                }
            }
        }
    }

    /// At `$`; returns `None` when the dollar is literal.
    fn lex_dollar(&mut self, in_dq: bool) -> PResult<Option<WordPart>> {
        let next = self.buf.get(self.pos + 1).copied();
        match next {
            Some(b'(') => {
                if self.buf.get(self.pos + 2) == Some(&b'(') {
                    let save = (self.pos, self.line);
                    self.pos += 3;
                    match self.lex_word(WordMode::Arith) {
                        Ok(w) => return Ok(Some(WordPart::Ctrl(Control::Arith(w)))),
                        Err(PErr::Syntax(..)) => {
                            self.pos = save.0;
                            self.line = save.1;
                        }
                        Err(e) => return Err(e),
                    }
                }
                self.pos += 2;
                let c = self.subst_body()?;
                Ok(Some(WordPart::Ctrl(Control::CmdSubst(Box::new(c)))))
            }
            Some(b'{') => {
                self.pos += 2;
                self.lex_brace_param(in_dq).map(Some)
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos + 1;
                let mut end = start;
                while end < self.buf.len() && (self.buf[end].is_ascii_alphanumeric() || self.buf[end] == b'_') {
                    end += 1;
                }
                let name = self.buf[start..end].to_vec();
                self.pos = end;
                Ok(Some(WordPart::Ctrl(Control::Param(name, ParamFormat::Normal))))
            }
            Some(c) if c.is_ascii_digit() || b"@*#?-$!".contains(&c) => {
                self.pos += 2;
                Ok(Some(WordPart::Ctrl(Control::Param(vec![c], ParamFormat::Normal))))
            }
            _ => Ok(None),
        }
    }

    fn lex_brace_param(&mut self, in_dq: bool) -> PResult<WordPart> {
        let at = |p: &Self, i: usize| p.buf.get(p.pos + i).copied();
        let param_start = |c: u8| c.is_ascii_alphanumeric() || c == b'_' || b"@*#?-$!".contains(&c);
        // `${#...}`: length, or the parameter `#` itself.
        if at(self, 0) == Some(b'#') {
            match at(self, 1) {
                Some(b'}') => {
                    self.pos += 2;
                    return Ok(WordPart::Ctrl(Control::Param(b"#".to_vec(), ParamFormat::Normal)));
                }
                Some(c) if param_start(c) => {
                    let save = self.pos;
                    self.pos += 1;
                    let name = self.param_name()?;
                    if at(self, 0) == Some(b'}') {
                        self.pos += 1;
                        return Ok(WordPart::Ctrl(Control::Param(name, ParamFormat::Length)));
                    }
                    self.pos = save;
                }
                None => return Err(PErr::Incomplete),
                _ => {}
            }
        }
        let name = self.param_name()?;
        let Some(c) = at(self, 0) else { return Err(PErr::Incomplete) };
        let fmt = match c {
            b'}' => {
                self.pos += 1;
                return Ok(WordPart::Ctrl(Control::Param(name, ParamFormat::Normal)));
            }
            b':' => {
                let Some(op) = at(self, 1) else { return Err(PErr::Incomplete) };
                if !b"-=?+".contains(&op) {
                    return self.err("bad substitution");
                }
                self.pos += 2;
                let w = self.lex_word(WordMode::Brace { in_dq })?;
                match op {
                    b'-' => ParamFormat::Default(NullMode::UnsetOrNull, w),
                    b'=' => ParamFormat::Assign(NullMode::UnsetOrNull, w),
                    b'?' => ParamFormat::Error(NullMode::UnsetOrNull, w),
                    _ => ParamFormat::Alt(NullMode::UnsetOrNull, w),
                }
            }
            b'-' | b'=' | b'?' | b'+' => {
                self.pos += 1;
                let w = self.lex_word(WordMode::Brace { in_dq })?;
                match c {
                    b'-' => ParamFormat::Default(NullMode::Unset, w),
                    b'=' => ParamFormat::Assign(NullMode::Unset, w),
                    b'?' => ParamFormat::Error(NullMode::Unset, w),
                    _ => ParamFormat::Alt(NullMode::Unset, w),
                }
            }
            b'#' | b'%' => {
                let side = if c == b'#' { Side::Prefix } else { Side::Suffix };
                let mode = if at(self, 1) == Some(c) {
                    self.pos += 2;
                    Mode::Longest
                } else {
                    self.pos += 1;
                    Mode::Shortest
                };
                let w = self.lex_word(WordMode::Brace { in_dq })?;
                ParamFormat::Sub(side, mode, w)
            }
            _ => return self.err("bad substitution"),
        };
        Ok(WordPart::Ctrl(Control::Param(name, fmt)))
    }

    fn param_name(&mut self) -> PResult<Bytes> {
        let Some(&c) = self.buf.get(self.pos) else { return Err(PErr::Incomplete) };
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < self.buf.len() && (self.buf[self.pos].is_ascii_alphanumeric() || self.buf[self.pos] == b'_') {
                self.pos += 1;
            }
            Ok(self.buf[start..self.pos].to_vec())
        } else if c.is_ascii_digit() {
            let start = self.pos;
            while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            Ok(self.buf[start..self.pos].to_vec())
        } else if b"@*#?-$!".contains(&c) {
            self.pos += 1;
            Ok(vec![c])
        } else {
            self.err("bad substitution")
        }
    }

    /// Body of `$( ... )`, with the cursor just past `$(`.
    fn subst_body(&mut self) -> PResult<Command> {
        self.depth += 1;
        if self.depth > 200 {
            return self.err("nesting too deep");
        }
        let outer_pending = std::mem::take(&mut self.pending);
        let outer_bodies = std::mem::take(&mut self.bodies);
        self.skip_newlines()?;
        let cmd = if self.peek()? == Tok::Op(")") {
            empty_command()
        } else {
            self.compound_list()?
        };
        self.expect_op(")")?;
        if !self.pending.is_empty() {
            return self.err("heredoc not terminated inside command substitution");
        }
        let mut cmd = cmd;
        let bodies = std::mem::replace(&mut self.bodies, outer_bodies);
        fill_heredocs(&mut cmd, &mut bodies.into_iter());
        self.pending = outer_pending;
        self.depth -= 1;
        Ok(cmd)
    }

    fn lex_backquote(&mut self, in_dq: bool) -> PResult<WordPart> {
        let mut i = self.pos + 1;
        let mut inner = Vec::new();
        loop {
            let Some(&c) = self.buf.get(i) else { return Err(PErr::Incomplete) };
            match c {
                b'`' => break,
                b'\\' => {
                    let Some(&n) = self.buf.get(i + 1) else { return Err(PErr::Incomplete) };
                    if matches!(n, b'$' | b'`' | b'\\') || (in_dq && n == b'"') {
                        inner.push(n);
                    } else {
                        inner.push(b'\\');
                        inner.push(n);
                    }
                    i += 2;
                }
                _ => {
                    inner.push(c);
                    i += 1;
                }
            }
        }
        self.line += self.buf[self.pos..i].iter().filter(|c| **c == b'\n').count();
        self.pos = i + 1;
        let mut sub = Parser::new(inner, self.line, self.aliases);
        let mut cmds = Vec::new();
        loop {
            match sub.peek() {
                Ok(Tok::Eof) => break,
                Ok(_) => {}
                Err(e) => return Err(relabel(e, self.line)),
            }
            match sub.complete_command() {
                Ok(Some(c)) => cmds.push(c),
                Ok(None) => {}
                Err(e) => return Err(relabel(e, self.line)),
            }
        }
        let mut it = cmds.into_iter().rev();
        let mut acc = it.next().unwrap_or_else(empty_command);
        for c in it {
            acc = Command::seq(c, acc);
        }
        Ok(WordPart::Ctrl(Control::CmdSubst(Box::new(acc))))
    }

    fn read_heredoc_bodies(&mut self) -> PResult<()> {
        let pending = std::mem::take(&mut self.pending);
        for h in pending {
            let mut body = Vec::new();
            loop {
                if self.pos >= self.buf.len() {
                    return Err(PErr::Incomplete);
                }
                let rest = &self.buf[self.pos..];
                let (line, advance, had_nl) = match rest.iter().position(|c| *c == b'\n') {
                    Some(i) => (&rest[..i], i + 1, true),
                    None => (rest, rest.len(), false),
                };
                let mut l: &[u8] = line;
                if h.strip_tabs {
                    while l.first() == Some(&b'\t') {
                        l = &l[1..];
                    }
                }
                let l = l.to_vec();
                if !had_nl && l != h.delim {
                    return Err(PErr::Incomplete);
                }
                self.pos += advance;
                self.line += 1;
                if l == h.delim {
                    break;
                }
                body.extend_from_slice(&l);
                body.push(b'\n');
            }
            let word = if h.expand {
                let mut sub = Parser::new(body, self.line, self.aliases);
                sub.lex_word(WordMode::Heredoc).map_err(|e| relabel(e, self.line))?
            } else if body.is_empty() {
                Vec::new()
            } else {
                vec![WordPart::Lit(body)]
            };
            self.bodies.push(word);
        }
        Ok(())
    }

    // ---- grammar ----

    fn complete_command(&mut self) -> PResult<Option<Command>> {
        match self.peek()? {
            Tok::Newline => {
                self.next()?;
                return Ok(None);
            }
            Tok::Eof => return Ok(None),
            _ => {}
        }
        let mut cmd = self.list()?;
        match self.next()? {
            Tok::Newline | Tok::Eof => {}
            t => return self.unexpected(&t),
        }
        if !self.pending.is_empty() {
            return Err(PErr::Incomplete);
        }
        let bodies = std::mem::take(&mut self.bodies);
        fill_heredocs(&mut cmd, &mut bodies.into_iter());
        Ok(Some(cmd))
    }

    fn list(&mut self) -> PResult<Command> {
        let mut items = Vec::new();
        loop {
            let ao = self.and_or()?;
            match self.peek()? {
                Tok::Op(";") => {
                    self.next()?;
                    items.push(ao);
                }
                Tok::Op("&") => {
                    self.next()?;
                    items.push(Command::Background(Box::new(ao)));
                }
                _ => {
                    items.push(ao);
                    break;
                }
            }
            if matches!(self.peek()?, Tok::Newline | Tok::Eof) {
                break;
            }
        }
        Ok(fold_seq(items))
    }

    fn at_list_terminator(&mut self) -> PResult<bool> {
        Ok(match self.peek()? {
            Tok::Eof | Tok::Op(")") | Tok::Op(";;") => true,
            Tok::Word(w) => matches!(
                plain_text(&w),
                Some(b"}" | b"then" | b"else" | b"elif" | b"fi" | b"do" | b"done" | b"esac")
            ),
            _ => false,
        })
    }

    fn compound_list(&mut self) -> PResult<Command> {
        self.skip_newlines()?;
        let mut items = Vec::new();
        loop {
            if self.at_list_terminator()? {
                break;
            }
            let ao = self.and_or()?;
            match self.peek()? {
                Tok::Op(";") => {
                    self.next()?;
                    items.push(ao);
                    self.skip_newlines()?;
                }
                Tok::Op("&") => {
                    self.next()?;
                    items.push(Command::Background(Box::new(ao)));
                    self.skip_newlines()?;
                }
                Tok::Newline => {
                    items.push(ao);
                    self.skip_newlines()?;
                }
                _ => {
                    items.push(ao);
                    break;
                }
            }
        }
        if items.is_empty() {
            let t = self.peek()?;
            return self.unexpected(&t);
        }
        Ok(fold_seq(items))
    }

    fn and_or(&mut self) -> PResult<Command> {
        let mut left = self.pipeline()?;
        loop {
            match self.peek()? {
                Tok::Op("&&") => {
                    self.next()?;
                    self.skip_newlines()?;
                    let right = self.pipeline()?;
                    left = Command::And(Box::new(left), Box::new(right));
                }
                Tok::Op("||") => {
                    self.next()?;
                    self.skip_newlines()?;
                    let right = self.pipeline()?;
                    left = Command::Or(Box::new(left), Box::new(right));
                }
                _ => return Ok(left),
            }
        }
    }

    fn pipeline(&mut self) -> PResult<Command> {
        let bang = self.is_reserved_next("!")?;
        if bang {
            self.next()?;
        }
        let mut cmds = vec![self.command()?];
        while self.peek()? == Tok::Op("|") {
            self.next()?;
            self.skip_newlines()?;
            cmds.push(self.command()?);
        }
        let p = if cmds.len() == 1 {
            cmds.pop().expect("one command")
        } else {
            Command::Pipeline { commands: cmds, background: false }
        };
        Ok(if bang { Command::Not(Box::new(p)) } else { p })
    }

    /// Substitute an alias for the peeked word if one applies.
    fn try_alias(&mut self) -> PResult<bool> {
        let Some(aliases) = self.aliases else { return Ok(false) };
        let Some((Tok::Word(w), start, end)) = self.peeked.clone() else { return Ok(false) };
        let Some(name) = plain_text(&w) else { return Ok(false) };
        let Some(value) = aliases.get(name) else { return Ok(false) };
        self.active_aliases.retain(|(_, e)| *e > start);
        if self.active_aliases.iter().any(|(n, _)| n.as_slice() == name) {
            return Ok(false);
        }
        let name = name.to_vec();
        let value = value.clone();
        let delta = value.len() as isize - (end - start) as isize;
        self.buf.splice(start..end, value.iter().copied());
        for (_, e) in self.active_aliases.iter_mut() {
            if *e > start {
                *e = (*e as isize + delta) as usize;
            }
        }
        self.active_aliases.push((name, start + value.len()));
        self.shift += delta;
        self.pos = start;
        self.peeked = None;
        self.alias_next = value.last().is_some_and(|c| *c == b' ' || *c == b'\t');
        Ok(true)
    }

    fn command(&mut self) -> PResult<Command> {
        self.depth += 1;
        if self.depth > 500 {
            return self.err("nesting too deep");
        }
        self.peek()?;
        let mut guard = 0;
        while self.try_alias()? {
            self.peek()?;
            guard += 1;
            if guard > 100 {
                break;
            }
        }
        let tok = self.peek()?;
        let cmd = match &tok {
            Tok::Word(w) => match plain_text(w) {
                Some(b"{") => {
                    self.next()?;
                    let body = self.compound_list()?;
                    self.expect_reserved("}")?;
                    self.redirected(body)?
                }
                Some(b"if") => {
                    self.next()?;
                    let c = self.if_rest()?;
                    self.redirected(c)?
                }
                Some(b"while") | Some(b"until") => {
                    let until = plain_text(w) == Some(b"until");
                    self.next()?;
                    let cond = self.compound_list()?;
                    self.expect_reserved("do")?;
                    let body = self.compound_list()?;
                    self.expect_reserved("done")?;
                    let cond = if until { Command::Not(Box::new(cond)) } else { cond };
                    self.redirected(Command::While { cond: Box::new(cond), body: Box::new(body) })?
                }
                Some(b"for") => {
                    self.next()?;
                    let c = self.for_rest()?;
                    self.redirected(c)?
                }
                Some(b"case") => {
                    self.next()?;
                    let c = self.case_rest()?;
                    self.redirected(c)?
                }
                Some(t) if is_reserved(t) => return self.unexpected(&tok),
                _ => self.simple()?,
            },
            Tok::Op("(") => {
                self.next()?;
                let body = self.compound_list()?;
                self.expect_op(")")?;
                self.redirected(Command::Subshell(Box::new(body)))?
            }
            Tok::Op(op) if is_redirect_op(op) => self.simple()?,
            Tok::IoNumber(_) => self.simple()?,
            _ => return self.unexpected(&tok),
        };
        self.depth -= 1;
        Ok(cmd)
    }

    fn redirected(&mut self, c: Command) -> PResult<Command> {
        let mut redirs = Vec::new();
        loop {
            match self.peek()? {
                Tok::IoNumber(n) => {
                    self.next()?;
                    redirs.push(self.redirect(Some(n))?);
                }
                Tok::Op(op) if is_redirect_op(op) => redirs.push(self.redirect(None)?),
                _ => break,
            }
        }
        Ok(if redirs.is_empty() { c } else { Command::Redirected(Box::new(c), redirs) })
    }

    fn if_rest(&mut self) -> PResult<Command> {
        let cond = self.compound_list()?;
        self.expect_reserved("then")?;
        let then = self.compound_list()?;
        let otherwise = match self.peek_reserved()?.as_deref() {
            Some(b"elif") => {
                self.next()?;
                Some(Box::new(self.if_rest()?))
            }
            Some(b"else") => {
                self.next()?;
                let e = self.compound_list()?;
                self.expect_reserved("fi")?;
                Some(Box::new(e))
            }
            _ => {
                self.expect_reserved("fi")?;
                None
            }
        };
        Ok(Command::If { cond: Box::new(cond), then: Box::new(then), otherwise })
    }

    fn for_rest(&mut self) -> PResult<Command> {
        let var = match self.next()? {
            Tok::Word(w) => match plain_text(&w) {
                Some(t) if is_name(t) => t.to_vec(),
                _ => return self.err("bad for loop variable"),
            },
            t => return self.unexpected(&t),
        };
        self.skip_newlines()?;
        let words = if self.is_reserved_next("in")? {
            self.next()?;
            let mut words: Word = Vec::new();
            loop {
                match self.peek()? {
                    Tok::Word(w) => {
                        self.next()?;
                        if !words.is_empty() {
                            words.push(WordPart::Sep);
                        }
                        words.extend(tilde_expand_word(w, false));
                    }
                    Tok::Op(";") | Tok::Newline => {
                        self.next()?;
                        break;
                    }
                    t => return self.unexpected(&t),
                }
            }
            words
        } else {
            if self.peek()? == Tok::Op(";") {
                self.next()?;
            }
            vec![WordPart::Ctrl(Control::Quoted(vec![WordPart::Ctrl(Control::Param(b"@".to_vec(), ParamFormat::Normal))]))]
        };
        self.skip_newlines()?;
        self.expect_reserved("do")?;
        let body = self.compound_list()?;
        self.expect_reserved("done")?;
        Ok(Command::For { var, words, body: Box::new(body) })
    }

    fn case_rest(&mut self) -> PResult<Command> {
        let scrutinee = match self.next()? {
            Tok::Word(w) => tilde_expand_word(w, false),
            t => return self.unexpected(&t),
        };
        self.skip_newlines()?;
        self.expect_reserved("in")?;
        let mut branches = Vec::new();
        loop {
            self.skip_newlines()?;
            if self.is_reserved_next("esac")? {
                self.next()?;
                break;
            }
            if self.peek()? == Tok::Op("(") {
                self.next()?;
            }
            let mut patterns = Vec::new();
            loop {
                match self.next()? {
                    Tok::Word(w) => patterns.push(tilde_expand_word(w, false)),
                    t => return self.unexpected(&t),
                }
                match self.next()? {
                    Tok::Op("|") => continue,
                    Tok::Op(")") => break,
                    t => return self.unexpected(&t),
                }
            }
            self.skip_newlines()?;
            let body = if self.peek()? == Tok::Op(";;") || self.is_reserved_next("esac")? {
                None
            } else {
                Some(self.compound_list()?)
            };
            branches.push(CaseBranch { patterns, body });
            match self.peek()? {
                Tok::Op(";;") => {
                    self.next()?;
                }
                _ if self.is_reserved_next("esac")? => {}
                t => return self.unexpected(&t),
            }
        }
        Ok(Command::Case { scrutinee, branches })
    }

    fn redirect(&mut self, fd: Option<Fd>) -> PResult<Redirection> {
        let op = match self.next()? {
            Tok::Op(op) => op,
            t => return self.unexpected(&t),
        };
        let target_tok = self.peeked.take();
        let (target, span) = match target_tok {
            Some((Tok::Word(w), s, e)) => (w, (s, e)),
            Some((t, s, e)) => {
                self.peeked = Some((t.clone(), s, e));
                return self.unexpected(&t);
            }
            None => match self.lex_token()? {
                (Tok::Word(w), s, e) => (w, (s, e)),
                (t, s, e) => {
                    self.peeked = Some((t.clone(), s, e));
                    return self.unexpected(&t);
                }
            },
        };
        let r = match op {
            "<<" | "<<-" => {
                let raw = self.buf[span.0..span.1].to_vec();
                let (delim, quoted) = heredoc_delim(&raw);
                self.pending.push(PendingHere { delim, strip_tabs: op == "<<-", expand: !quoted });
                let kind = if quoted { HereKind::NoExpand } else { HereKind::Expand };
                Redirection::Here { fd: fd.unwrap_or(0), kind, body: Vec::new() }
            }
            "<&" | ">&" => {
                let dir = if op == "<&" { DupDir::In } else { DupDir::Out };
                let default = if dir == DupDir::In { 0 } else { 1 };
                Redirection::Dup { fd: fd.unwrap_or(default), dir, target: tilde_expand_word(target, false) }
            }
            _ => {
                let mode = match op {
                    ">" => FileMode::Write,
                    ">|" => FileMode::Clobber,
                    "<" => FileMode::Read,
                    "<>" => FileMode::ReadWrite,
                    _ => FileMode::Append,
                };
                Redirection::File { fd: fd.unwrap_or(mode.default_fd()), mode, target: tilde_expand_word(target, false) }
            }
        };
        Ok(r)
    }

    fn simple(&mut self) -> PResult<Command> {
        let mut assigns = Vec::new();
        let mut words: Word = Vec::new();
        let mut redirs = Vec::new();
        let mut have_cmd = false;
        loop {
            match self.peek()? {
                Tok::IoNumber(n) => {
                    self.next()?;
                    redirs.push(self.redirect(Some(n))?);
                }
                Tok::Op(op) if is_redirect_op(op) => redirs.push(self.redirect(None)?),
                Tok::Word(w) => {
                    if !have_cmd {
                        if let Some(a) = as_assignment(&w) {
                            self.next()?;
                            assigns.push(a);
                            continue;
                        }
                        if (!assigns.is_empty() || !redirs.is_empty()) && self.try_alias()? {
                            continue;
                        }
                    } else if self.alias_next {
                        self.alias_next = false;
                        if self.try_alias()? {
                            continue;
                        }
                    }
                    self.next()?;
                    if !have_cmd && assigns.is_empty() && redirs.is_empty() && self.peek()? == Tok::Op("(") {
                        if let Some(name) = plain_text(&w).filter(|t| is_fn_name(t)).map(|t| t.to_vec()) {
                            self.next()?;
                            self.expect_op(")")?;
                            self.skip_newlines()?;
                            let body = self.command()?;
                            if !is_compound_syntax(&body) {
                                return self.err("function body must be a compound command");
                            }
                            return Ok(Command::FnDef { name, body: Box::new(body) });
                        }
                        return self.err("unexpected \"(\"");
                    }
                    if have_cmd {
                        words.push(WordPart::Sep);
                    }
                    words.extend(tilde_expand_word(w, false));
                    have_cmd = true;
                }
                _ => break,
            }
        }
        if assigns.is_empty() && words.is_empty() && redirs.is_empty() {
            let t = self.peek()?;
            return self.unexpected(&t);
        }
        Ok(Command::Simple { assigns, words, redirs })
    }
}

fn relabel(e: PErr, line: usize) -> PErr {
    match e {
        PErr::Incomplete => PErr::Syntax("unterminated construct".into(), line),
        PErr::Syntax(m, _) => PErr::Syntax(m, line),
    }
}

fn is_fn_name(t: &[u8]) -> bool {
    is_name(t) && !is_reserved(t)
}

fn is_compound_syntax(c: &Command) -> bool {
    // Brace groups leave no node, so any command is accepted after `{`.
    let _ = c;
    true
}

fn is_redirect_op(op: &str) -> bool {
    matches!(op, "<" | ">" | ">>" | ">|" | "<>" | "<&" | ">&" | "<<" | "<<-")
}

fn fold_seq(items: Vec<Command>) -> Command {
    let mut it = items.into_iter().rev();
    let mut acc = it.next().expect("nonempty list");
    for c in it {
        acc = Command::seq(c, acc);
    }
    acc
}

/// Quote removal on a heredoc delimiter; reports whether any quoting occurred.
fn heredoc_delim(raw: &[u8]) -> (Bytes, bool) {
    let mut out = Vec::new();
    let mut quoted = false;
    let mut i = 0;
    while i < raw.len() {
        match raw[i] {
            b'\\' if i + 1 < raw.len() => {
                quoted = true;
                out.push(raw[i + 1]);
                i += 2;
            }
            b'\'' => {
                quoted = true;
                i += 1;
                while i < raw.len() && raw[i] != b'\'' {
                    out.push(raw[i]);
                    i += 1;
                }
                i += 1;
            }
            b'"' => {
                quoted = true;
                i += 1;
                while i < raw.len() && raw[i] != b'"' {
                    if raw[i] == b'\\' && i + 1 < raw.len() && matches!(raw[i + 1], b'$' | b'`' | b'"' | b'\\') {
                        i += 1;
                    }
                    out.push(raw[i]);
                    i += 1;
                }
                i += 1;
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    (out, quoted)
}

/// Assign heredoc bodies to `Here` redirections in source order.
fn fill_heredocs(c: &mut Command, bodies: &mut impl Iterator<Item = Word>) {
    fn redirs(rs: &mut [Redirection], bodies: &mut dyn Iterator<Item = Word>) {
        for r in rs {
            if let Redirection::Here { body, .. } = r {
                *body = bodies.next().unwrap_or_default();
            }
        }
    }
    fn walk(c: &mut Command, bodies: &mut dyn Iterator<Item = Word>) {
        use Command::*;
        match c {
            Simple { redirs: rs, .. } => redirs(rs, bodies),
            Pipeline { commands, .. } => commands.iter_mut().for_each(|c| walk(c, bodies)),
            Redirected(inner, rs) => {
                walk(inner, bodies);
                redirs(rs, bodies);
            }
            Background(c) | Subshell(c) | Not(c) => walk(c, bodies),
            Seq(a, b) | And(a, b) | Or(a, b) => {
                walk(a, bodies);
                walk(b, bodies);
            }
            While { cond, body } => {
                walk(cond, bodies);
                walk(body, bodies);
            }
            For { body, .. } => walk(body, bodies),
            If { cond, then, otherwise } => {
                walk(cond, bodies);
                walk(then, bodies);
                if let Some(e) = otherwise {
                    walk(e, bodies);
                }
            }
            Case { branches, .. } => {
                for b in branches {
                    if let Some(body) = &mut b.body {
                        walk(body, bodies);
                    }
                }
            }
            FnDef { body, .. } => walk(body, bodies),
            _ => {}
        }
    }
    walk(c, bodies);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(s: &str) -> WordPart {
        WordPart::Lit(s.as_bytes().to_vec())
    }

    fn one(src: &str) -> Command {
        parse_one(src.as_bytes()).unwrap()
    }

    #[test]
    fn glob_stays_literal() {
        assert_eq!(
            one("echo a*"),
            Command::Simple { assigns: vec![], words: vec![lit("echo"), WordPart::Sep, lit("a*")], redirs: vec![] }
        );
    }

    #[test]
    fn until_desugars() {
        let c = one("until false; do break; done");
        let simple = |s: &str| Command::Simple { assigns: vec![], words: vec![lit(s)], redirs: vec![] };
        assert_eq!(
            c,
            Command::While { cond: Box::new(Command::Not(Box::new(simple("false")))), body: Box::new(simple("break")) }
        );
    }

    #[test]
    fn assignment_with_substitution() {
        let c = one("x=$(ls)");
        let ls = Command::Simple { assigns: vec![], words: vec![lit("ls")], redirs: vec![] };
        assert_eq!(
            c,
            Command::Simple {
                assigns: vec![(b"x".to_vec(), vec![WordPart::Ctrl(Control::CmdSubst(Box::new(ls)))])],
                words: vec![],
                redirs: vec![]
            }
        );
    }

    #[test]
    fn escapes_become_quoted() {
        let c = one("echo \\*");
        match c {
            Command::Simple { words, .. } => {
                assert_eq!(words[2], WordPart::Ctrl(Control::Quoted(vec![lit("*")])));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn heredoc_tab_strip_and_noexpand() {
        let c = one("cat <<-EOF\n\thi $x\n\tEOF\n");
        match c {
            Command::Simple { redirs, .. } => match &redirs[0] {
                Redirection::Here { kind: HereKind::Expand, body, .. } => {
                    assert_eq!(body[0], lit("hi "));
                }
                r => panic!("{r:?}"),
            },
            _ => panic!(),
        }
        let c = one("cat <<'EOF'\n$x\nEOF\n");
        match c {
            Command::Simple { redirs, .. } => {
                assert_eq!(redirs[0], Redirection::Here { fd: 0, kind: HereKind::NoExpand, body: vec![lit("$x\n")] })
            }
            _ => panic!(),
        }
    }

    #[test]
    fn unterminated_quote_is_error() {
        assert!(parse_program(b"echo 'abc").is_err());
        assert!(parse_program(b"if true; then").is_err());
    }

    #[test]
    fn tilde_prefixes() {
        match one("echo ~root/x ~$u a=~:~b") {
            Command::Simple { words, .. } => {
                assert_eq!(words[2], WordPart::Ctrl(Control::Tilde(Some(b"root".to_vec()))));
                assert_eq!(words[3], lit("/x"));
                assert_eq!(words[5], lit("~"));
            }
            _ => panic!(),
        }
        match one("a=~:~b") {
            Command::Simple { assigns, .. } => assert_eq!(
                assigns[0].1,
                vec![WordPart::Ctrl(Control::Tilde(None)), lit(":"), WordPart::Ctrl(Control::Tilde(Some(b"b".to_vec())))]
            ),
            _ => panic!(),
        }
    }

    #[test]
    fn params() {
        match one("echo ${#x} ${x:-a b} ${x##*/} $1 ${10} ${#}") {
            Command::Simple { words, .. } => {
                assert_eq!(words[2], WordPart::Ctrl(Control::Param(b"x".to_vec(), ParamFormat::Length)));
                assert_eq!(
                    words[4],
                    WordPart::Ctrl(Control::Param(b"x".to_vec(), ParamFormat::Default(NullMode::UnsetOrNull, vec![lit("a b")])))
                );
                assert_eq!(
                    words[6],
                    WordPart::Ctrl(Control::Param(b"x".to_vec(), ParamFormat::Sub(Side::Prefix, Mode::Longest, vec![lit("*/")])))
                );
                assert_eq!(words[10], WordPart::Ctrl(Control::Param(b"10".to_vec(), ParamFormat::Normal)));
                assert_eq!(words[12], WordPart::Ctrl(Control::Param(b"#".to_vec(), ParamFormat::Normal)));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn arith_vs_nested_subshell() {
        match one("echo $((1+2)) $( (echo a) )") {
            Command::Simple { words, .. } => {
                assert!(matches!(words[2], WordPart::Ctrl(Control::Arith(_))));
                assert!(matches!(words[4], WordPart::Ctrl(Control::CmdSubst(_))));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn case_in_subst() {
        let c = one("x=$(case a in a) echo y;; esac)");
        assert!(c.is_source());
    }

    #[test]
    fn function_and_compound() {
        let c = one("f() { echo a; } >out");
        assert!(matches!(c, Command::FnDef { .. }));
        let c = one("if a; then b; elif c; then d; else e; fi");
        assert!(matches!(c, Command::If { otherwise: Some(_), .. }));
    }

    #[test]
    fn roundtrip_samples() {
        let samples = [
            "echo hi",
            "x=5 echo hi >f",
            "a && b || ! c | d",
            "{ a; b; } >f 2>&1",
            "for i in 1 2 \"$x\"; do echo $i; done",
            "for i; do :; done",
            "case $x in (a|b) echo ab;; (*) ;; esac",
            "while read l; do echo \"$l\"; done <in",
            "f() { local x=1; echo ${x:-y}; }",
            "echo 'it'\\''s' \"a\\$b\" ${x#\"*\"}",
            "cat <<EOF\nhello $name\n\\$x\nEOF\necho after",
            "cat <<'E'\nraw $x\nE",
            "a & b",
            "(cd /; pwd) | wc",
            "echo $((1 + $x * (2 - 1)))",
            "echo `echo hi`",
            "x=~/a:~b y=$(echo $(echo nested))",
            "if true; then :; fi",
            "until false; do break 2; done",
            "exec 3>&- 4<>f",
            "echo a\\ b \\\"",
        ];
        for s in samples {
            let a = parse_program(s.as_bytes()).unwrap();
            for c in &a {
                let r = render(c);
                let b = parse_program(&r).unwrap_or_else(|e| panic!("{s:?} -> {:?}: {e}", String::from_utf8_lossy(&r)));
                assert_eq!(vec![c.clone()], b, "{s:?} rendered {:?}", String::from_utf8_lossy(&r));
            }
        }
    }

    #[test]
    fn aliases_expand_in_command_position() {
        let mut aliases = BTreeMap::new();
        aliases.insert(b"ll".to_vec(), b"echo long".to_vec());
        aliases.insert(b"loop".to_vec(), b"loop x".to_vec());
        let mut p = Parser::new(b"ll a; echo ll; loop\n".to_vec(), 1, Some(&aliases));
        let c = p.complete_command().unwrap().unwrap();
        let text = render_string(&c);
        assert_eq!(text, "echo long a; echo ll; loop x");
    }

    #[test]
    fn io_numbers() {
        match one("echo 2>err 3<&0 12 >x") {
            Command::Simple { words, redirs, .. } => {
                assert_eq!(words.len(), 3);
                assert!(matches!(redirs[0], Redirection::File { fd: 2, .. }));
                assert!(matches!(redirs[1], Redirection::Dup { fd: 3, .. }));
            }
            _ => panic!(),
        }
    }
}
