//! Shell pattern matching for `case`, affix removal, and globbing.
//!
//! Patterns arrive as bytes in which a backslash escapes the next byte;
//! expansion escapes every quoted byte that way, so quoted text compiles
//! to literals.

use crate::ast::{Bytes, Mode, Side};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CharClass {
    Alnum,
    Alpha,
    Blank,
    Cntrl,
    Digit,
    Graph,
    Lower,
    Print,
    Punct,
    Space,
    Upper,
    Xdigit,
}

impl CharClass {
    fn from_name(name: &[u8]) -> Option<CharClass> {
        Some(match name {
            b"alnum" => CharClass::Alnum,
            b"alpha" => CharClass::Alpha,
            b"blank" => CharClass::Blank,
            b"cntrl" => CharClass::Cntrl,
            b"digit" => CharClass::Digit,
            b"graph" => CharClass::Graph,
            b"lower" => CharClass::Lower,
            b"print" => CharClass::Print,
            b"punct" => CharClass::Punct,
            b"space" => CharClass::Space,
            b"upper" => CharClass::Upper,
            b"xdigit" => CharClass::Xdigit,
            _ => return None,
        })
    }

    /// C locale membership; bytes above 0x7f belong to no class.
    pub fn contains(self, c: u8) -> bool {
        match self {
            CharClass::Alnum => c.is_ascii_alphanumeric(),
            CharClass::Alpha => c.is_ascii_alphabetic(),
            CharClass::Blank => c == b' ' || c == b'\t',
            CharClass::Cntrl => c.is_ascii_control(),
            CharClass::Digit => c.is_ascii_digit(),
            CharClass::Graph => c.is_ascii_graphic(),
            CharClass::Lower => c.is_ascii_lowercase(),
            CharClass::Print => c.is_ascii_graphic() || c == b' ',
            CharClass::Punct => c.is_ascii_punctuation(),
            CharClass::Space => matches!(c, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c),
            CharClass::Upper => c.is_ascii_uppercase(),
            CharClass::Xdigit => c.is_ascii_hexdigit(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BracketItem {
    Byte(u8),
    Range(u8, u8),
    Class(CharClass),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatElem {
    Lit(u8),
    AnyChar,
    AnyRun,
    Bracket { negated: bool, items: Vec<BracketItem> },
}

impl PatElem {
    fn matches(&self, c: u8) -> bool {
        match self {
            PatElem::Lit(b) => *b == c,
            PatElem::AnyChar => true,
            PatElem::AnyRun => unreachable!("AnyRun handled by the matcher"),
            PatElem::Bracket { negated, items } => {
                let hit = items.iter().any(|it| match it {
                    BracketItem::Byte(b) => *b == c,
                    BracketItem::Range(lo, hi) => *lo <= c && c <= *hi,
                    BracketItem::Class(k) => k.contains(c),
                });
                hit != *negated
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompiledPattern(pub Vec<PatElem>);

impl CompiledPattern {
    /// True if any element is a wildcard or bracket.
    pub fn is_dynamic(&self) -> bool {
        self.0.iter().any(|e| !matches!(e, PatElem::Lit(_)))
    }

    /// The literal text, if the pattern has no wildcards.
    pub fn literal(&self) -> Option<Bytes> {
        self.0
            .iter()
            .map(|e| match e {
                PatElem::Lit(b) => Some(*b),
                _ => None,
            })
            .collect()
    }
}

/// Parse a bracket expression starting at `p[i] == b'['`.
/// Returns the element and the index after the closing `]`.
fn parse_bracket(p: &[u8], i: usize) -> Option<(PatElem, usize)> {
    let mut j = i + 1;
    let mut negated = false;
    if j < p.len() && (p[j] == b'!' || p[j] == b'^') {
        negated = true;
        j += 1;
    }
    let mut items = Vec::new();
    let mut first = true;
    loop {
        if j >= p.len() {
            return None;
        }
        let c = p[j];
        if c == b']' && !first {
            return Some((PatElem::Bracket { negated, items }, j + 1));
        }
        first = false;
        if c == b'[' && j + 1 < p.len() && matches!(p[j + 1], b':' | b'=' | b'.') {
            let kind = p[j + 1];
            let start = j + 2;
            let mut k = start;
            let mut found = None;
            while k + 1 < p.len() {
                if p[k] == kind && p[k + 1] == b']' {
                    found = Some(k);
                    break;
                }
                k += 1;
            }
            if let Some(end) = found {
                let name = &p[start..end];
                match kind {
                    b':' => items.push(BracketItem::Class(CharClass::from_name(name)?)),
                    _ => {
                        if name.len() == 1 {
                            items.push(BracketItem::Byte(name[0]));
                        } else {
                            return None;
                        }
                    }
                }
                j = end + 2;
                continue;
            }
        }
        let (lo, next) = bracket_byte(p, j)?;
        if next + 1 < p.len() && p[next] == b'-' && p[next + 1] != b']' {
            let (hi, after) = bracket_byte(p, next + 1)?;
            items.push(BracketItem::Range(lo, hi));
            j = after;
        } else {
            items.push(BracketItem::Byte(lo));
            j = next;
        }
    }
}

fn bracket_byte(p: &[u8], j: usize) -> Option<(u8, usize)> {
    if p[j] == b'\\' {
        if j + 1 < p.len() {
            Some((p[j + 1], j + 2))
        } else {
            None
        }
    } else {
        Some((p[j], j + 1))
    }
}

/// Compile an escaped pattern. Unclosed brackets are literal `[`.
pub fn compile(p: &[u8]) -> CompiledPattern {
    let mut out = Vec::new();
    let mut i = 0;
    while i < p.len() {
        match p[i] {
            b'\\' if i + 1 < p.len() => {
                out.push(PatElem::Lit(p[i + 1]));
                i += 2;
            }
            b'*' => {
                if out.last() != Some(&PatElem::AnyRun) {
                    out.push(PatElem::AnyRun);
                }
                i += 1;
            }
            b'?' => {
                out.push(PatElem::AnyChar);
                i += 1;
            }
            b'[' => match parse_bracket(p, i) {
                Some((elem, next)) => {
                    out.push(elem);
                    i = next;
                }
                None => {
                    out.push(PatElem::Lit(b'['));
                    i += 1;
                }
            },
            c => {
                out.push(PatElem::Lit(c));
                i += 1;
            }
        }
    }
    CompiledPattern(out)
}

/// True if `p` has an unescaped wildcard or a valid bracket expression.
pub fn has_glob_chars(p: &[u8]) -> bool {
    compile(p).is_dynamic()
}

/// Anchored match over the whole string.
pub fn matches(p: &CompiledPattern, s: &[u8]) -> bool {
    let elems = &p.0;
    let (mut pi, mut si) = (0usize, 0usize);
    let mut star: Option<(usize, usize)> = None;
    while si < s.len() {
        if pi < elems.len() {
            if elems[pi] == PatElem::AnyRun {
                star = Some((pi, si));
                pi += 1;
                continue;
            }
            if elems[pi].matches(s[si]) {
                pi += 1;
                si += 1;
                continue;
            }
        }
        match star {
            Some((sp, ss)) => {
                pi = sp + 1;
                si = ss + 1;
                star = Some((sp, ss + 1));
            }
            None => return false,
        }
    }
    while pi < elems.len() && elems[pi] == PatElem::AnyRun {
        pi += 1;
    }
    pi == elems.len()
}

pub fn matches_str(p: &[u8], s: &[u8]) -> bool {
    matches(&compile(p), s)
}

/// Like [`matches`], but a leading `.` must be matched literally.
pub fn match_filename(p: &CompiledPattern, name: &[u8], explicit_dot_required: bool) -> bool {
    if explicit_dot_required && name.first() == Some(&b'.') && p.0.first() != Some(&PatElem::Lit(b'.')) {
        return false;
    }
    matches(p, name)
}

/// Remove the shortest or longest matching prefix or suffix.
pub fn remove_affix(side: Side, mode: Mode, p: &CompiledPattern, s: &[u8]) -> Bytes {
    let n = s.len();
    match (side, mode) {
        (Side::Prefix, Mode::Shortest) => {
            for i in 0..=n {
                if matches(p, &s[..i]) {
                    return s[i..].to_vec();
                }
            }
        }
        (Side::Prefix, Mode::Longest) => {
            for i in (0..=n).rev() {
                if matches(p, &s[..i]) {
                    return s[i..].to_vec();
                }
            }
        }
        (Side::Suffix, Mode::Shortest) => {
            for i in (0..=n).rev() {
                if matches(p, &s[i..]) {
                    return s[..i].to_vec();
                }
            }
        }
        (Side::Suffix, Mode::Longest) => {
            for i in 0..=n {
                if matches(p, &s[i..]) {
                    return s[..i].to_vec();
                }
            }
        }
    }
    s.to_vec()
}

/// Escape bytes so they compile to literals.
pub fn escape(s: &[u8]) -> Bytes {
    let mut out = Vec::with_capacity(s.len());
    for &c in s {
        if matches!(c, b'*' | b'?' | b'[' | b']' | b'\\' | b'!' | b'^' | b'-') {
            out.push(b'\\');
        }
        out.push(c);
    }
    out
}

/// Drop escape backslashes, yielding the literal text.
pub fn unescape(p: &[u8]) -> Bytes {
    let mut out = Vec::with_capacity(p.len());
    let mut i = 0;
    while i < p.len() {
        if p[i] == b'\\' && i + 1 < p.len() {
            out.push(p[i + 1]);
            i += 2;
        } else {
            out.push(p[i]);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compiles_star() {
        assert_eq!(compile(b"a*").0, vec![PatElem::Lit(b'a'), PatElem::AnyRun]);
    }

    #[test]
    fn escaped_star_is_literal() {
        assert_eq!(compile(b"a\\*").0, vec![PatElem::Lit(b'a'), PatElem::Lit(b'*')]);
        assert_eq!(unescape(b"\\*"), b"*");
    }

    #[test]
    fn compiles_range() {
        assert_eq!(
            compile(b"[a-c]x").0,
            vec![
                PatElem::Bracket { negated: false, items: vec![BracketItem::Range(b'a', b'c')] },
                PatElem::Lit(b'x')
            ]
        );
    }

    #[test]
    fn question_mark() {
        let p = compile(b"ap?");
        assert!(matches(&p, b"app"));
        assert!(!matches(&p, b"appall"));
    }

    #[test]
    fn star_matches_empty() {
        assert!(matches_str(b"*", b""));
    }

    #[test]
    fn negated_bracket() {
        assert!(matches_str(b"[!a]b", b"zb"));
        assert!(!matches_str(b"[!a]b", b"ab"));
    }

    #[test]
    fn unclosed_bracket_is_literal() {
        assert!(matches_str(b"[ab", b"[ab"));
        assert!(!matches_str(b"[ab", b"a"));
    }

    #[test]
    fn classes() {
        assert!(matches_str(b"[[:digit:]]x", b"7x"));
        assert!(!matches_str(b"[[:alpha:]]", &[0xe9]));
        assert!(matches_str(b"[[=a=]]", b"a"));
        assert!(matches_str(b"[]a]", b"]"));
    }

    #[test]
    fn affixes_of_split_listing() {
        let p = compile(b"*[ab]");
        assert_eq!(remove_affix(Side::Prefix, Mode::Shortest, &p, b"a b c"), b" b c");
        assert_eq!(remove_affix(Side::Prefix, Mode::Longest, &p, b"a b c"), b" c");
        assert_eq!(remove_affix(Side::Suffix, Mode::Shortest, &compile(b"z"), b"abc"), b"abc");
    }

    #[test]
    fn filename_dots() {
        assert!(!match_filename(&compile(b"*"), b".profile", true));
        assert!(match_filename(&compile(b".*"), b".profile", true));
        assert!(match_filename(&compile(b"a?"), b"ab", true));
    }

    #[test]
    fn escape_roundtrip() {
        let s = b"a*b?[c]\\";
        assert!(matches(&compile(&escape(s)), s));
        assert_eq!(unescape(&escape(s)), s);
    }
}
