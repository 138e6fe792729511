//! Independent reference implementations used to check the engine.
//!
//! Each `check_*` function runs a fixed, deterministic workload and returns
//! the number of comparisons made, or a description of the first mismatch.

#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use smolsh::arith::{self, ArithEnv};
use smolsh::ast::Expanded;
use smolsh::expansion::{combine_fields, field_split};
use smolsh::pattern;
use smolsh::{run_symbolic, SymbolicConfig};

pub fn runner(cases: u32) -> TestRunner {
    let cfg = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

// ---------------------------------------------------------------------------
// Arithmetic

pub const CONST_BOUND: i64 = 1 << 40;

#[derive(Clone, Debug)]
pub enum Tree {
    Const(i64),
    Var(&'static str),
    Un(&'static str, Box<Tree>),
    Bin(&'static str, Box<Tree>, Box<Tree>),
    Tern(Box<Tree>, Box<Tree>, Box<Tree>),
}

pub const VARS: &[(&str, i64)] = &[("x", 7), ("y", -3), ("big", 1 << 40)];
const UNOPS: &[&str] = &["-", "+", "~", "!"];
const BINOPS: &[&str] = &["*", "/", "%", "+", "-", "<<", ">>", "<", "<=", ">", ">=", "==", "!=", "&", "^", "|", "&&", "||"];

pub fn tree_strategy() -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![
        3 => (-CONST_BOUND..=CONST_BOUND).prop_map(Tree::Const),
        2 => (-6i64..=6).prop_map(Tree::Const),
        1 => prop::sample::select(VARS.iter().map(|v| v.0).collect::<Vec<_>>()).prop_map(Tree::Var),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        prop_oneof![
            1 => (prop::sample::select(UNOPS), inner.clone()).prop_map(|(o, e)| Tree::Un(o, Box::new(e))),
            4 => (prop::sample::select(BINOPS), inner.clone(), inner.clone())
                .prop_map(|(o, a, b)| Tree::Bin(o, Box::new(a), Box::new(b))),
            1 => (inner.clone(), inner.clone(), inner).prop_map(|(c, t, f)| Tree::Tern(Box::new(c), Box::new(t), Box::new(f))),
        ]
    })
}

/// Fully parenthesized source text.
pub fn render_tree(t: &Tree) -> String {
    match t {
        Tree::Const(n) if *n < 0 => format!("(-{})", n.unsigned_abs()),
        Tree::Const(n) => n.to_string(),
        Tree::Var(v) => v.to_string(),
        Tree::Un(o, e) => format!("({o}({}))", render_tree(e)),
        Tree::Bin(o, a, b) => format!("(({}) {o} ({}))", render_tree(a), render_tree(b)),
        Tree::Tern(c, a, b) => format!("(({}) ? ({}) : ({}))", render_tree(c), render_tree(a), render_tree(b)),
    }
}

fn wrap(v: i128) -> i128 {
    v as i64 as i128
}

/// Wide-integer evaluation, truncated to 64 bits after every operation.
/// `None` means division by zero.
pub fn oracle_eval(t: &Tree) -> Option<i128> {
    Some(match t {
        Tree::Const(n) => *n as i128,
        Tree::Var(v) => VARS.iter().find(|(n, _)| n == v).map(|(_, x)| *x as i128).unwrap_or(0),
        Tree::Un(o, e) => {
            let a = oracle_eval(e)?;
            match *o {
                "-" => wrap(-a),
                "+" => a,
                "~" => !a,
                _ => (a == 0) as i128,
            }
        }
        Tree::Bin("&&", a, b) => {
            if oracle_eval(a)? == 0 {
                0
            } else {
                (oracle_eval(b)? != 0) as i128
            }
        }
        Tree::Bin("||", a, b) => {
            if oracle_eval(a)? != 0 {
                1
            } else {
                (oracle_eval(b)? != 0) as i128
            }
        }
        Tree::Bin(o, a, b) => {
            let x = oracle_eval(a)?;
            let y = oracle_eval(b)?;
            match *o {
                "*" => wrap(x * y),
                "/" if y == 0 => return None,
                "/" => wrap(x / y),
                "%" if y == 0 => return None,
                "%" => wrap(x % y),
                "+" => wrap(x + y),
                "-" => wrap(x - y),
                "<<" => wrap(x << (y & 63)),
                ">>" => x >> (y & 63),
                "<" => (x < y) as i128,
                "<=" => (x <= y) as i128,
                ">" => (x > y) as i128,
                ">=" => (x >= y) as i128,
                "==" => (x == y) as i128,
                "!=" => (x != y) as i128,
                "&" => x & y,
                "^" => x ^ y,
                "|" => x | y,
                other => unreachable!("operator {other}"),
            }
        }
        Tree::Tern(c, a, b) => {
            if oracle_eval(c)? != 0 {
                oracle_eval(a)?
            } else {
                oracle_eval(b)?
            }
        }
    })
}

#[derive(Default)]
pub struct MapEnv(pub BTreeMap<Vec<u8>, Vec<u8>>);

impl ArithEnv for MapEnv {
    fn get_var(&self, name: &[u8]) -> Option<Vec<u8>> {
        self.0.get(name).cloned()
    }

    fn set_var(&mut self, name: &[u8], value: Vec<u8>) -> Result<(), String> {
        self.0.insert(name.to_vec(), value);
        Ok(())
    }
}

pub fn var_env() -> MapEnv {
    MapEnv(VARS.iter().map(|(n, v)| (n.as_bytes().to_vec(), v.to_string().into_bytes())).collect())
}

pub fn check_arith(cases: u32) -> Result<u32, String> {
    let count = std::cell::Cell::new(0u32);
    runner(cases)
        .run(&tree_strategy(), |t| {
            let src = render_tree(&t);
            let mut env = var_env();
            let got = arith::eval_str(&mut env, src.as_bytes());
            match (oracle_eval(&t), got) {
                (Some(want), Ok(v)) => prop_assert_eq!(want, v as i128, "{}", src),
                (None, Err(arith::ArithError::DivisionByZero)) => {}
                (want, got) => prop_assert!(false, "{}: oracle {:?}, engine {:?}", src, want, got),
            }
            count.set(count.get() + 1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(count.get())
}

// ---------------------------------------------------------------------------
// Patterns

pub const PATTERN_CHARS: &[u8] = b"ab.*?[]!";
pub const STRING_CHARS: &[u8] = b"ab.";

/// All words over `alphabet` of length at most `max`.
pub fn words(alphabet: &[u8], max: usize) -> Vec<Vec<u8>> {
    let mut all = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max {
        let mut next = Vec::new();
        for w in &layer {
            for &c in alphabet {
                let mut v: Vec<u8> = w.clone();
                v.push(c);
                next.push(v);
            }
        }
        all.extend(next.iter().cloned());
        layer = next;
    }
    all
}

/// Translate a shell pattern to an anchored regular expression.
pub fn pattern_to_regex(p: &[u8]) -> String {
    let mut out = String::from("^(?s-u:");
    let mut i = 0;
    while i < p.len() {
        match p[i] {
            b'*' => out.push_str(".*"),
            b'?' => out.push('.'),
            b'[' => match bracket_to_regex(p, i) {
                Some((class, next)) => {
                    out.push_str(&class);
                    i = next;
                    continue;
                }
                None => out.push_str(r"\["),
            },
            c => out.push_str(&regex::escape(&(c as char).to_string())),
        }
        i += 1;
    }
    out.push_str(")$");
    out
}

fn bracket_to_regex(p: &[u8], open: usize) -> Option<(String, usize)> {
    let mut j = open + 1;
    let negate = p.get(j) == Some(&b'!');
    if negate {
        j += 1;
    }
    let start = j;
    if p.get(j) == Some(&b']') {
        j += 1;
    }
    while j < p.len() && p[j] != b']' {
        j += 1;
    }
    if j >= p.len() {
        return None;
    }
    let mut class = String::from(if negate { "[^" } else { "[" });
    for &c in &p[start..j] {
        class.push_str(&regex::escape(&(c as char).to_string()));
    }
    class.push(']');
    Some((class, j + 1))
}

pub fn check_patterns() -> Result<usize, String> {
    let strings = words(STRING_CHARS, 6);
    let mut count = 0;
    for p in words(PATTERN_CHARS, 4) {
        let re = regex::bytes::Regex::new(&pattern_to_regex(&p)).map_err(|e| e.to_string())?;
        let compiled = pattern::compile(&p);
        for s in &strings {
            let want = re.is_match(s);
            let got = pattern::matches(&compiled, s);
            if want != got {
                return Err(format!(
                    "pattern {:?} on {:?}: oracle {want}, engine {got}",
                    String::from_utf8_lossy(&p),
                    String::from_utf8_lossy(s)
                ));
            }
            count += 1;
        }
    }
    Ok(count)
}

// ---------------------------------------------------------------------------
// Field splitting

fn is_space(c: u8) -> bool {
    matches!(c, b' ' | b'\t' | b'\n')
}

/// Split one unquoted expansion result, scanning delimiters directly.
pub fn oracle_split(ifs: Option<&[u8]>, s: &[u8]) -> Vec<Vec<u8>> {
    let ifs = ifs.unwrap_or(b" \t\n");
    if ifs.is_empty() {
        return if s.is_empty() { vec![] } else { vec![s.to_vec()] };
    }
    let white = |c: u8| ifs.contains(&c) && is_space(c);
    let hard = |c: u8| ifs.contains(&c) && !is_space(c);
    let mut lo = 0;
    let mut hi = s.len();
    while lo < hi && white(s[lo]) {
        lo += 1;
    }
    while hi > lo && white(s[hi - 1]) {
        hi -= 1;
    }
    let s = &s[lo..hi];
    let mut fields = Vec::new();
    let mut cur = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let c = s[i];
        if white(c) || hard(c) {
            // One delimiter: white space around at most one hard character.
            while i < s.len() && white(s[i]) {
                i += 1;
            }
            if i < s.len() && hard(s[i]) {
                i += 1;
                while i < s.len() && white(s[i]) {
                    i += 1;
                }
            }
            fields.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
            i += 1;
        }
    }
    if !cur.is_empty() {
        fields.push(cur);
    }
    fields
}

pub fn engine_split(ifs: Option<&[u8]>, s: &[u8]) -> Vec<Vec<u8>> {
    combine_fields(&field_split(ifs, &vec![Expanded::Exp(s.to_vec())]), false)
}

pub fn split_case_strategy() -> impl Strategy<Value = (Option<Vec<u8>>, Vec<u8>)> {
    let ifs = prop_oneof![
        1 => Just(None),
        6 => prop::collection::vec(prop::sample::select(&b" \t\n:,a"[..]), 0..4).prop_map(Some),
    ];
    let s = prop::collection::vec(prop::sample::select(&b"ab \t\n:,"[..]), 0..12);
    (ifs, s)
}

pub fn check_split(cases: u32) -> Result<u32, String> {
    let count = std::cell::Cell::new(0u32);
    runner(cases)
        .run(&split_case_strategy(), |(ifs, s)| {
            let want = oracle_split(ifs.as_deref(), &s);
            let got = engine_split(ifs.as_deref(), &s);
            prop_assert_eq!(want, got, "IFS={:?} s={:?}", ifs, String::from_utf8_lossy(&s));
            count.set(count.get() + 1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(count.get())
}

// ---------------------------------------------------------------------------
// Negation

pub fn script_strategy() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        Just("true".to_string()),
        Just("false".to_string()),
        (0u8..=255).prop_map(|n| format!("(exit {n})")),
        Just("[ a = b ]".to_string()),
        Just("test 1 -lt 2".to_string()),
        Just(": ${v:=1}".to_string()),
        Just("x=$(false)".to_string()),
        Just("unset nope".to_string()),
        (0u8..4).prop_map(|n| format!("return_free_{n}=1")),
    ];
    atom.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} && {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} || {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{{ {a}; }} | {{ {b}; }}")),
            inner.clone().prop_map(|a| format!("! {{ {a}; }}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{{ {a}; {b}; }}")),
            (inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(c, t, f)| format!("if {c}; then {t}; else {f}; fi")),
            inner.clone().prop_map(|a| format!("( {a} )")),
            inner.clone().prop_map(|a| format!("for i in 1 2; do {a}; done")),
            inner.clone().prop_map(|a| format!("case x in x) {a};; esac")),
            inner.prop_map(|a| format!("f() {{ {a}; }}; f")),
        ]
    })
}

pub fn symbolic_status(src: &str) -> Result<u8, String> {
    let cfg = SymbolicConfig { fuel: 100_000, ..Default::default() };
    let t = run_symbolic(src.as_bytes(), &cfg);
    if t.final_state.fuel_exhausted {
        return Err(format!("{src}: out of fuel"));
    }
    Ok(t.final_state.status)
}

pub fn check_negation(cases: u32) -> Result<u32, String> {
    let count = std::cell::Cell::new(0u32);
    runner(cases)
        .run(&script_strategy(), |s| {
            let plain = symbolic_status(&s).map_err(TestCaseError::fail)?;
            let negated = symbolic_status(&format!("! {{ {s}; }}")).map_err(TestCaseError::fail)?;
            prop_assert_eq!(negated, u8::from(plain == 0), "{}", s);
            count.set(count.get() + 1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(count.get())
}
