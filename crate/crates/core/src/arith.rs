//! 64-bit two's-complement arithmetic with C precedence.

use thiserror::Error;

use crate::ast::Bytes;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnOp {
    Plus,
    Neg,
    BitNot,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Mul,
    Div,
    Rem,
    Add,
    Sub,
    Shl,
    Shr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    BitAnd,
    BitXor,
    BitOr,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        use BinOp::*;
        match self {
            Mul => "*",
            Div => "/",
            Rem => "%",
            Add => "+",
            Sub => "-",
            Shl => "<<",
            Shr => ">>",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Eq => "==",
            Ne => "!=",
            BitAnd => "&",
            BitXor => "^",
            BitOr => "|",
            And => "&&",
            Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        use BinOp::*;
        match self {
            Mul | Div | Rem => 10,
            Add | Sub => 9,
            Shl | Shr => 8,
            Lt | Le | Gt | Ge => 7,
            Eq | Ne => 6,
            BitAnd => 5,
            BitXor => 4,
            BitOr => 3,
            And => 2,
            Or => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IncDecPos {
    Pre,
    Post,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArithExpr {
    Const(i64),
    Var(Bytes),
    Unary(UnOp, Box<ArithExpr>),
    Binary(BinOp, Box<ArithExpr>, Box<ArithExpr>),
    Ternary(Box<ArithExpr>, Box<ArithExpr>, Box<ArithExpr>),
    /// `None` is plain `=`; otherwise the compound operator.
    Assign(Bytes, Option<BinOp>, Box<ArithExpr>),
    IncDec(Bytes, IncDecPos, bool),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("arithmetic syntax error: {0}")]
    Syntax(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{0}: bad number")]
    BadNumber(String),
    #[error("{0}")]
    Assign(String),
}

/// Variable access for evaluation.
pub trait ArithEnv {
    fn get_var(&self, name: &[u8]) -> Option<Bytes>;
    fn set_var(&mut self, name: &[u8], value: Bytes) -> Result<(), String>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Num(i64),
    Ident(Bytes),
    Op(&'static str),
    LParen,
    RParen,
    Question,
    Colon,
}

const OPS: &[&str] = &[
    "<<=", ">>=", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "*=", "/=", "%=", "+=", "-=", "&=", "^=", "|=",
    "++", "--", "*", "/", "%", "+", "-", "<", ">", "&", "^", "|", "!", "~", "=",
];

/// Parse a numeric literal: decimal, octal with leading 0, hex with 0x.
pub fn parse_number(s: &[u8]) -> Option<i64> {
    if s.is_empty() {
        return None;
    }
    let (digits, radix) = if s.len() > 2 && s[0] == b'0' && (s[1] == b'x' || s[1] == b'X') {
        (&s[2..], 16)
    } else if s.len() > 1 && s[0] == b'0' {
        (&s[1..], 8)
    } else {
        (s, 10)
    };
    let mut v: i64 = 0;
    for &c in digits {
        let d = (c as char).to_digit(radix)? as i64;
        v = v.wrapping_mul(radix as i64).wrapping_add(d);
    }
    Some(v)
}

fn tokenize(src: &[u8]) -> Result<Vec<Tok>, ArithError> {
    let mut toks = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let c = src[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < src.len() && src[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let text = &src[start..i];
            let n = parse_number(text).ok_or_else(|| ArithError::BadNumber(String::from_utf8_lossy(text).into()))?;
            toks.push(Tok::Num(n));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < src.len() && (src[i].is_ascii_alphanumeric() || src[i] == b'_') {
                i += 1;
            }
            toks.push(Tok::Ident(src[start..i].to_vec()));
            continue;
        }
        match c {
            b'(' => {
                toks.push(Tok::LParen);
                i += 1;
                continue;
            }
            b')' => {
                toks.push(Tok::RParen);
                i += 1;
                continue;
            }
            b'?' => {
                toks.push(Tok::Question);
                i += 1;
                continue;
            }
            b':' => {
                toks.push(Tok::Colon);
                i += 1;
                continue;
            }
            _ => {}
        }
        match OPS.iter().find(|op| src[i..].starts_with(op.as_bytes())) {
            Some(op) => {
                toks.push(Tok::Op(op));
                i += op.len();
            }
            None => {
                return Err(ArithError::Syntax(format!("unexpected character '{}'", c as char)));
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

fn binop(op: &str) -> Option<BinOp> {
    use BinOp::*;
    Some(match op {
        "*" => Mul,
        "/" => Div,
        "%" => Rem,
        "+" => Add,
        "-" => Sub,
        "<<" => Shl,
        ">>" => Shr,
        "<" => Lt,
        "<=" => Le,
        ">" => Gt,
        ">=" => Ge,
        "==" => Eq,
        "!=" => Ne,
        "&" => BitAnd,
        "^" => BitXor,
        "|" => BitOr,
        "&&" => And,
        "||" => Or,
        _ => return None,
    })
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<(), ArithError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ArithError::Syntax(format!("expected {t:?}")))
        }
    }

    fn assignment(&mut self) -> Result<ArithExpr, ArithError> {
        if let (Some(Tok::Ident(name)), Some(Tok::Op(op))) = (self.toks.get(self.pos), self.toks.get(self.pos + 1)) {
            let compound = match *op {
                "=" => Some(None),
                "*=" | "/=" | "%=" | "+=" | "-=" | "<<=" | ">>=" | "&=" | "^=" | "|=" => {
                    Some(binop(&op[..op.len() - 1]))
                }
                _ => None,
            };
            if let Some(compound) = compound {
                let name = name.clone();
                self.pos += 2;
                let rhs = self.assignment()?;
                return Ok(ArithExpr::Assign(name, compound, Box::new(rhs)));
            }
        }
        self.ternary()
    }

    fn ternary(&mut self) -> Result<ArithExpr, ArithError> {
        let cond = self.binary(1)?;
        if self.peek() == Some(&Tok::Question) {
            self.pos += 1;
            let t = self.assignment()?;
            self.expect(Tok::Colon)?;
            let f = self.ternary_or_assign()?;
            return Ok(ArithExpr::Ternary(Box::new(cond), Box::new(t), Box::new(f)));
        }
        Ok(cond)
    }

    fn ternary_or_assign(&mut self) -> Result<ArithExpr, ArithError> {
        self.assignment()
    }

    fn binary(&mut self, min_prec: u8) -> Result<ArithExpr, ArithError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = match binop(op) {
                Some(b) if b.precedence() >= min_prec => b,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = ArithExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<ArithExpr, ArithError> {
        match self.peek().cloned() {
            Some(Tok::Op(op @ ("++" | "--"))) => {
                if let Some(Tok::Ident(name)) = self.toks.get(self.pos + 1).cloned() {
                    self.pos += 2;
                    return Ok(ArithExpr::IncDec(name, IncDecPos::Pre, op == "++"));
                }
                // `--5` is two negations.
                self.pos += 1;
                let inner = self.unary()?;
                let u = if op == "++" { UnOp::Plus } else { UnOp::Neg };
                Ok(ArithExpr::Unary(u, Box::new(ArithExpr::Unary(u, Box::new(inner)))))
            }
            Some(Tok::Op(op @ ("+" | "-" | "~" | "!"))) => {
                self.pos += 1;
                let inner = self.unary()?;
                let u = match op {
                    "+" => UnOp::Plus,
                    "-" => UnOp::Neg,
                    "~" => UnOp::BitNot,
                    _ => UnOp::Not,
                };
                Ok(ArithExpr::Unary(u, Box::new(inner)))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<ArithExpr, ArithError> {
        match self.bump() {
            Some(Tok::Num(n)) => Ok(ArithExpr::Const(n)),
            Some(Tok::Ident(name)) => match self.peek() {
                Some(Tok::Op(op @ ("++" | "--"))) => {
                    let inc = *op == "++";
                    self.pos += 1;
                    Ok(ArithExpr::IncDec(name, IncDecPos::Post, inc))
                }
                _ => Ok(ArithExpr::Var(name)),
            },
            Some(Tok::LParen) => {
                let e = self.assignment()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(t) => Err(ArithError::Syntax(format!("unexpected token {t:?}"))),
            None => Err(ArithError::Syntax("unexpected end of expression".into())),
        }
    }
}

/// Parse the fully expanded body of `$((...))`.
pub fn parse(src: &[u8]) -> Result<ArithExpr, ArithError> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(ArithError::Syntax("empty expression".into()));
    }
    let mut p = Parser { toks, pos: 0 };
    let e = p.assignment()?;
    if p.pos != p.toks.len() {
        return Err(ArithError::Syntax(format!("unexpected token {:?}", p.toks[p.pos])));
    }
    Ok(e)
}

/// Read a variable's value as a number; unset and null read as 0.
fn read_var(env: &dyn ArithEnv, name: &[u8]) -> Result<i64, ArithError> {
    let v = env.get_var(name).unwrap_or_default();
    let t = trim(&v);
    if t.is_empty() {
        return Ok(0);
    }
    let (neg, digits) = match t[0] {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    match parse_number(digits) {
        Some(n) => Ok(if neg { n.wrapping_neg() } else { n }),
        None => Err(ArithError::BadNumber(String::from_utf8_lossy(&v).into())),
    }
}

fn trim(v: &[u8]) -> &[u8] {
    let start = v.iter().position(|c| !c.is_ascii_whitespace()).unwrap_or(v.len());
    let end = v.iter().rposition(|c| !c.is_ascii_whitespace()).map_or(start, |e| e + 1);
    &v[start..end]
}

pub fn apply_binop(op: BinOp, a: i64, b: i64) -> Result<i64, ArithError> {
    use BinOp::*;
    Ok(match op {
        Mul => a.wrapping_mul(b),
        Div => {
            if b == 0 {
                return Err(ArithError::DivisionByZero);
            }
            a.wrapping_div(b)
        }
        Rem => {
            if b == 0 {
                return Err(ArithError::DivisionByZero);
            }
            a.wrapping_rem(b)
        }
        Add => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        Shl => a.wrapping_shl((b & 63) as u32),
        Shr => a.wrapping_shr((b & 63) as u32),
        Lt => (a < b) as i64,
        Le => (a <= b) as i64,
        Gt => (a > b) as i64,
        Ge => (a >= b) as i64,
        Eq => (a == b) as i64,
        Ne => (a != b) as i64,
        BitAnd => a & b,
        BitXor => a ^ b,
        BitOr => a | b,
        And => (a != 0 && b != 0) as i64,
        Or => (a != 0 || b != 0) as i64,
    })
}

fn assign(env: &mut dyn ArithEnv, name: &[u8], v: i64) -> Result<(), ArithError> {
    env.set_var(name, v.to_string().into_bytes()).map_err(ArithError::Assign)
}

pub fn eval(env: &mut dyn ArithEnv, e: &ArithExpr) -> Result<i64, ArithError> {
    match e {
        ArithExpr::Const(n) => Ok(*n),
        ArithExpr::Var(name) => read_var(env, name),
        ArithExpr::Unary(op, inner) => {
            let v = eval(env, inner)?;
            Ok(match op {
                UnOp::Plus => v,
                UnOp::Neg => v.wrapping_neg(),
                UnOp::BitNot => !v,
                UnOp::Not => (v == 0) as i64,
            })
        }
        ArithExpr::Binary(BinOp::And, a, b) => {
            if eval(env, a)? == 0 {
                return Ok(0);
            }
            Ok((eval(env, b)? != 0) as i64)
        }
        ArithExpr::Binary(BinOp::Or, a, b) => {
            if eval(env, a)? != 0 {
                return Ok(1);
            }
            Ok((eval(env, b)? != 0) as i64)
        }
        ArithExpr::Binary(op, a, b) => {
            let x = eval(env, a)?;
            let y = eval(env, b)?;
            apply_binop(*op, x, y)
        }
        ArithExpr::Ternary(c, t, f) => {
            if eval(env, c)? != 0 {
                eval(env, t)
            } else {
                eval(env, f)
            }
        }
        ArithExpr::Assign(name, op, rhs) => {
            let r = eval(env, rhs)?;
            let v = match op {
                None => r,
                Some(op) => apply_binop(*op, read_var(env, name)?, r)?,
            };
            assign(env, name, v)?;
            Ok(v)
        }
        ArithExpr::IncDec(name, pos, inc) => {
            let old = read_var(env, name)?;
            let new = if *inc { old.wrapping_add(1) } else { old.wrapping_sub(1) };
            assign(env, name, new)?;
            Ok(if *pos == IncDecPos::Pre { new } else { old })
        }
    }
}

/// Parse and evaluate in one go.
pub fn eval_str(env: &mut dyn ArithEnv, src: &[u8]) -> Result<i64, ArithError> {
    eval(env, &parse(src)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Default)]
    struct Env(BTreeMap<Bytes, Bytes>);

    impl ArithEnv for Env {
        fn get_var(&self, name: &[u8]) -> Option<Bytes> {
            self.0.get(name).cloned()
        }
        fn set_var(&mut self, name: &[u8], value: Bytes) -> Result<(), String> {
            self.0.insert(name.to_vec(), value);
            Ok(())
        }
    }

    fn run(env: &mut Env, s: &str) -> Result<i64, ArithError> {
        eval_str(env, s.as_bytes())
    }

    #[test]
    fn precedence() {
        assert_eq!(
            parse(b"2+3*4").unwrap(),
            ArithExpr::Binary(
                BinOp::Add,
                Box::new(ArithExpr::Const(2)),
                Box::new(ArithExpr::Binary(BinOp::Mul, Box::new(ArithExpr::Const(3)), Box::new(ArithExpr::Const(4))))
            )
        );
    }

    #[test]
    fn compound_assignment_parses() {
        assert_eq!(
            parse(b"y += 5").unwrap(),
            ArithExpr::Assign(b"y".to_vec(), Some(BinOp::Add), Box::new(ArithExpr::Const(5)))
        );
    }

    #[test]
    fn empty_is_error() {
        assert!(parse(b"").is_err());
        assert!(parse(b"   ").is_err());
    }

    #[test]
    fn compound_assignment_example() {
        let mut env = Env::default();
        env.0.insert(b"y".to_vec(), b"42".to_vec());
        assert_eq!(run(&mut env, "y += 5").unwrap(), 47);
        assert_eq!(env.0[&b"y".to_vec()], b"47");
        assert_eq!(run(&mut env, "y").unwrap(), 47);
    }

    #[test]
    fn errors() {
        let mut env = Env::default();
        assert_eq!(run(&mut env, "1/0"), Err(ArithError::DivisionByZero));
        env.0.insert(b"s".to_vec(), b"abc".to_vec());
        assert!(matches!(run(&mut env, "s+1"), Err(ArithError::BadNumber(_))));
    }

    #[test]
    fn literals_and_unset() {
        let mut env = Env::default();
        assert_eq!(run(&mut env, "010 + 0x10").unwrap(), 24);
        assert_eq!(run(&mut env, "nope + 1").unwrap(), 1);
        assert!(run(&mut env, "08").is_err());
    }

    #[test]
    fn short_circuit_skips_assignment() {
        let mut env = Env::default();
        assert_eq!(run(&mut env, "0 && (x = 5)").unwrap(), 0);
        assert!(!env.0.contains_key(b"x".as_slice()));
        assert_eq!(run(&mut env, "1 || (x = 5)").unwrap(), 1);
        assert!(!env.0.contains_key(b"x".as_slice()));
    }

    #[test]
    fn wraps_and_shifts() {
        let mut env = Env::default();
        assert_eq!(run(&mut env, "9223372036854775807 + 1").unwrap(), i64::MIN);
        assert_eq!(run(&mut env, "-8 >> 1").unwrap(), -4);
        assert_eq!(run(&mut env, "1 << 65").unwrap(), 2);
    }

    #[test]
    fn ternary_and_incdec() {
        let mut env = Env::default();
        assert_eq!(run(&mut env, "i++").unwrap(), 0);
        assert_eq!(run(&mut env, "++i").unwrap(), 2);
        assert_eq!(run(&mut env, "i > 1 ? 10 : 20").unwrap(), 10);
        assert_eq!(run(&mut env, "x = y = 3").unwrap(), 3);
        assert_eq!(env.0[&b"x".to_vec()], b"3");
    }

    #[test]
    fn pure_expression_leaves_env() {
        let mut env = Env::default();
        env.0.insert(b"a".to_vec(), b"4".to_vec());
        let before = env.0.clone();
        run(&mut env, "a * 2 + (a < 3 ? 1 : a)").unwrap();
        assert_eq!(env.0, before);
    }
}
