//! Plain-text s-expression syntax for expressions.
//!
//! ```text
//! expr  := number | x<i> | t | p<i> | %<k> | '(' head expr* ')'
//! head  := + | * | - | / | ^ | pow | neg | exp | log | sqrt
//!        | normal_cdf | normal_pdf | erf | abs | let
//! ```
//!
//! `(- a)` is negation and `(- a b)` subtraction; `+` and `*` take one or
//! more operands. Numbers use Rust's float syntax (`1.5`, `-2e-3`).
//!
//! `(let ((%0 e0) (%1 e1) ...) body)` binds shared subexpressions; later
//! bindings and the body refer to earlier ones as `%k`. [`to_dag_string`]
//! emits this form so that output size is linear in the number of DAG
//! nodes, while [`to_sexpr`] writes a plain tree.

use std::collections::HashMap;
use std::fmt::Write;

use super::*;

fn leaf(e: &Expr) -> Option<String> {
    Some(match e.kind() {
        Kind::Const(c) => format!("{c:?}"),
        Kind::State(i) => format!("x{i}"),
        Kind::Time => "t".to_string(),
        Kind::Param(i) => format!("p{i}"),
        _ => return None,
    })
}

fn head(e: &Expr) -> &'static str {
    match e.kind() {
        Kind::Add(_) => "+",
        Kind::Mul(_) => "*",
        Kind::Sub(..) => "-",
        Kind::Div(..) => "/",
        Kind::Pow(..) => "^",
        Kind::Neg(_) => "neg",
        Kind::Call(b, _) => b.name(),
        _ => unreachable!(),
    }
}

/// Tree rendering. Shared subexpressions are written out at every use.
pub fn to_sexpr(e: &Expr) -> String {
    let mut out = String::new();
    write_tree(e, &mut out);
    out
}

fn write_tree(e: &Expr, out: &mut String) {
    if let Some(l) = leaf(e) {
        out.push_str(&l);
        return;
    }
    out.push('(');
    out.push_str(head(e));
    for c in e.operands() {
        out.push(' ');
        write_tree(c, out);
    }
    out.push(')');
}

/// Rendering with one `let` binding per interior node.
pub fn to_dag_string(e: &Expr) -> String {
    if let Some(l) = leaf(e) {
        return l;
    }
    let mut name: HashMap<u64, String> = HashMap::new();
    let mut out = String::from("(let (");
    let mut first = true;
    for node in e.topo_order() {
        if leaf(&node).is_some() {
            continue;
        }
        let k = format!("%{}", name.len());
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "({k} ({}", head(&node)).unwrap();
        for c in node.operands() {
            out.push(' ');
            match leaf(c) {
                Some(l) => out.push_str(&l),
                None => out.push_str(&name[&c.id()]),
            }
        }
        out.push_str("))");
        name.insert(node.id(), k);
    }
    write!(out, ") {})", name[&e.id()]).unwrap();
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

fn tokenize(s: &str) -> Vec<(usize, Tok)> {
    let mut toks = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'(' {
            toks.push((i, Tok::Open));
            i += 1;
        } else if c == b')' {
            toks.push((i, Tok::Close));
            i += 1;
        } else {
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'(' && bytes[i] != b')' {
                i += 1;
            }
            toks.push((start, Tok::Atom(s[start..i].to_string())));
        }
    }
    toks
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    env: HashMap<String, Expr>,
}

impl Parser {
    fn err(&self, msg: impl Into<String>) -> ExprError {
        let at = self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end);
        ExprError::Parse {
            position: at,
            message: msg.into(),
        }
    }

    fn next(&mut self) -> Result<Tok, ExprError> {
        let t = self
            .toks
            .get(self.pos)
            .map(|t| t.1.clone())
            .ok_or_else(|| self.err("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn expect_close(&mut self) -> Result<(), ExprError> {
        match self.next()? {
            Tok::Close => Ok(()),
            _ => {
                self.pos -= 1;
                Err(self.err("expected ')'"))
            }
        }
    }

    fn atom(&self, a: &str) -> Result<Expr, ExprError> {
        if a == "t" {
            return Ok(time());
        }
        if let Some(e) = self.env.get(a) {
            return Ok(e.clone());
        }
        if a.starts_with('%') {
            return Err(self.err(format!("unbound reference {a}")));
        }
        for (prefix, ctor) in [("x", state as fn(usize) -> Expr), ("p", param)] {
            if let Some(rest) = a.strip_prefix(prefix) {
                if let Ok(i) = rest.parse::<usize>() {
                    let limit = if prefix == "x" { MAX_STATE_VARS } else { MAX_PARAMS };
                    if i >= limit {
                        return Err(self.err(format!("index {i} in {a} exceeds {limit}")));
                    }
                    return Ok(ctor(i));
                }
            }
        }
        let first = a.as_bytes()[0];
        if first.is_ascii_digit() || first == b'-' || first == b'+' || first == b'.' {
            if let Ok(v) = a.parse::<f64>() {
                return Ok(constant(v));
            }
        }
        Err(self.err(format!("unknown symbol '{a}'")))
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        match self.next()? {
            Tok::Atom(a) => {
                self.pos -= 1;
                let e = self.atom(&a)?;
                self.pos += 1;
                Ok(e)
            }
            Tok::Close => {
                self.pos -= 1;
                Err(self.err("unexpected ')'"))
            }
            Tok::Open => {
                let h = match self.next()? {
                    Tok::Atom(h) => h,
                    _ => {
                        self.pos -= 1;
                        return Err(self.err("expected operator after '('"));
                    }
                };
                if h == "let" {
                    return self.let_form();
                }
                const OPS: [&str; 7] = ["+", "*", "-", "/", "^", "pow", "neg"];
                if !OPS.contains(&h.as_str()) && Builtin::from_name(&h).is_none() {
                    self.pos -= 1;
                    return Err(self.err(format!("unknown operator '{h}'")));
                }
                let mut ops = Vec::new();
                while !matches!(self.peek(), Some(Tok::Close) | None) {
                    ops.push(self.expr()?);
                }
                let n = ops.len();
                let arity = |want: &str| format!("'{h}' takes {want} operand(s), got {n}");
                let e = match (h.as_str(), n) {
                    ("+", 1..) => add_all(ops),
                    ("*", 1..) => mul_all(ops),
                    ("+" | "*", _) => return Err(self.err(arity("at least 1"))),
                    ("-", 1) | ("neg", 1) => neg(&ops[0]),
                    ("-", 2) => sub(&ops[0], &ops[1]),
                    ("-", _) => return Err(self.err(arity("1 or 2"))),
                    ("/", 2) => div(&ops[0], &ops[1]),
                    ("^" | "pow", 2) => pow(&ops[0], &ops[1]),
                    ("/" | "^" | "pow", _) => return Err(self.err(arity("2"))),
                    (name, 1) => call(Builtin::from_name(name).unwrap(), &ops[0]),
                    _ => return Err(self.err(arity("1"))),
                };
                self.expect_close()?;
                Ok(e)
            }
        }
    }

    fn let_form(&mut self) -> Result<Expr, ExprError> {
        if self.next()? != Tok::Open {
            self.pos -= 1;
            return Err(self.err("expected '(' opening let bindings"));
        }
        while let Some(Tok::Open) = self.peek() {
            self.pos += 1;
            let name = match self.next()? {
                Tok::Atom(a) if a.starts_with('%') => a,
                _ => {
                    self.pos -= 1;
                    return Err(self.err("expected %name in let binding"));
                }
            };
            let value = self.expr()?;
            self.expect_close()?;
            self.env.insert(name, value);
        }
        self.expect_close()?;
        let body = self.expr()?;
        self.expect_close()?;
        Ok(body)
    }
}

/// Parses one expression; trailing input is an error.
pub fn parse(s: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        toks: tokenize(s),
        pos: 0,
        end: s.len(),
        env: HashMap::new(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}
