//! Closed expression DSL for model functions.
//!
//! Generated equations are compiled into this AST instead of being executed
//! as code. The grammar is fixed: arithmetic, a small function set, and a
//! guarded `piecewise` form. Anything outside it is a parse error, which is
//! what makes LLM-produced sources safe to evaluate.
//!
//! Precedence: `^` > unary `-` > `*`,`/` > `+`,`-`. `^` is right-associative,
//! the rest associate left. Whitespace is insignificant.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Log10,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Log10 => "log10",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sqrt" => Some(Func::Sqrt),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "log10" => Some(Func::Log10),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }

    fn holds(self, l: f64, r: f64) -> bool {
        match self {
            Cmp::Lt => l < r,
            Cmp::Le => l <= r,
            Cmp::Gt => l > r,
            Cmp::Ge => l >= r,
        }
    }
}

/// Comparison between two sub-expressions; only legal inside `piecewise`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Cond {
    pub lhs: Expr,
    pub cmp: Cmp,
    pub rhs: Expr,
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.cmp.symbol(), self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Expr {
    Number(f64),
    Var(String),
    Param(String),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Func,
        arg: Box<Expr>,
    },
    /// First branch whose condition holds wins; `default` covers the rest.
    Piecewise {
        branches: Vec<(Cond, Expr)>,
        default: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVar(String),
    #[error("unbound parameter `{0}`")]
    UnboundParam(String),
    #[error("domain violation in `{expr}`: {message}")]
    Domain { expr: String, message: String },
    #[error("non-finite result in `{expr}`")]
    NonFinite { expr: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BindingError {
    #[error("`{0}` is bound both as a variable and as a parameter")]
    Overlap(String),
    #[error("non-finite value for `{0}`")]
    NonFinite(String),
}

/// Evaluation environment: variable and parameter values with disjoint names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    vars: std::collections::BTreeMap<String, f64>,
    params: std::collections::BTreeMap<String, f64>,
}

impl Bindings {
    pub fn new<V, P, S, T>(vars: V, params: P) -> Result<Bindings, BindingError>
    where
        V: IntoIterator<Item = (S, f64)>,
        P: IntoIterator<Item = (T, f64)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut b = Bindings::default();
        for (name, value) in vars {
            b.insert_var(name.into(), value)?;
        }
        for (name, value) in params {
            b.insert_param(name.into(), value)?;
        }
        Ok(b)
    }

    pub fn insert_var(&mut self, name: String, value: f64) -> Result<(), BindingError> {
        if !value.is_finite() {
            return Err(BindingError::NonFinite(name));
        }
        if self.params.contains_key(&name) {
            return Err(BindingError::Overlap(name));
        }
        self.vars.insert(name, value);
        Ok(())
    }

    pub fn insert_param(&mut self, name: String, value: f64) -> Result<(), BindingError> {
        if !value.is_finite() {
            return Err(BindingError::NonFinite(name));
        }
        if self.vars.contains_key(&name) {
            return Err(BindingError::Overlap(name));
        }
        self.params.insert(name, value);
        Ok(())
    }

    pub fn var(&self, name: &str) -> Option<f64> {
        self.vars.get(name).copied()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }
}

impl Expr {
    /// Fully parenthesized rendering; `parse(print_canonical(e))` rebuilds `e`
    /// for every tree the parser can produce.
    pub fn print_canonical(&self) -> String {
        self.to_string()
    }

    /// Free names split into (variables, parameters).
    pub fn free_names(&self) -> (BTreeSet<String>, BTreeSet<String>) {
        let mut vars = BTreeSet::new();
        let mut params = BTreeSet::new();
        self.collect_names(&mut vars, &mut params);
        (vars, params)
    }

    fn collect_names(&self, vars: &mut BTreeSet<String>, params: &mut BTreeSet<String>) {
        match self {
            Expr::Number(_) => {}
            Expr::Var(name) => {
                vars.insert(name.clone());
            }
            Expr::Param(name) => {
                params.insert(name.clone());
            }
            Expr::Neg(inner) => inner.collect_names(vars, params),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_names(vars, params);
                rhs.collect_names(vars, params);
            }
            Expr::Call { arg, .. } => arg.collect_names(vars, params),
            Expr::Piecewise { branches, default } => {
                for (cond, value) in branches {
                    cond.lhs.collect_names(vars, params);
                    cond.rhs.collect_names(vars, params);
                    value.collect_names(vars, params);
                }
                default.collect_names(vars, params);
            }
        }
    }

    /// Parameter names in order of first appearance (left-to-right walk).
    pub fn params_in_order(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.collect_params_ordered(&mut seen, &mut out);
        out
    }

    /// Replaces named parameters with literal numbers, e.g. to pin physical
    /// constants before fitting. Names absent from `values` stay parameters.
    pub fn substitute_params(&self, values: &BTreeMap<String, f64>) -> Expr {
        match self {
            Expr::Number(_) | Expr::Var(_) => self.clone(),
            Expr::Param(name) => match values.get(name) {
                Some(v) => Expr::Number(*v),
                None => self.clone(),
            },
            Expr::Neg(inner) => Expr::Neg(Box::new(inner.substitute_params(values))),
            Expr::Binary { op, lhs, rhs } => Expr::Binary {
                op: *op,
                lhs: Box::new(lhs.substitute_params(values)),
                rhs: Box::new(rhs.substitute_params(values)),
            },
            Expr::Call { func, arg } => Expr::Call {
                func: *func,
                arg: Box::new(arg.substitute_params(values)),
            },
            Expr::Piecewise { branches, default } => Expr::Piecewise {
                branches: branches
                    .iter()
                    .map(|(cond, value)| {
                        (
                            Cond {
                                lhs: cond.lhs.substitute_params(values),
                                cmp: cond.cmp,
                                rhs: cond.rhs.substitute_params(values),
                            },
                            value.substitute_params(values),
                        )
                    })
                    .collect(),
                default: Box::new(default.substitute_params(values)),
            },
        }
    }

    /// Replaces named parameters with whole subexpressions, e.g. rewriting a
    /// two-symbol equation onto a single shared variable. Substituted bodies
    /// are spliced as-is (no capture concerns: the grammar has no binders),
    /// and parameters absent from `map` are kept.
    pub fn substitute_param_exprs(&self, map: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Number(_) | Expr::Var(_) => self.clone(),
            Expr::Param(name) => match map.get(name) {
                Some(body) => body.clone(),
                None => self.clone(),
            },
            Expr::Neg(inner) => Expr::Neg(Box::new(inner.substitute_param_exprs(map))),
            Expr::Binary { op, lhs, rhs } => Expr::Binary {
                op: *op,
                lhs: Box::new(lhs.substitute_param_exprs(map)),
                rhs: Box::new(rhs.substitute_param_exprs(map)),
            },
            Expr::Call { func, arg } => Expr::Call {
                func: *func,
                arg: Box::new(arg.substitute_param_exprs(map)),
            },
            Expr::Piecewise { branches, default } => Expr::Piecewise {
                branches: branches
                    .iter()
                    .map(|(cond, value)| {
                        (
                            Cond {
                                lhs: cond.lhs.substitute_param_exprs(map),
                                cmp: cond.cmp,
                                rhs: cond.rhs.substitute_param_exprs(map),
                            },
                            value.substitute_param_exprs(map),
                        )
                    })
                    .collect(),
                default: Box::new(default.substitute_param_exprs(map)),
            },
        }
    }

    fn collect_params_ordered(&self, seen: &mut BTreeSet<String>, out: &mut Vec<String>) {
        match self {
            Expr::Number(_) | Expr::Var(_) => {}
            Expr::Param(name) => {
                if seen.insert(name.clone()) {
                    out.push(name.clone());
                }
            }
            Expr::Neg(inner) => inner.collect_params_ordered(seen, out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_params_ordered(seen, out);
                rhs.collect_params_ordered(seen, out);
            }
            Expr::Call { arg, .. } => arg.collect_params_ordered(seen, out),
            Expr::Piecewise { branches, default } => {
                for (cond, value) in branches {
                    cond.lhs.collect_params_ordered(seen, out);
                    cond.rhs.collect_params_ordered(seen, out);
                    value.collect_params_ordered(seen, out);
                }
                default.collect_params_ordered(seen, out);
            }
        }
    }
}

/// Evaluates `e` under `b`. Domain violations (log of a nonpositive value,
/// `0^negative`, division by zero, ...) and non-finite intermediates are
/// errors naming the offending sub-expression; NaN never propagates.
pub fn evaluate(e: &Expr, b: &Bindings) -> Result<f64, EvalError> {
    let v = match e {
        Expr::Number(v) => *v,
        Expr::Var(name) => b
            .var(name)
            .ok_or_else(|| EvalError::UnboundVar(name.clone()))?,
        Expr::Param(name) => b
            .param(name)
            .ok_or_else(|| EvalError::UnboundParam(name.clone()))?,
        Expr::Neg(inner) => -evaluate(inner, b)?,
        Expr::Binary { op, lhs, rhs } => {
            let l = evaluate(lhs, b)?;
            let r = evaluate(rhs, b)?;
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r == 0.0 {
                        return Err(domain(e, "division by zero"));
                    }
                    l / r
                }
                BinOp::Pow => {
                    if l == 0.0 && r < 0.0 {
                        return Err(domain(e, "zero raised to a negative power"));
                    }
                    if l < 0.0 && r.fract() != 0.0 {
                        return Err(domain(e, "negative base with non-integer exponent"));
                    }
                    l.powf(r)
                }
            }
        }
        Expr::Call { func, arg } => {
            let x = evaluate(arg, b)?;
            match func {
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(domain(e, "square root of a negative value"));
                    }
                    x.sqrt()
                }
                Func::Exp => x.exp(),
                Func::Log => {
                    if x <= 0.0 {
                        return Err(domain(e, "logarithm of a nonpositive value"));
                    }
                    x.ln()
                }
                Func::Log10 => {
                    if x <= 0.0 {
                        return Err(domain(e, "logarithm of a nonpositive value"));
                    }
                    x.log10()
                }
                Func::Abs => x.abs(),
            }
        }
        Expr::Piecewise { branches, default } => {
            let mut chosen = None;
            for (cond, value) in branches {
                let l = evaluate(&cond.lhs, b)?;
                let r = evaluate(&cond.rhs, b)?;
                if cond.cmp.holds(l, r) {
                    chosen = Some(value);
                    break;
                }
            }
            match chosen {
                Some(value) => evaluate(value, b)?,
                None => evaluate(default, b)?,
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite {
            expr: e.print_canonical(),
        })
    }
}

fn domain(e: &Expr, message: &str) -> EvalError {
    EvalError::Domain {
        expr: e.print_canonical(),
        message: message.to_string(),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => f.write_str(&fmt_number(*v)),
            Expr::Var(name) | Expr::Param(name) => f.write_str(name),
            Expr::Neg(inner) => write!(f, "(-{inner})"),
            Expr::Binary { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::Call { func, arg } => write!(f, "{}({arg})", func.name()),
            Expr::Piecewise { branches, default } => {
                f.write_str("piecewise(")?;
                for (cond, value) in branches {
                    write!(f, "{cond} : {value} ; ")?;
                }
                write!(f, "{default})")
            }
        }
    }
}

/// Shortest decimal that reparses to the same f64. Plain notation in the
/// mid range, exponent notation outside it. Literals are unsigned in the
/// grammar, so only non-negative finite values are printable.
fn fmt_number(v: f64) -> String {
    debug_assert!(v.is_finite());
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a < 1e-4 || a >= 1e16 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

//
// Parser
//

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Colon,
    Semi,
    Cmp(Cmp),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number `{}`", fmt_number(*v)),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Cmp(c) => format!("`{}`", c.symbol()),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push((Tok::Plus, i));
                i += 1;
            }
            '-' => {
                toks.push((Tok::Minus, i));
                i += 1;
            }
            '*' => {
                toks.push((Tok::Star, i));
                i += 1;
            }
            '/' => {
                toks.push((Tok::Slash, i));
                i += 1;
            }
            '^' => {
                toks.push((Tok::Caret, i));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            ':' => {
                toks.push((Tok::Colon, i));
                i += 1;
            }
            ';' => {
                toks.push((Tok::Semi, i));
                i += 1;
            }
            '<' | '>' => {
                let eq = i + 1 < bytes.len() && bytes[i + 1] == b'=';
                let cmp = match (c, eq) {
                    ('<', true) => Cmp::Le,
                    ('<', false) => Cmp::Lt,
                    ('>', true) => Cmp::Ge,
                    ('>', false) => Cmp::Gt,
                    _ => unreachable!(),
                };
                toks.push((Tok::Cmp(cmp), i));
                i += if eq { 2 } else { 1 };
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("invalid number literal `{lit}`"),
                })?;
                if !v.is_finite() {
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!("number literal `{lit}` out of range"),
                    });
                }
                toks.push((Tok::Num(v), start));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start));
            }
            other => {
                return Err(ParseError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    variables: &'a HashSet<&'a str>,
}

/// Parses `text` into an [`Expr`]. Identifiers in `variables` become
/// [`Expr::Var`]; every other identifier is a parameter.
pub fn parse<S: AsRef<str>>(text: &str, variables: &[S]) -> Result<Expr, ParseError> {
    let vars: HashSet<&str> = variables.iter().map(|s| s.as_ref()).collect();
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        variables: &vars,
    };
    let e = p.expr()?;
    if let Some((tok, off)) = p.peek() {
        return Err(ParseError::Syntax {
            offset: off,
            message: format!("unexpected {} after expression", tok.describe()),
        });
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<(Tok, usize)> {
        self.toks.get(self.pos).cloned()
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some((tok, _)) if tok == want => Ok(()),
            Some((tok, off)) => Err(ParseError::Syntax {
                offset: off,
                message: format!("expected {what}, found {}", tok.describe()),
            }),
            None => Err(ParseError::Syntax {
                offset: self.end,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some((tok, _)) = self.peek() {
            let op = match tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some((tok, _)) = self.peek() {
            let op = match tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.next();
            let rhs = self.factor()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if let Some((Tok::Minus, _)) = self.peek() {
            self.next();
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some((Tok::Caret, _)) = self.peek() {
            self.next();
            // The exponent re-enters at factor level: `2^-3` is legal and
            // `2^3^2` nests to the right.
            let exp = self.factor()?;
            return Ok(Expr::Binary {
                op: BinOp::Pow,
                lhs: Box::new(base),
                rhs: Box::new(exp),
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some((Tok::Num(v), _)) => Ok(Expr::Number(v)),
            Some((Tok::LParen, _)) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some((Tok::Ident(name), off)) => {
                let called = matches!(self.peek(), Some((Tok::LParen, _)));
                if name == "piecewise" {
                    if !called {
                        return Err(ParseError::Syntax {
                            offset: off,
                            message: "`piecewise` requires an argument list".into(),
                        });
                    }
                    self.next();
                    return self.piecewise_body();
                }
                if let Some(func) = Func::from_name(&name) {
                    if !called {
                        return Err(ParseError::Syntax {
                            offset: off,
                            message: format!("`{name}` is a reserved function name"),
                        });
                    }
                    self.next();
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::Call {
                        func,
                        arg: Box::new(arg),
                    });
                }
                if called {
                    return Err(ParseError::UnknownFunction { name, offset: off });
                }
                if self.variables.contains(name.as_str()) {
                    Ok(Expr::Var(name))
                } else {
                    Ok(Expr::Param(name))
                }
            }
            Some((tok, off)) => Err(ParseError::Syntax {
                offset: off,
                message: format!("unexpected {}", tok.describe()),
            }),
            None => Err(ParseError::Syntax {
                offset: self.end,
                message: "unexpected end of input".into(),
            }),
        }
    }

    /// `piecewise(` already consumed. Body: `cond : expr ; ... ; default )`.
    fn piecewise_body(&mut self) -> Result<Expr, ParseError> {
        let mut branches = Vec::new();
        loop {
            let start = self.offset();
            let first = self.expr()?;
            match self.peek() {
                Some((Tok::Cmp(cmp), _)) => {
                    self.next();
                    let rhs = self.expr()?;
                    self.expect(Tok::Colon, "`:` after piecewise condition")?;
                    let value = self.expr()?;
                    branches.push((
                        Cond {
                            lhs: first,
                            cmp,
                            rhs,
                        },
                        value,
                    ));
                    self.expect(Tok::Semi, "`;` after piecewise branch")?;
                }
                Some((Tok::RParen, _)) => {
                    self.next();
                    if branches.is_empty() {
                        return Err(ParseError::Syntax {
                            offset: start,
                            message: "piecewise needs at least one `cond : expr` branch".into(),
                        });
                    }
                    return Ok(Expr::Piecewise {
                        branches,
                        default: Box::new(first),
                    });
                }
                Some((tok, off)) => {
                    return Err(ParseError::Syntax {
                        offset: off,
                        message: format!(
                            "expected comparison or `)` in piecewise, found {}",
                            tok.describe()
                        ),
                    })
                }
                None => {
                    return Err(ParseError::Syntax {
                        offset: self.end,
                        message: "unterminated piecewise".into(),
                    })
                }
            }
        }
    }
}
