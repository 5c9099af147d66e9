use std::collections::BTreeMap;

use super::{BinOp, DslError, Expr, UnaryOp, Var};
use crate::scm::{AMechanism, NoiseSpec, Scm};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    /// Newline or `;`.
    End,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut column) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = (line, column);
        let push = |out: &mut Vec<Token>, tok| {
            out.push(Token {
                tok,
                line: start.0,
                column: start.1,
            })
        };
        if c == '\n' || c == ';' {
            push(&mut out, Tok::End);
            i += 1;
            if c == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
        } else if c.is_whitespace() {
            i += 1;
            column += 1;
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let begin = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[begin..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| DslError::Syntax {
                line,
                column,
                msg: format!("malformed number {s:?}"),
            })?;
            push(&mut out, Tok::Num(v));
            column += i - begin;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let begin = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            push(&mut out, Tok::Ident(chars[begin..i].iter().collect()));
            column += i - begin;
        } else if "+-*/()=~,".contains(c) {
            push(&mut out, Tok::Sym(c));
            i += 1;
            column += 1;
        } else {
            return Err(DslError::Syntax {
                line,
                column,
                msg: format!("unexpected character {c:?}"),
            });
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

fn resolve(name: &str) -> Option<Var> {
    match name {
        "A" => return Some(Var::A),
        "UA" => return Some(Var::UA),
        _ => {}
    }
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let i: usize = digits.parse().ok().filter(|&i| i >= 1)?;
    match head {
        "X" => Some(Var::X(i)),
        "U" => Some(Var::U(i)),
        _ => None,
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Variable occurrences with their positions, for later diagnostics.
    seen: Vec<(Var, usize, usize)>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, t: &Token, msg: impl Into<String>) -> Result<T, DslError> {
        Err(DslError::Syntax {
            line: t.line,
            column: t.column,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), DslError> {
        let t = self.next();
        if t.tok == Tok::Sym(c) {
            Ok(())
        } else {
            self.error(&t, format!("expected '{c}', found {}", describe(&t.tok)))
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            lhs = Expr::bin(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            lhs = Expr::bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.peek().tok == Tok::Sym('-') {
            self.next();
            return Ok(Expr::unary(UnaryOp::Neg, self.unary()?));
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr, DslError> {
        let t = self.next();
        match &t.tok {
            Tok::Num(v) => Ok(Expr::Num(*v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "exp" => Some(UnaryOp::Exp),
                    "ind" => Some(UnaryOp::Ind),
                    "neg" => Some(UnaryOp::Neg),
                    _ => None,
                };
                if let Some(op) = func {
                    self.expect('(')?;
                    let e = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::unary(op, e));
                }
                match resolve(name) {
                    Some(v) => {
                        self.seen.push((v, t.line, t.column));
                        Ok(Expr::Var(v))
                    }
                    None => Err(DslError::Undeclared {
                        line: t.line,
                        column: t.column,
                        name: name.clone(),
                    }),
                }
            }
            other => self.error(&t, format!("expected an expression, found {}", describe(other))),
        }
    }

    fn signed_number(&mut self) -> Result<f64, DslError> {
        let neg = self.peek().tok == Tok::Sym('-');
        if neg {
            self.next();
        }
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(if neg { -v } else { v }),
            ref other => self.error(&t, format!("expected a number, found {}", describe(other))),
        }
    }

    fn noise_spec(&mut self) -> Result<NoiseSpec, DslError> {
        let t = self.next();
        let Tok::Ident(name) = &t.tok else {
            return self.error(&t, "expected a distribution name");
        };
        self.expect('(')?;
        let mut args = vec![self.signed_number()?];
        while self.peek().tok == Tok::Sym(',') {
            self.next();
            args.push(self.signed_number()?);
        }
        self.expect(')')?;
        let spec = match (name.as_str(), args.as_slice()) {
            ("uniform", &[lo, hi]) => NoiseSpec::Uniform { lo, hi },
            ("gaussian", &[mean, sd]) => NoiseSpec::Gaussian { mean, sd },
            ("point", &[value]) => NoiseSpec::Point { value },
            _ => return self.error(&t, format!("unknown distribution {name} with {} argument(s)", args.len())),
        };
        spec.validate().map_err(|msg| DslError::Noise { line: t.line, msg })?;
        Ok(spec)
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Sym(c) => format!("'{c}'"),
        Tok::End => "end of statement".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses a single expression.
pub fn parse_expr(text: &str) -> Result<Expr, DslError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        seen: Vec::new(),
    };
    let e = p.expr()?;
    while p.peek().tok == Tok::End {
        p.next();
    }
    let t = p.peek().clone();
    if t.tok != Tok::Eof {
        return p.error(&t, format!("unexpected {}", describe(&t.tok)));
    }
    Ok(e)
}

/// Equations and noise declarations as written, before model assembly.
#[derive(Debug, Clone, Default)]
struct ParsedModel {
    x: BTreeMap<usize, Expr>,
    a: Option<Expr>,
    noise: BTreeMap<usize, NoiseSpec>,
    noise_a: Option<NoiseSpec>,
}

struct Occurrence {
    var: Var,
    line: usize,
    column: usize,
}

fn parse_model(text: &str) -> Result<(ParsedModel, Vec<(Var, usize, Vec<Occurrence>)>), DslError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        seen: Vec::new(),
    };
    let mut model = ParsedModel::default();
    let mut stmts = Vec::new();
    loop {
        while p.peek().tok == Tok::End {
            p.next();
        }
        let t = p.next();
        let name = match &t.tok {
            Tok::Eof => break,
            Tok::Ident(name) => name.clone(),
            other => return p.error(&t, format!("expected a variable, found {}", describe(other))),
        };
        let Some(var) = resolve(&name) else {
            return Err(DslError::Undeclared {
                line: t.line,
                column: t.column,
                name,
            });
        };
        let sep = p.next();
        match (&sep.tok, var) {
            (Tok::Sym('='), Var::X(_) | Var::A) => {
                p.seen.clear();
                let e = p.expr()?;
                let occurrences = p
                    .seen
                    .drain(..)
                    .map(|(var, line, column)| Occurrence { var, line, column })
                    .collect();
                let slot = match var {
                    Var::X(i) => model.x.insert(i, e),
                    _ => model.a.replace(e),
                };
                if slot.is_some() {
                    return Err(DslError::Duplicate { line: t.line, name });
                }
                stmts.push((var, t.line, occurrences));
            }
            (Tok::Sym('~'), Var::U(_) | Var::UA) => {
                let spec = p.noise_spec()?;
                let dup = match var {
                    Var::U(i) => model.noise.insert(i, spec).is_some(),
                    _ => model.noise_a.replace(spec).is_some(),
                };
                if dup {
                    return Err(DslError::Duplicate { line: t.line, name });
                }
            }
            (Tok::Sym('='), _) => {
                return p.error(&t, format!("{name} is a noise symbol; declare its law with '~'"));
            }
            (Tok::Sym('~'), _) => return p.error(&t, format!("{name} is not a noise symbol")),
            (other, _) => return p.error(&sep, format!("expected '=' or '~', found {}", describe(other))),
        }
        let end = p.next();
        if !matches!(end.tok, Tok::End | Tok::Eof) {
            return p.error(&end, format!("unexpected {} after statement", describe(&end.tok)));
        }
        if end.tok == Tok::Eof {
            break;
        }
    }
    Ok((model, stmts))
}

/// Parses a model and assembles it into an [`Scm`].
///
/// The endogenous block must be `X1..Xd` without gaps. Equation `Xi` may
/// use `Ui` at most once and no other noise; `A` may use `UA`. A missing
/// `A` equation means `A = UA`.
pub fn parse_scm(text: &str) -> Result<Scm, DslError> {
    let (model, stmts) = parse_model(text)?;
    let d = model.x.len();
    if d == 0 {
        return Err(DslError::Model("model has no X equations".into()));
    }
    if let Some((&i, _)) = model.x.iter().find(|(&i, _)| i > d) {
        let missing = (1..=d).find(|k| !model.x.contains_key(k)).unwrap_or(d);
        return Err(DslError::Model(format!("X{i} is defined but X{missing} has no equation")));
    }
    for (lhs, line, occ) in &stmts {
        let own_noise = match lhs {
            Var::X(i) => Var::U(*i),
            _ => Var::UA,
        };
        let mut noise_count = 0;
        for o in occ {
            match o.var {
                v if v == *lhs => {
                    return Err(DslError::SelfReference {
                        line: *line,
                        name: lhs.to_string(),
                    })
                }
                Var::X(j) if j > d => {
                    return Err(DslError::Undeclared {
                        line: o.line,
                        column: o.column,
                        name: o.var.to_string(),
                    })
                }
                v @ (Var::U(_) | Var::UA) if v != own_noise => {
                    return Err(DslError::Noise {
                        line: o.line,
                        msg: format!("{v} may only appear in the equation of its own node, not in {lhs}"),
                    })
                }
                v if v == own_noise => noise_count += 1,
                _ => {}
            }
        }
        if noise_count > 1 {
            return Err(DslError::Noise {
                line: *line,
                msg: format!("{own_noise} appears {noise_count} times; at most once is allowed"),
            });
        }
        if noise_count == 0 && matches!(lhs, Var::X(_)) {
            return Err(DslError::Noise {
                line: *line,
                msg: format!("{lhs} does not use its noise {own_noise}; degenerate mechanisms are not supported"),
            });
        }
    }
    for &i in model.noise.keys() {
        if i > d {
            return Err(DslError::Model(format!("U{i} is declared but there is no X{i}")));
        }
    }
    let equations: Vec<Expr> = model.x.into_values().collect();
    let noise = (1..=d).map(|i| model.noise.get(&i).copied().unwrap_or_default()).collect();
    Scm::new(
        equations,
        AMechanism::Equation(model.a.unwrap_or(Expr::Var(Var::UA))),
        noise,
        model.noise_a.unwrap_or_default(),
    )
    .map_err(|e| DslError::Model(e.to_string()))
}
