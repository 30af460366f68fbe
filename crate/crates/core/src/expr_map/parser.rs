//! Lexer and recursive-descent parser for map files.
//!
//! ```text
//! mapfile    := dim_decl NEWLINE component (NEWLINE component)*
//! dim_decl   := "dim" WS INT
//! component  := "f" INT WS? "=" WS? expr
//! expr       := term (("+" | "-") term)*
//! term       := factor (("*" | "/") factor)*
//! factor     := ("-")? base ("^" factor)?
//! base       := NUMBER | "pi" | "e" | "x" INT | FUNC "(" expr ")" | "(" expr ")"
//! ```
//!
//! `#` starts a comment running to the end of the line. Blank lines are
//! ignored, and line breaks inside parentheses do not end a component.

use crate::error::ParseError;

use super::ast::{BinaryOp, Expr, MapAst, UnaryOp};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Equals,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Number(v) => format!("number `{v}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn error(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, column, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut depth = 0usize;

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let mut push = |tok: Tok| tokens.push(Token { tok, line: start_line, column: start_col });
        match c {
            '\n' => {
                if depth == 0 {
                    push(Tok::Newline);
                }
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
                continue;
            }
            c if c.is_whitespace() => {}
            '+' => push(Tok::Plus),
            '-' => push(Tok::Minus),
            '*' => push(Tok::Star),
            '/' => push(Tok::Slash),
            '^' => push(Tok::Caret),
            '=' => push(Tok::Equals),
            '(' => {
                depth += 1;
                push(Tok::LParen);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                push(Tok::RParen);
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j < chars.len() && chars[j] == '.' {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                // Exponent only when followed by digits, so `2*e` stays a constant.
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let s: String = chars[i..j].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| error(line, col, format!("malformed number `{s}`")))?;
                if !v.is_finite() {
                    return Err(error(line, col, format!("number `{s}` is out of range")));
                }
                push(Tok::Number(v));
                col += j - i;
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                push(Tok::Ident(chars[i..j].iter().collect()));
                col += j - i;
                i = j;
                continue;
            }
            other => return Err(error(line, col, format!("unexpected character `{other}`"))),
        }
        i += 1;
        col += 1;
    }
    tokens.push(Token { tok: Tok::Eof, line, column: col });
    Ok(tokens)
}

/// Splits `prefix<digits>` identifiers such as `x3` or `f12`.
fn indexed(ident: &str, prefix: char) -> Option<usize> {
    let rest = ident.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, tok: &Token, expected: &str) -> ParseError {
        let found = match tok.tok {
            Tok::Eof => "unexpected end of input".to_string(),
            ref t => format!("unexpected {}", t.describe()),
        };
        error(tok.line, tok.column, format!("{found}, expected {expected}"))
    }

    fn skip_newlines(&mut self) {
        while self.peek().tok == Tok::Newline {
            self.next();
        }
    }

    fn positive_int(&mut self, what: &str) -> Result<usize, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Number(v) if v >= 1.0 && v.fract() == 0.0 && v <= 1e6 => Ok(v as usize),
            _ => Err(self.unexpected(&t, what)),
        }
    }

    fn mapfile(&mut self) -> Result<MapAst, ParseError> {
        self.skip_newlines();
        let t = self.next();
        if t.tok != Tok::Ident("dim".into()) {
            return Err(self.unexpected(&t, "`dim`"));
        }
        self.dim = self.positive_int("a positive integer dimension")?;
        let mut components: Vec<Option<Expr>> = vec![None; self.dim];

        loop {
            let t = self.next();
            match t.tok {
                Tok::Newline => self.skip_newlines(),
                Tok::Eof => break,
                _ => return Err(self.unexpected(&t, "end of line")),
            }
            let head = self.next();
            let index = match &head.tok {
                Tok::Eof => break,
                Tok::Ident(s) => indexed(s, 'f')
                    .ok_or_else(|| self.unexpected(&head, "a component name like `f1`"))?,
                _ => return Err(self.unexpected(&head, "a component name like `f1`")),
            };
            if index == 0 || index > self.dim {
                return Err(error(
                    head.line,
                    head.column,
                    format!("component f{index} out of range 1..={}", self.dim),
                ));
            }
            if components[index - 1].is_some() {
                return Err(error(head.line, head.column, format!("component f{index} defined twice")));
            }
            let eq = self.next();
            if eq.tok != Tok::Equals {
                return Err(self.unexpected(&eq, "`=`"));
            }
            components[index - 1] = Some(self.expr()?);
        }

        let eof = self.peek().clone();
        let components = components
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                c.ok_or_else(|| error(eof.line, eof.column, format!("missing component f{}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MapAst { dim: self.dim, components })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            lhs = Expr::binary(op, lhs, self.factor()?);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let negate = self.peek().tok == Tok::Minus;
        if negate {
            self.next();
        }
        let base = self.base()?;
        let body = if self.peek().tok == Tok::Caret {
            self.next();
            Expr::binary(BinaryOp::Pow, base, self.factor()?)
        } else {
            base
        };
        Ok(if negate { Expr::unary(UnaryOp::Neg, body) } else { body })
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Number(v) => Ok(Expr::Const(*v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.close_paren()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if name == "e" {
                    return Ok(Expr::Const(std::f64::consts::E));
                }
                if let Some(k) = indexed(name, 'x') {
                    if k == 0 || k > self.dim {
                        return Err(error(
                            t.line,
                            t.column,
                            format!("variable x{k} out of range x1..x{}", self.dim),
                        ));
                    }
                    return Ok(Expr::Var(k));
                }
                if let Some(op) = UnaryOp::from_function_name(name) {
                    let open = self.next();
                    if open.tok != Tok::LParen {
                        return Err(self.unexpected(&open, "`(`"));
                    }
                    let arg = self.expr()?;
                    self.close_paren()?;
                    return Ok(Expr::unary(op, arg));
                }
                Err(error(t.line, t.column, format!("unknown identifier `{name}`")))
            }
            _ => Err(self.unexpected(&t, "an expression")),
        }
    }

    fn close_paren(&mut self) -> Result<(), ParseError> {
        let t = self.next();
        if t.tok == Tok::RParen {
            Ok(())
        } else {
            Err(self.unexpected(&t, "`)`"))
        }
    }
}

/// Parses a map file into its syntax tree.
pub fn parse(text: &str) -> Result<MapAst, ParseError> {
    let tokens = lex(text)?;
    Parser { tokens, pos: 0, dim: 0 }.mapfile()
}
