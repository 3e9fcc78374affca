//! Pratt parser for the infix expression grammar.
//!
//! Precedence, loosest first: `+ -`, `* /`, unary `-`, `^` (right-associative).
//! Exponents must fold to an integer or a half-integer (the latter becomes a
//! power of `sqrt`). Integer literals are exact; literals with a decimal
//! point or exponent are floats.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{simplify, Expr, ExprError, Func, Node, Number};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Number),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, line: tl, column: tc });
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut is_float = false;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                is_float |= chars[i] == '.';
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                    is_float = true;
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let num = if is_float {
                text.parse::<f64>().map(Number::float).map_err(|_| ExprError::Syntax {
                    line: tl,
                    column: tc,
                    message: format!("malformed number `{text}`"),
                })?
            } else {
                match text.parse::<i64>() {
                    Ok(v) => Number::int(v),
                    Err(_) => Number::float(text.parse::<f64>().unwrap_or(f64::INFINITY)),
                }
            };
            out.push(Token { tok: Tok::Num(num), line: tl, column: tc });
            continue;
        }
        if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                column: tc,
            });
            continue;
        }
        return Err(ExprError::Syntax {
            line: tl,
            column: tc,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token { tok: Tok::End, line, column: col });
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    params: Option<&'a BTreeSet<String>>,
}

const BP_SUM: u8 = 1;
const BP_PRODUCT: u8 = 3;
const BP_UNARY: u8 = 5;
const BP_POWER: u8 = 7;

impl Parser<'_> {
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

    fn error(t: &Token, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.prefix()?;
        loop {
            let op = self.peek().clone();
            let (lbp, rbp) = match op.tok {
                Tok::Plus | Tok::Minus => (BP_SUM, BP_SUM + 1),
                Tok::Star | Tok::Slash => (BP_PRODUCT, BP_PRODUCT + 1),
                Tok::Caret => (BP_POWER + 1, BP_POWER),
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.next();
            let rhs = self.expr(rbp)?;
            lhs = match op.tok {
                Tok::Plus => raw(Node::Add(vec![lhs, rhs])),
                Tok::Minus => raw(Node::Add(vec![lhs, raw_neg(rhs)])),
                Tok::Star => raw(Node::Mul(vec![lhs, rhs])),
                Tok::Slash => raw(Node::Mul(vec![lhs, raw(Node::Pow(rhs, -1))])),
                Tok::Caret => power(lhs, &rhs, &op)?,
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ExprError> {
        let t = self.next();
        match t.tok.clone() {
            Tok::Num(n) => Ok(Expr::num(n)),
            Tok::Minus => Ok(raw_neg(self.expr(BP_UNARY)?)),
            Tok::LParen => {
                let inner = self.expr(0)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    let f = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                        name: name.clone(),
                        line: t.line,
                        column: t.column,
                    })?;
                    self.next();
                    let arg = self.expr(0)?;
                    if self.peek().tok == Tok::Comma {
                        return Err(Self::error(self.peek(), format!("`{name}` takes one argument")));
                    }
                    self.expect_rparen()?;
                    return Ok(raw(Node::Func(f, arg)));
                }
                let is_param = self.params.is_some_and(|p| p.contains(&name));
                Ok(raw(if is_param {
                    Node::Param(Arc::from(name.as_str()))
                } else {
                    Node::Var(Arc::from(name.as_str()))
                }))
            }
            Tok::End => Err(Self::error(&t, "unexpected end of input")),
            other => Err(Self::error(&t, format!("unexpected token {other:?}"))),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        let t = self.next();
        if t.tok == Tok::RParen {
            Ok(())
        } else {
            Err(Self::error(&t, "expected `)`"))
        }
    }
}

fn raw(node: Node) -> Expr {
    Expr::from_node(node)
}

fn raw_neg(e: Expr) -> Expr {
    raw(Node::Mul(vec![Expr::int(-1), e]))
}

fn power(base: Expr, exponent: &Expr, at: &Token) -> Result<Expr, ExprError> {
    let folded = simplify::simplify(exponent);
    let Some(n) = folded.as_num() else {
        return Err(Parser::error(at, "exponent must be a numeric constant"));
    };
    if let Some(k) = n.as_integer() {
        return Ok(raw(Node::Pow(base, k)));
    }
    let twice = n.mul(Number::int(2));
    match twice.as_integer() {
        Some(k) => Ok(raw(Node::Pow(raw(Node::Func(Func::Sqrt, base)), k))),
        None => Err(Parser::error(at, format!("unsupported exponent {n}"))),
    }
}

fn parse_tokens(src: &str, params: Option<&BTreeSet<String>>) -> Result<Expr, ExprError> {
    let tokens = lex(src)?;
    let mut parser = Parser { tokens, pos: 0, params };
    let e = parser.expr(0)?;
    let t = parser.peek();
    if t.tok != Tok::End {
        return Err(Parser::error(t, format!("unexpected trailing {:?}", t.tok)));
    }
    Ok(e)
}

/// Literal parse tree, not canonicalized.
pub fn parse_raw(src: &str) -> Result<Expr, ExprError> {
    parse_tokens(src, None)
}

/// Parses into canonical form; every identifier becomes a variable.
pub fn parse_expr(src: &str) -> Result<Expr, ExprError> {
    parse_expr_with(src, &BTreeSet::new())
}

/// Parses into canonical form, treating names in `params` as parameters.
pub fn parse_expr_with(src: &str, params: &BTreeSet<String>) -> Result<Expr, ExprError> {
    Ok(simplify::simplify(&parse_tokens(src, Some(params))?))
}
