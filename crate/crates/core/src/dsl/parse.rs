//! Recursive-descent parser for the cost DSL.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | factor
//! factor := atom ['^' int]
//! atom   := number | ident | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! Identifiers naming a stage variable resolve to [`CostExpr::Var`]; any
//! other bare identifier is a parameter reference. A `-` directly in front
//! of a numeric literal (not raised to a power) folds into the constant.

use super::ast::{CostExpr, Func, Var, MAX_EXPONENT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

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
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
    text: String,
}

fn syntax(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number `{text}`")))?;
                out.push(Token {
                    tok: Tok::Num(value),
                    offset: start,
                    text: text.to_string(),
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let text = &src[start..i];
                out.push(Token {
                    tok: Tok::Ident(text.to_string()),
                    offset: start,
                    text: text.to_string(),
                });
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap();
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        i += 1;
        out.push(Token {
            tok,
            offset: start,
            text: src[start..i].to_string(),
        });
    }
    out.push(Token {
        tok: Tok::End,
        offset: src.len(),
        text: String::new(),
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let idx = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            let t = self.peek();
            Err(syntax(
                t.offset,
                format!("expected {what}, found {}", describe(t)),
            ))
        }
    }

    fn expr(&mut self) -> Result<CostExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    lhs = lhs + self.term()?;
                }
                Tok::Minus => {
                    self.bump();
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<CostExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    lhs = lhs * self.unary()?;
                }
                Tok::Slash => {
                    self.bump();
                    lhs = lhs / self.unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<CostExpr, ParseError> {
        if self.peek().tok != Tok::Minus {
            return self.factor();
        }
        self.bump();
        if let (Tok::Num(n), next) = (self.peek_at(0).clone(), self.peek_at(1)) {
            if *next != Tok::Caret {
                self.bump();
                return Ok(CostExpr::Const(-n));
            }
        }
        Ok(-self.unary()?)
    }

    fn factor(&mut self) -> Result<CostExpr, ParseError> {
        let base = self.atom()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let t = self.bump();
        match t.tok {
            Tok::Num(_) if t.text.bytes().all(|b| b.is_ascii_digit()) => {
                let n: u32 = t
                    .text
                    .parse()
                    .map_err(|_| syntax(t.offset, "exponent out of range"))?;
                if n > MAX_EXPONENT {
                    return Err(syntax(
                        t.offset,
                        format!("exponent {n} exceeds the maximum of {MAX_EXPONENT}"),
                    ));
                }
                Ok(base.pow(n))
            }
            _ => Err(syntax(
                t.offset,
                format!(
                    "exponent must be a non-negative integer, found {}",
                    describe(&t)
                ),
            )),
        }
    }

    fn atom(&mut self) -> Result<CostExpr, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Num(n) => Ok(CostExpr::Const(n)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    self.call(name, t.offset)
                } else if let Some(v) = Var::from_name(&name) {
                    Ok(CostExpr::Var(v))
                } else if Func::from_name(&name).is_some() {
                    Err(syntax(
                        t.offset,
                        format!("function `{name}` must be called"),
                    ))
                } else {
                    Ok(CostExpr::Param(name))
                }
            }
            _ => Err(syntax(
                t.offset,
                format!(
                    "expected a number, identifier or `(`, found {}",
                    describe(&t)
                ),
            )),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<CostExpr, ParseError> {
        let func = Func::from_name(&name).ok_or_else(|| ParseError::UnknownIdentifier {
            name: name.clone(),
            offset,
        })?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        if args.len() != func.arity() {
            return Err(ParseError::Arity {
                name,
                offset,
                expected: func.arity(),
                found: args.len(),
            });
        }
        let mut it = args.into_iter().map(Box::new);
        let mut next = || it.next().unwrap();
        Ok(match func {
            Func::IfElse => CostExpr::IfElse(next(), next(), next()),
            Func::Min => CostExpr::Min(next(), next()),
            Func::Max => CostExpr::Max(next(), next()),
            Func::Sqrt => CostExpr::Sqrt(next()),
            Func::AbsSmooth => CostExpr::AbsSmooth(next()),
        })
    }
}

fn describe(t: &Token) -> String {
    match t.tok {
        Tok::End => "end of input".to_string(),
        _ => format!("`{}`", t.text),
    }
}

/// Parses DSL source text into an expression tree.
pub fn parse_expr(source: &str) -> Result<CostExpr, ParseError> {
    let tokens = lex(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    let t = p.peek();
    if t.tok != Tok::End {
        return Err(syntax(t.offset, format!("unexpected {}", describe(t))));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ast::Var;

    fn v(x: Var) -> CostExpr {
        CostExpr::var(x)
    }

    #[test]
    fn velocity_term() {
        let e = parse_expr("(v - v_ref)^2").unwrap();
        assert_eq!(e, (v(Var::V) - CostExpr::param("v_ref")).pow(2));
    }

    #[test]
    fn inverse_distance_term() {
        let e = parse_expr("1/((oh_x - px)^2 + (oh_y - py)^2 + eps)").unwrap();
        let d2 = (v(Var::OhX) - v(Var::Px)).pow(2) + (v(Var::OhY) - v(Var::Py)).pow(2);
        assert_eq!(e, CostExpr::Const(1.0) / (d2 + CostExpr::param("eps")));
    }

    #[test]
    fn conditional_term() {
        let d2 = "((oh_x - px)^2 + (oh_y - py)^2)";
        let src = format!("if_else({d2} - d_safe, 0, ({d2} - d_safe)^2)");
        let e = parse_expr(&src).unwrap();
        let d2e = (v(Var::OhX) - v(Var::Px)).pow(2) + (v(Var::OhY) - v(Var::Py)).pow(2);
        let gap = d2e - CostExpr::param("d_safe");
        assert_eq!(
            e,
            CostExpr::if_else(gap.clone(), CostExpr::Const(0.0), gap.pow(2))
        );
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("a - omega - 1 * v / 2").unwrap();
        let expect = (v(Var::A) - v(Var::Omega))
            - ((CostExpr::Const(1.0) * v(Var::V)) / CostExpr::Const(2.0));
        assert_eq!(e, expect);
        assert_eq!(parse_expr("-2^2").unwrap(), -CostExpr::Const(2.0).pow(2));
        assert_eq!(parse_expr("-2").unwrap(), CostExpr::Const(-2.0));
        assert_eq!(parse_expr("1.5e-3").unwrap(), CostExpr::Const(1.5e-3));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let err = parse_expr("(v - v_ref").unwrap_err();
        assert!(
            matches!(err, ParseError::Syntax { offset: 10, .. }),
            "{err:?}"
        );
        let err = parse_expr("v + * a").unwrap_err();
        assert_eq!(err.offset(), 4);
        let err = parse_expr("v $ a").unwrap_err();
        assert_eq!(err.offset(), 2);
        let err = parse_expr("v^1.5").unwrap_err();
        assert_eq!(err.offset(), 2);
        let err = parse_expr("v a").unwrap_err();
        assert_eq!(err.offset(), 2);
    }

    #[test]
    fn unknown_function_and_arity() {
        assert_eq!(
            parse_expr("exp(v)").unwrap_err(),
            ParseError::UnknownIdentifier {
                name: "exp".into(),
                offset: 0
            }
        );
        assert!(matches!(
            parse_expr("1 + min(v)").unwrap_err(),
            ParseError::Arity {
                offset: 4,
                expected: 2,
                found: 1,
                ..
            }
        ));
        assert!(matches!(
            parse_expr("if_else(v, a)").unwrap_err(),
            ParseError::Arity {
                expected: 3,
                found: 2,
                ..
            }
        ));
    }
}
