//! Tokenizer and recursive-descent parser for filter expressions.
//!
//! ```text
//! expr  := or
//! or    := and (OR and)*
//! and   := not (AND not)*
//! not   := NOT not | prim
//! prim  := '(' expr ')' | pred | lit cmpop lit
//! pred  := ident cmpop lit | ident IN '(' lit (',' lit)* ')' | ident LIKE string
//! ```

use super::ast::{CmpOp, Expr, Literal};
use super::QueryError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Op(CmpOp),
    LParen,
    RParen,
    Comma,
    And,
    Or,
    Not,
    In,
    Like,
    True,
    False,
    Null,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Op(op) => format!("'{}'", op.symbol()),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::And => "AND".into(),
            Tok::Or => "OR".into(),
            Tok::Not => "NOT".into(),
            Tok::In => "IN".into(),
            Tok::Like => "LIKE".into(),
            Tok::True => "TRUE".into(),
            Tok::False => "FALSE".into(),
            Tok::Null => "NULL".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Token {
    tok: Tok,
    offset: usize,
}

fn parse_error(offset: usize, expected: &[&str], found: impl Into<String>) -> QueryError {
    QueryError::Parse {
        offset,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: found.into(),
    }
}

fn tokenize(input: &str) -> Result<Vec<Token>, QueryError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => {
                out.push(Token { tok: Tok::LParen, offset: start });
                i += 1;
            }
            b')' => {
                out.push(Token { tok: Tok::RParen, offset: start });
                i += 1;
            }
            b',' => {
                out.push(Token { tok: Tok::Comma, offset: start });
                i += 1;
            }
            b'=' => {
                out.push(Token { tok: Tok::Op(CmpOp::Eq), offset: start });
                i += 1;
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Token { tok: Tok::Op(CmpOp::Ne), offset: start });
                    i += 2;
                } else {
                    return Err(parse_error(start, &["!="], "'!'"));
                }
            }
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'<', false) => CmpOp::Lt,
                    (b'<', true) => CmpOp::Le,
                    (_, false) => CmpOp::Gt,
                    (_, true) => CmpOp::Ge,
                };
                out.push(Token { tok: Tok::Op(op), offset: start });
                i += if eq { 2 } else { 1 };
            }
            b'\'' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match input[i..].find('\'') {
                        None => return Err(parse_error(input.len(), &["'"], "end of input")),
                        Some(rel) => {
                            s.push_str(&input[i..i + rel]);
                            i += rel + 1;
                            if bytes.get(i) == Some(&b'\'') {
                                s.push('\'');
                                i += 1;
                            } else {
                                break;
                            }
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(s), offset: start });
            }
            b'-' | b'0'..=b'9' => {
                let (n, len) = scan_number(&input[i..])
                    .ok_or_else(|| parse_error(start, &["number"], format!("{:?}", c as char)))?;
                out.push(Token { tok: Tok::Num(n), offset: start });
                i += len;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
                {
                    i += 1;
                }
                let word = &input[start..i];
                let tok = match word.to_ascii_uppercase().as_str() {
                    "AND" => Tok::And,
                    "OR" => Tok::Or,
                    "NOT" => Tok::Not,
                    "IN" => Tok::In,
                    "LIKE" => Tok::Like,
                    "TRUE" => Tok::True,
                    "FALSE" => Tok::False,
                    "NULL" => Tok::Null,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push(Token { tok, offset: start });
            }
            _ => {
                let ch = input[i..].chars().next().unwrap_or('?');
                return Err(parse_error(start, &["expression"], format!("{ch:?}")));
            }
        }
    }
    out.push(Token { tok: Tok::Eof, offset: input.len() });
    Ok(out)
}

/// `-?digits(.digits)?([eE][+-]?digits)?`; returns the value and byte length.
fn scan_number(s: &str) -> Option<(f64, usize)> {
    let b = s.as_bytes();
    let mut i = 0;
    if b.first() == Some(&b'-') {
        i += 1;
    }
    let digits = |mut j: usize| {
        let from = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        (j > from).then_some(j)
    };
    i = digits(i)?;
    if b.get(i) == Some(&b'.') {
        i = digits(i + 1)?;
    }
    if matches!(b.get(i), Some(b'e' | b'E')) {
        let mut j = i + 1;
        if matches!(b.get(j), Some(b'+' | b'-')) {
            j += 1;
        }
        i = digits(j)?;
    }
    s[..i].parse().ok().map(|n| (n, i))
}

const LITERAL: &[&str] = &["literal"];
const PREDICATE_START: &[&str] = &["identifier", "NOT", "("];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> &Token {
        let t = &self.tokens[self.pos];
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn fail(&self, expected: &[&str]) -> QueryError {
        let t = self.peek();
        parse_error(t.offset, expected, t.tok.describe())
    }

    fn or(&mut self) -> Result<Expr, QueryError> {
        let mut children = vec![self.and()?];
        while self.peek().tok == Tok::Or {
            self.bump();
            children.push(self.and()?);
        }
        Ok(collapse(children, Expr::Or))
    }

    fn and(&mut self) -> Result<Expr, QueryError> {
        let mut children = vec![self.not()?];
        while self.peek().tok == Tok::And {
            self.bump();
            children.push(self.not()?);
        }
        Ok(collapse(children, Expr::And))
    }

    fn not(&mut self) -> Result<Expr, QueryError> {
        if self.peek().tok == Tok::Not {
            self.bump();
            return Ok(Expr::not(self.not()?));
        }
        self.prim()
    }

    fn prim(&mut self) -> Result<Expr, QueryError> {
        match self.peek().tok.clone() {
            Tok::LParen => {
                self.bump();
                let e = self.or()?;
                if self.peek().tok != Tok::RParen {
                    return Err(self.fail(&["AND", "OR", ")"]));
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(field) => {
                self.bump();
                self.pred(field)
            }
            Tok::Str(_) | Tok::Num(_) | Tok::True | Tok::False | Tok::Null => self.constant(),
            _ => Err(self.fail(PREDICATE_START)),
        }
    }

    /// `lit cmpop lit`, folded to a constant.
    fn constant(&mut self) -> Result<Expr, QueryError> {
        let lhs = self.literal()?;
        let op = match self.peek().tok {
            Tok::Op(op) => op,
            _ => return Err(self.fail(&["=", "!=", "<", "<=", ">", ">="])),
        };
        self.bump();
        let rhs = self.literal()?;
        let lhs = match lhs {
            Literal::Str(s) => serde_json::Value::String(s),
            Literal::Num(n) => serde_json::json!(n),
            Literal::Bool(b) => serde_json::Value::Bool(b),
            Literal::Null => serde_json::Value::Null,
        };
        let value = super::eval::compare("<constant>", op, &rhs, Some(&lhs))?;
        Ok(Expr::Const(value))
    }

    fn pred(&mut self, field: String) -> Result<Expr, QueryError> {
        match self.peek().tok.clone() {
            Tok::Op(op) => {
                self.bump();
                let value = self.literal()?;
                Ok(Expr::Cmp { field, op, value })
            }
            Tok::In => {
                self.bump();
                if self.peek().tok != Tok::LParen {
                    return Err(self.fail(&["("]));
                }
                self.bump();
                let mut values = vec![self.literal()?];
                loop {
                    match self.peek().tok {
                        Tok::Comma => {
                            self.bump();
                            values.push(self.literal()?);
                        }
                        Tok::RParen => {
                            self.bump();
                            break;
                        }
                        _ => return Err(self.fail(&[",", ")"])),
                    }
                }
                Ok(Expr::In { field, values })
            }
            Tok::Like => {
                self.bump();
                match self.peek().tok.clone() {
                    Tok::Str(pattern) => {
                        self.bump();
                        Ok(Expr::Like { field, pattern })
                    }
                    _ => Err(self.fail(&["string"])),
                }
            }
            _ => Err(self.fail(&["=", "!=", "<", "<=", ">", ">=", "IN", "LIKE"])),
        }
    }

    fn literal(&mut self) -> Result<Literal, QueryError> {
        let lit = match &self.peek().tok {
            Tok::Str(s) => Literal::Str(s.clone()),
            Tok::Num(n) => Literal::Num(*n),
            Tok::True => Literal::Bool(true),
            Tok::False => Literal::Bool(false),
            Tok::Null => Literal::Null,
            _ => return Err(self.fail(LITERAL)),
        };
        self.bump();
        Ok(lit)
    }
}

fn collapse(mut children: Vec<Expr>, make: fn(Vec<Expr>) -> Expr) -> Expr {
    if children.len() == 1 {
        children.pop().expect("one child")
    } else {
        make(children)
    }
}

/// Parses a filter expression.
pub fn parse(text: &str) -> Result<Expr, QueryError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    if p.peek().tok == Tok::Eof {
        return Err(p.fail(PREDICATE_START));
    }
    let expr = p.or()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.fail(&["AND", "OR", "end of input"]));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &str) -> Literal {
        Literal::Str(v.into())
    }

    #[test]
    fn conjunction_with_in_list() {
        let e = parse("vehicle_type = 'SUV' AND region IN ('US','EU')").unwrap();
        assert_eq!(
            e,
            Expr::And(vec![
                Expr::cmp("vehicle_type", CmpOp::Eq, s("SUV")),
                Expr::In {
                    field: "region".into(),
                    values: vec![s("US"), s("EU")]
                },
            ])
        );
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let e = parse("a = 1 OR b = 2 AND c = 3").unwrap();
        assert_eq!(
            e,
            Expr::Or(vec![
                Expr::cmp("a", CmpOp::Eq, Literal::Num(1.0)),
                Expr::And(vec![
                    Expr::cmp("b", CmpOp::Eq, Literal::Num(2.0)),
                    Expr::cmp("c", CmpOp::Eq, Literal::Num(3.0)),
                ]),
            ])
        );
    }

    #[test]
    fn not_binds_tightest() {
        let e = parse("NOT a = 1 AND b = 2").unwrap();
        assert_eq!(
            e,
            Expr::And(vec![
                Expr::not(Expr::cmp("a", CmpOp::Eq, Literal::Num(1.0))),
                Expr::cmp("b", CmpOp::Eq, Literal::Num(2.0)),
            ])
        );
    }

    #[test]
    fn missing_literal_reports_offset() {
        match parse("vehicle_type = ").unwrap_err() {
            QueryError::Parse {
                offset, expected, ..
            } => {
                assert_eq!(offset, 15);
                assert_eq!(expected, vec!["literal".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keywords_case_insensitive_identifiers_not() {
        let e = parse("Make = 'x' and not make like 'y%'").unwrap();
        assert_eq!(
            e,
            Expr::And(vec![
                Expr::cmp("Make", CmpOp::Eq, s("x")),
                Expr::not(Expr::Like {
                    field: "make".into(),
                    pattern: "y%".into()
                }),
            ])
        );
    }

    #[test]
    fn literals_and_escapes() {
        let e = parse("a = 'it''s' OR b >= -2.5e1 OR c != null OR d = TRUE").unwrap();
        let Expr::Or(children) = e else { panic!() };
        assert_eq!(children[0], Expr::cmp("a", CmpOp::Eq, s("it's")));
        assert_eq!(children[1], Expr::cmp("b", CmpOp::Ge, Literal::Num(-25.0)));
        assert_eq!(children[2], Expr::cmp("c", CmpOp::Ne, Literal::Null));
        assert_eq!(children[3], Expr::cmp("d", CmpOp::Eq, Literal::Bool(true)));
    }

    #[test]
    fn dotted_identifiers() {
        let e = parse("meta.camera.id <= 3").unwrap();
        assert_eq!(e, Expr::cmp("meta.camera.id", CmpOp::Le, Literal::Num(3.0)));
    }

    #[test]
    fn error_cases() {
        for (text, offset) in [
            ("", 0),
            ("a", 1),
            ("a = 1 AND", 9),
            ("(a = 1", 6),
            ("a IN ()", 6),
            ("a LIKE 3", 7),
            ("a = 'open", 9),
            ("a = 1 b = 2", 6),
            ("a ! 1", 2),
            ("a = #", 4),
            ("1 LIKE 'x'", 2),
        ] {
            match parse(text) {
                Err(QueryError::Parse { offset: o, .. }) => assert_eq!(o, offset, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn canonical_form_round_trips() {
        for text in [
            "a = 1 OR b = 2 AND c = 3",
            "(a = 1 OR b = 2) AND c = 3",
            "NOT (a = 1 AND b = 'x')",
            "NOT NOT a LIKE '%x_'",
            "((a = 1 AND b = 2) AND c = 3)",
            "x IN ('a', 1, NULL, FALSE)",
            "n > 0.30000000000000004",
            "1 = 1 AND 2 > 3",
        ] {
            let e = parse(text).unwrap();
            let again = parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{text} -> {e}");
        }
    }
}
