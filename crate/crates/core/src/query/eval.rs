//! Two-valued evaluation of filter expressions against attribute rows.
//!
//! Rules:
//! - a predicate on an attribute the row lacks is false;
//! - `NULL` may only appear with `=` / `!=`;
//! - ordering needs both sides numeric or both strings (byte-wise);
//! - equality across different non-null types is a type error;
//! - `LIKE` applies to strings only.

use std::cmp::Ordering;

use serde_json::Value;

use super::ast::{CmpOp, Expr, Literal};
use super::QueryError;

/// Anything that exposes named scalar attributes.
pub trait Row {
    fn get(&self, field: &str) -> Option<&Value>;
}

impl Row for serde_json::Map<String, Value> {
    fn get(&self, field: &str) -> Option<&Value> {
        serde_json::Map::get(self, field)
    }
}

impl Row for std::collections::BTreeMap<String, Value> {
    fn get(&self, field: &str) -> Option<&Value> {
        std::collections::BTreeMap::get(self, field)
    }
}

pub fn evaluate<R: Row + ?Sized>(expr: &Expr, row: &R) -> Result<bool, QueryError> {
    match expr {
        Expr::And(children) => {
            // evaluate every child so type errors surface independent of order
            let mut all = true;
            for c in children {
                all &= evaluate(c, row)?;
            }
            Ok(all)
        }
        Expr::Or(children) => {
            let mut any = false;
            for c in children {
                any |= evaluate(c, row)?;
            }
            Ok(any)
        }
        Expr::Not(inner) => Ok(!evaluate(inner, row)?),
        Expr::Const(b) => Ok(*b),
        Expr::Cmp { field, op, value } => compare(field, *op, value, row.get(field)),
        Expr::In { field, values } => {
            let actual = row.get(field);
            let mut hit = false;
            for v in values {
                hit |= compare(field, CmpOp::Eq, v, actual)?;
            }
            Ok(hit)
        }
        Expr::Like { field, pattern } => match row.get(field) {
            None | Some(Value::Null) => Ok(false),
            Some(Value::String(s)) => Ok(like_match(s, pattern)),
            Some(other) => Err(type_error(
                field,
                format!("LIKE needs a string, found {}", value_type(other)),
            )),
        },
    }
}

fn type_error(field: &str, message: String) -> QueryError {
    QueryError::Type {
        field: field.to_string(),
        message,
        row: None,
    }
}

fn value_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "map",
    }
}

pub(super) fn compare(field: &str, op: CmpOp, lit: &Literal, actual: Option<&Value>) -> Result<bool, QueryError> {
    if matches!(lit, Literal::Null) && op.is_ordering() {
        return Err(type_error(
            field,
            format!("NULL can only be compared with = or !=, not {}", op.symbol()),
        ));
    }
    let Some(actual) = actual else {
        return Ok(false);
    };
    let ordering = match (actual, lit) {
        (Value::Null, Literal::Null) => Some(Ordering::Equal),
        (Value::Null, _) | (_, Literal::Null) => {
            return Ok(match op {
                CmpOp::Eq => false,
                CmpOp::Ne => true,
                _ => false,
            })
        }
        (Value::Number(a), Literal::Num(b)) => {
            let a = a.as_f64().unwrap_or(f64::NAN);
            a.partial_cmp(b)
        }
        (Value::String(a), Literal::Str(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
        (Value::Bool(a), Literal::Bool(b)) => {
            if op.is_ordering() {
                return Err(type_error(field, "booleans cannot be ordered".to_string()));
            }
            Some(a.cmp(b))
        }
        (a, b) => {
            return Err(type_error(
                field,
                format!(
                    "cannot compare {} attribute with {} literal",
                    value_type(a),
                    b.type_name()
                ),
            ))
        }
    };
    let Some(ord) = ordering else {
        return Ok(op == CmpOp::Ne);
    };
    Ok(match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    })
}

/// SQL-style wildcard match: `%` any run, `_` exactly one character.
pub fn like_match(text: &str, pattern: &str) -> bool {
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    let (mut ti, mut pi) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '_' || (p[pi] != '%' && p[pi] == t[ti])) {
            ti += 1;
            pi += 1;
        } else if pi < p.len() && p[pi] == '%' {
            backtrack = Some((pi, ti));
            pi += 1;
        } else if let Some((bp, bt)) = backtrack {
            pi = bp + 1;
            ti = bt + 1;
            backtrack = Some((bp, bt + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '%')
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse;
    use serde_json::{json, Map};

    fn row(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    fn eval(q: &str, r: &Map<String, Value>) -> Result<bool, QueryError> {
        evaluate(&parse(q).unwrap(), r)
    }

    #[test]
    fn equality_on_strings() {
        let r = row(json!({"vehicle_type": "SUV"}));
        assert!(eval("vehicle_type = 'SUV'", &r).unwrap());
        assert!(!eval("vehicle_type = 'suv'", &r).unwrap());
    }

    #[test]
    fn missing_attribute_is_false_not_error() {
        let r = row(json!({"a": 1}));
        assert!(!eval("speed > 'fast'", &r).unwrap());
        assert!(!eval("zz = 1", &r).unwrap());
        assert!(!eval("zz != 1", &r).unwrap());
        assert!(!eval("zz LIKE '%'", &r).unwrap());
        assert!(eval("NOT zz = 1", &r).unwrap());
    }

    #[test]
    fn ordering_type_mismatch_names_field() {
        let r = row(json!({"speed": 42}));
        match eval("speed > 'fast'", &r).unwrap_err() {
            QueryError::Type { field, .. } => assert_eq!(field, "speed"),
            e => panic!("{e:?}"),
        }
        assert_eq!(eval("speed = 'x'", &r).unwrap_err().code(), "QUERY_TYPE_ERROR");
        assert_eq!(eval("speed LIKE 'x'", &r).unwrap_err().code(), "QUERY_TYPE_ERROR");
    }

    #[test]
    fn null_semantics() {
        let r = row(json!({"a": null, "b": 2}));
        assert!(eval("a = NULL", &r).unwrap());
        assert!(!eval("a != NULL", &r).unwrap());
        assert!(eval("b != NULL", &r).unwrap());
        assert!(!eval("b = NULL", &r).unwrap());
        assert!(!eval("a = 3", &r).unwrap());
        assert!(eval("a != 3", &r).unwrap());
        assert!(!eval("a < 3", &r).unwrap());
        assert!(eval("b < NULL", &r).is_err());
        assert!(eval("zz < NULL", &r).is_err());
        assert!(eval("a IN (1, NULL)", &r).unwrap());
    }

    #[test]
    fn numbers_and_strings_order() {
        let r = row(json!({"n": 2.5, "s": "b"}));
        assert!(eval("n > 2 AND n <= 2.5 AND n >= 2.5 AND n < 3", &r).unwrap());
        assert!(eval("s > 'a' AND s < 'c' AND s >= 'b'", &r).unwrap());
        assert!(eval("s < 'B' OR s > 'B'", &r).unwrap());
        assert!(!eval("s < 'B'", &r).unwrap());
    }

    #[test]
    fn booleans() {
        let r = row(json!({"f": true}));
        assert!(eval("f = TRUE", &r).unwrap());
        assert!(eval("f != FALSE", &r).unwrap());
        assert!(eval("f < TRUE", &r).is_err());
    }

    #[test]
    fn in_lists() {
        let r = row(json!({"region": "EU"}));
        assert!(eval("region IN ('US', 'EU')", &r).unwrap());
        assert!(!eval("region IN ('US')", &r).unwrap());
        assert!(eval("region IN ('US', 3)", &r).is_err());
    }

    #[test]
    fn constant_comparisons() {
        let r = row(json!({}));
        assert!(eval("1 = 1", &r).unwrap());
        assert!(!eval("1 = 2", &r).unwrap());
        assert!(eval("'a' < 'b'", &r).unwrap());
        assert_eq!(parse("1 = 'a'").unwrap_err().code(), "QUERY_TYPE_ERROR");
    }

    #[test]
    fn like_patterns() {
        assert!(like_match("highway", "high%"));
        assert!(like_match("highway", "%way"));
        assert!(like_match("highway", "h_ghw_y"));
        assert!(like_match("", "%"));
        assert!(!like_match("", "_"));
        assert!(like_match("abcabc", "%b%c"));
        assert!(!like_match("abc", "abcd"));
        assert!(like_match("a%b", "a%b"));
        assert!(like_match("über", "_ber"));
        assert!(!like_match("abc", "a_"));
    }
}
