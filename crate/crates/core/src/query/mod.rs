//! Filter-expression language used to materialize datasets from a view.

mod ast;
mod eval;
mod parser;

pub use ast::{CmpOp, Expr, Literal};
pub use eval::{evaluate, like_match, Row};
pub use parser::parse;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("parse error at offset {offset}: expected {}, found {found}", .expected.join(" | "))]
    Parse {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("type error on {field}: {message}{}", .row.as_ref().map(|r| format!(" (row {r})")).unwrap_or_default())]
    Type {
        field: String,
        message: String,
        row: Option<String>,
    },
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::Parse { .. } => "QUERY_PARSE_ERROR",
            QueryError::Type { .. } => "QUERY_TYPE_ERROR",
        }
    }
}

/// A row with a stable position in materialized output.
pub trait KeyedRow: Row {
    fn uri(&self) -> &str;
    fn generation_id(&self) -> u64;
}

/// Rows for which `expr` holds, ordered by `(uri, generation_id)`. The first
/// row raising a type error (in that order) is named in the error.
pub fn materialize<R: KeyedRow + Clone>(rows: &[R], expr: &Expr) -> Result<Vec<R>, QueryError> {
    let mut ordered: Vec<&R> = rows.iter().collect();
    ordered.sort_by(|a, b| {
        a.uri()
            .cmp(b.uri())
            .then(a.generation_id().cmp(&b.generation_id()))
    });
    let mut out = Vec::new();
    for row in ordered {
        match evaluate(expr, row) {
            Ok(true) => out.push(row.clone()),
            Ok(false) => {}
            Err(QueryError::Type { field, message, .. }) => {
                return Err(QueryError::Type {
                    field,
                    message,
                    row: Some(format!("{}#{}", row.uri(), row.generation_id())),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
