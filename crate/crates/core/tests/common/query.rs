//! Naive filter-language evaluator and random expression generators.
//!
//! Expressions are a local tree rendered to text for the engine; the oracle
//! evaluates the tree directly.

use std::collections::BTreeMap;

use metapix_core::query::{materialize, parse, KeyedRow, Row};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct TestRow {
    pub uri: String,
    pub generation: u64,
    pub attrs: BTreeMap<String, Value>,
}

impl Row for TestRow {
    fn get(&self, field: &str) -> Option<&Value> {
        self.attrs.get(field)
    }
}

impl KeyedRow for TestRow {
    fn uri(&self) -> &str {
        &self.uri
    }
    fn generation_id(&self) -> u64 {
        self.generation
    }
}

#[derive(Debug, Clone)]
pub enum Lit {
    S(String),
    N(f64),
    B(bool),
    Null,
}

#[derive(Debug, Clone)]
pub enum E {
    And(Vec<E>),
    Or(Vec<E>),
    Not(Box<E>),
    Cmp(String, &'static str, Lit),
    In(String, Vec<Lit>),
    Like(String, String),
}

pub fn lit_text(l: &Lit) -> String {
    match l {
        Lit::S(s) => format!("'{}'", s.replace('\'', "''")),
        Lit::N(n) => format!("{n}"),
        Lit::B(true) => "TRUE".into(),
        Lit::B(false) => "false".into(),
        Lit::Null => "NULL".into(),
    }
}

pub fn text(e: &E) -> String {
    match e {
        E::And(c) => format!("({})", c.iter().map(text).collect::<Vec<_>>().join(" AND ")),
        E::Or(c) => format!("({})", c.iter().map(text).collect::<Vec<_>>().join(" or ")),
        E::Not(i) => format!("NOT {}", text(i)),
        E::Cmp(f, op, l) => format!("{f} {op} {}", lit_text(l)),
        E::In(f, ls) => format!("{f} IN ({})", ls.iter().map(lit_text).collect::<Vec<_>>().join(", ")),
        E::Like(f, p) => format!("{f} LIKE '{p}'"),
    }
}

// ---- oracle ----

#[derive(Debug)]
pub struct TypeErr;

/// `%` any run, `_` one char, by dynamic programming over (text, pattern).
pub fn like(t: &str, p: &str) -> bool {
    let t: Vec<char> = t.chars().collect();
    let p: Vec<char> = p.chars().collect();
    let mut dp = vec![vec![false; p.len() + 1]; t.len() + 1];
    dp[0][0] = true;
    for j in 1..=p.len() {
        dp[0][j] = dp[0][j - 1] && p[j - 1] == '%';
    }
    for i in 1..=t.len() {
        for j in 1..=p.len() {
            dp[i][j] = match p[j - 1] {
                '%' => dp[i][j - 1] || dp[i - 1][j],
                '_' => dp[i - 1][j - 1],
                c => dp[i - 1][j - 1] && t[i - 1] == c,
            };
        }
    }
    dp[t.len()][p.len()]
}

pub fn cmp(op: &str, actual: Option<&Value>, lit: &Lit) -> Result<bool, TypeErr> {
    let ordering = !matches!(op, "=" | "!=");
    if ordering && matches!(lit, Lit::Null) {
        return Err(TypeErr);
    }
    let Some(actual) = actual else { return Ok(false) };
    let eq_result = |equal: bool| match op {
        "=" => equal,
        "!=" => !equal,
        _ => false,
    };
    match (actual, lit) {
        (Value::Null, Lit::Null) => Ok(eq_result(true)),
        (Value::Null, _) | (_, Lit::Null) => Ok(eq_result(false)),
        (Value::Number(a), Lit::N(b)) => {
            let a = a.as_f64().unwrap();
            Ok(match op {
                "=" => a == *b,
                "!=" => a != *b,
                "<" => a < *b,
                "<=" => a <= *b,
                ">" => a > *b,
                ">=" => a >= *b,
                _ => unreachable!(),
            })
        }
        (Value::String(a), Lit::S(b)) => Ok(match op {
            "=" => a == b,
            "!=" => a != b,
            "<" => a.as_bytes() < b.as_bytes(),
            "<=" => a.as_bytes() <= b.as_bytes(),
            ">" => a.as_bytes() > b.as_bytes(),
            ">=" => a.as_bytes() >= b.as_bytes(),
            _ => unreachable!(),
        }),
        (Value::Bool(a), Lit::B(b)) if !ordering => Ok(eq_result(a == b)),
        _ => Err(TypeErr),
    }
}

pub fn eval(e: &E, row: &TestRow) -> Result<bool, TypeErr> {
    match e {
        E::And(c) => {
            let vals: Result<Vec<bool>, _> = c.iter().map(|x| eval(x, row)).collect();
            Ok(vals?.into_iter().all(|b| b))
        }
        E::Or(c) => {
            let vals: Result<Vec<bool>, _> = c.iter().map(|x| eval(x, row)).collect();
            Ok(vals?.into_iter().any(|b| b))
        }
        E::Not(i) => eval(i, row).map(|b| !b),
        E::Cmp(f, op, l) => cmp(op, row.attrs.get(f), l),
        E::In(f, ls) => {
            let vals: Result<Vec<bool>, _> = ls.iter().map(|l| cmp("=", row.attrs.get(f), l)).collect();
            Ok(vals?.into_iter().any(|b| b))
        }
        E::Like(f, p) => match row.attrs.get(f) {
            None | Some(Value::Null) => Ok(false),
            Some(Value::String(s)) => Ok(like(s, p)),
            Some(_) => Err(TypeErr),
        },
    }
}

/// Matching uris, or `None` when any row raises a type error.
pub fn oracle(e: &E, rows: &[TestRow]) -> Option<Vec<String>> {
    let mut out = Vec::new();
    for r in rows {
        if eval(e, r).ok()? {
            out.push(format!("{}#{}", r.uri, r.generation));
        }
    }
    out.sort();
    Some(out)
}

pub fn engine(q: &str, rows: &[TestRow]) -> Option<Vec<String>> {
    let expr = parse(q).unwrap_or_else(|e| panic!("generated query {q:?} failed to parse: {e}"));
    match materialize(rows, &expr) {
        Ok(hits) => {
            let out: Vec<String> = hits.iter().map(|r| format!("{}#{}", r.uri, r.generation)).collect();
            let mut sorted = out.clone();
            sorted.sort();
            assert_eq!(out, sorted, "materialize must return (uri, generation) order");
            Some(out)
        }
        Err(e) => {
            assert_eq!(e.code(), "QUERY_TYPE_ERROR");
            None
        }
    }
}

// ---- generators ----

pub const TYPES: [&str; 4] = ["SUV", "sedan", "truck", "van"];
pub const REGIONS: [&str; 3] = ["US", "EU", "APAC"];

pub fn gen_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<TestRow> {
    (0..n)
        .map(|i| {
            let mut attrs = BTreeMap::new();
            if rng.random_bool(0.9) {
                let v = if rng.random_bool(0.05) { Value::Null } else { json!(TYPES.choose(rng).unwrap()) };
                attrs.insert("vehicle_type".into(), v);
            }
            if rng.random_bool(0.9) {
                attrs.insert("speed".into(), json!(rng.random_range(0..120)));
            }
            if rng.random_bool(0.85) {
                attrs.insert("region".into(), json!(REGIONS.choose(rng).unwrap()));
            }
            if rng.random_bool(0.8) {
                attrs.insert("night".into(), json!(rng.random_bool(0.5)));
            }
            if rng.random_bool(0.7) {
                attrs.insert("score".into(), json!((rng.random_range(0..1000) as f64) / 100.0));
            }
            TestRow {
                uri: format!("/data/img_{:03}.jpg", i / 2),
                generation: rng.random_range(1..4) * 2 + (i % 2) as u64,
                attrs,
            }
        })
        .collect()
}

pub fn gen_pred(rng: &mut ChaCha8Rng, allow_type_errors: bool) -> E {
    let ops = ["=", "!=", "<", "<=", ">", ">="];
    if allow_type_errors && rng.random_bool(0.1) {
        return E::Cmp("speed".into(), ">", Lit::S("fast".into()));
    }
    match rng.random_range(0..9) {
        0 => E::Cmp("vehicle_type".into(), ops[rng.random_range(0..2)], Lit::S(TYPES.choose(rng).unwrap().to_string())),
        1 => E::Cmp("speed".into(), ops.choose(rng).unwrap(), Lit::N(rng.random_range(0..120) as f64)),
        2 => E::Cmp("score".into(), ops.choose(rng).unwrap(), Lit::N(rng.random_range(0..100) as f64 / 10.0)),
        3 => E::Cmp("region".into(), ops.choose(rng).unwrap(), Lit::S(REGIONS.choose(rng).unwrap().to_string())),
        4 => E::Cmp("night".into(), ops[rng.random_range(0..2)], Lit::B(rng.random_bool(0.5))),
        5 => {
            let n = rng.random_range(1..4);
            E::In("region".into(), (0..n).map(|_| Lit::S(REGIONS.choose(rng).unwrap().to_string())).collect())
        }
        6 => {
            let pats = ["S%", "%a%", "_an", "%", "tr_ck", "%V"];
            E::Like("vehicle_type".into(), pats.choose(rng).unwrap().to_string())
        }
        7 => E::Cmp("vehicle_type".into(), ops[rng.random_range(0..2)], Lit::Null),
        _ => E::Cmp("missing_col".into(), ops[rng.random_range(0..2)], Lit::N(1.0)),
    }
}

pub fn gen_expr(rng: &mut ChaCha8Rng, depth: u32, allow_type_errors: bool) -> E {
    if depth == 0 || rng.random_bool(0.35) {
        return gen_pred(rng, allow_type_errors);
    }
    match rng.random_range(0..3) {
        0 => E::And((0..rng.random_range(2..4)).map(|_| gen_expr(rng, depth - 1, allow_type_errors)).collect()),
        1 => E::Or((0..rng.random_range(2..4)).map(|_| gen_expr(rng, depth - 1, allow_type_errors)).collect()),
        _ => E::Not(Box::new(gen_expr(rng, depth - 1, allow_type_errors))),
    }
}


/// Runs `count` random expressions (some with type errors) against the
/// oracle, panicking on any mismatch. Returns how many were error-free.
pub fn check_equivalence(seed: u64, rows: usize, count: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = gen_rows(&mut rng, rows);
    let mut error_free = 0;
    for i in 0..count {
        let e = gen_expr(&mut rng, 3, true);
        let q = text(&e);
        let want = oracle(&e, &rows);
        let got = engine(&q, &rows);
        assert_eq!(got, want, "expression #{i}: {q}");
        error_free += usize::from(want.is_some());
    }
    error_free
}

/// Checks complement and De Morgan over `pairs` random expression pairs.
/// Returns how many pairs were fully error-free.
pub fn check_laws(seed: u64, rows: usize, pairs: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = gen_rows(&mut rng, rows);
    let all: Vec<String> = {
        let mut v: Vec<String> = rows.iter().map(|r| format!("{}#{}", r.uri, r.generation)).collect();
        v.sort();
        v
    };
    let mut checked = 0;
    for _ in 0..pairs {
        let a = gen_expr(&mut rng, 2, false);
        let b = gen_expr(&mut rng, 2, false);
        let (ta, tb) = (text(&a), text(&b));
        let Some(pos) = engine(&ta, &rows) else { continue };
        let neg = engine(&format!("NOT ({ta})"), &rows).expect("error-free");
        let mut union: Vec<String> = pos.iter().chain(&neg).cloned().collect();
        union.sort();
        assert_eq!(union, all, "complement of {ta}");
        assert!(pos.iter().all(|p| !neg.contains(p)), "overlap for {ta}");

        if engine(&tb, &rows).is_none() {
            continue;
        }
        let lhs = engine(&format!("NOT (({ta}) AND ({tb}))"), &rows).unwrap();
        let rhs = engine(&format!("(NOT ({ta})) OR (NOT ({tb}))"), &rows).unwrap();
        assert_eq!(lhs, rhs, "De Morgan over {ta} / {tb}");
        checked += 1;
    }
    checked
}
