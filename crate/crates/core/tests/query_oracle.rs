//! Filter language against a naive, independently written evaluator.

mod common;

use common::query::*;
use metapix_core::query::parse;
use serde_json::json;

#[test]
fn randomized_expressions_match_naive_oracle() {
    let error_free = check_equivalence(0x5eed_0001, 200, 80);
    assert!(error_free >= 50, "only {error_free} error-free expressions generated");
}

#[test]
fn complement_and_de_morgan_hold() {
    assert!(check_laws(0x5eed_0002, 200, 50) > 0);
}

#[test]
fn worked_examples() {
    let rows: Vec<TestRow> = (0..10)
        .map(|i| TestRow {
            uri: format!("/v/{i}.jpg"),
            generation: 1,
            attrs: [("vehicle_type".to_string(), json!(if i % 5 < 2 { "SUV" } else { "sedan" }))].into(),
        })
        .collect();
    assert_eq!(engine("vehicle_type = 'SUV'", &rows).unwrap().len(), 4);
    assert_eq!(engine("1 = 1", &rows).unwrap().len(), 10);
    assert_eq!(engine("vehicle_type = 'bus'", &rows).unwrap().len(), 0);
    let speed = vec![TestRow {
        uri: "/s".into(),
        generation: 1,
        attrs: [("speed".to_string(), json!(42))].into(),
    }];
    assert_eq!(engine("speed > 'fast'", &speed), None);
    let err = parse("vehicle_type = ").unwrap_err();
    assert_eq!(err.code(), "QUERY_PARSE_ERROR");
}
