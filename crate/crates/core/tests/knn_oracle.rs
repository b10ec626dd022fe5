//! EXACT kNN against a brute-force cosine oracle, plus APPROX recall.

mod common;

use common::knn::*;
use metapix_core::vector::{Scope, SearchMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_matches_brute_force() {
    let dim = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let c = corpus(&mut rng, 1000, dim);
    let dir = tempfile::tempdir().unwrap();
    let scope = Scope::datasource("oracle");
    let idx = index(dir.path(), &scope, &c, dim);
    check_exact(&idx, &scope, &c, &mut rng, 100, dim);
}

#[test]
fn truncation_and_self_match() {
    let dim = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let c = corpus(&mut rng, 4, dim);
    let dir = tempfile::tempdir().unwrap();
    let scope = Scope::datasource("small");
    let idx = index(dir.path(), &scope, &c, dim);
    let hits = idx.knn(&scope, &c.vectors[3], 10, SearchMode::Exact).unwrap();
    assert_eq!(hits.len(), 4);
    assert!((hits[0].score - 1.0).abs() <= 1e-6);
    assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
    for mode in [SearchMode::Exact, SearchMode::Approx] {
        assert!(idx.knn(&Scope::datasource("empty"), &c.vectors[0], 3, mode).unwrap().is_empty());
    }
}

#[test]
fn approx_recall_on_moderate_corpus() {
    let dim = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let c = corpus(&mut rng, 3000, dim);
    let dir = tempfile::tempdir().unwrap();
    let scope = Scope::datasource("recall");
    let idx = index(dir.path(), &scope, &c, dim);
    let recall = approx_recall(&idx, &scope, &c, &mut rng, 30, dim);
    assert!(recall >= 0.9, "recall@10 = {recall}");
}
