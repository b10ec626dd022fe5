//! Random unit-vector corpora and a brute-force cosine oracle.

use metapix_core::config::AnnConfig;
use metapix_core::vector::{EmbeddingRecord, Scope, VectorIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.iter().map(|x| (x / n) as f32).collect()
}

pub struct Corpus {
    pub hashes: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
}

pub fn corpus(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Corpus {
    let mut vectors: Vec<Vec<f32>> = (0..n).map(|_| unit(rng, dim)).collect();
    // exact duplicates force score ties
    for i in (0..n).step_by(50) {
        vectors[i + 1] = vectors[i].clone();
    }
    let hashes = (0..n).map(|i| format!("{:064x}", (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))).collect();
    Corpus { hashes, vectors }
}

pub fn index(dir: &std::path::Path, scope: &Scope, c: &Corpus, dim: usize) -> VectorIndex {
    index_with(dir, scope, c, dim, AnnConfig::default())
}

pub fn index_with(dir: &std::path::Path, scope: &Scope, c: &Corpus, dim: usize, ann: AnnConfig) -> VectorIndex {
    let idx = VectorIndex::open(dir, dim, ann).unwrap();
    let records = c
        .hashes
        .iter()
        .zip(&c.vectors)
        .map(|(h, v)| EmbeddingRecord::new(scope.clone(), h, &format!("/m/{h}.jpg"), None, v.clone(), "m"))
        .collect();
    idx.add(scope, records).unwrap();
    idx
}

/// Brute force: cosine as a sequential f64 dot product, rounded to 6
/// decimals; descending score, then ascending content hash.
pub fn oracle(c: &Corpus, q: &[f32], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = c
        .hashes
        .iter()
        .zip(&c.vectors)
        .map(|(h, v)| {
            let mut dot = 0.0f64;
            for i in 0..q.len() {
                dot += f64::from(q[i]) * f64::from(v[i]);
            }
            (h.clone(), (dot * 1e6).round() / 1e6)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}


/// EXACT results for `queries` random or corpus-drawn query vectors must
/// equal the oracle exactly, scores and order.
pub fn check_exact(idx: &VectorIndex, scope: &Scope, c: &Corpus, rng: &mut ChaCha8Rng, queries: usize, dim: usize) {
    for qi in 0..queries {
        // every tenth query is a corpus vector, so ties land at rank 1
        let q = if qi % 10 == 0 { c.vectors[(qi * 5) % c.vectors.len()].clone() } else { unit(rng, dim) };
        let k = [1, 5, 10, 25][qi % 4];
        let got: Vec<(String, f64)> = idx
            .knn(scope, &q, k, metapix_core::vector::SearchMode::Exact)
            .unwrap()
            .into_iter()
            .map(|h| (h.content_hash, h.score))
            .collect();
        assert_eq!(got, oracle(c, &q, k), "query {qi}");
    }
}

/// Mean recall@10 of APPROX against the oracle over `queries` random
/// queries, asserting APPROX is deterministic along the way.
pub fn approx_recall(idx: &VectorIndex, scope: &Scope, c: &Corpus, rng: &mut ChaCha8Rng, queries: usize, dim: usize) -> f64 {
    let (mut found, mut total) = (0usize, 0usize);
    for _ in 0..queries {
        let q = unit(rng, dim);
        let exact: Vec<String> = oracle(c, &q, 10).into_iter().map(|(h, _)| h).collect();
        let approx = idx.knn(scope, &q, 10, metapix_core::vector::SearchMode::Approx).unwrap();
        assert_eq!(approx.len(), 10);
        found += approx.iter().filter(|h| exact.contains(&h.content_hash)).count();
        total += 10;
        let again = idx.knn(scope, &q, 10, metapix_core::vector::SearchMode::Approx).unwrap();
        assert_eq!(approx, again, "APPROX must be deterministic");
    }
    found as f64 / total as f64
}
