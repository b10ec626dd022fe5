//! Random-hyperplane LSH with query-directed multi-probe.
//!
//! Each table hashes a vector to a `bits`-wide sign signature over seeded
//! Gaussian hyperplanes. A query probes its own bucket and then the buckets
//! reached by flipping the bits whose hyperplanes it lies closest to, in
//! increasing order of summed squared margin.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::AnnConfig;

#[derive(Debug, Clone)]
pub struct Lsh {
    tables: usize,
    bits: usize,
    dim: usize,
    probes: usize,
    /// `tables * bits` hyperplanes of `dim` components.
    planes: Vec<f32>,
    /// Per table, bucket -> row indices.
    buckets: Vec<Vec<Vec<u32>>>,
}

impl Lsh {
    pub fn new(cfg: &AnnConfig, dim: usize) -> Self {
        assert!(cfg.bits >= 1 && cfg.bits <= 24, "ann.bits must be within 1..=24");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let planes = (0..cfg.tables * cfg.bits * dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self {
            tables: cfg.tables,
            bits: cfg.bits,
            dim,
            probes: cfg.probes.max(1),
            planes,
            buckets: vec![vec![Vec::new(); 1 << cfg.bits]; cfg.tables],
        }
    }

    /// Builds the tables over `vectors`, a row-major `n * dim` slice.
    pub fn build(cfg: &AnnConfig, dim: usize, vectors: &[f32]) -> Self {
        let mut lsh = Self::new(cfg, dim);
        for (row, v) in vectors.chunks_exact(dim).enumerate() {
            for t in 0..lsh.tables {
                let sig = signature(&lsh.projections(t, v));
                lsh.buckets[t][sig].push(row as u32);
            }
        }
        lsh
    }

    fn projections(&self, table: usize, v: &[f32]) -> Vec<f32> {
        (0..self.bits)
            .map(|b| {
                let start = (table * self.bits + b) * self.dim;
                self.planes[start..start + self.dim]
                    .iter()
                    .zip(v)
                    .map(|(p, x)| p * x)
                    .sum()
            })
            .collect()
    }

    /// Sorted, deduplicated candidate rows for `query`.
    pub fn candidates(&self, query: &[f32]) -> Vec<u32> {
        let mut out = Vec::new();
        for t in 0..self.tables {
            let proj = self.projections(t, query);
            let home = signature(&proj);
            for flip in probe_sequence(&proj, self.probes) {
                out.extend_from_slice(&self.buckets[t][home ^ flip]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn signature(proj: &[f32]) -> usize {
    proj.iter()
        .enumerate()
        .fold(0, |sig, (i, p)| if *p >= 0.0 { sig | 1 << i } else { sig })
}

/// XOR masks to apply to the home signature, best first, starting with 0.
pub fn probe_sequence(proj: &[f32], probes: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..proj.len()).collect();
    order.sort_by(|&a, &b| {
        (proj[a] * proj[a])
            .total_cmp(&(proj[b] * proj[b]))
            .then(a.cmp(&b))
    });
    let cost: Vec<f64> = order.iter().map(|&i| f64::from(proj[i] * proj[i])).collect();

    let mut out = vec![0usize];
    // Subsets of positions in `order`, expanded by shift/extend of the
    // largest position so each subset is produced exactly once.
    let mut heap: BinaryHeap<Reverse<(OrdF64, Vec<usize>)>> = BinaryHeap::new();
    if !order.is_empty() {
        heap.push(Reverse((OrdF64(cost[0]), vec![0])));
    }
    while out.len() < probes {
        let Some(Reverse((OrdF64(score), set))) = heap.pop() else {
            break;
        };
        out.push(set.iter().fold(0, |m, &p| m | 1 << order[p]));
        let last = *set.last().expect("non-empty");
        if last + 1 < order.len() {
            let mut shifted = set.clone();
            *shifted.last_mut().expect("non-empty") = last + 1;
            heap.push(Reverse((OrdF64(score - cost[last] + cost[last + 1]), shifted)));
            let mut extended = set;
            extended.push(last + 1);
            heap.push(Reverse((OrdF64(score + cost[last + 1]), extended)));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
