#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treedp::decomp::{heuristic_decompose, Strategy};
use treedp::graph::Graph;
use treedp::nicify::{make_very_nice, VeryNiceTd};

/// Erdős–Rényi graph with a fixed seed.
pub fn gnp(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Random labelled tree (each vertex attaches to an earlier one).
pub fn random_tree(n: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<_> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    Graph::from_edges(n, &edges).unwrap()
}

pub fn grid(rows: usize, cols: usize) -> Graph {
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    Graph::from_edges(rows * cols, &edges).unwrap()
}

/// The random suite: 120 graphs, n in 3..=12, p alternating 0.2 and 0.5.
pub fn suite() -> Vec<(String, Graph)> {
    (0..120u64)
        .map(|i| {
            let n = 3 + (i as usize % 10);
            let p = if i % 2 == 0 { 0.2 } else { 0.5 };
            (format!("gnp-{n}-{p}-{i}"), gnp(n, p, 1000 + i))
        })
        .collect()
}

pub fn nice(g: &Graph) -> VeryNiceTd {
    make_very_nice(&heuristic_decompose(g, Strategy::MinFill), g).unwrap()
}
