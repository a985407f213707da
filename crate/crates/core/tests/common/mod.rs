//! Shared fixtures for the integration suites: seeded random instances and
//! quadrature oracles.
#![allow(dead_code)] // each test target uses its own subset

use fpgraph_core::{
    generate_family, Density, GraphFamily, Potential, TruncationMode, WeightedGraph,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn two_point() -> WeightedGraph {
    WeightedGraph::closed(&[(0, 1, 1.0)], 0).unwrap()
}

/// Deterministic family mix, every graph at most 30 vertices.
pub fn random_graph(seed: u64) -> WeightedGraph {
    let fam = match seed % 4 {
        0 => GraphFamily::RandomSparse {
            n: 5 + (seed as usize * 7) % 26,
            degree: 3,
            seed,
        },
        1 => GraphFamily::Path {
            n: 3 + (seed as usize) % 25,
        },
        2 => GraphFamily::Cycle {
            n: 3 + (seed as usize) % 25,
        },
        _ => GraphFamily::BinaryTree {
            depth: 2 + (seed as usize) % 2,
        },
    };
    generate_family(&fam, TruncationMode::Closed).unwrap()
}

pub fn random_density(g: &WeightedGraph, seed: u64) -> Density {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..g.n()).map(|_| rng.random_range(0.05..2.0)).collect();
    Density::new(&raw, g).unwrap().0
}

pub fn random_potential(g: &WeightedGraph, seed: u64) -> Potential {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..g.n()).map(|_| rng.random_range(0.0..2.0)).collect();
    Potential::new(vals, g).unwrap()
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Composite Simpson quadrature.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, half_steps: usize) -> f64 {
    let n = 2 * half_steps;
    let h = (b - a) / n as f64;
    let mut total = f(a) + f(b);
    for i in 1..n {
        let c = if i % 2 == 1 { 4.0 } else { 2.0 };
        total += c * f(a + i as f64 * h);
    }
    total * h / 3.0
}
