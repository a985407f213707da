//! Fixture builders shared by the benchmarks.

use fpgraph_core::{
    generate_family, Density, GraphFamily, Potential, TruncationMode, WeightedGraph,
};

/// Lattice window with a linear potential and a distance-decaying density,
/// the standard benchmark workload.
pub fn lattice_fixture(window: usize) -> (WeightedGraph, Potential, Density) {
    let g = generate_family(&GraphFamily::LatticeZ { window }, TruncationMode::Closed)
        .expect("valid window");
    let psi = Potential::from_distance(&g, 1.0);
    let raw: Vec<f64> = (0..g.n())
        .map(|i| (-2.0 * g.root_distance(i) as f64).exp())
        .collect();
    let (rho, _) = Density::new(&raw, &g).expect("positive values");
    (g, psi, rho)
}

/// A mean-zero vertex field for solver benchmarks.
pub fn tangent_data(g: &WeightedGraph) -> Vec<f64> {
    let n = g.n();
    let mut v: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64) / 11.0 - 0.5).collect();
    let total: f64 = g.measure().iter().sum();
    let mean: f64 = v
        .iter()
        .zip(g.measure())
        .map(|(x, pi)| x * pi)
        .sum::<f64>()
        / total;
    for x in &mut v {
        *x -= mean;
    }
    v
}
