//! Weighted graphs with a vertex measure, built as finite truncations of
//! locally uniformly finite graphs.
//!
//! A graph here is `G = (V, E, pi)` with symmetric positive edge weights
//! `w_ij` and a per-vertex measure `pi_i > 0`. Two truncation modes are
//! supported:
//!
//! * `Closed` recomputes `pi_i = sum_j w_ij` from the truncated edge set, so
//!   the finite graph satisfies the measure relation exactly and mass is
//!   conserved by the heat flow.
//! * `Absorbing` keeps the parent graph's measure. The per-vertex deficit
//!   `pi_i - sum_j w_ij >= 0` records the weight of removed boundary edges
//!   and drives measurable mass leakage, the finite analogue of stochastic
//!   incompleteness.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the closed-mode measure consistency check.
pub const MEASURE_CONSISTENCY_RTOL: f64 = 1e-12;

/// How the finite graph relates to its (conceptually infinite) parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationMode {
    /// Measure recomputed from the truncated weights: `pi_i = sum_j w_ij`.
    Closed,
    /// Measure inherited from the parent graph; deficits may be positive.
    Absorbing,
}

impl std::fmt::Display for TruncationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TruncationMode::Closed => write!(f, "closed"),
            TruncationMode::Absorbing => write!(f, "absorbing"),
        }
    }
}

/// One undirected edge in canonical orientation (`u < v`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Neighbor {
    pub vertex: usize,
    pub weight: f64,
    /// Index into the canonical edge list.
    pub edge: usize,
}

/// A validated, immutable weighted graph.
///
/// Immutable after construction, so it can be shared freely across
/// concurrent simulation workers.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    root: usize,
    mode: TruncationMode,
    measure: Vec<f64>,
    deficit: Vec<f64>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<Neighbor>>,
    root_distance: Vec<usize>,
    min_weight: f64,
    max_weight: f64,
    max_degree: usize,
    growth_constant: f64,
}

impl WeightedGraph {
    /// Builds a closed truncation: the measure is recomputed as
    /// `pi_i = sum_j w_ij`, so every deficit is zero.
    pub fn closed(edges: &[(usize, usize, f64)], root: usize) -> Result<Self> {
        let (canon, n) = canonical_edges(edges)?;
        let mut measure = vec![0.0; n];
        for e in &canon {
            measure[e.u] += e.weight;
            measure[e.v] += e.weight;
        }
        Self::from_parts(canon, measure, TruncationMode::Closed, root, n)
    }

    /// Builds an absorbing truncation: the parent measure is kept and the
    /// per-vertex deficit `pi_i - sum_j w_ij` must be nonnegative.
    pub fn absorbing(
        edges: &[(usize, usize, f64)],
        parent_measure: &[f64],
        root: usize,
    ) -> Result<Self> {
        let (canon, n) = canonical_edges(edges)?;
        if parent_measure.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: parent_measure.len(),
            });
        }
        Self::from_parts(
            canon,
            parent_measure.to_vec(),
            TruncationMode::Absorbing,
            root,
            n,
        )
    }

    fn from_parts(
        edges: Vec<Edge>,
        measure: Vec<f64>,
        mode: TruncationMode,
        root: usize,
        n: usize,
    ) -> Result<Self> {
        if root >= n {
            return Err(Error::VertexOutOfRange { index: root, n });
        }
        let mut adjacency: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            adjacency[e.u].push(Neighbor {
                vertex: e.v,
                weight: e.weight,
                edge: idx,
            });
            adjacency[e.v].push(Neighbor {
                vertex: e.u,
                weight: e.weight,
                edge: idx,
            });
        }

        let mut deficit = vec![0.0; n];
        for i in 0..n {
            if measure[i] <= 0.0 {
                return Err(Error::NonpositiveEntry {
                    index: i,
                    value: measure[i],
                });
            }
            let weight_sum: f64 = adjacency[i].iter().map(|nb| nb.weight).sum();
            let d = measure[i] - weight_sum;
            match mode {
                TruncationMode::Closed => {
                    if d.abs() > MEASURE_CONSISTENCY_RTOL * measure[i] {
                        return Err(Error::InvalidConfig(format!(
                            "measure inconsistency at vertex {i}: pi = {}, sum of weights = {}",
                            measure[i], weight_sum
                        )));
                    }
                    deficit[i] = 0.0;
                }
                TruncationMode::Absorbing => {
                    if d < -MEASURE_CONSISTENCY_RTOL * measure[i] {
                        return Err(Error::InvalidConfig(format!(
                            "negative deficit at vertex {i}: pi = {} below weight sum {}",
                            measure[i], weight_sum
                        )));
                    }
                    deficit[i] = d.max(0.0);
                }
            }
        }

        let root_distance = bfs_distances(&adjacency, root);
        for (i, d) in root_distance.iter().enumerate() {
            if *d == usize::MAX {
                return Err(Error::DisconnectedGraph(i, root));
            }
        }

        let min_weight = edges.iter().map(|e| e.weight).fold(f64::INFINITY, f64::min);
        let max_weight = edges.iter().map(|e| e.weight).fold(0.0, f64::max);
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        let growth_constant = edges
            .iter()
            .map(|e| {
                let r = measure[e.u] / measure[e.v];
                r.max(1.0 / r)
            })
            .fold(1.0, f64::max);

        Ok(Self {
            n,
            root,
            mode,
            measure,
            deficit,
            edges,
            adjacency,
            root_distance,
            min_weight,
            max_weight,
            max_degree,
            growth_constant,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn mode(&self) -> TruncationMode {
        self.mode
    }

    /// Vertex measure `pi`.
    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    /// Per-vertex deficit `pi_i - sum_j w_ij`; all zeros in closed mode.
    pub fn deficit(&self) -> &[f64] {
        &self.deficit
    }

    /// Canonical edge list with `u < v`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub(crate) fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    /// Neighbor iteration as `(vertex, weight)` pairs.
    pub fn neighbor_weights(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[i].iter().map(|nb| (nb.vertex, nb.weight))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Smallest edge weight (the paper's lower weight bound).
    pub fn min_weight(&self) -> f64 {
        self.min_weight
    }

    /// Largest edge weight (the paper's upper weight bound).
    pub fn max_weight(&self) -> f64 {
        self.max_weight
    }

    /// Largest vertex degree (local uniform finiteness constant).
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// `K_growth = max` over edges of `pi_j / pi_i`.
    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    /// Hop-count distance from the root, cached at construction.
    pub fn root_distance(&self, i: usize) -> usize {
        self.root_distance[i]
    }

    /// Hop-count shortest-path distance between two vertices.
    pub fn distance(&self, i: usize, j: usize) -> usize {
        assert!(i < self.n && j < self.n, "vertex index out of range");
        if i == self.root {
            return self.root_distance[j];
        }
        if j == self.root {
            return self.root_distance[i];
        }
        if i == j {
            return 0;
        }
        let dist = bfs_distances(&self.adjacency, i);
        dist[j]
    }
}

fn canonical_edges(edges: &[(usize, usize, f64)]) -> Result<(Vec<Edge>, usize)> {
    if edges.is_empty() {
        return Err(Error::InvalidConfig("empty edge list".into()));
    }
    let n = edges
        .iter()
        .map(|&(i, j, _)| i.max(j))
        .max()
        .unwrap_or(0)
        + 1;
    let mut seen: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
    let mut canon = Vec::with_capacity(edges.len());
    for &(i, j, w) in edges {
        if i == j {
            return Err(Error::SelfLoop(i));
        }
        if w <= 0.0 || !w.is_finite() {
            return Err(Error::NonpositiveWeight { i, j, weight: w });
        }
        let key = (i.min(j), i.max(j));
        if let Some(&prev) = seen.get(&key) {
            if prev == w {
                return Err(Error::DuplicateEdge(key.0, key.1));
            }
            return Err(Error::AsymmetricWeights {
                i: key.0,
                j: key.1,
                forward: prev,
                backward: w,
            });
        }
        seen.insert(key, w);
        canon.push(Edge {
            u: key.0,
            v: key.1,
            weight: w,
        });
    }
    canon.sort_by_key(|e| (e.u, e.v));
    Ok((canon, n))
}

fn bfs_distances(adjacency: &[Vec<Neighbor>], source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adjacency.len()];
    dist[source] = 0;
    let mut queue = VecDeque::new();
    queue.push_back(source);
    while let Some(i) = queue.pop_front() {
        for nb in &adjacency[i] {
            if dist[nb.vertex] == usize::MAX {
                dist[nb.vertex] = dist[i] + 1;
                queue.push_back(nb.vertex);
            }
        }
    }
    dist
}

/// Built-in graph families used as finite truncations of the infinite test
/// corpora. All generators default to unit edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GraphFamily {
    /// Path on `n` vertices `0 - 1 - ... - n-1`, rooted at 0. As a truncation
    /// of the half-line, the absorbing parent measure is 2 everywhere except
    /// the origin, which has measure 1.
    Path { n: usize },
    /// Cycle on `n >= 3` vertices. Already boundaryless, so absorbing mode
    /// coincides with closed mode.
    Cycle { n: usize },
    /// Window `{-w..w}` of the integer lattice, rooted at the center vertex.
    /// Vertices are ordered by position, so index `k` is position `k - w`.
    LatticeZ { window: usize },
    /// Complete binary tree of the given depth in breadth-first order,
    /// rooted at vertex 0. The absorbing parent is the infinite binary tree.
    BinaryTree { depth: usize },
    /// Random connected graph with `n` vertices and average degree close to
    /// `degree`, generated deterministically from the seed.
    RandomSparse { n: usize, degree: usize, seed: u64 },
}

/// Generates a family member with unit edge weights.
pub fn generate_family(family: &GraphFamily, mode: TruncationMode) -> Result<WeightedGraph> {
    generate_family_scaled(family, mode, 1.0)
}

/// Generates a family member with all edge weights multiplied by `scale`.
pub fn generate_family_scaled(
    family: &GraphFamily,
    mode: TruncationMode,
    scale: f64,
) -> Result<WeightedGraph> {
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "nonpositive weight scale {scale}"
        )));
    }
    match *family {
        GraphFamily::Path { n } => {
            if n < 2 {
                return Err(Error::InvalidSize(format!("path needs n >= 2, got {n}")));
            }
            let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, scale)).collect();
            match mode {
                TruncationMode::Closed => WeightedGraph::closed(&edges, 0),
                TruncationMode::Absorbing => {
                    // Parent is the half-line: the origin keeps measure
                    // `scale`, every other vertex has two parent edges.
                    let mut pi = vec![2.0 * scale; n];
                    pi[0] = scale;
                    WeightedGraph::absorbing(&edges, &pi, 0)
                }
            }
        }
        GraphFamily::Cycle { n } => {
            if n < 3 {
                return Err(Error::InvalidSize(format!("cycle needs n >= 3, got {n}")));
            }
            let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, scale)).collect();
            WeightedGraph::closed(&edges, 0)
        }
        GraphFamily::LatticeZ { window } => {
            if window < 2 {
                return Err(Error::InvalidSize(format!(
                    "lattice window needs w >= 2, got {window}"
                )));
            }
            let n = 2 * window + 1;
            let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, scale)).collect();
            let root = window;
            match mode {
                TruncationMode::Closed => WeightedGraph::closed(&edges, root),
                TruncationMode::Absorbing => {
                    let pi = vec![2.0 * scale; n];
                    WeightedGraph::absorbing(&edges, &pi, root)
                }
            }
        }
        GraphFamily::BinaryTree { depth } => {
            if depth < 2 {
                return Err(Error::InvalidSize(format!(
                    "binary tree needs depth >= 2, got {depth}"
                )));
            }
            let n = (1usize << (depth + 1)) - 1;
            let mut edges = Vec::with_capacity(n - 1);
            for i in 1..n {
                edges.push(((i - 1) / 2, i, scale));
            }
            match mode {
                TruncationMode::Closed => WeightedGraph::closed(&edges, 0),
                TruncationMode::Absorbing => {
                    // Parent is the infinite rooted binary tree: the root has
                    // its two children, every other vertex has parent + two
                    // children.
                    let mut pi = vec![3.0 * scale; n];
                    pi[0] = 2.0 * scale;
                    WeightedGraph::absorbing(&edges, &pi, 0)
                }
            }
        }
        GraphFamily::RandomSparse { n, degree, seed } => {
            if n < 2 {
                return Err(Error::InvalidSize(format!(
                    "random graph needs n >= 2, got {n}"
                )));
            }
            if degree < 1 || degree >= n {
                return Err(Error::InvalidSize(format!(
                    "random graph needs 1 <= degree < n, got degree {degree} with n {n}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut present = std::collections::HashSet::new();
            let mut edges = Vec::new();
            // Random recursive tree keeps the graph connected.
            for i in 1..n {
                let j = rng.random_range(0..i);
                present.insert((j, i));
                edges.push((j, i, scale));
            }
            let target = (n * degree).div_ceil(2);
            let mut attempts = 0;
            while edges.len() < target && attempts < 50 * target {
                attempts += 1;
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a == b {
                    continue;
                }
                let key = (a.min(b), a.max(b));
                if present.insert(key) {
                    edges.push((key.0, key.1, scale));
                }
            }
            WeightedGraph::closed(&edges, 0)
        }
    }
}
