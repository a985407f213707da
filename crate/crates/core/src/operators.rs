//! Discrete calculus on weighted graphs: gradient, divergence, Laplacian,
//! the logarithmic mean, the density-weighted Laplacian and its gauged
//! pseudo-inverse.
//!
//! Conventions, for a graph with weights `w_ij` and measure `pi_i`:
//!
//! * `gradient(p)(i, j)   = p_j - p_i` on edges, antisymmetric;
//! * `divergence(F)(i)    = sum_j (w_ij / pi_i) F(i, j)`;
//! * `laplacian(p)        = divergence(gradient(p))`;
//! * `weighted_divergence(rho, F)(i) = sum_j (w_ij / pi_i) F(i, j) m(rho_i, rho_j)`
//!   where `m` is the logarithmic mean;
//! * `weighted_laplacian(rho, p) = -weighted_divergence(rho, gradient(p))`,
//!   positive semidefinite with kernel spanned by constants on connected
//!   graphs.
//!
//! The telescoping identity `(log a - log b) * m(a, b) = a - b` makes the
//! log-form of the Laplacian agree with the difference form entrywise; both
//! are provided so the identity can be checked numerically.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// Residual tolerance of the pseudo-inverse solve, relative to the
/// right-hand side scale.
pub const SOLVER_RESIDUAL_TOL: f64 = 1e-10;

/// Tolerance on the pi-weighted sum of a tangent vector.
pub const TANGENT_SUM_TOL: f64 = 1e-10;

/// Logarithmic mean `(a - b) / (log a - log b)`, extended by `m(a, a) = a`.
///
/// Lies between the geometric and arithmetic means. Relative error is a few
/// ulps across the whole positive quadrant, including nearly equal
/// arguments, which are evaluated through `ln_1p` of the exact difference
/// quotient instead of a cancelling log difference.
pub fn log_mean(a: f64, b: f64) -> Result<f64> {
    let positive = |x: f64| x.partial_cmp(&0.0) == Some(std::cmp::Ordering::Greater);
    if !positive(a) || !positive(b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::NonpositiveArgument(a, b));
    }
    Ok(log_mean_pos(a, b))
}

/// Logarithmic mean for arguments already known to be positive.
#[inline]
pub(crate) fn log_mean_pos(a: f64, b: f64) -> f64 {
    if a == b {
        return a;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let diff = hi - lo;
    let x = diff / lo;
    if x <= 1.0 {
        // hi <= 2 lo: the subtraction is exact and ln_1p avoids the
        // cancellation of log(hi) - log(lo).
        diff / x.ln_1p()
    } else {
        diff / (hi.ln() - lo.ln())
    }
}

/// Logarithmic mean together with its partial derivatives in each argument.
///
/// Away from the diagonal the closed forms
/// `d/da = (1 - m/a) / (log a - log b)` and `d/db = (m/b - 1) / (log a - log b)`
/// are stable; near the diagonal both are evaluated by an even/odd series in
/// `u = (a - b) / (a + b)`.
pub(crate) fn log_mean_with_partials(a: f64, b: f64) -> (f64, f64, f64) {
    debug_assert!(a > 0.0 && b > 0.0);
    let mid = 0.5 * (a + b);
    let u = (a - b) / (a + b);
    if u.abs() < 0.05 {
        let u2 = u * u;
        // h(u) = u / atanh(u), even; m = mid * h(u).
        let h = 1.0 - u2 * (1.0 / 3.0 + u2 * (4.0 / 45.0 + u2 * (44.0 / 945.0)));
        let hp = -u * (2.0 / 3.0 + u2 * (16.0 / 45.0 + u2 * (88.0 / 315.0)));
        let m = mid * h;
        let da = 0.5 * (h + (1.0 - u) * hp);
        let db = 0.5 * (h - (1.0 + u) * hp);
        (m, da, db)
    } else {
        let m = log_mean_pos(a, b);
        let d = (a / b).ln();
        let da = (1.0 - m / a) / d;
        let db = (m / b - 1.0) / d;
        (m, da, db)
    }
}

/// Antisymmetric function on directed edge pairs. One value is stored per
/// canonical edge (`u < v`); the reverse orientation negates it and
/// non-edges read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    values: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(g: &WeightedGraph) -> Self {
        Self {
            values: vec![0.0; g.num_edges()],
        }
    }

    /// Builds from values aligned with [`WeightedGraph::edges`], interpreted
    /// in the canonical `u -> v` orientation.
    pub fn from_values(g: &WeightedGraph, values: Vec<f64>) -> Result<Self> {
        if values.len() != g.num_edges() {
            return Err(Error::LengthMismatch {
                expected: g.num_edges(),
                got: values.len(),
            });
        }
        Ok(Self { values })
    }

    /// Evaluates `f(u, v)` on every canonical edge.
    pub fn from_fn(g: &WeightedGraph, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            values: g.edges().iter().map(|e| f(e.u, e.v)).collect(),
        }
    }

    /// Value on the directed pair `(i, j)`: antisymmetric on edges, zero off
    /// the edge set.
    pub fn get(&self, i: usize, j: usize, g: &WeightedGraph) -> f64 {
        match g.neighbors(i).iter().find(|nb| nb.vertex == j) {
            Some(nb) => {
                if i < j {
                    self.values[nb.edge]
                } else {
                    -self.values[nb.edge]
                }
            }
            None => 0.0,
        }
    }

    /// Values in canonical orientation, aligned with the graph's edge list.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Discrete gradient: `(p_v - p_u)` per canonical edge.
pub fn gradient(p: &[f64], g: &WeightedGraph) -> EdgeField {
    EdgeField {
        values: g.edges().iter().map(|e| p[e.v] - p[e.u]).collect(),
    }
}

/// Discrete divergence: `sum_j (w_ij / pi_i) F(i, j)` per vertex. For an
/// antisymmetric field the pi-weighted total is zero.
pub fn divergence(phi: &EdgeField, g: &WeightedGraph) -> Vec<f64> {
    let mut out = vec![0.0; g.n()];
    for (idx, e) in g.edges().iter().enumerate() {
        let v = phi.values[idx];
        out[e.u] += e.weight * v;
        out[e.v] -= e.weight * v;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o /= g.measure()[i];
    }
    out
}

/// The pi-Laplacian `sum_j (w_ij / pi_i) (p_j - p_i)`; equals
/// `divergence(gradient(p))` and annihilates constants.
pub fn laplacian(p: &[f64], g: &WeightedGraph) -> Vec<f64> {
    let mut out = vec![0.0; g.n()];
    for e in g.edges() {
        let diff = p[e.v] - p[e.u];
        out[e.u] += e.weight * diff;
        out[e.v] -= e.weight * diff;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o /= g.measure()[i];
    }
    out
}

/// Log-mean weighted divergence `sum_j (w_ij / pi_i) F(i,j) m(rho_i, rho_j)`.
pub fn weighted_divergence(rho: &Density, phi: &EdgeField, g: &WeightedGraph) -> Vec<f64> {
    let mut out = vec![0.0; g.n()];
    for (idx, e) in g.edges().iter().enumerate() {
        let m = log_mean_pos(rho[e.u], rho[e.v]);
        let v = phi.values[idx] * m;
        out[e.u] += e.weight * v;
        out[e.v] -= e.weight * v;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o /= g.measure()[i];
    }
    out
}

/// The Laplacian of a positive density written in log form:
/// `sum_j (w_ij / pi_i) (log rho_j - log rho_i) m(rho_i, rho_j)`.
/// Telescoping makes this agree entrywise with [`laplacian`].
pub fn laplacian_log_form(rho: &Density, g: &WeightedGraph) -> Vec<f64> {
    let mut out = vec![0.0; g.n()];
    for e in g.edges() {
        let m = log_mean_pos(rho[e.u], rho[e.v]);
        let diff = (rho[e.v].ln() - rho[e.u].ln()) * m;
        out[e.u] += e.weight * diff;
        out[e.v] -= e.weight * diff;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o /= g.measure()[i];
    }
    out
}

/// The density-weighted Laplacian applied to a vertex function:
/// `-weighted_divergence(rho, gradient(p))`. Positive semidefinite with
/// respect to the pi-inner product; its kernel is the constants.
pub fn weighted_laplacian(rho: &Density, p: &[f64], g: &WeightedGraph) -> Vec<f64> {
    let mut out = vec![0.0; g.n()];
    for e in g.edges() {
        let m = log_mean_pos(rho[e.u], rho[e.v]);
        let flux = e.weight * (p[e.v] - p[e.u]) * m;
        out[e.u] -= flux;
        out[e.v] += flux;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o /= g.measure()[i];
    }
    out
}

/// Standard pi-weighted inner product of vertex functions.
pub fn vertex_inner(a: &[f64], b: &[f64], g: &WeightedGraph) -> f64 {
    a.iter()
        .zip(b)
        .zip(g.measure())
        .map(|((x, y), pi)| x * y * pi)
        .sum()
}

/// Density-weighted inner product of edge fields:
/// `sum over edges of w_ij A(i,j) B(i,j) m(rho_i, rho_j)`.
pub fn edge_inner(rho: &Density, a: &EdgeField, b: &EdgeField, g: &WeightedGraph) -> f64 {
    g.edges()
        .iter()
        .enumerate()
        .map(|(idx, e)| {
            e.weight * a.values[idx] * b.values[idx] * log_mean_pos(rho[e.u], rho[e.v])
        })
        .sum()
}

/// The pi-symmetrized matrix of the weighted Laplacian: `S = Pi * B_rho`,
/// with `S_ij = -w_ij m(rho_i, rho_j)` off diagonal. Symmetric positive
/// semidefinite with one-dimensional kernel on connected graphs.
pub fn weighted_laplacian_matrix(rho: &Density, g: &WeightedGraph) -> DMatrix<f64> {
    let n = g.n();
    let mut s = DMatrix::zeros(n, n);
    for e in g.edges() {
        let m = e.weight * log_mean_pos(rho[e.u], rho[e.v]);
        s[(e.u, e.v)] = -m;
        s[(e.v, e.u)] = -m;
        s[(e.u, e.u)] += m;
        s[(e.v, e.v)] += m;
    }
    s
}

/// Factorized pseudo-inverse of the weighted Laplacian at a fixed density.
///
/// The singular system `B_rho p = sigma` is solved through the symmetric
/// form `S p = Pi sigma` with a rank-one augmentation `S + c pi pi^T` that
/// is positive definite and whose unique solution is exactly the mean-zero
/// gauge representative. Two rounds of iterative refinement keep the
/// residual at the contract tolerance even for badly scaled densities.
pub struct WeightedLaplacianSolver {
    augmented: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    pi: DVector<f64>,
    pi_total: f64,
}

impl WeightedLaplacianSolver {
    pub fn new(rho: &Density, g: &WeightedGraph) -> Result<Self> {
        let n = g.n();
        let s = weighted_laplacian_matrix(rho, g);
        let pi = DVector::from_column_slice(g.measure());
        let pi_total: f64 = g.measure().iter().sum();
        let pi_sq: f64 = g.measure().iter().map(|p| p * p).sum();
        let c = (s.trace() / n as f64) / pi_sq;
        let mut augmented = s;
        for i in 0..n {
            for j in 0..n {
                augmented[(i, j)] += c * pi[i] * pi[j];
            }
        }
        let chol = Cholesky::new(augmented.clone()).ok_or(Error::SolverFailure {
            residual: f64::INFINITY,
            tol: SOLVER_RESIDUAL_TOL,
        })?;
        Ok(Self {
            augmented,
            chol,
            pi,
            pi_total,
        })
    }

    /// Solves `B_rho p = sigma` for the mean-zero representative.
    ///
    /// `sigma` must satisfy the tangent-space condition
    /// `sum_i pi_i sigma_i = 0` up to [`TANGENT_SUM_TOL`].
    pub fn solve(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        let n = self.pi.len();
        if sigma.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: sigma.len(),
            });
        }
        let weighted_sum: f64 = sigma.iter().zip(self.pi.iter()).map(|(s, p)| s * p).sum();
        let scale: f64 = sigma
            .iter()
            .zip(self.pi.iter())
            .map(|(s, p)| (s * p).abs())
            .sum::<f64>()
            .max(1.0);
        if weighted_sum.abs() > TANGENT_SUM_TOL * scale {
            return Err(Error::NotInTangentSpace(weighted_sum));
        }

        let rhs = DVector::from_iterator(n, sigma.iter().zip(self.pi.iter()).map(|(s, p)| s * p));
        let mut p = self.chol.solve(&rhs);
        // Iterative refinement against the augmented system.
        for _ in 0..2 {
            let r = &rhs - &self.augmented * &p;
            p += self.chol.solve(&r);
        }
        // Exact mean-zero gauge.
        let mean = p
            .iter()
            .zip(self.pi.iter())
            .map(|(x, pi)| x * pi)
            .sum::<f64>()
            / self.pi_total;
        for x in p.iter_mut() {
            *x -= mean;
        }
        Ok(p.as_slice().to_vec())
    }
}

/// One-shot gauged pseudo-inverse: returns the unique `p` with
/// `B_rho p = sigma` and `<p, 1>_pi = 0`, verifying the residual contract.
pub fn solve_weighted_laplacian(
    rho: &Density,
    sigma: &[f64],
    g: &WeightedGraph,
) -> Result<Vec<f64>> {
    let solver = WeightedLaplacianSolver::new(rho, g)?;
    let p = solver.solve(sigma)?;
    let applied = weighted_laplacian(rho, &p, g);
    let sigma_scale = sigma.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1.0);
    let residual = applied
        .iter()
        .zip(sigma)
        .map(|(a, s)| (a - s).abs())
        .fold(0.0, f64::max);
    if residual > SOLVER_RESIDUAL_TOL * sigma_scale {
        return Err(Error::SolverFailure {
            residual,
            tol: SOLVER_RESIDUAL_TOL * sigma_scale,
        });
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_family, GraphFamily, TruncationMode};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_point() -> WeightedGraph {
        WeightedGraph::closed(&[(0, 1, 1.0)], 0).unwrap()
    }

    fn triangle() -> WeightedGraph {
        WeightedGraph::closed(&[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 0).unwrap()
    }

    fn path(n: usize) -> WeightedGraph {
        generate_family(&GraphFamily::Path { n }, TruncationMode::Closed).unwrap()
    }

    /// Quadrature oracle for the logarithmic mean via its integral
    /// representation `int_0^1 a^s b^{1-s} ds`, evaluated with 40-point
    /// Gauss-Legendre (spectrally accurate for this analytic integrand).
    fn log_mean_oracle(a: f64, b: f64) -> f64 {
        let (nodes, weights) = gauss_legendre_40();
        nodes
            .iter()
            .zip(weights.iter())
            .map(|(&x, &w)| {
                let s = 0.5 * (x + 1.0);
                w * 0.5 * a.powf(s) * b.powf(1.0 - s)
            })
            .sum()
    }

    fn gauss_legendre_40() -> (Vec<f64>, Vec<f64>) {
        // Newton iteration on Legendre P_40 from Chebyshev initial guesses.
        let n = 40usize;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    }

    fn legendre(n: usize, x: f64) -> (f64, f64) {
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    }

    #[test]
    fn log_mean_identity_and_forced_values() {
        assert_eq!(log_mean(0.7, 0.7).unwrap(), 0.7);
        assert_relative_eq!(
            log_mean(1.0, std::f64::consts::E).unwrap(),
            std::f64::consts::E - 1.0,
            max_relative = 1e-15
        );
        assert!(log_mean(-1.0, 2.0).is_err());
        assert!(log_mean(1.0, 0.0).is_err());
    }

    #[test]
    fn log_mean_matches_quadrature_oracle() {
        let m = log_mean(0.6, 0.4).unwrap();
        let oracle = log_mean_oracle(0.6, 0.4);
        assert_relative_eq!(m, oracle, max_relative = 1e-13);
        // Direct formula value: 0.2 / ln(1.5).
        assert_relative_eq!(m, 0.2 / 1.5f64.ln(), max_relative = 1e-15);

        for &(a, b) in &[(2.0, 0.001), (1e-6, 3.0), (0.31, 0.30), (5.0, 4.999)] {
            assert_relative_eq!(
                log_mean(a, b).unwrap(),
                log_mean_oracle(a, b),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn log_mean_near_equal_branch_accuracy() {
        // Across the near-equal regime the mean must stay within 1e-14
        // relative of the symmetric midpoint expansion.
        for &eps in &[1e-16, 1e-12, 1e-9, 1e-7, 1e-5] {
            let a = 0.8;
            let b = 0.8 * (1.0 + eps);
            let m = log_mean(a, b).unwrap();
            let u = (a - b) / (a + b);
            let mid = 0.5 * (a + b);
            let expansion = mid * (1.0 - u * u / 3.0);
            assert_relative_eq!(m, expansion, max_relative = 1e-14);
            assert!(m >= a.min(b) && m <= b.max(a));
        }
    }

    #[test]
    fn log_mean_bounds_million_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1_000_000 {
            let a: f64 = rng.random_range(1e-9..10.0);
            let b: f64 = rng.random_range(1e-9..10.0);
            let m = log_mean_pos(a, b);
            let geo = (a * b).sqrt();
            let arith = 0.5 * (a + b);
            assert!(m >= geo * (1.0 - 1e-13) && m <= arith * (1.0 + 1e-13));
        }
    }

    #[test]
    fn log_mean_partials_match_finite_differences() {
        for &(a, b) in &[(0.6, 0.4), (1.3, 1.3000001), (2.0, 0.01), (0.5, 0.5)] {
            let (m, da, db) = log_mean_with_partials(a, b);
            assert_relative_eq!(m, log_mean_pos(a, b), max_relative = 1e-13);
            let h = 1e-6;
            let fd_a = (log_mean_pos(a + h, b) - log_mean_pos(a - h, b)) / (2.0 * h);
            let fd_b = (log_mean_pos(a, b + h) - log_mean_pos(a, b - h)) / (2.0 * h);
            assert_relative_eq!(da, fd_a, max_relative = 1e-7, epsilon = 1e-9);
            assert_relative_eq!(db, fd_b, max_relative = 1e-7, epsilon = 1e-9);
            // Euler identity for a degree-1 homogeneous function.
            assert_relative_eq!(a * da + b * db, m, max_relative = 1e-12);
        }
    }

    #[test]
    fn gradient_examples() {
        let g = path(3);
        assert_eq!(gradient(&[1.0, 1.0, 1.0], &g).values(), &[0.0, 0.0]);
        assert_eq!(gradient(&[0.0, 1.0, 3.0], &g).values(), &[1.0, 2.0]);
        let dist: Vec<f64> = (0..3).map(|i| g.root_distance(i) as f64).collect();
        assert_eq!(gradient(&dist, &g).values(), &[1.0, 1.0]);
    }

    #[test]
    fn divergence_of_circulation_vanishes() {
        let g = triangle();
        // F(0,1) = F(1,2) = F(2,0) = 1 in cyclic orientation.
        let phi = EdgeField::from_values(&g, vec![1.0, -1.0, 1.0]).unwrap();
        // edges are (0,1), (0,2), (1,2): F(0,2) = -F(2,0) = -1.
        let div = divergence(&phi, &g);
        for d in div {
            assert!(d.abs() < 1e-15);
        }
        let zero = EdgeField::zeros(&g);
        assert!(divergence(&zero, &g).iter().all(|d| *d == 0.0));
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        let g = path(5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let via_div = divergence(&gradient(&p, &g), &g);
        let direct = laplacian(&p, &g);
        for (a, b) in via_div.iter().zip(&direct) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn laplacian_examples() {
        let g = two_point();
        assert_eq!(laplacian(&[1.0, 0.0], &g), vec![-1.0, 1.0]);
        let p3 = path(3);
        assert_eq!(laplacian(&[5.0, 5.0, 5.0], &p3), vec![0.0, 0.0, 0.0]);
        // pi = (1, 2, 1), p = (1, 0, 1): hand evaluation of the definition.
        assert_eq!(laplacian(&[1.0, 0.0, 1.0], &p3), vec![-1.0, 1.0, -1.0]);
    }

    #[test]
    fn laplacian_pi_weighted_sum_is_zero() {
        let g = path(5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let lap = laplacian(&p, &g);
        assert!(vertex_inner(&lap, &[1.0; 5], &g).abs() < 1e-13);
    }

    #[test]
    fn weighted_divergence_examples() {
        let g = triangle();
        let (rho, _) = Density::new(&[1.0, 1.0, 1.0], &g).unwrap();
        let circ = EdgeField::from_values(&g, vec![1.0, -1.0, 1.0]).unwrap();
        for d in weighted_divergence(&rho, &circ, &g) {
            assert!(d.abs() < 1e-15);
        }

        let g2 = two_point();
        let (rho2, _) = Density::new(&[0.6, 0.4], &g2).unwrap();
        let phi = gradient(&[0.0, 1.0], &g2);
        let wd = weighted_divergence(&rho2, &phi, &g2);
        let expected = log_mean_oracle(0.6, 0.4);
        assert_relative_eq!(wd[0], expected, max_relative = 1e-13);
        assert_relative_eq!(wd[1], -expected, max_relative = 1e-13);
    }

    #[test]
    fn log_form_matches_laplacian() {
        let g = two_point();
        let (rho, _) = Density::new(&[0.6, 0.4], &g).unwrap();
        let lf = laplacian_log_form(&rho, &g);
        assert_relative_eq!(lf[0], -0.2, max_relative = 1e-14);
        assert_relative_eq!(lf[1], 0.2, max_relative = 1e-14);

        let cyc = generate_family(&GraphFamily::Cycle { n: 6 }, TruncationMode::Closed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..2.0)).collect();
        let (rho, _) = Density::new(&raw, &cyc).unwrap();
        let lf = laplacian_log_form(&rho, &cyc);
        let direct = laplacian(rho.values(), &cyc);
        for (a, b) in lf.iter().zip(&direct) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-16);
        }

        let uniform = Density::uniform(&cyc);
        assert!(laplacian_log_form(&uniform, &cyc)
            .iter()
            .all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn weighted_laplacian_examples() {
        let g = two_point();
        let (rho, _) = Density::new(&[0.6, 0.4], &g).unwrap();
        assert_eq!(weighted_laplacian(&rho, &[3.0, 3.0], &g), vec![0.0, 0.0]);
        let b = weighted_laplacian(&rho, &[0.0, 1.0], &g);
        let m = log_mean_oracle(0.6, 0.4);
        assert_relative_eq!(b[0], -m, max_relative = 1e-13);
        assert_relative_eq!(b[1], m, max_relative = 1e-13);
    }

    #[test]
    fn weighted_laplacian_self_adjoint_in_pi() {
        let g = path(5);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let raw: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..1.0)).collect();
        let (rho, _) = Density::new(&raw, &g).unwrap();
        let p: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = vertex_inner(&weighted_laplacian(&rho, &p, &g), &q, &g);
        let rhs = vertex_inner(&p, &weighted_laplacian(&rho, &q, &g), &g);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        // Quadratic form nonnegative, zero only for constants.
        let quad = vertex_inner(&weighted_laplacian(&rho, &p, &g), &p, &g);
        assert!(quad > 0.0);
    }

    #[test]
    fn solver_round_trip() {
        let g = path(5);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let raw: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..1.0)).collect();
        let (rho, _) = Density::new(&raw, &g).unwrap();
        let mut p0: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = vertex_inner(&p0, &[1.0; 5], &g) / g.measure().iter().sum::<f64>();
        for x in &mut p0 {
            *x -= mean;
        }
        let sigma = weighted_laplacian(&rho, &p0, &g);
        let p = solve_weighted_laplacian(&rho, &sigma, &g).unwrap();
        for (a, b) in p.iter().zip(&p0) {
            assert!((a - b).abs() < 1e-9, "round trip off: {a} vs {b}");
        }
    }

    #[test]
    fn solver_two_point_hand_oracle() {
        // B p = sigma on the two-point graph: p = (-1/(2m), 1/(2m)).
        let g = two_point();
        let (rho, _) = Density::new(&[0.6, 0.4], &g).unwrap();
        let p = solve_weighted_laplacian(&rho, &[-1.0, 1.0], &g).unwrap();
        let m = log_mean_pos(0.6, 0.4);
        assert_relative_eq!(p[0], -0.5 / m, max_relative = 1e-11);
        assert_relative_eq!(p[1], 0.5 / m, max_relative = 1e-11);
    }

    #[test]
    fn solver_zero_and_gauge() {
        let g = path(4);
        let (rho, _) = Density::new(&[1.0, 0.5, 0.25, 2.0], &g).unwrap();
        let p = solve_weighted_laplacian(&rho, &[0.0; 4], &g).unwrap();
        assert!(p.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn solver_rejects_non_tangent() {
        let g = two_point();
        let (rho, _) = Density::new(&[0.6, 0.4], &g).unwrap();
        assert!(matches!(
            solve_weighted_laplacian(&rho, &[1.0, 1.0], &g),
            Err(Error::NotInTangentSpace(_))
        ));
    }

    #[test]
    fn integration_by_parts_random_graphs() {
        // -<div(rho F), phi>_pi = (F, grad phi)_rho on graphs up to 50
        // vertices, to 1e-11 relative.
        for seed in 0..10u64 {
            let g = generate_family(
                &GraphFamily::RandomSparse {
                    n: 50,
                    degree: 4,
                    seed,
                },
                TruncationMode::Closed,
            )
            .unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let raw: Vec<f64> = (0..g.n()).map(|_| rng.random_range(0.05..3.0)).collect();
            let (rho, _) = Density::new(&raw, &g).unwrap();
            let phi_vals: Vec<f64> = (0..g.num_edges())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let phi = EdgeField::from_values(&g, phi_vals).unwrap();
            let test_fn: Vec<f64> = (0..g.n()).map(|_| rng.random_range(-2.0..2.0)).collect();

            let div = weighted_divergence(&rho, &phi, &g);
            let lhs = -vertex_inner(&div, &test_fn, &g);
            let rhs = edge_inner(&rho, &phi, &gradient(&test_fn, &g), &g);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-11, epsilon = 1e-13);

            // Zero total weighted divergence.
            let total = vertex_inner(&div, &vec![1.0; g.n()], &g);
            assert!(total.abs() < 1e-11);
        }
    }

    proptest::proptest! {
        // Symmetry, mean bounds, and the telescoping identity across the
        // positive quadrant.
        #[test]
        fn log_mean_properties(a in 1e-8f64..1e3, b in 1e-8f64..1e3) {
            let m = log_mean_pos(a, b);
            proptest::prop_assert_eq!(m, log_mean_pos(b, a));
            let geo = (a * b).sqrt();
            let arith = 0.5 * (a + b);
            proptest::prop_assert!(m >= geo * (1.0 - 1e-13));
            proptest::prop_assert!(m <= arith * (1.0 + 1e-13));
            let telescoped = (a.ln() - b.ln()) * m;
            proptest::prop_assert!((telescoped - (a - b)).abs() <= 1e-12 * (a - b).abs().max(1e-30));
        }

        // Integration by parts on a path with random weights and data.
        #[test]
        fn integration_by_parts_random_weights(
            weights in proptest::collection::vec(0.1f64..5.0, 4),
            rho_raw in proptest::collection::vec(0.05f64..2.0, 5),
            phi_vals in proptest::collection::vec(-2.0f64..2.0, 4),
            test_fn in proptest::collection::vec(-2.0f64..2.0, 5),
        ) {
            let edges: Vec<(usize, usize, f64)> =
                weights.iter().enumerate().map(|(i, w)| (i, i + 1, *w)).collect();
            let g = WeightedGraph::closed(&edges, 0).unwrap();
            let (rho, _) = Density::new(&rho_raw, &g).unwrap();
            let phi = EdgeField::from_values(&g, phi_vals).unwrap();
            let div = weighted_divergence(&rho, &phi, &g);
            let lhs = -vertex_inner(&div, &test_fn, &g);
            let rhs = edge_inner(&rho, &phi, &gradient(&test_fn, &g), &g);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn weighted_laplacian_positive_semidefinite_spectrum() {
        for (name, g) in [
            ("two_point", two_point()),
            ("triangle", triangle()),
            ("path8", path(8)),
            (
                "random",
                generate_family(
                    &GraphFamily::RandomSparse {
                        n: 20,
                        degree: 3,
                        seed: 2,
                    },
                    TruncationMode::Closed,
                )
                .unwrap(),
            ),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let raw: Vec<f64> = (0..g.n()).map(|_| rng.random_range(0.1..2.0)).collect();
            let (rho, _) = Density::new(&raw, &g).unwrap();
            let s = weighted_laplacian_matrix(&rho, &g);
            let eig = s.symmetric_eigenvalues();
            let mut vals: Vec<f64> = eig.iter().cloned().collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!(
                vals[0].abs() < 1e-10,
                "{name}: kernel eigenvalue {}",
                vals[0]
            );
            assert!(
                vals[1] > 1e-8,
                "{name}: second eigenvalue {} not positive",
                vals[1]
            );
        }
    }
}
