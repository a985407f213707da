//! Free energy, its variational derivative, convergence diagnostics with
//! the indicator-set partition of the norm-decay argument, and
//! truncation-exhaustion studies.
//!
//! The free energy is `F(rho) = sum pi Psi rho + sum pi rho log rho`
//! (potential energy plus entropy). Its unique global minimizer is the
//! Gibbs density, with minimum value `F(rho*) = -log K` where `K` is the
//! Gibbs normalizer; the relative energy is computed against that closed
//! form, which never overflows.

use serde::Serialize;

use crate::density::{
    gibbs_density, lr_norm_values, second_moment, Density, Exponent, Potential,
};
use crate::error::{Error, Result};
use crate::fpe::{fpe_rhs, integrate, IntegratorConfig, Trajectory};
use crate::graph::{generate_family, GraphFamily, TruncationMode, WeightedGraph};
use crate::metric::{w2_distance, W2Config};
use crate::operators::log_mean_pos;

/// Free energy split into its potential and entropy parts, with the energy
/// relative to the Gibbs minimum.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    /// `sum pi Psi rho`.
    pub potential_energy: f64,
    /// `sum pi rho log rho`.
    pub entropy: f64,
    /// `potential_energy + entropy`.
    pub total: f64,
    /// `total - F(gibbs)`, nonnegative up to rounding.
    pub relative: f64,
}

/// Free energy of a density under a potential.
pub fn free_energy(rho: &Density, psi: &Potential, g: &WeightedGraph) -> EnergyReport {
    let mut potential_energy = 0.0;
    let mut entropy = 0.0;
    for i in 0..g.n() {
        let pi = g.measure()[i];
        potential_energy += pi * psi[i] * rho[i];
        entropy += pi * rho[i] * rho[i].ln();
    }
    let total = potential_energy + entropy;
    // F(gibbs) = -log K, computed through the shifted normalizer so wide
    // potential ranges cannot overflow.
    let min_psi = psi
        .values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let shifted: f64 = psi
        .values()
        .iter()
        .zip(g.measure())
        .map(|(p, pi)| pi * (-(p - min_psi)).exp())
        .sum();
    let log_k = shifted.ln() - min_psi;
    EnergyReport {
        potential_energy,
        entropy,
        total,
        relative: total + log_k,
    }
}

/// Free energy evaluated on raw per-vertex values (used for trajectory
/// diagnostics, where absorbing-mode states are sub-probability vectors).
pub fn free_energy_values(values: &[f64], psi: &Potential, g: &WeightedGraph) -> f64 {
    values
        .iter()
        .zip(psi.values())
        .zip(g.measure())
        .map(|((r, p), pi)| pi * (p * r + r * r.ln()))
        .sum()
}

/// The variational derivative of the free energy: `Psi_i + 1 + log rho_i`.
pub fn free_energy_derivative(rho: &Density, psi: &Potential, g: &WeightedGraph) -> Vec<f64> {
    let _ = g;
    rho.values()
        .iter()
        .zip(psi.values())
        .map(|(r, p)| p + 1.0 + r.ln())
        .collect()
}

/// The energy dissipation rate `g_rho(dF, dF)` evaluated through the edge
/// sum `sum_edges w (grad dF)^2 m(rho_i, rho_j)`; no solve is needed since
/// the quadratic form of the weighted Laplacian is explicit.
pub fn dissipation(rho: &Density, psi: &Potential, g: &WeightedGraph) -> f64 {
    dissipation_values(rho.values(), psi, g)
}

/// Dissipation rate evaluated on raw per-vertex values.
pub fn dissipation_values(values: &[f64], psi: &Potential, g: &WeightedGraph) -> f64 {
    g.edges()
        .iter()
        .map(|e| {
            let df = (psi[e.v] + values[e.v].ln()) - (psi[e.u] + values[e.u].ln());
            e.weight * df * df * log_mean_pos(values[e.u], values[e.v])
        })
        .sum()
}

/// Per-time convergence table for a trajectory against a reference density.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    /// Even exponents; `norms[k]` is the row of distances at `times[k]`
    /// ordered like `exponents`.
    pub exponents: Vec<u32>,
    pub norms: Vec<Vec<f64>>,
    pub sup_norms: Vec<f64>,
    /// Forward-difference time derivatives, one row per exponent, with
    /// length `times.len() - 1`.
    pub derivatives: Vec<Vec<f64>>,
    pub sup_derivatives: Vec<f64>,
    /// Strict decrease across every recorded step, per exponent.
    pub strictly_decreasing: Vec<bool>,
    pub sup_strictly_decreasing: bool,
    /// Least-squares exponential decay rates fitted on the last half of the
    /// recorded log-norms. Diagnostic only; no rate is asserted.
    pub fitted_rates: Vec<f64>,
    pub sup_fitted_rate: f64,
}

/// Distances to a reference density along a trajectory, their discrete time
/// derivatives, monotonicity flags, and fitted exponential rates.
pub fn convergence_diagnostics(
    traj: &Trajectory,
    reference: &Density,
    exponents: &[u32],
    g: &WeightedGraph,
) -> Result<ConvergenceReport> {
    for &p in exponents {
        if p == 0 || p % 2 != 0 {
            return Err(Error::UnsupportedExponent(p));
        }
    }
    let times = traj.times.clone();
    let mut norms = Vec::with_capacity(times.len());
    let mut sup_norms = Vec::with_capacity(times.len());
    for state in &traj.states {
        let row: Vec<f64> = exponents
            .iter()
            .map(|&p| lr_norm_values(state, reference.values(), Exponent::Finite(p), g).unwrap())
            .collect();
        norms.push(row);
        sup_norms.push(
            lr_norm_values(state, reference.values(), Exponent::Infinity, g).unwrap(),
        );
    }

    let mut derivatives = vec![Vec::with_capacity(times.len().saturating_sub(1)); exponents.len()];
    let mut sup_derivatives = Vec::with_capacity(times.len().saturating_sub(1));
    for k in 0..times.len().saturating_sub(1) {
        let dt = times[k + 1] - times[k];
        for (e, dv) in derivatives.iter_mut().enumerate() {
            dv.push((norms[k + 1][e] - norms[k][e]) / dt);
        }
        sup_derivatives.push((sup_norms[k + 1] - sup_norms[k]) / dt);
    }

    let strictly_decreasing: Vec<bool> = (0..exponents.len())
        .map(|e| (1..times.len()).all(|k| norms[k][e] < norms[k - 1][e]))
        .collect();
    let sup_strictly_decreasing = (1..times.len()).all(|k| sup_norms[k] < sup_norms[k - 1]);

    let fitted_rates: Vec<f64> = (0..exponents.len())
        .map(|e| {
            let series: Vec<f64> = norms.iter().map(|row| row[e]).collect();
            fit_decay_rate(&times, &series)
        })
        .collect();
    let sup_fitted_rate = fit_decay_rate(&times, &sup_norms);

    Ok(ConvergenceReport {
        times,
        exponents: exponents.to_vec(),
        norms,
        sup_norms,
        derivatives,
        sup_derivatives,
        strictly_decreasing,
        sup_strictly_decreasing,
        fitted_rates,
        sup_fitted_rate,
    })
}

/// Least-squares slope of `-log(norm)` against time over the last half of
/// the samples; returns NaN when fewer than two usable points exist.
fn fit_decay_rate(times: &[f64], norms: &[f64]) -> f64 {
    let start = times.len() / 2;
    let pts: Vec<(f64, f64)> = times[start..]
        .iter()
        .zip(&norms[start..])
        .filter(|(_, &n)| n > 0.0 && n.is_finite())
        .map(|(&t, &n)| (t, n.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return f64::NAN;
    }
    -(n * sxy - sx * sy) / denom
}

/// Signed Lyapunov contributions of one indicator block: edges inside the
/// block, edges crossing to the opposite block, and edges into the matched
/// set.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PartitionTerms {
    pub within: f64,
    pub crossing: f64,
    pub matched_boundary: f64,
}

/// Indicator-set partition of the vertices against the Gibbs density and
/// the decomposition of `(1/2r) d/dt ||rho - rho*||_{2r}^{2r}` into signed
/// block sums.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    /// `N1`: vertices with `rho > rho*` (beyond the tolerance band).
    pub above: Vec<usize>,
    /// `N2`: vertices with `rho < rho*`.
    pub below: Vec<usize>,
    /// `N3`: vertices with `|rho - rho*| <= tol`.
    pub matched: Vec<usize>,
    /// Half of the norm-power exponent; the norm power is `2r`.
    pub half_exponent: u32,
    /// Terms of the `N1` block (the paper-side `I1, I2, I3`).
    pub terms_above: PartitionTerms,
    /// Mirror terms of the `N2` block.
    pub terms_below: PartitionTerms,
    /// Contribution of the matched block; bounded by a multiple of `tol`.
    pub matched_residual: f64,
    /// `(1/2r) d/dt ||rho - rho*||_{2r}^{2r}` computed independently from
    /// the Fokker-Planck right-hand side in its potential form.
    pub total: f64,
    /// Sum of all decomposition terms; reconciles with `total`.
    pub decomposition_total: f64,
}

/// Partitions vertices by sign of `rho - rho*` with a tolerance band and
/// computes the signed Lyapunov sums for norm power `2r`.
///
/// Every sum is evaluated from the transformed drive
/// `(log rho_j - log rho*_j) - (log rho_i - log rho*_i)`, while `total`
/// comes from the potential-form right-hand side, so the reconciliation of
/// the two routes is a genuine identity check.
pub fn lyapunov_partition(
    rho: &Density,
    gibbs: &Density,
    psi: &Potential,
    r: u32,
    g: &WeightedGraph,
    tol: f64,
) -> Result<PartitionReport> {
    if r == 0 {
        return Err(Error::UnsupportedExponent(0));
    }
    let n = g.n();
    let power = (2 * r - 1) as i32;

    #[derive(Clone, Copy, PartialEq)]
    enum Block {
        Above,
        Below,
        Matched,
    }
    let blocks: Vec<Block> = (0..n)
        .map(|i| {
            let d = rho[i] - gibbs[i];
            let band = tol * rho[i].max(gibbs[i]).max(f64::MIN_POSITIVE);
            if d.abs() <= band {
                Block::Matched
            } else if d > 0.0 {
                Block::Above
            } else {
                Block::Below
            }
        })
        .collect();

    let deviation: Vec<f64> = (0..n).map(|i| rho[i] - gibbs[i]).collect();
    let log_drive: Vec<f64> = (0..n).map(|i| rho[i].ln() - gibbs[i].ln()).collect();

    let mut terms_above = PartitionTerms {
        within: 0.0,
        crossing: 0.0,
        matched_boundary: 0.0,
    };
    let mut terms_below = terms_above;
    let mut matched_residual = 0.0;

    for e in g.edges() {
        let m = log_mean_pos(rho[e.u], rho[e.v]);
        let w = e.weight;
        let drive = log_drive[e.v] - log_drive[e.u];
        let du = deviation[e.u].powi(power);
        let dv = deviation[e.v].powi(power);
        // Ordered contributions of this edge to d/dt of each endpoint block:
        // vertex u сollects w * drive * du, vertex v the reverse.
        let to_u = w * drive * du;
        let to_v = -w * drive * dv;
        match (blocks[e.u], blocks[e.v]) {
            (Block::Above, Block::Above) => {
                // Symmetrized within-block kernel.
                terms_above.within += w * drive * (du - dv) * m;
            }
            (Block::Below, Block::Below) => {
                terms_below.within += w * drive * (du - dv) * m;
            }
            (Block::Above, Block::Below) => {
                terms_above.crossing += to_u * m;
                terms_below.crossing += to_v * m;
            }
            (Block::Below, Block::Above) => {
                terms_below.crossing += to_u * m;
                terms_above.crossing += to_v * m;
            }
            (Block::Above, Block::Matched) => {
                terms_above.matched_boundary += to_u * m;
                matched_residual += to_v * m;
            }
            (Block::Matched, Block::Above) => {
                terms_above.matched_boundary += to_v * m;
                matched_residual += to_u * m;
            }
            (Block::Below, Block::Matched) => {
                terms_below.matched_boundary += to_u * m;
                matched_residual += to_v * m;
            }
            (Block::Matched, Block::Below) => {
                terms_below.matched_boundary += to_v * m;
                matched_residual += to_u * m;
            }
            (Block::Matched, Block::Matched) => {
                matched_residual += (to_u + to_v) * m;
            }
        }
    }

    // Independent total from the potential-form right-hand side.
    let rhs = fpe_rhs(rho, psi, g);
    let total: f64 = (0..n)
        .map(|i| g.measure()[i] * deviation[i].powi(power) * rhs[i])
        .sum();

    let decomposition_total = terms_above.within
        + terms_above.crossing
        + terms_above.matched_boundary
        + terms_below.within
        + terms_below.crossing
        + terms_below.matched_boundary
        + matched_residual;

    let (above, below, matched) = {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut m3 = Vec::new();
        for (i, blk) in blocks.iter().enumerate() {
            match blk {
                Block::Above => a.push(i),
                Block::Below => b.push(i),
                Block::Matched => m3.push(i),
            }
        }
        (a, b, m3)
    };

    Ok(PartitionReport {
        above,
        below,
        matched,
        half_exponent: r,
        terms_above,
        terms_below,
        matched_residual,
        total,
        decomposition_total,
    })
}

/// Default tolerance band for the matched set: relative at the scale of
/// the compared densities.
pub const PARTITION_DEFAULT_TOL: f64 = 1e-12;

/// Scenario for an exhaustion study over growing truncations.
#[derive(Debug, Clone)]
pub struct ExhaustionConfig {
    /// Nested family: `Path`, `LatticeZ`, or `BinaryTree` sizes are
    /// prefixes/windows of one another. `Cycle` and `RandomSparse` do not
    /// embed and are rejected.
    pub family: ExhaustionFamily,
    pub sizes: Vec<usize>,
    pub mode: TruncationMode,
    /// Potential slope: `Psi = c * d(root, .)`.
    pub potential_slope: f64,
    /// Initial density decay: `rho0` proportional to `e^{-a d(root, .)}`.
    pub init_decay: f64,
    pub integrator: IntegratorConfig,
    /// Number of equispaced checkpoint times used for cross-size
    /// comparison.
    pub checkpoints: usize,
    /// Also compute a coarse Wasserstein distance to Gibbs per size
    /// (closed mode only).
    pub compute_w2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExhaustionFamily {
    Path,
    LatticeZ,
    BinaryTree,
}

/// One row of the per-size exhaustion table.
#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionRow {
    pub size: usize,
    pub vertices: usize,
    /// Final `|sum pi rho - 1|`: conservation residual in closed mode,
    /// accumulated leakage in absorbing mode.
    pub final_mass_defect: f64,
    pub final_l2_to_gibbs: f64,
    pub final_sup_to_gibbs: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    /// Gibbs normalizer per truncation: the summability diagnostic.
    pub gibbs_normalizer: f64,
    pub second_moment_final: f64,
    pub w2_to_gibbs: Option<f64>,
}

/// Result of an exhaustion study.
#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionReport {
    pub rows: Vec<ExhaustionRow>,
    /// `sup` over shared-window vertices and checkpoint times of the state
    /// difference between consecutive sizes.
    pub successive_differences: Vec<f64>,
    /// Whether the successive differences decrease strictly.
    pub cauchy: bool,
}

fn family_graph(
    family: ExhaustionFamily,
    size: usize,
    mode: TruncationMode,
) -> Result<WeightedGraph> {
    let fam = match family {
        ExhaustionFamily::Path => GraphFamily::Path { n: size },
        ExhaustionFamily::LatticeZ => GraphFamily::LatticeZ { window: size },
        ExhaustionFamily::BinaryTree => GraphFamily::BinaryTree { depth: size },
    };
    generate_family(&fam, mode)
}

/// Index of each vertex of the smaller truncation inside the larger one.
fn embedding(family: ExhaustionFamily, small: usize, large: usize, n_small: usize) -> Vec<usize> {
    match family {
        // Prefix orders: path vertices and breadth-first tree vertices keep
        // their indices.
        ExhaustionFamily::Path | ExhaustionFamily::BinaryTree => (0..n_small).collect(),
        // Lattice windows are centered: position k - w maps by offset.
        ExhaustionFamily::LatticeZ => {
            let offset = large - small;
            (0..n_small).map(|i| i + offset).collect()
        }
    }
}

/// Runs the same potential/init scenario on growing truncations and
/// measures how much the window-restricted trajectories move between
/// consecutive sizes.
pub fn exhaustion_study(cfg: &ExhaustionConfig) -> Result<ExhaustionReport> {
    if cfg.sizes.len() < 2 {
        return Err(Error::InvalidConfig(
            "exhaustion study needs at least two sizes to compare".into(),
        ));
    }
    if cfg.sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(
            "exhaustion sizes must strictly increase".into(),
        ));
    }
    if cfg.checkpoints < 2 {
        return Err(Error::InvalidConfig(
            "need at least two checkpoint times".into(),
        ));
    }
    if cfg.init_decay.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::ScenarioUndefinedOnTruncation(
            "initial density decay rate must be positive so rho0 normalizes on every truncation"
                .into(),
        ));
    }

    let mut rows = Vec::new();
    let mut runs: Vec<(WeightedGraph, Trajectory)> = Vec::new();

    for &size in &cfg.sizes {
        let g = family_graph(cfg.family, size, cfg.mode)?;
        let psi = Potential::from_distance(&g, cfg.potential_slope);
        let raw: Vec<f64> = (0..g.n())
            .map(|i| (-cfg.init_decay * g.root_distance(i) as f64).exp())
            .collect();
        let (rho0, _) = Density::new(&raw, &g)?;
        let traj = integrate(&rho0, &psi, &g, &cfg.integrator)?;

        let (gibbs, normalizer) = gibbs_density(&g, &psi)?;
        let final_state = traj.final_state();
        let final_l2 =
            lr_norm_values(final_state, gibbs.values(), Exponent::Finite(2), &g).unwrap();
        let final_sup =
            lr_norm_values(final_state, gibbs.values(), Exponent::Infinity, &g).unwrap();
        let energy_initial = traj.diagnostics.first().unwrap().free_energy;
        let energy_final = traj.diagnostics.last().unwrap().free_energy;
        let mass: f64 = final_state
            .iter()
            .zip(g.measure())
            .map(|(v, pi)| v * pi)
            .sum();
        let second_moment_final =
            second_moment(&Density::from_normalized(final_state.to_vec()), &g);

        let w2_to_gibbs = if cfg.compute_w2 && cfg.mode == TruncationMode::Closed {
            let final_density = Density::from_normalized(final_state.to_vec());
            let w2cfg = W2Config {
                segments: 8,
                grad_tol: 1e-5,
                decrease_tol: 1e-8,
                max_iters: 400,
                history: 8,
            };
            w2_distance(&final_density, &gibbs, &g, &w2cfg)
                .ok()
                .map(|r| r.distance)
        } else {
            None
        };

        rows.push(ExhaustionRow {
            size,
            vertices: g.n(),
            final_mass_defect: (mass - 1.0).abs(),
            final_l2_to_gibbs: final_l2,
            final_sup_to_gibbs: final_sup,
            energy_initial,
            energy_final,
            gibbs_normalizer: normalizer,
            second_moment_final,
            w2_to_gibbs,
        });
        runs.push((g, traj));
    }

    // Window-restricted sup differences at shared checkpoint times.
    let horizon = cfg.integrator.horizon;
    let times: Vec<f64> = (0..cfg.checkpoints)
        .map(|k| horizon * k as f64 / (cfg.checkpoints - 1) as f64)
        .collect();
    let mut successive_differences = Vec::new();
    for w in runs.windows(2) {
        let (g_small, traj_small) = &w[0];
        let (_, traj_large) = &w[1];
        let small_size = rows[successive_differences.len()].size;
        let large_size = rows[successive_differences.len() + 1].size;
        let map = embedding(cfg.family, small_size, large_size, g_small.n());
        let mut sup = 0.0f64;
        for &t in &times {
            let a = traj_small.sample_state(t);
            let b = traj_large.sample_state(t);
            for (i, &j) in map.iter().enumerate() {
                sup = sup.max((a[i] - b[j]).abs());
            }
        }
        successive_differences.push(sup);
    }

    let cauchy = successive_differences.windows(2).all(|w| w[1] < w[0]);

    Ok(ExhaustionReport {
        rows,
        successive_differences,
        cauchy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpe::IntegratorMethod;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_point() -> WeightedGraph {
        WeightedGraph::closed(&[(0, 1, 1.0)], 0).unwrap()
    }

    fn path3() -> WeightedGraph {
        WeightedGraph::closed(&[(0, 1, 1.0), (1, 2, 1.0)], 0).unwrap()
    }

    #[test]
    fn free_energy_uniform_two_point() {
        let g = two_point();
        let (rho, _) = Density::new(&[0.5, 0.5], &g).unwrap();
        let report = free_energy(&rho, &Potential::zero(&g), &g);
        assert_eq!(report.potential_energy, 0.0);
        assert_relative_eq!(report.entropy, 0.5f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(report.total, report.potential_energy + report.entropy);
        // Uniform is the Gibbs density of the zero potential.
        assert!(report.relative.abs() < 1e-13);
    }

    #[test]
    fn free_energy_path3_linear_potential() {
        let g = path3();
        let psi = Potential::new(vec![0.0, 1.0, 2.0], &g).unwrap();
        let (rho, _) = Density::new(&[1.0, 1.0, 1.0], &g).unwrap();
        let report = free_energy(&rho, &psi, &g);
        // (1*0 + 2*1 + 1*2) / 4 = 1.
        assert_relative_eq!(report.potential_energy, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn relative_energy_zero_at_gibbs_and_positive_elsewhere() {
        let g = path3();
        let psi = Potential::from_distance(&g, 0.8);
        let (gibbs, _) = gibbs_density(&g, &psi).unwrap();
        let at_gibbs = free_energy(&gibbs, &psi, &g);
        assert!(at_gibbs.relative.abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..3.0)).collect();
            let (rho, _) = Density::new(&raw, &g).unwrap();
            let report = free_energy(&rho, &psi, &g);
            assert!(report.relative >= -1e-12);
        }
    }

    #[test]
    fn derivative_constant_at_gibbs() {
        let g = path3();
        let psi = Potential::from_distance(&g, 1.3);
        let (gibbs, k) = gibbs_density(&g, &psi).unwrap();
        let df = free_energy_derivative(&gibbs, &psi, &g);
        let expected = 1.0 - k.ln();
        for v in df {
            assert_relative_eq!(v, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn derivative_uniform_zero_potential() {
        let g = path3();
        let rho = Density::uniform(&g);
        let df = free_energy_derivative(&rho, &Potential::zero(&g), &g);
        let expected = 1.0 + (1.0f64 / 4.0).ln();
        for v in df {
            assert_relative_eq!(v, expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        // Central differences of the raw energy in each pi-weighted
        // coordinate: [F(rho + eps e_i) - F(rho - eps e_i)] / (2 eps pi_i).
        let g = generate_family(&GraphFamily::Cycle { n: 6 }, TruncationMode::Closed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..2.0)).collect();
        let (rho, _) = Density::new(&raw, &g).unwrap();
        let psi_vals: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.5)).collect();
        let psi = Potential::new(psi_vals, &g).unwrap();
        let analytic = free_energy_derivative(&rho, &psi, &g);
        let eps = 1e-6;
        for i in 0..6 {
            let mut plus = rho.values().to_vec();
            plus[i] += eps;
            let mut minus = rho.values().to_vec();
            minus[i] -= eps;
            let fd = (free_energy_values(&plus, &psi, &g) - free_energy_values(&minus, &psi, &g))
                / (2.0 * eps * g.measure()[i]);
            assert!(
                (analytic[i] - fd).abs() < 1e-6,
                "vertex {i}: {} vs {fd}",
                analytic[i]
            );
        }
    }

    #[test]
    fn dissipation_matches_solver_route() {
        // Edge-sum dissipation equals <B dF, dF>_pi.
        let g = generate_family(&GraphFamily::Path { n: 5 }, TruncationMode::Closed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..1.5)).collect();
        let (rho, _) = Density::new(&raw, &g).unwrap();
        let psi = Potential::from_distance(&g, 0.6);
        let df = free_energy_derivative(&rho, &psi, &g);
        let via_operator = crate::operators::vertex_inner(
            &crate::operators::weighted_laplacian(&rho, &df, &g),
            &df,
            &g,
        );
        assert_relative_eq!(
            dissipation(&rho, &psi, &g),
            via_operator,
            max_relative = 1e-12
        );
    }

    #[test]
    fn convergence_report_two_point_heat() {
        let g = two_point();
        let (rho0, _) = Density::new(&[0.6, 0.4], &g).unwrap();
        let psi = Potential::zero(&g);
        let cfg = IntegratorConfig {
            rtol: 1e-10,
            atol: 1e-13,
            horizon: 4.0,
            record_every: 5,
            ..Default::default()
        };
        let traj = integrate(&rho0, &psi, &g, &cfg).unwrap();
        let (gibbs, _) = gibbs_density(&g, &psi).unwrap();
        let report = convergence_diagnostics(&traj, &gibbs, &[2, 4], &g).unwrap();
        assert!(report.strictly_decreasing.iter().all(|&b| b));
        assert!(report.sup_strictly_decreasing);
        // Closed form: l2 distance decays exactly at rate 2.
        assert!(
            (report.fitted_rates[0] - 2.0).abs() < 0.02,
            "fitted rate {}",
            report.fitted_rates[0]
        );
        // Norm at t=0 is 0.1 * sqrt(2).
        assert_relative_eq!(
            report.norms[0][0],
            0.1 * 2.0f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn convergence_report_from_equilibrium() {
        let g = path3();
        let psi = Potential::from_distance(&g, 1.0);
        let (gibbs, _) = gibbs_density(&g, &psi).unwrap();
        let cfg = IntegratorConfig::with_horizon(2.0);
        let traj = integrate(&gibbs, &psi, &g, &cfg).unwrap();
        let report = convergence_diagnostics(&traj, &gibbs, &[2], &g).unwrap();
        for row in &report.norms {
            assert!(row[0] <= 1e-10);
        }
    }

    #[test]
    fn partition_at_gibbs_is_all_matched() {
        let g = path3();
        let psi = Potential::from_distance(&g, 0.9);
        let (gibbs, _) = gibbs_density(&g, &psi).unwrap();
        let report =
            lyapunov_partition(&gibbs, &gibbs, &psi, 1, &g, PARTITION_DEFAULT_TOL).unwrap();
        assert_eq!(report.matched.len(), 3);
        assert!(report.above.is_empty() && report.below.is_empty());
        assert_eq!(report.terms_above.within, 0.0);
        assert_eq!(report.terms_above.crossing, 0.0);
        assert!(report.total.abs() < 1e-15);
    }

    #[test]
    fn partition_two_point_crossing_negative() {
        // rho = (0.6, 0.4) against the uniform Gibbs: N1 = {0}, N2 = {1},
        // one crossing edge, I2 < 0 on both blocks.
        let g = two_point();
        let (rho, _) = Density::new(&[0.6, 0.4], &g).unwrap();
        let psi = Potential::zero(&g);
        let (gibbs, _) = gibbs_density(&g, &psi).unwrap();
        let report = lyapunov_partition(&rho, &gibbs, &psi, 1, &g, PARTITION_DEFAULT_TOL).unwrap();
        assert_eq!(report.above, vec![0]);
        assert_eq!(report.below, vec![1]);
        assert!(report.terms_above.crossing < 0.0);
        assert!(report.terms_below.crossing < 0.0);

        // Direct evaluation of the single-edge sum as oracle:
        // w (L_1 - L_0) (D_0)^{2r-1} m.
        let m = log_mean_pos(0.6, 0.4);
        let drive = (0.4f64 / 0.5).ln() - (0.6f64 / 0.5).ln();
        let expected = drive * 0.1 * m;
        assert_relative_eq!(report.terms_above.crossing, expected, max_relative = 1e-13);
        assert!(report.total < 0.0);
    }

    #[test]
    fn partition_reconciles_with_rhs_total() {
        let g = generate_family(&GraphFamily::Cycle { n: 6 }, TruncationMode::Closed).unwrap();
        let psi = Potential::from_distance(&g, 0.4);
        let (gibbs, _) = gibbs_density(&g, &psi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for r in [1u32, 2, 4] {
            for _ in 0..20 {
                let raw: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..2.0)).collect();
                let (rho, _) = Density::new(&raw, &g).unwrap();
                let report =
                    lyapunov_partition(&rho, &gibbs, &psi, r, &g, PARTITION_DEFAULT_TOL).unwrap();
                let scale = report.total.abs().max(1.0);
                assert!(
                    (report.total - report.decomposition_total).abs() <= 1e-10 * scale,
                    "r={r}: {} vs {}",
                    report.total,
                    report.decomposition_total
                );
            }
        }
    }

    #[test]
    fn partition_derivative_matches_trajectory_difference() {
        // The analytic total equals the finite difference of
        // (1/2r) ||rho - rho*||_{2r}^{2r} along the flow, to O(h).
        let g = path3();
        let psi = Potential::from_distance(&g, 0.7);
        let (gibbs, _) = gibbs_density(&g, &psi).unwrap();
        let (rho0, _) = Density::new(&[1.0, 0.4, 0.8], &g).unwrap();
        let r = 1u32;
        let report = lyapunov_partition(&rho0, &gibbs, &psi, r, &g, PARTITION_DEFAULT_TOL).unwrap();

        let norm_power = |state: &[f64]| -> f64 {
            state
                .iter()
                .zip(gibbs.values())
                .zip(g.measure())
                .map(|((a, b), pi)| pi * (a - b).powi(2 * r as i32))
                .sum::<f64>()
                / (2.0 * r as f64)
        };

        let mut errs = Vec::new();
        for h in [1e-2, 5e-3] {
            let cfg = IntegratorConfig {
                rtol: 1e-12,
                atol: 1e-14,
                dt_init: h / 16.0,
                dt_max: h,
                horizon: h,
                record_every: 1000,
                ..Default::default()
            };
            let traj = integrate(&rho0, &psi, &g, &cfg).unwrap();
            let fd = (norm_power(traj.final_state()) - norm_power(rho0.values())) / h;
            errs.push((fd - report.total).abs());
        }
        // First-order convergence: halving h roughly halves the error.
        assert!(errs[1] < errs[0] * 0.7, "errors {errs:?}");
    }

    #[test]
    fn exhaustion_lattice_windows_converge() {
        let cfg = ExhaustionConfig {
            family: ExhaustionFamily::LatticeZ,
            sizes: vec![2, 4, 8],
            mode: TruncationMode::Closed,
            potential_slope: 1.0,
            init_decay: 2.0,
            integrator: IntegratorConfig {
                horizon: 2.0,
                record_every: 5,
                ..Default::default()
            },
            checkpoints: 9,
            compute_w2: false,
        };
        let report = exhaustion_study(&cfg).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.successive_differences.len(), 2);
        assert!(
            report.cauchy,
            "differences not decreasing: {:?}",
            report.successive_differences
        );
        for row in &report.rows {
            assert!(row.final_mass_defect <= 1e-10);
            assert!(row.energy_final <= row.energy_initial + 1e-12);
        }
    }

    #[test]
    fn exhaustion_needs_two_sizes() {
        let cfg = ExhaustionConfig {
            family: ExhaustionFamily::LatticeZ,
            sizes: vec![4],
            mode: TruncationMode::Closed,
            potential_slope: 1.0,
            init_decay: 2.0,
            integrator: IntegratorConfig::with_horizon(1.0),
            checkpoints: 5,
            compute_w2: false,
        };
        assert!(exhaustion_study(&cfg).is_err());
    }

    #[test]
    fn exhaustion_absorbing_vs_closed_leakage() {
        let mk = |mode| ExhaustionConfig {
            family: ExhaustionFamily::LatticeZ,
            sizes: vec![2, 4],
            mode,
            potential_slope: 1.0,
            init_decay: 1.0,
            integrator: IntegratorConfig {
                horizon: 1.0,
                method: IntegratorMethod::AdaptiveRk45,
                ..Default::default()
            },
            checkpoints: 5,
            compute_w2: false,
        };
        let closed = exhaustion_study(&mk(TruncationMode::Closed)).unwrap();
        let absorbing = exhaustion_study(&mk(TruncationMode::Absorbing)).unwrap();
        for row in &closed.rows {
            assert!(row.final_mass_defect <= 1e-10);
        }
        for row in &absorbing.rows {
            assert!(
                row.final_mass_defect > 1e-4,
                "no leakage on absorbing window {}",
                row.size
            );
        }
    }
}
