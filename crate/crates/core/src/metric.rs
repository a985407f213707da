//! Wasserstein-type metric machinery on the positive density simplex:
//! tangent vectors, the metric inner product, a discrete Hodge
//! decomposition, and the 2-Wasserstein distance computed by minimizing the
//! discretized Benamou-Brenier action over density paths.
//!
//! A tangent vector at a density is a per-vertex perturbation with zero
//! pi-weighted sum; it is realized as `sigma = B_rho p` for a unique
//! mean-zero velocity potential `p`. The metric inner product is
//! `g_rho(s1, s2) = <s1, B_rho^{-1} s2>_pi`, which equals the edge-sum form
//! `sum over edges of w (grad p1)(grad p2) m(rho_i, rho_j)`.
//!
//! The distance between two densities is the infimum of
//! `int_0^1 g_rho(rho_dot, rho_dot) dt` over positive paths. Discretely,
//! interior states are free variables in shifted log coordinates (so the
//! feasible set is exactly the open simplex), velocities are finite
//! differences, and the metric is evaluated at segment-midpoint states.
//! The action gradient is analytic: differentiating through the solve needs
//! only the solution itself plus the logarithmic-mean partials.

use crate::density::Density;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::operators::{
    gradient, log_mean_with_partials, vertex_inner, weighted_divergence, EdgeField,
    WeightedLaplacianSolver, SOLVER_RESIDUAL_TOL, TANGENT_SUM_TOL,
};

/// A perturbation tangent to the density simplex: zero pi-weighted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    values: Vec<f64>,
}

impl TangentVector {
    pub fn new(values: Vec<f64>, g: &WeightedGraph) -> Result<Self> {
        if values.len() != g.n() {
            return Err(Error::LengthMismatch {
                expected: g.n(),
                got: values.len(),
            });
        }
        let weighted: f64 = vertex_inner(&values, &vec![1.0; values.len()], g);
        let scale: f64 = values
            .iter()
            .zip(g.measure())
            .map(|(v, pi)| (v * pi).abs())
            .sum::<f64>()
            .max(1.0);
        if weighted.abs() > TANGENT_SUM_TOL * scale {
            return Err(Error::NotInTangentSpace(weighted));
        }
        Ok(Self { values })
    }

    /// The direction from one density to another, `to - from`.
    pub fn between(from: &Density, to: &Density) -> Self {
        Self {
            values: to
                .values()
                .iter()
                .zip(from.values())
                .map(|(t, f)| t - f)
                .collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Metric inner product on the tangent space at `rho`:
/// `g_rho(s1, s2) = <s1, B_rho^{-1} s2>_pi`.
pub fn metric_inner(
    rho: &Density,
    s1: &TangentVector,
    s2: &TangentVector,
    g: &WeightedGraph,
) -> Result<f64> {
    let solver = WeightedLaplacianSolver::new(rho, g)?;
    let p2 = solver.solve(s2.values())?;
    Ok(vertex_inner(s1.values(), &p2, g))
}

/// The squared metric speed `g_rho(sigma, sigma)`.
pub fn metric_norm_squared(
    rho: &Density,
    sigma: &TangentVector,
    g: &WeightedGraph,
) -> Result<f64> {
    metric_inner(rho, sigma, sigma, g)
}

/// Result of the discrete Hodge decomposition `v = grad p + u` with
/// `div(rho u) = 0`; the potential is the mean-zero gauge representative.
#[derive(Debug, Clone)]
pub struct HodgeDecomposition {
    pub potential: Vec<f64>,
    pub circulation: EdgeField,
}

/// Splits an edge field into a gradient part and a rho-divergence-free
/// part, orthogonal in the density-weighted inner product.
pub fn hodge_decompose(
    rho: &Density,
    v: &EdgeField,
    g: &WeightedGraph,
) -> Result<HodgeDecomposition> {
    let div_v = weighted_divergence(rho, v, g);
    let rhs: Vec<f64> = div_v.iter().map(|x| -x).collect();
    let solver = WeightedLaplacianSolver::new(rho, g)?;
    let p = solver.solve(&rhs)?;
    let grad_p = gradient(&p, g);
    let mut u = v.clone();
    for (uv, gv) in u.values_mut().iter_mut().zip(grad_p.values()) {
        *uv -= gv;
    }
    // div(rho u) must vanish entrywise at the solver tolerance.
    let residual = weighted_divergence(rho, &u, g)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = div_v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    if residual > 10.0 * SOLVER_RESIDUAL_TOL * scale {
        return Err(Error::SolverFailure {
            residual,
            tol: 10.0 * SOLVER_RESIDUAL_TOL * scale,
        });
    }
    Ok(HodgeDecomposition {
        potential: p,
        circulation: u,
    })
}

/// A discretized curve in the positive density simplex. `controls` holds
/// the per-segment velocity potentials solving the discrete continuity
/// equation; they are derived data filled in by the optimizer.
#[derive(Debug, Clone)]
pub struct DensityPath {
    pub times: Vec<f64>,
    pub states: Vec<Density>,
    pub controls: Vec<Vec<f64>>,
}

impl DensityPath {
    pub fn from_states(times: Vec<f64>, states: Vec<Density>) -> Result<Self> {
        if times.len() != states.len() || times.len() < 2 {
            return Err(Error::InvalidConfig(
                "path needs equally many times and states, at least two".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("path times must increase".into()));
        }
        Ok(Self {
            times,
            states,
            controls: Vec::new(),
        })
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }
}

/// Benamou-Brenier action of a discretized path: midpoint-state quadrature
/// `sum_k dt_k g_{m_k}(sigma_k, sigma_k)` with finite-difference velocities
/// `sigma_k = (rho_{k+1} - rho_k) / dt_k`.
pub fn path_action(path: &DensityPath, g: &WeightedGraph) -> Result<f64> {
    let mut action = 0.0;
    for k in 0..path.segments() {
        let dt = path.times[k + 1] - path.times[k];
        let a = path.states[k].values();
        let b = path.states[k + 1].values();
        let midpoint: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let mid = Density::from_normalized(midpoint);
        let sigma: Vec<f64> = b.iter().zip(a).map(|(y, x)| (y - x) / dt).collect();
        let solver = WeightedLaplacianSolver::new(&mid, g)?;
        let p = solver.solve(&sigma).map_err(|e| match e {
            Error::NotInTangentSpace(r) => Error::ContinuityViolation {
                segment: k,
                residual: r,
            },
            other => other,
        })?;
        action += dt * vertex_inner(&sigma, &p, g);
    }
    Ok(action)
}

/// Optimizer configuration for the 2-Wasserstein distance.
#[derive(Debug, Clone)]
pub struct W2Config {
    /// Number of time segments in the discretized path.
    pub segments: usize,
    /// Stop when the sup norm of the coordinate gradient falls below this.
    pub grad_tol: f64,
    /// Stop when the per-iteration action decrease falls below this.
    pub decrease_tol: f64,
    pub max_iters: usize,
    /// L-BFGS memory length.
    pub history: usize,
}

impl Default for W2Config {
    fn default() -> Self {
        Self {
            segments: 64,
            grad_tol: 1e-7,
            decrease_tol: 1e-10,
            max_iters: 5000,
            history: 10,
        }
    }
}

/// Outcome of a distance computation. When the optimizer stalls before
/// meeting its tolerances, the best feasible value is still reported and
/// `converged` is false.
#[derive(Debug, Clone)]
pub struct W2Result {
    /// The distance, square root of the minimized action.
    pub distance: f64,
    pub action: f64,
    pub path: DensityPath,
    pub iterations: usize,
    pub converged: bool,
    pub action_history: Vec<f64>,
}

/// 2-Wasserstein distance between two densities on the same graph, by
/// quasi-Newton minimization of the discretized action over interior
/// states. The initial path is the linear interpolation of the endpoints.
pub fn w2_distance(
    r0: &Density,
    r1: &Density,
    g: &WeightedGraph,
    cfg: &W2Config,
) -> Result<W2Result> {
    if r0.len() != g.n() || r1.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            got: r0.len().min(r1.len()),
        });
    }
    if cfg.segments < 1 {
        return Err(Error::InvalidConfig("segments must be at least 1".into()));
    }
    let n = g.n();
    let m = cfg.segments;
    let interior = m - 1;

    // Interior states in log coordinates, seeded from the linear
    // interpolation (a feasible warm start inside the open simplex).
    let mut y = vec![0.0; interior * n];
    for k in 1..m {
        let t = k as f64 / m as f64;
        for i in 0..n {
            let v = (1.0 - t) * r0[i] + t * r1[i];
            y[(k - 1) * n + i] = v.ln();
        }
    }

    let problem = ActionProblem {
        g,
        r0: r0.values().to_vec(),
        r1: r1.values().to_vec(),
        n,
        m,
    };

    let outcome = lbfgs_minimize(&problem, y, cfg)?;

    // Rebuild the optimal path with its velocity potentials.
    let states = problem.decode_states(&outcome.x);
    let eval = problem.evaluate(&outcome.x, false)?;
    let times: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
    let densities: Vec<Density> = states.into_iter().map(Density::from_normalized).collect();
    let controls: Vec<Vec<f64>> = eval
        .segment_potentials
        .into_iter()
        .map(|p| p.iter().map(|x| x * m as f64).collect())
        .collect();
    let path = DensityPath {
        times,
        states: densities,
        controls,
    };

    Ok(W2Result {
        distance: outcome.f.max(0.0).sqrt(),
        action: outcome.f,
        path,
        iterations: outcome.iterations,
        converged: outcome.converged,
        action_history: outcome.history,
    })
}

struct ActionProblem<'a> {
    g: &'a WeightedGraph,
    r0: Vec<f64>,
    r1: Vec<f64>,
    n: usize,
    m: usize,
}

struct ActionEval {
    value: f64,
    /// Gradient with respect to the log coordinates; empty unless requested.
    grad: Vec<f64>,
    /// `B^{-1} delta_k` per segment (unscaled velocity potentials).
    segment_potentials: Vec<Vec<f64>>,
}

impl ActionProblem<'_> {
    fn decode_states(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let mut states = Vec::with_capacity(self.m + 1);
        states.push(self.r0.clone());
        for k in 0..self.m - 1 {
            let ys = &y[k * self.n..(k + 1) * self.n];
            let max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut vals: Vec<f64> = ys.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = vals
                .iter()
                .zip(self.g.measure())
                .map(|(v, pi)| v * pi)
                .sum();
            for v in &mut vals {
                *v /= total;
            }
            states.push(vals);
        }
        states.push(self.r1.clone());
        states
    }

    /// Action and, if requested, its analytic gradient in log coordinates.
    ///
    /// With `delta_k = rho^{k+1} - rho^k`, midpoint `m_k`, and
    /// `p_k = B^{-1} delta_k` at the midpoint state, the action is
    /// `M sum_k <delta_k, p_k>_pi`. The derivative in an interior state has
    /// a velocity part `2 M pi (p_{k-1} - p_k)` and a metric part: since
    /// `<delta, B^{-1} delta>` is a minimum over potentials, its variation
    /// in the midpoint touches only the explicit logarithmic means,
    /// `-sum_edges w (grad p)^2 d m / d rho_i`, taken at weight one half
    /// per adjacent segment.
    fn evaluate(&self, y: &[f64], want_grad: bool) -> Result<ActionEval> {
        let n = self.n;
        let m = self.m;
        let g = self.g;
        let states = self.decode_states(y);
        let mf = m as f64;

        let mut value = 0.0;
        let mut potentials = Vec::with_capacity(m);
        // d(action)/d(rho^k_i) for interior states k = 1..m-1.
        let mut dstate = vec![0.0; (m - 1) * n];

        for k in 0..m {
            let a = &states[k];
            let b = &states[k + 1];
            let midpoint: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            let mid = Density::from_normalized(midpoint.clone());
            let delta: Vec<f64> = b.iter().zip(a).map(|(y, x)| y - x).collect();
            let solver = WeightedLaplacianSolver::new(&mid, g)?;
            let p = solver.solve(&delta)?;
            value += mf * vertex_inner(&delta, &p, g);

            if want_grad {
                let mut dmid = vec![0.0; n];
                for e in g.edges() {
                    let (_, da, db) = log_mean_with_partials(midpoint[e.u], midpoint[e.v]);
                    let dp = p[e.v] - p[e.u];
                    let w = e.weight * dp * dp;
                    dmid[e.u] -= w * da;
                    dmid[e.v] -= w * db;
                }
                // Segment k has interior state k as its left endpoint (when
                // k >= 1) and interior state k+1 as its right endpoint
                // (when k + 1 <= m - 1); both see half the midpoint term.
                if k >= 1 {
                    let row = &mut dstate[(k - 1) * n..k * n];
                    for i in 0..n {
                        row[i] += -2.0 * mf * g.measure()[i] * p[i] + 0.5 * mf * dmid[i];
                    }
                }
                if k < m - 1 {
                    let row = &mut dstate[k * n..(k + 1) * n];
                    for i in 0..n {
                        row[i] += 2.0 * mf * g.measure()[i] * p[i] + 0.5 * mf * dmid[i];
                    }
                }
            }
            potentials.push(p);
        }

        let grad = if want_grad {
            // Chain through the normalized exponential coordinates:
            // d rho_j / d y_i = rho_i delta_ij - pi_i rho_i rho_j.
            let mut grad = vec![0.0; (m - 1) * n];
            for k in 0..m - 1 {
                let rho = &states[k + 1];
                let d = &dstate[k * n..(k + 1) * n];
                let dot: f64 = rho.iter().zip(d).map(|(r, dd)| r * dd).sum();
                let grow = &mut grad[k * n..(k + 1) * n];
                for i in 0..n {
                    grow[i] = rho[i] * d[i] - g.measure()[i] * rho[i] * dot;
                }
            }
            grad
        } else {
            Vec::new()
        };

        Ok(ActionEval {
            value,
            grad,
            segment_potentials: potentials,
        })
    }
}

struct LbfgsOutcome {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Two-loop L-BFGS with Armijo backtracking. Evaluation failures during the
/// line search are treated as infinite objective values and backtracked
/// past; a failure at the starting point propagates.
fn lbfgs_minimize(problem: &ActionProblem, x0: Vec<f64>, cfg: &W2Config) -> Result<LbfgsOutcome> {
    let dim = x0.len();
    let mut x = x0;
    let eval0 = problem.evaluate(&x, true)?;
    let mut f = eval0.value;
    let mut grad = eval0.grad;
    let mut history = vec![f];

    if dim == 0 {
        // Single-segment path: nothing to optimize.
        return Ok(LbfgsOutcome {
            x,
            f,
            iterations: 0,
            converged: true,
            history,
        });
    }

    let mut s_list: Vec<Vec<f64>> = Vec::new();
    let mut y_list: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iters {
        iterations = iter + 1;
        let gnorm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < cfg.grad_tol {
            converged = true;
            break;
        }

        // Two-loop recursion.
        let mut q = grad.clone();
        let pairs = s_list.len();
        let mut alphas = vec![0.0; pairs];
        for idx in (0..pairs).rev() {
            let rho_i = 1.0 / dot(&y_list[idx], &s_list[idx]);
            let alpha = rho_i * dot(&s_list[idx], &q);
            alphas[idx] = alpha;
            axpy(-alpha, &y_list[idx], &mut q);
        }
        if let (Some(s), Some(yv)) = (s_list.last(), y_list.last()) {
            let gamma = dot(s, yv) / dot(yv, yv);
            for v in &mut q {
                *v *= gamma;
            }
        }
        for idx in 0..pairs {
            let rho_i = 1.0 / dot(&y_list[idx], &s_list[idx]);
            let beta = rho_i * dot(&y_list[idx], &q);
            axpy(alphas[idx] - beta, &s_list[idx], &mut q);
        }
        let mut direction: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&direction, &grad);
        if slope >= 0.0 {
            // Fall back to steepest descent if curvature information is bad.
            direction = grad.iter().map(|v| -v).collect();
            slope = -dot(&grad, &grad);
        }

        // Armijo backtracking.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let candidate: Vec<f64> = x
                .iter()
                .zip(&direction)
                .map(|(xi, di)| xi + step * di)
                .collect();
            match problem.evaluate(&candidate, true) {
                Ok(eval) if eval.value <= f + 1e-4 * step * slope => {
                    accepted = Some((candidate, eval));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((x_new, eval_new)) = accepted else {
            // No decrease found: this is convergence only at a flat point.
            converged = gnorm < cfg.grad_tol;
            break;
        };

        let decrease = f - eval_new.value;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = eval_new
            .grad
            .iter()
            .zip(&grad)
            .map(|(a, b)| a - b)
            .collect();
        if dot(&s, &yv) > 1e-12 * norm(&s) * norm(&yv) {
            s_list.push(s);
            y_list.push(yv);
            if s_list.len() > cfg.history {
                s_list.remove(0);
                y_list.remove(0);
            }
        }

        x = x_new;
        f = eval_new.value;
        grad = eval_new.grad;
        history.push(f);

        let gnorm_new = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if decrease < cfg.decrease_tol * f.abs().max(1.0) && gnorm_new < cfg.grad_tol {
            converged = true;
            break;
        }
    }

    Ok(LbfgsOutcome {
        x,
        f,
        iterations,
        converged,
        history,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
