//! The Fokker-Planck right-hand side, a positivity-aware adaptive
//! integrator, and the heat semigroup.
//!
//! On an edge `{i, j}` the flow is driven by the difference of
//! `Psi + log rho` across the edge, weighted by the logarithmic mean of the
//! endpoint densities:
//!
//! ```text
//! d rho_i / dt = sum_j (w_ij / pi_i) [(Psi_j + log rho_j) - (Psi_i + log rho_i)] m(rho_i, rho_j)
//! ```
//!
//! which is simultaneously `div(rho grad Psi) + Laplacian(rho)` (the
//! two-term form) and the metric gradient flow `-B_rho dF/drho` of the free
//! energy. On absorbing truncations every form picks up the Dirichlet
//! boundary limit `-(deficit_i / pi_i) rho_i`, obtained by letting the
//! outside density go to zero in the log-mean flux; this is the term that
//! makes truncation leakage measurable.
//!
//! Mass is never renormalized during integration: conservation (closed
//! mode) and leakage (absorbing mode) are measured signals, not enforced
//! projections.

use nalgebra::{DMatrix, DVector};

use crate::analysis::{dissipation_values, free_energy_values};
use crate::density::{lr_norm_values, second_moment, Density, Exponent, Potential};
use crate::error::{Error, Result};
use crate::graph::{TruncationMode, WeightedGraph};
use crate::operators::{log_mean_pos, weighted_laplacian};

/// Fokker-Planck right-hand side in the log form.
///
/// The pi-weighted sum of the output vanishes on closed graphs (mass
/// conservation); on absorbing graphs it equals minus the instantaneous
/// leakage rate.
pub fn fpe_rhs(rho: &Density, psi: &Potential, g: &WeightedGraph) -> Vec<f64> {
    fpe_rhs_raw(rho.values(), psi, g)
}

pub(crate) fn fpe_rhs_raw(rho: &[f64], psi: &Potential, g: &WeightedGraph) -> Vec<f64> {
    let mut out = vec![0.0; g.n()];
    for e in g.edges() {
        let m = log_mean_pos(rho[e.u], rho[e.v]);
        let drive = (psi[e.v] + rho[e.v].ln()) - (psi[e.u] + rho[e.u].ln());
        let flux = e.weight * drive * m;
        out[e.u] += flux;
        out[e.v] -= flux;
    }
    for i in 0..g.n() {
        out[i] /= g.measure()[i];
        if g.deficit()[i] > 0.0 {
            out[i] -= g.deficit()[i] / g.measure()[i] * rho[i];
        }
    }
    out
}

/// Fokker-Planck right-hand side in the two-term form
/// `div(rho grad Psi) + Laplacian(rho)`, assembled term by term. Agrees
/// with [`fpe_rhs`] entrywise by the telescoping identity.
pub fn fpe_rhs_two_term(rho: &Density, psi: &Potential, g: &WeightedGraph) -> Vec<f64> {
    let mut out = vec![0.0; g.n()];
    for e in g.edges() {
        let m = log_mean_pos(rho[e.u], rho[e.v]);
        let drift = e.weight * (psi[e.v] - psi[e.u]) * m;
        let diffusion = e.weight * (rho[e.v] - rho[e.u]);
        out[e.u] += drift + diffusion;
        out[e.v] -= drift + diffusion;
    }
    for i in 0..g.n() {
        out[i] /= g.measure()[i];
        if g.deficit()[i] > 0.0 {
            out[i] -= g.deficit()[i] / g.measure()[i] * rho[i];
        }
    }
    out
}

/// The same flow written as the metric gradient flow of the free energy:
/// `-B_rho (Psi + 1 + log rho)`, plus the absorbing boundary term.
pub fn gradient_flow_rhs(rho: &Density, psi: &Potential, g: &WeightedGraph) -> Vec<f64> {
    let df: Vec<f64> = rho
        .values()
        .iter()
        .zip(psi.values())
        .map(|(r, p)| p + 1.0 + r.ln())
        .collect();
    let mut out = weighted_laplacian(rho, &df, g);
    for i in 0..g.n() {
        out[i] = -out[i];
        if g.deficit()[i] > 0.0 {
            out[i] -= g.deficit()[i] / g.measure()[i] * rho[i];
        }
    }
    out
}

/// Time integration method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorMethod {
    /// Explicit Dormand-Prince 5(4) with embedded error control.
    AdaptiveRk45,
    /// Semi-implicit first-order stepping with the log term linearized and
    /// step-doubling error control; useful for stiff potentials.
    SemiImplicit,
}

/// Integrator configuration.
///
/// `positivity_floor` rejects a step whose new minimum density falls below
/// `floor` times the current minimum; it guards single steps, not the whole
/// run. Equilibrium is declared when the sup norm of the right-hand side
/// drops below `atol`.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub method: IntegratorMethod,
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub positivity_floor: f64,
    pub horizon: f64,
    /// Record every k-th accepted step (plus the initial and final states).
    pub record_every: usize,
    /// Even exponents for the recorded distances to the Gibbs density.
    pub norm_exponents: Vec<u32>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: IntegratorMethod::AdaptiveRk45,
            rtol: 1e-8,
            atol: 1e-12,
            dt_init: 1e-3,
            dt_min: 1e-12,
            dt_max: 1.0,
            positivity_floor: 0.1,
            horizon: 10.0,
            record_every: 10,
            norm_exponents: vec![2, 4, 8],
        }
    }
}

impl IntegratorConfig {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rtol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.atol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.dt_min.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.dt_min > self.dt_init
            || self.dt_init > self.dt_max
        {
            return Err(Error::InvalidConfig(
                "step sizes must satisfy 0 < dt_min <= dt_init <= dt_max".into(),
            ));
        }
        if self.horizon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.positivity_floor) {
            return Err(Error::InvalidConfig(
                "positivity floor must lie in [0, 1)".into(),
            ));
        }
        for &p in &self.norm_exponents {
            if p == 0 || p % 2 != 0 {
                return Err(Error::UnsupportedExponent(p));
            }
        }
        Ok(())
    }
}

/// Per-recorded-step diagnostics.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    /// `|sum pi rho - 1|`.
    pub mass_defect: f64,
    pub free_energy: f64,
    /// `g_rho(dF, dF)`, the instantaneous energy dissipation rate.
    pub dissipation: f64,
    pub min_density: f64,
    pub second_moment: f64,
    /// Distances to the Gibbs density per configured even exponent.
    pub distances_to_gibbs: Vec<f64>,
    pub sup_distance_to_gibbs: f64,
    /// Step size of the accepted step that produced this record.
    pub step_size: f64,
    /// Rejected attempts since the previous record.
    pub rejected_steps: usize,
}

/// A recorded solution curve with per-step diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub exponents: Vec<u32>,
    pub reached_equilibrium: bool,
    /// Set when `dt_min` was reached under persistent rejection; the
    /// trajectory then covers only part of the horizon.
    pub step_size_underflow: bool,
    pub total_steps: usize,
    pub total_rejected: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// State at an arbitrary time by linear interpolation of the recorded
    /// states (first-order accurate between records).
    pub fn sample_state(&self, t: f64) -> Vec<f64> {
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.final_time() {
            return self.final_state().to_vec();
        }
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.states[i].clone(),
            Err(i) => i,
        };
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let w = (t - t0) / (t1 - t0);
        self.states[idx - 1]
            .iter()
            .zip(&self.states[idx])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    pub fn max_mass_defect(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.mass_defect)
            .fold(0.0, f64::max)
    }

    pub fn min_density_over_run(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.min_density)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Integrates the Fokker-Planck flow from `rho0` to the configured horizon.
///
/// Recorded states keep strictly positive entries; mass is measured, never
/// projected. Stops early with `reached_equilibrium` when the right-hand
/// side falls below `atol` in sup norm, and with `step_size_underflow` when
/// the step controller cannot proceed at `dt_min`.
pub fn integrate(
    rho0: &Density,
    psi: &Potential,
    g: &WeightedGraph,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if rho0.len() != g.n() || psi.values().len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            got: rho0.len().min(psi.values().len()),
        });
    }
    let gibbs = crate::density::gibbs_density(g, psi)?.0;

    let mut recorder = Recorder {
        gibbs,
        psi,
        g,
        cfg,
        trajectory: Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            diagnostics: Vec::new(),
            exponents: cfg.norm_exponents.clone(),
            reached_equilibrium: false,
            step_size_underflow: false,
            total_steps: 0,
            total_rejected: 0,
        },
    };

    match cfg.method {
        IntegratorMethod::AdaptiveRk45 => run_rk45(rho0.values(), psi, g, cfg, &mut recorder),
        IntegratorMethod::SemiImplicit => {
            run_semi_implicit(rho0.values(), psi, g, cfg, &mut recorder)
        }
    }

    Ok(recorder.trajectory)
}

struct Recorder<'a> {
    gibbs: Density,
    psi: &'a Potential,
    g: &'a WeightedGraph,
    cfg: &'a IntegratorConfig,
    trajectory: Trajectory,
}

impl Recorder<'_> {
    fn record(&mut self, t: f64, state: &[f64], step_size: f64, rejected: usize) {
        let g = self.g;
        let mass: f64 = state
            .iter()
            .zip(g.measure())
            .map(|(v, pi)| v * pi)
            .sum();
        let distances: Vec<f64> = self
            .cfg
            .norm_exponents
            .iter()
            .map(|&p| {
                lr_norm_values(state, self.gibbs.values(), Exponent::Finite(p), g)
                    .expect("validated exponent")
            })
            .collect();
        let sup = lr_norm_values(state, self.gibbs.values(), Exponent::Infinity, g).unwrap();
        let rho_view = Density::from_normalized(state.to_vec());
        let diag = StepDiagnostics {
            mass_defect: (mass - 1.0).abs(),
            free_energy: free_energy_values(state, self.psi, g),
            dissipation: dissipation_values(state, self.psi, g),
            min_density: state.iter().cloned().fold(f64::INFINITY, f64::min),
            second_moment: second_moment(&rho_view, g),
            distances_to_gibbs: distances,
            sup_distance_to_gibbs: sup,
            step_size,
            rejected_steps: rejected,
        };
        self.trajectory.times.push(t);
        self.trajectory.states.push(state.to_vec());
        self.trajectory.diagnostics.push(diag);
    }
}

// Dormand-Prince 5(4) tableau.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Difference between the 5th- and 4th-order weights (error estimator).
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn run_rk45(
    rho0: &[f64],
    psi: &Potential,
    g: &WeightedGraph,
    cfg: &IntegratorConfig,
    rec: &mut Recorder,
) {
    let n = g.n();
    let mut y = rho0.to_vec();
    let mut t = 0.0;
    let mut dt = cfg.dt_init;
    let mut k1 = fpe_rhs_raw(&y, psi, g);

    rec.record(0.0, &y, 0.0, 0);
    if sup_norm(&k1) < cfg.atol {
        rec.trajectory.reached_equilibrium = true;
        return;
    }

    let mut since_record = 0usize;
    let mut rejected_since_record = 0usize;

    let combine = |y: &[f64], stages: &[&[f64]], coeffs: &[f64], dt: f64| -> Vec<f64> {
        let mut out = y.to_vec();
        for (s, c) in stages.iter().zip(coeffs) {
            for i in 0..y.len() {
                out[i] += dt * c * s[i];
            }
        }
        out
    };

    while t < cfg.horizon {
        let dt_step = dt.min(cfg.horizon - t);

        let y2 = combine(&y, &[&k1], &A2, dt_step);
        let k2 = fpe_rhs_raw(&y2, psi, g);
        let y3 = combine(&y, &[&k1, &k2], &A3, dt_step);
        let k3 = fpe_rhs_raw(&y3, psi, g);
        let y4 = combine(&y, &[&k1, &k2, &k3], &A4, dt_step);
        let k4 = fpe_rhs_raw(&y4, psi, g);
        let y5 = combine(&y, &[&k1, &k2, &k3, &k4], &A5, dt_step);
        let k5 = fpe_rhs_raw(&y5, psi, g);
        let y6 = combine(&y, &[&k1, &k2, &k3, &k4, &k5], &A6, dt_step);
        let k6 = fpe_rhs_raw(&y6, psi, g);
        let y_new = combine(&y, &[&k1, &k2, &k3, &k4, &k5, &k6], &B5, dt_step);
        let k7 = fpe_rhs_raw(&y_new, psi, g);

        // Positivity guard: intermediate stages may not have been
        // evaluable; any non-finite value also forces rejection.
        let min_old = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let positivity_ok = y_new
            .iter()
            .all(|&v| v.is_finite() && v > 0.0 && v >= cfg.positivity_floor * min_old)
            && [&y2, &y3, &y4, &y5, &y6]
                .iter()
                .all(|s| s.iter().all(|&v| v.is_finite() && v > 0.0));

        let stages = [&k1, &k2, &k3, &k4, &k5, &k6, &k7];
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, c) in stages.iter().zip(&ERR) {
                e += c * s[i];
            }
            e *= dt_step;
            let scale = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / n as f64).sqrt();

        if positivity_ok && err <= 1.0 {
            t += dt_step;
            y = y_new;
            k1 = k7; // first-same-as-last
            rec.trajectory.total_steps += 1;
            since_record += 1;

            let at_equilibrium = sup_norm(&k1) < cfg.atol;
            let finished = t >= cfg.horizon - 1e-15 * cfg.horizon;
            if since_record >= cfg.record_every.max(1) || finished || at_equilibrium {
                rec.record(t, &y, dt_step, rejected_since_record);
                since_record = 0;
                rejected_since_record = 0;
            }
            if at_equilibrium {
                rec.trajectory.reached_equilibrium = true;
                break;
            }
            if finished {
                break;
            }

            let factor = if err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            dt = (dt_step * factor).clamp(cfg.dt_min, cfg.dt_max);
        } else {
            rec.trajectory.total_rejected += 1;
            rejected_since_record += 1;
            if dt_step <= cfg.dt_min * 1.0000001 {
                // Cannot reduce further: report the partial trajectory.
                rec.trajectory.step_size_underflow = true;
                if since_record > 0 {
                    rec.record(t, &y, dt_step, rejected_since_record);
                }
                log::warn!("step size underflow at t = {t}: dt_min reached with persistent rejection");
                return;
            }
            let factor = if positivity_ok && err.is_finite() && err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.5)
            } else {
                0.5
            };
            dt = (dt_step * factor).max(cfg.dt_min);
        }
    }
    if since_record > 0 {
        rec.record(t, &y, dt, rejected_since_record);
    }
}

/// One semi-implicit step: freeze the log-mean weights at the current
/// state, linearize `log rho` around it, and solve
/// `(I + dt (B D + K)) delta = dt rhs(rho)` where `D = diag(1/rho)` and `K`
/// is the absorbing killing term. Mass-exact on closed graphs because the
/// update lies in the range of `B`.
fn semi_implicit_step(
    y: &[f64],
    dt: f64,
    psi: &Potential,
    g: &WeightedGraph,
) -> Option<Vec<f64>> {
    let n = g.n();
    let rhs = fpe_rhs_raw(y, psi, g);
    let mut a = DMatrix::<f64>::identity(n, n);
    // B matrix in vertex coordinates: B[i][j] = -(w_ij/pi_i) m_ij.
    for e in g.edges() {
        let m = log_mean_pos(y[e.u], y[e.v]);
        let bu = e.weight / g.measure()[e.u] * m;
        let bv = e.weight / g.measure()[e.v] * m;
        a[(e.u, e.v)] += dt * (-bu) / y[e.v];
        a[(e.u, e.u)] += dt * bu / y[e.u];
        a[(e.v, e.u)] += dt * (-bv) / y[e.u];
        a[(e.v, e.v)] += dt * bv / y[e.v];
    }
    for i in 0..n {
        if g.deficit()[i] > 0.0 {
            a[(i, i)] += dt * g.deficit()[i] / g.measure()[i];
        }
    }
    let lu = a.lu();
    let delta = lu.solve(&DVector::from_column_slice(&rhs))?;
    let mut out = y.to_vec();
    for i in 0..n {
        out[i] += dt * delta[i];
    }
    Some(out)
}

fn run_semi_implicit(
    rho0: &[f64],
    psi: &Potential,
    g: &WeightedGraph,
    cfg: &IntegratorConfig,
    rec: &mut Recorder,
) {
    let n = g.n();
    let mut y = rho0.to_vec();
    let mut t = 0.0;
    let mut dt = cfg.dt_init;

    rec.record(0.0, &y, 0.0, 0);
    if sup_norm(&fpe_rhs_raw(&y, psi, g)) < cfg.atol {
        rec.trajectory.reached_equilibrium = true;
        return;
    }

    let mut since_record = 0usize;
    let mut rejected_since_record = 0usize;

    while t < cfg.horizon {
        let dt_step = dt.min(cfg.horizon - t);

        // Step doubling: one full step against two half steps.
        let full = semi_implicit_step(&y, dt_step, psi, g);
        let half = semi_implicit_step(&y, 0.5 * dt_step, psi, g)
            .and_then(|mid| semi_implicit_step(&mid, 0.5 * dt_step, psi, g).map(|out| (mid, out)));

        let mut accept = false;
        let mut err = f64::INFINITY;
        let mut y_new = Vec::new();
        if let (Some(full), Some((mid, two_half))) = (full, half) {
            let min_old = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let positive = two_half
                .iter()
                .all(|&v| v.is_finite() && v > 0.0 && v >= cfg.positivity_floor * min_old)
                && mid.iter().all(|&v| v.is_finite() && v > 0.0);
            if positive {
                let mut err_sq = 0.0;
                for i in 0..n {
                    let scale = cfg.atol + cfg.rtol * y[i].abs().max(two_half[i].abs());
                    let e = full[i] - two_half[i];
                    err_sq += (e / scale) * (e / scale);
                }
                err = (err_sq / n as f64).sqrt();
                accept = err <= 1.0;
                y_new = two_half;
            }
        }

        if accept {
            t += dt_step;
            y = y_new;
            rec.trajectory.total_steps += 1;
            since_record += 1;

            let rhs_now = fpe_rhs_raw(&y, psi, g);
            let at_equilibrium = sup_norm(&rhs_now) < cfg.atol;
            let finished = t >= cfg.horizon - 1e-15 * cfg.horizon;
            if since_record >= cfg.record_every.max(1) || finished || at_equilibrium {
                rec.record(t, &y, dt_step, rejected_since_record);
                since_record = 0;
                rejected_since_record = 0;
            }
            if at_equilibrium {
                rec.trajectory.reached_equilibrium = true;
                break;
            }
            if finished {
                break;
            }
            let factor = if err > 0.0 {
                (0.9 / err.sqrt()).clamp(0.2, 5.0)
            } else {
                5.0
            };
            dt = (dt_step * factor).clamp(cfg.dt_min, cfg.dt_max);
        } else {
            rec.trajectory.total_rejected += 1;
            rejected_since_record += 1;
            if dt_step <= cfg.dt_min * 1.0000001 {
                rec.trajectory.step_size_underflow = true;
                if since_record > 0 {
                    rec.record(t, &y, dt_step, rejected_since_record);
                }
                log::warn!("step size underflow at t = {t}: dt_min reached with persistent rejection");
                return;
            }
            dt = (dt_step * 0.5).max(cfg.dt_min);
        }
    }
    if since_record > 0 {
        rec.record(t, &y, dt, rejected_since_record);
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Heat semigroup `e^{t L}` with `L` the pi-Laplacian, including the
/// absorbing killing term on absorbing truncations. Built once per graph
/// from the symmetric eigendecomposition, then applied at any time.
pub struct HeatPropagator {
    sqrt_pi: Vec<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl HeatPropagator {
    pub fn new(g: &WeightedGraph) -> Self {
        let n = g.n();
        let sqrt_pi: Vec<f64> = g.measure().iter().map(|p| p.sqrt()).collect();
        // H = Pi^{1/2} (-L) Pi^{-1/2}: symmetric positive semidefinite.
        let mut h = DMatrix::<f64>::zeros(n, n);
        for e in g.edges() {
            let off = -e.weight / (sqrt_pi[e.u] * sqrt_pi[e.v]);
            h[(e.u, e.v)] = off;
            h[(e.v, e.u)] = off;
            h[(e.u, e.u)] += e.weight / g.measure()[e.u];
            h[(e.v, e.v)] += e.weight / g.measure()[e.v];
        }
        for i in 0..n {
            if g.deficit()[i] > 0.0 {
                h[(i, i)] += g.deficit()[i] / g.measure()[i];
            }
        }
        let eig = h.symmetric_eigen();
        Self {
            sqrt_pi,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    /// Applies `e^{t L}` to the initial data.
    pub fn apply(&self, u0: &[f64], t: f64) -> Vec<f64> {
        let n = self.sqrt_pi.len();
        let scaled = DVector::from_iterator(n, u0.iter().zip(&self.sqrt_pi).map(|(u, s)| u * s));
        let mut coeffs = self.eigenvectors.transpose() * scaled;
        for (c, lam) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= (-t * lam).exp();
        }
        let back = &self.eigenvectors * coeffs;
        back.iter()
            .zip(&self.sqrt_pi)
            .map(|(v, s)| v / s)
            .collect()
    }
}

/// One-shot heat semigroup application `e^{t L} u0`.
///
/// On closed graphs the pi-weighted total of the output equals that of the
/// input; on absorbing graphs the difference is the leaked mass.
pub fn heat_semigroup(u0: &[f64], t: f64, g: &WeightedGraph) -> Result<Vec<f64>> {
    if u0.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            got: u0.len(),
        });
    }
    if t.partial_cmp(&0.0).is_none_or(|o| o == std::cmp::Ordering::Less) {
        return Err(Error::InvalidConfig(format!("negative time {t}")));
    }
    Ok(HeatPropagator::new(g).apply(u0, t))
}

/// Convenience check used by diagnostics: was this graph built in closed
/// mode (so that mass conservation is the active contract)?
pub fn conserves_mass(g: &WeightedGraph) -> bool {
    g.mode() == TruncationMode::Closed
}
