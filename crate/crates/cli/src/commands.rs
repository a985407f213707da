//! Subcommand definitions and implementations.
//!
//! Exit codes: 0 success, 1 usage, 2 validation failure, 3 runtime
//! invariant violation.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fpgraph_core::formats;
use fpgraph_core::{
    convergence_diagnostics, dissipation_values, exhaustion_study, free_energy_values,
    generate_family_scaled, gibbs_density, gibbs_summability, hodge_decompose, lr_norm_values,
    second_moment, w2_distance, Density, ExhaustionConfig, ExhaustionFamily, Exponent,
    GraphFamily, IntegratorConfig, Potential, StepDiagnostics, Trajectory, TruncationMode,
    W2Config, WeightedGraph,
};

use crate::error::CliError;
use crate::runner::run_scenario;
use crate::scenario::{
    FamilyName, GraphSpec, InitKind, InitSpec, IntegratorSpec, MethodName, OutputSpec,
    PotentialKind, PotentialSpec, Scenario,
};

/// Fokker-Planck gradient flows on weighted graphs.
#[derive(Debug, Parser)]
#[command(
    name = "fpgraph",
    version,
    about = "Fokker-Planck dynamics as a free-energy gradient flow on weighted graphs",
    after_help = "\
File formats:
  graph         text: header `mode=closed|absorbing root=<k>`, lines `i j w`;
                absorbing graphs add `pi <i> <v>` lines (parent measure).
  densities     JSON arrays indexed by vertex (0-based).
  trajectory    CSV `t,rho_0..rho_{n-1}`; floats carry 17 significant digits.
  diagnostics   CSV `t,mass_defect,free_energy,dissipation,min_rho,second_moment,
                l<p>_to_gibbs...,linf_to_gibbs,step_size,rejected_steps`.

Exit codes: 0 success, 1 usage, 2 validation failure, 3 runtime invariant violation."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a Fokker-Planck flow and write trajectory, diagnostics,
    /// and a run manifest.
    Simulate(SimulateArgs),
    /// Recompute diagnostics from a trajectory CSV: distances to Gibbs,
    /// monotonicity flags, fitted decay rates.
    Analyze(AnalyzeArgs),
    /// Wasserstein distance between two densities by action minimization.
    W2(W2Args),
    /// Split an edge field into a gradient part and a divergence-free part.
    Hodge(HodgeArgs),
    /// Print the Gibbs density and its normalizer for a potential.
    Gibbs(GibbsArgs),
    /// Check graph (and optionally density) invariants.
    Validate(ValidateArgs),
    /// Run the same scenario on growing truncations and compare windows.
    Exhaustion(ExhaustionArgs),
    /// Run a scenario grid concurrently.
    Sweep(SweepArgs),
}

/// Graph source shared by several subcommands: a file or a generator.
#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Edge-list graph file.
    #[arg(long, conflicts_with = "family")]
    pub graph: Option<PathBuf>,
    /// Generator family: path | cycle | lattice_z | binary_tree | random_sparse.
    #[arg(long)]
    pub family: Option<String>,
    /// Family size (vertex count, lattice window, or tree depth).
    #[arg(long)]
    pub size: Option<usize>,
    /// Average degree (random_sparse only).
    #[arg(long)]
    pub degree: Option<usize>,
    /// Generator seed (random_sparse only).
    #[arg(long, default_value_t = 0)]
    pub graph_seed: u64,
    /// Truncation mode: closed | absorbing.
    #[arg(long, default_value = "closed")]
    pub mode: String,
    /// Uniform scale applied to generated edge weights.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

impl GraphArgs {
    fn mode(&self) -> Result<TruncationMode, CliError> {
        match self.mode.as_str() {
            "closed" => Ok(TruncationMode::Closed),
            "absorbing" => Ok(TruncationMode::Absorbing),
            other => Err(CliError::Validation(format!("unknown mode `{other}`"))),
        }
    }

    pub fn build(&self) -> Result<WeightedGraph, CliError> {
        if let Some(path) = &self.graph {
            return Ok(formats::read_graph_text(path)?);
        }
        let Some(name) = &self.family else {
            return Err(CliError::Validation(
                "either --graph or --family is required".into(),
            ));
        };
        let size = self.size.ok_or_else(|| {
            CliError::Validation("--family needs --size".into())
        })?;
        let family = match name.as_str() {
            "path" => GraphFamily::Path { n: size },
            "cycle" => GraphFamily::Cycle { n: size },
            "lattice_z" => GraphFamily::LatticeZ { window: size },
            "binary_tree" => GraphFamily::BinaryTree { depth: size },
            "random_sparse" => GraphFamily::RandomSparse {
                n: size,
                degree: self.degree.ok_or_else(|| {
                    CliError::Validation("random_sparse needs --degree".into())
                })?,
                seed: self.graph_seed,
            },
            other => {
                return Err(CliError::Validation(format!(
                    "unknown family `{other}`"
                )))
            }
        };
        Ok(generate_family_scaled(&family, self.mode()?, self.scale)?)
    }
}

/// Parses `zero`, `linear:<c>`, or `file:<path>`.
fn parse_potential_spec(spec: &str, g: &WeightedGraph) -> Result<Potential, CliError> {
    if spec == "zero" {
        return Ok(Potential::zero(g));
    }
    if let Some(c) = spec.strip_prefix("linear:") {
        let c: f64 = c
            .parse()
            .map_err(|_| CliError::Validation(format!("bad slope in `{spec}`")))?;
        return Ok(Potential::from_distance(g, c));
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let values = formats::read_values_json(path)?;
        return Ok(Potential::new(values, g)?);
    }
    Err(CliError::Validation(format!(
        "potential spec `{spec}` is not zero | linear:<c> | file:<path>"
    )))
}

fn parse_exponents(spec: &str) -> Result<Vec<u32>, CliError> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Validation(format!("bad exponent `{s}`")))
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario TOML file; flags below are ignored when given.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Potential: zero | linear:<c> | file:<path>.
    #[arg(long, default_value = "zero")]
    pub potential: String,
    /// Initial density: uniform | perturbed[:seed] | gibbs | file:<path>.
    #[arg(long, default_value = "uniform")]
    pub init: String,
    /// Perturbation amplitude for `perturbed` init.
    #[arg(long, default_value_t = 0.5)]
    pub amplitude: f64,
    /// Integrator method: rk45 | semi_implicit.
    #[arg(long, default_value = "rk45")]
    pub method: String,
    #[arg(long, default_value_t = 1e-8)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt_init: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub dt_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dt_max: f64,
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
    /// Even exponents recorded as distances to Gibbs.
    #[arg(long, default_value = "2,4,8")]
    pub exponents: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value = "run")]
    pub prefix: String,
}

impl SimulateArgs {
    fn to_scenario(&self) -> Result<Scenario, CliError> {
        if let Some(path) = &self.scenario {
            return Scenario::from_file(path);
        }
        let family = match self.graph.family.as_deref() {
            None => None,
            Some("path") => Some(FamilyName::Path),
            Some("cycle") => Some(FamilyName::Cycle),
            Some("lattice_z") => Some(FamilyName::LatticeZ),
            Some("binary_tree") => Some(FamilyName::BinaryTree),
            Some("random_sparse") => Some(FamilyName::RandomSparse),
            Some(other) => {
                return Err(CliError::Validation(format!("unknown family `{other}`")))
            }
        };
        let potential = if self.potential == "zero" {
            PotentialSpec {
                kind: PotentialKind::Zero,
                c: None,
                file: None,
            }
        } else if let Some(c) = self.potential.strip_prefix("linear:") {
            PotentialSpec {
                kind: PotentialKind::Linear,
                c: Some(c.parse().map_err(|_| {
                    CliError::Validation(format!("bad slope in `{}`", self.potential))
                })?),
                file: None,
            }
        } else if let Some(path) = self.potential.strip_prefix("file:") {
            PotentialSpec {
                kind: PotentialKind::File,
                c: None,
                file: Some(PathBuf::from(path)),
            }
        } else {
            return Err(CliError::Validation(format!(
                "potential spec `{}` is not zero | linear:<c> | file:<path>",
                self.potential
            )));
        };
        let init = if self.init == "uniform" {
            InitSpec {
                kind: InitKind::Uniform,
                ..Default::default()
            }
        } else if self.init == "gibbs" {
            InitSpec {
                kind: InitKind::Gibbs,
                ..Default::default()
            }
        } else if self.init == "perturbed" {
            InitSpec {
                kind: InitKind::Perturbed,
                amplitude: Some(self.amplitude),
                init_seed: None,
                file: None,
            }
        } else if let Some(seed) = self.init.strip_prefix("perturbed:") {
            InitSpec {
                kind: InitKind::Perturbed,
                amplitude: Some(self.amplitude),
                init_seed: Some(seed.parse().map_err(|_| {
                    CliError::Validation(format!("bad seed in `{}`", self.init))
                })?),
                file: None,
            }
        } else if let Some(path) = self.init.strip_prefix("file:") {
            InitSpec {
                kind: InitKind::File,
                file: Some(PathBuf::from(path)),
                ..Default::default()
            }
        } else {
            return Err(CliError::Validation(format!(
                "init spec `{}` is not uniform | perturbed[:seed] | gibbs | file:<path>",
                self.init
            )));
        };
        let scenario = Scenario {
            seed: self.seed,
            graph: GraphSpec {
                file: self.graph.graph.clone(),
                family,
                size: self.graph.size,
                degree: self.graph.degree,
                graph_seed: Some(self.graph.graph_seed),
                mode: match self.graph.mode.as_str() {
                    "closed" => TruncationMode::Closed,
                    "absorbing" => TruncationMode::Absorbing,
                    other => {
                        return Err(CliError::Validation(format!("unknown mode `{other}`")))
                    }
                },
                weight_scale: self.graph.scale,
            },
            potential,
            init,
            integrator: IntegratorSpec {
                method: match self.method.as_str() {
                    "rk45" => MethodName::Rk45,
                    "semi_implicit" => MethodName::SemiImplicit,
                    other => {
                        return Err(CliError::Validation(format!(
                            "unknown method `{other}`"
                        )))
                    }
                },
                rtol: self.rtol,
                atol: self.atol,
                dt_init: self.dt_init,
                dt_min: self.dt_min,
                dt_max: self.dt_max,
                positivity_floor: 0.1,
                horizon: self.horizon,
                record_every: self.record_every,
            },
            analysis: crate::scenario::AnalysisSpec {
                exponents: parse_exponents(&self.exponents)?,
                ..Default::default()
            },
            output: OutputSpec {
                dir: self.out.clone(),
                prefix: self.prefix.clone(),
            },
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let scenario = args.to_scenario()?;
    let outcome = run_scenario(&scenario)?;
    let h = &outcome.manifest.headline;
    println!(
        "simulated to t = {:.6}: mass defect {:.3e}, l2 to Gibbs {:.6e}, min density {:.3e}",
        h.final_time, h.max_mass_defect, h.final_l2_to_gibbs, h.min_density_over_run
    );
    println!("manifest: {}", outcome.manifest_path.display());
    if outcome.manifest.status != "ok" {
        for v in &outcome.manifest.violations {
            eprintln!("violation: {v}");
        }
        return Ok(3);
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Trajectory CSV produced by `simulate`.
    #[arg(long)]
    pub trajectory: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Potential: zero | linear:<c> | file:<path>.
    #[arg(long, default_value = "zero")]
    pub potential: String,
    #[arg(long, default_value = "2,4,8")]
    pub exponents: String,
    /// Diagnostics CSV output path.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// JSON summary output path.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Serialize)]
struct AnalyzeSummary {
    records: usize,
    final_time: f64,
    max_mass_defect: f64,
    exponents: Vec<u32>,
    final_distances: Vec<f64>,
    final_sup_distance: f64,
    strictly_decreasing: Vec<bool>,
    sup_strictly_decreasing: bool,
    fitted_rates: Vec<f64>,
    sup_fitted_rate: f64,
    free_energy_monotone: bool,
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32, CliError> {
    let g = args.graph.build()?;
    let psi = parse_potential_spec(&args.potential, &g)?;
    let exponents = parse_exponents(&args.exponents)?;
    let text = std::fs::read_to_string(&args.trajectory)?;
    let (times, states) = formats::parse_trajectory_csv(&text)?;
    if states.iter().any(|s| s.len() != g.n()) {
        return Err(CliError::Validation(format!(
            "trajectory rows do not match the graph ({} vertices)",
            g.n()
        )));
    }
    let (gibbs, _) = gibbs_density(&g, &psi)?;

    let diagnostics: Vec<StepDiagnostics> = states
        .iter()
        .map(|state| {
            let mass: f64 = state
                .iter()
                .zip(g.measure())
                .map(|(v, pi)| v * pi)
                .sum();
            StepDiagnostics {
                mass_defect: (mass - 1.0).abs(),
                free_energy: free_energy_values(state, &psi, &g),
                dissipation: dissipation_values(state, &psi, &g),
                min_density: state.iter().cloned().fold(f64::INFINITY, f64::min),
                second_moment: second_moment(
                    &Density::new(state, &g).map(|(d, _)| d).unwrap_or_else(|_| {
                        Density::uniform(&g)
                    }),
                    &g,
                ),
                distances_to_gibbs: exponents
                    .iter()
                    .map(|&p| {
                        lr_norm_values(state, gibbs.values(), Exponent::Finite(p), &g).unwrap()
                    })
                    .collect(),
                sup_distance_to_gibbs: lr_norm_values(
                    state,
                    gibbs.values(),
                    Exponent::Infinity,
                    &g,
                )
                .unwrap(),
                step_size: 0.0,
                rejected_steps: 0,
            }
        })
        .collect();

    let traj = Trajectory {
        times,
        states,
        diagnostics,
        exponents: exponents.clone(),
        reached_equilibrium: false,
        step_size_underflow: false,
        total_steps: 0,
        total_rejected: 0,
    };
    let report = convergence_diagnostics(&traj, &gibbs, &exponents, &g)?;
    let energy_monotone = traj
        .diagnostics
        .windows(2)
        .all(|w| w[1].free_energy <= w[0].free_energy + 1e-12);

    let summary = AnalyzeSummary {
        records: traj.len(),
        final_time: traj.final_time(),
        max_mass_defect: traj.max_mass_defect(),
        exponents: exponents.clone(),
        final_distances: report.norms.last().cloned().unwrap_or_default(),
        final_sup_distance: *report.sup_norms.last().unwrap_or(&f64::NAN),
        strictly_decreasing: report.strictly_decreasing.clone(),
        sup_strictly_decreasing: report.sup_strictly_decreasing,
        fitted_rates: report.fitted_rates.clone(),
        sup_fitted_rate: report.sup_fitted_rate,
        free_energy_monotone: energy_monotone,
    };

    if let Some(path) = &args.out_csv {
        formats::write_diagnostics_csv(&traj, path)?;
    }
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Runtime(format!("summary serialization: {e}")))?;
    if let Some(path) = &args.out_json {
        std::fs::write(path, &json)?;
    }
    println!("{json}");
    Ok(0)
}

#[derive(Debug, Args)]
pub struct W2Args {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// JSON density file, start point.
    #[arg(long)]
    pub from: PathBuf,
    /// JSON density file, end point.
    #[arg(long)]
    pub to: PathBuf,
    /// Number of path segments.
    #[arg(long, default_value_t = 64)]
    pub segments: usize,
    /// Gradient tolerance of the optimizer.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    /// JSON output path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional CSV of the optimal path states.
    #[arg(long)]
    pub path_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct W2Output {
    value: f64,
    action: f64,
    iterations: usize,
    converged: bool,
    action_history: Vec<f64>,
}

fn cmd_w2(args: &W2Args) -> Result<i32, CliError> {
    let g = args.graph.build()?;
    let (from, _) = Density::new(&formats::read_values_json(&args.from)?, &g)?;
    let (to, _) = Density::new(&formats::read_values_json(&args.to)?, &g)?;
    let cfg = W2Config {
        segments: args.segments,
        grad_tol: args.tol,
        max_iters: args.max_iters,
        ..Default::default()
    };
    let result = w2_distance(&from, &to, &g, &cfg)?;
    if !result.converged {
        log::warn!(
            "optimizer did not meet its tolerances; best value {:.6e}",
            result.distance
        );
    }
    let out = W2Output {
        value: result.distance,
        action: result.action,
        iterations: result.iterations,
        converged: result.converged,
        action_history: result.action_history.clone(),
    };
    let json = serde_json::to_string_pretty(&out)
        .map_err(|e| CliError::Runtime(format!("serialization: {e}")))?;
    match &args.output {
        Some(path) => std::fs::write(path, &json)?,
        None => println!("{json}"),
    }
    if let Some(path) = &args.path_csv {
        let mut csv = String::from("t");
        for i in 0..g.n() {
            csv.push_str(&format!(",rho_{i}"));
        }
        csv.push('\n');
        for (t, state) in result.path.times.iter().zip(&result.path.states) {
            csv.push_str(&formats::format_float(*t));
            for v in state.values() {
                csv.push(',');
                csv.push_str(&formats::format_float(*v));
            }
            csv.push('\n');
        }
        std::fs::write(path, csv)?;
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct HodgeArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// JSON density file.
    #[arg(long)]
    pub density: PathBuf,
    /// Edge field as `i j value` text.
    #[arg(long)]
    pub field: PathBuf,
    /// JSON output for the velocity potential.
    #[arg(long)]
    pub out_potential: Option<PathBuf>,
    /// Text output for the divergence-free part.
    #[arg(long)]
    pub out_circulation: Option<PathBuf>,
}

fn cmd_hodge(args: &HodgeArgs) -> Result<i32, CliError> {
    let g = args.graph.build()?;
    let (rho, _) = Density::new(&formats::read_values_json(&args.density)?, &g)?;
    let field_text = std::fs::read_to_string(&args.field)?;
    let v = formats::parse_edge_field_text(&field_text, &g)?;
    let parts = hodge_decompose(&rho, &v, &g)?;

    let grad_p = fpgraph_core::gradient(&parts.potential, &g);
    let vv = fpgraph_core::edge_inner(&rho, &v, &v, &g);
    let pp = fpgraph_core::edge_inner(&rho, &grad_p, &grad_p, &g);
    let uu = fpgraph_core::edge_inner(&rho, &parts.circulation, &parts.circulation, &g);
    let residual = fpgraph_core::weighted_divergence(&rho, &parts.circulation, &g)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    println!(
        "norms: |v|^2 = {vv:.12e}, |grad p|^2 = {pp:.12e}, |u|^2 = {uu:.12e} (gap {:.3e})",
        vv - pp - uu
    );
    println!("divergence residual of the circulation part: {residual:.3e}");

    if let Some(path) = &args.out_potential {
        formats::write_values_json(&parts.potential, path)?;
    }
    if let Some(path) = &args.out_circulation {
        std::fs::write(path, formats::edge_field_to_text(&parts.circulation, &g))?;
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct GibbsArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Potential: zero | linear:<c> | file:<path>.
    #[arg(long, default_value = "zero")]
    pub potential: String,
    /// JSON output path for the density (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// CSV export (`vertex,rho`) for plotting.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn cmd_gibbs(args: &GibbsArgs) -> Result<i32, CliError> {
    let g = args.graph.build()?;
    let psi = parse_potential_spec(&args.potential, &g)?;
    let (gibbs, normalizer) = gibbs_density(&g, &psi)?;
    println!("normalizer = {}", formats::format_float(normalizer));
    println!(
        "summability = {}",
        formats::format_float(gibbs_summability(&g, &psi))
    );
    let json = formats::values_to_json(gibbs.values());
    match &args.output {
        Some(path) => {
            std::fs::write(path, &json)?;
            println!("density written to {}", path.display());
        }
        None => println!("{json}"),
    }
    if let Some(path) = &args.csv {
        formats::write_density_csv(gibbs.values(), path)?;
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Edge-list graph file.
    #[arg(long)]
    pub graph: PathBuf,
    /// Optional JSON density to validate against the graph.
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Export the validated graph as JSON (vertices, edges, measure).
    #[arg(long)]
    pub export_json: Option<PathBuf>,
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32, CliError> {
    let g = formats::read_graph_text(&args.graph)?;
    println!(
        "graph ok: {} vertices, {} edges, mode {}, weights in [{}, {}], max degree {}, growth constant {}",
        g.n(),
        g.num_edges(),
        g.mode(),
        g.min_weight(),
        g.max_weight(),
        g.max_degree(),
        g.growth_constant()
    );
    let total_deficit: f64 = g.deficit().iter().sum();
    if total_deficit > 0.0 {
        println!("total boundary deficit: {total_deficit}");
    }
    if let Some(path) = &args.density {
        let (rho, scale) = Density::new(&formats::read_values_json(path)?, &g)?;
        println!(
            "density ok: min {}, rescaled by {}",
            rho.min_value(),
            scale
        );
    }
    if let Some(path) = &args.export_json {
        formats::write_graph_json(&g, path)?;
        println!("graph json written to {}", path.display());
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct ExhaustionArgs {
    /// Nested family: path | lattice_z | binary_tree.
    #[arg(long)]
    pub family: String,
    /// Increasing sizes, e.g. `2,4,8,16`.
    #[arg(long)]
    pub sizes: String,
    /// Truncation mode: closed | absorbing.
    #[arg(long, default_value = "closed")]
    pub mode: String,
    /// Potential slope.
    #[arg(long, default_value_t = 1.0)]
    pub slope: f64,
    /// Initial-density decay rate.
    #[arg(long, default_value_t = 2.0)]
    pub decay: f64,
    #[arg(long, default_value_t = 3.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 9)]
    pub checkpoints: usize,
    /// Also compute a coarse Wasserstein distance to Gibbs per size.
    #[arg(long)]
    pub w2: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn cmd_exhaustion(args: &ExhaustionArgs) -> Result<i32, CliError> {
    let family = match args.family.as_str() {
        "path" => ExhaustionFamily::Path,
        "lattice_z" => ExhaustionFamily::LatticeZ,
        "binary_tree" => ExhaustionFamily::BinaryTree,
        other => {
            return Err(CliError::Validation(format!(
                "family `{other}` does not form a nested exhaustion"
            )))
        }
    };
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("bad size `{s}`")))
        })
        .collect::<Result<_, _>>()?;
    let mode = match args.mode.as_str() {
        "closed" => TruncationMode::Closed,
        "absorbing" => TruncationMode::Absorbing,
        other => return Err(CliError::Validation(format!("unknown mode `{other}`"))),
    };
    let cfg = ExhaustionConfig {
        family,
        sizes,
        mode,
        potential_slope: args.slope,
        init_decay: args.decay,
        integrator: IntegratorConfig {
            horizon: args.horizon,
            ..Default::default()
        },
        checkpoints: args.checkpoints,
        compute_w2: args.w2,
    };
    let report = exhaustion_study(&cfg)?;

    std::fs::create_dir_all(&args.out)?;
    let mut csv = String::from(
        "size,vertices,final_mass_defect,final_l2_to_gibbs,final_sup_to_gibbs,energy_initial,energy_final,gibbs_normalizer,second_moment_final,w2_to_gibbs\n",
    );
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.size,
            row.vertices,
            formats::format_float(row.final_mass_defect),
            formats::format_float(row.final_l2_to_gibbs),
            formats::format_float(row.final_sup_to_gibbs),
            formats::format_float(row.energy_initial),
            formats::format_float(row.energy_final),
            formats::format_float(row.gibbs_normalizer),
            formats::format_float(row.second_moment_final),
            row.w2_to_gibbs
                .map(formats::format_float)
                .unwrap_or_default(),
        ));
    }
    std::fs::write(args.out.join("exhaustion.csv"), &csv)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(format!("serialization: {e}")))?;
    std::fs::write(args.out.join("exhaustion.json"), &json)?;

    println!(
        "successive window differences: {:?}",
        report.successive_differences
    );
    println!("cauchy: {}", report.cauchy);
    Ok(0)
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Base scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Grid axis `dotted.path=v1,v2,...`; repeatable, axes combine as a
    /// Cartesian product.
    #[arg(long = "param", required = true)]
    pub params: Vec<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SweepPoint {
    dir: String,
    overrides: Vec<(String, String)>,
    status: String,
    scenario_hash: String,
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let base = Scenario::from_file(&args.scenario)?;
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for param in &args.params {
        let (path, values) = param.split_once('=').ok_or_else(|| {
            CliError::Validation(format!("--param `{param}` must be path=v1,v2,..."))
        })?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.is_empty() {
            return Err(CliError::Validation(format!("--param `{param}` has no values")));
        }
        axes.push((path.trim().to_string(), values));
    }

    // Cartesian product of axis values.
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (path, values) in &axes {
        let mut next = Vec::new();
        for combo in &combos {
            for v in values {
                let mut extended = combo.clone();
                extended.push((path.clone(), v.clone()));
                next.push(extended);
            }
        }
        combos = next;
    }

    // Validate and materialize every point before running any of them.
    let mut points = Vec::new();
    for (idx, combo) in combos.iter().enumerate() {
        let mut scenario = base.clone();
        for (path, value) in combo {
            scenario = crate::scenario::apply_override(&scenario, path, value)?;
        }
        scenario.output.dir = args.out.join(format!("point_{idx:03}"));
        points.push((idx, combo.clone(), scenario));
    }

    std::fs::create_dir_all(&args.out)?;
    let mut results: Vec<Result<SweepPoint, CliError>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = points
            .iter()
            .map(|(idx, combo, scenario)| {
                scope.spawn(move || -> Result<SweepPoint, CliError> {
                    let outcome = run_scenario(scenario)?;
                    Ok(SweepPoint {
                        dir: format!("point_{idx:03}"),
                        overrides: combo.clone(),
                        status: outcome.manifest.status.clone(),
                        scenario_hash: outcome.manifest.scenario_hash.clone(),
                    })
                })
            })
            .collect();
        for handle in handles {
            results.push(handle.join().expect("sweep worker panicked"));
        }
    });

    let mut exit = 0;
    let mut summary = Vec::new();
    for result in results {
        let point = result?;
        println!("{}: {} {:?}", point.dir, point.status, point.overrides);
        if point.status != "ok" {
            exit = 3;
        }
        summary.push(point);
    }
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Runtime(format!("serialization: {e}")))?;
    std::fs::write(args.out.join("sweep.json"), json)?;
    Ok(exit)
}

/// Dispatches a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::W2(args) => cmd_w2(args),
        Command::Hodge(args) => cmd_hodge(args),
        Command::Gibbs(args) => cmd_gibbs(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Exhaustion(args) => cmd_exhaustion(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}
