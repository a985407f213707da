//! Scenario execution: build, integrate, write every output, verify the
//! run-level invariants, and emit the manifest last.

use std::path::{Path, PathBuf};

use fpgraph_core::formats;
use fpgraph_core::{gibbs_density, lr_norm_values, Exponent, TruncationMode};

use crate::error::CliError;
use crate::manifest::{sha256_file, FileRecord, Headline, RunManifest};
use crate::scenario::Scenario;

/// Mass-defect gate for closed-mode runs.
pub const MASS_DEFECT_GATE: f64 = 1e-10;
/// Per-step slack allowed on free-energy monotonicity.
pub const ENERGY_SLACK: f64 = 1e-12;

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub dir: PathBuf,
}

/// Runs one scenario end to end. Output files land in the scenario's
/// output directory under its prefix; the manifest is written last. The
/// returned manifest lists violations (mass defect, positivity, energy
/// monotonicity, step-size underflow) without erroring, so callers decide
/// the exit status.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome, CliError> {
    scenario.validate()?;
    let started = chrono::Utc::now().to_rfc3339();

    let g = scenario.build_graph()?;
    let psi = scenario.build_potential(&g)?;
    let rho0 = scenario.build_init(&g, &psi)?;
    let cfg = scenario.integrator_config();
    let traj = fpgraph_core::integrate(&rho0, &psi, &g, &cfg)?;
    let (gibbs, _) = gibbs_density(&g, &psi)?;

    let dir = scenario.output.dir.clone();
    std::fs::create_dir_all(&dir)?;
    let prefix = &scenario.output.prefix;
    let file = |suffix: &str| dir.join(format!("{prefix}_{suffix}"));

    std::fs::write(file("scenario.toml"), scenario.emit())?;
    formats::write_graph_text(&g, file("graph.txt"))?;
    formats::write_values_json(psi.values(), file("potential.json"))?;
    formats::write_values_json(gibbs.values(), file("gibbs.json"))?;
    formats::write_trajectory_csv(&traj, file("trajectory.csv"))?;
    formats::write_diagnostics_csv(&traj, file("diagnostics.csv"))?;

    let mut violations = Vec::new();
    let closed = g.mode() == TruncationMode::Closed;
    let max_defect = traj.max_mass_defect();
    if closed && max_defect > MASS_DEFECT_GATE {
        violations.push(format!(
            "mass defect {max_defect:e} above {MASS_DEFECT_GATE:e}"
        ));
    }
    let min_density = traj.min_density_over_run();
    if min_density.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        violations.push(format!("density reached the boundary: min {min_density:e}"));
    }
    for (k, w) in traj.diagnostics.windows(2).enumerate() {
        if w[1].free_energy > w[0].free_energy + ENERGY_SLACK {
            violations.push(format!(
                "free energy increased by {:e} at record {}",
                w[1].free_energy - w[0].free_energy,
                k + 1
            ));
            break;
        }
    }
    if traj.step_size_underflow {
        violations.push("step size underflow: dt_min reached with persistent rejection".into());
    }

    let final_state = traj.final_state();
    let headline = Headline {
        final_time: traj.final_time(),
        final_mass_defect: traj.diagnostics.last().unwrap().mass_defect,
        max_mass_defect: max_defect,
        final_l2_to_gibbs: lr_norm_values(final_state, gibbs.values(), Exponent::Finite(2), &g)?,
        final_sup_to_gibbs: lr_norm_values(final_state, gibbs.values(), Exponent::Infinity, &g)?,
        min_density_over_run: min_density,
        final_free_energy: traj.diagnostics.last().unwrap().free_energy,
        reached_equilibrium: traj.reached_equilibrium,
        step_size_underflow: traj.step_size_underflow,
    };

    let mut files = Vec::new();
    for suffix in [
        "scenario.toml",
        "graph.txt",
        "potential.json",
        "gibbs.json",
        "trajectory.csv",
        "diagnostics.csv",
    ] {
        let path = file(suffix);
        files.push(FileRecord {
            name: path
                .file_name()
                .unwrap()
                .to_string_lossy()
                .into_owned(),
            sha256: sha256_file(&path)?,
        });
    }

    let manifest = RunManifest {
        scenario_hash: scenario.hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        files,
        headline,
        status: if violations.is_empty() {
            "ok".into()
        } else {
            "invariant_violation".into()
        },
        violations,
    };
    let manifest_path = file("manifest.json");
    manifest.write(&manifest_path)?;

    Ok(RunOutcome {
        manifest,
        manifest_path,
        dir,
    })
}

/// Verifies that every file listed in a manifest still matches its
/// checksum.
pub fn verify_manifest(manifest: &RunManifest, dir: &Path) -> Result<Vec<String>, CliError> {
    let mut mismatches = Vec::new();
    for record in &manifest.files {
        let actual = sha256_file(dir.join(&record.name))?;
        if actual != record.sha256 {
            mismatches.push(record.name.clone());
        }
    }
    Ok(mismatches)
}
