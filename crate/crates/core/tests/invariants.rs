//! Cross-module invariants: metric slope consistency along the flow,
//! signed Lyapunov terms along trajectories, and construction idempotence.

mod common;

use common::two_point;
use fpgraph_core::{
    fpe_rhs, generate_family, gibbs_density, integrate, lyapunov_partition, metric_norm_squared,
    w2_distance, Density, GraphFamily, IntegratorConfig, Potential, TangentVector,
    TruncationMode, W2Config, PARTITION_DEFAULT_TOL,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn w2_slope_matches_metric_speed_with_quadratic_error() {
    // Along the flow, W2(rho(t), rho(t+h)) = h sqrt(g(rho_dot, rho_dot))
    // up to O(h^2): halving h divides the defect by about four.
    let g = two_point();
    let psi = Potential::zero(&g);
    let (rho_t, _) = Density::new(&[0.6, 0.4], &g).unwrap();

    let rhs = fpe_rhs(&rho_t, &psi, &g);
    let velocity = TangentVector::new(rhs, &g).unwrap();
    let speed = metric_norm_squared(&rho_t, &velocity, &g).unwrap().sqrt();

    let mut errors = Vec::new();
    for h in [0.1, 0.05] {
        let cfg = IntegratorConfig {
            rtol: 1e-12,
            atol: 1e-15,
            dt_init: h / 64.0,
            dt_max: h / 8.0,
            horizon: h,
            record_every: 1000,
            ..Default::default()
        };
        let traj = integrate(&rho_t, &psi, &g, &cfg).unwrap();
        let rho_th = Density::new(traj.final_state(), &g).unwrap().0;
        let w2 = w2_distance(&rho_t, &rho_th, &g, &W2Config::default()).unwrap();
        assert!(w2.converged);
        errors.push((w2.distance - h * speed).abs());
    }
    let ratio = errors[0] / errors[1];
    assert!(
        (2.8..=5.5).contains(&ratio),
        "defect ratio {ratio} not quadratic: errors {errors:?}"
    );
}

#[test]
fn lyapunov_terms_along_equilibrium_directed_trajectories() {
    // Along flows started from moderate perturbations of Gibbs, the norm
    // derivative stays negative for every tested exponent, the crossing
    // terms are nonpositive, and matched-block residuals stay at the
    // tolerance scale.
    let scenarios: Vec<(fpgraph_core::WeightedGraph, Potential, u64)> = vec![
        (two_point(), Potential::zero(&two_point()), 5),
        {
            let g = generate_family(&GraphFamily::Path { n: 5 }, TruncationMode::Closed).unwrap();
            let psi = Potential::from_distance(&g, 0.6);
            (g, psi, 6)
        },
    ];
    for (g, psi, seed) in scenarios {
        let (gibbs, _) = gibbs_density(&g, &psi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = gibbs
            .values()
            .iter()
            .map(|v| v * (1.0 + 0.6 * rng.random_range(-1.0..1.0f64)))
            .collect();
        let (rho0, _) = Density::new(&raw, &g).unwrap();
        let cfg = IntegratorConfig {
            horizon: 30.0,
            record_every: 1,
            ..Default::default()
        };
        let traj = integrate(&rho0, &psi, &g, &cfg).unwrap();

        let uniform_gibbs = psi.lipschitz() == 0.0;
        for state in &traj.states {
            let rho = Density::new(state, &g).unwrap().0;
            for r in [1u32, 2, 4] {
                let report =
                    lyapunov_partition(&rho, &gibbs, &psi, r, &g, PARTITION_DEFAULT_TOL).unwrap();
                let norm_scale: f64 = state
                    .iter()
                    .zip(gibbs.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if norm_scale > 1e-9 {
                    assert!(
                        report.total < 0.0,
                        "norm derivative not negative at distance {norm_scale:e}, 2r={}",
                        2 * r
                    );
                }
                assert!(report.terms_above.crossing <= 1e-15);
                assert!(report.terms_below.crossing <= 1e-15);
                assert!(report.matched_residual.abs() <= 1e-12);
                if uniform_gibbs {
                    // With a constant potential the log drive is monotone in
                    // the deviation, so the within-block terms are signed.
                    assert!(report.terms_above.within <= 1e-15);
                    assert!(report.terms_below.within <= 1e-15);
                }
            }
        }
    }
}

#[test]
fn gibbs_density_renormalization_is_identity() {
    let g = generate_family(&GraphFamily::Path { n: 6 }, TruncationMode::Closed).unwrap();
    let psi = Potential::from_distance(&g, 1.1);
    let (gibbs, _) = gibbs_density(&g, &psi).unwrap();
    let (again, scale) = Density::new(gibbs.values(), &g).unwrap();
    assert!((scale - 1.0).abs() <= 1e-12);
    for (a, b) in gibbs.values().iter().zip(again.values()) {
        assert!((a - b).abs() <= 1e-12 * a);
    }
}
