//! Probability densities and potentials on a weighted graph.
//!
//! A [`Density`] is a strictly positive function `rho` on the vertices with
//! `sum_i pi_i rho_i = 1`; it lives in the interior of the probability
//! simplex under the vertex measure. Strict positivity is enforced at
//! construction, so every density handed to the calculus and flow routines
//! is a valid interior point. Boundary proximity is observable through
//! [`Density::min_value`] but boundary states themselves are not
//! representable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// Absolute tolerance on `sum pi rho - 1` accepted at construction.
pub const NORMALIZATION_ATOL: f64 = 1e-10;

/// A strictly positive probability density with respect to the vertex
/// measure. Immutable value object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    values: Vec<f64>,
}

impl Density {
    /// Normalizes strictly positive values into a density. Returns the
    /// density together with the rescaling factor `1 / sum_i pi_i v_i`.
    pub fn new(values: &[f64], g: &WeightedGraph) -> Result<(Self, f64)> {
        if values.len() != g.n() {
            return Err(Error::LengthMismatch {
                expected: g.n(),
                got: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::NonpositiveEntry { index: i, value: v });
            }
        }
        let total: f64 = values
            .iter()
            .zip(g.measure())
            .map(|(v, pi)| v * pi)
            .sum();
        let scale = 1.0 / total;
        let normalized: Vec<f64> = values.iter().map(|v| v * scale).collect();
        Ok((Self { values: normalized }, scale))
    }

    /// Uniform density `rho_i = 1 / sum pi`.
    pub fn uniform(g: &WeightedGraph) -> Self {
        let total: f64 = g.measure().iter().sum();
        Self {
            values: vec![1.0 / total; g.n()],
        }
    }

    /// Wraps values that are already normalized and positive. Used for
    /// states produced by the integrator, which preserves both properties.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|&v| v > 0.0));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Distance to the simplex boundary, `min_i rho_i`.
    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `sum_i pi_i rho_i`, which is 1 up to rounding for a valid density.
    pub fn mass(&self, g: &WeightedGraph) -> f64 {
        self.values
            .iter()
            .zip(g.measure())
            .map(|(v, pi)| v * pi)
            .sum()
    }
}

impl std::ops::Index<usize> for Density {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// A potential on the vertices together with its Lipschitz constant over
/// edges, `max |Psi_j - Psi_i|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    values: Vec<f64>,
    lipschitz: f64,
}

impl Potential {
    pub fn new(values: Vec<f64>, g: &WeightedGraph) -> Result<Self> {
        if values.len() != g.n() {
            return Err(Error::LengthMismatch {
                expected: g.n(),
                got: values.len(),
            });
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonpositiveEntry { index: i, value: v });
        }
        let lipschitz = g
            .edges()
            .iter()
            .map(|e| (values[e.v] - values[e.u]).abs())
            .fold(0.0, f64::max);
        Ok(Self { values, lipschitz })
    }

    pub fn zero(g: &WeightedGraph) -> Self {
        Self {
            values: vec![0.0; g.n()],
            lipschitz: 0.0,
        }
    }

    /// Linear-in-distance potential `Psi_i = c * d(root, x_i)`, the canonical
    /// admissible family: its edge Lipschitz constant is at most `c` and it
    /// grows without bound on growing truncations.
    pub fn from_distance(g: &WeightedGraph, c: f64) -> Self {
        if c == 0.0 {
            log::warn!(
                "zero potential slope: Gibbs summability on the infinite family fails (uniform limit)"
            );
        }
        let values: Vec<f64> = (0..g.n()).map(|i| c * g.root_distance(i) as f64).collect();
        let lipschitz = g
            .edges()
            .iter()
            .map(|e| (values[e.v] - values[e.u]).abs())
            .fold(0.0, f64::max);
        Self { values, lipschitz }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Edge Lipschitz constant `C_Psi`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl std::ops::Index<usize> for Potential {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Gibbs density `rho*_i = e^{-Psi_i} / K` with `K = sum_j pi_j e^{-Psi_j}`.
/// Returns the density and the normalizer `K`.
///
/// The potential is shifted by its minimum before exponentiation; the result
/// is invariant under the shift and the reported `K` is recovered from it.
pub fn gibbs_density(g: &WeightedGraph, psi: &Potential) -> Result<(Density, f64)> {
    let min_psi = psi
        .values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = psi.values().iter().map(|p| (-(p - min_psi)).exp()).collect();
    if let Some((i, &v)) = shifted.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        let range = psi.values()[i] - min_psi;
        let _ = v;
        return Err(Error::OverflowInExp { range });
    }
    let shifted_norm: f64 = shifted
        .iter()
        .zip(g.measure())
        .map(|(v, pi)| v * pi)
        .sum();
    let normalizer = shifted_norm * (-min_psi).exp();
    let values: Vec<f64> = shifted.iter().map(|v| v / shifted_norm).collect();
    Ok((Density { values }, normalizer))
}

/// Gibbs summability diagnostic `sum_i pi_i e^{-Psi_i}`, i.e. the normalizer
/// itself. Tracked across growing truncations it probes whether the
/// potential increases fast enough for the infinite-graph Gibbs density to
/// exist; no threshold is asserted.
pub fn gibbs_summability(g: &WeightedGraph, psi: &Potential) -> f64 {
    psi.values()
        .iter()
        .zip(g.measure())
        .map(|(p, pi)| pi * (-p).exp())
        .sum()
}

/// Second moment `sum_i pi_i rho_i d^2(root, x_i)`.
pub fn second_moment(rho: &Density, g: &WeightedGraph) -> f64 {
    rho.values()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let d = g.root_distance(i) as f64;
            g.measure()[i] * r * d * d
        })
        .sum()
}

/// Norm exponent for distances between densities: a positive even integer
/// or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    Finite(u32),
    Infinity,
}

/// `ell^r(V, pi)` distance between two densities: for finite even `r` this
/// is `(sum_i pi_i |rho_i - sigma_i|^r)^{1/r}`, for infinity the plain
/// supremum `max_i |rho_i - sigma_i|`.
///
/// Odd finite exponents are rejected: the decay theory covers even powers
/// directly and the extension to the rest of `[2, inf]` is not constructive.
pub fn lr_norm(rho: &Density, sigma: &Density, r: Exponent, g: &WeightedGraph) -> Result<f64> {
    if rho.len() != sigma.len() || rho.len() != g.n() {
        return Err(Error::LengthMismatch {
            expected: g.n(),
            got: rho.len().min(sigma.len()),
        });
    }
    lr_norm_values(rho.values(), sigma.values(), r, g)
}

/// Same norm on raw per-vertex data; used for trajectory diagnostics where
/// states in absorbing mode are sub-probability vectors.
pub fn lr_norm_values(a: &[f64], b: &[f64], r: Exponent, g: &WeightedGraph) -> Result<f64> {
    match r {
        Exponent::Infinity => Ok(a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)),
        Exponent::Finite(p) => {
            if p == 0 || p % 2 != 0 {
                return Err(Error::UnsupportedExponent(p));
            }
            let sum: f64 = a
                .iter()
                .zip(b)
                .zip(g.measure())
                .map(|((x, y), pi)| pi * (x - y).abs().powi(p as i32))
                .sum();
            Ok(sum.powf(1.0 / p as f64))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_family, GraphFamily, TruncationMode};
    use approx::assert_relative_eq;

    fn path3() -> WeightedGraph {
        WeightedGraph::closed(&[(0, 1, 1.0), (1, 2, 1.0)], 0).unwrap()
    }

    fn two_point() -> WeightedGraph {
        WeightedGraph::closed(&[(0, 1, 1.0)], 0).unwrap()
    }

    #[test]
    fn uniform_normalization() {
        let g = path3();
        let (rho, scale) = Density::new(&[1.0, 1.0, 1.0], &g).unwrap();
        assert_eq!(rho.values(), &[0.25, 0.25, 0.25]);
        assert_relative_eq!(scale, 0.25);
    }

    #[test]
    fn two_point_normalization() {
        let g = two_point();
        let (rho, _) = Density::new(&[3.0, 2.0], &g).unwrap();
        assert_relative_eq!(rho[0], 0.6, max_relative = 1e-15);
        assert_relative_eq!(rho[1], 0.4, max_relative = 1e-15);
    }

    #[test]
    fn zero_entry_rejected() {
        let g = path3();
        assert!(matches!(
            Density::new(&[1.0, 0.0, 1.0], &g),
            Err(Error::NonpositiveEntry { index: 1, .. })
        ));
    }

    #[test]
    fn renormalization_is_idempotent() {
        let g = path3();
        let (rho, _) = Density::new(&[0.3, 1.7, 0.9], &g).unwrap();
        let (again, scale) = Density::new(rho.values(), &g).unwrap();
        assert!((scale - 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((rho[i] - again[i]).abs() < 1e-12 * rho[i]);
        }
    }

    #[test]
    fn gibbs_constant_potential_is_uniform() {
        let g = path3();
        let (rho, k) = gibbs_density(&g, &Potential::zero(&g)).unwrap();
        assert_eq!(rho.values(), &[0.25, 0.25, 0.25]);
        assert_relative_eq!(k, 4.0);
    }

    #[test]
    fn gibbs_two_point_log2() {
        // K = 1*e^0 + 1*e^{-log 2} = 3/2, rho* = (2/3, 1/3).
        let g = two_point();
        let psi = Potential::new(vec![0.0, 2.0_f64.ln()], &g).unwrap();
        let (rho, k) = gibbs_density(&g, &psi).unwrap();
        assert_relative_eq!(k, 1.5, max_relative = 1e-15);
        assert_relative_eq!(rho[0], 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(rho[1], 1.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn gibbs_shift_invariant() {
        let g = path3();
        let psi = Potential::new(vec![0.4, 1.2, 2.7], &g).unwrap();
        let shifted = Potential::new(vec![0.4 + 13.5, 1.2 + 13.5, 2.7 + 13.5], &g).unwrap();
        let (a, _) = gibbs_density(&g, &psi).unwrap();
        let (b, _) = gibbs_density(&g, &shifted).unwrap();
        for i in 0..3 {
            assert_relative_eq!(a[i], b[i], max_relative = 1e-13);
        }
    }

    #[test]
    fn gibbs_overflow_guard() {
        let g = two_point();
        let psi = Potential::new(vec![0.0, 800.0], &g).unwrap();
        assert!(matches!(
            gibbs_density(&g, &psi),
            Err(Error::OverflowInExp { .. })
        ));
    }

    #[test]
    fn second_moment_examples() {
        let g = path3();
        let (rho, _) = Density::new(&[1.0, 1.0, 1.0], &g).unwrap();
        // 2*(1/4)*1 + 1*(1/4)*4 = 1.5 with root at vertex 0.
        assert_relative_eq!(second_moment(&rho, &g), 1.5, max_relative = 1e-14);

        let g2 = two_point();
        let (rho2, _) = Density::new(&[0.6, 0.4], &g2).unwrap();
        assert_relative_eq!(second_moment(&rho2, &g2), 0.4, max_relative = 1e-14);
    }

    #[test]
    fn second_moment_vanishes_at_root_point_mass() {
        let g = path3();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6] {
            let (rho, _) = Density::new(&[1.0, eps, eps], &g).unwrap();
            let m = second_moment(&rho, &g);
            assert!(m < prev);
            prev = m;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn lr_norm_examples() {
        let g = two_point();
        let (rho, _) = Density::new(&[0.6, 0.4], &g).unwrap();
        let (sigma, _) = Density::new(&[0.5, 0.5], &g).unwrap();
        let d2 = lr_norm(&rho, &sigma, Exponent::Finite(2), &g).unwrap();
        assert_relative_eq!(d2, 0.02_f64.sqrt(), max_relative = 1e-13);
        let dinf = lr_norm(&rho, &sigma, Exponent::Infinity, &g).unwrap();
        assert_relative_eq!(dinf, 0.1, max_relative = 1e-13);
        assert_eq!(lr_norm(&rho, &rho, Exponent::Finite(4), &g).unwrap(), 0.0);
        assert!(matches!(
            lr_norm(&rho, &sigma, Exponent::Finite(3), &g),
            Err(Error::UnsupportedExponent(3))
        ));
    }

    #[test]
    fn potential_from_distance_examples() {
        let g = path3();
        let psi = Potential::from_distance(&g, 1.0);
        assert_eq!(psi.values(), &[0.0, 1.0, 2.0]);
        assert_eq!(psi.lipschitz(), 1.0);

        let lat =
            generate_family(&GraphFamily::LatticeZ { window: 2 }, TruncationMode::Closed).unwrap();
        let psi2 = Potential::from_distance(&lat, 2.0);
        assert_eq!(psi2.values(), &[4.0, 2.0, 0.0, 2.0, 4.0]);

        let flat = Potential::from_distance(&g, 0.0);
        assert_eq!(flat.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn summability_equals_normalizer() {
        let g = path3();
        let psi = Potential::from_distance(&g, 1.0);
        let (_, k) = gibbs_density(&g, &psi).unwrap();
        assert_relative_eq!(gibbs_summability(&g, &psi), k, max_relative = 1e-13);
    }

    proptest::proptest! {
        // lr_norm is a metric: triangle inequality and symmetry on random
        // density triples for r = 2 and r = infinity.
        #[test]
        fn lr_norm_metric_axioms(
            a in proptest::collection::vec(0.05f64..2.0, 3),
            b in proptest::collection::vec(0.05f64..2.0, 3),
            c in proptest::collection::vec(0.05f64..2.0, 3),
        ) {
            let g = path3();
            let (ra, _) = Density::new(&a, &g).unwrap();
            let (rb, _) = Density::new(&b, &g).unwrap();
            let (rc, _) = Density::new(&c, &g).unwrap();
            for r in [Exponent::Finite(2), Exponent::Infinity] {
                let ab = lr_norm(&ra, &rb, r, &g).unwrap();
                let ba = lr_norm(&rb, &ra, r, &g).unwrap();
                let bc = lr_norm(&rb, &rc, r, &g).unwrap();
                let ac = lr_norm(&ra, &rc, r, &g).unwrap();
                proptest::prop_assert!((ab - ba).abs() <= 1e-15);
                proptest::prop_assert!(ac <= ab + bc + 1e-12);
            }
        }
    }
}
