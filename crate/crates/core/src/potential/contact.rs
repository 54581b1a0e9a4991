//! Analytic ground-truth contact potential.
//!
//! Stand-in for black-box physics scoring at desk scale. Per inter-chain
//! residue pair at distance `d` the energy is
//!
//! ```text
//! e(d) = rep(d) + attr(d)
//! attr(d) = -eps * exp(-((d - rho) / rho)^2)
//! rep(d)  = 100 * eps * (1 - d/rho0)^2   for d < rho0, else 0
//! ```
//!
//! with well depth `eps`, contact radius `rho`, and soft-core repulsion
//! radius `rho0 < rho`. Both pieces are C1, the well minimum sits exactly
//! at `d = rho` with value `-eps`, and the energy decays to zero at long
//! range. Depending only on pairwise distances, the total is exactly
//! invariant under common rigid motions and chain relabeling.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::TangentVector;
use crate::structio::AssemblyState;

use super::{aggregate_chain_gradient, PotentialFn};

/// Soft-core repulsion strength in units of the well depth.
const REPULSION_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ContactPotential {
    pub well_depth: f64,
    pub contact_radius: f64,
    pub repulsion_radius: f64,
}

impl Default for ContactPotential {
    fn default() -> Self {
        Self {
            well_depth: 1.0,
            contact_radius: 6.0,
            repulsion_radius: 3.0,
        }
    }
}

impl ContactPotential {
    pub fn new(well_depth: f64, contact_radius: f64, repulsion_radius: f64) -> Result<Self> {
        let p = Self {
            well_depth,
            contact_radius,
            repulsion_radius,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.repulsion_radius > 0.0 && self.contact_radius > self.repulsion_radius) {
            return Err(Error::InvalidArgument(format!(
                "contact potential needs 0 < rho0 < rho, got rho0 = {}, rho = {}",
                self.repulsion_radius, self.contact_radius
            )));
        }
        if !(self.well_depth > 0.0 && self.well_depth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "well depth must be positive, got {}",
                self.well_depth
            )));
        }
        Ok(())
    }

    /// Pair energy `e(d)`.
    pub fn pair_energy(&self, d: f64) -> f64 {
        let rho = self.contact_radius;
        let z = (d - rho) / rho;
        let mut e = -self.well_depth * (-z * z).exp();
        if d < self.repulsion_radius {
            let u = 1.0 - d / self.repulsion_radius;
            e += REPULSION_SCALE * self.well_depth * u * u;
        }
        e
    }

    /// `de/dd`.
    pub fn pair_energy_deriv(&self, d: f64) -> f64 {
        let rho = self.contact_radius;
        let z = (d - rho) / rho;
        let mut de = self.well_depth * (-z * z).exp() * 2.0 * z / rho;
        if d < self.repulsion_radius {
            de -= 2.0 * REPULSION_SCALE * self.well_depth * (1.0 - d / self.repulsion_radius)
                / self.repulsion_radius;
        }
        de
    }
}

impl PotentialFn for ContactPotential {
    fn evaluate(&self, state: &AssemblyState) -> Result<f64> {
        let chains = state.chains();
        let mut total = 0.0;
        for i in 0..chains.len() {
            for j in (i + 1)..chains.len() {
                for x in &chains[i].coords {
                    for y in &chains[j].coords {
                        total += self.pair_energy((x - y).norm());
                    }
                }
            }
        }
        Ok(total)
    }

    fn riemannian_grad(&self, state: &AssemblyState, chain: usize) -> Result<TangentVector> {
        if chain == state.fixed_index() || chain >= state.chains().len() {
            return Err(Error::InvalidArgument(format!(
                "gradient requested for non-mobile chain {chain}"
            )));
        }
        let chains = state.chains();
        let coords = &chains[chain].coords;
        let mut grads = vec![Vector3::zeros(); coords.len()];
        for (other_idx, other) in chains.iter().enumerate() {
            if other_idx == chain {
                continue;
            }
            for (r, x) in coords.iter().enumerate() {
                for y in &other.coords {
                    let diff = x - y;
                    let d = diff.norm();
                    if d > 1e-12 {
                        grads[r] += diff * (self.pair_energy_deriv(d) / d);
                    }
                }
            }
        }
        Ok(aggregate_chain_gradient(coords, &grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{evaluate_rigidly_moved, finite_diff_grad, DEFAULT_FD_STEP};
    use crate::rng;
    use crate::structio::ChainStructure;

    fn single_residue_pair(d: f64) -> AssemblyState {
        AssemblyState::new(
            vec![
                ChainStructure::new("A", vec![Vector3::zeros()]).unwrap(),
                ChainStructure::new("B", vec![Vector3::new(d, 0.0, 0.0)]).unwrap(),
            ],
            0,
        )
        .unwrap()
    }

    #[test]
    fn well_minimum_is_exactly_minus_depth_at_contact_radius() {
        let p = ContactPotential::default();
        let e = p.evaluate(&single_residue_pair(p.contact_radius)).unwrap();
        assert!((e + p.well_depth).abs() < 1e-9);
        assert!(p.pair_energy_deriv(p.contact_radius).abs() < 1e-15);
    }

    #[test]
    fn long_range_energy_vanishes() {
        let p = ContactPotential::default();
        let e = p.evaluate(&single_residue_pair(1000.0)).unwrap();
        assert!(e.abs() < 1e-9);
    }

    #[test]
    fn invariant_under_global_rigid_motion() {
        let p = ContactPotential::default();
        let mut r = rng::stream(31, 0);
        let a = ChainStructure::new("A", (0..6).map(|_| rng::normal3(&mut r) * 3.0).collect())
            .unwrap();
        let b = ChainStructure::new(
            "B",
            (0..5)
                .map(|_| rng::normal3(&mut r) * 3.0 + Vector3::new(6.0, 0.0, 0.0))
                .collect(),
        )
        .unwrap();
        let state = AssemblyState::new(vec![a, b], 0).unwrap();
        let e0 = p.evaluate(&state).unwrap();
        let rot = rng::uniform_rotation(&mut r);
        let e1 =
            evaluate_rigidly_moved(&p, &state, &rot, &Vector3::new(10.0, -4.0, 2.5)).unwrap();
        assert!((e0 - e1).abs() < 1e-9);
    }

    #[test]
    fn single_residue_chain_has_zero_torque() {
        let p = ContactPotential::default();
        let state = single_residue_pair(4.0);
        let g = p.riemannian_grad(&state, 1).unwrap();
        assert_eq!(g.omega, Vector3::zeros());
        // Radial direction along x.
        assert!(g.vel.y.abs() < 1e-15 && g.vel.z.abs() < 1e-15);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let p = ContactPotential::default();
        let mut r = rng::stream(32, 0);
        for trial in 0..10 {
            let mk = |rng: &mut rng::Stream, offset: Vector3<f64>, id: &str| {
                ChainStructure::new(
                    id,
                    (0..5).map(|_| rng::normal3(rng) * 2.0 + offset).collect(),
                )
                .unwrap()
            };
            let state = AssemblyState::new(
                vec![
                    mk(&mut r, Vector3::zeros(), "A"),
                    mk(&mut r, Vector3::new(5.0, 1.0, 0.0), "B"),
                    mk(&mut r, Vector3::new(-2.0, 6.0, 2.0), "C"),
                ],
                0,
            )
            .unwrap();
            for chain in [1, 2] {
                let an = p.riemannian_grad(&state, chain).unwrap();
                let fd = finite_diff_grad(&p, &state, chain, DEFAULT_FD_STEP).unwrap();
                let scale = an.norm().max(1.0);
                assert!(
                    (an.omega - fd.omega).norm() + (an.vel - fd.vel).norm() < 1e-5 * scale,
                    "trial {trial} chain {chain}: {an:?} vs {fd:?}"
                );
            }
        }
    }

    #[test]
    fn invalid_radii_are_rejected() {
        assert!(ContactPotential::new(1.0, 3.0, 6.0).is_err());
        assert!(ContactPotential::new(1.0, 6.0, 0.0).is_err());
        assert!(ContactPotential::new(-1.0, 6.0, 3.0).is_err());
    }
}
