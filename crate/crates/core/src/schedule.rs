//! VE-SDE noise schedules and forward transition kernels on the product
//! space `(SO(3) x T(3))^(N-1)`.
//!
//! Both components use the variance-exploding schedule
//! `sigma(t) = sigma_min^(1-t) * sigma_max^t` with zero drift, so
//! `g(t)^2 = d sigma^2/dt = 2 sigma^2(t) ln(sigma_max/sigma_min)`. Forward
//! noise acts independently per mobile chain: an IGSO(3) rotation about the
//! chain's own centroid (which leaves the centroid in place) and an
//! isotropic Gaussian translation. The kernel score is the exact gradient
//! of the log transition density in the tangent space: `dlogf(w) * axis`
//! rotationally and `-r / sigma_tr^2` translationally.

use rand::Rng;

pub use crate::geom::{JointAction, JointTangent};

use crate::error::{Error, Result};
use crate::geom::{RigidAction, TangentVector};
use crate::igso3::IGSO3Table;
use crate::rng;
use crate::structio::AssemblyState;

/// Exponential noise schedule endpoints for both component manifolds.
/// Translations are Angstroms, rotations radians-scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub sigma_min_tr: f64,
    pub sigma_max_tr: f64,
    pub sigma_min_rot: f64,
    pub sigma_max_rot: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma_min_tr: 0.01,
            sigma_max_tr: 25.0,
            sigma_min_rot: 0.01,
            sigma_max_rot: 1.65,
        }
    }
}

/// Which component manifold a sigma refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Rotation,
    Translation,
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi, what) in [
            (self.sigma_min_tr, self.sigma_max_tr, "translation"),
            (self.sigma_min_rot, self.sigma_max_rot, "rotation"),
        ] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{what} schedule needs 0 < sigma_min < sigma_max, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// `sigma(t) = sigma_min^(1-t) * sigma_max^t`.
    pub fn sigma_at(&self, component: Component, t: f64) -> f64 {
        let (lo, hi) = match component {
            Component::Rotation => (self.sigma_min_rot, self.sigma_max_rot),
            Component::Translation => (self.sigma_min_tr, self.sigma_max_tr),
        };
        lo.powf(1.0 - t) * hi.powf(t)
    }

    /// `g(t)^2 = d[sigma^2(t)]/dt`, in closed form.
    pub fn g_squared(&self, component: Component, t: f64) -> f64 {
        let (lo, hi) = match component {
            Component::Rotation => (self.sigma_min_rot, self.sigma_max_rot),
            Component::Translation => (self.sigma_min_tr, self.sigma_max_tr),
        };
        let s = self.sigma_at(component, t);
        2.0 * s * s * (hi / lo).ln()
    }
}

/// Samples the forward kernel at time `t`: every mobile chain gets an
/// IGSO(3) rotation at `sigma_rot(t)` about its own centroid and a
/// `N(0, sigma_tr(t)^2 I)` translation. Returns the perturbed state and the
/// applied joint action; the fixed chain is untouched.
pub fn perturb(
    state: &AssemblyState,
    t: f64,
    table: &IGSO3Table,
    sched: &NoiseSchedule,
    rng_stream: &mut impl Rng,
) -> Result<(AssemblyState, JointAction)> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "perturbation time must be in (0, 1], got {t}"
        )));
    }
    let sigma_rot = sched.sigma_at(Component::Rotation, t);
    let sigma_tr = sched.sigma_at(Component::Translation, t);
    let mut action = state.identity_action();
    for chain in state.mobile_indices() {
        let u: f64 = rng_stream.gen();
        let axis = rng::unit_vector(rng_stream);
        let rot = table.sample_rotation(sigma_rot, u, &axis)?;
        let tr = rng::normal3(rng_stream) * sigma_tr;
        action.insert(chain, RigidAction::new(rot, tr));
    }
    Ok((state.apply_joint(&action), action))
}

/// Exact score of the forward transition density at the applied
/// perturbation, per chain: `dlogf(w; sigma_rot(t)) * axis` rotationally
/// and `-r / sigma_tr(t)^2` translationally.
pub fn kernel_score(
    applied: &JointAction,
    t: f64,
    table: &IGSO3Table,
    sched: &NoiseSchedule,
) -> Result<JointTangent> {
    let sigma_rot = sched.sigma_at(Component::Rotation, t);
    let sigma_tr = sched.sigma_at(Component::Translation, t);
    let mut out = JointTangent::zero(std::iter::empty());
    for (chain, act) in applied.iter() {
        let rot_part = table.rotation_score(sigma_rot, &act.rot)?;
        let vel = -act.tr / (sigma_tr * sigma_tr);
        out.insert(chain, TangentVector::new(rot_part.omega, vel));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    #[test]
    fn schedule_endpoints_match_defaults() {
        let s = NoiseSchedule::default();
        assert_eq!(s.sigma_at(Component::Translation, 0.0), 0.01);
        assert_eq!(s.sigma_at(Component::Translation, 1.0), 25.0);
        assert_eq!(s.sigma_at(Component::Rotation, 1.0), 1.65);
        let mid = s.sigma_at(Component::Translation, 0.5);
        assert!((mid - 0.5).abs() < 1e-12, "sqrt(0.01 * 25) = 0.5, got {mid}");
    }

    #[test]
    fn g_squared_matches_derivative_of_sigma_squared() {
        let s = NoiseSchedule::default();
        let h = 1e-6;
        for &t in &[0.1, 0.5, 0.9] {
            for comp in [Component::Rotation, Component::Translation] {
                let fd = (s.sigma_at(comp, t + h).powi(2) - s.sigma_at(comp, t - h).powi(2))
                    / (2.0 * h);
                let g2 = s.g_squared(comp, t);
                assert!((fd - g2).abs() < 1e-5 * g2.abs().max(1.0));
            }
        }
    }

    #[test]
    fn translation_score_is_minus_r_over_sigma_sq() {
        let s = NoiseSchedule {
            sigma_min_tr: 0.5,
            sigma_max_tr: 2.0,
            ..NoiseSchedule::default()
        };
        // sigma_tr(t*) = 1 at the geometric midpoint of [0.5, 2].
        let t_star = 0.5;
        assert!((s.sigma_at(Component::Translation, t_star) - 1.0).abs() < 1e-12);
        let table = crate::igso3::IGSO3Table::build(&[0.01, 1.65], 1024, 400).unwrap();
        let mut action = JointAction::identity([1usize]);
        action.insert(
            1,
            RigidAction::new(
                crate::geom::Rotation::identity(),
                Vector3::new(1.0, 0.0, 0.0),
            ),
        );
        let score = kernel_score(&action, t_star, &table, &s).unwrap();
        let tv = score.get(1).unwrap();
        assert!((tv.vel - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(tv.omega, Vector3::zeros());
    }

    #[test]
    fn identity_action_has_zero_score() {
        let table = crate::igso3::IGSO3Table::build(&[0.01, 1.65], 1024, 400).unwrap();
        let s = NoiseSchedule::default();
        let action = JointAction::identity([1usize, 2]);
        let score = kernel_score(&action, 0.7, &table, &s).unwrap();
        assert_eq!(score.max_norm(), 0.0);
    }

    proptest! {
        /// sigma(t)^2 = sigma_min^2 (sigma_max/sigma_min)^(2t) to 1e-12.
        #[test]
        fn prop_sigma_multiplicative_form(t in 0.0f64..=1.0) {
            let s = NoiseSchedule::default();
            let direct = s.sigma_at(Component::Translation, t).powi(2);
            let alt = s.sigma_min_tr.powi(2)
                * ((s.sigma_max_tr / s.sigma_min_tr).powf(2.0 * t));
            prop_assert!((direct - alt).abs() <= 1e-12 * alt.max(1.0));
        }

        /// Strictly increasing in t.
        #[test]
        fn prop_sigma_monotone(t1 in 0.0f64..0.99, dt in 0.005f64..0.2) {
            let s = NoiseSchedule::default();
            let t2 = (t1 + dt).min(1.0);
            prop_assert!(
                s.sigma_at(Component::Rotation, t2) > s.sigma_at(Component::Rotation, t1)
            );
        }
    }
}
