//! Rotation algebra, the disentangled group action on point clouds, and
//! structural alignment metrics.
//!
//! Actions here are elements of the *direct product* `SO(3) x T(3)`: a
//! rotation acts about the point cloud's own centroid, so it never displaces
//! the centroid, and the translation moves the centroid alone. This is
//! deliberately not `SE(3)`; it is what makes per-chain rotations and
//! translations independent coordinates of the game.

mod align;
mod rotation;

pub use align::{complex_rmsd, kabsch_align, tm_score, KabschResult};
pub use rotation::{apply_action, compose, RigidAction, Rotation, TangentVector, ROTATION_TOL};

use std::collections::BTreeMap;

use nalgebra::Vector3;

/// Per-mobile-chain rigid actions, keyed by chain index. The fixed chain is
/// implicitly identity and never carries an entry.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAction {
    entries: BTreeMap<usize, RigidAction>,
}

impl JointAction {
    pub fn new(entries: BTreeMap<usize, RigidAction>) -> Self {
        Self { entries }
    }

    /// Identity action over the given mobile chain indices.
    pub fn identity(mobile: impl IntoIterator<Item = usize>) -> Self {
        Self {
            entries: mobile
                .into_iter()
                .map(|i| (i, RigidAction::identity()))
                .collect(),
        }
    }

    pub fn get(&self, chain: usize) -> Option<&RigidAction> {
        self.entries.get(&chain)
    }

    pub fn insert(&mut self, chain: usize, action: RigidAction) {
        self.entries.insert(chain, action);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &RigidAction)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Chain-wise composition: the result acts like `self` applied after
    /// `earlier` (both about moving centroids, see [`compose`]).
    pub fn compose_after(&self, earlier: &JointAction) -> JointAction {
        let mut entries = earlier.entries.clone();
        for (chain, act) in &self.entries {
            let combined = match entries.get(chain) {
                Some(prev) => compose(act, prev),
                None => act.clone(),
            };
            entries.insert(*chain, combined);
        }
        JointAction { entries }
    }
}

/// Per-mobile-chain tangent vectors, keyed by chain index. Gradients,
/// scores, and diffusion steps all live here.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTangent {
    entries: BTreeMap<usize, TangentVector>,
}

impl JointTangent {
    pub fn new(entries: BTreeMap<usize, TangentVector>) -> Self {
        Self { entries }
    }

    pub fn zero(mobile: impl IntoIterator<Item = usize>) -> Self {
        Self {
            entries: mobile
                .into_iter()
                .map(|i| (i, TangentVector::zero()))
                .collect(),
        }
    }

    pub fn get(&self, chain: usize) -> Option<&TangentVector> {
        self.entries.get(&chain)
    }

    pub fn insert(&mut self, chain: usize, t: TangentVector) {
        self.entries.insert(chain, t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &TangentVector)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest per-chain combined tangent norm (radians and Angstroms 1:1).
    pub fn max_norm(&self) -> f64 {
        self.entries
            .values()
            .map(TangentVector::norm)
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .values()
            .all(|t| t.omega.iter().all(|x| x.is_finite()) && t.vel.iter().all(|x| x.is_finite()))
    }
}

/// Unweighted centroid of a point cloud.
pub fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    debug_assert!(!points.is_empty());
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}
