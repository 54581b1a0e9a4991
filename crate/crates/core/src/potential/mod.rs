//! Potential functions over assemblies and their Riemannian gradients.
//!
//! Docking potentials depend only on inter-chain residue distances, which
//! makes them exactly invariant under a common rigid motion of all chains.
//! Gradients live in the tangent space of each mobile chain's action: a
//! torque about the chain centroid and a net force,
//!
//! ```text
//! omega = sum_res (x - c) x dE/dx,    v = sum_res dE/dx.
//! ```
//!
//! Every potential here provides that analytic gradient; a central
//! finite-difference backend is available both as an independent check and
//! as the generic fallback for potentials without one.

mod contact;
mod ranking;
mod surrogate;

pub use contact::ContactPotential;
pub use ranking::{
    ranking_loss, ranking_loss_gradient, surrogate_vs_truth_report, train_surrogate,
    ComparisonReport, OptParams, TrainReport,
};
pub use surrogate::{SurrogatePotential, DEFAULT_D_MAX, DEFAULT_N_BINS};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{centroid, RigidAction, Rotation, TangentVector};
use crate::structio::AssemblyState;

/// Default central finite-difference step, radians and Angstroms.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Gradient backend selector for game updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradBackend {
    Analytic,
    FiniteDiff,
}

/// A scalar energy over assemblies with per-chain Riemannian gradients.
pub trait PotentialFn: Sync {
    fn evaluate(&self, state: &AssemblyState) -> Result<f64>;

    /// Gradient of the energy along the six tangent directions of mobile
    /// chain `chain` (rotation generators about its centroid, then
    /// translations).
    fn riemannian_grad(&self, state: &AssemblyState, chain: usize) -> Result<TangentVector>;
}

/// Torque-and-force aggregation of per-residue Cartesian gradients into a
/// chain's tangent vector.
pub fn aggregate_chain_gradient(
    coords: &[Vector3<f64>],
    cartesian_grads: &[Vector3<f64>],
) -> TangentVector {
    let c = centroid(coords);
    let mut omega = Vector3::zeros();
    let mut vel = Vector3::zeros();
    for (x, g) in coords.iter().zip(cartesian_grads) {
        omega += (x - c).cross(g);
        vel += g;
    }
    TangentVector::new(omega, vel)
}

/// Central finite differences along the six tangent directions of `chain`.
pub fn finite_diff_grad(
    f: &dyn PotentialFn,
    state: &AssemblyState,
    chain: usize,
    h: f64,
) -> Result<TangentVector> {
    if chain == state.fixed_index() || chain >= state.chains().len() {
        return Err(Error::InvalidArgument(format!(
            "gradient requested for non-mobile chain {chain}"
        )));
    }
    let eval_displaced = |act: &RigidAction| -> Result<f64> {
        let mut joint = state.identity_action();
        joint.insert(chain, act.clone());
        f.evaluate(&state.apply_joint(&joint))
    };
    let mut omega = Vector3::zeros();
    let mut vel = Vector3::zeros();
    for k in 0..3 {
        let mut axis = Vector3::zeros();
        axis[k] = h;
        let plus = eval_displaced(&RigidAction::new(
            Rotation::from_axis_angle(axis),
            Vector3::zeros(),
        ))?;
        let minus = eval_displaced(&RigidAction::new(
            Rotation::from_axis_angle(-axis),
            Vector3::zeros(),
        ))?;
        omega[k] = (plus - minus) / (2.0 * h);

        let mut step = Vector3::zeros();
        step[k] = h;
        let plus = eval_displaced(&RigidAction::new(Rotation::identity(), step))?;
        let minus = eval_displaced(&RigidAction::new(Rotation::identity(), -step))?;
        vel[k] = (plus - minus) / (2.0 * h);
    }
    Ok(TangentVector::new(omega, vel))
}

/// Weight and distance threshold of the inter-chain contact penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GamePenaltyParams {
    pub lambda: f64,
    pub d_threshold: f64,
}

impl Default for GamePenaltyParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            d_threshold: 5.0,
        }
    }
}

impl GamePenaltyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "penalty lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !self.d_threshold.is_finite() || self.d_threshold <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "penalty threshold must be > 0, got {}",
                self.d_threshold
            )));
        }
        Ok(())
    }
}

fn min_pair_distance(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> (f64, usize, usize) {
    let mut best = f64::INFINITY;
    let (mut ia, mut ib) = (0, 0);
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            let d = (x - y).norm();
            if d < best {
                best = d;
                ia = i;
                ib = j;
            }
        }
    }
    (best, ia, ib)
}

/// Sum over unordered chain pairs of `max(0, min_residue_distance - d_ths)`.
pub fn distance_penalty(state: &AssemblyState, params: &GamePenaltyParams) -> f64 {
    let chains = state.chains();
    let mut total = 0.0;
    for i in 0..chains.len() {
        for j in (i + 1)..chains.len() {
            let (d, _, _) = min_pair_distance(&chains[i].coords, &chains[j].coords);
            total += (d - params.d_threshold).max(0.0);
        }
    }
    total
}

/// Analytic tangent gradient of [`distance_penalty`] for one mobile chain.
/// The min over residue pairs is piecewise smooth; at the (measure-zero)
/// ties the argmin branch supplies a valid subgradient.
pub fn distance_penalty_grad(
    state: &AssemblyState,
    params: &GamePenaltyParams,
    chain: usize,
) -> TangentVector {
    let chains = state.chains();
    let coords = &chains[chain].coords;
    let mut grads = vec![Vector3::zeros(); coords.len()];
    for (other_idx, other) in chains.iter().enumerate() {
        if other_idx == chain {
            continue;
        }
        let (d, i_self, i_other) = min_pair_distance(coords, &other.coords);
        if d > params.d_threshold && d > 1e-12 {
            let dir = (coords[i_self] - other.coords[i_other]) / d;
            grads[i_self] += dir;
        }
    }
    aggregate_chain_gradient(coords, &grads)
}

/// Quadratic toy potential anchoring every chain centroid to a target:
/// `f = weight * sum_i |centroid_i - target_i|^2`. Rotations are irrelevant
/// (zero torque), and the minimizer is known in closed form. Not rigid-motion
/// invariant; it exists for tests and sanity experiments, not docking.
#[derive(Debug, Clone)]
pub struct CentroidTargetPotential {
    pub targets: Vec<Vector3<f64>>,
    pub weight: f64,
}

impl PotentialFn for CentroidTargetPotential {
    fn evaluate(&self, state: &AssemblyState) -> Result<f64> {
        if self.targets.len() != state.chains().len() {
            return Err(Error::ChainMismatch(format!(
                "{} targets for {} chains",
                self.targets.len(),
                state.chains().len()
            )));
        }
        Ok(self.weight
            * state
                .chains()
                .iter()
                .zip(&self.targets)
                .map(|(c, t)| (c.centroid() - t).norm_squared())
                .sum::<f64>())
    }

    fn riemannian_grad(&self, state: &AssemblyState, chain: usize) -> Result<TangentVector> {
        if chain == state.fixed_index() {
            return Err(Error::InvalidArgument(
                "gradient requested for the fixed chain".into(),
            ));
        }
        let c = state.chain_centroid(chain);
        let force = 2.0 * self.weight * (c - self.targets[chain]);
        Ok(TangentVector::new(Vector3::zeros(), force))
    }
}

/// Convenience used by tests and the invariance suite: evaluates a
/// potential after moving the whole assembly rigidly.
pub fn evaluate_rigidly_moved(
    f: &dyn PotentialFn,
    state: &AssemblyState,
    rot: &Rotation,
    tr: &Vector3<f64>,
) -> Result<f64> {
    f.evaluate(&state.rigidly_moved(rot, tr))
}
