//! Rotation matrices, axis-angle conversions, and the group action.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Per-entry tolerance for orthonormality and determinant checks.
pub const ROTATION_TOL: f64 = 1e-9;

/// A proper rotation: orthonormal 3x3 matrix with determinant +1.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    m: Matrix3<f64>,
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    /// Wraps a matrix after checking orthonormality (`m^T m = I` within
    /// [`ROTATION_TOL`] per entry) and `det = +1`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let gram = m.transpose() * m;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > ROTATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "matrix is not orthonormal (max deviation {dev:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "matrix determinant {det} is not +1"
            )));
        }
        Ok(Self { m })
    }

    /// Wraps a matrix that is known to be a proper rotation (e.g. built by
    /// Rodrigues' formula or an SVD with sign correction).
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        debug_assert!((m.determinant() - 1.0).abs() < 1e-6);
        Self { m }
    }

    /// Rodrigues' formula. The rotation vector `omega` encodes
    /// angle = |omega|, axis = omega / |omega|; zero maps to the identity.
    ///
    /// Written in terms of sinc-like coefficients so no normalization of
    /// `omega` is needed and small angles stay accurate:
    /// `R = I + a K + b K^2` with `K = skew(omega)`, `a = sin(t)/t`,
    /// `b = (1 - cos(t))/t^2`.
    pub fn from_axis_angle(omega: Vector3<f64>) -> Self {
        let t2 = omega.norm_squared();
        let t = t2.sqrt();
        let (a, b) = if t < 1e-8 {
            (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
        } else {
            (t.sin() / t, (1.0 - t.cos()) / t2)
        };
        let k = skew(omega);
        let m = Matrix3::identity() + k * a + k * k * b;
        Self { m }
    }

    /// Inverse of [`Rotation::from_axis_angle`]; returns `omega` with
    /// `|omega|` in `[0, pi]`.
    ///
    /// At angle pi the axis sign is ambiguous; it is resolved so the first
    /// nonzero component of the axis is positive.
    pub fn axis_angle(&self) -> Vector3<f64> {
        let m = &self.m;
        let cos_t = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let t = cos_t.acos();
        // vee(R - R^T) / 2 = sin(t) * axis
        let s = Vector3::new(
            (m[(2, 1)] - m[(1, 2)]) * 0.5,
            (m[(0, 2)] - m[(2, 0)]) * 0.5,
            (m[(1, 0)] - m[(0, 1)]) * 0.5,
        );
        if t < 1e-7 {
            // sin(t)/t ~ 1; first-order extraction from the skew part.
            return s;
        }
        if t < std::f64::consts::PI - 1e-4 {
            return s * (t / t.sin());
        }
        // Near pi: recover |axis components| from the symmetric part,
        // R + R^T = 2I + 2(1 - cos t)(axis axis^T - I).
        let one_minus_cos = 1.0 - cos_t;
        let mut axis = Vector3::new(
            ((m[(0, 0)] - cos_t) / one_minus_cos).max(0.0).sqrt(),
            ((m[(1, 1)] - cos_t) / one_minus_cos).max(0.0).sqrt(),
            ((m[(2, 2)] - cos_t) / one_minus_cos).max(0.0).sqrt(),
        );
        // Relative signs from the off-diagonal products axis_i * axis_j.
        let i = axis.imax();
        for j in 0..3 {
            if j != i {
                let prod = (m[(i, j)] + m[(j, i)]) * 0.5 / one_minus_cos;
                if prod < 0.0 {
                    axis[j] = -axis[j];
                }
            }
        }
        axis = axis.normalize();
        // Global sign: from the skew part when it is resolvable, otherwise
        // (angle exactly pi) pick the first nonzero component positive.
        if s.norm() > 1e-11 {
            if axis.dot(&s) < 0.0 {
                axis = -axis;
            }
        } else {
            for k in 0..3 {
                if axis[k].abs() > 1e-12 {
                    if axis[k] < 0.0 {
                        axis = -axis;
                    }
                    break;
                }
            }
        }
        axis * t
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        ((self.m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }

    pub fn inverse(&self) -> Rotation {
        Rotation {
            m: self.m.transpose(),
        }
    }

    /// Matrix product `self * other` (apply `other` first).
    pub fn mul(&self, other: &Rotation) -> Rotation {
        Rotation {
            m: self.m * other.m,
        }
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.m * v
    }

    /// Unit quaternion `(w, x, y, z)` with `w >= 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(
            self.m,
        ));
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        [q.w, q.i, q.j, q.k]
    }

    /// From a unit quaternion `(w, x, y, z)`; the input is renormalized.
    pub fn from_quaternion(wxyz: [f64; 4]) -> Self {
        let q = nalgebra::Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let uq = UnitQuaternion::from_quaternion(q);
        Self {
            m: uq.to_rotation_matrix().into_inner(),
        }
    }
}

fn skew(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A rigid move of one chain: rotation about the chain's centroid plus a
/// translation of the centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidAction {
    pub rot: Rotation,
    pub tr: Vector3<f64>,
}

impl RigidAction {
    pub fn identity() -> Self {
        Self {
            rot: Rotation::identity(),
            tr: Vector3::zeros(),
        }
    }

    pub fn new(rot: Rotation, tr: Vector3<f64>) -> Self {
        Self { rot, tr }
    }

    /// Inverse under the centroid-pivoted composition law:
    /// `compose(a.inverse(), a)` is the identity.
    pub fn inverse(&self) -> Self {
        Self {
            rot: self.rot.inverse(),
            tr: -self.tr,
        }
    }
}

/// A tangent element of `SO(3) x T(3)` at some action: an angular rate
/// 3-vector (radians) and a linear 3-vector (Angstroms).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub omega: Vector3<f64>,
    pub vel: Vector3<f64>,
}

impl TangentVector {
    pub fn zero() -> Self {
        Self {
            omega: Vector3::zeros(),
            vel: Vector3::zeros(),
        }
    }

    pub fn new(omega: Vector3<f64>, vel: Vector3<f64>) -> Self {
        Self { omega, vel }
    }

    /// Combined norm, radians and Angstroms mixed 1:1.
    pub fn norm(&self) -> f64 {
        (self.omega.norm_squared() + self.vel.norm_squared()).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            omega: self.omega * s,
            vel: self.vel * s,
        }
    }

    pub fn add(&self, other: &TangentVector) -> Self {
        Self {
            omega: self.omega + other.omega,
            vel: self.vel + other.vel,
        }
    }
}

/// Applies the disentangled group action: `x -> R (x - pivot) + pivot + r`.
///
/// `pivot` must be the unweighted centroid of `points` (callers may pass a
/// cached value). The output centroid is exactly `pivot + r`.
pub fn apply_action(
    action: &RigidAction,
    points: &[Vector3<f64>],
    pivot: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    points
        .iter()
        .map(|x| action.rot.rotate(&(x - pivot)) + pivot + action.tr)
        .collect()
}

/// Returns the single action equivalent to applying `older` and then
/// `newer`, each about the cloud's centroid at its own application time.
///
/// Because rotations pivot on the moving centroid, the composition is
/// pivot-free: rotations multiply and translations add,
/// `(R2, r2) . (R1, r1) = (R2 R1, r1 + r2)`.
pub fn compose(newer: &RigidAction, older: &RigidAction) -> RigidAction {
    RigidAction {
        rot: newer.rot.mul(&older.rot),
        tr: older.tr + newer.tr,
    }
}
