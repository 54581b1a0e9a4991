//! Kabsch superposition and alignment-based metrics (C-RMSD, TM-score).

use nalgebra::{Matrix3, Vector3};

use super::{centroid, Rotation};
use crate::error::{Error, Result};
use crate::structio::AssemblyState;

/// Relative singular-value threshold below which the cross-covariance is
/// treated as rank-deficient.
const RANK_TOL: f64 = 1e-9;

/// Result of an optimal rigid superposition `p -> rot * p + tr`.
#[derive(Debug, Clone)]
pub struct KabschResult {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
    pub rmsd: f64,
    /// Set when the covariance had rank < 2 (collinear or coincident
    /// points); the rotation is then the identity and the translation just
    /// matches centroids.
    pub degenerate: bool,
}

/// Finds the rigid transform minimizing `sum |R p_i + t - q_i|^2` and the
/// residual RMSD. A proper rotation (det = +1) is enforced by sign
/// correction on the smallest singular vector.
pub fn kabsch_align(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<KabschResult> {
    if p.len() != q.len() {
        return Err(Error::ChainMismatch(format!(
            "point counts differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::InvalidArgument("kabsch_align on empty clouds".into()));
    }
    // Fewer than 3 points is automatically rank-deficient and falls into
    // the degenerate branch below (identity rotation, centroid match).
    let pc = centroid(p);
    let qc = centroid(q);
    let mut h = Matrix3::zeros();
    for (a, b) in p.iter().zip(q) {
        h += (a - pc) * (b - qc).transpose();
    }
    // h = U S V^T; optimal rotation is V D U^T with D correcting the sign.
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let s = svd.singular_values;

    if s[1] <= RANK_TOL * s[0].max(1e-300) {
        let result = KabschResult {
            rotation: Rotation::identity(),
            translation: qc - pc,
            rmsd: rmsd_under(p, q, &Rotation::identity(), &(qc - pc)),
            degenerate: true,
        };
        return Ok(result);
    }

    let v = v_t.transpose();
    let d = (u * v_t).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = Rotation::from_matrix_unchecked(v * correction * u.transpose());
    let translation = qc - rotation.rotate(&pc);
    let rmsd = rmsd_under(p, q, &rotation, &translation);
    Ok(KabschResult {
        rotation,
        translation,
        rmsd,
        degenerate: false,
    })
}

fn rmsd_under(p: &[Vector3<f64>], q: &[Vector3<f64>], rot: &Rotation, tr: &Vector3<f64>) -> f64 {
    let ss: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| (rot.rotate(a) + tr - b).norm_squared())
        .sum();
    (ss / p.len() as f64).sqrt()
}

fn check_chains(pred: &AssemblyState, truth: &AssemblyState) -> Result<()> {
    if pred.chains().len() != truth.chains().len() {
        return Err(Error::ChainMismatch(format!(
            "chain counts differ: {} vs {}",
            pred.chains().len(),
            truth.chains().len()
        )));
    }
    for (i, (a, b)) in pred.chains().iter().zip(truth.chains()).enumerate() {
        if a.coords.len() != b.coords.len() {
            return Err(Error::ChainMismatch(format!(
                "chain {i} ('{}' vs '{}') sizes differ: {} vs {}",
                a.id,
                b.id,
                a.coords.len(),
                b.coords.len()
            )));
        }
    }
    Ok(())
}

/// Complex RMSD: Kabsch-aligns the full concatenated clouds, then reports
/// the residual RMSD over all residues.
pub fn complex_rmsd(pred: &AssemblyState, truth: &AssemblyState) -> Result<f64> {
    check_chains(pred, truth)?;
    let p = pred.concat_coords();
    let q = truth.concat_coords();
    Ok(kabsch_align(&p, &q)?.rmsd)
}

/// TM-score normalization scale. The standard formula goes non-positive
/// for L <= 18, so it is floored well below any value it produces on its
/// sensible domain.
fn tm_d0(l: usize) -> f64 {
    (1.24 * ((l - 15) as f64).cbrt() - 1.8).max(0.1)
}

fn tm_from_distances(d_sq: &[f64], d0: f64) -> f64 {
    let d0_sq = d0 * d0;
    d_sq.iter().map(|&ds| 1.0 / (1.0 + ds / d0_sq)).sum::<f64>() / d_sq.len() as f64
}

/// Length-normalized structural similarity in (0, 1].
///
/// `TM = (1/L) sum 1 / (1 + (d_i/d0)^2)` with `d0 = 1.24 (L-15)^(1/3) - 1.8`,
/// maximized over superpositions. Instead of a full alignment search the
/// superposition is found by Kabsch on all residues followed by up to 20
/// rounds of re-fitting on the residues currently within `d0`; the best
/// score seen is reported.
pub fn tm_score(pred: &AssemblyState, truth: &AssemblyState) -> Result<f64> {
    check_chains(pred, truth)?;
    let p = pred.concat_coords();
    let q = truth.concat_coords();
    let l = p.len();
    if l < 16 {
        return Err(Error::InvalidArgument(format!(
            "tm_score needs at least 16 residues, got {l}"
        )));
    }
    let d0 = tm_d0(l);

    let mut subset: Vec<usize> = (0..l).collect();
    let mut best = 0.0f64;
    for _ in 0..21 {
        let ps: Vec<_> = subset.iter().map(|&i| p[i]).collect();
        let qs: Vec<_> = subset.iter().map(|&i| q[i]).collect();
        let fit = kabsch_align(&ps, &qs)?;
        let d_sq: Vec<f64> = p
            .iter()
            .zip(&q)
            .map(|(a, b)| (fit.rotation.rotate(a) + fit.translation - b).norm_squared())
            .collect();
        best = best.max(tm_from_distances(&d_sq, d0));
        let next: Vec<usize> = (0..l).filter(|&i| d_sq[i].sqrt() < d0).collect();
        if next.len() < 3 || next == subset {
            break;
        }
        subset = next;
    }
    Ok(best)
}
