//! Decoy generation for surrogate training, plus the decoy JSON-lines file.
//!
//! A decoy is a joint action perturbing every mobile chain of a base
//! assembly: rotations drawn uniformly from SO(3) (or from IGSO(3) at a
//! given sigma) and translations drawn isotropic Gaussian. Decoy `i` draws
//! from RNG stream `i`, so generation is deterministic under a seed and
//! independent of execution order.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::geom::{JointAction, RigidAction, Rotation};
use crate::igso3::IGSO3Table;
use crate::potential::PotentialFn;
use crate::rng;

use super::AssemblyState;

/// Law of the decoy rotations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotMode {
    /// Haar-uniform on SO(3), via normalized Gaussian quaternions.
    Uniform,
    /// Isotropic Gaussian on SO(3) at the given sigma; needs a table.
    IgSo3(f64),
}

/// A base assembly with perturbing joint actions and (optionally) their
/// ground-truth energies.
#[derive(Debug, Clone)]
pub struct DecoySet {
    pub base: AssemblyState,
    pub decoys: Vec<JointAction>,
    pub energies: Vec<Option<f64>>,
}

impl DecoySet {
    /// The decoy's full assembly, base with the action applied.
    pub fn realized(&self, index: usize) -> AssemblyState {
        self.base.apply_joint(&self.decoys[index])
    }

    pub fn len(&self) -> usize {
        self.decoys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decoys.is_empty()
    }

    pub fn all_scored(&self) -> bool {
        self.energies.iter().all(Option::is_some)
    }
}

/// Samples `count` decoys. Per decoy, per mobile chain: one rotation and
/// one translation with std `tr_scale` per component; the fixed chain stays
/// identity.
pub fn generate_decoys(
    base: &AssemblyState,
    count: usize,
    tr_scale: f64,
    rot_mode: RotMode,
    table: Option<&IGSO3Table>,
    seed: u64,
) -> Result<DecoySet> {
    if count == 0 {
        return Err(Error::InvalidArgument("decoy count must be >= 1".into()));
    }
    if !tr_scale.is_finite() || tr_scale < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tr_scale must be finite and >= 0, got {tr_scale}"
        )));
    }
    if let RotMode::IgSo3(sigma) = rot_mode {
        let table = table.ok_or_else(|| {
            Error::InvalidArgument("rot_mode igso3 requires an IGSO3 table".into())
        })?;
        table.check_sigma(sigma)?;
    }
    let mobile: Vec<usize> = base.mobile_indices().collect();
    let decoys = exec::map_indexed(count, |i| {
        let mut stream = rng::stream(seed, i as u64);
        let mut action = JointAction::identity(mobile.iter().copied());
        for &chain in &mobile {
            let rot = match rot_mode {
                RotMode::Uniform => rng::uniform_rotation(&mut stream),
                RotMode::IgSo3(sigma) => {
                    let u: f64 = stream.gen();
                    let axis = rng::unit_vector(&mut stream);
                    table
                        .expect("checked above")
                        .sample_rotation(sigma, u, &axis)
                        .expect("sigma checked above")
                }
            };
            let tr = rng::normal3(&mut stream) * tr_scale;
            action.insert(chain, RigidAction::new(rot, tr));
        }
        action
    });
    Ok(DecoySet {
        base: base.clone(),
        energies: vec![None; decoys.len()],
        decoys,
    })
}

/// Evaluates `f` on every realized decoy and fills the energies.
pub fn score_decoys(mut ds: DecoySet, f: &dyn PotentialFn) -> Result<DecoySet> {
    let energies = ds
        .decoys
        .iter()
        .map(|action| f.evaluate(&ds.base.apply_joint(action)))
        .collect::<Result<Vec<f64>>>()?;
    ds.energies = energies.into_iter().map(Some).collect();
    Ok(ds)
}

#[derive(Serialize, Deserialize)]
struct ActionDoc {
    chain: String,
    quat: [f64; 4],
    tr: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct DecoyLine {
    actions: Vec<ActionDoc>,
    energy: Option<f64>,
}

/// Writes one decoy per line: per mobile chain a unit quaternion
/// `(w, x, y, z)` and a translation 3-vector, plus the nullable energy.
pub fn write_decoys_jsonl(ds: &DecoySet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for (action, energy) in ds.decoys.iter().zip(&ds.energies) {
        let line = DecoyLine {
            actions: action
                .iter()
                .map(|(chain, a)| ActionDoc {
                    chain: ds.base.chains()[chain].id.clone(),
                    quat: a.rot.to_quaternion(),
                    tr: [a.tr.x, a.tr.y, a.tr.z],
                })
                .collect(),
            energy: *energy,
        };
        serde_json::to_writer(&mut file, &line).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Reads a decoy file back against its base assembly. Every action must
/// name a mobile chain of `base`.
pub fn read_decoys_jsonl(path: impl AsRef<Path>, base: &AssemblyState) -> Result<DecoySet> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoys = Vec::new();
    let mut energies = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: DecoyLine = serde_json::from_str(&line).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: format!("line {}: {e}", idx + 1),
        })?;
        let mut action = JointAction::identity(base.mobile_indices());
        for a in &doc.actions {
            let chain = base.chain_index_by_id(&a.chain).ok_or_else(|| {
                Error::Schema(format!(
                    "decoy line {}: unknown chain id '{}'",
                    idx + 1,
                    a.chain
                ))
            })?;
            if chain == base.fixed_index() {
                return Err(Error::Schema(format!(
                    "decoy line {}: action on fixed chain '{}'",
                    idx + 1,
                    a.chain
                )));
            }
            action.insert(
                chain,
                RigidAction::new(
                    Rotation::from_quaternion(a.quat),
                    Vector3::new(a.tr[0], a.tr[1], a.tr[2]),
                ),
            );
        }
        decoys.push(action);
        energies.push(doc.energy);
    }
    Ok(DecoySet {
        base: base.clone(),
        decoys,
        energies,
    })
}
