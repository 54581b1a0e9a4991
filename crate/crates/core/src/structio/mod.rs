//! Assembly data model, on-disk formats, and decoy generation.
//!
//! An assembly is an ordered list of chains, each a C-alpha point cloud with
//! per-residue type indices, plus the index of the stationary chain. The
//! canonical frame puts the fixed chain's centroid at the origin; loaders
//! normalize into that frame, and no operation ever moves the fixed chain.

mod decoy;
mod json;
mod pdb;

pub use decoy::{generate_decoys, read_decoys_jsonl, score_decoys, write_decoys_jsonl, DecoySet, RotMode};
pub use json::{load_assembly_json, save_assembly_json};
pub use pdb::load_pdb_calpha;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{apply_action, centroid, JointAction, Rotation};

/// Residue-type index for anything outside the 20 standard amino acids.
pub const UNKNOWN_RESTYPE: u8 = 20;

/// The 20 standard residues, in the order of their type indices 0..=19.
pub const RESTYPE_CODES: [&str; 20] = [
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE", "LEU", "LYS", "MET",
    "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
];

/// Maps a 3-letter residue code to its type index; unknown codes map to
/// [`UNKNOWN_RESTYPE`].
pub fn restype_index(code: &str) -> u8 {
    RESTYPE_CODES
        .iter()
        .position(|c| *c == code)
        .map(|i| i as u8)
        .unwrap_or(UNKNOWN_RESTYPE)
}

/// One rigid chain: an ordered C-alpha point cloud with residue types.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStructure {
    pub id: String,
    pub coords: Vec<Vector3<f64>>,
    pub restypes: Vec<u8>,
}

impl ChainStructure {
    /// Builds a chain with all residue types unknown.
    pub fn new(id: impl Into<String>, coords: Vec<Vector3<f64>>) -> Result<Self> {
        let restypes = vec![UNKNOWN_RESTYPE; coords.len()];
        Self::with_restypes(id, coords, restypes)
    }

    pub fn with_restypes(
        id: impl Into<String>,
        coords: Vec<Vector3<f64>>,
        restypes: Vec<u8>,
    ) -> Result<Self> {
        let id = id.into();
        if coords.is_empty() {
            return Err(Error::Schema(format!("chain '{id}' has no residues")));
        }
        for (i, c) in coords.iter().enumerate() {
            if !(c.x.is_finite() && c.y.is_finite() && c.z.is_finite()) {
                return Err(Error::Schema(format!(
                    "chain '{id}' coords[{i}] has a non-finite component"
                )));
            }
        }
        if restypes.len() != coords.len() {
            return Err(Error::Schema(format!(
                "chain '{id}' has {} restypes for {} residues",
                restypes.len(),
                coords.len()
            )));
        }
        if let Some((i, &t)) = restypes.iter().enumerate().find(|(_, &t)| t > UNKNOWN_RESTYPE) {
            return Err(Error::Schema(format!(
                "chain '{id}' restypes[{i}] = {t} exceeds {UNKNOWN_RESTYPE}"
            )));
        }
        Ok(Self { id, coords, restypes })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        centroid(&self.coords)
    }
}

/// The game board: N >= 2 chains plus the index of the stationary one.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyState {
    chains: Vec<ChainStructure>,
    fixed_index: usize,
}

impl AssemblyState {
    pub fn new(chains: Vec<ChainStructure>, fixed_index: usize) -> Result<Self> {
        if chains.len() < 2 {
            return Err(Error::Schema(format!(
                "assembly needs at least 2 chains, got {}",
                chains.len()
            )));
        }
        if fixed_index >= chains.len() {
            return Err(Error::Schema(format!(
                "fixed index {fixed_index} out of range for {} chains",
                chains.len()
            )));
        }
        for i in 0..chains.len() {
            for j in (i + 1)..chains.len() {
                if chains[i].id == chains[j].id {
                    return Err(Error::Schema(format!(
                        "duplicate chain id '{}' at chains[{i}] and chains[{j}]",
                        chains[i].id
                    )));
                }
            }
        }
        Ok(Self { chains, fixed_index })
    }

    /// Builds an assembly with the default fixed chain: the largest one,
    /// ties broken by the lowest index.
    pub fn with_default_fixed(chains: Vec<ChainStructure>) -> Result<Self> {
        let fixed = chains
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        Self::new(chains, fixed)
    }

    pub fn chains(&self) -> &[ChainStructure] {
        &self.chains
    }

    pub fn fixed_index(&self) -> usize {
        self.fixed_index
    }

    pub fn chain_centroid(&self, i: usize) -> Vector3<f64> {
        self.chains[i].centroid()
    }

    /// Indices of all chains except the fixed one, ascending.
    pub fn mobile_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.chains.len()).filter(move |&i| i != self.fixed_index)
    }

    pub fn total_residues(&self) -> usize {
        self.chains.iter().map(ChainStructure::len).sum()
    }

    /// All coordinates concatenated in chain order.
    pub fn concat_coords(&self) -> Vec<Vector3<f64>> {
        self.chains.iter().flat_map(|c| c.coords.iter().copied()).collect()
    }

    /// Translates the whole assembly so the fixed chain's centroid is at
    /// the origin (the canonical frame). Already-canonical inputs (shift
    /// below 1e-12) pass through bit-identical, which makes normalization
    /// idempotent and load/save round trips exact.
    pub fn normalized(mut self) -> Self {
        let shift = self.chain_centroid(self.fixed_index);
        if shift.norm() <= 1e-12 {
            return self;
        }
        for chain in &mut self.chains {
            for c in &mut chain.coords {
                *c -= shift;
            }
        }
        self
    }

    /// Applies a joint action; the fixed chain's coordinates are returned
    /// bit-identical. Panics if an entry references the fixed chain or an
    /// out-of-range index.
    pub fn apply_joint(&self, action: &JointAction) -> AssemblyState {
        for (chain, _) in action.iter() {
            assert!(
                chain < self.chains.len() && chain != self.fixed_index,
                "joint action entry for chain {chain} is not a mobile chain"
            );
        }
        let chains = self
            .chains
            .iter()
            .enumerate()
            .map(|(i, c)| match action.get(i) {
                Some(a) => {
                    let pivot = c.centroid();
                    ChainStructure {
                        id: c.id.clone(),
                        coords: apply_action(a, &c.coords, &pivot),
                        restypes: c.restypes.clone(),
                    }
                }
                None => c.clone(),
            })
            .collect();
        AssemblyState {
            chains,
            fixed_index: self.fixed_index,
        }
    }

    /// Applies one common rigid motion `x -> R x + t` to every coordinate
    /// of every chain. This leaves the canonical frame; it exists for
    /// invariance checks and frame changes, not for game moves.
    pub fn rigidly_moved(&self, rot: &Rotation, tr: &Vector3<f64>) -> AssemblyState {
        let chains = self
            .chains
            .iter()
            .map(|c| ChainStructure {
                id: c.id.clone(),
                coords: c.coords.iter().map(|x| rot.rotate(x) + tr).collect(),
                restypes: c.restypes.clone(),
            })
            .collect();
        AssemblyState {
            chains,
            fixed_index: self.fixed_index,
        }
    }

    /// Identity joint action over this assembly's mobile chains.
    pub fn identity_action(&self) -> JointAction {
        JointAction::identity(self.mobile_indices())
    }

    pub fn chain_index_by_id(&self, id: &str) -> Option<usize> {
        self.chains.iter().position(|c| c.id == id)
    }
}
