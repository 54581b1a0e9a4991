//! Assembly JSON format.
//!
//! ```json
//! {
//!   "chains": [
//!     { "id": "A", "coords": [[x, y, z], ...], "restypes": [0, ...] }
//!   ],
//!   "fixed": "A"
//! }
//! ```
//!
//! Coordinates are Angstroms in decimal text; serialization uses the
//! shortest representation that round-trips each f64 exactly, so
//! load -> save -> load is bit-identical. `restypes` is optional (defaults
//! to unknown) and `fixed` may be a chain id, an index, or absent (largest
//! chain wins).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{AssemblyState, ChainStructure};

#[derive(Serialize, Deserialize)]
struct ChainDoc {
    id: String,
    coords: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    restypes: Option<Vec<i64>>,
}

#[derive(Serialize, Deserialize)]
struct AssemblyDoc {
    chains: Vec<ChainDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixed: Option<FixedRef>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FixedRef {
    Index(i64),
    Id(String),
}

/// Loads an assembly and normalizes it to the canonical frame. Schema
/// errors name the offending field and index.
pub fn load_assembly_json(path: impl AsRef<Path>) -> Result<AssemblyState> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: AssemblyDoc = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    assembly_from_doc(doc).map(AssemblyState::normalized)
}

fn assembly_from_doc(doc: AssemblyDoc) -> Result<AssemblyState> {
    if doc.chains.is_empty() {
        return Err(Error::Schema("'chains' is empty".into()));
    }
    let mut chains = Vec::with_capacity(doc.chains.len());
    for (ci, c) in doc.chains.into_iter().enumerate() {
        let mut coords = Vec::with_capacity(c.coords.len());
        for (ri, xyz) in c.coords.iter().enumerate() {
            if xyz.len() != 3 {
                return Err(Error::Schema(format!(
                    "chains[{ci}].coords[{ri}] has {} components, expected 3",
                    xyz.len()
                )));
            }
            if xyz.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "chains[{ci}].coords[{ri}] has a non-finite component"
                )));
            }
            coords.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
        }
        let chain = match c.restypes {
            Some(rt) => {
                let mut restypes = Vec::with_capacity(rt.len());
                for (ri, &t) in rt.iter().enumerate() {
                    if !(0..=super::UNKNOWN_RESTYPE as i64).contains(&t) {
                        return Err(Error::Schema(format!(
                            "chains[{ci}].restypes[{ri}] = {t} outside [0, {}]",
                            super::UNKNOWN_RESTYPE
                        )));
                    }
                    restypes.push(t as u8);
                }
                ChainStructure::with_restypes(c.id, coords, restypes)
                    .map_err(|e| prefix_chain(ci, e))?
            }
            None => ChainStructure::new(c.id, coords).map_err(|e| prefix_chain(ci, e))?,
        };
        chains.push(chain);
    }
    match doc.fixed {
        Some(FixedRef::Index(i)) => {
            if i < 0 || i as usize >= chains.len() {
                return Err(Error::Schema(format!(
                    "'fixed' index {i} out of range for {} chains",
                    chains.len()
                )));
            }
            AssemblyState::new(chains, i as usize)
        }
        Some(FixedRef::Id(id)) => {
            let idx = chains.iter().position(|c| c.id == id).ok_or_else(|| {
                Error::Schema(format!("'fixed' names unknown chain id '{id}'"))
            })?;
            AssemblyState::new(chains, idx)
        }
        None => AssemblyState::with_default_fixed(chains),
    }
}

fn prefix_chain(ci: usize, e: Error) -> Error {
    match e {
        Error::Schema(msg) => Error::Schema(format!("chains[{ci}]: {msg}")),
        other => other,
    }
}

/// Writes the assembly in the schema above, `fixed` as the chain id.
pub fn save_assembly_json(state: &AssemblyState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = AssemblyDoc {
        chains: state
            .chains()
            .iter()
            .map(|c| ChainDoc {
                id: c.id.clone(),
                coords: c.coords.iter().map(|v| vec![v.x, v.y, v.z]).collect(),
                restypes: Some(c.restypes.iter().map(|&t| t as i64).collect()),
            })
            .collect(),
        fixed: Some(FixedRef::Id(state.chains()[state.fixed_index()].id.clone())),
    };
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, &doc).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_chain_file() {
        let f = write_tmp(
            r#"{"chains":[
                {"id":"A","coords":[[0,0,0],[1,0,0],[2,0,0.5]],"restypes":[0,1,2]},
                {"id":"B","coords":[[5,0,0],[6,1,0],[6,0,1]]}
            ],"fixed":"A"}"#,
        );
        let s = load_assembly_json(f.path()).unwrap();
        assert_eq!(s.chains().len(), 2);
        assert_eq!(s.chains()[0].len(), 3);
        assert_eq!(s.chains()[1].len(), 3);
        assert_eq!(s.fixed_index(), 0);
        assert_eq!(s.chains()[1].restypes, vec![super::super::UNKNOWN_RESTYPE; 3]);
    }

    #[test]
    fn load_normalizes_fixed_centroid_to_origin() {
        let f = write_tmp(
            r#"{"chains":[
                {"id":"A","coords":[[4,0,0],[5,0,0],[6,0,0]]},
                {"id":"B","coords":[[0,5,0],[0,6,0],[0,7,1]]}
            ],"fixed":0}"#,
        );
        let s = load_assembly_json(f.path()).unwrap();
        assert!(s.chain_centroid(0).norm() < 1e-12);
        // Chain B is shifted by the same (-5, 0, 0).
        assert!((s.chains()[1].coords[0] - Vector3::new(-5.0, 5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn short_coord_entry_names_the_residue() {
        let f = write_tmp(
            r#"{"chains":[
                {"id":"A","coords":[[0,0,0],[1,0]]},
                {"id":"B","coords":[[5,0,0]]}
            ]}"#,
        );
        let err = load_assembly_json(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("chains[0].coords[1]"), "message was: {msg}");
    }

    #[test]
    fn unknown_fixed_id_is_rejected() {
        let f = write_tmp(
            r#"{"chains":[
                {"id":"A","coords":[[0,0,0]]},
                {"id":"B","coords":[[5,0,0]]}
            ],"fixed":"C"}"#,
        );
        assert!(load_assembly_json(f.path()).is_err());
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let f = write_tmp(
            r#"{"chains":[
                {"id":"A","coords":[[0.1234567890123,-7.77,3.25e-5],[1,0,0],[2,0,0]],"restypes":[4,7,19]},
                {"id":"B","coords":[[5,0.333333333333333,0],[6,1,0]]}
            ],"fixed":"B"}"#,
        );
        let s1 = load_assembly_json(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_assembly_json(&s1, out.path()).unwrap();
        let s2 = load_assembly_json(out.path()).unwrap();
        assert_eq!(s1, s2);
        for (c1, c2) in s1.chains().iter().zip(s2.chains()) {
            for (a, b) in c1.coords.iter().zip(&c2.coords) {
                assert_eq!(a.x.to_bits(), b.x.to_bits());
                assert_eq!(a.y.to_bits(), b.y.to_bits());
                assert_eq!(a.z.to_bits(), b.z.to_bits());
            }
        }
    }
}
