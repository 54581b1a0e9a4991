//! Minimal fixed-column PDB ingestion: C-alpha atoms from ATOM records.
//!
//! Columns follow the PDB v3.3 layout: atom name 13-16, altLoc 17, residue
//! name 18-20, chain id 22, residue sequence number 23-26, x/y/z 31-38 /
//! 39-46 / 47-54, occupancy 55-60. Only `ATOM` records with atom name `CA`
//! are kept; alternate locations resolve to the highest occupancy (first
//! wins ties). Chains appear in file order; residue order is file order.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

use super::{restype_index, AssemblyState, ChainStructure};

struct CaRecord {
    coord: Vector3<f64>,
    restype: u8,
    occupancy: f64,
}

fn slice(line: &str, start1: usize, end1: usize) -> &str {
    // 1-based inclusive columns; lines may be shorter than the full record.
    let bytes = line.as_bytes();
    let lo = (start1 - 1).min(bytes.len());
    let hi = end1.min(bytes.len());
    std::str::from_utf8(&bytes[lo..hi]).unwrap_or("")
}

fn parse_field(line: &str, lineno: usize, start1: usize, end1: usize, what: &str) -> Result<f64> {
    let raw = slice(line, start1, end1).trim();
    if raw.is_empty() {
        return Err(Error::PdbParse {
            line: lineno,
            detail: format!("empty {what} field (columns {start1}-{end1})"),
        });
    }
    raw.parse::<f64>().map_err(|_| Error::PdbParse {
        line: lineno,
        detail: format!("malformed {what} field '{raw}' (columns {start1}-{end1})"),
    })
}

/// Parses a PDB file into an assembly (one chain per chain identifier),
/// normalized to the canonical frame with the default fixed-chain rule.
pub fn load_pdb_calpha(path: impl AsRef<Path>) -> Result<AssemblyState> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

    // Chain order and, per chain, residue order follow first appearance.
    let mut chain_order: Vec<String> = Vec::new();
    let mut residues: Vec<Vec<(String, CaRecord)>> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if slice(line, 1, 6).trim_end() != "ATOM" {
            continue;
        }
        if slice(line, 13, 16).trim() != "CA" {
            continue;
        }
        let chain_id = slice(line, 22, 22).trim().to_string();
        let chain_id = if chain_id.is_empty() { " ".to_string() } else { chain_id };
        let res_seq = slice(line, 23, 26).trim().to_string();
        let res_name = slice(line, 18, 20).trim().to_string();
        let x = parse_field(line, lineno, 31, 38, "x coordinate")?;
        let y = parse_field(line, lineno, 39, 46, "y coordinate")?;
        let z = parse_field(line, lineno, 47, 54, "z coordinate")?;
        let occ_raw = slice(line, 55, 60).trim();
        let occupancy = if occ_raw.is_empty() {
            1.0
        } else {
            parse_field(line, lineno, 55, 60, "occupancy")?
        };
        let record = CaRecord {
            coord: Vector3::new(x, y, z),
            restype: restype_index(&res_name),
            occupancy,
        };

        let ci = match chain_order.iter().position(|c| *c == chain_id) {
            Some(ci) => ci,
            None => {
                chain_order.push(chain_id.clone());
                residues.push(Vec::new());
                chain_order.len() - 1
            }
        };
        match residues[ci].iter_mut().find(|(seq, _)| *seq == res_seq) {
            // Alternate location: keep the highest-occupancy CA.
            Some((_, existing)) => {
                if record.occupancy > existing.occupancy {
                    *existing = record;
                }
            }
            None => residues[ci].push((res_seq, record)),
        }
    }

    if chain_order.is_empty() {
        return Err(Error::PdbParse {
            line: 0,
            detail: "no CA atoms found in any ATOM record".into(),
        });
    }

    let chains: Vec<ChainStructure> = chain_order
        .into_iter()
        .zip(residues)
        .map(|(id, recs)| {
            let coords = recs.iter().map(|(_, r)| r.coord).collect();
            let restypes = recs.iter().map(|(_, r)| r.restype).collect();
            ChainStructure::with_restypes(id, coords, restypes)
        })
        .collect::<Result<_>>()?;

    AssemblyState::with_default_fixed(chains).map(AssemblyState::normalized)
}
