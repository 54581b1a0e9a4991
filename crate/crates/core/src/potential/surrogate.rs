//! Linear surrogate potential over soft-binned inter-chain distance
//! histograms.
//!
//! Features are raised-cosine windows (a C1-smoothed triangular kernel)
//! over inter-chain residue-pair distances: windows sit at the bin centers
//! with support twice the bin width, form a partition of unity across the
//! interior, and taper at the range ends. Optionally the histogram is
//! crossed with unordered residue-type pairs. Counts are normalized by the
//! assembly's total inter-chain pair count, which is constant per assembly
//! and therefore irrelevant to intra-assembly rankings while keeping the
//! weight scale independent of chain sizes.
//!
//! Depending only on pairwise distances and unordered type pairs, the
//! energy is exactly invariant under common rigid motions and chain
//! relabeling, and the smooth windows make the Riemannian gradient exist
//! everywhere.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::TangentVector;
use crate::structio::{AssemblyState, UNKNOWN_RESTYPE};

use super::{aggregate_chain_gradient, PotentialFn};

/// Number of residue types including the unknown class.
const N_TYPES: usize = UNKNOWN_RESTYPE as usize + 1;
/// Unordered type pairs: 21 * 22 / 2.
const N_TYPE_CHANNELS: usize = N_TYPES * (N_TYPES + 1) / 2;

pub const DEFAULT_N_BINS: usize = 32;
pub const DEFAULT_D_MAX: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogatePotential {
    bin_edges: Vec<f64>,
    weights: Vec<f64>,
    restype_pairs: bool,
}

impl SurrogatePotential {
    /// Zero-weight model with `n_bins` uniform bins over `[0, d_max]`.
    pub fn new(n_bins: usize, d_max: f64, restype_pairs: bool) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidArgument(format!(
                "surrogate needs >= 2 bins, got {n_bins}"
            )));
        }
        if !(d_max > 0.0 && d_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "surrogate d_max must be positive, got {d_max}"
            )));
        }
        let bin_edges = (0..=n_bins)
            .map(|i| d_max * i as f64 / n_bins as f64)
            .collect();
        let channels = if restype_pairs { N_TYPE_CHANNELS } else { 1 };
        Ok(Self {
            bin_edges,
            weights: vec![0.0; channels * n_bins],
            restype_pairs,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    pub fn d_max(&self) -> f64 {
        *self.bin_edges.last().unwrap()
    }

    pub fn restype_pairs(&self) -> bool {
        self.restype_pairs
    }

    pub fn feature_len(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.feature_len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} weights, got {}",
                self.feature_len(),
                weights.len()
            )));
        }
        self.weights = weights;
        Ok(())
    }

    fn bin_width(&self) -> f64 {
        self.d_max() / self.n_bins() as f64
    }

    fn channel(&self, t1: u8, t2: u8) -> usize {
        if !self.restype_pairs {
            return 0;
        }
        let (a, b) = if t1 <= t2 {
            (t1 as usize, t2 as usize)
        } else {
            (t2 as usize, t1 as usize)
        };
        // Upper-triangular pair index over N_TYPES types.
        a * N_TYPES - a * (a + 1) / 2 + b
    }

    /// The (window index, value, d/dd value) triples a distance activates.
    fn windows_at(&self, d: f64) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let w = self.bin_width();
        let n = self.n_bins();
        let q = (d / w - 0.5).floor();
        [q, q + 1.0].into_iter().filter_map(move |kf| {
            if kf < 0.0 || kf >= n as f64 {
                return None;
            }
            let k = kf as usize;
            let center = (k as f64 + 0.5) * w;
            let u = (d - center) / w;
            if u.abs() >= 1.0 {
                return None;
            }
            let arg = std::f64::consts::PI * u;
            let val = 0.5 * (1.0 + arg.cos());
            let deriv = -0.5 * std::f64::consts::PI / w * arg.sin();
            Some((k, val, deriv))
        })
    }

    fn pair_count(state: &AssemblyState) -> f64 {
        let chains = state.chains();
        let mut total = 0usize;
        for i in 0..chains.len() {
            for j in (i + 1)..chains.len() {
                total += chains[i].len() * chains[j].len();
            }
        }
        total as f64
    }

    /// Normalized soft-histogram feature vector of an assembly.
    pub fn features(&self, state: &AssemblyState) -> Vec<f64> {
        let mut phi = vec![0.0; self.feature_len()];
        let chains = state.chains();
        let n_bins = self.n_bins();
        for i in 0..chains.len() {
            for j in (i + 1)..chains.len() {
                for (ri, x) in chains[i].coords.iter().enumerate() {
                    for (rj, y) in chains[j].coords.iter().enumerate() {
                        let d = (x - y).norm();
                        let ch = self.channel(chains[i].restypes[ri], chains[j].restypes[rj]);
                        for (k, val, _) in self.windows_at(d) {
                            phi[ch * n_bins + k] += val;
                        }
                    }
                }
            }
        }
        let p = Self::pair_count(state);
        for v in &mut phi {
            *v /= p;
        }
        phi
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let doc = SurrogateDoc {
            version: "v1".into(),
            bin_edges: self.bin_edges.clone(),
            weights: self.weights.clone(),
            restype_pairs: self.restype_pairs,
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: SurrogateDoc = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        if doc.version != "v1" {
            return Err(Error::Schema(format!(
                "surrogate format version '{}' is not 'v1'",
                doc.version
            )));
        }
        if doc.bin_edges.len() < 3 {
            return Err(Error::Schema("surrogate needs >= 2 bins".into()));
        }
        if doc.bin_edges.windows(2).any(|w| w[1] <= w[0]) || doc.bin_edges[0] != 0.0 {
            return Err(Error::Schema(
                "surrogate bin edges must ascend from 0".into(),
            ));
        }
        let n_bins = doc.bin_edges.len() - 1;
        let channels = if doc.restype_pairs { N_TYPE_CHANNELS } else { 1 };
        if doc.weights.len() != channels * n_bins {
            return Err(Error::Schema(format!(
                "surrogate has {} weights for {} bins x {} channels",
                doc.weights.len(),
                n_bins,
                channels
            )));
        }
        Ok(Self {
            bin_edges: doc.bin_edges,
            weights: doc.weights,
            restype_pairs: doc.restype_pairs,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SurrogateDoc {
    version: String,
    bin_edges: Vec<f64>,
    weights: Vec<f64>,
    restype_pairs: bool,
}

impl PotentialFn for SurrogatePotential {
    fn evaluate(&self, state: &AssemblyState) -> Result<f64> {
        Ok(self
            .features(state)
            .iter()
            .zip(&self.weights)
            .map(|(a, b)| a * b)
            .sum())
    }

    fn riemannian_grad(&self, state: &AssemblyState, chain: usize) -> Result<TangentVector> {
        if chain == state.fixed_index() || chain >= state.chains().len() {
            return Err(Error::InvalidArgument(format!(
                "gradient requested for non-mobile chain {chain}"
            )));
        }
        let chains = state.chains();
        let coords = &chains[chain].coords;
        let n_bins = self.n_bins();
        let inv_p = 1.0 / Self::pair_count(state);
        let mut grads = vec![Vector3::zeros(); coords.len()];
        for (other_idx, other) in chains.iter().enumerate() {
            if other_idx == chain {
                continue;
            }
            for (r, x) in coords.iter().enumerate() {
                for (ro, y) in other.coords.iter().enumerate() {
                    let diff = x - y;
                    let d = diff.norm();
                    if d < 1e-12 {
                        continue;
                    }
                    let ch = self.channel(chains[chain].restypes[r], other.restypes[ro]);
                    let mut de_dd = 0.0;
                    for (k, _, deriv) in self.windows_at(d) {
                        de_dd += self.weights[ch * n_bins + k] * deriv;
                    }
                    grads[r] += diff * (de_dd * inv_p / d);
                }
            }
        }
        Ok(aggregate_chain_gradient(coords, &grads))
    }
}
