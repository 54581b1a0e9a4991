//! The isotropic Gaussian on SO(3).
//!
//! The rotation-angle marginal is `p(w; sigma) = (1 - cos w)/pi * f(w)` with
//!
//! ```text
//! f(w) = sum_{l>=0} (2l + 1) exp(-l(l+1) sigma^2) sin((l + 1/2) w) / sin(w/2)
//! ```
//!
//! `f` is also the density of the distribution with respect to normalized
//! Haar measure, so the score of the kernel is `(d/dw log f)(w) * axis`.
//! Tables hold, per sigma row on a shared angle grid: `log f`, the termwise
//! analytic derivative `d/dw log f`, the normalized CDF of `p`, and the
//! expected score magnitude and squared magnitude under `p`.
//!
//! Numerics: the series in f64 loses all relative accuracy in the far tail
//! where `f` underflows toward zero (the true values decay like
//! `exp(-w^2 / (4 sigma^2))` while roundoff noise stays absolute). Each row
//! therefore trusts the series only down to `TRUST_REL` of its maximum and
//! continues `log f` beyond that point with the Gaussian-tail expansion
//! `log f(w) ~ log f(w*) + (w - w*) dlogf(w*) - (w - w*)^2 / (4 sigma^2)`,
//! which keeps `f > 0`, keeps scores finite, and affects only angles whose
//! probability mass is negligible.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::exec;
use crate::geom::{Rotation, TangentVector};

/// Smallest tabulated angle; the grid is geometric from here to pi.
const OMEGA_MIN: f64 = 1e-4;
/// Relative floor below which a row stops trusting the raw series.
const TRUST_REL: f64 = 1e-11;
/// Lower clamp for `log f` so `exp` never underflows to zero.
const LOGF_MIN: f64 = -700.0;
/// Relative slack accepted at the sigma range ends.
const SIGMA_RANGE_TOL: f64 = 1e-9;

/// Default truncation level of the series.
pub const DEFAULT_L_MAX: usize = 2000;
/// Default number of angle grid points.
pub const DEFAULT_OMEGA_RESOLUTION: usize = 4096;

/// Precomputed density, score, and CDF grids of the SO(3) heat-kernel
/// marginal over a set of sigma values.
#[derive(Debug, Clone)]
pub struct IGSO3Table {
    sigma_grid: Vec<f64>,
    omega_grid: Vec<f64>,
    logf: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    dlogf: Vec<Vec<f64>>,
    cdf: Vec<Vec<f64>>,
    exp_score_norm: Vec<f64>,
    exp_score_sq: Vec<f64>,
    l_max: usize,
}

/// Truncated series value `f(w; sigma)`, summing `l = 0..=l_stop`.
/// Endpoint-safe: each term evaluates to `2l + 1` in the `w -> 0` limit.
/// Direct evaluation; tables are built from the paired value/derivative
/// loop, and tests difference this function to cross-check the tabulated
/// score.
pub fn series_f(omega: f64, sigma: f64, l_stop: usize) -> f64 {
    let half = 0.5 * omega;
    let sin_half = half.sin();
    let mut acc = 0.0;
    for l in 0..=l_stop {
        let lf = l as f64;
        let amp = (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * sigma * sigma).exp();
        let ratio = if sin_half.abs() < 1e-9 {
            2.0 * lf + 1.0
        } else {
            ((lf + 0.5) * omega).sin() / sin_half
        };
        acc += amp * ratio;
    }
    acc
}

/// Truncated series value and its termwise angle derivative.
fn series_f_and_deriv(omega: f64, sigma: f64, l_stop: usize) -> (f64, f64) {
    let half = 0.5 * omega;
    let sin_half = half.sin();
    let cos_half = half.cos();
    let inv_sin = 1.0 / sin_half;
    let inv_sin_sq = inv_sin * inv_sin;
    let mut f = 0.0;
    let mut df = 0.0;
    for l in 0..=l_stop {
        let lf = l as f64;
        let amp = (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * sigma * sigma).exp();
        let (s, c) = ((lf + 0.5) * omega).sin_cos();
        f += amp * s * inv_sin;
        df += amp * ((lf + 0.5) * c * sin_half - 0.5 * cos_half * s) * inv_sin_sq;
    }
    (f, df)
}

/// Truncation level for a row: the first `l` whose term envelope
/// `(2l+1)^2 exp(-l(l+1) sigma^2)` drops below 1e-16 of `f(0)`, i.e. the
/// series is summed to machine precision relative to the row's dominant
/// value (needed so small-but-trusted tail densities keep ~1e-5 relative
/// accuracy).
fn truncation_level(sigma: f64, l_max: usize) -> usize {
    let mut f0 = 0.0;
    let mut envelopes = Vec::with_capacity(64);
    for l in 0..=l_max {
        let lf = l as f64;
        let env = (2.0 * lf + 1.0).powi(2) * (-lf * (lf + 1.0) * sigma * sigma).exp();
        f0 += env;
        envelopes.push(env);
        if env < 1e-300 {
            break;
        }
    }
    for (l, env) in envelopes.iter().enumerate() {
        if l > 0 && *env < 1e-16 * f0 {
            return l;
        }
    }
    l_max
}

struct Row {
    logf: Vec<f64>,
    f: Vec<f64>,
    dlogf: Vec<f64>,
    cdf: Vec<f64>,
    exp_score_norm: f64,
    exp_score_sq: f64,
}

fn build_row(sigma: f64, omega_grid: &[f64], l_max: usize) -> Row {
    let n = omega_grid.len();
    let l_stop = truncation_level(sigma, l_max);
    let mut f_raw = vec![0.0; n];
    let mut df_raw = vec![0.0; n];
    for i in 0..n {
        let (f, df) = series_f_and_deriv(omega_grid[i], sigma, l_stop);
        f_raw[i] = f;
        df_raw[i] = df;
    }
    let row_max = f_raw.iter().cloned().fold(f64::MIN, f64::max);
    let floor = row_max * TRUST_REL;

    let mut logf = vec![0.0; n];
    let mut dlogf = vec![0.0; n];
    let mut anchor: Option<usize> = None;
    for i in 0..n {
        if anchor.is_none() && f_raw[i] >= floor {
            logf[i] = f_raw[i].ln();
            dlogf[i] = df_raw[i] / f_raw[i];
        } else {
            // Gaussian-tail continuation from the last trusted angle.
            if anchor.is_none() {
                anchor = Some(i.saturating_sub(1));
            }
            let a = anchor.unwrap();
            let dw = omega_grid[i] - omega_grid[a];
            dlogf[i] = dlogf[a] - dw / (2.0 * sigma * sigma);
            logf[i] = (logf[a] + dlogf[a] * dw - dw * dw / (4.0 * sigma * sigma)).max(LOGF_MIN);
        }
    }

    let f: Vec<f64> = logf.iter().map(|&lf| lf.exp()).collect();
    let p: Vec<f64> = omega_grid
        .iter()
        .zip(&f)
        .map(|(&w, &fv)| (1.0 - w.cos()) / std::f64::consts::PI * fv)
        .collect();

    let mut cdf = vec![0.0; n];
    for i in 1..n {
        let dw = omega_grid[i] - omega_grid[i - 1];
        cdf[i] = cdf[i - 1] + 0.5 * (p[i] + p[i - 1]) * dw;
    }
    let total = cdf[n - 1];
    let mut exp_score_norm = 0.0;
    let mut exp_score_sq = 0.0;
    for i in 1..n {
        let dw = omega_grid[i] - omega_grid[i - 1];
        exp_score_norm +=
            0.5 * (p[i] * dlogf[i].abs() + p[i - 1] * dlogf[i - 1].abs()) * dw;
        exp_score_sq +=
            0.5 * (p[i] * dlogf[i] * dlogf[i] + p[i - 1] * dlogf[i - 1] * dlogf[i - 1]) * dw;
    }
    for c in &mut cdf {
        *c /= total;
    }
    Row {
        logf,
        f,
        dlogf,
        cdf,
        exp_score_norm: exp_score_norm / total,
        exp_score_sq: exp_score_sq / total,
    }
}

impl IGSO3Table {
    /// Builds a table over `sigma_grid` (ascending, all positive). Rows are
    /// independent and build in parallel.
    pub fn build(sigma_grid: &[f64], omega_resolution: usize, l_max: usize) -> Result<Self> {
        if sigma_grid.is_empty() {
            return Err(Error::InvalidArgument("sigma grid is empty".into()));
        }
        for &s in sigma_grid {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "sigma must be positive and finite, got {s}"
                )));
            }
        }
        if sigma_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "sigma grid must be strictly ascending".into(),
            ));
        }
        if l_max < 1 {
            return Err(Error::InvalidArgument("l_max must be >= 1".into()));
        }
        if omega_resolution < 256 {
            return Err(Error::InvalidArgument(
                "omega_resolution must be >= 256".into(),
            ));
        }

        // Geometric angle grid: dense where small-sigma mass concentrates.
        let n = omega_resolution;
        let ratio = (std::f64::consts::PI / OMEGA_MIN).ln();
        let mut omega_grid: Vec<f64> = (0..n)
            .map(|i| OMEGA_MIN * (ratio * i as f64 / (n - 1) as f64).exp())
            .collect();
        omega_grid[n - 1] = std::f64::consts::PI;

        let rows = exec::map_indexed(sigma_grid.len(), |i| {
            build_row(sigma_grid[i], &omega_grid, l_max)
        });

        let mut table = IGSO3Table {
            sigma_grid: sigma_grid.to_vec(),
            omega_grid,
            logf: Vec::new(),
            f: Vec::new(),
            dlogf: Vec::new(),
            cdf: Vec::new(),
            exp_score_norm: Vec::new(),
            exp_score_sq: Vec::new(),
            l_max,
        };
        for row in rows {
            table.logf.push(row.logf);
            table.f.push(row.f);
            table.dlogf.push(row.dlogf);
            table.cdf.push(row.cdf);
            table.exp_score_norm.push(row.exp_score_norm);
            table.exp_score_sq.push(row.exp_score_sq);
        }
        Ok(table)
    }

    /// Log-spaced default grid covering a noise schedule's rotation sigmas.
    pub fn default_sigma_grid(sigma_min: f64, sigma_max: f64, n: usize) -> Vec<f64> {
        let (a, b) = (sigma_min.ln(), sigma_max.ln());
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    pub fn sigma_grid(&self) -> &[f64] {
        &self.sigma_grid
    }

    pub fn omega_grid(&self) -> &[f64] {
        &self.omega_grid
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Raw `f` row (exp of the stored log-density), for diagnostics/tests.
    pub fn f_row(&self, sigma_index: usize) -> &[f64] {
        &self.f[sigma_index]
    }

    pub fn dlogf_row(&self, sigma_index: usize) -> &[f64] {
        &self.dlogf[sigma_index]
    }

    pub fn cdf_row(&self, sigma_index: usize) -> &[f64] {
        &self.cdf[sigma_index]
    }

    pub fn check_sigma(&self, sigma: f64) -> Result<()> {
        let lo = self.sigma_grid[0];
        let hi = *self.sigma_grid.last().unwrap();
        if !sigma.is_finite() || sigma < lo * (1.0 - SIGMA_RANGE_TOL) || sigma > hi * (1.0 + SIGMA_RANGE_TOL)
        {
            return Err(Error::SigmaOutOfRange {
                sigma,
                min: lo,
                max: hi,
            });
        }
        Ok(())
    }

    /// Bracketing rows and the log-linear weight of the upper one.
    fn bracket(&self, sigma: f64) -> Result<(usize, usize, f64)> {
        self.check_sigma(sigma)?;
        let sigma = sigma.clamp(self.sigma_grid[0], *self.sigma_grid.last().unwrap());
        let hi = match self
            .sigma_grid
            .iter()
            .position(|&s| s >= sigma)
        {
            Some(0) => return Ok((0, 0, 0.0)),
            Some(i) => i,
            None => self.sigma_grid.len() - 1,
        };
        let lo = hi - 1;
        let (la, lb) = (self.sigma_grid[lo].ln(), self.sigma_grid[hi].ln());
        let a = ((sigma.ln() - la) / (lb - la)).clamp(0.0, 1.0);
        Ok((lo, hi, a))
    }

    fn omega_cell(&self, omega: f64) -> (usize, f64) {
        let grid = &self.omega_grid;
        if omega <= grid[0] {
            return (0, 0.0);
        }
        if omega >= grid[grid.len() - 1] {
            return (grid.len() - 2, 1.0);
        }
        let mut lo = 0;
        let mut hi = grid.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if grid[mid] <= omega {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = (omega - grid[lo]) / (grid[lo + 1] - grid[lo]);
        (lo, t)
    }

    fn interp_rows(&self, rows: &[Vec<f64>], sigma: f64, omega: f64) -> Result<f64> {
        let (rlo, rhi, a) = self.bracket(sigma)?;
        let (i, t) = self.omega_cell(omega);
        let at = |r: usize| rows[r][i] * (1.0 - t) + rows[r][i + 1] * t;
        Ok(at(rlo) * (1.0 - a) + at(rhi) * a)
    }

    /// `log f(omega; sigma)` with log-linear sigma interpolation. For
    /// angles below the grid the first node's value is used (the density
    /// is flat at the origin).
    pub fn log_f(&self, sigma: f64, omega: f64) -> Result<f64> {
        self.interp_rows(&self.logf, sigma, omega)
    }

    /// `d/domega log f(omega; sigma)`. Below the first grid node the score
    /// is interpolated linearly toward its symmetry zero at omega = 0.
    pub fn dlog_f(&self, sigma: f64, omega: f64) -> Result<f64> {
        if omega < self.omega_grid[0] {
            let v = self.interp_rows(&self.dlogf, sigma, self.omega_grid[0])?;
            return Ok(v * omega / self.omega_grid[0]);
        }
        self.interp_rows(&self.dlogf, sigma, omega)
    }

    /// Angle-marginal density `p(omega; sigma)`.
    pub fn density(&self, sigma: f64, omega: f64) -> Result<f64> {
        let lf = self.log_f(sigma, omega)?;
        Ok((1.0 - omega.cos()) / std::f64::consts::PI * lf.exp())
    }

    /// Normalized CDF of `p` at `omega`.
    pub fn cdf_value(&self, sigma: f64, omega: f64) -> Result<f64> {
        self.interp_rows(&self.cdf, sigma, omega)
    }

    /// Inverse CDF by monotone linear interpolation.
    pub fn inverse_cdf(&self, sigma: f64, u: f64) -> Result<f64> {
        let (rlo, rhi, a) = self.bracket(sigma)?;
        let cdf_at = |i: usize| self.cdf[rlo][i] * (1.0 - a) + self.cdf[rhi][i] * a;
        let n = self.omega_grid.len();
        if u <= 0.0 {
            return Ok(self.omega_grid[0]);
        }
        if u >= 1.0 {
            return Ok(self.omega_grid[n - 1]);
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if cdf_at(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (clo, chi) = (cdf_at(lo), cdf_at(hi));
        let t = if chi > clo { (u - clo) / (chi - clo) } else { 0.0 };
        Ok(self.omega_grid[lo] + t * (self.omega_grid[hi] - self.omega_grid[lo]))
    }

    /// Draws the rotation `exp(omega * axis)` with `omega = invCDF(u_cdf)`.
    /// The caller supplies all randomness explicitly.
    pub fn sample_rotation(&self, sigma: f64, u_cdf: f64, axis: &Vector3<f64>) -> Result<Rotation> {
        let omega = self.inverse_cdf(sigma, u_cdf)?;
        Ok(Rotation::from_axis_angle(axis * omega))
    }

    /// Score of the transition kernel at the perturbation `r_delta`
    /// (current rotation relative to the kernel center):
    /// `(d/domega log f)(omega) * axis`, linear part zero.
    pub fn rotation_score(&self, sigma: f64, r_delta: &Rotation) -> Result<TangentVector> {
        self.check_sigma(sigma)?;
        let aa = r_delta.axis_angle();
        let omega = aa.norm();
        if omega < 1e-12 {
            return Ok(TangentVector::zero());
        }
        let d = self.dlog_f(sigma, omega)?;
        Ok(TangentVector::new(aa / omega * d, Vector3::zeros()))
    }

    /// Expected score magnitude `E_p |dlogf|` at `sigma` (used for score
    /// normalization).
    pub fn expected_score_norm(&self, sigma: f64) -> Result<f64> {
        let (rlo, rhi, a) = self.bracket(sigma)?;
        Ok(self.exp_score_norm[rlo] * (1.0 - a) + self.exp_score_norm[rhi] * a)
    }

    /// Expected squared score magnitude `E_p dlogf^2` at `sigma` (used for
    /// loss weighting).
    pub fn expected_score_sq(&self, sigma: f64) -> Result<f64> {
        let (rlo, rhi, a) = self.bracket(sigma)?;
        Ok(self.exp_score_sq[rlo] * (1.0 - a) + self.exp_score_sq[rhi] * a)
    }

    /// Loads a cached table if its key matches, otherwise builds and (best
    /// effort) persists it.
    pub fn load_or_build(
        sigma_grid: &[f64],
        omega_resolution: usize,
        l_max: usize,
        cache: Option<&Path>,
    ) -> Result<Self> {
        let key = cache_key(sigma_grid, omega_resolution, l_max);
        if let Some(path) = cache {
            if path.exists() {
                if let Ok(table) = load_cache(path, key) {
                    return Ok(table);
                }
            }
        }
        let table = Self::build(sigma_grid, omega_resolution, l_max)?;
        if let Some(path) = cache {
            let _ = save_cache(&table, path, key);
        }
        Ok(table)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"IGSO3v1\0";

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn cache_key(sigma_grid: &[f64], omega_resolution: usize, l_max: usize) -> u64 {
    let mut bytes = Vec::with_capacity(16 + sigma_grid.len() * 8);
    bytes.extend_from_slice(&(omega_resolution as u64).to_le_bytes());
    bytes.extend_from_slice(&(l_max as u64).to_le_bytes());
    for &s in sigma_grid {
        bytes.extend_from_slice(&s.to_bits().to_le_bytes());
    }
    fnv1a(&bytes)
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> std::io::Result<()> {
    for &x in xs {
        w.write_all(&x.to_bits().to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
        .collect())
}

/// Little-endian layout: magic, key, n_sigma (u32), n_omega (u32),
/// l_max (u64), then sigma grid, omega grid, logf, dlogf, cdf,
/// exp_score_norm, exp_score_sq as f64 arrays (rows concatenated).
pub fn save_cache(table: &IGSO3Table, path: &Path, key: u64) -> Result<()> {
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(CACHE_MAGIC).map_err(io_err)?;
    w.write_all(&key.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(table.sigma_grid.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&(table.omega_grid.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&(table.l_max as u64).to_le_bytes()).map_err(io_err)?;
    write_f64s(&mut w, &table.sigma_grid).map_err(io_err)?;
    write_f64s(&mut w, &table.omega_grid).map_err(io_err)?;
    for row in &table.logf {
        write_f64s(&mut w, row).map_err(io_err)?;
    }
    for row in &table.dlogf {
        write_f64s(&mut w, row).map_err(io_err)?;
    }
    for row in &table.cdf {
        write_f64s(&mut w, row).map_err(io_err)?;
    }
    write_f64s(&mut w, &table.exp_score_norm).map_err(io_err)?;
    write_f64s(&mut w, &table.exp_score_sq).map_err(io_err)?;
    Ok(())
}

pub fn load_cache(path: &Path, expected_key: u64) -> Result<IGSO3Table> {
    let mut r = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let io_err = |e: std::io::Error| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Schema("IGSO3 cache: bad magic header".into()));
    }
    let mut u64buf = [0u8; 8];
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u64buf).map_err(io_err)?;
    let key = u64::from_le_bytes(u64buf);
    if key != expected_key {
        return Err(Error::Schema(
            "IGSO3 cache: key mismatch, table parameters changed".into(),
        ));
    }
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let n_sigma = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let n_omega = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u64buf).map_err(io_err)?;
    let l_max = u64::from_le_bytes(u64buf) as usize;

    let sigma_grid = read_f64s(&mut r, n_sigma).map_err(io_err)?;
    let omega_grid = read_f64s(&mut r, n_omega).map_err(io_err)?;
    let mut logf = Vec::with_capacity(n_sigma);
    for _ in 0..n_sigma {
        logf.push(read_f64s(&mut r, n_omega).map_err(io_err)?);
    }
    let mut dlogf = Vec::with_capacity(n_sigma);
    for _ in 0..n_sigma {
        dlogf.push(read_f64s(&mut r, n_omega).map_err(io_err)?);
    }
    let mut cdf = Vec::with_capacity(n_sigma);
    for _ in 0..n_sigma {
        cdf.push(read_f64s(&mut r, n_omega).map_err(io_err)?);
    }
    let exp_score_norm = read_f64s(&mut r, n_sigma).map_err(io_err)?;
    let exp_score_sq = read_f64s(&mut r, n_sigma).map_err(io_err)?;
    let f = logf
        .iter()
        .map(|row| row.iter().map(|&x| x.exp()).collect())
        .collect();
    Ok(IGSO3Table {
        sigma_grid,
        omega_grid,
        logf,
        f,
        dlogf,
        cdf,
        exp_score_norm,
        exp_score_sq,
        l_max,
    })
}
