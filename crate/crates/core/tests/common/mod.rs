//! Shared oracles and fixtures for integration tests.
//!
//! The IGSO(3) oracle here is deliberately a different implementation from
//! the library table: it evaluates `sin((l + 1/2) w)` by a Chebyshev-style
//! angle-addition recurrence instead of libm calls, sums to a fixed
//! truncation level decided by an absolute envelope, and integrates on its
//! own dense uniform grid.

#![allow(dead_code)]

use multidock::geom::Rotation;
use multidock::potential::PotentialFn;
use multidock::rng;
use multidock::structio::{AssemblyState, ChainStructure};
use nalgebra::Vector3;
use rand::Rng;

/// Direct series value `f(w; sigma)` via the recurrence
/// `s_{l+1} = 2 cos(w) s_l - s_{l-1}`, `s_0 = sin(w/2)`, `s_{-1} = -s_0`.
pub fn oracle_f(omega: f64, sigma: f64, l_max: usize) -> f64 {
    let sin_half = (0.5 * omega).sin();
    if sin_half.abs() < 1e-12 {
        // w -> 0 limit: every ratio term tends to 2l + 1.
        let mut acc = 0.0;
        for l in 0..=l_max {
            let lf = l as f64;
            let amp = (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * sigma * sigma).exp();
            acc += amp * (2.0 * lf + 1.0);
            if amp * (2.0 * lf + 1.0) < 1e-17 * acc.abs() && l > 2 {
                break;
            }
        }
        return acc;
    }
    let two_cos = 2.0 * omega.cos();
    let mut s_prev = -sin_half; // l = -1
    let mut s = sin_half; // l = 0
    let mut acc = 0.0;
    let mut max_term = 0.0f64;
    for l in 0..=l_max {
        let lf = l as f64;
        let amp = (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * sigma * sigma).exp();
        let term = amp * s / sin_half;
        acc += term;
        max_term = max_term.max(term.abs());
        // Absolute envelope cut: remaining terms cannot matter.
        if amp * (2.0 * lf + 1.0) < 1e-16 * max_term.max(1e-300) && l > 2 {
            break;
        }
        let s_next = two_cos * s - s_prev;
        s_prev = s;
        s = s_next;
    }
    acc
}

/// Angle-marginal density under the oracle series.
pub fn oracle_p(omega: f64, sigma: f64, l_max: usize) -> f64 {
    (1.0 - omega.cos()) / std::f64::consts::PI * oracle_f(omega, sigma, l_max)
}

/// Dense-grid quadrature oracle for one sigma: uniform grid on
/// `[1e-4, pi]`, trapezoid CDF, raw (pre-normalization) total mass.
pub struct QuadratureOracle {
    pub sigma: f64,
    pub omega: Vec<f64>,
    pub p: Vec<f64>,
    pub cdf: Vec<f64>,
    pub total_mass: f64,
}

impl QuadratureOracle {
    pub fn build(sigma: f64, n_grid: usize, l_max: usize) -> Self {
        let lo = 1e-4;
        let hi = std::f64::consts::PI;
        let omega: Vec<f64> = (0..n_grid)
            .map(|i| lo + (hi - lo) * i as f64 / (n_grid - 1) as f64)
            .collect();
        let p: Vec<f64> = omega.iter().map(|&w| oracle_p(w, sigma, l_max)).collect();
        let mut cdf = vec![0.0; n_grid];
        for i in 1..n_grid {
            cdf[i] = cdf[i - 1] + 0.5 * (p[i] + p[i - 1]) * (omega[i] - omega[i - 1]);
        }
        let total_mass = cdf[n_grid - 1];
        for c in &mut cdf {
            *c /= total_mass;
        }
        Self {
            sigma,
            omega,
            p,
            cdf,
            total_mass,
        }
    }

    pub fn cdf_at(&self, w: f64) -> f64 {
        if w <= self.omega[0] {
            return 0.0;
        }
        if w >= *self.omega.last().unwrap() {
            return 1.0;
        }
        let lo = 1e-4;
        let hi = std::f64::consts::PI;
        let pos = (w - lo) / (hi - lo) * (self.omega.len() - 1) as f64;
        let i = (pos.floor() as usize).min(self.omega.len() - 2);
        let t = pos - i as f64;
        self.cdf[i] * (1.0 - t) + self.cdf[i + 1] * t
    }

    /// Expected score magnitude under p via quadrature, with the score
    /// from central differences of `log f`.
    pub fn expected_score_norm(&self, l_max: usize) -> f64 {
        let h = 1e-5;
        let mut acc = 0.0;
        for i in 1..self.omega.len() {
            let mid = |w: f64| {
                let d = (oracle_f(w + h, self.sigma, l_max).ln()
                    - oracle_f(w - h, self.sigma, l_max).ln())
                    / (2.0 * h);
                d.abs()
            };
            // Trapezoid over p * |dlogf|; skip negligible-mass cells.
            let w0 = self.omega[i - 1];
            let w1 = self.omega[i];
            if self.p[i - 1] + self.p[i] < 1e-12 {
                continue;
            }
            acc += 0.5 * (self.p[i - 1] * mid(w0) + self.p[i] * mid(w1)) * (w1 - w0);
        }
        acc / self.total_mass
    }
}

/// One-sample KS statistic of draws against a reference CDF sampled at the
/// reference's own grid.
pub fn ks_statistic(mut draws: Vec<f64>, cdf_at: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = draws.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in draws.iter().enumerate() {
        let f = cdf_at(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Two-sample KS statistic.
pub fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len() as f64, b.len() as f64);
    let mut i = 0;
    let mut j = 0;
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Random compact chain: a blob of `n` residues with ~2 A spacing.
pub fn random_blob(rng: &mut rng::Stream, n: usize, offset: Vector3<f64>, id: &str) -> ChainStructure {
    let coords: Vec<Vector3<f64>> = (0..n).map(|_| rng::normal3(rng) * 2.0 + offset).collect();
    let restypes: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=20u8)).collect();
    ChainStructure::with_restypes(id, coords, restypes).unwrap()
}

/// Two-chain assembly with the mobile chain offset along +x.
pub fn two_blob_assembly(seed: u64, n_a: usize, n_b: usize, gap: f64) -> AssemblyState {
    let mut r = rng::stream(seed, 0);
    let a = random_blob(&mut r, n_a, Vector3::zeros(), "A");
    let b = random_blob(&mut r, n_b, Vector3::new(gap, 0.0, 0.0), "B");
    AssemblyState::new(vec![a, b], 0).unwrap().normalized()
}

/// Energy-distance permutation test: returns (observed statistic, p-value
/// estimate) for samples `x` vs `y` under `n_perm` label permutations.
pub fn energy_distance_permutation_test(
    x: &[Vector3<f64>],
    y: &[Vector3<f64>],
    n_perm: usize,
    seed: u64,
) -> (f64, f64) {
    let all: Vec<Vector3<f64>> = x.iter().chain(y.iter()).copied().collect();
    let n = x.len();
    let total = all.len();
    // Dense distance matrix once; permutations only re-sum entries.
    let mut dist = vec![0.0f64; total * total];
    for i in 0..total {
        for j in (i + 1)..total {
            let d = (all[i] - all[j]).norm();
            dist[i * total + j] = d;
            dist[j * total + i] = d;
        }
    }
    let sum_total: f64 = dist.iter().sum::<f64>() / 2.0;
    let stat_for = |labels: &[usize]| -> f64 {
        // labels holds the indices assigned to group X.
        let mut in_x = vec![false; total];
        for &i in labels {
            in_x[i] = true;
        }
        let mut s_xx = 0.0;
        let mut s_yy = 0.0;
        for i in 0..total {
            for j in (i + 1)..total {
                let d = dist[i * total + j];
                if in_x[i] && in_x[j] {
                    s_xx += d;
                } else if !in_x[i] && !in_x[j] {
                    s_yy += d;
                }
            }
        }
        let s_xy = sum_total - s_xx - s_yy;
        let nf = n as f64;
        let mf = (total - n) as f64;
        2.0 * s_xy / (nf * mf) - 2.0 * s_xx / (nf * nf) - 2.0 * s_yy / (mf * mf)
    };
    let observed = stat_for(&(0..n).collect::<Vec<_>>());
    let mut rng_stream = rng::stream(seed, 0);
    let mut at_least = 0usize;
    for _ in 0..n_perm {
        let mut idx: Vec<usize> = (0..total).collect();
        // Fisher-Yates for the first n slots.
        for i in 0..n {
            let j = rng_stream.gen_range(i..total);
            idx.swap(i, j);
        }
        if stat_for(&idx[..n]) >= observed {
            at_least += 1;
        }
    }
    let p = (1 + at_least) as f64 / (1 + n_perm) as f64;
    (observed, p)
}

/// Builds a locally optimal docked assembly by refining a contact-distance
/// placement with the game.
pub fn well_docked_assembly(
    seed: u64,
    contact: &multidock::potential::ContactPotential,
) -> AssemblyState {
    use multidock::game::{play_game, GameConfig};
    use multidock::potential::GamePenaltyParams;
    let mut r = rng::stream(seed, 0);
    let n_a = 8 + (seed % 5) as usize;
    let n_b = 6 + (seed % 4) as usize;
    let a = random_blob(&mut r, n_a, Vector3::zeros(), "A");
    let b = random_blob(&mut r, n_b, Vector3::new(7.0 + (seed % 3) as f64, 1.0, -0.5), "B");
    let base = AssemblyState::new(vec![a, b], 0).unwrap().normalized();
    let cfg = GameConfig {
        steps: 250,
        convergence_tol: 1e-9,
        penalty: GamePenaltyParams {
            lambda: 0.0,
            d_threshold: 5.0,
        },
        ..GameConfig::default()
    };
    play_game(&base, contact, &cfg).unwrap().final_state()
}

/// Max relative mismatch of two tangent vectors, with an absolute floor.
pub fn tangent_mismatch(
    a: &multidock::geom::TangentVector,
    b: &multidock::geom::TangentVector,
    abs_floor: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..3 {
        let (x, y) = (a.omega[k], b.omega[k]);
        worst = worst.max((x - y).abs() / y.abs().max(abs_floor));
        let (x, y) = (a.vel[k], b.vel[k]);
        worst = worst.max((x - y).abs() / y.abs().max(abs_floor));
    }
    worst
}

/// Evaluates a potential with the assembly moved by a random rigid motion.
pub fn invariance_gap(f: &dyn PotentialFn, state: &AssemblyState, seed: u64) -> f64 {
    let mut r = rng::stream(seed, 0);
    let e0 = f.evaluate(state).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let rot = rng::uniform_rotation(&mut r);
        let tr = rng::normal3(&mut r) * 15.0;
        let moved = state.rigidly_moved(&rot, &tr);
        worst = worst.max((f.evaluate(&moved).unwrap() - e0).abs());
    }
    worst
}

/// FD direction derivative of the rotation angle coordinate used by
/// kernel-score checks: angle(exp(h * axis) * r).
pub fn rotated_angle(r: &Rotation, axis: Vector3<f64>, h: f64) -> f64 {
    Rotation::from_axis_angle(axis * h).mul(r).angle()
}
