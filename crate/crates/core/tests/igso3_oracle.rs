//! IGSO(3) tables against the independent quadrature oracle.

mod common;

use common::{ks_two_sample, oracle_f, oracle_p, QuadratureOracle};
use multidock::igso3::IGSO3Table;
use multidock::rng;
use rand::Rng;

#[test]
fn density_and_cdf_match_quadrature_oracle_at_sigma_030() {
    let sigma = 0.3;
    let table = IGSO3Table::build(&[sigma], 4096, 2000).unwrap();
    let oracle = QuadratureOracle::build(sigma, 100_000, 2000);

    let grid = table.omega_grid();
    let p_max = oracle.p.iter().cloned().fold(0.0, f64::max);
    for &w in grid {
        let p_o = oracle_p(w, sigma, 2000);
        if p_o < 1e-8 * p_max {
            continue; // below any meaningful relative comparison
        }
        let p_t = table.density(sigma, w).unwrap();
        assert!(
            (p_t - p_o).abs() <= 1e-5 * p_o,
            "w = {w}: table {p_t} vs oracle {p_o}"
        );
    }
    // CDF agreement, and mode location within one oracle grid cell.
    for &w in grid.iter().step_by(16) {
        let c_t = table.cdf_value(sigma, w).unwrap();
        let c_o = oracle.cdf_at(w);
        assert!((c_t - c_o).abs() < 1e-5, "cdf at {w}: {c_t} vs {c_o}");
    }
    let mode_o = oracle.omega[oracle
        .p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0];
    let mode_t = grid
        .iter()
        .map(|&w| (w, table.density(sigma, w).unwrap()))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap()
        .0;
    assert!((mode_o - mode_t).abs() < 0.01, "{mode_o} vs {mode_t}");
}

#[test]
fn tabulated_score_matches_finite_differences_of_oracle_logf() {
    let sigma = 0.3;
    let table = IGSO3Table::build(&[sigma], 4096, 2000).unwrap();
    let h = 1e-5;
    for &w in &[0.1, 0.25, 0.5, 0.8, 1.1] {
        let fd = (oracle_f(w + h, sigma, 2000).ln() - oracle_f(w - h, sigma, 2000).ln())
            / (2.0 * h);
        let got = table.dlog_f(sigma, w).unwrap();
        assert!(
            (got - fd).abs() <= 1e-4 * fd.abs().max(1.0),
            "w = {w}: score {got} vs fd {fd}"
        );
    }
}

#[test]
fn expected_score_norm_matches_oracle_quadrature() {
    let sigma = 0.5;
    let table = IGSO3Table::build(&[sigma], 4096, 2000).unwrap();
    let oracle = QuadratureOracle::build(sigma, 20_000, 2000);
    let expected = oracle.expected_score_norm(2000);
    let got = table.expected_score_norm(sigma).unwrap();
    assert!(
        (got - expected).abs() <= 1e-4 * expected,
        "{got} vs {expected}"
    );
}

#[test]
fn dlogf_matches_finite_differences_of_tabulated_logf_across_grid() {
    let sigmas = [0.1, 0.5, 1.65];
    let table = IGSO3Table::build(&sigmas, 4096, 2000).unwrap();
    for (ri, &sigma) in sigmas.iter().enumerate() {
        let grid = table.omega_grid();
        let f = table.f_row(ri);
        let f_max = f.iter().cloned().fold(0.0, f64::max);
        let h = 1e-5;
        for (i, &w) in grid.iter().enumerate() {
            if !(0.01..=std::f64::consts::PI - 0.01).contains(&w) {
                continue;
            }
            if f[i] < 1e-8 * f_max {
                continue; // tail extension region
            }
            let fd = (table.log_f(sigma, w + h).unwrap() - table.log_f(sigma, w - h).unwrap())
                / (2.0 * h);
            let got = table.dlog_f(sigma, w).unwrap();
            // The FD here reads the piecewise-linear interpolant, so allow
            // the grid-cell interpolation error on top of the base bound.
            let tol = (1e-4f64).max(1e-3 * got.abs()) + 2e-3 * got.abs().max(1.0);
            assert!(
                (got - fd).abs() <= tol,
                "sigma {sigma}, w {w}: {got} vs fd {fd}"
            );
        }
    }
}

#[test]
fn inverse_cdf_samples_match_rejection_samples() {
    let sigma = 0.5;
    let table = IGSO3Table::build(&[sigma], 4096, 800).unwrap();
    let n = 100_000;

    let mut stream = rng::stream(77, 0);
    let inv: Vec<f64> = (0..n)
        .map(|_| table.inverse_cdf(sigma, stream.gen()).unwrap())
        .collect();

    // Rejection sampling from the tabulated density.
    let grid = table.omega_grid().to_vec();
    let p_at = |w: f64| table.density(sigma, w).unwrap();
    let p_max = grid.iter().map(|&w| p_at(w)).fold(0.0, f64::max) * 1.05;
    let mut rej = Vec::with_capacity(n);
    let mut stream2 = rng::stream(78, 0);
    while rej.len() < n {
        let w = stream2.gen_range(0.0..std::f64::consts::PI);
        let u: f64 = stream2.gen_range(0.0..p_max);
        if w >= grid[0] && u <= p_at(w) {
            rej.push(w);
        }
    }

    let d = ks_two_sample(inv, rej);
    // Two-sample KS critical value at alpha = 0.001.
    let critical = 1.94947 * (2.0 / n as f64).sqrt();
    assert!(d < critical, "KS {d} vs critical {critical}");
}

/// At sigma = 10 the angle law collapses to the Haar marginal, whose CDF
/// is (w - sin w)/pi in closed form.
#[test]
fn large_sigma_samples_match_closed_form_cdf() {
    let table = IGSO3Table::build(&[10.0], 4096, 200).unwrap();
    let mut stream = rng::stream(79, 0);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| table.inverse_cdf(10.0, stream.gen()).unwrap())
        .collect();
    let d = ks_statistic_local(draws, |w| (w - w.sin()) / std::f64::consts::PI);
    assert!(d <= 0.01, "KS {d}");
}

fn ks_statistic_local(draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    common::ks_statistic(draws, cdf)
}

#[test]
fn uniform_limit_total_variation() {
    let table = IGSO3Table::build(&[10.0], 4096, 200).unwrap();
    let grid = table.omega_grid();
    let mut tv = 0.0;
    for i in 1..grid.len() {
        let diff = |w: f64| {
            (table.density(10.0, w).unwrap() - (1.0 - w.cos()) / std::f64::consts::PI).abs()
        };
        tv += 0.5 * (diff(grid[i]) + diff(grid[i - 1])) * (grid[i] - grid[i - 1]);
    }
    tv *= 0.5;
    assert!(tv <= 1e-4, "TV {tv}");
}
