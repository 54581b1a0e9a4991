//! Cross-module invariants: kernel/oracle score consistency, forward-noise
//! statistics, equivariance of the game procedure, and marginal agreement
//! between forward-perturbed data and the sampling prior.

mod common;

use common::{energy_distance_permutation_test, ks_statistic, random_blob, two_blob_assembly};
use multidock::game::{play_game, GameConfig};
use multidock::geom::{complex_rmsd, JointAction, RigidAction, Rotation};
use multidock::igso3::IGSO3Table;
use multidock::potential::{
    finite_diff_grad, ContactPotential, GamePenaltyParams, PotentialFn,
};
use multidock::rng;
use multidock::sampler::{MixtureOracle, ScoreFieldFn};
use multidock::schedule::{perturb, NoiseSchedule};
use multidock::structio::{AssemblyState, ChainStructure};
use nalgebra::Vector3;
use std::sync::OnceLock;

fn table() -> &'static IGSO3Table {
    static TABLE: OnceLock<IGSO3Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let grid = IGSO3Table::default_sigma_grid(0.01, 1.65, 48);
        IGSO3Table::build(&grid, 4096, 2000).unwrap()
    })
}

fn three_blob_assembly(seed: u64) -> AssemblyState {
    let mut r = rng::stream(seed, 0);
    let a = random_blob(&mut r, 6, Vector3::zeros(), "A");
    let b = random_blob(&mut r, 5, Vector3::new(7.0, 0.0, 0.0), "B");
    let c = random_blob(&mut r, 7, Vector3::new(-1.0, 8.0, 2.0), "C");
    AssemblyState::new(vec![a, b, c], 0).unwrap().normalized()
}

/// Applies a single-chain displacement along one tangent direction:
/// rotation generator (about the chain centroid) for k in 0..3, else
/// translation along axis k - 3.
fn displace(state: &AssemblyState, chain: usize, k: usize, h: f64) -> AssemblyState {
    let mut axis = Vector3::zeros();
    let act = if k < 3 {
        axis[k] = h;
        RigidAction::new(Rotation::from_axis_angle(axis), Vector3::zeros())
    } else {
        axis[k - 3] = h;
        RigidAction::new(Rotation::identity(), axis)
    };
    let mut joint = state.identity_action();
    joint.insert(chain, act);
    state.apply_joint(&joint)
}

/// The mixture oracle's score is the tangent gradient of its own log
/// density, checked by central differences along all six directions of
/// every mobile chain on a 3-chain toy.
#[test]
fn mixture_score_matches_log_density_finite_differences() {
    let mode1 = three_blob_assembly(60);
    let mode2 = {
        let mut act = mode1.identity_action();
        act.insert(
            1,
            RigidAction::new(
                Rotation::from_axis_angle(Vector3::new(0.4, -0.2, 0.7)),
                Vector3::new(4.0, -3.0, 1.0),
            ),
        );
        mode1.apply_joint(&act)
    };
    let sched = NoiseSchedule::default();
    let oracle = MixtureOracle::new(
        vec![(mode1.clone(), 0.6), (mode2, 0.4)],
        table(),
        sched.clone(),
    )
    .unwrap();

    let mut stream = rng::stream(61, 0);
    for &t in &[0.45, 0.8] {
        let (xt, _) = perturb(&mode1, t, table(), &sched, &mut stream).unwrap();
        let score = oracle.score(&xt, t).unwrap();
        // The log density reads the piecewise-linear table interpolant, so
        // the step must span several grid cells to probe the underlying
        // derivative rather than a single chord slope.
        let h = 2e-3;
        for chain in xt.mobile_indices() {
            let tv = score.get(chain).unwrap();
            for k in 0..6 {
                let fp = oracle.log_density(&displace(&xt, chain, k, h), t).unwrap();
                let fm = oracle.log_density(&displace(&xt, chain, k, -h), t).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let got = if k < 3 { tv.omega[k] } else { tv.vel[k - 3] };
                assert!(
                    (got - fd).abs() <= 1e-3 * fd.abs().max(1.0),
                    "t {t} chain {chain} dir {k}: score {got} vs fd {fd}"
                );
            }
        }
    }
}

/// Translations of distinct chains are drawn independently.
#[test]
fn perturbation_translations_are_independent_across_chains() {
    let state = three_blob_assembly(62);
    let sched = NoiseSchedule::default();
    let t = 1.0;
    let n = 10_000;
    let mut stream = rng::stream(63, 0);
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    for _ in 0..n {
        let (_, action) = perturb(&state, t, table(), &sched, &mut stream).unwrap();
        d1.push(action.get(1).unwrap().tr);
        d2.push(action.get(2).unwrap().tr);
    }
    for axis_a in 0..3 {
        for axis_b in 0..3 {
            let xs: Vec<f64> = d1.iter().map(|v| v[axis_a]).collect();
            let ys: Vec<f64> = d2.iter().map(|v| v[axis_b]).collect();
            let mx = xs.iter().sum::<f64>() / n as f64;
            let my = ys.iter().sum::<f64>() / n as f64;
            let mut cov = 0.0;
            let mut vx = 0.0;
            let mut vy = 0.0;
            for (x, y) in xs.iter().zip(&ys) {
                cov += (x - mx) * (y - my);
                vx += (x - mx) * (x - mx);
                vy += (y - my) * (y - my);
            }
            let corr = cov / (vx * vy).sqrt();
            assert!(corr.abs() < 0.02, "corr[{axis_a},{axis_b}] = {corr}");
        }
    }

    // And the empirical per-component std at t = 1 is sigma_max_tr to 2%.
    let all: Vec<f64> = d1.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
    let var = all.iter().map(|x| x * x).sum::<f64>() / all.len() as f64;
    let std = var.sqrt();
    assert!(
        (std - 25.0).abs() < 0.02 * 25.0,
        "empirical std {std} vs 25"
    );
}

/// As t -> 0 the forward kernel is a negligible perturbation.
#[test]
fn perturbation_vanishes_at_small_time() {
    let state = two_blob_assembly(64, 10, 10, 8.0);
    let sched = NoiseSchedule::default();
    let mut stream = rng::stream(65, 0);
    let n = 1000;
    let close = (0..n)
        .filter(|_| {
            let (xt, _) = perturb(&state, 1e-6, table(), &sched, &mut stream).unwrap();
            complex_rmsd(&xt, &state).unwrap() < 0.1
        })
        .count();
    assert!(close as f64 / n as f64 >= 0.99, "{close}/{n} within 0.1 A");
}

/// Rigidly moving the initial state moves the final state the same way
/// (same config, analytic gradients, backtracking on).
#[test]
fn game_procedure_is_equivariant() {
    let init = three_blob_assembly(66);
    let f = ContactPotential::default();
    let cfg = GameConfig {
        steps: 30,
        ..GameConfig::default()
    };
    let final_plain = play_game(&init, &f, &cfg).unwrap().final_state();

    let mut r = rng::stream(67, 0);
    let rot = rng::uniform_rotation(&mut r);
    let tr = Vector3::new(6.0, -2.0, 9.0);
    let moved_init = init.rigidly_moved(&rot, &tr);
    let final_moved = play_game(&moved_init, &f, &cfg).unwrap().final_state();

    let transported = final_plain.rigidly_moved(&rot, &tr);
    let gap = complex_rmsd(&final_moved, &transported).unwrap();
    assert!(gap < 1e-3, "equivariance gap {gap}");
}

/// The directional derivative of an invariant potential along a global
/// motion (every chain displaced identically, fixed chain included) is
/// zero; probed with finite differences.
#[test]
fn global_motion_direction_has_zero_gradient() {
    let state = two_blob_assembly(68, 8, 7, 7.5);
    let f = ContactPotential::default();
    let h = 1e-4;
    let global_centroid = {
        let all = state.concat_coords();
        multidock::geom::centroid(&all)
    };
    for k in 0..6 {
        let eval = |s: f64| -> f64 {
            let mut axis = Vector3::zeros();
            let (rot, tr) = if k < 3 {
                axis[k] = s;
                (Rotation::from_axis_angle(axis), Vector3::zeros())
            } else {
                axis[k - 3] = s;
                (Rotation::identity(), axis)
            };
            // One rigid motion of the whole complex about its global
            // centroid.
            let moved = state.rigidly_moved(
                &rot,
                &(global_centroid - rot.rotate(&global_centroid) + tr),
            );
            f.evaluate(&moved).unwrap()
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        assert!(fd.abs() < 1e-6, "direction {k}: derivative {fd}");
    }
}

/// Permutation invariance: relabeling chains (and remapping fixed_index)
/// leaves potentials unchanged.
#[test]
fn potentials_are_permutation_invariant() {
    let state = three_blob_assembly(69);
    let perm = [2usize, 0, 1];
    let chains: Vec<ChainStructure> = perm.iter().map(|&i| state.chains()[i].clone()).collect();
    let fixed = perm.iter().position(|&i| i == state.fixed_index()).unwrap();
    let permuted = AssemblyState::new(chains, fixed).unwrap();
    let contact = ContactPotential::default();
    let e0 = contact.evaluate(&state).unwrap();
    let e1 = contact.evaluate(&permuted).unwrap();
    assert!((e0 - e1).abs() < 1e-9);

    let penalty = GamePenaltyParams::default();
    let p0 = multidock::potential::distance_penalty(&state, &penalty);
    let p1 = multidock::potential::distance_penalty(&permuted, &penalty);
    assert!((p0 - p1).abs() < 1e-9);
}

/// At t = 1 forward-perturbed data and prior samples agree on mobile-chain
/// centroid positions: per-coordinate KS at 10^4 draws plus an
/// energy-distance permutation test at significance 0.001.
#[test]
fn forward_marginal_matches_prior_at_t_one() {
    let state = two_blob_assembly(70, 6, 6, 7.0);
    let sched = NoiseSchedule::default();
    let n = 10_000;

    let mut stream = rng::stream(71, 0);
    let fwd: Vec<Vector3<f64>> = (0..n)
        .map(|_| {
            let (xt, _) = perturb(&state, 1.0, table(), &sched, &mut stream).unwrap();
            xt.chain_centroid(1)
        })
        .collect();
    // Prior law: Haar rotation about the chain's own centroid (leaves the
    // centroid fixed) plus N(0, sigma_max_tr^2) translation.
    let mut stream2 = rng::stream(72, 0);
    let base_centroid = state.chain_centroid(1);
    let prior: Vec<Vector3<f64>> = (0..n)
        .map(|_| {
            let _spin = rng::uniform_rotation(&mut stream2);
            base_centroid + rng::normal3(&mut stream2) * sched.sigma_max_tr
        })
        .collect();

    for axis in 0..3 {
        let xs: Vec<f64> = fwd.iter().map(|v| v[axis]).collect();
        let mut ys: Vec<f64> = prior.iter().map(|v| v[axis]).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = |x: f64| {
            let pos = ys.partition_point(|&y| y <= x);
            pos as f64 / ys.len() as f64
        };
        let d = ks_statistic(xs, cdf);
        // Two-sample KS bound at alpha = 0.001 for n = m = 10^4.
        let critical = 1.94947 * (2.0 / n as f64).sqrt();
        assert!(d < critical, "axis {axis}: KS {d} vs {critical}");
    }

    // Energy distance on a 500-per-group subsample, 999 permutations.
    let (stat, p) = energy_distance_permutation_test(&fwd[..500], &prior[..500], 999, 73);
    assert!(
        p > 0.001,
        "energy distance test rejected: stat {stat}, p {p}"
    );
}

/// JointAction composition is associative with application (one more
/// disentanglement check at the joint level).
#[test]
fn joint_compose_matches_sequential_application() {
    let state = three_blob_assembly(74);
    let mut r = rng::stream(75, 0);
    let mut a1 = JointAction::identity(state.mobile_indices());
    let mut a2 = JointAction::identity(state.mobile_indices());
    for chain in state.mobile_indices() {
        a1.insert(
            chain,
            RigidAction::new(rng::uniform_rotation(&mut r), rng::normal3(&mut r) * 3.0),
        );
        a2.insert(
            chain,
            RigidAction::new(rng::uniform_rotation(&mut r), rng::normal3(&mut r) * 3.0),
        );
    }
    let sequential = state.apply_joint(&a1).apply_joint(&a2);
    let composed = state.apply_joint(&a2.compose_after(&a1));
    let gap = complex_rmsd(&sequential, &composed).unwrap();
    assert!(gap < 1e-9, "composition gap {gap}");
}

/// The finite-difference gradient backend agrees with the analytic one for
/// the full game objective (potential + weighted penalty).
#[test]
fn fd_backend_matches_analytic_on_game_objective() {
    let state = three_blob_assembly(76);
    let contact = ContactPotential::default();
    let penalty = GamePenaltyParams::default();
    struct WithPenalty<'a>(&'a ContactPotential, GamePenaltyParams);
    impl PotentialFn for WithPenalty<'_> {
        fn evaluate(&self, s: &AssemblyState) -> multidock::Result<f64> {
            Ok(self.0.evaluate(s)?
                + self.1.lambda * multidock::potential::distance_penalty(s, &self.1))
        }
        fn riemannian_grad(
            &self,
            s: &AssemblyState,
            c: usize,
        ) -> multidock::Result<multidock::geom::TangentVector> {
            let g = self.0.riemannian_grad(s, c)?;
            let p = multidock::potential::distance_penalty_grad(s, &self.1, c);
            Ok(g.add(&p.scale(self.1.lambda)))
        }
    }
    let combined = WithPenalty(&contact, penalty);
    for chain in state.mobile_indices() {
        let an = combined.riemannian_grad(&state, chain).unwrap();
        let fd = finite_diff_grad(&combined, &state, chain, 1e-4).unwrap();
        let gap = (an.omega - fd.omega).norm() + (an.vel - fd.vel).norm();
        assert!(gap < 1e-5 * an.norm().max(1.0), "chain {chain}: gap {gap}");
    }
}
