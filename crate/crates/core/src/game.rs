//! Equilibrium computation by gradient play.
//!
//! All mobile chains descend the shared objective
//! `potential + lambda * distance_penalty`, either simultaneously (all
//! tangents evaluated at the current state, then applied together) or
//! round-robin (chain by chain in index order). Rotation steps retract via
//! the exponential map about each chain's current centroid. The per-round
//! step is `eta0 * (round + 1)^(-eta_exponent)`; with backtracking enabled
//! the step is halved until the objective does not increase, which makes
//! the recorded objective trace nonincreasing.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::geom::{complex_rmsd, JointAction, RigidAction, Rotation, TangentVector};
use crate::igso3::IGSO3Table;
use crate::potential::{
    distance_penalty, distance_penalty_grad, finite_diff_grad, GamePenaltyParams, GradBackend,
    PotentialFn, DEFAULT_FD_STEP,
};
use crate::structio::{generate_decoys, AssemblyState, RotMode};

/// Update order of the mobile chains within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    Simultaneous,
    RoundRobin,
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    pub steps: usize,
    pub eta0: f64,
    pub eta_exponent: f64,
    pub penalty: GamePenaltyParams,
    pub update_mode: UpdateMode,
    pub grad_backend: GradBackend,
    /// Early stop once every chain's combined tangent norm is below this.
    pub convergence_tol: f64,
    /// Halve the step until the objective does not increase (max 10
    /// halvings per move). Off reproduces the plain schedule.
    pub backtracking: bool,
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            steps: 60,
            eta0: 1.0,
            eta_exponent: 0.5,
            penalty: GamePenaltyParams::default(),
            update_mode: UpdateMode::Simultaneous,
            grad_backend: GradBackend::Analytic,
            convergence_tol: 1e-4,
            backtracking: true,
            seed: 0,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::InvalidArgument("game needs steps >= 1".into()));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta0 must be positive, got {}",
                self.eta0
            )));
        }
        self.penalty.validate()
    }

    fn eta(&self, round: usize) -> f64 {
        // Schedule evaluated at round + 1 to avoid the t^(-exp) pole.
        self.eta0 * ((round + 1) as f64).powf(-self.eta_exponent)
    }
}

/// Potential and weighted-penalty values at one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundEnergy {
    pub potential: f64,
    /// Already weighted by lambda; the objective is `potential + penalty`.
    pub penalty: f64,
}

impl RoundEnergy {
    pub fn objective(&self) -> f64 {
        self.potential + self.penalty
    }
}

/// One game's history. `cumulative[k]` maps the *initial* state to the
/// state after round `k` (entry 0 is the identity); `init_action` maps the
/// enumeration base to the initial state, so composing the two expresses
/// any round relative to the base assembly.
#[derive(Debug, Clone)]
pub struct GameTrajectory {
    pub initial: AssemblyState,
    pub init_action: JointAction,
    pub cumulative: Vec<JointAction>,
    pub energies: Vec<RoundEnergy>,
    pub converged: bool,
    pub rounds_used: usize,
}

impl GameTrajectory {
    pub fn state_at(&self, round: usize) -> AssemblyState {
        self.initial.apply_joint(&self.cumulative[round])
    }

    pub fn final_state(&self) -> AssemblyState {
        self.state_at(self.cumulative.len() - 1)
    }

    pub fn final_energy(&self) -> RoundEnergy {
        *self.energies.last().unwrap()
    }
}

struct Objective<'a> {
    f: &'a dyn PotentialFn,
    penalty: GamePenaltyParams,
}

impl Objective<'_> {
    fn energy(&self, state: &AssemblyState) -> Result<RoundEnergy> {
        Ok(RoundEnergy {
            potential: self.f.evaluate(state)?,
            penalty: self.penalty.lambda * distance_penalty(state, &self.penalty),
        })
    }

    fn grad(
        &self,
        state: &AssemblyState,
        chain: usize,
        backend: GradBackend,
    ) -> Result<TangentVector> {
        match backend {
            GradBackend::Analytic => {
                let g = self.f.riemannian_grad(state, chain)?;
                let p = distance_penalty_grad(state, &self.penalty, chain);
                Ok(g.add(&p.scale(self.penalty.lambda)))
            }
            GradBackend::FiniteDiff => {
                struct Combined<'b>(&'b Objective<'b>);
                impl PotentialFn for Combined<'_> {
                    fn evaluate(&self, s: &AssemblyState) -> Result<f64> {
                        Ok(self.0.energy(s)?.objective())
                    }
                    fn riemannian_grad(
                        &self,
                        _: &AssemblyState,
                        _: usize,
                    ) -> Result<TangentVector> {
                        unreachable!("finite-difference wrapper")
                    }
                }
                finite_diff_grad(&Combined(self), state, chain, DEFAULT_FD_STEP)
            }
        }
    }
}

fn descent_action(tangent: &TangentVector, eta: f64) -> RigidAction {
    RigidAction::new(
        Rotation::from_axis_angle(tangent.omega * -eta),
        tangent.vel * -eta,
    )
}

/// Runs one game from `init` (fixed chain at the origin). Returns the full
/// trajectory; gradients that go non-finite abort with a diagnostic.
pub fn play_game(
    init: &AssemblyState,
    f: &dyn PotentialFn,
    cfg: &GameConfig,
) -> Result<GameTrajectory> {
    cfg.validate()?;
    let objective = Objective {
        f,
        penalty: cfg.penalty,
    };
    let mobile: Vec<usize> = init.mobile_indices().collect();

    let mut state = init.clone();
    let mut cumulative = vec![init.identity_action()];
    let mut energies = vec![objective.energy(&state)?];
    let mut converged = false;
    let mut rounds_used = 0;

    'rounds: for round in 0..cfg.steps {
        let eta_round = cfg.eta(round);

        // Gradients at the round's starting state (simultaneous mode
        // freezes them here; round-robin refreshes per chain below).
        let mut tangents = Vec::with_capacity(mobile.len());
        for &chain in &mobile {
            let t = objective.grad(&state, chain, cfg.grad_backend)?;
            if !(t.omega.iter().all(|x| x.is_finite()) && t.vel.iter().all(|x| x.is_finite())) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient at round {round}, chain {chain}"
                )));
            }
            tangents.push(t);
        }
        if tangents.iter().map(TangentVector::norm).fold(0.0, f64::max) < cfg.convergence_tol {
            converged = true;
            break;
        }

        let current = energies.last().unwrap().objective();
        match cfg.update_mode {
            UpdateMode::Simultaneous => {
                let mut eta = eta_round;
                let mut halvings = 0;
                loop {
                    let mut step = JointAction::identity(mobile.iter().copied());
                    for (&chain, t) in mobile.iter().zip(&tangents) {
                        step.insert(chain, descent_action(t, eta));
                    }
                    let trial = state.apply_joint(&step);
                    let trial_energy = objective.energy(&trial)?;
                    if !cfg.backtracking || trial_energy.objective() <= current {
                        state = trial;
                        cumulative.push(step.compose_after(cumulative.last().unwrap()));
                        energies.push(trial_energy);
                        rounds_used = round + 1;
                        break;
                    }
                    if halvings >= 10 {
                        // No decrease at 2^-10 of the scheduled step:
                        // treat as stagnation and stop without moving.
                        break 'rounds;
                    }
                    eta *= 0.5;
                    halvings += 1;
                }
            }
            UpdateMode::RoundRobin => {
                let mut step = JointAction::identity(mobile.iter().copied());
                let mut working = energies.last().unwrap().objective();
                for &chain in &mobile {
                    let t = objective.grad(&state, chain, cfg.grad_backend)?;
                    let mut eta = eta_round;
                    let mut halvings = 0;
                    loop {
                        let mut single = state.identity_action();
                        let act = descent_action(&t, eta);
                        single.insert(chain, act.clone());
                        let trial = state.apply_joint(&single);
                        let trial_obj = objective.energy(&trial)?.objective();
                        if !cfg.backtracking || trial_obj <= working {
                            state = trial;
                            working = trial_obj;
                            step.insert(chain, act);
                            break;
                        }
                        if halvings >= 10 {
                            break; // this chain stays put this round
                        }
                        eta *= 0.5;
                        halvings += 1;
                    }
                }
                cumulative.push(step.compose_after(cumulative.last().unwrap()));
                energies.push(objective.energy(&state)?);
                rounds_used = round + 1;
            }
        }
    }

    Ok(GameTrajectory {
        initial: init.clone(),
        init_action: init.identity_action(),
        cumulative,
        energies,
        converged,
        rounds_used,
    })
}

/// Random initial placement law for equilibrium enumeration.
#[derive(Debug, Clone, Copy)]
pub struct InitNoise {
    pub tr_scale: f64,
    pub rot_mode: RotMode,
}

/// Result of a batch of games; failed games are reported, not fatal.
#[derive(Debug)]
pub struct EnumerationOutcome {
    /// Successful trajectories, sorted by final potential ascending.
    pub trajectories: Vec<GameTrajectory>,
    pub failures: Vec<(usize, Error)>,
}

/// Plays `n_games` independent games from randomized initial placements
/// (decoy machinery, per-game RNG streams under `cfg.seed`). With
/// `init_noise = None` every game starts from `base` itself.
pub fn enumerate_equilibria(
    base: &AssemblyState,
    f: &dyn PotentialFn,
    cfg: &GameConfig,
    n_games: usize,
    init_noise: Option<InitNoise>,
    table: Option<&IGSO3Table>,
) -> Result<EnumerationOutcome> {
    if n_games < 1 {
        return Err(Error::InvalidArgument("n_games must be >= 1".into()));
    }
    cfg.validate()?;
    let init_actions: Vec<JointAction> = match init_noise {
        Some(noise) => {
            generate_decoys(base, n_games, noise.tr_scale, noise.rot_mode, table, cfg.seed)?
                .decoys
        }
        None => (0..n_games).map(|_| base.identity_action()).collect(),
    };

    let results = exec::map_indexed(n_games, |g| {
        let init = base.apply_joint(&init_actions[g]).normalized();
        play_game(&init, f, cfg).map(|mut traj| {
            traj.init_action = init_actions[g].clone();
            traj
        })
    });

    let mut trajectories = Vec::new();
    let mut failures = Vec::new();
    for (g, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => trajectories.push(t),
            Err(e) => failures.push((g, e)),
        }
    }
    trajectories.sort_by(|a, b| {
        a.final_energy()
            .potential
            .partial_cmp(&b.final_energy().potential)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(EnumerationOutcome {
        trajectories,
        failures,
    })
}

/// A group of near-identical final states.
#[derive(Debug, Clone)]
pub struct EquilibriumCluster {
    pub representative: AssemblyState,
    /// Final potential of the representative (the cluster's best member).
    pub potential: f64,
    pub count: usize,
}

/// A cluster over a plain list of states: the index of the first member
/// (the representative under the caller's ordering) and the member count.
#[derive(Debug, Clone, Copy)]
pub struct StateCluster {
    pub representative: usize,
    pub count: usize,
}

/// Greedy complex-RMSD clustering in the given order: each state joins the
/// first cluster whose representative is within `rmsd_radius`, otherwise it
/// founds a new one. An infinite radius collapses everything into one
/// cluster.
pub fn cluster_states(states: &[AssemblyState], rmsd_radius: f64) -> Result<Vec<StateCluster>> {
    if states.is_empty() {
        return Err(Error::InvalidArgument(
            "clustering needs at least one state".into(),
        ));
    }
    let mut clusters: Vec<StateCluster> = Vec::new();
    for (idx, state) in states.iter().enumerate() {
        let mut joined = false;
        for cluster in &mut clusters {
            if complex_rmsd(state, &states[cluster.representative])? <= rmsd_radius {
                cluster.count += 1;
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push(StateCluster {
                representative: idx,
                count: 1,
            });
        }
    }
    Ok(clusters)
}

/// Greedy clustering of final states by complex RMSD: members are visited
/// best-energy first, so each cluster's representative is its lowest-energy
/// member.
pub fn cluster_equilibria(
    trajectories: &[GameTrajectory],
    rmsd_radius: f64,
) -> Result<Vec<EquilibriumCluster>> {
    if trajectories.is_empty() {
        return Err(Error::InvalidArgument(
            "cluster_equilibria needs at least one trajectory".into(),
        ));
    }
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    order.sort_by(|&a, &b| {
        trajectories[a]
            .final_energy()
            .potential
            .partial_cmp(&trajectories[b].final_energy().potential)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let ordered: Vec<AssemblyState> = order.iter().map(|&i| trajectories[i].final_state()).collect();
    Ok(cluster_states(&ordered, rmsd_radius)?
        .into_iter()
        .map(|c| EquilibriumCluster {
            representative: ordered[c.representative].clone(),
            potential: trajectories[order[c.representative]].final_energy().potential,
            count: c.count,
        })
        .collect())
}

#[derive(Serialize)]
struct TrajActionDoc {
    chain: String,
    quat: [f64; 4],
    tr: [f64; 3],
}

#[derive(Serialize)]
struct TrajLine {
    round: usize,
    actions: Vec<TrajActionDoc>,
    potential: f64,
    penalty: f64,
}

/// Writes one round per line: round index, per-chain cumulative action
/// relative to the enumeration base (quaternion + translation), and the
/// potential / weighted-penalty values.
pub fn write_trajectory_jsonl(traj: &GameTrajectory, mut w: impl Write) -> Result<()> {
    let err = |e: std::io::Error| Error::io("<trajectory stream>", e);
    for (round, action) in traj.cumulative.iter().enumerate() {
        let from_base = action.compose_after(&traj.init_action);
        let line = TrajLine {
            round,
            actions: from_base
                .iter()
                .map(|(chain, a)| TrajActionDoc {
                    chain: traj.initial.chains()[chain].id.clone(),
                    quat: a.rot.to_quaternion(),
                    tr: [a.tr.x, a.tr.y, a.tr.z],
                })
                .collect(),
            potential: traj.energies[round].potential,
            penalty: traj.energies[round].penalty,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Json {
            path: "<trajectory stream>".into(),
            detail: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(err)?;
    }
    Ok(())
}
