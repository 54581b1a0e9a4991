//! Diffusion-side equilibrium sampling.
//!
//! A score field maps a state and a diffusion time to a joint tangent.
//! [`MixtureOracle`] is the exact score of the time-evolved distribution
//! when the data distribution is a finite mixture of point masses: the
//! perturbed density is then a mixture of transition kernels, and the score
//! is the responsibility-weighted sum of per-mode kernel scores (computed
//! in the log domain). [`dsm_loss`] is the denoising-score-matching
//! objective with per-component weighting `1 / E ||kernel score||^2`, so a
//! zero score field scores exactly one per component manifold per chain.
//! [`reverse_diffuse`] integrates the reverse VE-SDE as a geodesic random
//! walk: tangent steps `g(t)^2 s(x_t, t) dt + g(t) sqrt(dt) xi`, rotations
//! retracted through the exponential map about chain centroids.

use nalgebra::Vector3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::game::{cluster_states, StateCluster};
use crate::geom::{kabsch_align, JointAction, JointTangent, RigidAction, Rotation, TangentVector};
use crate::igso3::IGSO3Table;
use crate::rng;
use crate::schedule::{kernel_score, perturb, Component, NoiseSchedule};
use crate::structio::AssemblyState;

/// A tangent-space score field over assemblies. The fixed chain never
/// receives a component.
pub trait ScoreFieldFn: Sync {
    fn score(&self, state: &AssemblyState, t: f64) -> Result<JointTangent>;
}

impl<F> ScoreFieldFn for F
where
    F: Fn(&AssemblyState, f64) -> Result<JointTangent> + Sync,
{
    fn score(&self, state: &AssemblyState, t: f64) -> Result<JointTangent> {
        self(state, t)
    }
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Add diffusion noise on the last step too (default off: the final
    /// update is a deterministic denoise).
    pub noise_on_final_step: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 50,
            n_samples: 40,
            seed: 0,
            noise_on_final_step: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 {
            return Err(Error::InvalidArgument("sampler needs n_steps >= 1".into()));
        }
        if self.n_samples < 1 {
            return Err(Error::InvalidArgument(
                "sampler needs n_samples >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Exact score oracle for a data distribution that is a finite weighted
/// mixture of point masses (the modes).
pub struct MixtureOracle<'a> {
    modes: Vec<AssemblyState>,
    weights: Vec<f64>,
    pub table: &'a IGSO3Table,
    pub sched: NoiseSchedule,
}

/// Rigid action taking a mode's chain to the state's chain under the
/// centroid-pivoted group action. The translation is the centroid offset;
/// the rotation comes from superposing the centered clouds (identity for
/// single-residue chains, where rotation is unobservable).
fn relative_action(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Result<RigidAction> {
    let from_c = crate::geom::centroid(from);
    let to_c = crate::geom::centroid(to);
    let tr = to_c - from_c;
    let rot = match from.len() {
        1 => Rotation::identity(),
        2 => {
            // Minimal rotation aligning the bond vectors; the spin about
            // the bond axis is unobservable.
            let a = (from[1] - from[0]).normalize();
            let b = (to[1] - to[0]).normalize();
            let cross = a.cross(&b);
            let angle = a.dot(&b).clamp(-1.0, 1.0).acos();
            if cross.norm() < 1e-12 {
                Rotation::identity()
            } else {
                Rotation::from_axis_angle(cross.normalize() * angle)
            }
        }
        _ => kabsch_align(from, to)?.rotation,
    };
    Ok(RigidAction::new(rot, tr))
}

fn log_gaussian3(r: &Vector3<f64>, sigma: f64) -> f64 {
    -r.norm_squared() / (2.0 * sigma * sigma)
        - 3.0 * (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
}

impl<'a> MixtureOracle<'a> {
    /// Weights are normalized to sum 1; all modes must share chain layout.
    pub fn new(
        modes: Vec<(AssemblyState, f64)>,
        table: &'a IGSO3Table,
        sched: NoiseSchedule,
    ) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument("mixture needs >= 1 mode".into()));
        }
        let total: f64 = modes.iter().map(|(_, w)| w).sum();
        if !total.is_finite() || total <= 0.0 || modes.iter().any(|(_, w)| *w < 0.0) {
            return Err(Error::InvalidArgument(
                "mixture weights must be nonnegative with positive sum".into(),
            ));
        }
        let first = &modes[0].0;
        for (m, _) in &modes[1..] {
            check_same_layout(first, m)?;
        }
        sched.validate()?;
        Ok(Self {
            weights: modes.iter().map(|(_, w)| w / total).collect(),
            modes: modes.into_iter().map(|(m, _)| m).collect(),
            table,
            sched,
        })
    }

    pub fn modes(&self) -> &[AssemblyState] {
        &self.modes
    }

    /// Per-mode joint log kernel densities of the state and their kernel
    /// scores.
    fn mode_terms(&self, state: &AssemblyState, t: f64) -> Result<(Vec<f64>, Vec<JointTangent>)> {
        check_same_layout(&self.modes[0], state)?;
        let sigma_rot = self.sched.sigma_at(Component::Rotation, t);
        let sigma_tr = self.sched.sigma_at(Component::Translation, t);
        let mut log_terms = Vec::with_capacity(self.modes.len());
        let mut scores = Vec::with_capacity(self.modes.len());
        for (mode, w) in self.modes.iter().zip(&self.weights) {
            let mut log_density = if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
            let mut score = JointTangent::zero(std::iter::empty());
            for chain in state.mobile_indices() {
                let rel = relative_action(
                    &mode.chains()[chain].coords,
                    &state.chains()[chain].coords,
                )?;
                let omega = rel.rot.angle();
                log_density += self.table.log_f(sigma_rot, omega)?;
                log_density += log_gaussian3(&rel.tr, sigma_tr);
                let rot_part = self.table.rotation_score(sigma_rot, &rel.rot)?;
                let vel = -rel.tr / (sigma_tr * sigma_tr);
                score.insert(chain, TangentVector::new(rot_part.omega, vel));
            }
            log_terms.push(log_density);
            scores.push(score);
        }
        Ok((log_terms, scores))
    }

    /// Log density of the perturbed mixture at `state` (with respect to
    /// the product of Haar and Lebesgue measures on the mobile actions).
    pub fn log_density(&self, state: &AssemblyState, t: f64) -> Result<f64> {
        let (log_terms, _) = self.mode_terms(state, t)?;
        Ok(log_sum_exp(&log_terms))
    }

    /// Posterior mode responsibilities at `state`.
    pub fn responsibilities(&self, state: &AssemblyState, t: f64) -> Result<Vec<f64>> {
        let (log_terms, _) = self.mode_terms(state, t)?;
        let lse = log_sum_exp(&log_terms);
        Ok(log_terms.iter().map(|&l| (l - lse).exp()).collect())
    }
}

/// Recovers the joint action mapping `from` to `to` chain-wise under the
/// centroid-pivoted group action (rotations by superposing the centered
/// clouds). Used to express sampled states as actions relative to a base.
pub fn relative_joint_action(from: &AssemblyState, to: &AssemblyState) -> Result<JointAction> {
    check_same_layout(from, to)?;
    let mut action = from.identity_action();
    for chain in from.mobile_indices() {
        action.insert(
            chain,
            relative_action(
                &from.chains()[chain].coords,
                &to.chains()[chain].coords,
            )?,
        );
    }
    Ok(action)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn check_same_layout(a: &AssemblyState, b: &AssemblyState) -> Result<()> {
    if a.chains().len() != b.chains().len()
        || a.fixed_index() != b.fixed_index()
        || a.chains()
            .iter()
            .zip(b.chains())
            .any(|(x, y)| x.coords.len() != y.coords.len())
    {
        return Err(Error::ChainMismatch(
            "mixture modes and query state must share chain sizes and fixed chain".into(),
        ));
    }
    Ok(())
}

impl ScoreFieldFn for MixtureOracle<'_> {
    /// `score = sum_k gamma_k * kernel_score(relative action to mode k)`,
    /// the exact gradient of the log perturbed density.
    fn score(&self, state: &AssemblyState, t: f64) -> Result<JointTangent> {
        let (log_terms, scores) = self.mode_terms(state, t)?;
        let lse = log_sum_exp(&log_terms);
        let mut out = JointTangent::zero(state.mobile_indices());
        for (log_term, mode_score) in log_terms.iter().zip(&scores) {
            let gamma = (log_term - lse).exp();
            if gamma == 0.0 {
                continue;
            }
            for (chain, tv) in mode_score.iter() {
                let acc = out.get(chain).unwrap().add(&tv.scale(gamma));
                out.insert(chain, acc);
            }
        }
        Ok(out)
    }
}

/// Denoising score matching: Monte-Carlo mean over every `(x0, t)` in
/// `data x t_samples` (one forward perturbation each) of the weighted
/// squared tangent distance between the field and the exact kernel score.
/// Weights are `1 / E||kernel score||^2` per component at that sigma, i.e.
/// `1 / E[dlogf^2]` rotationally and `sigma_tr^2 / 3` translationally.
pub fn dsm_loss(
    s: &dyn ScoreFieldFn,
    data: &[AssemblyState],
    t_samples: &[f64],
    table: &IGSO3Table,
    sched: &NoiseSchedule,
    rng_stream: &mut impl Rng,
) -> Result<f64> {
    if data.is_empty() || t_samples.is_empty() {
        return Err(Error::InvalidArgument(
            "dsm_loss needs nonempty data and t_samples".into(),
        ));
    }
    let mut total = 0.0;
    let mut draws = 0usize;
    for &t in t_samples {
        let sigma_rot = sched.sigma_at(Component::Rotation, t);
        let sigma_tr = sched.sigma_at(Component::Translation, t);
        let w_rot = 1.0 / table.expected_score_sq(sigma_rot)?;
        let w_tr = sigma_tr * sigma_tr / 3.0;
        for x0 in data {
            let (xt, applied) = perturb(x0, t, table, sched, rng_stream)?;
            let target = kernel_score(&applied, t, table, sched)?;
            let pred = s.score(&xt, t)?;
            for (chain, target_tv) in target.iter() {
                let pred_tv = pred.get(chain).cloned().unwrap_or_else(TangentVector::zero);
                total += w_rot * (pred_tv.omega - target_tv.omega).norm_squared();
                total += w_tr * (pred_tv.vel - target_tv.vel).norm_squared();
            }
            draws += 1;
        }
    }
    Ok(total / draws as f64)
}

/// Integrates the reverse VE-SDE from `t = 1` down to `t = 1/n_steps` on a
/// uniform grid. With `from_prior` the mobile chains are first scattered:
/// Haar-uniform rotations and `N(0, sigma_max_tr^2)` translations about the
/// base placement. Returns all states including the initial one.
pub fn reverse_diffuse(
    s: &dyn ScoreFieldFn,
    base: &AssemblyState,
    from_prior: bool,
    cfg: &SamplerConfig,
    sched: &NoiseSchedule,
    rng_stream: &mut impl Rng,
) -> Result<Vec<AssemblyState>> {
    cfg.validate()?;
    sched.validate()?;
    let mut state = if from_prior {
        let mut action = base.identity_action();
        for chain in base.mobile_indices() {
            let rot = rng::uniform_rotation(rng_stream);
            let tr = rng::normal3(rng_stream) * sched.sigma_max_tr;
            action.insert(chain, RigidAction::new(rot, tr));
        }
        base.apply_joint(&action)
    } else {
        base.clone()
    };

    let n = cfg.n_steps;
    let dt = 1.0 / n as f64;
    let mut trajectory = Vec::with_capacity(n + 1);
    trajectory.push(state.clone());
    for k in 0..n {
        let t = (n - k) as f64 / n as f64;
        let score = s.score(&state, t)?;
        if !score.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite score at step {k} (t = {t})"
            )));
        }
        let g2_rot = sched.g_squared(Component::Rotation, t);
        let g2_tr = sched.g_squared(Component::Translation, t);
        let add_noise = cfg.noise_on_final_step || k + 1 < n;
        let mut step = state.identity_action();
        for chain in state.mobile_indices() {
            let tv = score.get(chain).cloned().unwrap_or_else(TangentVector::zero);
            let mut d_omega = tv.omega * (g2_rot * dt);
            let mut d_vel = tv.vel * (g2_tr * dt);
            if add_noise {
                d_omega += rng::normal3(rng_stream) * (g2_rot * dt).sqrt();
                d_vel += rng::normal3(rng_stream) * (g2_tr * dt).sqrt();
            }
            step.insert(
                chain,
                RigidAction::new(Rotation::from_axis_angle(d_omega), d_vel),
            );
        }
        state = state.apply_joint(&step);
        trajectory.push(state.clone());
    }
    Ok(trajectory)
}

/// A batch of reverse diffusions plus a cluster report over the finals.
#[derive(Debug)]
pub struct SampleOutcome {
    pub finals: Vec<AssemblyState>,
    pub clusters: Vec<StateCluster>,
    pub failures: Vec<(usize, Error)>,
}

/// Runs `cfg.n_samples` independent reverse diffusions from the prior
/// (sample `i` on RNG stream `i`) and clusters the finals by complex RMSD.
/// Per-sample failures are reported; the batch continues.
pub fn sample_equilibria(
    s: &dyn ScoreFieldFn,
    base: &AssemblyState,
    cfg: &SamplerConfig,
    sched: &NoiseSchedule,
    rmsd_radius: f64,
) -> Result<SampleOutcome> {
    cfg.validate()?;
    let results = exec::map_indexed(cfg.n_samples, |i| {
        let mut stream = rng::stream(cfg.seed, i as u64);
        reverse_diffuse(s, base, true, cfg, sched, &mut stream)
            .map(|traj| traj.into_iter().last().unwrap())
    });
    let mut finals = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => finals.push(f),
            Err(e) => failures.push((i, e)),
        }
    }
    if finals.is_empty() {
        return Err(Error::Numerical("every sample failed".into()));
    }
    let clusters = cluster_states(&finals, rmsd_radius)?;
    Ok(SampleOutcome {
        finals,
        clusters,
        failures,
    })
}
