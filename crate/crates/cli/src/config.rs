//! Declarative run configuration, format version "v1".
//!
//! One TOML file drives every subcommand; unknown keys are rejected so
//! typos surface instead of silently using defaults. The seed is mandatory
//! (from the file, `MULTIDOCK_SEED`, or `--seed`).

use std::path::{Path, PathBuf};

use multidock::game::{GameConfig, InitNoise, UpdateMode};
use multidock::potential::{ContactPotential, GamePenaltyParams, GradBackend, OptParams};
use multidock::sampler::SamplerConfig;
use multidock::schedule::NoiseSchedule;
use multidock::structio::RotMode;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub input: InputSection,
    #[serde(default)]
    pub potential: PotentialSection,
    #[serde(default)]
    pub decoys: DecoySection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub igso3: Igso3Section,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    #[serde(default)]
    pub assembly: Option<PathBuf>,
    #[serde(default)]
    pub pdb: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    /// "contact" or "surrogate".
    pub kind: String,
    pub surrogate_file: Option<PathBuf>,
    pub contact: ContactSection,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            kind: "contact".into(),
            surrogate_file: None,
            contact: ContactSection::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactSection {
    pub well_depth: f64,
    pub contact_radius: f64,
    pub repulsion_radius: f64,
}

impl Default for ContactSection {
    fn default() -> Self {
        let c = ContactPotential::default();
        Self {
            well_depth: c.well_depth,
            contact_radius: c.contact_radius,
            repulsion_radius: c.repulsion_radius,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoySection {
    pub count: usize,
    pub tr_scale: f64,
    /// "uniform" or "igso3".
    pub rot_mode: String,
    pub rot_sigma: f64,
    /// Decoy file consumed by `train-potential` / `score`.
    pub file: Option<PathBuf>,
}

impl Default for DecoySection {
    fn default() -> Self {
        Self {
            count: 20,
            tr_scale: 5.0,
            rot_mode: "uniform".into(),
            rot_sigma: 0.5,
            file: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySection {
    pub lambda: f64,
    pub d_threshold: f64,
}

impl Default for PenaltySection {
    fn default() -> Self {
        let p = GamePenaltyParams::default();
        Self {
            lambda: p.lambda,
            d_threshold: p.d_threshold,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub sigma_min_tr: f64,
    pub sigma_max_tr: f64,
    pub sigma_min_rot: f64,
    pub sigma_max_rot: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = NoiseSchedule::default();
        Self {
            sigma_min_tr: s.sigma_min_tr,
            sigma_max_tr: s.sigma_max_tr,
            sigma_min_rot: s.sigma_min_rot,
            sigma_max_rot: s.sigma_max_rot,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSection {
    pub steps: usize,
    pub eta0: f64,
    pub eta_exponent: f64,
    /// "simultaneous" or "round-robin".
    pub update_mode: String,
    /// "analytic" or "finite-diff".
    pub grad_backend: String,
    pub convergence_tol: f64,
    pub backtracking: bool,
    pub n_games: usize,
    pub cluster_radius: f64,
    pub init_noise: InitNoiseSection,
}

impl Default for GameSection {
    fn default() -> Self {
        let g = GameConfig::default();
        Self {
            steps: g.steps,
            eta0: g.eta0,
            eta_exponent: g.eta_exponent,
            update_mode: "simultaneous".into(),
            grad_backend: "analytic".into(),
            convergence_tol: g.convergence_tol,
            backtracking: g.backtracking,
            n_games: 20,
            cluster_radius: 2.0,
            init_noise: InitNoiseSection::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitNoiseSection {
    pub tr_scale: f64,
    pub rot_mode: String,
    pub rot_sigma: f64,
}

impl Default for InitNoiseSection {
    fn default() -> Self {
        Self {
            tr_scale: 5.0,
            rot_mode: "uniform".into(),
            rot_sigma: 0.5,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub n_steps: usize,
    pub n_samples: usize,
    pub noise_on_final_step: bool,
    pub cluster_radius: f64,
    /// Additional oracle mode assembly files; the input assembly is always
    /// the first mode.
    pub modes: Vec<PathBuf>,
    /// Weights for [input, modes...]; uniform when empty.
    pub mode_weights: Vec<f64>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            n_steps: s.n_steps,
            n_samples: s.n_samples,
            noise_on_final_step: s.noise_on_final_step,
            cluster_radius: 2.0,
            modes: Vec::new(),
            mode_weights: Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub iters: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub batch_size: Option<usize>,
    pub n_bins: usize,
    pub d_max: f64,
    pub restype_pairs: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let o = OptParams::default();
        Self {
            iters: o.iters,
            learning_rate: o.learning_rate,
            holdout_fraction: o.holdout_fraction,
            batch_size: o.batch_size,
            n_bins: multidock::potential::DEFAULT_N_BINS,
            d_max: multidock::potential::DEFAULT_D_MAX,
            restype_pairs: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Igso3Section {
    pub n_sigma: usize,
    pub omega_resolution: usize,
    pub l_max: usize,
    pub cache: Option<PathBuf>,
}

impl Default for Igso3Section {
    fn default() -> Self {
        Self {
            n_sigma: 48,
            omega_resolution: multidock::igso3::DEFAULT_OMEGA_RESOLUTION,
            l_max: multidock::igso3::DEFAULT_L_MAX,
            cache: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| config_err(format!("config {}: {e}", path.display())))?;
        if cfg.version != "v1" {
            return Err(config_err(format!(
                "config version '{}' is not 'v1'",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Validates every referenced file and enum before any side effect.
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.input.assembly, &self.input.pdb) {
            (None, None) => {
                return Err(config_err("input needs either 'assembly' or 'pdb'"))
            }
            (Some(_), Some(_)) => {
                return Err(config_err("input has both 'assembly' and 'pdb'; pick one"))
            }
            _ => {}
        }
        for path in [
            self.input.assembly.as_ref(),
            self.input.pdb.as_ref(),
            self.potential.surrogate_file.as_ref(),
            self.decoys.file.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                return Err(config_err(format!(
                    "referenced file does not exist: {}",
                    path.display()
                )));
            }
        }
        for m in &self.sampler.modes {
            if !m.exists() {
                return Err(config_err(format!(
                    "sampler mode file does not exist: {}",
                    m.display()
                )));
            }
        }
        if !matches!(self.potential.kind.as_str(), "contact" | "surrogate") {
            return Err(config_err(format!(
                "potential.kind '{}' is not 'contact' or 'surrogate'",
                self.potential.kind
            )));
        }
        if self.potential.kind == "surrogate" && self.potential.surrogate_file.is_none() {
            return Err(config_err(
                "potential.kind = 'surrogate' needs potential.surrogate_file",
            ));
        }
        for (mode, what) in [
            (&self.decoys.rot_mode, "decoys.rot_mode"),
            (&self.game.init_noise.rot_mode, "game.init_noise.rot_mode"),
        ] {
            if !matches!(mode.as_str(), "uniform" | "igso3") {
                return Err(config_err(format!(
                    "{what} '{mode}' is not 'uniform' or 'igso3'"
                )));
            }
        }
        if !matches!(self.game.update_mode.as_str(), "simultaneous" | "round-robin") {
            return Err(config_err(format!(
                "game.update_mode '{}' is not 'simultaneous' or 'round-robin'",
                self.game.update_mode
            )));
        }
        if !matches!(self.game.grad_backend.as_str(), "analytic" | "finite-diff") {
            return Err(config_err(format!(
                "game.grad_backend '{}' is not 'analytic' or 'finite-diff'",
                self.game.grad_backend
            )));
        }
        if !self.sampler.mode_weights.is_empty()
            && self.sampler.mode_weights.len() != self.sampler.modes.len() + 1
        {
            return Err(config_err(format!(
                "sampler.mode_weights has {} entries for {} modes (input assembly included)",
                self.sampler.mode_weights.len(),
                self.sampler.modes.len() + 1
            )));
        }
        Ok(())
    }

    pub fn noise_schedule(&self) -> NoiseSchedule {
        NoiseSchedule {
            sigma_min_tr: self.schedule.sigma_min_tr,
            sigma_max_tr: self.schedule.sigma_max_tr,
            sigma_min_rot: self.schedule.sigma_min_rot,
            sigma_max_rot: self.schedule.sigma_max_rot,
        }
    }

    pub fn penalty_params(&self) -> GamePenaltyParams {
        GamePenaltyParams {
            lambda: self.penalty.lambda,
            d_threshold: self.penalty.d_threshold,
        }
    }

    pub fn game_config(&self, seed: u64) -> GameConfig {
        GameConfig {
            steps: self.game.steps,
            eta0: self.game.eta0,
            eta_exponent: self.game.eta_exponent,
            penalty: self.penalty_params(),
            update_mode: if self.game.update_mode == "round-robin" {
                UpdateMode::RoundRobin
            } else {
                UpdateMode::Simultaneous
            },
            grad_backend: if self.game.grad_backend == "finite-diff" {
                GradBackend::FiniteDiff
            } else {
                GradBackend::Analytic
            },
            convergence_tol: self.game.convergence_tol,
            backtracking: self.game.backtracking,
            seed,
        }
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_steps: self.sampler.n_steps,
            n_samples: self.sampler.n_samples,
            seed,
            noise_on_final_step: self.sampler.noise_on_final_step,
        }
    }

    pub fn opt_params(&self, seed: u64) -> OptParams {
        OptParams {
            iters: self.train.iters,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            holdout_fraction: self.train.holdout_fraction,
            seed,
        }
    }

    pub fn decoy_rot_mode(&self) -> RotMode {
        if self.decoys.rot_mode == "igso3" {
            RotMode::IgSo3(self.decoys.rot_sigma)
        } else {
            RotMode::Uniform
        }
    }

    pub fn init_noise(&self) -> InitNoise {
        InitNoise {
            tr_scale: self.game.init_noise.tr_scale,
            rot_mode: if self.game.init_noise.rot_mode == "igso3" {
                RotMode::IgSo3(self.game.init_noise.rot_sigma)
            } else {
                RotMode::Uniform
            },
        }
    }

    pub fn contact_potential(&self) -> Result<ContactPotential, CliError> {
        ContactPotential::new(
            self.potential.contact.well_depth,
            self.potential.contact.contact_radius,
            self.potential.contact.repulsion_radius,
        )
        .map_err(CliError::from)
    }
}
