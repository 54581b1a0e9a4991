//! Subcommand implementations.
//!
//! Every command validates its configuration before touching the output
//! directory, and every artifact is written to a temp file in the target
//! directory and atomically renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use multidock::game::{cluster_equilibria, enumerate_equilibria, write_trajectory_jsonl};
use multidock::geom::{complex_rmsd, tm_score, JointAction};
use multidock::igso3::IGSO3Table;
use multidock::potential::{
    surrogate_vs_truth_report, train_surrogate, PotentialFn, SurrogatePotential,
};
use multidock::sampler::{relative_joint_action, reverse_diffuse, MixtureOracle};
use multidock::structio::{
    generate_decoys, load_assembly_json, load_pdb_calpha, read_decoys_jsonl, save_assembly_json,
    score_decoys, write_decoys_jsonl, AssemblyState,
};
use multidock::{exec, rng};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Writes bytes atomically: temp file in the same directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Config(format!("cannot create temp file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::Config(format!("write failed: {e}")))?;
    tmp.persist(path)
        .map_err(|e| CliError::Config(format!("cannot persist {}: {e}", path.display())))?;
    Ok(())
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output dir {}: {e}", dir.display())))
}

fn load_input(cfg: &RunConfig) -> Result<AssemblyState, CliError> {
    let state = match (&cfg.input.assembly, &cfg.input.pdb) {
        (Some(p), None) => load_assembly_json(p)?,
        (None, Some(p)) => load_pdb_calpha(p)?,
        _ => unreachable!("validated"),
    };
    Ok(state)
}

fn select_potential(cfg: &RunConfig) -> Result<Box<dyn PotentialFn>, CliError> {
    match cfg.potential.kind.as_str() {
        "surrogate" => {
            let path = cfg.potential.surrogate_file.as_ref().unwrap();
            Ok(Box::new(SurrogatePotential::load_json(path)?))
        }
        _ => Ok(Box::new(cfg.contact_potential()?)),
    }
}

fn build_table(cfg: &RunConfig) -> Result<IGSO3Table, CliError> {
    let sched = cfg.noise_schedule();
    // The grid must cover both the schedule's rotation range and any
    // igso3-mode decoy sigma requested in the config.
    let mut lo = sched.sigma_min_rot;
    let mut hi = sched.sigma_max_rot;
    for sigma in [cfg.decoys.rot_sigma, cfg.game.init_noise.rot_sigma] {
        lo = lo.min(sigma);
        hi = hi.max(sigma);
    }
    let grid = IGSO3Table::default_sigma_grid(lo, hi, cfg.igso3.n_sigma);
    IGSO3Table::load_or_build(
        &grid,
        cfg.igso3.omega_resolution,
        cfg.igso3.l_max,
        cfg.igso3.cache.as_deref(),
    )
    .map_err(CliError::from)
}

fn table_if_needed(cfg: &RunConfig, modes: &[&str]) -> Result<Option<IGSO3Table>, CliError> {
    if modes.contains(&"igso3") {
        Ok(Some(build_table(cfg)?))
    } else {
        Ok(None)
    }
}

/// `decoys`: generate and score decoys, write one JSON line each.
pub fn cmd_decoys(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let base = load_input(cfg)?;
    let potential = select_potential(cfg)?;
    let table = table_if_needed(cfg, &[cfg.decoys.rot_mode.as_str()])?;
    let ds = generate_decoys(
        &base,
        cfg.decoys.count,
        cfg.decoys.tr_scale,
        cfg.decoy_rot_mode(),
        table.as_ref(),
        seed,
    )?;
    let ds = score_decoys(ds, potential.as_ref())?;
    let tmp = out.join("decoys.jsonl.tmp-writer");
    write_decoys_jsonl(&ds, &tmp)?;
    let buf = std::fs::read(&tmp).map_err(|e| CliError::Config(format!("reread: {e}")))?;
    let _ = std::fs::remove_file(&tmp);
    write_atomic(&out.join("decoys.jsonl"), &buf)?;
    let base_energy = potential.evaluate(&base)?;
    println!(
        "wrote {} decoys to {}; base energy {base_energy:.6}",
        ds.len(),
        out.join("decoys.jsonl").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReportDoc {
    n_train_pairs: usize,
    n_holdout_pairs: usize,
    train_accuracy: f64,
    holdout_accuracy: f64,
    final_loss: f64,
    pearson_r_vs_truth: Option<f64>,
    sign_agreement_vs_truth: Option<f64>,
}

/// `train-potential`: fit the surrogate on a scored decoy file.
pub fn cmd_train_potential(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    let decoy_file = cfg
        .decoys
        .file
        .clone()
        .ok_or_else(|| CliError::Config("train-potential needs decoys.file".into()))?;
    ensure_out_dir(out)?;
    let base = load_input(cfg)?;
    let ds = read_decoys_jsonl(&decoy_file, &base)?;
    if !ds.all_scored() {
        return Err(CliError::Config(format!(
            "decoy file {} has unscored entries; run `score` or `decoys` first",
            decoy_file.display()
        )));
    }
    let init = SurrogatePotential::new(cfg.train.n_bins, cfg.train.d_max, cfg.train.restype_pairs)?;
    let (model, report) = train_surrogate(std::slice::from_ref(&ds), init, &cfg.opt_params(seed))?;

    // Optional agreement report against the configured ground truth.
    let truth = cfg.contact_potential()?;
    let states: Vec<AssemblyState> = (0..ds.len()).map(|i| ds.realized(i)).collect();
    let pairs: Vec<(&AssemblyState, &AssemblyState)> =
        states.iter().zip(states.iter().skip(1)).collect();
    let agreement = surrogate_vs_truth_report(&model, &truth, &pairs).ok();

    let mut csv = String::from("iter,loss\n");
    for (i, l) in report.loss_curve.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write_atomic(&out.join("loss_curve.csv"), csv.as_bytes())?;

    let doc = TrainReportDoc {
        n_train_pairs: report.n_train_pairs,
        n_holdout_pairs: report.n_holdout_pairs,
        train_accuracy: report.train_accuracy,
        holdout_accuracy: report.holdout_accuracy,
        final_loss: *report.loss_curve.last().unwrap(),
        pearson_r_vs_truth: agreement.as_ref().map(|a| a.pearson_r),
        sign_agreement_vs_truth: agreement.as_ref().map(|a| a.sign_agreement),
    };
    write_atomic(
        &out.join("train_report.json"),
        (serde_json::to_string_pretty(&doc).unwrap() + "\n").as_bytes(),
    )?;

    let model_tmp = out.join("surrogate.json.tmp-writer");
    model.save_json(&model_tmp)?;
    let bytes = std::fs::read(&model_tmp).map_err(|e| CliError::Config(format!("reread: {e}")))?;
    let _ = std::fs::remove_file(&model_tmp);
    write_atomic(&out.join("surrogate.json"), &bytes)?;

    println!(
        "trained surrogate on {} pairs; holdout accuracy {:.4}",
        report.n_train_pairs, report.holdout_accuracy
    );
    Ok(())
}

#[derive(Serialize)]
struct ClusterDoc {
    representative_file: String,
    potential: Option<f64>,
    count: usize,
}

#[derive(Serialize)]
struct ClusterReport {
    radius: f64,
    clusters: Vec<ClusterDoc>,
}

/// `equilibrate`: multi-start gradient play, trajectories plus clusters.
pub fn cmd_equilibrate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let base = load_input(cfg)?;
    let potential = select_potential(cfg)?;
    let table = table_if_needed(cfg, &[cfg.game.init_noise.rot_mode.as_str()])?;
    let game_cfg = cfg.game_config(seed);
    let outcome = enumerate_equilibria(
        &base,
        potential.as_ref(),
        &game_cfg,
        cfg.game.n_games,
        Some(cfg.init_noise()),
        table.as_ref(),
    )?;
    if outcome.trajectories.is_empty() {
        return Err(CliError::Numerical("all games failed".into()));
    }

    let mut energy_csv = String::from("game,round,potential,penalty,objective\n");
    for (g, traj) in outcome.trajectories.iter().enumerate() {
        let mut buf = Vec::new();
        write_trajectory_jsonl(traj, &mut buf)?;
        write_atomic(&out.join(format!("game_{g:03}.jsonl")), &buf)?;
        for (round, e) in traj.energies.iter().enumerate() {
            energy_csv.push_str(&format!(
                "{g},{round},{},{},{}\n",
                e.potential,
                e.penalty,
                e.objective()
            ));
        }
    }
    write_atomic(&out.join("energies.csv"), energy_csv.as_bytes())?;

    let clusters = cluster_equilibria(&outcome.trajectories, cfg.game.cluster_radius)?;
    let mut docs = Vec::new();
    for (i, c) in clusters.iter().enumerate() {
        let file = format!("equilibrium_{i:03}.json");
        let tmp = out.join(format!("{file}.tmp-writer"));
        save_assembly_json(&c.representative, &tmp)?;
        let bytes = std::fs::read(&tmp).map_err(|e| CliError::Config(format!("reread: {e}")))?;
        let _ = std::fs::remove_file(&tmp);
        write_atomic(&out.join(&file), &bytes)?;
        docs.push(ClusterDoc {
            representative_file: file,
            potential: Some(c.potential),
            count: c.count,
        });
    }
    write_atomic(
        &out.join("clusters.json"),
        (serde_json::to_string_pretty(&ClusterReport {
            radius: cfg.game.cluster_radius,
            clusters: docs,
        })
        .unwrap()
            + "\n")
            .as_bytes(),
    )?;

    for (g, err) in &outcome.failures {
        eprintln!("game {g} failed: {err}");
    }
    println!(
        "{} games converged into {} clusters (best potential {:.6})",
        outcome.trajectories.len(),
        clusters.len(),
        outcome.trajectories[0].final_energy().potential
    );
    if !outcome.failures.is_empty() {
        return Err(CliError::PartialBatch(format!(
            "{} of {} games failed",
            outcome.failures.len(),
            cfg.game.n_games
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SampleActionDoc {
    chain: String,
    quat: [f64; 4],
    tr: [f64; 3],
}

#[derive(Serialize)]
struct SampleLine {
    round: usize,
    actions: Vec<SampleActionDoc>,
    potential: Option<f64>,
    penalty: Option<f64>,
}

fn sample_trajectory_lines(
    base: &AssemblyState,
    trajectory: &[AssemblyState],
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    for (round, state) in trajectory.iter().enumerate() {
        let action: JointAction = relative_joint_action(base, state)?;
        let line = SampleLine {
            round,
            actions: action
                .iter()
                .map(|(chain, a)| SampleActionDoc {
                    chain: base.chains()[chain].id.clone(),
                    quat: a.rot.to_quaternion(),
                    tr: [a.tr.x, a.tr.y, a.tr.z],
                })
                .collect(),
            potential: None,
            penalty: None,
        };
        buf.extend_from_slice(serde_json::to_string(&line).unwrap().as_bytes());
        buf.push(b'\n');
    }
    Ok(buf)
}

/// `sample`: reverse diffusion with the exact mixture oracle around the
/// input assembly (plus any configured extra modes).
pub fn cmd_sample(cfg: &RunConfig, seed: u64, out: &Path) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let base = load_input(cfg)?;
    let table = build_table(cfg)?;
    let sched = cfg.noise_schedule();

    let mut modes = vec![base.clone()];
    for path in &cfg.sampler.modes {
        modes.push(load_assembly_json(path)?);
    }
    let weights = if cfg.sampler.mode_weights.is_empty() {
        vec![1.0; modes.len()]
    } else {
        cfg.sampler.mode_weights.clone()
    };
    let oracle = MixtureOracle::new(
        modes.into_iter().zip(weights).collect(),
        &table,
        sched.clone(),
    )?;

    let sampler_cfg = cfg.sampler_config(seed);
    // Full trajectories per sample (parallel, per-sample RNG streams).
    let results = exec::map_indexed(sampler_cfg.n_samples, |i| {
        let mut stream = rng::stream(seed, i as u64);
        reverse_diffuse(&oracle, &base, true, &sampler_cfg, &sched, &mut stream)
    });

    let mut finals = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(traj) => {
                let bytes = sample_trajectory_lines(&base, &traj)?;
                write_atomic(&out.join(format!("sample_{i:03}.jsonl")), &bytes)?;
                finals.push(traj.into_iter().last().unwrap());
            }
            Err(e) => failures.push((i, e)),
        }
    }
    if finals.is_empty() {
        return Err(CliError::Numerical("all samples failed".into()));
    }

    let clusters = multidock::game::cluster_states(&finals, cfg.sampler.cluster_radius)?;
    let mut docs = Vec::new();
    for (i, c) in clusters.iter().enumerate() {
        let file = format!("sample_rep_{i:03}.json");
        let tmp = out.join(format!("{file}.tmp-writer"));
        save_assembly_json(&finals[c.representative], &tmp)?;
        let bytes = std::fs::read(&tmp).map_err(|e| CliError::Config(format!("reread: {e}")))?;
        let _ = std::fs::remove_file(&tmp);
        write_atomic(&out.join(&file), &bytes)?;
        docs.push(ClusterDoc {
            representative_file: file,
            potential: None,
            count: c.count,
        });
    }
    write_atomic(
        &out.join("clusters.json"),
        (serde_json::to_string_pretty(&ClusterReport {
            radius: cfg.sampler.cluster_radius,
            clusters: docs,
        })
        .unwrap()
            + "\n")
            .as_bytes(),
    )?;

    for (i, err) in &failures {
        eprintln!("sample {i} failed: {err}");
    }
    println!(
        "{} samples in {} clusters",
        finals.len(),
        clusters.len()
    );
    if !failures.is_empty() {
        return Err(CliError::PartialBatch(format!(
            "{} of {} samples failed",
            failures.len(),
            sampler_cfg.n_samples
        )));
    }
    Ok(())
}

/// `score`: evaluate the selected potential on the input assembly and, if
/// a decoy file is configured, fill its energies.
pub fn cmd_score(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let base = load_input(cfg)?;
    let potential = select_potential(cfg)?;
    let energy = potential.evaluate(&base)?;
    println!("assembly energy: {energy:.9}");
    if let Some(decoy_file) = &cfg.decoys.file {
        let ds = read_decoys_jsonl(decoy_file, &base)?;
        let ds = score_decoys(ds, potential.as_ref())?;
        let tmp = out.join("scored.jsonl.tmp-writer");
        write_decoys_jsonl(&ds, &tmp)?;
        let bytes = std::fs::read(&tmp).map_err(|e| CliError::Config(format!("reread: {e}")))?;
        let _ = std::fs::remove_file(&tmp);
        write_atomic(&out.join("scored.jsonl"), &bytes)?;
        println!(
            "scored {} decoys into {}",
            ds.len(),
            out.join("scored.jsonl").display()
        );
    }
    Ok(())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn summary(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = median(&sorted);
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, med, var.sqrt())
}

/// `metrics`: C-RMSD and TM-score of predictions against a reference.
pub fn cmd_metrics(pred: &[PathBuf], truth: &Path, out: &Path) -> Result<(), CliError> {
    if pred.is_empty() {
        return Err(CliError::Config("metrics needs at least one --pred".into()));
    }
    ensure_out_dir(out)?;
    let reference = load_assembly_json(truth)?;
    let mut rows = Vec::new();
    for p in pred {
        let state = load_assembly_json(p)?;
        let crmsd = complex_rmsd(&state, &reference).map_err(|e| {
            CliError::Config(format!("{}: {e}", p.display()))
        })?;
        let tm = tm_score(&state, &reference)?;
        rows.push((p.display().to_string(), crmsd, tm));
    }
    let mut csv = String::from("prediction,crmsd,tm_score\n");
    for (name, crmsd, tm) in &rows {
        csv.push_str(&format!("{name},{crmsd},{tm}\n"));
        println!("{name}: C-RMSD {crmsd:.4}, TM {tm:.4}");
    }
    let crmsds: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let tms: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let (cm, cmed, cstd) = summary(&crmsds);
    let (tm_mean, tm_med, tm_std) = summary(&tms);
    csv.push_str(&format!("mean,{cm},{tm_mean}\n"));
    csv.push_str(&format!("median,{cmed},{tm_med}\n"));
    csv.push_str(&format!("std,{cstd},{tm_std}\n"));
    write_atomic(&out.join("metrics.csv"), csv.as_bytes())?;
    println!(
        "summary: C-RMSD mean {cm:.4} median {cmed:.4} std {cstd:.4}; TM mean {tm_mean:.4} median {tm_med:.4} std {tm_std:.4}"
    );
    Ok(())
}
