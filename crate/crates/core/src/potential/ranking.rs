//! Pairwise ranking loss and surrogate training.
//!
//! Training data are decoy pairs `(X_h, X_l)` ordered so the ground-truth
//! energy of `X_h` exceeds that of `X_l`; the loss is the Bradley-Terry
//! negative log-likelihood `-log sigmoid(f(X_h) - f(X_l))`, convex in the
//! weights of a linear surrogate. Pairs are formed within each base
//! assembly from all decoy pairs whose true energies differ by more than a
//! tie tolerance.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;
use crate::structio::{AssemblyState, DecoySet};

use super::{PotentialFn, SurrogatePotential};

/// True-energy differences below this are ties and form no pair.
const TIE_TOL: f64 = 1e-6;

/// Numerically stable `-log sigmoid(z)` = `softplus(-z)`.
fn neg_log_sigmoid(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Logistic function.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean ranking loss of a surrogate over `(higher, lower)` state pairs.
pub fn ranking_loss(
    f: &SurrogatePotential,
    pairs: &[(&AssemblyState, &AssemblyState)],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("ranking_loss on empty pairs".into()));
    }
    let mut total = 0.0;
    for (high, low) in pairs {
        total += neg_log_sigmoid(f.evaluate(high)? - f.evaluate(low)?);
    }
    Ok(total / pairs.len() as f64)
}

/// Loss and gradient w.r.t. the weights on precomputed feature differences
/// `dphi = phi(X_h) - phi(X_l)`.
pub fn ranking_loss_gradient(weights: &[f64], dphis: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    for dphi in dphis {
        let z: f64 = weights.iter().zip(dphi).map(|(w, d)| w * d).sum();
        loss += neg_log_sigmoid(z);
        let coeff = -(1.0 - sigmoid(z));
        for (g, d) in grad.iter_mut().zip(dphi) {
            *g += coeff * d;
        }
    }
    let n = dphis.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    (loss / n, grad)
}

/// Gradient-descent settings for surrogate training.
#[derive(Debug, Clone)]
pub struct OptParams {
    pub iters: usize,
    pub learning_rate: f64,
    /// None = full batch (with step halving keeping the loss monotone);
    /// Some(n) = shuffled mini-batches of n pairs.
    pub batch_size: Option<usize>,
    /// Fraction of pairs held out for the accuracy report.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for OptParams {
    fn default() -> Self {
        Self {
            iters: 400,
            learning_rate: 2.0,
            batch_size: None,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Training artifacts: full-batch loss per iteration and held-out pairwise
/// ranking accuracy.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    pub n_train_pairs: usize,
    pub n_holdout_pairs: usize,
}

fn pair_accuracy(weights: &[f64], dphis: &[Vec<f64>]) -> f64 {
    if dphis.is_empty() {
        return f64::NAN;
    }
    let correct = dphis
        .iter()
        .filter(|dphi| weights.iter().zip(dphi.iter()).map(|(w, d)| w * d).sum::<f64>() > 0.0)
        .count();
    correct as f64 / dphis.len() as f64
}

/// Trains the surrogate on scored decoy sets (pairs form within each set).
/// Deterministic under `opt.seed`. Errors when no pair has an energy gap
/// above the tie tolerance.
pub fn train_surrogate(
    sets: &[DecoySet],
    init: SurrogatePotential,
    opt: &OptParams,
) -> Result<(SurrogatePotential, TrainReport)> {
    if !(0.0..1.0).contains(&opt.holdout_fraction) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must be in [0, 1), got {}",
            opt.holdout_fraction
        )));
    }
    let mut dphis: Vec<Vec<f64>> = Vec::new();
    for set in sets {
        if !set.all_scored() {
            return Err(Error::InvalidArgument(
                "train_surrogate needs scored decoys".into(),
            ));
        }
        if set.len() < 2 {
            return Err(Error::InvalidArgument(
                "train_surrogate needs >= 2 decoys per set".into(),
            ));
        }
        let phis: Vec<Vec<f64>> = (0..set.len())
            .map(|i| init.features(&set.realized(i)))
            .collect();
        let energies: Vec<f64> = set.energies.iter().map(|e| e.unwrap()).collect();
        for i in 0..set.len() {
            for j in (i + 1)..set.len() {
                let de = energies[i] - energies[j];
                if de.abs() <= TIE_TOL {
                    continue;
                }
                let (h, l) = if de > 0.0 { (i, j) } else { (j, i) };
                let dphi = phis[h]
                    .iter()
                    .zip(&phis[l])
                    .map(|(a, b)| a - b)
                    .collect();
                dphis.push(dphi);
            }
        }
    }
    if dphis.is_empty() {
        return Err(Error::NoRankingSignal);
    }

    let mut order: Vec<usize> = (0..dphis.len()).collect();
    order.shuffle(&mut rng::stream(opt.seed, 0));
    let n_holdout = (dphis.len() as f64 * opt.holdout_fraction).round() as usize;
    let n_train = dphis.len() - n_holdout;
    let mut train: Vec<Vec<f64>> = order[..n_train].iter().map(|&i| dphis[i].clone()).collect();
    let holdout: Vec<Vec<f64>> = order[n_train..].iter().map(|&i| dphis[i].clone()).collect();
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "holdout fraction leaves no training pairs".into(),
        ));
    }

    let mut model = init;

    // Diagonal preconditioning: descend in coordinates where each feature
    // difference has unit scale, then map the weights back. Same convex
    // problem, far better conditioning than raw soft-histogram counts.
    let dim = model.weights().len();
    let mut scale = vec![0.0f64; dim];
    for dphi in &train {
        for (s, d) in scale.iter_mut().zip(dphi) {
            *s += d * d;
        }
    }
    let scale: Vec<f64> = scale
        .iter()
        .map(|s| (s / n_train as f64).sqrt().max(1e-12))
        .collect();
    for dphi in &mut train {
        for (d, s) in dphi.iter_mut().zip(&scale) {
            *d /= s;
        }
    }

    let mut weights: Vec<f64> = model
        .weights()
        .iter()
        .zip(&scale)
        .map(|(w, s)| w * s)
        .collect();
    let mut lr = opt.learning_rate;
    let mut loss_curve = Vec::with_capacity(opt.iters + 1);
    let (mut current_loss, mut grad) = ranking_loss_gradient(&weights, &train);
    loss_curve.push(current_loss);

    let mut batch_rng = rng::stream(opt.seed, 1);
    for _ in 0..opt.iters {
        match opt.batch_size {
            None => {
                // Full batch with step halving: the recorded loss never
                // increases.
                let mut halvings = 0;
                loop {
                    let trial: Vec<f64> = weights
                        .iter()
                        .zip(&grad)
                        .map(|(w, g)| w - lr * g)
                        .collect();
                    let (trial_loss, trial_grad) = ranking_loss_gradient(&trial, &train);
                    if trial_loss <= current_loss || halvings >= 20 {
                        weights = trial;
                        current_loss = trial_loss.min(current_loss);
                        grad = trial_grad;
                        break;
                    }
                    lr *= 0.5;
                    halvings += 1;
                }
            }
            Some(bs) => {
                let mut idx: Vec<usize> = (0..train.len()).collect();
                idx.shuffle(&mut batch_rng);
                for chunk in idx.chunks(bs.max(1)) {
                    let batch: Vec<Vec<f64>> =
                        chunk.iter().map(|&i| train[i].clone()).collect();
                    let (_, g) = ranking_loss_gradient(&weights, &batch);
                    for (w, gi) in weights.iter_mut().zip(&g) {
                        *w -= lr * gi;
                    }
                }
                let (l, g) = ranking_loss_gradient(&weights, &train);
                current_loss = l;
                grad = g;
            }
        }
        loss_curve.push(current_loss);
    }

    let final_weights: Vec<f64> = weights.iter().zip(&scale).map(|(w, s)| w / s).collect();
    let train_accuracy = pair_accuracy(&weights, &train);
    let holdout_accuracy = pair_accuracy(&final_weights, &holdout);
    model.set_weights(final_weights)?;
    Ok((
        model,
        TrainReport {
            loss_curve,
            train_accuracy,
            holdout_accuracy,
            n_train_pairs: train.len(),
            n_holdout_pairs: holdout.len(),
        },
    ))
}

/// Agreement between surrogate and ground-truth energy differences.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub pearson_r: f64,
    pub sign_agreement: f64,
    pub n_pairs: usize,
}

/// Per pair, compares `f(h) - f(l)` against `truth(h) - truth(l)`: Pearson
/// correlation of the differences and the fraction of matching signs.
pub fn surrogate_vs_truth_report(
    f: &dyn PotentialFn,
    truth: &dyn PotentialFn,
    pairs: &[(&AssemblyState, &AssemblyState)],
) -> Result<ComparisonReport> {
    if pairs.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "comparison needs >= 10 pairs, got {}",
            pairs.len()
        )));
    }
    let mut df = Vec::with_capacity(pairs.len());
    let mut dt = Vec::with_capacity(pairs.len());
    for (h, l) in pairs {
        df.push(f.evaluate(h)? - f.evaluate(l)?);
        dt.push(truth.evaluate(h)? - truth.evaluate(l)?);
    }
    let n = pairs.len() as f64;
    let mf = df.iter().sum::<f64>() / n;
    let mt = dt.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vf = 0.0;
    let mut vt = 0.0;
    for (a, b) in df.iter().zip(&dt) {
        cov += (a - mf) * (b - mt);
        vf += (a - mf) * (a - mf);
        vt += (b - mt) * (b - mt);
    }
    let denom = (vf * vt).sqrt();
    if denom < 1e-300 {
        return Err(Error::Numerical(
            "energy differences have zero variance".into(),
        ));
    }
    let sign_agreement = df
        .iter()
        .zip(&dt)
        .filter(|(a, b)| (**a > 0.0) == (**b > 0.0))
        .count() as f64
        / n;
    Ok(ComparisonReport {
        pearson_r: cov / denom,
        sign_agreement,
        n_pairs: pairs.len(),
    })
}
