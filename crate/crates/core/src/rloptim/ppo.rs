//! Clipped-surrogate policy optimisation for a single-step task with a
//! constant observation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{clip_global_norm, Adam, PolicyNet, PolicyOutput};
use super::{Environment, Episode, EpochStats, PpoHyper};
use crate::error::{Error, Result};

/// Diagnostics of one policy update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub epoch: usize,
    pub update: usize,
    /// Largest `|ρ − 1|` over the batch.
    pub max_ratio_deviation: f64,
    /// Largest `|ρ − 1|` among samples whose gradient pushes `ρ` further
    /// from one.
    pub max_pushing_deviation: f64,
    pub clipped_fraction: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub best: Episode,
    /// Policy mean after the last epoch.
    pub final_mean: Vec<f64>,
    pub curve: Vec<EpochStats>,
    pub updates: Vec<UpdateRecord>,
}

impl OptimizeResult {
    /// Learning curve as NDJSON.
    pub fn curve_ndjson(&self) -> String {
        self.curve.iter().map(|s| serde_json::to_string(s).expect("plain record") + "\n").collect()
    }
}

/// Seed for trial `trial` of epoch `epoch`.
pub fn trial_seed(seed: u64, epoch: usize, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | trial as u64);
    rng.next_u64()
}

fn log_prob(x: &[f64], out: &PolicyOutput) -> f64 {
    let c = 0.5 * (2.0 * std::f64::consts::PI).ln();
    x.iter()
        .zip(&out.mean)
        .zip(out.std())
        .map(|((x, m), s)| {
            let z = (x - m) / s;
            -0.5 * z * z - s.ln() - c
        })
        .sum()
}

fn sample_trial(env: &dyn Environment, out: &PolicyOutput, seed: u64, epoch: usize, trial: usize) -> Result<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, epoch, trial));
    let params: Vec<f64> = out
        .mean
        .iter()
        .zip(out.std())
        .map(|(m, s)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            m + s * z
        })
        .collect();
    let reward = env.reward(&params, rng.next_u64())?;
    if !(0.0..=1.0).contains(&reward) {
        return Err(Error::InvalidParameter(format!("reward {reward} outside [0, 1]")));
    }
    Ok(Episode { epoch, trial, params, reward })
}

/// Rewards for one epoch's batch, evaluated in parallel when `parallel`.
pub fn sample_batch(
    env: &dyn Environment,
    out: &PolicyOutput,
    seed: u64,
    epoch: usize,
    batch: usize,
    parallel: bool,
) -> Result<Vec<Episode>> {
    if parallel {
        (0..batch).into_par_iter().map(|k| sample_trial(env, out, seed, epoch, k)).collect()
    } else {
        (0..batch).map(|k| sample_trial(env, out, seed, epoch, k)).collect()
    }
}

fn check_std(out: &PolicyOutput, epoch: usize) -> Result<()> {
    if let Some(s) = out.std().into_iter().find(|s| !(1e-6..=1e2).contains(s)) {
        return Err(Error::PolicyDiverged(format!("policy std {s:e} at epoch {epoch}")));
    }
    Ok(())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Median epoch reward over the first and last `window` epochs.
pub fn trend(curve: &[EpochStats], window: usize) -> (f64, f64) {
    let r: Vec<f64> = curve.iter().map(|s| s.mean_reward).collect();
    let w = window.min(r.len());
    (median(&r[..w]), median(&r[r.len() - w..]))
}

/// Runs the epoch loop on `env`, starting from a zero-mean policy.
pub fn optimize(env: &dyn Environment, seed: u64, hyper: &PpoHyper) -> Result<OptimizeResult> {
    optimize_with(env, seed, hyper, true)
}

pub fn optimize_with(env: &dyn Environment, seed: u64, hyper: &PpoHyper, parallel: bool) -> Result<OptimizeResult> {
    hyper.validate()?;
    let dim = env.dimension();
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = PolicyNet::new(
        dim,
        hyper.network_layers,
        hyper.nodes_per_layer,
        hyper.initial_std,
        hyper.min_std,
        &mut init_rng,
    );
    let mut adam = Adam::new(net.n_params(), hyper.learning_rate);
    let n = hyper.batch_size;
    let eps = hyper.importance_ratio_clip;

    let mut best: Option<Episode> = None;
    let mut curve = Vec::with_capacity(hyper.epochs);
    let mut updates = Vec::with_capacity(hyper.epochs * hyper.policy_updates_per_epoch);
    for epoch in 0..hyper.epochs {
        let old = net.forward();
        check_std(&old, epoch)?;
        let batch = sample_batch(env, &old, seed, epoch, n, parallel)?;

        let rewards: Vec<f64> = batch.iter().map(|e| e.reward).collect();
        let mean_r = rewards.iter().sum::<f64>() / n as f64;
        let epoch_best = batch.iter().max_by(|a, b| a.reward.total_cmp(&b.reward)).expect("non-empty batch");
        if best.as_ref().is_none_or(|b| epoch_best.reward > b.reward) {
            best = Some(epoch_best.clone());
        }
        curve.push(EpochStats {
            epoch,
            mean_reward: mean_r,
            best_reward: epoch_best.reward,
            policy_std_norm: old.std().iter().map(|s| s * s).sum::<f64>().sqrt(),
        });

        let raw: Vec<f64> = rewards.iter().map(|r| r - old.value).collect();
        let am = raw.iter().sum::<f64>() / n as f64;
        let sd = (raw.iter().map(|a| (a - am).powi(2)).sum::<f64>() / n as f64).sqrt();
        let adv: Vec<f64> = raw.iter().map(|a| (a - am) / (sd + 1e-8)).collect();
        let logp_old: Vec<f64> = batch.iter().map(|e| log_prob(&e.params, &old)).collect();

        for update in 0..hyper.policy_updates_per_epoch {
            let out = net.forward();
            let std = out.std();
            let mut g_mean = vec![0.0; dim];
            let mut g_log_std = vec![0.0; dim];
            let (mut max_dev, mut max_push, mut clipped) = (0.0_f64, 0.0_f64, 0usize);
            for (i, e) in batch.iter().enumerate() {
                let mut diff = log_prob(&e.params, &out) - logp_old[i];
                let mut frozen = false;
                if hyper.log_prob_clip > 0.0 && diff.abs() > hyper.log_prob_clip {
                    diff = diff.clamp(-hyper.log_prob_clip, hyper.log_prob_clip);
                    frozen = true;
                }
                let ratio = diff.exp();
                let a = adv[i];
                max_dev = max_dev.max((ratio - 1.0).abs());
                let cut = (a > 0.0 && ratio > 1.0 + eps) || (a < 0.0 && ratio < 1.0 - eps);
                if cut || frozen {
                    clipped += 1;
                    continue;
                }
                if (a > 0.0) == (ratio > 1.0) {
                    max_push = max_push.max((ratio - 1.0).abs());
                }
                let g = -ratio * a / n as f64;
                for j in 0..dim {
                    let s = std[j];
                    let z = (e.params[j] - out.mean[j]) / s;
                    g_mean[j] += g * z / s;
                    g_log_std[j] += g * (z * z - 1.0) * out.log_std[j].exp() / s;
                }
            }
            let g_value = hyper.value_loss_coefficient * 2.0 * (out.value - mean_r);
            let mut grad = net.backward(&out, &g_mean, &g_log_std, g_value);
            let grad_norm = clip_global_norm(&mut grad, hyper.gradient_clip);
            adam.step(&mut net, &mut grad);
            updates.push(UpdateRecord {
                epoch,
                update,
                max_ratio_deviation: max_dev,
                max_pushing_deviation: max_push,
                clipped_fraction: clipped as f64 / n as f64,
                grad_norm,
            });
        }
    }
    let last = net.forward();
    check_std(&last, hyper.epochs)?;
    Ok(OptimizeResult { best: best.expect("at least one epoch"), final_mean: last.mean, curve, updates })
}
