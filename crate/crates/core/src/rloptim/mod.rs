//! Model-free pulse calibration with a Gaussian policy trained by clipped
//! policy optimisation against shot-sampled rewards.

pub mod mlp;
pub mod ppo;

use serde::{Deserialize, Serialize};

use crate::analysis::{sample_shots, ShotRecord};
use crate::error::{Error, Result};
use crate::lindblad::TimeGrid;
use crate::network::{mhz_to_rad_per_ns, DeviceParams, Direction, ModuleId};
use crate::protocol::{Mode, ProtocolConfig, ProtocolRunner};
use crate::pulses::{DistortionModel, PulseSet, PulseShapes, PARAMETER_COUNT, SEGMENTS};
use crate::qops::DensityMatrix;

pub use ppo::{optimize, optimize_with, trend, OptimizeResult, UpdateRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoHyper {
    pub learning_rate: f64,
    pub policy_updates_per_epoch: usize,
    pub importance_ratio_clip: f64,
    pub batch_size: usize,
    pub shots_per_trial: u64,
    pub value_loss_coefficient: f64,
    pub gradient_clip: f64,
    /// Bound on `|log π − log π_old|`; zero disables it.
    pub log_prob_clip: f64,
    pub network_layers: usize,
    pub nodes_per_layer: usize,
    pub epochs: usize,
    /// Policy standard deviation at epoch 0, in normalized units.
    pub initial_std: f64,
    /// Smooth floor under the policy standard deviation.
    pub min_std: f64,
}

impl PpoHyper {
    /// Full-scale settings.
    pub fn table() -> Self {
        Self {
            learning_rate: 0.005,
            policy_updates_per_epoch: 20,
            importance_ratio_clip: 0.05,
            batch_size: 150,
            shots_per_trial: 1000,
            value_loss_coefficient: 0.5,
            gradient_clip: 1.0,
            log_prob_clip: 0.0,
            network_layers: 4,
            nodes_per_layer: 10,
            epochs: 1000,
            initial_std: 0.3,
            min_std: 0.02,
        }
    }

    /// Desk-scale settings for quick runs.
    pub fn desk() -> Self {
        Self { epochs: 200, batch_size: 30, shots_per_trial: 200, ..Self::table() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("PPO {what}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.importance_ratio_clip > 0.0 && self.importance_ratio_clip <= 1.0) {
            return bad("importance_ratio_clip must lie in (0, 1]");
        }
        if self.batch_size < 2 || self.epochs == 0 || self.policy_updates_per_epoch == 0 {
            return bad("batch_size ≥ 2, epochs ≥ 1 and policy_updates_per_epoch ≥ 1 required");
        }
        if self.shots_per_trial == 0 || self.network_layers == 0 || self.nodes_per_layer == 0 {
            return bad("shots, layers and nodes must be positive");
        }
        if !(self.value_loss_coefficient >= 0.0 && self.gradient_clip >= 0.0 && self.log_prob_clip >= 0.0) {
            return bad("coefficients must be non-negative");
        }
        if !(self.min_std >= 0.0 && self.initial_std > self.min_std.max(1e-6) && self.initial_std < 1e2) {
            return bad("need 0 ≤ min_std < initial_std < 1e2");
        }
        Ok(())
    }
}

/// Fraction of shots with exactly one of the two qubits excited.
pub fn reward(counts: &ShotRecord) -> f64 {
    if counts.shots == 0 {
        return 0.0;
    }
    (counts.count("01") + counts.count("10")) as f64 / counts.shots as f64
}

/// One sampled trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub epoch: usize,
    pub trial: usize,
    /// Normalized parameter deltas.
    pub params: Vec<f64>,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_reward: f64,
    pub best_reward: f64,
    pub policy_std_norm: f64,
}

/// A single-step task: normalized parameters in, reward in `[0, 1]` out.
/// Must be deterministic in `(x, seed)`.
pub trait Environment: Sync {
    fn dimension(&self) -> usize;
    fn reward(&self, x: &[f64], seed: u64) -> Result<f64>;
}

/// `1 − scale·|x − optimum|²`, clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticEnv {
    pub optimum: Vec<f64>,
    pub scale: f64,
}

impl Environment for QuadraticEnv {
    fn dimension(&self) -> usize {
        self.optimum.len()
    }

    fn reward(&self, x: &[f64], _seed: u64) -> Result<f64> {
        let d2: f64 = x.iter().zip(&self.optimum).map(|(a, b)| (a - b).powi(2)).sum();
        Ok((1.0 - self.scale * d2).clamp(0.0, 1.0))
    }
}

/// Normalized-to-physical scale per parameter kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpans {
    pub segment_rad_per_ns: f64,
    pub detuning_rad_per_ns: f64,
    pub phase_rad: f64,
    pub delay_ns: f64,
}

impl Default for ParameterSpans {
    fn default() -> Self {
        Self { segment_rad_per_ns: 0.01, detuning_rad_per_ns: 0.005, phase_rad: 1.0, delay_ns: 5.0 }
    }
}

impl ParameterSpans {
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = vec![self.segment_rad_per_ns; 4 * SEGMENTS * 2];
        v.extend([self.detuning_rad_per_ns; 4]);
        v.extend([self.phase_rad; 4]);
        v.push(self.delay_ns);
        v
    }
}

/// Directional transfer with trial pulse sets, scored on shots of the
/// absorber's data qubits.
#[derive(Clone, Debug)]
pub struct PulseEnv {
    runner: ProtocolRunner,
    seed_pulses: PulseSet,
    spans: Vec<f64>,
    shots: u64,
    absorber: ModuleId,
}

/// 10 ns low-pass on every coupler line with static phase offsets.
pub fn line_distortion() -> [DistortionModel; 4] {
    let m = |phase_offset: f64| DistortionModel { tau: 10.0, phase_offset, ..DistortionModel::none() };
    [m(0.4), m(-0.6), m(-0.5), m(0.5)]
}

impl PulseEnv {
    pub fn new(cfg: &ProtocolConfig, seed_pulses: PulseSet, spans: ParameterSpans, shots: u64) -> Result<Self> {
        seed_pulses.validate()?;
        if shots == 0 {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        let mut cfg = cfg.clone();
        cfg.pulses = PulseShapes::Segmented(seed_pulses.clone());
        Ok(Self {
            runner: ProtocolRunner::new(&cfg)?,
            absorber: cfg.direction.absorber(),
            seed_pulses,
            spans: spans.to_vector(),
            shots,
        })
    }

    /// Rightward transfer on `device` with 8-segment pulses seeded from the
    /// ideal 7 MHz envelopes.
    pub fn calibration(device: &DeviceParams, distortion: Option<[DistortionModel; 4]>, shots: u64) -> Result<Self> {
        let direction = Direction::Right;
        let grid = TimeGrid::new(0.0, PulseSet::DEFAULT_DURATION, TimeGrid::DEFAULT_DT, 100)?;
        let mut cfg = ProtocolConfig::new(direction, Mode::FullTransfer, device.clone()).with_grid(grid);
        cfg.distortion = distortion;
        let seed = PulseSet::seeded_from_ideal(
            device.module_gamma(direction.emitter()),
            device.module_gamma(direction.absorber()),
            mhz_to_rad_per_ns(7.0),
            PulseSet::DEFAULT_DURATION,
        )?;
        Self::new(&cfg, seed, ParameterSpans::default(), shots)
    }

    pub fn seed_pulses(&self) -> &PulseSet {
        &self.seed_pulses
    }

    pub fn shots_per_trial(&self) -> u64 {
        self.shots
    }

    /// Pulse set at normalized offsets `x`, clamped to `|g|max`.
    pub fn pulses_for(&self, x: &[f64]) -> Result<PulseSet> {
        if x.len() != PARAMETER_COUNT {
            return Err(Error::DimensionMismatch { expected: PARAMETER_COUNT, found: x.len() });
        }
        let v: Vec<f64> = self.seed_pulses.to_vector().iter().zip(&self.spans).zip(x).map(|((s, w), x)| s + w * x).collect();
        let mut ps = self.seed_pulses.with_vector(&v)?;
        ps.clamp();
        Ok(ps)
    }

    pub fn absorber_state(&self, ps: &PulseSet) -> Result<DensityMatrix> {
        self.runner.run_pulses(&PulseShapes::Segmented(ps.clone()))?.module_state(self.absorber)
    }

    pub fn shots(&self, ps: &PulseSet, seed: u64) -> Result<ShotRecord> {
        sample_shots(&self.absorber_state(ps)?, self.shots, seed)
    }

    /// Noise-free `P(01) + P(10)` on the absorber.
    pub fn efficiency(&self, ps: &PulseSet) -> Result<f64> {
        let p = self.absorber_state(ps)?.populations();
        Ok(p[1] + p[2])
    }
}

impl Environment for PulseEnv {
    fn dimension(&self) -> usize {
        PARAMETER_COUNT
    }

    fn reward(&self, x: &[f64], seed: u64) -> Result<f64> {
        Ok(reward(&self.shots(&self.pulses_for(x)?, seed)?))
    }
}

/// Best of `trials` Gaussian samples of width `scale`; a baseline.
pub fn random_search(env: &dyn Environment, seed: u64, trials: usize, scale: f64) -> Result<Episode> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut best: Option<Episode> = None;
    for trial in 0..trials {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ppo::trial_seed(seed, 0, trial));
        let params: Vec<f64> = (0..env.dimension())
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let reward = env.reward(&params, rand::RngCore::next_u64(&mut rng))?;
        if best.as_ref().is_none_or(|b| reward > b.reward) {
            best = Some(Episode { epoch: 0, trial, params, reward });
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("random search needs at least one trial".into()))
}
