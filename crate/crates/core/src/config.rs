//! Run configuration files: TOML with the unit spelled out in every key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lindblad::TimeGrid;
use crate::network::{mhz_to_rad_per_ns, DeviceParams, Direction};
use crate::protocol::{Mode, ProtocolConfig};
use crate::pulses::{DistortionModel, PulseSet, PulseShapes};
use crate::rloptim::{ParameterSpans, PpoHyper};

pub const ARTIFACT: &str = "chiralnet";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Scatter,
    Budget,
    Optimize,
    Delay,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Scatter => "scatter",
            Command::Budget => "budget",
            Command::Optimize => "optimize",
            Command::Delay => "delay",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevicePreset {
    #[default]
    Measured,
    /// Lossless and decoherence-free at 17 MHz.
    Nominal,
}

/// Device block: a preset with optional overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceBlock {
    #[serde(default)]
    pub preset: DevicePreset,
    /// Q1, Q2, Q5, Q6.
    pub gamma_mhz: Option<[f64; 4]>,
    pub eta2: Option<f64>,
    pub kd_rad: Option<f64>,
    /// Q3, Q4, Q7, Q8; `inf` disables decay.
    pub t1_us: Option<[f64; 4]>,
    pub t2star_us: Option<[f64; 4]>,
    pub decoherence: Option<bool>,
}

impl DeviceBlock {
    pub fn to_device(&self) -> Result<DeviceParams> {
        let mut d = match self.preset {
            DevicePreset::Measured => DeviceParams::measured(),
            DevicePreset::Nominal => DeviceParams::nominal(),
        };
        if let Some(g) = self.gamma_mhz {
            d.gamma = g.map(mhz_to_rad_per_ns);
        }
        if let Some(e) = self.eta2 {
            d = d.with_eta2(e);
        }
        if let Some(kd) = self.kd_rad {
            d.kd = kd;
        }
        if let Some(t) = self.t1_us {
            d.t1_data = t.map(|x| x * 1e3);
        }
        if let Some(t) = self.t2star_us {
            d.t2star_data = t.map(|x| x * 1e3);
        }
        if self.decoherence == Some(false) {
            d = d.without_decoherence();
        }
        d.validate().map_err(|e| Error::Config(format!("[device]: {e}")))?;
        Ok(d)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    #[default]
    Ideal,
    /// Eight-segment pulses seeded from the ideal envelopes, then
    /// overridden by `parameters`.
    Segmented,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsesBlock {
    #[serde(default)]
    pub kind: PulseKind,
    pub gamma_ph_mhz: f64,
    pub total_duration_ns: f64,
    /// Named segmented parameters in rad/ns, rad and ns.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
}

impl Default for PulsesBlock {
    fn default() -> Self {
        Self {
            kind: PulseKind::Ideal,
            gamma_ph_mhz: ProtocolConfig::DEFAULT_PHOTON_MHZ,
            total_duration_ns: PulseSet::DEFAULT_DURATION,
            parameters: BTreeMap::new(),
        }
    }
}

impl PulsesBlock {
    pub fn to_shapes(&self, device: &DeviceParams, direction: Direction) -> Result<PulseShapes> {
        let gp = mhz_to_rad_per_ns(self.gamma_ph_mhz);
        if !(gp > 0.0 && self.total_duration_ns > 0.0) {
            return Err(Error::Config("[pulses]: gamma_ph_mhz and total_duration_ns must be positive".into()));
        }
        match self.kind {
            PulseKind::Ideal => {
                if !self.parameters.is_empty() {
                    return Err(Error::Config("[pulses]: parameters need kind = \"segmented\"".into()));
                }
                Ok(PulseShapes::Ideal { gamma_ph: gp, total_duration: self.total_duration_ns })
            }
            PulseKind::Segmented => {
                let seed = PulseSet::seeded_from_ideal(
                    device.module_gamma(direction.emitter()),
                    device.module_gamma(direction.absorber()),
                    gp,
                    self.total_duration_ns,
                )
                .map_err(|e| Error::Config(format!("[pulses]: {e}")))?;
                let named: Vec<(String, f64)> = self.parameters.iter().map(|(k, v)| (k.clone(), *v)).collect();
                let ps = seed.with_named(&named)?;
                ps.validate().map_err(|e| Error::Config(format!("[pulses]: {e}")))?;
                Ok(PulseShapes::Segmented(ps))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub dt_ns: f64,
    pub sample_stride: usize,
    /// Defaults to the pulse window.
    pub t_end_ns: Option<f64>,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { dt_ns: TimeGrid::DEFAULT_DT, sample_stride: 10, t_end_ns: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionBlock {
    pub tau_ns: f64,
    #[serde(default)]
    pub cubic: f64,
    #[serde(default = "one")]
    pub reference_rad_per_ns: f64,
    /// Emit1, Emit2, Absorb1, Absorb2.
    pub phase_offsets_rad: [f64; 4],
}

fn one() -> f64 {
    1.0
}

impl DistortionBlock {
    pub fn to_models(&self) -> Result<[DistortionModel; 4]> {
        let models = self.phase_offsets_rad.map(|p| DistortionModel {
            tau: self.tau_ns,
            cubic: self.cubic,
            reference: self.reference_rad_per_ns,
            phase_offset: p,
        });
        for m in &models {
            m.validate().map_err(|e| Error::Config(format!("[protocol.distortion]: {e}")))?;
        }
        Ok(models)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolBlock {
    pub direction: Direction,
    pub mode: Mode,
    pub initial_pi_fraction: f64,
    pub distortion: Option<DistortionBlock>,
}

impl Default for ProtocolBlock {
    fn default() -> Self {
        Self { direction: Direction::Right, mode: Mode::FullTransfer, initial_pi_fraction: 1.0, distortion: None }
    }
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Range {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::Config("range needs finite ends and at least one point".into()));
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        let h = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points).map(|k| self.start + k as f64 * h).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub detuning_mhz: Range,
    /// `20·log10(Ω_p/γ̄)`.
    pub power_db: Range,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            detuning_mhz: Range { start: -40.0, stop: 40.0, points: 41 },
            power_db: Range { start: -30.0, stop: 10.0, points: 5 },
            tolerance: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeScale {
    #[default]
    Desk,
    Table,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeBlock {
    #[serde(default)]
    pub scale: OptimizeScale,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub shots_per_trial: Option<u64>,
    pub initial_std: Option<f64>,
    pub spans: Option<ParameterSpans>,
}

impl OptimizeBlock {
    pub fn hyper(&self) -> Result<PpoHyper> {
        let mut h = match self.scale {
            OptimizeScale::Desk => PpoHyper::desk(),
            OptimizeScale::Table => PpoHyper::table(),
        };
        if let Some(e) = self.epochs {
            h.epochs = e;
        }
        if let Some(b) = self.batch_size {
            h.batch_size = b;
        }
        if let Some(s) = self.shots_per_trial {
            h.shots_per_trial = s;
        }
        if let Some(s) = self.initial_std {
            h.initial_std = s;
        }
        h.validate().map_err(|e| Error::Config(format!("[optimize]: {e}")))?;
        Ok(h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub device: DeviceBlock,
    #[serde(default)]
    pub pulses: PulsesBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub protocol: ProtocolBlock,
    pub sweep: Option<SweepBlock>,
    pub optimize: Option<OptimizeBlock>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            seed: 0,
            output_dir: default_output_dir(),
            device: DeviceBlock::default(),
            pulses: PulsesBlock::default(),
            grid: GridBlock::default(),
            protocol: ProtocolBlock::default(),
            sweep: (command == Command::Scatter).then(SweepBlock::default),
            optimize: (command == Command::Optimize).then(OptimizeBlock::default),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization with `output_dir` blanked,
    /// hex encoded.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        Sha256::digest(c.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First line of every output file.
    pub fn header(&self) -> String {
        format!("{ARTIFACT} {VERSION} config_sha256={}", self.content_hash())
    }

    /// Checks that every block the command reads is present and valid.
    pub fn check(&self) -> Result<()> {
        let device = self.device.to_device()?;
        self.pulses.to_shapes(&device, self.protocol.direction)?;
        self.grid()?;
        if let Some(d) = &self.protocol.distortion {
            d.to_models()?;
        }
        match self.command {
            Command::Scatter => {
                let s = self.sweep.as_ref().ok_or_else(|| Error::Config("scatter needs a [sweep] block".into()))?;
                s.detuning_mhz.values()?;
                s.power_db.values()?;
            }
            Command::Optimize => {
                self.optimize.clone().unwrap_or_default().hyper()?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn device(&self) -> Result<DeviceParams> {
        self.device.to_device()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let end = self.grid.t_end_ns.unwrap_or(self.pulses.total_duration_ns);
        TimeGrid::new(0.0, end, self.grid.dt_ns, self.grid.sample_stride)
            .map_err(|e| Error::Config(format!("[grid]: {e}")))
    }

    pub fn protocol(&self) -> Result<ProtocolConfig> {
        let device = self.device()?;
        let p = &self.protocol;
        let mut cfg = ProtocolConfig::new(p.direction, p.mode, device.clone())
            .with_grid(self.grid()?)
            .with_pi_fraction(p.initial_pi_fraction);
        cfg.pulses = self.pulses.to_shapes(&device, p.direction)?;
        cfg.distortion = p.distortion.as_ref().map(DistortionBlock::to_models).transpose()?;
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}
