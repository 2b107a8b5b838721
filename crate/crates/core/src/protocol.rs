//! End-to-end emission, absorption, half-emission and transparency runs.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::analysis::{bell_target, fidelity, w_target, Sign};
use crate::error::{Error, Result};
use crate::lindblad::{evolve_with, trapezoid, zero_envelope, DriveTerm, EnvelopeFn, EvolveOptions, GeneratorSpec, TimeGrid};
use crate::network::{
    build_cascaded_with, mhz_to_rad_per_ns, parametric_coupling, CascadeOptions, DeviceParams, Direction, Layout,
    ModuleId, Qubit,
};
use crate::pulses::{distort, DistortionModel, PulseShapes, Role};
use crate::qops::{partial_trace, site_bit, DensityMatrix, Ket, Operator, Subspace, I, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FullTransfer,
    /// Emission pulses stop at half the window; absorption runs in full.
    HalfEmission,
    /// Absorber waveguide qubits removed from the waveguide.
    EmitOnly,
    /// Absorber waveguide qubits resonant with their couplers off.
    Transparency,
}

/// Initial state of the protocol.
#[derive(Clone, Debug, PartialEq)]
pub enum Preparation {
    /// `ψ⁺` on module A for rightward runs, `ψ⁻` on module B for leftward.
    Directional,
    /// `ψ±` on the emitter's data qubits.
    Psi(Sign),
    /// Arbitrary state on the eight-qubit register.
    Custom(Ket),
}

impl Preparation {
    fn sign(&self, direction: Direction) -> Option<Sign> {
        match self {
            Preparation::Directional => Some(match direction {
                Direction::Right => Sign::Plus,
                Direction::Left => Sign::Minus,
            }),
            Preparation::Psi(s) => Some(*s),
            Preparation::Custom(_) => None,
        }
    }
}

/// Finite-duration √iSWAP preparation through an exchange of strength
/// `coupling` (rad/ns), including data-qubit decoherence during the gate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitGate {
    pub coupling: f64,
    pub dt: f64,
}

#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub direction: Direction,
    pub mode: Mode,
    pub device: DeviceParams,
    pub pulses: PulseShapes,
    pub prep: Preparation,
    /// Seeding rotation in units of π: 1 for a single photon, 0.5 for a
    /// superposition with vacuum.
    pub initial_pi_fraction: f64,
    pub grid: TimeGrid,
    /// Per-role line distortion, indexed by [`Role::index`].
    pub distortion: Option<[DistortionModel; 4]>,
    pub explicit_gate: Option<ExplicitGate>,
}

impl ProtocolConfig {
    pub const DEFAULT_PHOTON_MHZ: f64 = 7.0;

    /// Ideal sech pulses at 7 MHz over a 200 ns window.
    pub fn new(direction: Direction, mode: Mode, device: DeviceParams) -> Self {
        let pulses = PulseShapes::ideal(mhz_to_rad_per_ns(Self::DEFAULT_PHOTON_MHZ));
        let grid = TimeGrid::new(0.0, pulses.total_duration(), TimeGrid::DEFAULT_DT, 10).expect("static grid");
        Self {
            direction,
            mode,
            device,
            pulses,
            prep: Preparation::Directional,
            initial_pi_fraction: 1.0,
            grid,
            distortion: None,
            explicit_gate: None,
        }
    }

    /// Ideal pulses of bandwidth `gamma_ph` centered in a window of
    /// `duration`; the grid spans the window.
    pub fn with_ideal_pulses(mut self, gamma_ph: f64, duration: f64) -> Result<Self> {
        self.pulses = PulseShapes::Ideal { gamma_ph, total_duration: duration };
        self.grid = TimeGrid::new(0.0, duration, self.grid.dt, self.grid.sample_stride)?;
        Ok(self)
    }

    pub fn with_prep(mut self, prep: Preparation) -> Self {
        self.prep = prep;
        self
    }

    pub fn with_pi_fraction(mut self, f: f64) -> Self {
        self.initial_pi_fraction = f;
        self
    }

    pub fn with_grid(mut self, grid: TimeGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.grid.validate()?;
        if !self.initial_pi_fraction.is_finite() {
            return Err(Error::InvalidParameter("initial_pi_fraction must be finite".into()));
        }
        if let Preparation::Custom(k) = &self.prep {
            if k.dim() != Layout::full().dim() {
                return Err(Error::DimensionMismatch { expected: Layout::full().dim(), found: k.dim() });
            }
        }
        if let Some(models) = &self.distortion {
            models.iter().try_for_each(DistortionModel::validate)?;
        }
        if let Some(g) = &self.explicit_gate {
            if !(g.coupling > 0.0 && g.dt > 0.0) {
                return Err(Error::InvalidParameter("explicit gate needs positive coupling and dt".into()));
            }
        }
        Ok(())
    }
}

/// Loss fractions of one photon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub directionality_error: f64,
    pub missed_absorption: f64,
    pub propagation_loss: f64,
    pub decoherence_loss: f64,
    pub residual: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.directionality_error + self.missed_absorption + self.propagation_loss + self.decoherence_loss + self.residual
    }

    pub fn fields(&self) -> [(&'static str, f64); 5] {
        [
            ("directionality_error", self.directionality_error),
            ("missed_absorption", self.missed_absorption),
            ("propagation_loss", self.propagation_loss),
            ("decoherence_loss", self.decoherence_loss),
            ("residual", self.residual),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.fields() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidState(format!("{k} = {v} outside [0, 1]")));
            }
        }
        if self.total() > 1.0 + 1e-6 {
            return Err(Error::InvalidState(format!("losses sum to {}", self.total())));
        }
        Ok(())
    }

    /// `key = value` lines.
    pub fn to_kv(&self) -> String {
        self.fields().iter().map(|(k, v)| format!("{k} = {v:.8}\n")).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    /// Q3, Q4, Q7, Q8.
    pub data_qubit_populations: [Vec<f64>; 4],
    pub field_amp_left: Vec<C64>,
    pub field_amp_right: Vec<C64>,
    pub flux_left: Vec<f64>,
    pub flux_right: Vec<f64>,
    pub loss_flux_left: Vec<f64>,
    pub loss_flux_right: Vec<f64>,
    pub final_state: DensityMatrix,
    pub loss_accounting: LossBreakdown,
    pub initial_excitation: f64,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: Option<f64>,
}

impl TrajectoryResult {
    pub fn sample_interval(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn population(&self, q: Qubit) -> Result<&[f64]> {
        let k = Qubit::DATA
            .iter()
            .position(|d| *d == q)
            .ok_or_else(|| Error::InvalidParameter(format!("{} is not a data qubit", q.label())))?;
        Ok(&self.data_qubit_populations[k])
    }

    /// Summed data-qubit population of `module` at every sample.
    pub fn module_population(&self, module: ModuleId) -> Vec<f64> {
        let (a, b) = module.data_qubits();
        let pa = self.population(a).expect("data qubit");
        let pb = self.population(b).expect("data qubit");
        pa.iter().zip(pb).map(|(x, y)| x + y).collect()
    }

    pub fn peak_population(&self, module: ModuleId) -> f64 {
        self.module_population(module).into_iter().fold(0.0, f64::max)
    }

    pub fn flux(&self, d: Direction) -> &[f64] {
        match d {
            Direction::Left => &self.flux_left,
            Direction::Right => &self.flux_right,
        }
    }

    pub fn field(&self, d: Direction) -> &[C64] {
        match d {
            Direction::Left => &self.field_amp_left,
            Direction::Right => &self.field_amp_right,
        }
    }

    /// Emitted photon number towards `d`.
    pub fn integrated_flux(&self, d: Direction) -> f64 {
        trapezoid(self.flux(d), self.sample_interval())
    }

    /// Flux-weighted mean arrival time towards `d`.
    pub fn flux_centroid(&self, d: Direction) -> f64 {
        let f = self.flux(d);
        let tf: Vec<f64> = f.iter().zip(&self.times).map(|(x, t)| x * t).collect();
        trapezoid(&tf, self.sample_interval()) / trapezoid(f, self.sample_interval())
    }

    /// Reduced state of the data qubits Q3, Q4, Q7, Q8 at the end of the run.
    pub fn data_state(&self) -> Result<DensityMatrix> {
        let l = Layout::full();
        let keep: Vec<usize> = Qubit::DATA.iter().map(|q| l.site(*q)).collect::<Result<_>>()?;
        partial_trace(&self.final_state, &keep)
    }

    /// Reduced state of one module's data qubits at the end of the run.
    pub fn module_state(&self, module: ModuleId) -> Result<DensityMatrix> {
        let l = Layout::full();
        let (a, b) = module.data_qubits();
        partial_trace(&self.final_state, &[l.site(a)?, l.site(b)?])
    }

    /// CSV with a commented column description.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("# t_ns: sample time\n");
        s.push_str("# p_q3..p_q8: data-qubit excited populations\n");
        s.push_str("# a_left_re/im, a_right_re/im: output field amplitude <a> in sqrt(1/ns)\n");
        s.push_str("# flux_left, flux_right: output photon flux <a^dag a> in 1/ns\n");
        s.push_str("# loss_left, loss_right: photon flux lost between the modules in 1/ns\n");
        s.push_str("t_ns,p_q3,p_q4,p_q7,p_q8,a_left_re,a_left_im,a_right_re,a_right_im,flux_left,flux_right,loss_left,loss_right\n");
        for k in 0..self.times.len() {
            let p = &self.data_qubit_populations;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.times[k],
                p[0][k],
                p[1][k],
                p[2][k],
                p[3][k],
                self.field_amp_left[k].re,
                self.field_amp_left[k].im,
                self.field_amp_right[k].re,
                self.field_amp_right[k].im,
                self.flux_left[k],
                self.flux_right[k],
                self.loss_flux_left[k],
                self.loss_flux_right[k],
            );
        }
        s
    }
}

/// `(|eg⟩ ± i|ge⟩)/√2` on the two data qubits of `module`, first qubit
/// being the lower-numbered one.
pub fn prepare_entangled(sign: Sign, _module: ModuleId) -> Ket {
    bell_target(sign)
}

/// Two-qubit √iSWAP from `|eg⟩` by exchange `±g(σ₁⁺σ₂⁻ + h.c.)` for
/// `π/(4g)`, with the module's data-qubit decoherence acting throughout.
pub fn prepare_entangled_explicit(sign: Sign, module: ModuleId, device: &DeviceParams, gate: ExplicitGate) -> Result<DensityMatrix> {
    let (qa, qb) = module.data_qubits();
    let sm = Operator::sigma_minus();
    let a = crate::qops::embed(&sm, 0, 2)?;
    let b = crate::qops::embed(&sm, 1, 2)?;
    let s = match sign {
        Sign::Plus => -1.0,
        Sign::Minus => 1.0,
    };
    let x = &a.adjoint() * &b;
    let h = (&x + &x.adjoint()).scale(C64::new(s * gate.coupling, 0.0));
    let mut gen = GeneratorSpec::new(h);
    for (k, q) in [qa, qb].into_iter().enumerate() {
        let op = if k == 0 { &a } else { &b };
        let nr = device.gamma_nr(q)?;
        if nr > 0.0 {
            gen = gen.with_decay(nr, op.clone());
        }
        let phi = device.gamma_phi(q)?.max(0.0);
        if phi > 0.0 {
            gen = gen.with_decay(phi / 2.0, crate::qops::embed(&Operator::sigma_z(), k, 2)?);
        }
    }
    let duration = PI / (4.0 * gate.coupling);
    let steps = (duration / gate.dt).ceil().max(1.0);
    let grid = TimeGrid::new(0.0, duration, duration / steps, steps as usize)?;
    let rho0 = DensityMatrix::from_ket(&Ket::basis(4, 0b10));
    Ok(evolve_with(&rho0, &gen, &grid, &[], EvolveOptions::default())?.final_state)
}

/// State a run of `cfg` ideally leaves behind: the Bell state on the
/// absorber's data qubits after a full transfer, or the four-qubit W state
/// after half emission. The propagation phase enters the absorbed
/// amplitude as `e^{+ikd}`.
pub fn target_state(cfg: &ProtocolConfig) -> Option<Ket> {
    let sign = cfg.prep.sign(cfg.direction)?;
    match cfg.mode {
        Mode::FullTransfer => Some(bell_target(sign)),
        Mode::HalfEmission => Some(w_target(sign, -cfg.device.kd)),
        Mode::EmitOnly | Mode::Transparency => None,
    }
}

/// Fidelity of `r` against [`target_state`], when one exists.
pub fn target_fidelity(cfg: &ProtocolConfig, r: &TrajectoryResult) -> Result<Option<f64>> {
    let Some(target) = target_state(cfg) else { return Ok(None) };
    let rho = match cfg.mode {
        Mode::FullTransfer => r.module_state(cfg.direction.absorber())?,
        _ => r.data_state()?,
    };
    Ok(Some(fidelity(&rho, &target)?))
}

/// Places a state of `sites.len()` qubits onto `sites` of an `n`-site
/// register with every other site in `|g⟩`.
pub fn embed_state(small: &DensityMatrix, sites: &[usize], n: usize) -> Result<DensityMatrix> {
    let k = sites.len();
    if small.dim() != 1 << k {
        return Err(Error::DimensionMismatch { expected: 1 << k, found: small.dim() });
    }
    if let Some(&s) = sites.iter().find(|&&s| s >= n) {
        return Err(Error::SiteOutOfRange { index: s, n });
    }
    let map = |i: usize| -> usize {
        (0..k).filter(|b| i & (1 << (k - 1 - b)) != 0).map(|b| site_bit(sites[b], n)).sum()
    };
    let mut m = Operator::zeros(1 << n).into_matrix();
    let src = small.as_operator().matrix();
    for i in 0..small.dim() {
        for j in 0..small.dim() {
            m[(map(i), map(j))] = src[(i, j)];
        }
    }
    DensityMatrix::new(Operator::from_matrix(m)?)
}

fn seeded(psi_small: &Ket, theta: f64) -> Result<Ket> {
    // cos(θ/2)|gg⟩ − i sin(θ/2)|ψ⟩
    let mut a: Vec<C64> = psi_small.amplitudes().iter().map(|z| z * (-I) * (theta / 2.0).sin()).collect();
    a[0] += C64::new((theta / 2.0).cos(), 0.0);
    Ket::normalized(a)
}

/// Initial eight-qubit state of `cfg`.
pub fn initial_state(cfg: &ProtocolConfig) -> Result<DensityMatrix> {
    let layout = Layout::full();
    let n = layout.n_sites();
    let sign = match &cfg.prep {
        Preparation::Custom(k) => return Ok(DensityMatrix::from_ket(k)),
        p => p.sign(cfg.direction).expect("non-custom"),
    };
    let module = cfg.direction.emitter();
    let (qa, qb) = module.data_qubits();
    let sites = [layout.site(qa)?, layout.site(qb)?];
    let theta = cfg.initial_pi_fraction * PI;
    let small = match cfg.explicit_gate {
        None => DensityMatrix::from_ket(&seeded(&prepare_entangled(sign, module), theta)?),
        Some(gate) => {
            if (cfg.initial_pi_fraction - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter("explicit gate path requires initial_pi_fraction = 1".into()));
            }
            prepare_entangled_explicit(sign, module, &cfg.device, gate)?
        }
    };
    embed_state(&small, &sites, n)
}

/// `(data, waveguide)` pair driven by `role` for a photon travelling `d`.
pub fn role_pair(d: Direction, role: Role) -> (Qubit, Qubit) {
    use Qubit::*;
    match (d, role) {
        (Direction::Right, Role::Emit1) => (Q3, Q1),
        (Direction::Right, Role::Emit2) => (Q4, Q2),
        (Direction::Right, Role::Absorb1) => (Q7, Q5),
        (Direction::Right, Role::Absorb2) => (Q8, Q6),
        (Direction::Left, Role::Emit1) => (Q8, Q6),
        (Direction::Left, Role::Emit2) => (Q7, Q5),
        (Direction::Left, Role::Absorb1) => (Q4, Q2),
        (Direction::Left, Role::Absorb2) => (Q3, Q1),
    }
}

fn role_envelope(cfg: &ProtocolConfig, role: Role, gamma: f64) -> Result<EnvelopeFn> {
    let mut env = cfg.pulses.envelope(role, gamma)?;
    if let Some(models) = &cfg.distortion {
        env = distort(env, &models[role.index()], cfg.grid.t_start, cfg.grid.t_end, cfg.grid.dt / 2.0);
    }
    if cfg.mode == Mode::HalfEmission && role.is_emission() {
        let stop = cfg.pulses.total_duration() / 2.0;
        let inner = env;
        env = Arc::new(move |t: f64| if t <= stop { inner(t) } else { ZERO });
    }
    Ok(env)
}

fn max_excitation(rho: &DensityMatrix) -> usize {
    let pops = rho.populations();
    (0..pops.len()).filter(|&i| pops[i] > 1e-14).map(|i| i.count_ones() as usize).max().unwrap_or(0)
}

/// The generator and output channels for `cfg`.
pub fn build_generator(cfg: &ProtocolConfig) -> Result<crate::network::NetworkSpec> {
    cfg.validate()?;
    let absorber = cfg.direction.absorber();
    let opts = CascadeOptions { decoupled: (cfg.mode == Mode::EmitOnly).then_some(absorber) };
    let mut net = build_cascaded_with(&cfg.device, opts)?;
    for role in Role::ALL {
        if !role.is_emission() && matches!(cfg.mode, Mode::EmitOnly | Mode::Transparency) {
            continue;
        }
        let pair = role_pair(cfg.direction, role);
        let env = role_envelope(cfg, role, cfg.device.gamma_of(pair.1)?)?;
        net.generator.drives.push(parametric_coupling(&net.layout, pair, env)?);
    }
    Ok(net)
}

/// Runs one protocol configuration.
pub fn run(cfg: &ProtocolConfig) -> Result<TrajectoryResult> {
    run_with(cfg, false)
}

/// As [`run`], optionally tracking the smallest eigenvalue of the state.
pub fn run_with(cfg: &ProtocolConfig, track_positivity: bool) -> Result<TrajectoryResult> {
    ProtocolRunner::new(cfg)?.run_pulses_with(&cfg.pulses, track_positivity)
}

/// A configuration with its static generator, observables and initial
/// state already restricted, so repeated runs only rebuild the couplers.
#[derive(Clone, Debug)]
pub struct ProtocolRunner {
    cfg: ProtocolConfig,
    sub: Subspace,
    base: GeneratorSpec,
    couplers: Vec<(Role, Operator)>,
    observables: Vec<Operator>,
    rho0: DensityMatrix,
}

impl ProtocolRunner {
    pub fn new(cfg: &ProtocolConfig) -> Result<Self> {
        cfg.validate()?;
        let absorber = cfg.direction.absorber();
        let opts = CascadeOptions { decoupled: (cfg.mode == Mode::EmitOnly).then_some(absorber) };
        let net = build_cascaded_with(&cfg.device, opts)?;
        let layout = &net.layout;
        let n = layout.n_sites();
        let rho0 = initial_state(cfg)?;
        let sub = Subspace::excitations_at_most(n, max_excitation(&rho0));
        if sub.leakage(&rho0) > 1e-12 {
            return Err(Error::NotInvariant("initial state has weight outside the subspace".into()));
        }

        let mut couplers = Vec::new();
        for role in Role::ALL {
            if !role.is_emission() && matches!(cfg.mode, Mode::EmitOnly | Mode::Transparency) {
                continue;
            }
            let drive = parametric_coupling(layout, role_pair(cfg.direction, role), zero_envelope())?;
            if !sub.is_invariant(&drive.op) || !sub.is_invariant(&drive.op.adjoint()) {
                return Err(Error::NotInvariant(format!("{role:?} coupler")));
            }
            couplers.push((role, sub.restrict(&drive.op)));
        }

        let number: Operator = (0..n)
            .map(|s| crate::qops::embed(&Operator::excited_projector(), s, n))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .fold(Operator::zeros(layout.dim()), |acc, p| &acc + p);
        let mut obs: Vec<Operator> = Qubit::DATA
            .iter()
            .map(|q| layout.op_on(&Operator::excited_projector(), *q))
            .collect::<Result<_>>()?;
        obs.push(net.out_left.clone());
        obs.push(net.out_right.clone());
        obs.push(&net.out_left.adjoint() * &net.out_left);
        obs.push(&net.out_right.adjoint() * &net.out_right);
        obs.push(&net.loss_left.adjoint() * &net.loss_left);
        obs.push(&net.loss_right.adjoint() * &net.loss_right);
        obs.push(number);
        let observables = obs.iter().map(|o| sub.restrict(o)).collect();

        Ok(Self {
            cfg: cfg.clone(),
            base: net.generator.restrict(&sub)?,
            rho0: sub.restrict_state(&rho0),
            sub,
            couplers,
            observables,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    /// Dimension of the subspace the dynamics run in.
    pub fn dim(&self) -> usize {
        self.sub.dim()
    }

    pub fn run(&self) -> Result<TrajectoryResult> {
        self.run_pulses_with(&self.cfg.pulses, false)
    }

    pub fn run_pulses(&self, pulses: &PulseShapes) -> Result<TrajectoryResult> {
        self.run_pulses_with(pulses, false)
    }

    pub fn run_pulses_with(&self, pulses: &PulseShapes, track_positivity: bool) -> Result<TrajectoryResult> {
        let mut cfg = self.cfg.clone();
        cfg.pulses = pulses.clone();
        cfg.validate()?;
        let mut gen = self.base.clone();
        for (role, op) in &self.couplers {
            let (_, wg) = role_pair(cfg.direction, *role);
            let env = role_envelope(&cfg, *role, cfg.device.gamma_of(wg)?)?;
            gen.drives.push(DriveTerm { envelope: env, op: op.clone() });
        }
        let opts = EvolveOptions { snapshots: false, track_positivity };
        let traj = evolve_with(&self.rho0, &gen, &cfg.grid, &self.observables, opts)?;

        let re = |k: usize| traj.real_series(k);
        let mut out = TrajectoryResult {
            times: traj.times.clone(),
            data_qubit_populations: [re(0), re(1), re(2), re(3)],
            field_amp_left: traj.series(4),
            field_amp_right: traj.series(5),
            flux_left: re(6),
            flux_right: re(7),
            loss_flux_left: re(8),
            loss_flux_right: re(9),
            final_state: self.sub.lift_state(&traj.final_state),
            loss_accounting: LossBreakdown::default(),
            initial_excitation: re(10)[0],
            max_trace_drift: traj.max_trace_drift,
            max_hermiticity_defect: traj.max_hermiticity_defect,
            min_eigenvalue: traj.min_eigenvalue,
        };
        let final_number = *re(10).last().expect("at least one sample");
        out.loss_accounting = run_accounting(&out, cfg.direction, final_number);
        Ok(out)
    }
}

fn run_accounting(r: &TrajectoryResult, d: Direction, final_number: f64) -> LossBreakdown {
    let n0 = r.initial_excitation;
    if n0 <= 1e-12 {
        return LossBreakdown::default();
    }
    let h = r.sample_interval();
    let wrong = r.integrated_flux(d.reversed()) / n0;
    let passed = r.integrated_flux(d) / n0;
    let lost = (trapezoid(&r.loss_flux_left, h) + trapezoid(&r.loss_flux_right, h)) / n0;
    let absorbed = *r.module_population(d.absorber()).last().expect("samples") / n0;
    let stranded = (final_number / n0 - absorbed).max(0.0);
    let decohered = (1.0 - final_number / n0 - wrong - passed - lost).max(0.0);
    let c = |x: f64| x.clamp(0.0, 1.0);
    LossBreakdown {
        directionality_error: c(wrong),
        missed_absorption: c(passed),
        propagation_loss: c(lost),
        decoherence_loss: c(decohered),
        residual: c(stranded),
    }
}

/// `∫_band |⟨a(ω)⟩|² dω/2π` with `⟨a(ω)⟩ = Σ a(t_n) e^{iωt_n} Δt`, so a
/// component `e^{-iω₀t}` sits at `ω₀`. The full-band value equals
/// `Σ|a|²Δt`.
pub fn band_power(field: &[C64], dt: f64, center: f64, halfwidth: f64) -> Result<f64> {
    if field.is_empty() || !(dt > 0.0) || !(halfwidth >= 0.0) {
        return Err(Error::InvalidParameter("band power needs samples, dt > 0 and halfwidth ≥ 0".into()));
    }
    let nyquist = PI / dt;
    if (center - halfwidth) < -nyquist || (center + halfwidth) > nyquist {
        return Err(Error::InvalidParameter(format!(
            "band [{}, {}] rad/ns exceeds the Nyquist range ±{nyquist}",
            center - halfwidth,
            center + halfwidth
        )));
    }
    let n = field.len();
    let mut buf = field.to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let dw = 2.0 * PI / (n as f64 * dt);
    let mut total = 0.0;
    for (k, x) in buf.iter().enumerate() {
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        if (kk * dw - center).abs() <= halfwidth {
            total += x.norm_sqr();
        }
    }
    Ok(total * dt / n as f64)
}

/// Half-width of the integration band, 20 MHz.
pub fn default_band_halfwidth() -> f64 {
    mhz_to_rad_per_ns(20.0)
}

/// Loss budget for a photon travelling `direction`, built from separate
/// runs the way the hardware budget is: coherent band powers on the output
/// detectors for directionality and missed absorption, `1 − η²` for
/// propagation, and the drop in peak absorber population caused by
/// data-qubit decoherence at `η = 1`. The residual is what the budget
/// leaves unexplained in the full simulated transfer.
pub fn error_budget(device: &DeviceParams, pulses: &PulseShapes, direction: Direction) -> Result<LossBreakdown> {
    let grid = TimeGrid::new(0.0, pulses.total_duration(), TimeGrid::DEFAULT_DT, 4)?;
    let base = |mode: Mode, dev: &DeviceParams| {
        let mut c = ProtocolConfig::new(direction, mode, dev.clone()).with_grid(grid.clone());
        c.pulses = pulses.clone();
        c
    };
    let hw = default_band_halfwidth();
    let power = |r: &TrajectoryResult, d: Direction| band_power(r.field(d), r.sample_interval(), 0.0, hw);

    // Coherent probes use a π/2 seed so that ⟨a⟩ ≠ 0.
    let full = run(&base(Mode::FullTransfer, device).with_pi_fraction(0.5))?;
    let wrong_way = base(Mode::EmitOnly, device).with_pi_fraction(0.5).with_prep(Preparation::Psi(
        Preparation::Directional.sign(direction).expect("directional").flipped(),
    ));
    let wrong_ref = run(&wrong_way)?;
    let transparent = run(&base(Mode::Transparency, device).with_pi_fraction(0.5))?;
    let ratio = |a: f64, b: f64| if b > 0.0 { (a / b).clamp(0.0, 1.0) } else { 0.0 };
    let directionality_error = ratio(power(&full, direction.reversed())?, power(&wrong_ref, direction.reversed())?);
    let missed_absorption = ratio(power(&full, direction)?, power(&transparent, direction)?);

    let propagation_loss = 1.0 - device.eta2();
    let lossless = device.clone().with_eta2(1.0);
    let clean = run(&base(Mode::FullTransfer, &lossless.clone().without_decoherence()))?;
    let noisy = run(&base(Mode::FullTransfer, &lossless))?;
    let absorber = direction.absorber();
    let decoherence_loss = (clean.peak_population(absorber) - noisy.peak_population(absorber)).clamp(0.0, 1.0);

    let actual = run(&base(Mode::FullTransfer, device))?.peak_population(absorber);
    let explained = directionality_error + missed_absorption + propagation_loss + decoherence_loss;
    let residual = (1.0 - actual - explained).clamp(0.0, 1.0 - explained.min(1.0));
    let b = LossBreakdown { directionality_error, missed_absorption, propagation_loss, decoherence_loss, residual };
    Ok(b)
}

/// Phase `θ(δ) = atan2(γδ, γ²/4 − δ²)` of the transmission through one
/// resonant transparent module.
pub fn transparency_phase(gamma: f64, delta: f64) -> f64 {
    (gamma * delta).atan2(gamma * gamma / 4.0 - delta * delta)
}

/// `(γ/2 + iδ)/(γ/2 − iδ)`.
pub fn transparency_transmission(gamma: f64, delta: f64) -> C64 {
    C64::new(gamma / 2.0, delta) / C64::new(gamma / 2.0, -delta)
}

/// Arrival delay of a sech photon crossing the resonant absorber with its
/// couplers off, relative to the same photon with the absorber removed
/// from the waveguide. Centroids of the transmitted flux.
pub fn transparency_delay(device: &DeviceParams, gamma_ph: f64, direction: Direction) -> Result<f64> {
    let gamma = device.mean_gamma();
    if !(gamma_ph > 0.0 && gamma_ph <= 0.5 * gamma) {
        return Err(Error::InvalidParameter(format!("gamma_ph = {gamma_ph} must lie in (0, γ/2]")));
    }
    let duration = (30.0 / gamma_ph).ceil();
    let grid = TimeGrid::new(0.0, duration + (60.0 / gamma).ceil(), TimeGrid::DEFAULT_DT, 4)?;
    let mk = |mode: Mode| -> Result<ProtocolConfig> {
        let c = ProtocolConfig::new(direction, mode, device.clone()).with_ideal_pulses(gamma_ph, duration)?;
        Ok(c.with_grid(grid.clone()))
    };
    let reference = run(&mk(Mode::EmitOnly)?)?;
    let crossed = run(&mk(Mode::Transparency)?)?;
    Ok(crossed.flux_centroid(direction) - reference.flux_centroid(direction))
}
