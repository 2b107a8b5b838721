//! Physical models: two-qubit chiral modules, the cascaded four-waveguide-qubit
//! pair with propagation loss, and the full eight-qubit register with
//! parametric data-qubit coupling and data-qubit decoherence.
//!
//! All dynamics are in the frame rotating at the waveguide-qubit frequency.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{DriveTerm, EnvelopeFn, GeneratorSpec};
use crate::qops::{embed, Operator};
use crate::slh::{self, SlhTriplet};

pub const fn mhz_to_rad_per_ns(f_mhz: f64) -> f64 {
    2.0 * std::f64::consts::PI * f_mhz * 1e-3
}

pub const fn rad_per_ns_to_mhz(w: f64) -> f64 {
    w / (2.0 * std::f64::consts::PI * 1e-3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    /// Module that emits when photons travel this way.
    pub fn emitter(self) -> ModuleId {
        match self {
            Direction::Right => ModuleId::A,
            Direction::Left => ModuleId::B,
        }
    }

    pub fn absorber(self) -> ModuleId {
        self.emitter().other()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModuleId {
    A,
    B,
}

impl ModuleId {
    pub fn other(self) -> Self {
        match self {
            ModuleId::A => ModuleId::B,
            ModuleId::B => ModuleId::A,
        }
    }

    /// (first, second) waveguide qubits in left-to-right order.
    pub fn waveguide_qubits(self) -> (Qubit, Qubit) {
        match self {
            ModuleId::A => (Qubit::Q1, Qubit::Q2),
            ModuleId::B => (Qubit::Q5, Qubit::Q6),
        }
    }

    /// Data qubits paired with the waveguide qubits above.
    pub fn data_qubits(self) -> (Qubit, Qubit) {
        match self {
            ModuleId::A => (Qubit::Q3, Qubit::Q4),
            ModuleId::B => (Qubit::Q7, Qubit::Q8),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Qubit {
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Q6,
    Q7,
    Q8,
}

impl Qubit {
    pub const ALL: [Qubit; 8] =
        [Qubit::Q1, Qubit::Q2, Qubit::Q3, Qubit::Q4, Qubit::Q5, Qubit::Q6, Qubit::Q7, Qubit::Q8];
    pub const WAVEGUIDE: [Qubit; 4] = [Qubit::Q1, Qubit::Q2, Qubit::Q5, Qubit::Q6];
    pub const DATA: [Qubit; 4] = [Qubit::Q3, Qubit::Q4, Qubit::Q7, Qubit::Q8];

    pub fn label(self) -> &'static str {
        ["Q1", "Q2", "Q3", "Q4", "Q5", "Q6", "Q7", "Q8"][self as usize]
    }

    pub fn is_data(self) -> bool {
        Self::DATA.contains(&self)
    }

    /// Left/right mirror image of the device.
    pub fn mirrored(self) -> Qubit {
        match self {
            Qubit::Q1 => Qubit::Q6,
            Qubit::Q2 => Qubit::Q5,
            Qubit::Q3 => Qubit::Q8,
            Qubit::Q4 => Qubit::Q7,
            Qubit::Q5 => Qubit::Q2,
            Qubit::Q6 => Qubit::Q1,
            Qubit::Q7 => Qubit::Q4,
            Qubit::Q8 => Qubit::Q3,
        }
    }
}

/// Assignment of physical qubits to register sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    sites: Vec<Qubit>,
}

impl Layout {
    pub fn full() -> Self {
        Self { sites: Qubit::ALL.to_vec() }
    }

    pub fn waveguide_only() -> Self {
        Self { sites: Qubit::WAVEGUIDE.to_vec() }
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.sites.len()
    }

    pub fn qubits(&self) -> &[Qubit] {
        &self.sites
    }

    pub fn site(&self, q: Qubit) -> Result<usize> {
        self.sites
            .iter()
            .position(|&s| s == q)
            .ok_or_else(|| Error::InvalidParameter(format!("{} is not in this layout", q.label())))
    }

    pub fn sigma_minus(&self, q: Qubit) -> Result<Operator> {
        embed(&Operator::sigma_minus(), self.site(q)?, self.n_sites())
    }

    pub fn op_on(&self, site_op: &Operator, q: Qubit) -> Result<Operator> {
        embed(site_op, self.site(q)?, self.n_sites())
    }

    /// Site permutation implementing the mirror image, as a basis-index map.
    pub fn mirror_index(&self, index: usize) -> usize {
        let n = self.n_sites();
        let mut out = 0;
        for (s, q) in self.sites.iter().enumerate() {
            if index & (1 << (n - 1 - s)) != 0 {
                let t = self.site(q.mirrored()).expect("layout closed under mirroring");
                out |= 1 << (n - 1 - t);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Q1, Q2, Q5, Q6 in rad/ns.
    pub gamma: [f64; 4],
    pub kd: f64,
    /// Amplitude transmissivity.
    pub eta: f64,
    /// Q3, Q4, Q7, Q8 in ns; infinite means no decay.
    pub t1_data: [f64; 4],
    /// Q3, Q4, Q7, Q8 in ns; infinite means no dephasing.
    pub t2star_data: [f64; 4],
    pub intra_module_phase: f64,
    pub residual_exchange: f64,
}

impl DeviceParams {
    pub const NOMINAL_GAMMA_MHZ: f64 = 17.0;

    /// Lossless, decoherence-free device at γ/2π = 17 MHz.
    pub fn nominal() -> Self {
        Self::uniform(mhz_to_rad_per_ns(Self::NOMINAL_GAMMA_MHZ))
    }

    pub fn uniform(gamma: f64) -> Self {
        Self {
            gamma: [gamma; 4],
            kd: 0.0,
            eta: 1.0,
            t1_data: [f64::INFINITY; 4],
            t2star_data: [f64::INFINITY; 4],
            intra_module_phase: FRAC_PI_2,
            residual_exchange: 0.0,
        }
    }

    /// Measured couplings, coherence times and attenuation of the device.
    pub fn measured() -> Self {
        Self {
            gamma: [17.7, 17.3, 17.9, 17.1].map(mhz_to_rad_per_ns),
            kd: 0.0,
            eta: 0.82_f64.sqrt(),
            t1_data: [7.9e3, 4.4e3, 8.1e3, 6.0e3],
            t2star_data: [3.2e3, 2.0e3, 4.5e3, 5.4e3],
            intra_module_phase: FRAC_PI_2,
            residual_exchange: 0.0,
        }
    }

    pub fn with_eta2(mut self, eta2: f64) -> Self {
        self.eta = eta2.sqrt();
        self
    }

    pub fn with_kd(mut self, kd: f64) -> Self {
        self.kd = kd;
        self
    }

    pub fn without_decoherence(mut self) -> Self {
        self.t1_data = [f64::INFINITY; 4];
        self.t2star_data = [f64::INFINITY; 4];
        self
    }

    pub fn eta2(&self) -> f64 {
        self.eta * self.eta
    }

    /// Mirror image: Q1↔Q6, Q2↔Q5, Q3↔Q8, Q4↔Q7.
    pub fn mirrored(&self) -> Self {
        let g = self.gamma;
        let t1 = self.t1_data;
        let t2 = self.t2star_data;
        Self {
            gamma: [g[3], g[2], g[1], g[0]],
            t1_data: [t1[3], t1[2], t1[1], t1[0]],
            t2star_data: [t2[3], t2[2], t2[1], t2[0]],
            ..self.clone()
        }
    }

    pub fn gamma_of(&self, q: Qubit) -> Result<f64> {
        Qubit::WAVEGUIDE
            .iter()
            .position(|&w| w == q)
            .map(|i| self.gamma[i])
            .ok_or_else(|| Error::InvalidParameter(format!("{} is not a waveguide qubit", q.label())))
    }

    pub fn module_gamma(&self, m: ModuleId) -> f64 {
        let (a, b) = m.waveguide_qubits();
        0.5 * (self.gamma_of(a).unwrap() + self.gamma_of(b).unwrap())
    }

    /// Mean waveguide coupling over all four waveguide qubits.
    pub fn mean_gamma(&self) -> f64 {
        self.gamma.iter().sum::<f64>() / 4.0
    }

    fn data_index(q: Qubit) -> Result<usize> {
        Qubit::DATA
            .iter()
            .position(|&d| d == q)
            .ok_or_else(|| Error::InvalidParameter(format!("{} is not a data qubit", q.label())))
    }

    /// Non-radiative decay rate `1/T1` of a data qubit.
    pub fn gamma_nr(&self, q: Qubit) -> Result<f64> {
        Ok(1.0 / self.t1_data[Self::data_index(q)?])
    }

    /// Pure dephasing rate `1/T2* - 1/(2 T1)` of a data qubit.
    pub fn gamma_phi(&self, q: Qubit) -> Result<f64> {
        let i = Self::data_index(q)?;
        Ok(1.0 / self.t2star_data[i] - 0.5 / self.t1_data[i])
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidParameter("waveguide couplings must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("eta = {} outside [0, 1]", self.eta)));
        }
        if !self.kd.is_finite() || !self.intra_module_phase.is_finite() || !self.residual_exchange.is_finite() {
            return Err(Error::InvalidParameter("phases and exchange must be finite".into()));
        }
        for q in Qubit::DATA {
            let i = Self::data_index(q)?;
            if !(self.t1_data[i] > 0.0) || !(self.t2star_data[i] > 0.0) {
                return Err(Error::InvalidParameter(format!("{} coherence times must be positive", q.label())));
            }
            let phi = self.gamma_phi(q)?;
            if phi < -1e-15 {
                return Err(Error::InvalidParameter(format!(
                    "{}: T2* exceeds 2·T1, negative pure dephasing {phi}",
                    q.label()
                )));
            }
        }
        Ok(())
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self::nominal()
    }
}

/// `σ_a + e^{±iφ}σ_b` with each term weighted by `√(γ_j/γ̄)`; `+` for
/// leftward emission, `−` for rightward.
pub fn collective_jump_in(layout: &Layout, module: ModuleId, direction: Direction, params: &DeviceParams) -> Result<Operator> {
    let (qa, qb) = module.waveguide_qubits();
    let mean = params.module_gamma(module);
    let wa = (params.gamma_of(qa)? / mean).sqrt();
    let wb = (params.gamma_of(qb)? / mean).sqrt();
    let sign = match direction {
        Direction::Left => 1.0,
        Direction::Right => -1.0,
    };
    let phase = C64::from_polar(wb, sign * params.intra_module_phase);
    Ok(&layout.sigma_minus(qa)?.scale(C64::new(wa, 0.0)) + &layout.sigma_minus(qb)?.scale(phase))
}

/// Collective jump on the full eight-qubit register.
pub fn collective_jump(module: ModuleId, direction: Direction, params: &DeviceParams) -> Operator {
    collective_jump_in(&Layout::full(), module, direction, params).expect("full layout holds every qubit")
}

/// Options for assembling the cascaded model.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CascadeOptions {
    /// Remove a module's waveguide qubits from the waveguide entirely.
    pub decoupled: Option<ModuleId>,
}

fn module_triplet(layout: &Layout, m: ModuleId, dir: Direction, p: &DeviceParams, opts: CascadeOptions, h: Option<&Operator>) -> Result<SlhTriplet> {
    let c = if opts.decoupled == Some(m) {
        Operator::zeros(layout.dim())
    } else {
        collective_jump_in(layout, m, dir, p)?
    };
    Ok(slh::element_module(&c, p.module_gamma(m), h))
}

/// `(G1, G2)`: rightward `G_RB ◁ G_φ ◁ G_BS ◁ G_RA` and leftward
/// `G_LA ◁ G_φ ◁ G_BS ◁ G_LB`, optionally with a coherent input on the
/// upstream end of one direction and a local Hamiltonian on each module.
pub fn cascade_triplets(
    layout: &Layout,
    p: &DeviceParams,
    opts: CascadeOptions,
    drive: Option<(Direction, C64)>,
    local_h: Option<(&Operator, &Operator)>,
) -> Result<(SlhTriplet, SlhTriplet)> {
    let dim = layout.dim();
    let bs = slh::element_beamsplitter(p.eta, dim)?;
    let ph = slh::element_phase(p.kd, 2, dim);
    let (ha, hb) = match local_h {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    let ra = module_triplet(layout, ModuleId::A, Direction::Right, p, opts, ha)?;
    let rb = module_triplet(layout, ModuleId::B, Direction::Right, p, opts, hb)?;
    let la = module_triplet(layout, ModuleId::A, Direction::Left, p, opts, None)?;
    let lb = module_triplet(layout, ModuleId::B, Direction::Left, p, opts, None)?;
    let drv = |d: Direction| drive.filter(|(dd, _)| *dd == d).map(|(_, a)| slh::element_drive(a, dim));
    let g1 = match drv(Direction::Right) {
        Some(g) => slh::series_chain(&[&g, &ra, &bs, &ph, &rb])?,
        None => slh::series_chain(&[&ra, &bs, &ph, &rb])?,
    };
    let g2 = match drv(Direction::Left) {
        Some(g) => slh::series_chain(&[&g, &lb, &bs, &ph, &la])?,
        None => slh::series_chain(&[&lb, &bs, &ph, &la])?,
    };
    Ok((g1, g2))
}

/// Output and loss channels of a network, as operators whose expectation is
/// a field amplitude (√(1/ns)) and whose `⟨L†L⟩` is a photon flux (1/ns).
#[derive(Clone, Debug)]
pub struct NetworkSpec {
    pub generator: GeneratorSpec,
    pub layout: Layout,
    /// `√(γ/2)(η c_RA + e^{-ikd} c_RB)`.
    pub out_right: Operator,
    /// `√(γ/2)(c_LA + η e^{ikd} c_LB)`.
    pub out_left: Operator,
    /// `√(γ/2)√(1-η²) c_RA`.
    pub loss_right: Operator,
    /// `√(γ/2)√(1-η²) c_LB`.
    pub loss_left: Operator,
}

impl NetworkSpec {
    pub fn site(&self, q: Qubit) -> Result<usize> {
        self.layout.site(q)
    }

    pub fn output(&self, d: Direction) -> &Operator {
        match d {
            Direction::Left => &self.out_left,
            Direction::Right => &self.out_right,
        }
    }

    pub fn loss(&self, d: Direction) -> &Operator {
        match d {
            Direction::Left => &self.loss_left,
            Direction::Right => &self.loss_right,
        }
    }
}

fn scaled_jump(layout: &Layout, m: ModuleId, d: Direction, p: &DeviceParams, opts: CascadeOptions) -> Result<Operator> {
    if opts.decoupled == Some(m) {
        return Ok(Operator::zeros(layout.dim()));
    }
    Ok(collective_jump_in(layout, m, d, p)?.scale(C64::new((p.module_gamma(m) / 2.0).sqrt(), 0.0)))
}

fn output_channels(layout: &Layout, p: &DeviceParams, opts: CascadeOptions) -> Result<[Operator; 4]> {
    let ra = scaled_jump(layout, ModuleId::A, Direction::Right, p, opts)?;
    let rb = scaled_jump(layout, ModuleId::B, Direction::Right, p, opts)?;
    let la = scaled_jump(layout, ModuleId::A, Direction::Left, p, opts)?;
    let lb = scaled_jump(layout, ModuleId::B, Direction::Left, p, opts)?;
    let eta = C64::new(p.eta, 0.0);
    let leak = C64::new((1.0 - p.eta * p.eta).max(0.0).sqrt(), 0.0);
    let fwd = C64::from_polar(1.0, p.kd);
    Ok([
        &ra.scale(eta) + &rb.scale(fwd.conj()),
        &la + &lb.scale(eta * fwd),
        ra.scale(leak),
        lb.scale(leak),
    ])
}

fn exchange(layout: &Layout, a: Qubit, b: Qubit, j: f64) -> Result<Operator> {
    let x = &layout.sigma_minus(a)?.adjoint() * &layout.sigma_minus(b)?;
    Ok((&x + &x.adjoint()).scale(C64::new(j, 0.0)))
}

fn residual_exchange(layout: &Layout, p: &DeviceParams) -> Result<Operator> {
    let mut h = Operator::zeros(layout.dim());
    if p.residual_exchange != 0.0 {
        for m in [ModuleId::A, ModuleId::B] {
            let (a, b) = m.waveguide_qubits();
            h += &exchange(layout, a, b, p.residual_exchange)?;
        }
    }
    Ok(h)
}

fn add_data_decoherence(gen: &mut GeneratorSpec, layout: &Layout, p: &DeviceParams) -> Result<()> {
    for q in Qubit::DATA {
        if layout.site(q).is_err() {
            continue;
        }
        let nr = p.gamma_nr(q)?;
        if nr > 0.0 {
            gen.push_term(crate::lindblad::LindbladTerm { rate: nr, a: layout.sigma_minus(q)?, b: layout.sigma_minus(q)? });
        }
        let phi = p.gamma_phi(q)?.max(0.0);
        if phi > 0.0 {
            let z = layout.op_on(&Operator::sigma_z(), q)?;
            gen.push_term(crate::lindblad::LindbladTerm { rate: phi / 2.0, a: z.clone(), b: z });
        }
    }
    Ok(())
}

/// The eight-qubit cascaded model without coupling pulses: waveguide part
/// from `G1 ⊞ G2`, residual intra-module exchange and data-qubit decoherence.
pub fn build_cascaded(params: &DeviceParams) -> Result<NetworkSpec> {
    build_cascaded_with(params, CascadeOptions::default())
}

pub fn build_cascaded_with(params: &DeviceParams, opts: CascadeOptions) -> Result<NetworkSpec> {
    build_on(Layout::full(), params, opts)
}

fn build_on(layout: Layout, params: &DeviceParams, opts: CascadeOptions) -> Result<NetworkSpec> {
    params.validate()?;
    let (g1, g2) = cascade_triplets(&layout, params, opts, None, None)?;
    let g = slh::concat(&g1, &g2)?;
    let mut generator = g.to_generator();
    generator.add_hamiltonian(&residual_exchange(&layout, params)?);
    add_data_decoherence(&mut generator, &layout, params)?;
    let [out_right, out_left, loss_right, loss_left] = output_channels(&layout, params, opts)?;
    Ok(NetworkSpec { generator, layout, out_right, out_left, loss_right, loss_left })
}

/// Exchange term `e(t)σ_w⁺σ_d⁻ + h.c.` between a data qubit and its
/// waveguide qubit.
pub fn parametric_coupling(layout: &Layout, pair: (Qubit, Qubit), envelope: EnvelopeFn) -> Result<DriveTerm> {
    let (data, wg) = pair;
    let ok = matches!(
        (data, wg),
        (Qubit::Q3, Qubit::Q1) | (Qubit::Q4, Qubit::Q2) | (Qubit::Q7, Qubit::Q5) | (Qubit::Q8, Qubit::Q6)
    );
    if !ok {
        return Err(Error::InvalidParameter(format!(
            "({}, {}) is not a data/waveguide coupler pair",
            data.label(),
            wg.label()
        )));
    }
    let op = &layout.sigma_minus(wg)?.adjoint() * &layout.sigma_minus(data)?;
    Ok(DriveTerm { envelope, op })
}

/// Coherent probe on the four waveguide qubits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub direction: Direction,
    /// Input amplitude `⟨a_in⟩` in √(1/ns).
    pub alpha: C64,
    /// `ω_q − ω_p` in rad/ns.
    pub detuning: f64,
}

fn detuning_hamiltonian(layout: &Layout, m: ModuleId, delta: f64) -> Result<Operator> {
    let (a, b) = m.waveguide_qubits();
    let z = &layout.op_on(&Operator::sigma_z(), a)? + &layout.op_on(&Operator::sigma_z(), b)?;
    Ok(z.scale(C64::new(-delta / 2.0, 0.0)))
}

/// Effective drive Hamiltonian `Ω c_up† + η e^{ikd} Ω c_down† + h.c.` with
/// `Ω = -i√(γ/2) α`.
pub fn probe_hamiltonian(layout: &Layout, p: &DeviceParams, probe: &Probe) -> Result<Operator> {
    probe_hamiltonian_with(layout, p, probe, CascadeOptions::default())
}

fn probe_hamiltonian_with(layout: &Layout, p: &DeviceParams, probe: &Probe, opts: CascadeOptions) -> Result<Operator> {
    let d = probe.direction;
    let up = scaled_jump(layout, d.emitter(), d, p, opts)?;
    let down = scaled_jump(layout, d.absorber(), d, p, opts)?;
    let omega = C64::new(0.0, -1.0) * probe.alpha;
    let down_amp = omega * C64::from_polar(p.eta, p.kd);
    let h = &up.adjoint().scale(omega) + &down.adjoint().scale(down_amp);
    Ok(&h + &h.adjoint())
}

/// Four-waveguide-qubit model (sites Q1, Q2, Q5, Q6) under an optional probe.
///
/// The drive enters as a Hamiltonian, with the coherent part removed from the
/// output Lindblad operators.
pub fn build_waveguide_only(params: &DeviceParams, probe: Option<&Probe>) -> Result<NetworkSpec> {
    build_waveguide_only_with(params, probe, CascadeOptions::default())
}

pub fn build_waveguide_only_with(params: &DeviceParams, probe: Option<&Probe>, opts: CascadeOptions) -> Result<NetworkSpec> {
    let layout = Layout::waveguide_only();
    let mut spec = build_on(layout.clone(), params, opts)?;
    if let Some(pr) = probe {
        for m in [ModuleId::A, ModuleId::B] {
            spec.generator.add_hamiltonian(&detuning_hamiltonian(&layout, m, pr.detuning)?);
        }
        spec.generator.add_hamiltonian(&probe_hamiltonian_with(&layout, params, pr, opts)?);
    }
    Ok(spec)
}

/// Same model lowered directly from the driven SLH network, with the
/// coherent amplitude kept inside the output Lindblad operator.
pub fn build_waveguide_only_slh(params: &DeviceParams, probe: &Probe) -> Result<GeneratorSpec> {
    params.validate()?;
    let layout = Layout::waveguide_only();
    let ha = detuning_hamiltonian(&layout, ModuleId::A, probe.detuning)?;
    let hb = detuning_hamiltonian(&layout, ModuleId::B, probe.detuning)?;
    let (g1, g2) = cascade_triplets(
        &layout,
        params,
        CascadeOptions::default(),
        Some((probe.direction, probe.alpha)),
        Some((&ha, &hb)),
    )?;
    let mut gen = slh::concat(&g1, &g2)?.to_generator();
    gen.add_hamiltonian(&residual_exchange(&layout, params)?);
    Ok(gen)
}

/// Bidirectional master equation of the four waveguide qubits (sin/cos form),
/// with intra-module exchange cancelled.
pub fn bidirectional_reference(gamma: f64, kd: f64) -> Result<GeneratorSpec> {
    let layout = Layout::waveguide_only();
    let s = |q| layout.sigma_minus(q);
    let (q1, q2, q5, q6) = (Qubit::Q1, Qubit::Q2, Qubit::Q5, Qubit::Q6);
    let pairs = [(q1, q5, kd), (q2, q6, kd), (q1, q6, kd + FRAC_PI_2), (q2, q5, kd - FRAC_PI_2)];
    let mut h = Operator::zeros(layout.dim());
    for &(a, b, phase) in &pairs {
        h += &exchange(&layout, a, b, gamma / 2.0 * phase.sin())?;
    }
    let mut gen = GeneratorSpec::new(h);
    for q in Qubit::WAVEGUIDE {
        gen = gen.with_decay(gamma, s(q)?);
    }
    for &(a, b, phase) in &pairs {
        let c = gamma * phase.cos();
        if c.abs() > 0.0 {
            gen = gen.with_correlated(1.0, s(a)?.scale(C64::new(c, 0.0)), s(b)?);
        }
    }
    Ok(gen)
}
