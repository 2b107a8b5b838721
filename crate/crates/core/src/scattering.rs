//! Elastic scattering of a weak coherent probe: single-qubit closed form,
//! attenuation extraction and driven steady states of the four waveguide
//! qubits.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{evolve, GeneratorSpec, TimeGrid};
use crate::network::{
    build_waveguide_only_with, rad_per_ns_to_mhz, CascadeOptions, DeviceParams, Direction, ModuleId, Probe,
};
use crate::qops::{expect, trace_distance, DensityMatrix, Ket, Operator};

/// Transmission of a single qubit side-coupled to the waveguide at rate
/// `gamma` and driven at strength `omega_p`:
///
/// `S21 = 1 − γ(1 − iδ/γ₂) / (2γ₂(1 + (δ/γ₂)² + Ω_p²/(Γγ₂)))`
///
/// with `Γ = γ + Γ_nr` and `γ₂ = Γ/2 + γ_φ`.
pub fn s21_single(delta: f64, omega_p: f64, gamma: f64, gamma_phi: f64, gamma_nr: f64) -> C64 {
    let big = gamma + gamma_nr;
    let g2 = big / 2.0 + gamma_phi;
    let x = delta / g2;
    let den = 2.0 * g2 * (1.0 + x * x + omega_p * omega_p / (big * g2));
    C64::new(1.0, 0.0) - C64::new(gamma, -gamma * x) / den
}

/// `η² = Ω_1L Ω_5R / (Ω_1R Ω_5L)`.
pub fn extract_eta2(omega_1l: f64, omega_1r: f64, omega_5l: f64, omega_5r: f64) -> Result<f64> {
    for (name, v) in [("omega_1l", omega_1l), ("omega_1r", omega_1r), ("omega_5l", omega_5l), ("omega_5r", omega_5r)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
        }
    }
    Ok(omega_1l * omega_5r / (omega_1r * omega_5l))
}

/// Drive strength that best explains measured `(δ, S21)` samples under
/// [`s21_single`], by inverting the closed form at each sample and
/// averaging `Ω_p²`.
pub fn fit_drive_strength(samples: &[(f64, C64)], gamma: f64, gamma_phi: f64, gamma_nr: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples to fit".into()));
    }
    let big = gamma + gamma_nr;
    let g2 = big / 2.0 + gamma_phi;
    let mut acc = 0.0;
    for &(delta, s) in samples {
        let x = delta / g2;
        let dip = C64::new(1.0, 0.0) - s;
        if dip.norm() < 1e-15 {
            return Err(Error::InvalidParameter(format!("no scattering signal at δ = {delta}")));
        }
        let d = C64::new(gamma, -gamma * x) / (dip * 2.0 * g2);
        acc += big * g2 * (d.re - 1.0 - x * x);
    }
    Ok((acc / samples.len() as f64).max(0.0).sqrt())
}

/// One transmission sample. `power` is `Ω_p/γ̄`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub detuning: f64,
    pub power: f64,
    pub s21: C64,
    pub converged: bool,
}

impl ScatterPoint {
    pub fn power_db(&self) -> f64 {
        20.0 * self.power.log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyStateOptions {
    /// Chunk length in units of `1/γ̄`.
    pub chunk_gammas: f64,
    pub tolerance: f64,
    pub max_chunks: usize,
    pub dt: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self { chunk_gammas: 50.0, tolerance: 1e-7, max_chunks: 40, dt: 0.05 }
    }
}

/// Integrates `gen` from `rho0` in chunks of `chunk_gammas/gamma` until the
/// trace distance between successive chunk endpoints falls below the
/// tolerance. Returns the last state and whether it converged.
pub fn steady_state(gen: &GeneratorSpec, rho0: &DensityMatrix, gamma: f64, opts: &SteadyStateOptions) -> Result<(DensityMatrix, bool)> {
    let chunk = opts.chunk_gammas / gamma;
    let steps = (chunk / opts.dt).ceil().max(1.0);
    let grid = TimeGrid::new(0.0, chunk, chunk / steps, steps as usize)?;
    let mut rho = rho0.clone();
    for _ in 0..opts.max_chunks {
        let next = evolve(&rho, gen, &grid, &[])?.final_state;
        let d = trace_distance(next.as_operator(), rho.as_operator());
        rho = next;
        if d <= opts.tolerance {
            return Ok((rho, true));
        }
    }
    Ok((rho, false))
}

/// Steady state from the null space of the Liouvillian, with one row of
/// the linear system replaced by the trace condition. Returns the state and
/// the largest entry of `L(ρ)/γ`.
pub fn steady_state_direct(gen: &GeneratorSpec, gamma: f64) -> Result<(DensityMatrix, f64)> {
    if !gen.drives.is_empty() {
        return Err(Error::InvalidParameter("direct steady state needs a time-independent generator".into()));
    }
    let d = gen.dim();
    let n = d * d;
    let mut l = DMatrix::<C64>::zeros(n, n);
    for j in 0..d {
        for i in 0..d {
            let mut e = DMatrix::<C64>::zeros(d, d);
            e[(i, j)] = C64::new(1.0, 0.0);
            let out = gen.apply(0.0, &DensityMatrix::new_unchecked(Operator::from_matrix(e)?))?;
            for (k, v) in out.matrix().iter().enumerate() {
                l[(k, i + d * j)] = *v;
            }
        }
    }
    let mut rhs = DVector::<C64>::zeros(n);
    for k in 0..d {
        l[(0, k + d * k)] = C64::new(1.0, 0.0);
    }
    for c in 0..n {
        if c % (d + 1) != 0 {
            l[(0, c)] = C64::new(0.0, 0.0);
        }
    }
    rhs[0] = C64::new(1.0, 0.0);
    let lu = l.lu();
    let pivots: Vec<f64> = lu.u().diagonal().iter().map(|p| p.norm()).collect();
    let largest = pivots.iter().cloned().fold(0.0, f64::max);
    if pivots.iter().any(|p| *p <= 1e-10 * largest) {
        return Err(Error::NotConverged("steady state is not unique".into()));
    }
    let x = lu.solve(&rhs).ok_or_else(|| Error::NotConverged("singular Liouvillian".into()))?;
    let m = DMatrix::from_column_slice(d, d, x.as_slice());
    let herm = (&m + m.adjoint()).scale(0.5);
    let rho = DensityMatrix::new_unchecked(Operator::from_matrix(herm)?);
    let residual = gen.apply(0.0, &rho)?.max_norm() / gamma;
    Ok((rho, residual))
}

fn probe_for(device: &DeviceParams, direction: Direction, delta: f64, power: f64) -> Probe {
    let gamma = device.mean_gamma();
    // Ω_p = √(2γ)|α|
    let alpha = C64::new(power * gamma / (2.0 * gamma).sqrt(), 0.0);
    Probe { direction, alpha, detuning: delta }
}

fn step_for(gamma: f64, power: f64, delta: f64) -> f64 {
    let fastest = gamma * (1.0 + power) + delta.abs();
    (0.2 / fastest).min(0.05)
}

/// Steady-state transmission of the four waveguide qubits at one point.
/// With `decoupled`, that module is removed from the waveguide.
pub fn four_qubit_point(
    device: &DeviceParams,
    direction: Direction,
    delta: f64,
    power: f64,
    decoupled: Option<ModuleId>,
    opts: &SteadyStateOptions,
) -> Result<(ScatterPoint, C64)> {
    let probe = probe_for(device, direction, delta, power);
    let cascade = CascadeOptions { decoupled };
    let net = build_waveguide_only_with(device, Some(&probe), cascade)?;
    let (rho, converged) = match steady_state_direct(&net.generator, device.mean_gamma()) {
        Ok((rho, res)) if res <= opts.tolerance => (rho, true),
        _ => {
            let rho0 = DensityMatrix::from_ket(&Ket::basis(net.layout.dim(), 0));
            let opts = SteadyStateOptions { dt: opts.dt.min(step_for(device.mean_gamma(), power, delta)), ..*opts };
            steady_state(&net.generator, &rho0, device.mean_gamma(), &opts)?
        }
    };
    let eta = C64::new(device.eta, 0.0);
    let t = eta + expect(net.output(direction), &rho)? / probe.alpha;
    let r = expect(net.output(direction.reversed()), &rho)? / probe.alpha;
    if !(t.re.is_finite() && t.im.is_finite()) {
        return Err(Error::NonFinite { t: f64::NAN });
    }
    Ok((ScatterPoint { detuning: delta, power, s21: t, converged }, r))
}

/// Transmission grid, rows ordered detuning-major. Points run in parallel;
/// a point that fails to converge is kept with `converged = false`.
pub fn sweep_four_qubit(device: &DeviceParams, detunings: &[f64], powers: &[f64]) -> Result<Vec<ScatterPoint>> {
    sweep_four_qubit_with(device, Direction::Right, detunings, powers, &SteadyStateOptions::default())
}

pub fn sweep_four_qubit_with(
    device: &DeviceParams,
    direction: Direction,
    detunings: &[f64],
    powers: &[f64],
    opts: &SteadyStateOptions,
) -> Result<Vec<ScatterPoint>> {
    device.validate()?;
    if let Some(p) = powers.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidParameter(format!("power {p} must be positive")));
    }
    let jobs: Vec<(f64, f64)> = detunings.iter().flat_map(|&d| powers.iter().map(move |&p| (d, p))).collect();
    jobs.par_iter()
        .map(|&(d, p)| four_qubit_point(device, direction, d, p, None, opts).map(|(pt, _)| pt))
        .collect()
}

/// `(t, r)` of a single module driven from `direction` with the other
/// module removed from the waveguide, at low power.
pub fn single_module_response(device: &DeviceParams, module: ModuleId, direction: Direction, delta: f64) -> Result<(C64, C64)> {
    let (pt, r) = four_qubit_point(device, direction, delta, 1e-4, Some(module.other()), &SteadyStateOptions::default())?;
    Ok((pt.s21, r))
}

/// `detuning_MHz,power_dB_rel,re_s21,im_s21,converged`.
pub fn to_csv(points: &[ScatterPoint]) -> String {
    let mut s = String::from("detuning_MHz,power_dB_rel,re_s21,im_s21,converged\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            rad_per_ns_to_mhz(p.detuning),
            p.power_db(),
            p.s21.re,
            p.s21.im,
            p.converged
        );
    }
    s
}

/// Single-qubit master equation with probe `Ω_p σ_x/2` and detuning `δ`;
/// used as an independent route to [`s21_single`].
pub fn single_qubit_generator(delta: f64, omega_p: f64, gamma: f64, gamma_phi: f64, gamma_nr: f64) -> GeneratorSpec {
    // σ_z here has |g⟩ → +1, so the qubit energy term carries a minus sign.
    let h = &Operator::sigma_z().scale(C64::new(-delta / 2.0, 0.0)) + &Operator::sigma_x().scale(C64::new(omega_p / 2.0, 0.0));
    let mut g = GeneratorSpec::new(h).with_decay(gamma + gamma_nr, Operator::sigma_minus());
    if gamma_phi > 0.0 {
        g = g.with_decay(gamma_phi / 2.0, Operator::sigma_z());
    }
    g
}
