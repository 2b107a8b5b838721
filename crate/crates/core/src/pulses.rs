//! Photon wavepackets, coupling envelopes and the segmented I/Q pulse
//! parameterization.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::EnvelopeFn;

/// `f(t) = (√γ_ph / 2) sech(γ_ph t / 2)`; unit-normalized in `|f|²`.
pub fn sech_photon(t: f64, gamma_ph: f64) -> f64 {
    0.5 * gamma_ph.sqrt() * sech(0.5 * gamma_ph * t)
}

pub fn sech(x: f64) -> f64 {
    let a = (-x.abs()).exp();
    2.0 * a / (1.0 + a * a)
}

/// Coupling envelope that releases a sech photon of bandwidth `gamma_ph`
/// from a module with emission rate `gamma`.
///
/// The envelope vanishes as `t → -∞` and approaches the plateau
/// `(γ_ph/2)√(γ/γ_ph − 1)` as `t → +∞`.
pub fn ideal_coupling(t: f64, gamma: f64, gamma_ph: f64) -> Result<f64> {
    if !(gamma_ph > 0.0) || gamma_ph > gamma * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "photon bandwidth {gamma_ph} must lie in (0, {gamma}]"
        )));
    }
    let r = (gamma / gamma_ph).max(1.0);
    let x = 0.5 * gamma_ph * t;
    let g = if x >= 0.0 {
        let u = (-2.0 * x).exp();
        let num = (r - 1.0) + (r + 1.0) * u;
        let den = (r - 1.0) + r * u;
        if den <= 0.0 {
            0.0
        } else {
            0.25 * gamma_ph * (2.0 / (1.0 + u)) * num / den.sqrt()
        }
    } else {
        let e = (2.0 * x).exp();
        let num = (r + 1.0) + (r - 1.0) * e;
        let den = r + (r - 1.0) * e;
        0.25 * gamma_ph * sech(x) * num / den.sqrt()
    };
    Ok(g)
}

/// Limit of [`ideal_coupling`] as `t → +∞`.
pub fn ideal_coupling_plateau(gamma: f64, gamma_ph: f64) -> f64 {
    0.5 * gamma_ph * (gamma / gamma_ph - 1.0).max(0.0).sqrt()
}

/// Which of the four coupling pulses, in propagation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Emit1,
    Emit2,
    Absorb1,
    Absorb2,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Emit1, Role::Emit2, Role::Absorb1, Role::Absorb2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_emission(self) -> bool {
        matches!(self, Role::Emit1 | Role::Emit2)
    }

    pub fn key(self) -> &'static str {
        ["emit1", "emit2", "absorb1", "absorb2"][self.index()]
    }
}

pub const SEGMENTS: usize = 8;
pub const PARAMETER_COUNT: usize = 4 * SEGMENTS * 2 + 4 + 4 + 1;

/// Four segmented I/Q envelopes plus per-envelope detuning and phase and a
/// global absorber delay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSet {
    /// `segments[role][k] = (I, Q)` in rad/ns.
    pub segments: [[(f64, f64); SEGMENTS]; 4],
    /// rad/ns.
    pub detuning: [f64; 4],
    pub phase: [f64; 4],
    /// Shift of the absorption envelopes in ns.
    pub delay: f64,
    pub total_duration: f64,
    pub g_max: f64,
}

impl PulseSet {
    pub const DEFAULT_DURATION: f64 = 200.0;

    pub fn zeros(total_duration: f64, g_max: f64) -> Self {
        Self {
            segments: [[(0.0, 0.0); SEGMENTS]; 4],
            detuning: [0.0; 4],
            phase: [0.0; 4],
            delay: 0.0,
            total_duration,
            g_max,
        }
    }

    /// Segments sampled from the ideal envelopes at segment midpoints, with
    /// the photon centered in the window.
    pub fn seeded_from_ideal(gamma_emit: f64, gamma_absorb: f64, gamma_ph: f64, total_duration: f64) -> Result<Self> {
        let center = total_duration / 2.0;
        let mut ps = Self::zeros(total_duration, 0.0);
        for k in 0..SEGMENTS {
            let t = ps.midpoint(k);
            let e = ideal_coupling(t - center, gamma_emit, gamma_ph)?;
            let a = ideal_coupling(center - t, gamma_absorb, gamma_ph)?;
            ps.segments[0][k] = (e, 0.0);
            ps.segments[1][k] = (e, 0.0);
            ps.segments[2][k] = (a, 0.0);
            ps.segments[3][k] = (a, 0.0);
        }
        ps.g_max = 2.0 * gamma_emit.max(gamma_absorb);
        Ok(ps)
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.total_duration / SEGMENTS as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_duration > 0.0) {
            return Err(Error::InvalidParameter("pulse duration must be positive".into()));
        }
        for (r, seg) in self.segments.iter().enumerate() {
            for &(i, q) in seg {
                if !(i.is_finite() && q.is_finite()) || C64::new(i, q).norm() > self.g_max * (1.0 + 1e-12) {
                    return Err(Error::InvalidParameter(format!(
                        "{} amplitude exceeds |g|max = {}",
                        Role::ALL[r].key(),
                        self.g_max
                    )));
                }
            }
        }
        if self.detuning.iter().chain(&self.phase).any(|x| !x.is_finite()) || !self.delay.is_finite() {
            return Err(Error::InvalidParameter("non-finite pulse parameter".into()));
        }
        Ok(())
    }

    /// Rescales any segment exceeding `g_max` onto the bound.
    pub fn clamp(&mut self) {
        for seg in self.segments.iter_mut() {
            for s in seg.iter_mut() {
                let n = C64::new(s.0, s.1).norm();
                if n > self.g_max && n > 0.0 {
                    let f = self.g_max / n;
                    *s = (s.0 * f, s.1 * f);
                }
            }
        }
    }

    /// The 73 optimizable parameters in a fixed order.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(PARAMETER_COUNT);
        for seg in &self.segments {
            for &(i, q) in seg {
                v.push(i);
                v.push(q);
            }
        }
        v.extend_from_slice(&self.detuning);
        v.extend_from_slice(&self.phase);
        v.push(self.delay);
        v
    }

    pub fn with_vector(&self, v: &[f64]) -> Result<Self> {
        if v.len() != PARAMETER_COUNT {
            return Err(Error::DimensionMismatch { expected: PARAMETER_COUNT, found: v.len() });
        }
        let mut ps = self.clone();
        let mut it = v.iter().copied();
        for seg in ps.segments.iter_mut() {
            for s in seg.iter_mut() {
                *s = (it.next().unwrap(), it.next().unwrap());
            }
        }
        for d in ps.detuning.iter_mut() {
            *d = it.next().unwrap();
        }
        for p in ps.phase.iter_mut() {
            *p = it.next().unwrap();
        }
        ps.delay = it.next().unwrap();
        Ok(ps)
    }

    pub fn parameter_names() -> Vec<String> {
        let mut names = Vec::with_capacity(PARAMETER_COUNT);
        for r in Role::ALL {
            for k in 0..SEGMENTS {
                names.push(format!("{}_seg{k}_i", r.key()));
                names.push(format!("{}_seg{k}_q", r.key()));
            }
        }
        for r in Role::ALL {
            names.push(format!("{}_detuning_rad_per_ns", r.key()));
        }
        for r in Role::ALL {
            names.push(format!("{}_phase_rad", r.key()));
        }
        names.push("delay_ns".into());
        names
    }

    /// Named flat list of the optimizable parameters.
    pub fn to_named(&self) -> Vec<(String, f64)> {
        Self::parameter_names().into_iter().zip(self.to_vector()).collect()
    }

    pub fn with_named(&self, named: &[(String, f64)]) -> Result<Self> {
        let names = Self::parameter_names();
        let mut v = self.to_vector();
        for (k, x) in named {
            let i = names
                .iter()
                .position(|n| n == k)
                .ok_or_else(|| Error::Config(format!("unknown pulse parameter `{k}`")))?;
            v[i] = *x;
        }
        self.with_vector(&v)
    }
}

/// Monotone cubic Hermite interpolant (Fritsch–Carlson) with zero end
/// slopes; constant beyond the outer knots.
#[derive(Clone, Debug)]
struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut m = vec![0.0; n];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                m[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        Self { xs, ys, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let (xs, ys, m) = (&self.xs, &self.ys, &self.m);
        let n = xs.len();
        if x <= xs[0] {
            return ys[0];
        }
        if x >= xs[n - 1] {
            return ys[n - 1];
        }
        let k = xs.partition_point(|&xk| xk <= x) - 1;
        let h = xs[k + 1] - xs[k];
        let t = (x - xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * ys[k] + h10 * h * m[k] + h01 * ys[k + 1] + h11 * h * m[k + 1]
    }
}

/// One role's envelope with its interpolants built once.
#[derive(Clone, Debug)]
struct Segmented {
    i: Pchip,
    q: Pchip,
    detuning: f64,
    phase: f64,
}

impl Segmented {
    fn new(ps: &PulseSet, role: Role) -> Self {
        let r = role.index();
        let xs: Vec<f64> = (0..SEGMENTS).map(|k| ps.midpoint(k)).collect();
        Self {
            i: Pchip::new(xs.clone(), ps.segments[r].iter().map(|s| s.0).collect()),
            q: Pchip::new(xs, ps.segments[r].iter().map(|s| s.1).collect()),
            detuning: ps.detuning[r],
            phase: ps.phase[r],
        }
    }

    fn value(&self, t: f64) -> C64 {
        C64::new(self.i.eval(t), self.q.eval(t)) * C64::from_polar(1.0, self.detuning * t + self.phase)
    }
}

/// Envelope value at `t ∈ [0, total_duration]`.
pub fn segmented_envelope(ps: &PulseSet, role: Role, t: f64) -> Result<C64> {
    if !(0.0..=ps.total_duration).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "t = {t} outside [0, {}]",
            ps.total_duration
        )));
    }
    Ok(Segmented::new(ps, role).value(t))
}


/// Envelope closure, zero outside the window; absorption roles are shifted
/// by the global delay.
pub fn segmented_envelope_fn(ps: &PulseSet, role: Role) -> EnvelopeFn {
    let seg = Segmented::new(ps, role);
    let duration = ps.total_duration;
    let shift = if role.is_emission() { 0.0 } else { ps.delay };
    Arc::new(move |t: f64| {
        let s = t - shift;
        if (0.0..=duration).contains(&s) {
            seg.value(s)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Synthetic control-line distortion: single-pole low-pass, cubic amplitude
/// compression and a static phase offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionModel {
    /// ns.
    pub tau: f64,
    /// `y → y(1 − cubic·|y/reference|²)`.
    pub cubic: f64,
    /// rad/ns.
    pub reference: f64,
    pub phase_offset: f64,
}

impl DistortionModel {
    pub fn none() -> Self {
        Self { tau: 0.0, cubic: 0.0, reference: 1.0, phase_offset: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.tau == 0.0 && self.cubic == 0.0 && self.phase_offset == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) || !(self.reference > 0.0) || !self.cubic.is_finite() || !self.phase_offset.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid distortion model {self:?}")));
        }
        Ok(())
    }
}

impl Default for DistortionModel {
    fn default() -> Self {
        Self::none()
    }
}

/// Applies `model` to `envelope` on `[t0, t1]`, sampled every `h`; the
/// result is linearly interpolated between samples and zero outside.
pub fn distort(envelope: EnvelopeFn, model: &DistortionModel, t0: f64, t1: f64, h: f64) -> EnvelopeFn {
    if model.is_identity() {
        return envelope;
    }
    let n = ((t1 - t0) / h).round() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let a = if model.tau > 0.0 { (-h / model.tau).exp() } else { 0.0 };
    let mut y = C64::new(0.0, 0.0);
    let mut prev = envelope(t0);
    for k in 0..n {
        let x = envelope(t0 + k as f64 * h);
        if model.tau > 0.0 {
            // Exact response to a linear ramp between samples.
            let b = model.tau / h * (1.0 - a);
            y = a * y + (1.0 - b) * x + (b - a) * prev;
        } else {
            y = x;
        }
        prev = x;
        let mag = y.norm() / model.reference;
        out.push(y * (1.0 - model.cubic * mag * mag) * C64::from_polar(1.0, model.phase_offset));
    }
    let out = Arc::new(out);
    Arc::new(move |t: f64| {
        let s = (t - t0) / h;
        if s < 0.0 || s > (n - 1) as f64 {
            return C64::new(0.0, 0.0);
        }
        let k = (s.floor() as usize).min(n - 2);
        let f = s - k as f64;
        out[k] * (1.0 - f) + out[k + 1] * f
    })
}

/// Coupling-pulse family for one protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PulseShapes {
    /// Closed-form sech-photon envelopes centered in the window.
    Ideal { gamma_ph: f64, total_duration: f64 },
    Segmented(PulseSet),
}

impl PulseShapes {
    pub fn ideal(gamma_ph: f64) -> Self {
        PulseShapes::Ideal { gamma_ph, total_duration: PulseSet::DEFAULT_DURATION }
    }

    pub fn total_duration(&self) -> f64 {
        match self {
            PulseShapes::Ideal { total_duration, .. } => *total_duration,
            PulseShapes::Segmented(ps) => ps.total_duration,
        }
    }

    /// Envelope for `role`; `gamma` is the emission rate of the module the
    /// pulse drives.
    pub fn envelope(&self, role: Role, gamma: f64) -> Result<EnvelopeFn> {
        match self {
            PulseShapes::Ideal { gamma_ph, total_duration } => {
                ideal_coupling(0.0, gamma, *gamma_ph)?;
                let (gp, c) = (*gamma_ph, total_duration / 2.0);
                let sign = if role.is_emission() { 1.0 } else { -1.0 };
                Ok(Arc::new(move |t: f64| C64::new(ideal_coupling(sign * (t - c), gamma, gp).unwrap_or(0.0), 0.0)))
            }
            PulseShapes::Segmented(ps) => {
                ps.validate()?;
                Ok(segmented_envelope_fn(ps, role))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::mhz_to_rad_per_ns;
    use approx::assert_abs_diff_eq;

    const G: f64 = 0.10681415022205297;

    #[test]
    fn photon_shape() {
        let gp = mhz_to_rad_per_ns(7.0);
        assert_abs_diff_eq!(sech_photon(0.0, gp), gp.sqrt() / 2.0);
        let h = 0.05;
        let norm: f64 = (-40000..=40000).map(|k| sech_photon(k as f64 * h, gp).powi(2) * h).sum();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-9);
        // |f|² half maximum at γ_ph t/2 = acosh(√2).
        let t_half = 2.0 * 2.0_f64.sqrt().acosh() / gp;
        assert_abs_diff_eq!(sech_photon(t_half, gp).powi(2) / sech_photon(0.0, gp).powi(2), 0.5, epsilon = 1e-12);
        assert!(sech_photon(1e5, gp).is_finite());
    }

    #[test]
    fn coupling_reduces_to_sech_at_full_bandwidth() {
        for t in [-80.0, -10.0, 0.0, 3.0, 50.0, 400.0] {
            let g = ideal_coupling(t, G, G).unwrap();
            assert_abs_diff_eq!(g, 0.5 * G * sech(0.5 * G * t), epsilon = 1e-15);
        }
    }

    #[test]
    fn coupling_limits_and_guards() {
        let gp = 0.4 * G;
        assert!(ideal_coupling(0.0, G, 1.1 * G).is_err());
        let far = 40.0 / gp;
        let hi = ideal_coupling(far, G, gp).unwrap();
        assert_abs_diff_eq!(hi, ideal_coupling_plateau(G, gp), epsilon = 1e-12);
        let lo = ideal_coupling(-far, G, gp).unwrap();
        assert!(lo.is_finite() && lo < 1e-8);
        for t in [-1e6, 1e6] {
            assert!(ideal_coupling(t, G, gp).unwrap().is_finite());
        }
    }

    #[test]
    fn coupling_matches_direct_formula() {
        // Direct evaluation of the closed form where it does not overflow.
        let gp = mhz_to_rad_per_ns(7.0);
        for t in [-60.0, -20.0, -1.0, 0.0, 2.0, 15.0, 60.0] {
            let e = (gp * t).exp();
            let r = G / gp;
            let direct = gp / (4.0 * (gp * t / 2.0).cosh()) * ((1.0 + e) * r + 1.0 - e) / ((1.0 + e) * r - e).sqrt();
            assert_abs_diff_eq!(ideal_coupling(t, G, gp).unwrap(), direct, epsilon = 1e-14);
        }
    }

    #[test]
    fn coupling_is_continuous() {
        let gp = mhz_to_rad_per_ns(7.0);
        let vals: Vec<f64> = (0..8000).map(|k| ideal_coupling(-200.0 + k as f64 * 0.05, G, gp).unwrap()).collect();
        let peak = vals.iter().cloned().fold(0.0, f64::max);
        let jump = vals.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(jump <= 1e-3 * peak);
    }

    #[test]
    fn segmented_constant_and_phase() {
        let mut ps = PulseSet::zeros(200.0, 1.0);
        ps.segments[0] = [(0.3, 0.0); SEGMENTS];
        for t in [0.0, 13.0, 100.0, 200.0] {
            assert_abs_diff_eq!(segmented_envelope(&ps, Role::Emit1, t).unwrap().re, 0.3, epsilon = 1e-15);
        }
        let a = segmented_envelope(&ps, Role::Emit1, 77.0).unwrap();
        ps.phase[0] = std::f64::consts::PI;
        let b = segmented_envelope(&ps, Role::Emit1, 77.0).unwrap();
        assert!((a + b).norm() < 1e-15);
        assert!(segmented_envelope(&ps, Role::Emit1, 201.0).is_err());
    }

    #[test]
    fn pchip_is_monotone_between_monotone_knots() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 0.1, 2.0, 2.05];
        let p = Pchip::new(xs.to_vec(), ys.to_vec());
        let vals: Vec<f64> = (0..=300).map(|k| p.eval(k as f64 * 0.01)).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-15));
    }

    #[test]
    fn seeded_segments_track_ideal_envelope() {
        // RMS over the span where the photon carries weight, relative to peak.
        let gp = mhz_to_rad_per_ns(7.0);
        let ps = PulseSet::seeded_from_ideal(G, G, gp, 200.0).unwrap();
        let env = segmented_envelope_fn(&ps, Role::Emit1);
        let mut sq = 0.0;
        let mut w = 0.0;
        let mut peak: f64 = 0.0;
        for k in 0..=4000 {
            let t = k as f64 * 0.05;
            let ideal = ideal_coupling(t - 100.0, G, gp).unwrap();
            let weight = sech_photon(t - 100.0, gp).powi(2);
            sq += weight * (env(t).re - ideal).powi(2);
            w += weight;
            peak = peak.max(ideal);
        }
        let rms = (sq / w).sqrt() / peak;
        assert!(rms <= 0.05, "rms {rms}");
    }

    #[test]
    fn vector_round_trip() {
        let ps = PulseSet::seeded_from_ideal(G, G, 0.5 * G, 200.0).unwrap();
        let v = ps.to_vector();
        assert_eq!(v.len(), 73);
        assert_eq!(ps.with_vector(&v).unwrap(), ps);
        let named = ps.to_named();
        assert_eq!(named.len(), 73);
        assert_eq!(ps.with_named(&named).unwrap(), ps);
        assert!(ps.with_named(&[("bogus".into(), 1.0)]).is_err());
    }

    #[test]
    fn distortion_identity_and_phase() {
        let env: EnvelopeFn = Arc::new(|t: f64| C64::new((t / 10.0).sin(), 0.2));
        let same = distort(env.clone(), &DistortionModel::none(), 0.0, 100.0, 0.025);
        assert_eq!(same(33.3), env(33.3));
        let m = DistortionModel { phase_offset: 0.9, ..DistortionModel::none() };
        let ph = distort(env.clone(), &m, 0.0, 100.0, 0.025);
        for t in [1.0, 25.0, 50.0] {
            assert_abs_diff_eq!(ph(t).norm(), env(t).norm(), epsilon = 1e-12);
        }
    }

    #[test]
    fn slow_lowpass_suppresses_peak() {
        let gp = mhz_to_rad_per_ns(7.0);
        let env: EnvelopeFn = Arc::new(move |t: f64| C64::new(sech_photon(t - 100.0, gp), 0.0));
        let m = DistortionModel { tau: 2000.0, ..DistortionModel::none() };
        let h = 0.05;
        let out = distort(env.clone(), &m, 0.0, 200.0, h);
        // Oracle: direct discrete convolution with the normalized exponential kernel.
        let n = 4001;
        let xs: Vec<f64> = (0..n).map(|k| env(k as f64 * h).re).collect();
        let conv = |j: usize| -> f64 {
            (0..=j).map(|k| xs[k] * (-((j - k) as f64) * h / m.tau).exp() * h / m.tau).sum()
        };
        let in_peak = xs.iter().cloned().fold(0.0, f64::max);
        let out_peak = (0..n).map(|k| out(k as f64 * h).re).fold(0.0, f64::max);
        let oracle_peak = (0..n).step_by(50).map(conv).fold(0.0, f64::max);
        assert!(out_peak < 0.5 * in_peak);
        assert!((out_peak - oracle_peak).abs() < 0.02 * oracle_peak, "{out_peak} vs {oracle_peak}");
    }
}
