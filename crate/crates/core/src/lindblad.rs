//! Fixed-step RK4 integration of time-dependent Lindblad master equations.
//!
//! `dρ/dt = -i[H(t), ρ] + Σ rate·D[a, b]ρ` with
//! `H(t) = H_static + Σ (e(t)·op + e(t)*·op†)`.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qops::{dissipator, DensityMatrix, Operator, Subspace, I, ZERO};

pub type EnvelopeFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

pub fn constant_envelope(c: C64) -> EnvelopeFn {
    Arc::new(move |_| c)
}

pub fn zero_envelope() -> EnvelopeFn {
    constant_envelope(ZERO)
}

#[derive(Clone)]
pub struct DriveTerm {
    pub envelope: EnvelopeFn,
    pub op: Operator,
}

impl std::fmt::Debug for DriveTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriveTerm").field("op_dim", &self.op.dim()).finish_non_exhaustive()
    }
}

/// `rate·D[a, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladTerm {
    pub rate: f64,
    pub a: Operator,
    pub b: Operator,
}

#[derive(Clone, Debug)]
pub struct GeneratorSpec {
    pub h_static: Operator,
    pub drives: Vec<DriveTerm>,
    pub terms: Vec<LindbladTerm>,
}

impl GeneratorSpec {
    pub fn new(h_static: Operator) -> Self {
        Self { h_static, drives: Vec::new(), terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.h_static.dim()
    }

    pub fn with_drive(mut self, envelope: EnvelopeFn, op: Operator) -> Self {
        self.drives.push(DriveTerm { envelope, op });
        self
    }

    pub fn with_decay(mut self, rate: f64, a: Operator) -> Self {
        self.terms.push(LindbladTerm { rate, b: a.clone(), a });
        self
    }

    /// Adds `rate·(D[a,b] + D[b,a])`.
    pub fn with_correlated(mut self, rate: f64, a: Operator, b: Operator) -> Self {
        self.terms.push(LindbladTerm { rate, a: a.clone(), b: b.clone() });
        self.terms.push(LindbladTerm { rate, a: b, b: a });
        self
    }

    pub fn push_term(&mut self, term: LindbladTerm) {
        self.terms.push(term);
    }

    pub fn add_hamiltonian(&mut self, h: &Operator) {
        self.h_static += h;
    }

    /// Appends all drives and terms of `other`, summing static Hamiltonians.
    pub fn merge(mut self, other: GeneratorSpec) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        self.h_static += &other.h_static;
        self.drives.extend(other.drives);
        self.terms.extend(other.terms);
        Ok(self)
    }

    /// True if some term acts as `D[a, b]` with `a` and `b` matching the
    /// given operators up to a common factor.
    pub fn has_correlated_term(&self, a: &Operator, b: &Operator, tol: f64) -> bool {
        self.terms.iter().any(|t| {
            t.rate > 0.0 && t.a.max_abs_diff(&t.b) > tol && t.a.max_abs_diff(a) <= tol && t.b.max_abs_diff(b) <= tol
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let check = |op: &Operator| {
            if op.dim() != n {
                Err(Error::DimensionMismatch { expected: n, found: op.dim() })
            } else {
                Ok(())
            }
        };
        if self.h_static.hermiticity_defect() > 1e-12 {
            return Err(Error::InvalidParameter("static Hamiltonian is not Hermitian".into()));
        }
        for d in &self.drives {
            check(&d.op)?;
        }
        for (k, t) in self.terms.iter().enumerate() {
            check(&t.a)?;
            check(&t.b)?;
            if !t.rate.is_finite() {
                return Err(Error::InvalidParameter(format!("term {k} has non-finite rate")));
            }
            if t.a == t.b {
                if t.rate < 0.0 {
                    return Err(Error::InvalidParameter(format!("term {k} has negative rate")));
                }
            } else {
                let paired = self.terms.iter().any(|p| p.a == t.b && p.b == t.a && p.rate == t.rate);
                if !paired {
                    return Err(Error::InvalidParameter(format!(
                        "correlated term {k} lacks its conjugate partner"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Restricts every operator to an invariant subspace.
    pub fn restrict(&self, sub: &Subspace) -> Result<GeneratorSpec> {
        if sub.full_dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: sub.full_dim() });
        }
        let need = |op: &Operator, what: &str| {
            if sub.is_invariant(op) {
                Ok(sub.restrict(op))
            } else {
                Err(Error::NotInvariant(what.to_string()))
            }
        };
        let h_static = need(&self.h_static, "static Hamiltonian")?;
        let mut drives = Vec::with_capacity(self.drives.len());
        for (k, d) in self.drives.iter().enumerate() {
            need(&d.op.adjoint(), &format!("drive {k} adjoint"))?;
            drives.push(DriveTerm { envelope: d.envelope.clone(), op: need(&d.op, &format!("drive {k}"))? });
        }
        let mut terms = Vec::with_capacity(self.terms.len());
        for (k, t) in self.terms.iter().enumerate() {
            if !product_invariant(sub, &t.b.adjoint(), &t.a) {
                return Err(Error::NotInvariant(format!("term {k} b†a")));
            }
            terms.push(LindbladTerm {
                rate: t.rate,
                a: need(&t.a, &format!("term {k} a"))?,
                b: need(&t.b, &format!("term {k} b"))?,
            });
        }
        Ok(GeneratorSpec { h_static, drives, terms })
    }

    pub fn hamiltonian_at(&self, t: f64) -> Operator {
        let mut h = self.h_static.clone();
        for d in &self.drives {
            let e = (d.envelope)(t);
            h += &d.op.scale(e);
            h += &d.op.adjoint().scale(e.conj());
        }
        h
    }

    /// Dense evaluation of the right-hand side; reference for the compiled path.
    pub fn apply(&self, t: f64, rho: &DensityMatrix) -> Result<Operator> {
        let h = self.hamiltonian_at(t);
        let r = rho.as_operator();
        let mut out = (&h * r - r * &h).scale(-I);
        for term in &self.terms {
            out += &dissipator(&term.a, &term.b, rho)?.scale(C64::new(term.rate, 0.0));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub sample_stride: usize,
}

impl TimeGrid {
    pub const DEFAULT_DT: f64 = 0.05;

    pub fn new(t_start: f64, t_end: f64, dt: f64, sample_stride: usize) -> Result<Self> {
        let g = Self { t_start, t_end, dt, sample_stride };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > self.t_start) || !(self.dt > 0.0) || self.sample_stride == 0 {
            return Err(Error::InvalidParameter(format!("invalid time grid {self:?}")));
        }
        let steps = (self.t_end - self.t_start) / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "span {} is not a whole number of steps of {}",
                self.t_end - self.t_start,
                self.dt
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t_start + step as f64 * self.dt
    }

    /// Same span at half the step, sampling the same times.
    pub fn halved(&self) -> Self {
        Self { dt: self.dt / 2.0, sample_stride: self.sample_stride * 2, ..*self }
    }

    fn is_sample(&self, step: usize) -> bool {
        step % self.sample_stride == 0 || step == self.steps()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvolveOptions {
    pub snapshots: bool,
    pub track_positivity: bool,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `expectations[sample][observable]`.
    pub expectations: Vec<Vec<C64>>,
    pub snapshots: Option<Vec<DensityMatrix>>,
    pub final_state: DensityMatrix,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    /// Smallest eigenvalue over samples; `None` unless tracked.
    pub min_eigenvalue: Option<f64>,
}

impl Trajectory {
    pub fn series(&self, observable: usize) -> Vec<C64> {
        self.expectations.iter().map(|row| row[observable]).collect()
    }

    pub fn real_series(&self, observable: usize) -> Vec<f64> {
        self.expectations.iter().map(|row| row[observable].re).collect()
    }
}

type Triplets = Vec<(usize, usize, C64)>;

fn triplets(op: &Operator) -> Triplets {
    let n = op.dim();
    let m = op.matrix();
    let mut out = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let v = m[(r, c)];
            if v != ZERO {
                out.push((r, c, v));
            }
        }
    }
    out
}

struct Compiled {
    n: usize,
    left: Triplets,
    right: Triplets,
    drives: Vec<(EnvelopeFn, Triplets, Triplets)>,
    jumps: Vec<(f64, Triplets, Triplets)>,
}

impl Compiled {
    fn new(gen: &GeneratorSpec) -> Self {
        let n = gen.dim();
        let mut k = Operator::zeros(n);
        for t in &gen.terms {
            k += &(&t.b.adjoint() * &t.a).scale(C64::new(t.rate, 0.0));
        }
        let half_k = k.scale(C64::new(0.0, 0.5));
        let left = triplets(&(&gen.h_static - &half_k));
        let right = triplets(&(&gen.h_static + &half_k));
        let drives = gen
            .drives
            .iter()
            .map(|d| (d.envelope.clone(), triplets(&d.op), triplets(&d.op.adjoint())))
            .collect();
        let jumps = gen
            .terms
            .iter()
            .filter(|t| t.rate != 0.0)
            .map(|t| (t.rate, triplets(&t.a), triplets(&t.b)))
            .collect();
        Self { n, left, right, drives, jumps }
    }

    /// `out = L(t)[rho]` on row-major buffers.
    fn rhs(&self, t: f64, rho: &[C64], out: &mut [C64]) {
        let n = self.n;
        out.iter_mut().for_each(|z| *z = ZERO);
        let mi = -I;
        let left_mul = |trips: &Triplets, scale: C64, out: &mut [C64]| {
            for &(r, c, v) in trips {
                let f = mi * scale * v;
                let (src, dst) = (c * n, r * n);
                for j in 0..n {
                    out[dst + j] += f * rho[src + j];
                }
            }
        };
        left_mul(&self.left, C64::new(1.0, 0.0), out);
        let right_mul = |trips: &Triplets, scale: C64, out: &mut [C64]| {
            for &(r, c, v) in trips {
                let f = I * scale * v;
                for i in 0..n {
                    out[i * n + c] += f * rho[i * n + r];
                }
            }
        };
        right_mul(&self.right, C64::new(1.0, 0.0), out);
        for (env, op, op_dag) in &self.drives {
            let e = env(t);
            if e == ZERO {
                continue;
            }
            let ec = e.conj();
            for &(r, c, v) in op {
                let fl = mi * e * v;
                let fr = I * e * v;
                for j in 0..n {
                    out[r * n + j] += fl * rho[c * n + j];
                    out[j * n + c] += fr * rho[j * n + r];
                }
            }
            for &(r, c, v) in op_dag {
                let fl = mi * ec * v;
                let fr = I * ec * v;
                for j in 0..n {
                    out[r * n + j] += fl * rho[c * n + j];
                    out[j * n + c] += fr * rho[j * n + r];
                }
            }
        }
        for (rate, a, b) in &self.jumps {
            for &(i, k, va) in a {
                let fa = *rate * va;
                for &(j, l, vb) in b {
                    out[i * n + j] += fa * rho[k * n + l] * vb.conj();
                }
            }
        }
    }
}

fn to_buffer(rho: &Operator) -> Vec<C64> {
    let n = rho.dim();
    let m = rho.matrix();
    let mut buf = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            buf.push(m[(r, c)]);
        }
    }
    buf
}

fn from_buffer(n: usize, buf: &[C64]) -> Operator {
    Operator::from_rows(n, buf)
}

fn buffer_expect(trips: &Triplets, n: usize, rho: &[C64]) -> C64 {
    trips.iter().map(|&(r, c, v)| v * rho[c * n + r]).sum()
}

fn buffer_trace(n: usize, rho: &[C64]) -> C64 {
    (0..n).map(|i| rho[i * n + i]).sum()
}

fn buffer_hermiticity(n: usize, rho: &[C64]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((rho[i * n + j] - rho[j * n + i].conj()).norm());
        }
    }
    worst
}

pub fn evolve(
    rho0: &DensityMatrix,
    gen: &GeneratorSpec,
    grid: &TimeGrid,
    observables: &[Operator],
) -> Result<Trajectory> {
    evolve_with(rho0, gen, grid, observables, EvolveOptions::default())
}

pub fn evolve_with_snapshots(
    rho0: &DensityMatrix,
    gen: &GeneratorSpec,
    grid: &TimeGrid,
    observables: &[Operator],
) -> Result<Trajectory> {
    evolve_with(rho0, gen, grid, observables, EvolveOptions { snapshots: true, track_positivity: true })
}

pub fn evolve_with(
    rho0: &DensityMatrix,
    gen: &GeneratorSpec,
    grid: &TimeGrid,
    observables: &[Operator],
    opts: EvolveOptions,
) -> Result<Trajectory> {
    grid.validate()?;
    gen.validate()?;
    let n = gen.dim();
    if rho0.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rho0.dim() });
    }
    for o in observables {
        if o.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: o.dim() });
        }
    }
    let compiled = Compiled::new(gen);
    let obs: Vec<Triplets> = observables.iter().map(triplets).collect();

    let mut rho = to_buffer(rho0.as_operator());
    let len = n * n;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]);

    let mut traj = Trajectory {
        times: Vec::new(),
        expectations: Vec::new(),
        snapshots: opts.snapshots.then(Vec::new),
        final_state: rho0.clone(),
        max_trace_drift: 0.0,
        max_hermiticity_defect: 0.0,
        min_eigenvalue: None,
    };
    let record = |traj: &mut Trajectory, t: f64, rho: &[C64]| {
        traj.times.push(t);
        traj.expectations.push(obs.iter().map(|o| buffer_expect(o, n, rho)).collect());
        traj.max_trace_drift = traj.max_trace_drift.max((buffer_trace(n, rho) - 1.0).norm());
        traj.max_hermiticity_defect = traj.max_hermiticity_defect.max(buffer_hermiticity(n, rho));
        if opts.track_positivity || opts.snapshots {
            let state = DensityMatrix::new_unchecked(from_buffer(n, rho));
            if opts.track_positivity {
                let ev = state.as_operator().hermitian_eigenvalues()[0];
                traj.min_eigenvalue = Some(traj.min_eigenvalue.map_or(ev, |m: f64| m.min(ev)));
            }
            if let Some(s) = traj.snapshots.as_mut() {
                s.push(state);
            }
        }
    };

    record(&mut traj, grid.t_start, &rho);
    let dt = grid.dt;
    let half = C64::new(dt / 2.0, 0.0);
    let full = C64::new(dt, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    for step in 0..grid.steps() {
        let t = grid.time(step);
        compiled.rhs(t, &rho, &mut k1);
        for i in 0..len {
            tmp[i] = rho[i] + half * k1[i];
        }
        compiled.rhs(t + dt / 2.0, &tmp, &mut k2);
        for i in 0..len {
            tmp[i] = rho[i] + half * k2[i];
        }
        compiled.rhs(t + dt / 2.0, &tmp, &mut k3);
        for i in 0..len {
            tmp[i] = rho[i] + full * k3[i];
        }
        compiled.rhs(t + dt, &tmp, &mut k4);
        let mut finite = true;
        for i in 0..len {
            rho[i] += sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
            finite &= rho[i].re.is_finite() && rho[i].im.is_finite();
        }
        if !finite {
            return Err(Error::NonFinite { t: t + dt });
        }
        if grid.is_sample(step + 1) {
            record(&mut traj, grid.time(step + 1), &rho);
        }
    }
    traj.final_state = DensityMatrix::new_unchecked(from_buffer(n, &rho));
    Ok(traj)
}

/// Whether `x·y` maps `sub` into itself, without forming the product.
fn product_invariant(sub: &Subspace, x: &Operator, y: &Operator) -> bool {
    let mut inside = vec![false; sub.full_dim()];
    for &i in sub.indices() {
        inside[i] = true;
    }
    sub.indices().iter().all(|&j| {
        let col = x.matrix() * y.matrix().column(j);
        col.iter().enumerate().all(|(i, z)| inside[i] || z.norm() == 0.0)
    })
}

/// Trace distance between endpoint states at `dt` and `dt/2`.
pub fn step_error_estimate(rho0: &DensityMatrix, gen: &GeneratorSpec, grid: &TimeGrid) -> Result<f64> {
    let coarse = evolve(rho0, gen, grid, &[])?;
    let fine = evolve(rho0, gen, &grid.halved(), &[])?;
    Ok(crate::qops::trace_distance(coarse.final_state.as_operator(), fine.final_state.as_operator()))
}

/// Runs `gen` on `sub` and lifts the result back to the full space.
pub fn evolve_in_subspace(
    rho0: &DensityMatrix,
    gen: &GeneratorSpec,
    sub: &Subspace,
    grid: &TimeGrid,
    observables: &[Operator],
    opts: EvolveOptions,
) -> Result<Trajectory> {
    if sub.leakage(rho0) > 1e-12 {
        return Err(Error::NotInvariant("initial state has weight outside the subspace".into()));
    }
    let small = gen.restrict(sub)?;
    let obs: Vec<Operator> = observables.iter().map(|o| sub.restrict(o)).collect();
    let mut traj = evolve_with(&sub.restrict_state(rho0), &small, grid, &obs, opts)?;
    traj.final_state = sub.lift_state(&traj.final_state);
    if let Some(s) = traj.snapshots.as_mut() {
        for state in s.iter_mut() {
            *state = sub.lift_state(state);
        }
    }
    Ok(traj)
}

/// Trapezoidal integral of uniformly sampled values.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::{embed, Ket};
    use approx::assert_abs_diff_eq;

    fn excited() -> DensityMatrix {
        DensityMatrix::from_ket(&Ket::basis(2, 1))
    }

    #[test]
    fn exponential_decay() {
        let gamma = 0.1;
        let gen = GeneratorSpec::new(Operator::zeros(2)).with_decay(gamma, Operator::sigma_minus());
        let grid = TimeGrid::new(0.0, 50.0, 0.1, 10).unwrap();
        let traj = evolve(&excited(), &gen, &grid, &[Operator::excited_projector()]).unwrap();
        let worst = traj
            .times
            .iter()
            .zip(traj.real_series(0))
            .map(|(t, p)| (p - (-gamma * t).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        assert!(traj.max_trace_drift < 1e-8);
    }

    #[test]
    fn rabi_oscillation() {
        let omega = 0.7;
        let gen = GeneratorSpec::new(Operator::sigma_x().scale(C64::new(omega / 2.0, 0.0)));
        let grid = TimeGrid::new(0.0, 30.0, 0.01, 50).unwrap();
        let g = DensityMatrix::from_ket(&Ket::basis(2, 0));
        let traj = evolve(&g, &gen, &grid, &[Operator::excited_projector()]).unwrap();
        for (t, p) in traj.times.iter().zip(traj.real_series(0)) {
            assert_abs_diff_eq!(p, (omega * t / 2.0).sin().powi(2), epsilon = 1e-6);
        }
    }

    #[test]
    fn drive_envelope_matches_static_equivalent() {
        // e·σ⁻ + e*·σ⁺ with e = Ω/2 equals (Ω/2)σx.
        let omega = 0.4;
        let gen = GeneratorSpec::new(Operator::zeros(2))
            .with_drive(constant_envelope(C64::new(omega / 2.0, 0.0)), Operator::sigma_minus());
        let grid = TimeGrid::new(0.0, 10.0, 0.02, 500).unwrap();
        let g = DensityMatrix::from_ket(&Ket::basis(2, 0));
        let traj = evolve(&g, &gen, &grid, &[Operator::excited_projector()]).unwrap();
        let p = traj.real_series(0).last().copied().unwrap();
        assert_abs_diff_eq!(p, (omega * 10.0 / 2.0).sin().powi(2), epsilon = 1e-8);
    }

    #[test]
    fn compiled_rhs_matches_dense_reference() {
        let s1 = embed(&Operator::sigma_minus(), 0, 2).unwrap();
        let s2 = embed(&Operator::sigma_minus(), 1, 2).unwrap();
        let h = (&(&s1.adjoint() * &s2) + &(&s2.adjoint() * &s1)).scale(C64::new(0.3, 0.0));
        let gen = GeneratorSpec::new(h)
            .with_decay(0.2, &s1 + &s2.scale(I))
            .with_correlated(0.05, s1.clone(), s2.scale(C64::new(0.6, 0.8)))
            .with_drive(Arc::new(|t: f64| C64::new(t.cos(), 0.3 * t)), s2.clone());
        let psi = Ket::normalized(vec![
            C64::new(0.3, 0.1),
            C64::new(0.5, -0.2),
            C64::new(0.1, 0.4),
            C64::new(0.6, 0.0),
        ])
        .unwrap();
        let rho = DensityMatrix::from_ket(&psi);
        let compiled = Compiled::new(&gen);
        let buf = to_buffer(rho.as_operator());
        let mut out = vec![ZERO; 16];
        compiled.rhs(0.7, &buf, &mut out);
        let dense = gen.apply(0.7, &rho).unwrap();
        assert!(from_buffer(4, &out).max_abs_diff(&dense) < 1e-14);
    }

    #[test]
    fn fourth_order_convergence() {
        let gen = GeneratorSpec::new(Operator::sigma_x().scale(C64::new(0.5, 0.0)))
            .with_decay(0.2, Operator::sigma_minus());
        let g = DensityMatrix::from_ket(&Ket::basis(2, 0));
        let grid = TimeGrid::new(0.0, 10.0, 0.4, 1).unwrap();
        let e1 = step_error_estimate(&g, &gen, &grid).unwrap();
        let e2 = step_error_estimate(&g, &gen, &grid.halved()).unwrap();
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn step_error_small_and_zero_cases() {
        let gamma = 0.1;
        let gen = GeneratorSpec::new(Operator::zeros(2)).with_decay(gamma, Operator::sigma_minus());
        let grid = TimeGrid::new(0.0, 20.0, 0.01 / gamma, 1).unwrap();
        assert!(step_error_estimate(&excited(), &gen, &grid).unwrap() <= 1e-8);
        let idle = GeneratorSpec::new(Operator::zeros(2));
        assert_eq!(step_error_estimate(&excited(), &idle, &grid).unwrap(), 0.0);
    }

    #[test]
    fn rejects_unpaired_correlated_term() {
        let s1 = embed(&Operator::sigma_minus(), 0, 2).unwrap();
        let s2 = embed(&Operator::sigma_minus(), 1, 2).unwrap();
        let mut gen = GeneratorSpec::new(Operator::zeros(4));
        gen.push_term(LindbladTerm { rate: 1.0, a: s1, b: s2 });
        assert!(gen.validate().is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 1.0, 0.3, 1).is_err());
        assert!(TimeGrid::new(1.0, 0.0, 0.1, 1).is_err());
        assert_eq!(TimeGrid::new(0.0, 200.0, 0.05, 1).unwrap().steps(), 4000);
    }

    #[test]
    fn nonfinite_detected() {
        let gen = GeneratorSpec::new(Operator::sigma_x().scale(C64::new(1e3, 0.0)))
            .with_decay(1e3, Operator::sigma_minus());
        let grid = TimeGrid::new(0.0, 400.0, 5.0, 1).unwrap();
        assert!(matches!(evolve(&excited(), &gen, &grid, &[]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn subspace_run_matches_full_run() {
        let n = 3;
        let s: Vec<Operator> = (0..n).map(|k| embed(&Operator::sigma_minus(), k, n).unwrap()).collect();
        let h = (&(&s[0].adjoint() * &s[1]) + &(&s[1].adjoint() * &s[0])).scale(C64::new(0.2, 0.0));
        let gen = GeneratorSpec::new(h)
            .with_decay(0.1, &s[1] + &s[2])
            .with_drive(Arc::new(|t: f64| C64::new(0.0, 0.05 * t.sin())), &s[2].adjoint() * &s[0]);
        let rho0 = DensityMatrix::from_ket(&Ket::excited_sites(n, &[0]));
        let grid = TimeGrid::new(0.0, 20.0, 0.05, 40).unwrap();
        let sub = Subspace::excitations_at_most(n, 1);
        let obs = [embed(&Operator::excited_projector(), 2, n).unwrap()];
        let full = evolve(&rho0, &gen, &grid, &obs).unwrap();
        let small = evolve_in_subspace(&rho0, &gen, &sub, &grid, &obs, EvolveOptions::default()).unwrap();
        assert!(full.final_state.as_operator().max_abs_diff(small.final_state.as_operator()) < 1e-13);
        let bad = GeneratorSpec::new(Operator::zeros(8)).with_drive(zero_envelope(), s[0].clone());
        assert!(bad.restrict(&sub).is_err());
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let v: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        assert_abs_diff_eq!(trapezoid(&v, 0.5), 25.0);
    }
}
