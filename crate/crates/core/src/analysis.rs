//! State metrics, target states, shot sampling and linear-inversion
//! tomography.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qops::{kron, DensityMatrix, Ket, Operator, I, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity(rho: &DensityMatrix, target: &Ket) -> Result<f64> {
    if rho.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: target.dim() });
    }
    let v = target.amplitudes();
    Ok((v.adjoint() * rho.as_operator().matrix() * v)[(0, 0)].re)
}

fn hermitian_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let vals = eig.eigenvalues.map(|x| C64::new(x.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.adjoint()
}

/// Wootters concurrence of a two-qubit state.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: rho.dim() });
    }
    let yy = kron(&Operator::sigma_y(), &Operator::sigma_y());
    let r = rho.as_operator().matrix();
    let tilde = yy.matrix() * r.map(|z| z.conj()) * yy.matrix();
    let s = hermitian_sqrt(r);
    let m = &s * tilde * &s;
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut lam: Vec<f64> = h.symmetric_eigenvalues().iter().map(|x| x.max(0.0).sqrt()).collect();
    lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok((lam[0] - lam[1] - lam[2] - lam[3]).max(0.0))
}

/// `(|eg⟩ ± i|ge⟩)/√2` with the first qubit most significant.
pub fn bell_target(sign: Sign) -> Ket {
    let mut a = vec![ZERO; 4];
    a[2] = C64::new(FRAC_1_SQRT_2, 0.0);
    a[1] = C64::new(0.0, sign.value() * FRAC_1_SQRT_2);
    Ket::new(a).expect("normalized")
}

/// Four-qubit W state over data qubits ordered (Q3, Q4, Q7, Q8):
/// amplitudes `1/2, ±i/2` on Q3, Q4 and `e^{∓ikd}/2, ±i e^{∓ikd}/2` on Q7, Q8.
pub fn w_target(sign: Sign, kd: f64) -> Ket {
    let s = sign.value();
    let ph = C64::from_polar(0.5, -s * kd);
    let mut a = vec![ZERO; 16];
    a[0b1000] = C64::new(0.5, 0.0);
    a[0b0100] = C64::new(0.0, 0.5 * s);
    a[0b0010] = ph;
    a[0b0001] = ph * C64::new(0.0, s);
    Ket::new(a).expect("normalized")
}

/// Computational-basis counts keyed by bitstring (site 0 first).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotRecord {
    pub counts: BTreeMap<String, u64>,
    pub shots: u64,
    pub seed: u64,
}

impl ShotRecord {
    pub fn count(&self, bits: &str) -> u64 {
        self.counts.get(bits).copied().unwrap_or(0)
    }

    pub fn proportion(&self, bits: &str) -> f64 {
        self.count(bits) as f64 / self.shots as f64
    }

    /// `bitstring,count` lines.
    pub fn to_text(&self) -> String {
        self.counts.iter().map(|(k, v)| format!("{k},{v}\n")).collect()
    }

    pub fn from_text(text: &str, seed: u64) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("line {}: expected `bitstring,count`", no + 1)))?;
            let v: u64 = v.trim().parse().map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
            counts.insert(k.trim().to_string(), v);
        }
        let shots = counts.values().sum();
        Ok(Self { counts, shots, seed })
    }

    /// Total-variation distance between the empirical distribution and `probs`.
    pub fn tv_distance(&self, probs: &[f64]) -> f64 {
        let n = probs.len().trailing_zeros() as usize;
        0.5 * probs
            .iter()
            .enumerate()
            .map(|(i, p)| (self.proportion(&bitstring(i, n)) - p).abs())
            .sum::<f64>()
    }
}

pub fn bitstring(index: usize, n: usize) -> String {
    (0..n).map(|s| if index & (1 << (n - 1 - s)) != 0 { '1' } else { '0' }).collect()
}

/// `n` independent draws from the diagonal of `rho` using ChaCha8 seeded by
/// `seed`; each draw inverts the cumulative distribution.
pub fn sample_shots(rho: &DensityMatrix, n: u64, seed: u64) -> Result<ShotRecord> {
    if n == 0 {
        return Err(Error::InvalidParameter("at least one shot is required".into()));
    }
    let sites = rho
        .num_sites()
        .ok_or_else(|| Error::InvalidState("dimension is not a power of two".into()))?;
    let probs: Vec<f64> = rho.populations().iter().map(|p| p.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p / total;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = vec![0u64; probs.len()];
    for _ in 0..n {
        let u: f64 = rng.random();
        let k = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
        tally[k] += 1;
    }
    let counts = tally
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (bitstring(i, sites), c))
        .collect();
    Ok(ShotRecord { counts, shots: n, seed })
}

fn pauli(c: char) -> Result<Operator> {
    match c {
        'I' => Ok(Operator::identity(2)),
        'X' => Ok(Operator::sigma_x()),
        'Y' => Ok(Operator::sigma_y()),
        'Z' => Ok(Operator::sigma_z()),
        other => Err(Error::InvalidParameter(format!("unknown Pauli `{other}`"))),
    }
}

pub fn pauli_string(s: &str) -> Result<Operator> {
    let mut chars = s.chars();
    let first = chars.next().ok_or_else(|| Error::InvalidParameter("empty Pauli string".into()))?;
    chars.try_fold(pauli(first)?, |acc, c| Ok(kron(&acc, &pauli(c)?)))
}

pub fn all_pauli_strings(n: usize) -> Vec<String> {
    (0..4usize.pow(n as u32))
        .map(|mut k| {
            let mut s = vec!['I'; n];
            for slot in s.iter_mut().rev() {
                *slot = ['I', 'X', 'Y', 'Z'][k % 4];
                k /= 4;
            }
            s.into_iter().collect()
        })
        .collect()
}

/// Linear-inversion estimate; not necessarily positive.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub rho: Operator,
    /// Magnitude of the most negative eigenvalue, zero if positive.
    pub positivity_deficit: f64,
}

/// `ρ = 2^{-n} Σ ⟨P⟩ P` over all `4^n` Pauli strings.
pub fn linear_inversion(expectations: &BTreeMap<String, f64>) -> Result<Reconstruction> {
    let n = expectations
        .keys()
        .next()
        .map(|k| k.len())
        .ok_or_else(|| Error::IncompleteBasis("no expectations given".into()))?;
    let dim = 1usize << n;
    let mut rho = Operator::zeros(dim);
    for p in all_pauli_strings(n) {
        let v = expectations.get(&p).ok_or_else(|| Error::IncompleteBasis(p.clone()))?;
        rho += &pauli_string(&p)?.scale(C64::new(v / dim as f64, 0.0));
    }
    let min = rho.hermitian_eigenvalues()[0];
    Ok(Reconstruction { rho, positivity_deficit: (-min).max(0.0) })
}

/// Exact Pauli expectations of `rho`.
pub fn pauli_expectations(rho: &DensityMatrix) -> Result<BTreeMap<String, f64>> {
    let n = rho
        .num_sites()
        .ok_or_else(|| Error::InvalidState("dimension is not a power of two".into()))?;
    all_pauli_strings(n)
        .into_iter()
        .map(|p| Ok((p.clone(), crate::qops::expect(&pauli_string(&p)?, rho)?.re)))
        .collect()
}

fn basis_rotation(c: char) -> Operator {
    let s = FRAC_1_SQRT_2;
    match c {
        'X' => Operator::from_rows(2, &[C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0)]),
        // H·S†
        'Y' => Operator::from_rows(2, &[C64::new(s, 0.0), -I * s, C64::new(s, 0.0), I * s]),
        _ => Operator::identity(2),
    }
}

/// Pauli expectations estimated from `shots` samples in each of the `3^n`
/// measurement settings.
pub fn estimate_pauli_expectations(rho: &DensityMatrix, shots: u64, seed: u64) -> Result<BTreeMap<String, f64>> {
    let n = rho
        .num_sites()
        .ok_or_else(|| Error::InvalidState("dimension is not a power of two".into()))?;
    let mut out = BTreeMap::new();
    let settings: Vec<String> = all_pauli_strings(n).into_iter().filter(|p| !p.contains('I')).collect();
    let mut records = BTreeMap::new();
    for (k, setting) in settings.iter().enumerate() {
        let u = setting
            .chars()
            .map(basis_rotation)
            .reduce(|a, b| kron(&a, &b))
            .unwrap_or_else(|| Operator::identity(1));
        let rotated = DensityMatrix::new_unchecked(&(&u * rho.as_operator()) * &u.adjoint());
        records.insert(setting.clone(), sample_shots(&rotated, shots, seed.wrapping_add(k as u64))?);
    }
    for p in all_pauli_strings(n) {
        let setting: String = p.chars().map(|c| if c == 'I' { 'Z' } else { c }).collect();
        let rec = &records[&setting];
        let mut acc = 0i64;
        for (bits, &c) in &rec.counts {
            let parity = bits
                .chars()
                .zip(p.chars())
                .filter(|&(b, q)| q != 'I' && b == '1')
                .count();
            acc += if parity % 2 == 0 { c as i64 } else { -(c as i64) };
        }
        out.insert(p, acc as f64 / rec.shots as f64);
    }
    Ok(out)
}
