//! SLH triplets with series and concatenation products.
//!
//! Operators are expected to live on one shared Hilbert space already; this
//! module never embeds.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lindblad::GeneratorSpec;
use crate::qops::{Operator, ZERO};

#[derive(Clone, Debug, PartialEq)]
pub struct SlhTriplet {
    pub s: DMatrix<C64>,
    pub l: Vec<Operator>,
    pub h: Operator,
}

impl SlhTriplet {
    pub fn new(s: DMatrix<C64>, l: Vec<Operator>, h: Operator) -> Result<Self> {
        if s.nrows() != s.ncols() || s.nrows() != l.len() {
            return Err(Error::PortMismatch { left: s.nrows(), right: l.len() });
        }
        let dim = h.dim();
        if let Some(bad) = l.iter().find(|op| op.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        Ok(Self { s, l, h })
    }

    /// Triplet with no ports and zero Hamiltonian.
    pub fn empty(dim: usize) -> Self {
        Self { s: DMatrix::zeros(0, 0), l: Vec::new(), h: Operator::zeros(dim) }
    }

    pub fn ports(&self) -> usize {
        self.l.len()
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Max-norm of `S†S - I`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.ports();
        let p = self.s.adjoint() * &self.s - DMatrix::<C64>::identity(n, n);
        p.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// One Lindblad term per nonzero coupling, rate one.
    pub fn to_generator(&self) -> GeneratorSpec {
        self.l
            .iter()
            .filter(|op| !op.is_zero())
            .fold(GeneratorSpec::new(self.h.clone()), |g, op| g.with_decay(1.0, op.clone()))
    }

    pub fn max_abs_diff(&self, other: &SlhTriplet) -> f64 {
        if self.ports() != other.ports() || self.dim() != other.dim() {
            return f64::INFINITY;
        }
        let ds = (&self.s - &other.s).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        let dl = self.l.iter().zip(&other.l).fold(0.0_f64, |a, (x, y)| a.max(x.max_abs_diff(y)));
        ds.max(dl).max(self.h.max_abs_diff(&other.h))
    }
}

fn mix(s: &DMatrix<C64>, l: &[Operator], dim: usize) -> Vec<Operator> {
    (0..s.nrows())
        .map(|i| {
            let mut acc = Operator::zeros(dim);
            for (j, op) in l.iter().enumerate() {
                let c = s[(i, j)];
                if c != ZERO {
                    acc += &op.scale(c);
                }
            }
            acc
        })
        .collect()
}

/// `g2 ◁ g1`: the output of `g1` feeds `g2`.
pub fn series(g2: &SlhTriplet, g1: &SlhTriplet) -> Result<SlhTriplet> {
    if g1.ports() != g2.ports() {
        return Err(Error::PortMismatch { left: g2.ports(), right: g1.ports() });
    }
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { expected: g2.dim(), found: g1.dim() });
    }
    let dim = g1.dim();
    let s = &g2.s * &g1.s;
    let s2l1 = mix(&g2.s, &g1.l, dim);
    let l: Vec<Operator> = s2l1.iter().zip(&g2.l).map(|(a, b)| a + b).collect();
    let mut x = Operator::zeros(dim);
    for (l2, m) in g2.l.iter().zip(&s2l1) {
        x += &(&l2.adjoint() * m);
    }
    let correction = (&x - &x.adjoint()).scale(C64::new(0.0, -0.5));
    let h = &(&g1.h + &g2.h) + &correction;
    Ok(SlhTriplet { s, l, h })
}

/// Left-to-right chain `gs[n-1] ◁ … ◁ gs[0]`.
pub fn series_chain(gs: &[&SlhTriplet]) -> Result<SlhTriplet> {
    let (first, rest) = gs
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("empty series chain".into()))?;
    rest.iter().try_fold((*first).clone(), |acc, g| series(g, &acc))
}

/// `g1 ⊞ g2`.
pub fn concat(g1: &SlhTriplet, g2: &SlhTriplet) -> Result<SlhTriplet> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { expected: g1.dim(), found: g2.dim() });
    }
    let (n1, n2) = (g1.ports(), g2.ports());
    let mut s = DMatrix::zeros(n1 + n2, n1 + n2);
    s.view_mut((0, 0), (n1, n1)).copy_from(&g1.s);
    s.view_mut((n1, n1), (n2, n2)).copy_from(&g2.s);
    let l = g1.l.iter().chain(&g2.l).cloned().collect();
    Ok(SlhTriplet { s, l, h: &g1.h + &g2.h })
}

/// Propagation phase `e^{i kd}` on every port.
pub fn element_phase(kd: f64, ports: usize, dim: usize) -> SlhTriplet {
    let s = DMatrix::identity(ports, ports) * C64::from_polar(1.0, kd);
    SlhTriplet { s, l: vec![Operator::zeros(dim); ports], h: Operator::zeros(dim) }
}

/// Two-port beamsplitter with amplitude transmissivity `eta`; port 1 is the
/// vacuum input whose output carries the loss.
pub fn element_beamsplitter(eta: f64, dim: usize) -> Result<SlhTriplet> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta = {eta} outside [0, 1]")));
    }
    let r = (1.0 - eta * eta).sqrt();
    let e = C64::new(eta, 0.0);
    let rc = C64::new(r, 0.0);
    let s = DMatrix::from_row_slice(2, 2, &[e, -rc, rc, e]);
    Ok(SlhTriplet { s, l: vec![Operator::zeros(dim); 2], h: Operator::zeros(dim) })
}

/// Two-port module emitting through `jump` into port 0 at rate `gamma`, with
/// an optional local Hamiltonian (detuning).
pub fn element_module(jump: &Operator, gamma: f64, h: Option<&Operator>) -> SlhTriplet {
    let dim = jump.dim();
    SlhTriplet {
        s: DMatrix::identity(2, 2),
        l: vec![jump.scale(C64::new((gamma / 2.0).sqrt(), 0.0)), Operator::zeros(dim)],
        h: h.cloned().unwrap_or_else(|| Operator::zeros(dim)),
    }
}

/// Coherent input of amplitude `alpha` on port 0 of a two-port line.
pub fn element_drive(alpha: C64, dim: usize) -> SlhTriplet {
    SlhTriplet {
        s: DMatrix::identity(2, 2),
        l: vec![Operator::identity(dim).scale(alpha), Operator::zeros(dim)],
        h: Operator::zeros(dim),
    }
}

/// Scalar one-port phase element; `S = e^{iφ}`.
pub fn scalar_phase(phi: f64, dim: usize) -> SlhTriplet {
    element_phase(phi, 1, dim)
}

#[cfg(test)]
pub(crate) fn identity_s(n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { crate::qops::ONE } else { ZERO })
}
