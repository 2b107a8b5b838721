//! Policy network: a tanh trunk on a constant observation with Gaussian
//! mean, log-std and value heads, plus Adam.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, w: vec![0.0; n_in * n_out], b: vec![0.0; n_out] }
    }

    /// Uniform Glorot initialisation.
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let lim = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| rng.random_range(-lim..lim)).collect();
        Self { n_in, n_out, w, b: vec![0.0; n_out] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| self.b[o] + (0..self.n_in).map(|i| self.w[o * self.n_in + i] * x[i]).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients for output gradient `gy` at input
    /// `x`; returns the input gradient.
    fn backward(&self, x: &[f64], gy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut gx = vec![0.0; self.n_in];
        for o in 0..self.n_out {
            grad.b[o] += gy[o];
            for i in 0..self.n_in {
                grad.w[o * self.n_in + i] += gy[o] * x[i];
                gx[i] += gy[o] * self.w[o * self.n_in + i];
            }
        }
        gx
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub min_std: f64,
    pub trunk: Vec<Dense>,
    pub value_trunk: Vec<Dense>,
    pub mean: Dense,
    pub log_std: Dense,
    pub value: Dense,
}

/// Head outputs for the constant observation.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    /// Raw head output `l`; the standard deviation is `σ_min + e^l`.
    pub log_std: Vec<f64>,
    pub min_std: f64,
    pub value: f64,
    activations: Vec<Vec<f64>>,
    value_activations: Vec<Vec<f64>>,
}

impl PolicyOutput {
    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| self.min_std + l.exp()).collect()
    }
}

impl PolicyNet {
    pub const OBSERVATION: f64 = 1.0;

    /// Policy and value trunks of `layers × width` tanh units each; the
    /// mean head starts at zero and the standard deviation at
    /// `initial_std > min_std`.
    pub fn new(dim: usize, layers: usize, width: usize, initial_std: f64, min_std: f64, rng: &mut ChaCha8Rng) -> Self {
        let stack = |rng: &mut ChaCha8Rng| -> Vec<Dense> {
            (0..layers).map(|k| Dense::glorot(if k == 0 { 1 } else { width }, width, rng)).collect()
        };
        let trunk = stack(rng);
        let value_trunk = stack(rng);
        let mut log_std = Dense::zeros(width, dim);
        log_std.b.iter_mut().for_each(|b| *b = (initial_std - min_std).ln());
        Self { min_std, trunk, value_trunk, mean: Dense::zeros(width, dim), log_std, value: Dense::zeros(width, 1) }
    }

    pub fn dim(&self) -> usize {
        self.mean.n_out
    }

    pub fn forward(&self) -> PolicyOutput {
        let run = |layers: &[Dense]| {
            let mut acts = vec![vec![Self::OBSERVATION]];
            for layer in layers {
                let z = layer.forward(acts.last().expect("input"));
                acts.push(z.into_iter().map(f64::tanh).collect());
            }
            acts
        };
        let activations = run(&self.trunk);
        let value_activations = run(&self.value_trunk);
        let h = activations.last().expect("trunk output");
        PolicyOutput {
            mean: self.mean.forward(h),
            log_std: self.log_std.forward(h),
            min_std: self.min_std,
            value: self.value.forward(value_activations.last().expect("trunk output"))[0],
            activations,
            value_activations,
        }
    }

    /// Gradient of the loss given its derivatives with respect to the
    /// head outputs.
    pub fn backward(&self, out: &PolicyOutput, g_mean: &[f64], g_log_std: &[f64], g_value: f64) -> PolicyNet {
        let mut grad = self.zeros_like();
        let h = out.activations.last().expect("trunk output");
        let mut gh = self.mean.backward(h, g_mean, &mut grad.mean);
        for (a, b) in gh.iter_mut().zip(self.log_std.backward(h, g_log_std, &mut grad.log_std)) {
            *a += b;
        }
        back_through(&self.trunk, &out.activations, gh, &mut grad.trunk);
        let hv = out.value_activations.last().expect("trunk output");
        let gv = self.value.backward(hv, &[g_value], &mut grad.value);
        back_through(&self.value_trunk, &out.value_activations, gv, &mut grad.value_trunk);
        grad
    }

    pub fn zeros_like(&self) -> PolicyNet {
        let z = |d: &Dense| Dense::zeros(d.n_in, d.n_out);
        PolicyNet {
            min_std: self.min_std,
            trunk: self.trunk.iter().map(z).collect(),
            value_trunk: self.value_trunk.iter().map(z).collect(),
            mean: z(&self.mean),
            log_std: z(&self.log_std),
            value: z(&self.value),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        let mut v: Vec<&mut f64> = Vec::new();
        for l in self.trunk.iter_mut().chain(self.value_trunk.iter_mut()) {
            v.extend(l.params_mut());
        }
        v.extend(self.mean.params_mut());
        v.extend(self.log_std.params_mut());
        v.extend(self.value.params_mut());
        v
    }

    pub fn n_params(&self) -> usize {
        let c = |d: &Dense| d.w.len() + d.b.len();
        self.trunk.iter().chain(&self.value_trunk).map(c).sum::<usize>() + c(&self.mean) + c(&self.log_std) + c(&self.value)
    }
}

fn back_through(layers: &[Dense], acts: &[Vec<f64>], mut gh: Vec<f64>, grads: &mut [Dense]) {
    for (k, layer) in layers.iter().enumerate().rev() {
        let gz: Vec<f64> = gh.iter().zip(&acts[k + 1]).map(|(g, y)| g * (1.0 - y * y)).collect();
        gh = layer.backward(&acts[k], &gz, &mut grads[k]);
    }
}

/// Scales `grad` so its global L2 norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_global_norm(grad: &mut PolicyNet, max_norm: f64) -> f64 {
    let mut p = grad.params_mut();
    let norm = p.iter().map(|x| **x * **x).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let f = max_norm / norm;
        p.iter_mut().for_each(|x| **x *= f);
    }
    norm
}

#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step(&mut self, net: &mut PolicyNet, grad: &mut PolicyNet) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in net.params_mut().into_iter().zip(grad.params_mut()).enumerate() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * *g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * *g * *g;
            *p -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn loss(net: &PolicyNet, a: &[f64], b: &[f64], c: f64) -> f64 {
        let o = net.forward();
        let s: f64 = o.mean.iter().zip(a).map(|(m, a)| m * a).sum::<f64>()
            + o.log_std.iter().zip(b).map(|(l, b)| (l * b).sin()).sum::<f64>();
        s + c * o.value * o.value
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = PolicyNet::new(3, 3, 5, 0.4, 0.0, &mut rng);
        for p in net.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let (a, b, c) = ([0.3, -1.2, 0.7], [1.1, 0.4, -0.9], 0.6);
        let o = net.forward();
        let gl: Vec<f64> = o.log_std.iter().zip(&b).map(|(l, b)| b * (l * b).cos()).collect();
        let mut grad = net.backward(&o, &a, &gl, 2.0 * c * o.value);
        let analytic: Vec<f64> = grad.params_mut().into_iter().map(|x| *x).collect();
        let h = 1e-6;
        for k in 0..net.n_params() {
            let mut plus = net.clone();
            *plus.params_mut()[k] += h;
            let mut minus = net.clone();
            *minus.params_mut()[k] -= h;
            let fd = (loss(&plus, &a, &b, c) - loss(&minus, &a, &b, c)) / (2.0 * h);
            assert_abs_diff_eq!(fd, analytic[k], epsilon = 1e-7);
        }
    }

    #[test]
    fn fresh_policy_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = PolicyNet::new(73, 4, 10, 0.25, 0.05, &mut rng);
        let o = net.forward();
        assert!(o.mean.iter().all(|&m| m == 0.0));
        assert!(o.std().iter().all(|&s| (s - 0.25).abs() < 1e-15));
        assert_eq!(o.value, 0.0);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = PolicyNet::new(4, 2, 3, 1.0, 0.0, &mut rng);
        let before = clip_global_norm(&mut g, 0.5);
        assert!(before > 0.5);
        let after = g.params_mut().iter().map(|x| **x * **x).sum::<f64>().sqrt();
        assert_abs_diff_eq!(after, 0.5, epsilon = 1e-12);
    }
}
