use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Regressor;

/// `f(x) = (1/m) sum_k b_k relu(w_k . x + c_k)`, truncated to `[0, h_cap]`
/// on evaluation, under the l1 path-norm budget `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    pub width: usize,
    pub dim: usize,
    /// Output coefficients `b_k`.
    pub outer: Vec<f64>,
    /// Inner weights `w_k`, row-major `[width x dim]`.
    pub inner: Vec<f64>,
    /// Inner biases `c_k`.
    pub bias: Vec<f64>,
    pub h_cap: f64,
    pub budget: f64,
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

impl TwoLayerNet {
    pub fn zeros(width: usize, dim: usize, h_cap: f64, budget: f64) -> Self {
        Self {
            width,
            dim,
            outer: vec![0.0; width],
            inner: vec![0.0; width * dim],
            bias: vec![0.0; width],
            h_cap,
            budget,
        }
    }

    /// Uniform `[-1, 1]` inner weights and biases with small outputs,
    /// projected onto the budget.
    pub fn random<R: Rng + ?Sized>(width: usize, dim: usize, h_cap: f64, budget: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(width, dim, h_cap, budget);
        for w in net.inner.iter_mut() {
            *w = 2.0 * rng.random::<f64>() - 1.0;
        }
        for c in net.bias.iter_mut() {
            *c = 2.0 * rng.random::<f64>() - 1.0;
        }
        for b in net.outer.iter_mut() {
            *b = 0.1 * (2.0 * rng.random::<f64>() - 1.0);
        }
        net.project();
        net
    }

    fn unit(&self, k: usize) -> &[f64] {
        &self.inner[k * self.dim..(k + 1) * self.dim]
    }

    /// `(1/m) sum_k |b_k| (||w_k||_1 + |c_k|)`.
    pub fn path_norm(&self) -> f64 {
        if self.width == 0 {
            return 0.0;
        }
        let total: f64 = (0..self.width)
            .map(|k| {
                let l1: f64 = self.unit(k).iter().map(|w| w.abs()).sum();
                self.outer[k].abs() * (l1 + self.bias[k].abs())
            })
            .sum();
        total / self.width as f64
    }

    /// Untruncated network output.
    pub fn raw(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.width {
            let z: f64 = self.unit(k).iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.bias[k];
            acc += self.outer[k] * relu(z);
        }
        acc / self.width as f64
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.raw(x).clamp(0.0, self.h_cap)
    }
}

/// Rescales the output coefficients so that the path norm is at most
/// `budget`. The network function is scaled by the same factor.
pub fn project_path_norm(net: &mut TwoLayerNet, budget: f64) {
    let norm = net.path_norm();
    if norm > budget * (1.0 + 1e-12) && norm > 0.0 {
        let factor = budget / norm;
        for b in net.outer.iter_mut() {
            *b *= factor;
        }
    }
}

pub fn path_norm(net: &TwoLayerNet) -> f64 {
    net.path_norm()
}

impl Regressor for TwoLayerNet {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn h_cap(&self) -> f64 {
        self.h_cap
    }

    fn raw(&self, x: &[f64]) -> f64 {
        TwoLayerNet::raw(self, x)
    }

    fn param_count(&self) -> usize {
        self.width * (self.dim + 2)
    }

    // layout: outer | inner | bias
    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.outer);
        p.extend_from_slice(&self.inner);
        p.extend_from_slice(&self.bias);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let (m, d) = (self.width, self.dim);
        self.outer.copy_from_slice(&p[..m]);
        self.inner.copy_from_slice(&p[m..m + m * d]);
        self.bias.copy_from_slice(&p[m + m * d..]);
    }

    fn accumulate_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let (m, d) = (self.width, self.dim);
        let inv_m = 1.0 / m as f64;
        let mut out = 0.0;
        for k in 0..m {
            let w = self.unit(k);
            let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias[k];
            if z > 0.0 {
                out += self.outer[k] * z;
                grad[k] += scale * inv_m * z;
                let g = scale * inv_m * self.outer[k];
                let row = &mut grad[m + k * d..m + (k + 1) * d];
                for (gi, xi) in row.iter_mut().zip(x) {
                    *gi += g * xi;
                }
                grad[m + m * d + k] += g;
            }
        }
        out * inv_m
    }

    fn project(&mut self) {
        let budget = self.budget;
        project_path_norm(self, budget);
    }

    fn output_features(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let inv_m = 1.0 / self.width as f64;
        for k in 0..self.width {
            let z: f64 = self.unit(k).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias[k];
            out.push(relu(z) * inv_m);
        }
    }

    fn set_output_weights(&mut self, weights: &[f64]) {
        self.outer.copy_from_slice(weights);
    }

    fn satisfies_constraints(&self, tol: f64) -> bool {
        self.path_norm() <= self.budget + tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_unit_net() -> TwoLayerNet {
        let mut net = TwoLayerNet::zeros(2, 2, 5.0, 10.0);
        net.outer = vec![2.0, -1.0];
        net.inner = vec![1.0, 0.0, 0.0, 3.0];
        net.bias = vec![0.5, 0.0];
        net
    }

    #[test]
    fn path_norm_formula() {
        assert!((two_unit_net().path_norm() - 3.0).abs() < 1e-15);
        assert_eq!(TwoLayerNet::zeros(3, 2, 1.0, 1.0).path_norm(), 0.0);
    }

    #[test]
    fn path_norm_is_homogeneous_in_outer() {
        let mut net = two_unit_net();
        for b in net.outer.iter_mut() {
            *b *= 2.5;
        }
        assert!((net.path_norm() - 7.5).abs() < 1e-12);
    }

    #[test]
    fn projection_cases() {
        let mut net = two_unit_net();
        project_path_norm(&mut net, 6.0);
        assert_eq!(net, two_unit_net());

        // scale to path norm 4, then project onto 2: all b halved
        let mut net = two_unit_net();
        for b in net.outer.iter_mut() {
            *b *= 4.0 / 3.0;
        }
        let before = net.clone();
        project_path_norm(&mut net, 2.0);
        assert!((net.path_norm() - 2.0).abs() < 1e-9);
        for (a, b) in net.outer.iter().zip(&before.outer) {
            assert!((a - 0.5 * b).abs() < 1e-12);
        }
        let x = [0.3, 0.6];
        assert!((net.raw(&x) - 0.5 * before.raw(&x)).abs() < 1e-12);

        let mut zero = TwoLayerNet::zeros(2, 2, 1.0, 1.0);
        project_path_norm(&mut zero, 0.5);
        assert_eq!(zero, TwoLayerNet::zeros(2, 2, 1.0, 1.0));
    }

    #[test]
    fn eval_truncates() {
        let mut net = TwoLayerNet::zeros(1, 1, 5.0, 100.0);
        net.bias = vec![1.0];
        for (b, expect) in [(12.0, 5.0), (-3.0, 0.0), (2.5, 2.5)] {
            net.outer = vec![b];
            assert_eq!(net.eval(&[0.0]), expect);
        }
    }
}
