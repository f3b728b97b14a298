use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::{Error, Result};

/// Shape and budgets of a sparse deep ReLU network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepArchitecture {
    /// Number of affine layers `L` (`L - 1` hidden layers of width `m`).
    pub depth: usize,
    pub width: usize,
    /// Total nonzero budget `S` over weights and biases.
    pub sparsity: usize,
    /// Entrywise sup-norm budget `B`.
    pub sup_bound: f64,
    pub h_cap: f64,
}

/// Serialized form of [`DeepReluNet`]: dense row-major layers plus masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepNetData {
    pub input_dim: usize,
    pub arch: DeepArchitecture,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub weight_mask: Vec<Vec<bool>>,
    pub bias_mask: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveLayer {
    /// `(row, col)` of each free weight, in free-parameter order.
    weights: Vec<(usize, usize)>,
    biases: Vec<usize>,
    offset: usize,
}

/// `f = (W_L relu(.) + b_L) o ... o (W_1 x + b_1)` with a fixed sparsity
/// mask, entrywise bound `B` and output truncation to `[0, h_cap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DeepNetData", into = "DeepNetData")]
pub struct DeepReluNet {
    pub input_dim: usize,
    pub arch: DeepArchitecture,
    /// Per layer, row-major `[out x in]`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub weight_mask: Vec<Vec<bool>>,
    pub bias_mask: Vec<Vec<bool>>,
    active: Vec<ActiveLayer>,
}

impl From<DeepNetData> for DeepReluNet {
    fn from(d: DeepNetData) -> Self {
        let mut net = DeepReluNet {
            input_dim: d.input_dim,
            arch: d.arch,
            weights: d.weights,
            biases: d.biases,
            weight_mask: d.weight_mask,
            bias_mask: d.bias_mask,
            active: Vec::new(),
        };
        net.rebuild_active();
        net
    }
}

impl From<DeepReluNet> for DeepNetData {
    fn from(n: DeepReluNet) -> Self {
        DeepNetData {
            input_dim: n.input_dim,
            arch: n.arch,
            weights: n.weights,
            biases: n.biases,
            weight_mask: n.weight_mask,
            bias_mask: n.bias_mask,
        }
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

impl DeepReluNet {
    /// `(out, in)` of every layer.
    pub fn layer_shapes(input_dim: usize, arch: &DeepArchitecture) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(arch.depth);
        let mut fan_in = input_dim;
        for l in 0..arch.depth {
            let out = if l + 1 == arch.depth { 1 } else { arch.width };
            shapes.push((out, fan_in));
            fan_in = out;
        }
        shapes
    }

    pub fn total_params(input_dim: usize, arch: &DeepArchitecture) -> usize {
        Self::layer_shapes(input_dim, arch)
            .iter()
            .map(|(o, i)| o * i + o)
            .sum()
    }

    pub fn validate_arch(input_dim: usize, arch: &DeepArchitecture) -> Result<()> {
        if arch.depth < 1 || arch.width < 1 || arch.sparsity < 1 || input_dim < 1 {
            return Err(Error::config("depth, width, sparsity and input dim must be >= 1"));
        }
        if !(arch.sup_bound > 0.0) || !(arch.h_cap > 0.0) {
            return Err(Error::config("sup bound and truncation level must be positive"));
        }
        Ok(())
    }

    fn empty(input_dim: usize, arch: DeepArchitecture) -> Self {
        let shapes = Self::layer_shapes(input_dim, &arch);
        DeepReluNet {
            input_dim,
            arch,
            weights: shapes.iter().map(|(o, i)| vec![0.0; o * i]).collect(),
            biases: shapes.iter().map(|(o, _)| vec![0.0; *o]).collect(),
            weight_mask: shapes.iter().map(|(o, i)| vec![false; o * i]).collect(),
            bias_mask: shapes.iter().map(|(o, _)| vec![false; *o]).collect(),
            active: Vec::new(),
        }
    }

    /// Draws the sparsity mask and initial parameters.
    ///
    /// When `S` covers every parameter the mask is dense and weights are
    /// He-uniform. Otherwise the mask is a union of random input-to-output
    /// paths (one hidden unit per layer, with its bias), added until the
    /// budget is exhausted. Path units start as hinge features
    /// `relu(w . (x - u))` with stratified knots `u`, passed through unit
    /// weights to the output.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, arch: DeepArchitecture, rng: &mut R) -> Result<Self> {
        Self::validate_arch(input_dim, &arch)?;
        let mut net = Self::empty(input_dim, arch);
        let total = Self::total_params(input_dim, &arch);
        let depth = arch.depth;
        let bound = arch.sup_bound;
        if arch.sparsity >= total {
            for l in 0..depth {
                net.weight_mask[l].iter_mut().for_each(|m| *m = true);
                net.bias_mask[l].iter_mut().for_each(|m| *m = true);
                let fan_in = if l == 0 { input_dim } else { arch.width };
                let a = (6.0 / fan_in as f64).sqrt().min(bound);
                for w in net.weights[l].iter_mut() {
                    *w = a * (2.0 * rng.random::<f64>() - 1.0);
                }
                for b in net.biases[l].iter_mut() {
                    *b = (0.1 * (2.0 * rng.random::<f64>() - 1.0)).clamp(-bound, bound);
                }
            }
        } else {
            net.draw_paths(rng);
        }
        net.rebuild_active();
        project_deep_constraints(&mut net);
        Ok(net)
    }

    fn draw_paths<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let depth = self.arch.depth;
        let d = self.input_dim;
        let m = self.arch.width;
        let budget = self.arch.sparsity;
        // output bias first
        self.bias_mask[depth - 1][0] = true;
        let mut used = 1usize;
        if depth == 1 {
            for i in 0..d.min(budget - used) {
                self.weight_mask[0][i] = true;
                self.weights[0][i] = 0.1 * (2.0 * rng.random::<f64>() - 1.0);
            }
            return;
        }
        let mut paths: Vec<Vec<usize>> = Vec::new();
        let mut misses = 0;
        while misses < 8 {
            let units: Vec<usize> = (0..depth - 1).map(|_| rng.random_range(0..m)).collect();
            let mut new_entries = 0usize;
            for i in 0..d {
                new_entries += usize::from(!self.weight_mask[0][units[0] * d + i]);
            }
            new_entries += usize::from(!self.bias_mask[0][units[0]]);
            for l in 1..depth - 1 {
                new_entries += usize::from(!self.weight_mask[l][units[l] * m + units[l - 1]]);
                new_entries += usize::from(!self.bias_mask[l][units[l]]);
            }
            new_entries += usize::from(!self.weight_mask[depth - 1][units[depth - 2]]);
            if new_entries == 0 || used + new_entries > budget {
                misses += 1;
                continue;
            }
            used += new_entries;
            for i in 0..d {
                self.weight_mask[0][units[0] * d + i] = true;
            }
            self.bias_mask[0][units[0]] = true;
            for l in 1..depth - 1 {
                self.weight_mask[l][units[l] * m + units[l - 1]] = true;
                self.bias_mask[l][units[l]] = true;
            }
            self.weight_mask[depth - 1][units[depth - 2]] = true;
            paths.push(units);
        }
        let count = paths.len().max(1);
        for (p, units) in paths.iter().enumerate() {
            let u0 = units[0];
            let mut dir: Vec<f64> = (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let l1: f64 = dir.iter().map(|w| w.abs()).sum::<f64>().max(1e-12);
            dir.iter_mut().for_each(|w| *w /= l1);
            let knot: Vec<f64> = (0..d)
                .map(|i| {
                    if i == 0 {
                        (p as f64 + rng.random::<f64>()) / count as f64
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            for i in 0..d {
                self.weights[0][u0 * d + i] = dir[i];
            }
            self.biases[0][u0] = -dir.iter().zip(&knot).map(|(a, b)| a * b).sum::<f64>();
            for l in 1..depth - 1 {
                self.weights[l][units[l] * m + units[l - 1]] = 1.0;
            }
            self.weights[depth - 1][units[depth - 2]] = 0.1 * (2.0 * rng.random::<f64>() - 1.0);
        }
    }

    fn rebuild_active(&mut self) {
        let shapes = Self::layer_shapes(self.input_dim, &self.arch);
        let mut offset = 0;
        self.active = shapes
            .iter()
            .enumerate()
            .map(|(l, &(out, fan_in))| {
                let mut weights = Vec::new();
                for r in 0..out {
                    for c in 0..fan_in {
                        if self.weight_mask[l][r * fan_in + c] {
                            weights.push((r, c));
                        }
                    }
                }
                let biases: Vec<usize> = (0..out).filter(|&r| self.bias_mask[l][r]).collect();
                let layer = ActiveLayer {
                    offset,
                    weights,
                    biases,
                };
                offset += layer.weights.len() + layer.biases.len();
                layer
            })
            .collect();
    }

    /// Number of mask entries that are switched on.
    pub fn active_count(&self) -> usize {
        self.weight_mask
            .iter()
            .chain(&self.bias_mask)
            .map(|m| m.iter().filter(|&&b| b).count())
            .sum()
    }

    /// Nonzero weights and biases.
    pub fn nonzero_count(&self) -> usize {
        self.weights
            .iter()
            .chain(&self.biases)
            .map(|v| v.iter().filter(|&&x| x != 0.0).count())
            .sum()
    }

    /// Largest absolute weight or bias.
    pub fn sup_norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flat_map(|v| v.iter())
            .fold(0.0f64, |a, x| a.max(x.abs()))
    }

    fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.arch.width
        }
    }

    /// Pre-activations of every layer.
    fn forward(&self, x: &[f64], pre: &mut Vec<Vec<f64>>) {
        let depth = self.arch.depth;
        pre.resize(depth, Vec::new());
        for l in 0..depth {
            let out = self.biases[l].len();
            let mut z = core::mem::take(&mut pre[l]);
            z.clear();
            z.extend_from_slice(&self.biases[l]);
            let fan_in = self.fan_in(l);
            let layer = &self.active[l];
            if l == 0 {
                for &(r, c) in &layer.weights {
                    z[r] += self.weights[l][r * fan_in + c] * x[c];
                }
            } else {
                let prev = &pre[l - 1];
                for &(r, c) in &layer.weights {
                    z[r] += self.weights[l][r * fan_in + c] * relu(prev[c]);
                }
            }
            debug_assert_eq!(z.len(), out);
            pre[l] = z;
        }
    }

    pub fn raw(&self, x: &[f64]) -> f64 {
        let mut pre = Vec::new();
        self.forward(x, &mut pre);
        pre[self.arch.depth - 1][0]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.raw(x).clamp(0.0, self.arch.h_cap)
    }

    fn free_count(&self) -> usize {
        self.active
            .last()
            .map_or(0, |l| l.offset + l.weights.len() + l.biases.len())
    }
}

/// Zeroes every entry outside the mask and clamps the rest to `[-B, B]`.
pub fn project_deep_constraints(net: &mut DeepReluNet) {
    let bound = net.arch.sup_bound;
    for l in 0..net.arch.depth {
        for (w, &on) in net.weights[l].iter_mut().zip(&net.weight_mask[l]) {
            *w = if on { w.clamp(-bound, bound) } else { 0.0 };
        }
        for (b, &on) in net.biases[l].iter_mut().zip(&net.bias_mask[l]) {
            *b = if on { b.clamp(-bound, bound) } else { 0.0 };
        }
    }
}

impl Regressor for DeepReluNet {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn h_cap(&self) -> f64 {
        self.arch.h_cap
    }

    fn raw(&self, x: &[f64]) -> f64 {
        DeepReluNet::raw(self, x)
    }

    fn param_count(&self) -> usize {
        self.free_count()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.free_count());
        for (l, layer) in self.active.iter().enumerate() {
            let fan_in = self.fan_in(l);
            p.extend(layer.weights.iter().map(|&(r, c)| self.weights[l][r * fan_in + c]));
            p.extend(layer.biases.iter().map(|&r| self.biases[l][r]));
        }
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        for l in 0..self.arch.depth {
            let fan_in = self.fan_in(l);
            let layer = &self.active[l];
            let mut i = layer.offset;
            for &(r, c) in &layer.weights {
                self.weights[l][r * fan_in + c] = p[i];
                i += 1;
            }
            for &r in &layer.biases {
                self.biases[l][r] = p[i];
                i += 1;
            }
        }
    }

    fn accumulate_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let depth = self.arch.depth;
        let mut pre = Vec::new();
        self.forward(x, &mut pre);
        let out = pre[depth - 1][0];
        let mut delta = vec![scale];
        for l in (0..depth).rev() {
            let fan_in = self.fan_in(l);
            let layer = &self.active[l];
            let mut prev_delta = if l > 0 { vec![0.0; fan_in] } else { Vec::new() };
            let mut i = layer.offset;
            for &(r, c) in &layer.weights {
                let input = if l == 0 { x[c] } else { relu(pre[l - 1][c]) };
                grad[i] += delta[r] * input;
                if l > 0 {
                    prev_delta[c] += self.weights[l][r * fan_in + c] * delta[r];
                }
                i += 1;
            }
            for &r in &layer.biases {
                grad[i] += delta[r];
                i += 1;
            }
            if l > 0 {
                for (dv, z) in prev_delta.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *dv = 0.0;
                    }
                }
                delta = prev_delta;
            }
        }
        out
    }

    fn project(&mut self) {
        project_deep_constraints(self);
    }

    fn output_features(&self, x: &[f64], out: &mut Vec<f64>) {
        let depth = self.arch.depth;
        out.clear();
        let last = &self.active[depth - 1];
        if depth == 1 {
            out.extend(last.weights.iter().map(|&(_, c)| x[c]));
        } else {
            let mut pre = Vec::new();
            self.forward(x, &mut pre);
            out.extend(last.weights.iter().map(|&(_, c)| relu(pre[depth - 2][c])));
        }
        if !last.biases.is_empty() {
            out.push(1.0);
        }
    }

    fn set_output_weights(&mut self, weights: &[f64]) {
        let depth = self.arch.depth;
        let fan_in = self.fan_in(depth - 1);
        let last = self.active[depth - 1].clone();
        for (k, &(r, c)) in last.weights.iter().enumerate() {
            self.weights[depth - 1][r * fan_in + c] = weights[k];
        }
        if !last.biases.is_empty() {
            self.biases[depth - 1][0] = weights[last.weights.len()];
        }
    }

    fn satisfies_constraints(&self, tol: f64) -> bool {
        self.nonzero_count() <= self.arch.sparsity && self.sup_norm() <= self.arch.sup_bound + tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn arch(sparsity: usize) -> DeepArchitecture {
        DeepArchitecture {
            depth: 3,
            width: 6,
            sparsity,
            sup_bound: 2.0,
            h_cap: 5.0,
        }
    }

    #[test]
    fn sparse_mask_respects_budget() {
        let mut rng = seeded_rng(3);
        let net = DeepReluNet::new(2, arch(20), &mut rng).unwrap();
        assert!(net.active_count() <= 20);
        assert!(net.active_count() > 1);
        assert!(net.satisfies_constraints(0.0));
    }

    #[test]
    fn dense_mask_when_budget_covers_all() {
        let mut rng = seeded_rng(3);
        let a = arch(10_000);
        let net = DeepReluNet::new(2, a, &mut rng).unwrap();
        assert_eq!(net.active_count(), DeepReluNet::total_params(2, &a));
    }

    #[test]
    fn projection_cases() {
        let mut rng = seeded_rng(9);
        let mut net = DeepReluNet::new(2, arch(20), &mut rng).unwrap();
        let feasible = net.clone();
        project_deep_constraints(&mut net);
        assert_eq!(net, feasible);

        // an active entry pushed to 2B is clamped to B
        let (l, idx) = net
            .weight_mask
            .iter()
            .enumerate()
            .find_map(|(l, m)| m.iter().position(|&b| b).map(|i| (l, i)))
            .unwrap();
        net.weights[l][idx] = 4.0;
        project_deep_constraints(&mut net);
        assert_eq!(net.weights[l][idx], 2.0);

        // an off-mask entry is zeroed
        let (l, idx) = net
            .weight_mask
            .iter()
            .enumerate()
            .find_map(|(l, m)| m.iter().position(|&b| !b).map(|i| (l, i)))
            .unwrap();
        net.weights[l][idx] = 0.7;
        project_deep_constraints(&mut net);
        assert_eq!(net.weights[l][idx], 0.0);
        assert!(net.nonzero_count() <= 20);
    }

    #[test]
    fn params_round_trip() {
        let mut rng = seeded_rng(1);
        let mut net = DeepReluNet::new(3, arch(30), &mut rng).unwrap();
        let p = net.params();
        let before = net.clone();
        net.set_params(&p);
        assert_eq!(net, before);
    }
}
