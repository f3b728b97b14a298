//! Multiscale superpositions of tensorized cubic B-spline bumps.
//!
//! Level `j` uses the cardinal cubic B-spline dilated by `2^j`; translates
//! form a partition of unity on `[0,1]`, so every level contributes at most
//! its coefficient magnitude `base * 2^(-j*alpha)` at any point. Coefficient
//! signs come from a stateless hash of `(seed, level, index)`, which keeps
//! deep fields cheap in high dimension.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::math::hash64;

/// Cardinal cubic B-spline supported on `[0, 4]`.
pub fn cubic_bspline(u: f64) -> f64 {
    if !(0.0..4.0).contains(&u) {
        return 0.0;
    }
    if u < 1.0 {
        u * u * u / 6.0
    } else if u < 2.0 {
        (-3.0 * u * u * u + 12.0 * u * u - 12.0 * u + 4.0) / 6.0
    } else if u < 3.0 {
        (3.0 * u * u * u - 24.0 * u * u + 60.0 * u - 44.0) / 6.0
    } else {
        let v = 4.0 - u;
        v * v * v / 6.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpField {
    pub dim: usize,
    pub alpha: f64,
    /// Finest level `J`; levels run `0..=J`.
    pub levels: usize,
    pub base: f64,
    pub seed: u64,
}

impl BumpField {
    pub fn new(dim: usize, alpha: f64, levels: usize, base: f64, seed: u64) -> Self {
        Self {
            dim,
            alpha,
            levels,
            base,
            seed,
        }
    }

    /// Number of translates per axis at `level`.
    pub fn translates(level: usize) -> usize {
        (1usize << level) + 3
    }

    /// Magnitude shared by every coefficient at `level`.
    pub fn level_magnitude(&self, level: usize) -> f64 {
        self.base * Float::powf(2.0, -(level as f64) * self.alpha)
    }

    /// Signed coefficient of the bump with per-axis translate indices
    /// `index` (each in `0..translates(level)`, offset so that index 0 is
    /// shift `-3`).
    pub fn coefficient(&self, level: usize, index: &[usize]) -> f64 {
        let mut words: Vec<u64> = Vec::with_capacity(index.len() + 2);
        words.push(self.seed);
        words.push(level as u64);
        words.extend(index.iter().map(|&i| i as u64));
        let sign = if hash64(&words) & 1 == 0 { 1.0 } else { -1.0 };
        sign * self.level_magnitude(level)
    }

    /// Upper bound on `|f|` over the box.
    pub fn sup_bound(&self) -> f64 {
        (0..=self.levels).map(|j| self.level_magnitude(j)).sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        let mut total = 0.0;
        let mut first = alloc::vec![0usize; d];
        let mut weights = alloc::vec![[0.0f64; 4]; d];
        let mut index = alloc::vec![0usize; d];
        for level in 0..=self.levels {
            let scale = (1u64 << level) as f64;
            let count = Self::translates(level);
            for axis in 0..d {
                let u = x[axis].clamp(0.0, 1.0) * scale;
                // active shifts k = floor(u)-3 ..= floor(u); offset by +3
                let fl = Float::floor(u) as i64;
                let lo = fl - 3;
                first[axis] = (lo + 3) as usize;
                for r in 0..4 {
                    let k = lo + r as i64;
                    weights[axis][r] = cubic_bspline(u - k as f64);
                }
            }
            let mut level_sum = 0.0;
            let combos = 4usize.pow(d as u32);
            for combo in 0..combos {
                let mut c = combo;
                let mut w = 1.0;
                let mut valid = true;
                for axis in 0..d {
                    let r = c % 4;
                    c /= 4;
                    let idx = first[axis] + r;
                    if idx >= count {
                        valid = false;
                        break;
                    }
                    index[axis] = idx;
                    w *= weights[axis][r];
                }
                if valid && w != 0.0 {
                    level_sum += w * self.coefficient(level, &index);
                }
            }
            total += level_sum;
        }
        total
    }
}
