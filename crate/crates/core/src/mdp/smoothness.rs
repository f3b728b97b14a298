//! Grid estimator of the k-th modulus of smoothness.
//!
//! The supremum over shifts is restricted to axis-aligned and diagonal
//! directions whose step is a whole number of grid cells, so every
//! `x + j h` lands on a grid node. Differences whose stencil leaves the box
//! count as zero. The result is a lower bound on the continuous modulus.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::math::binomial;
use crate::{Error, Result};

/// Exponent of an `L^p` norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormIndex {
    Finite(f64),
    Infinity,
}

pub fn modulus_of_smoothness<F>(
    f: F,
    dim: usize,
    order: usize,
    p: NormIndex,
    t: f64,
    grid_resolution: usize,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if order < 1 {
        return Err(Error::domain("order k must be at least 1"));
    }
    if !(t > 0.0) {
        return Err(Error::domain("shift radius t must be positive"));
    }
    if grid_resolution < 2 {
        return Err(Error::domain("grid resolution must be at least 2"));
    }
    if dim == 0 {
        return Err(Error::domain("dimension must be positive"));
    }
    if let NormIndex::Finite(q) = p {
        if !(q >= 1.0) {
            return Err(Error::domain("finite norm index must be >= 1"));
        }
    }
    let n = grid_resolution;
    let total = n
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::domain("grid too large"))?;
    let spacing = 1.0 / (n - 1) as f64;

    let mut values = Vec::with_capacity(total);
    let mut point = vec![0.0; dim];
    for flat in 0..total {
        let mut c = flat;
        for axis in (0..dim).rev() {
            point[axis] = (c % n) as f64 * spacing;
            c /= n;
        }
        let v = f(&point);
        if !v.is_finite() {
            return Err(Error::numeric("function returned a non-finite value"));
        }
        values.push(v);
    }

    let weights: Vec<f64> = (0..=order)
        .map(|j| {
            let sign = if (order - j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(order, j)
        })
        .collect();

    // direction steps in grid units: axis e_i, and sign patterns with first
    // component positive.
    let mut directions: Vec<Vec<i64>> = Vec::new();
    for axis in 0..dim {
        let mut dir = vec![0i64; dim];
        dir[axis] = 1;
        directions.push(dir);
    }
    if dim > 1 {
        for pattern in 0..(1usize << (dim - 1)) {
            let mut dir = vec![1i64; dim];
            for (axis, slot) in dir.iter_mut().enumerate().skip(1) {
                if pattern >> (axis - 1) & 1 == 1 {
                    *slot = -1;
                }
            }
            directions.push(dir);
        }
    }

    let mut best = 0.0f64;
    let mut coords = vec![0i64; dim];
    for dir in &directions {
        let unit_len = (dir.iter().map(|&s| (s * s) as f64).sum::<f64>()).sqrt() * spacing;
        let max_steps = Float::floor(t / unit_len + 1e-9) as i64;
        for steps in 1..=max_steps {
            let mut acc = 0.0f64;
            for flat in 0..total {
                let mut c = flat;
                for axis in (0..dim).rev() {
                    coords[axis] = (c % n) as i64;
                    c /= n;
                }
                // stencil end point must stay in the box
                let inside = coords.iter().zip(dir).all(|(&x, &s)| {
                    let end = x + s * steps * order as i64;
                    (0..n as i64).contains(&end)
                });
                if !inside {
                    continue;
                }
                let mut diff = 0.0;
                for (j, w) in weights.iter().enumerate() {
                    let mut idx = 0usize;
                    for axis in 0..dim {
                        let x = coords[axis] + dir[axis] * steps * j as i64;
                        idx = idx * n + x as usize;
                    }
                    diff += w * values[idx];
                }
                match p {
                    NormIndex::Infinity => acc = acc.max(diff.abs()),
                    NormIndex::Finite(q) => acc += diff.abs().powf(q),
                }
            }
            let norm = match p {
                NormIndex::Infinity => acc,
                NormIndex::Finite(q) => (acc / total as f64).powf(1.0 / q),
            };
            best = best.max(norm);
        }
    }
    Ok(best)
}
