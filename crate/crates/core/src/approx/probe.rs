use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fit_least_squares, approximation_architecture, DeepReluNet, FitConfig, Regressor, TwoLayerNet};
use super::plan::Family;
use crate::math::{hash64, isotonic_non_increasing, mean};
use crate::mdp::BesovIndex;
use crate::{seeded_rng, Error, Result};

/// One capacity level of the approximation probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub capacity: usize,
    /// Grid `L^4` error averaged over seeds.
    pub error: f64,
    /// Error after non-increasing isotonic smoothing across capacities.
    pub smoothed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub family: Family,
    /// Smoothness used for the sup-norm budget of the deep family.
    pub alpha: f64,
    pub p: BesovIndex,
    /// `S = sparsity_factor * N`.
    pub sparsity_factor: f64,
    pub bound_cap: f64,
    /// Path-norm budget of the shallow family (width `N`).
    pub path_budget: f64,
    pub grid_resolution: usize,
    pub seeds: usize,
    pub h_cap: f64,
    pub fit: FitConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            family: Family::BesovDeep,
            alpha: 1.0,
            p: BesovIndex::Infinity,
            sparsity_factor: 4.0,
            bound_cap: f64::INFINITY,
            path_budget: 100.0,
            grid_resolution: 256,
            seeds: 3,
            h_cap: 2.0,
            fit: FitConfig {
                learning_rate: 0.005,
                max_epochs: 1500,
                min_epochs: 50,
                tolerance: 1e-5,
                patience: 100,
                projection_every: 1,
                seed: 0,
                ls_init: true,
            },
        }
    }
}

fn tensor_grid(dim: usize, resolution: usize) -> Vec<Vec<f64>> {
    let count = resolution.pow(dim as u32);
    (0..count)
        .map(|mut idx| {
            let mut x = vec![0.0; dim];
            for axis in (0..dim).rev() {
                x[axis] = (idx % resolution) as f64 / (resolution - 1) as f64;
                idx /= resolution;
            }
            x
        })
        .collect()
}

fn l4_error<N: Regressor>(net: &N, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let m: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| Float::powi(net.eval(x) - y, 4))
        .sum::<f64>()
        / xs.len() as f64;
    Float::powf(m, 0.25)
}

/// Fits `target` on a dense grid with the architecture of capacity `N` for
/// every `N` in `capacities` and reports the grid `L^4` error.
pub fn approximation_probe<F>(
    target: F,
    dim: usize,
    capacities: &[usize],
    cfg: &ProbeConfig,
) -> Result<Vec<ProbePoint>>
where
    F: Fn(&[f64]) -> f64,
{
    if capacities.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("capacities must be strictly increasing"));
    }
    if cfg.grid_resolution < 2 || cfg.seeds == 0 {
        return Err(Error::config("probe needs grid resolution >= 2 and >= 1 seed"));
    }
    let xs = tensor_grid(dim, cfg.grid_resolution);
    let ys: Vec<f64> = xs.iter().map(|x| target(x)).collect();
    if ys.iter().any(|y| !y.is_finite() || *y < 0.0 || *y > cfg.h_cap) {
        return Err(Error::domain("probe target must lie in [0, h_cap]"));
    }
    let mut errors = Vec::with_capacity(capacities.len());
    for &n in capacities {
        let mut per_seed = Vec::with_capacity(cfg.seeds);
        for s in 0..cfg.seeds {
            let seed = hash64(&[cfg.fit.seed, n as u64, s as u64]);
            let mut rng = seeded_rng(seed);
            let fit_cfg = FitConfig { seed, ..cfg.fit };
            let tag = |e: Error| match e {
                Error::Divergence { detail, .. } => Error::Divergence {
                    epoch: n,
                    detail: alloc::format!("capacity {n}: {detail}"),
                },
                other => other,
            };
            let err = match cfg.family {
                Family::BesovDeep => {
                    let plan = approximation_architecture(n, dim, cfg.alpha, cfg.p, cfg.sparsity_factor, cfg.bound_cap)?;
                    let mut net = DeepReluNet::new(dim, plan.deep(cfg.h_cap), &mut rng)?;
                    fit_least_squares(&mut net, &xs, &ys, &fit_cfg).map_err(tag)?;
                    l4_error(&net, &xs, &ys)
                }
                Family::BarronShallow => {
                    let mut net = TwoLayerNet::random(n, dim, cfg.h_cap, cfg.path_budget, &mut rng);
                    fit_least_squares(&mut net, &xs, &ys, &fit_cfg).map_err(tag)?;
                    l4_error(&net, &xs, &ys)
                }
            };
            per_seed.push(err);
        }
        errors.push(mean(&per_seed));
    }
    let smoothed = isotonic_non_increasing(&errors);
    Ok(capacities
        .iter()
        .zip(errors.iter().zip(&smoothed))
        .map(|(&capacity, (&error, &smoothed))| ProbePoint {
            capacity,
            error,
            smoothed,
        })
        .collect())
}

/// `2B sqrt(2 ln(2d) / n)`.
pub fn rademacher_bound(n: usize, dim: usize, budget: f64) -> f64 {
    2.0 * budget * Float::sqrt(2.0 * Float::ln(2.0 * dim as f64) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    /// Mean of `2B ||(1/n) sum_i xi_i x~_i||_inf` over sign draws.
    pub mc_estimate: f64,
    pub analytic_bound: f64,
    /// Standard error of `mc_estimate`.
    pub standard_error: f64,
}

/// Monte Carlo estimate of the Rademacher quantity controlling the
/// path-norm class, on `n` uniform points augmented as `x~ = (x, 1)`.
pub fn rademacher_probe<R: Rng + ?Sized>(
    n: usize,
    dim: usize,
    budget: f64,
    rounds: usize,
    rng: &mut R,
) -> Result<RademacherEstimate> {
    if n == 0 || dim == 0 || rounds == 0 {
        return Err(Error::domain("rademacher probe needs n, d, rounds >= 1"));
    }
    let points: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    let mut samples = Vec::with_capacity(rounds);
    let mut sums = vec![0.0; dim + 1];
    for _ in 0..rounds {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for i in 0..n {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for (s, x) in sums.iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
                *s += sign * x;
            }
            sums[dim] += sign;
        }
        let sup = sums.iter().fold(0.0f64, |a, s| a.max(s.abs())) / n as f64;
        samples.push(2.0 * budget * sup);
    }
    Ok(RademacherEstimate {
        mc_estimate: mean(&samples),
        analytic_bound: rademacher_bound(n, dim, budget),
        standard_error: crate::math::standard_error(&samples),
    })
}
