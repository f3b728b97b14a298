#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::DeepArchitecture;
use crate::mdp::BesovIndex;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BesovDeep,
    BarronShallow,
}

/// Resolved architecture. For the shallow family `depth = 2`, `sparsity`
/// counts every parameter and `sup_bound` is the path-norm budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchitecturePlan {
    pub family: Family,
    pub depth: usize,
    pub width: usize,
    pub sparsity: usize,
    pub sup_bound: f64,
    /// Capacity parameter `N` tying `(L, m, S, B)` together.
    pub capacity: usize,
    /// Whether `sup_bound` was limited by the configured cap.
    pub bound_capped: bool,
}

impl ArchitecturePlan {
    pub fn deep(&self, h_cap: f64) -> DeepArchitecture {
        DeepArchitecture {
            depth: self.depth,
            width: self.width,
            sparsity: self.sparsity,
            sup_bound: self.sup_bound,
            h_cap,
        }
    }
}

/// Default l1 path-norm budget for value functions bounded by `horizon` on
/// `[0,1]^d`.
pub fn default_path_budget(horizon: usize, dim: usize) -> f64 {
    10.0 * horizon as f64 * (dim as f64).sqrt()
}

fn ceil_at_least_one(x: f64) -> usize {
    if x.is_finite() {
        (Float::ceil(x) as usize).max(1)
    } else {
        usize::MAX
    }
}

/// `B = N^{1/nu + 1/d}` with `nu = (alpha - eta) / (2 eta)` and
/// `eta = d (1/p - 1/4)^+`, limited to `cap`. For `p = inf`, `eta = 0` and
/// the `1/nu` term vanishes.
fn besov_sup_bound(capacity: usize, dim: usize, alpha: f64, p: BesovIndex, cap: f64) -> Result<(f64, bool)> {
    let eta = p.smoothness_floor(dim);
    if !(alpha > eta) {
        return Err(Error::Precondition(alloc::format!(
            "alpha = {alpha} must exceed d (1/p - 1/4)^+ = {eta}"
        )));
    }
    let inv_nu = 2.0 * eta / (alpha - eta);
    let exponent = inv_nu + 1.0 / dim as f64;
    let raw = Float::ceil(Float::powf(capacity as f64, exponent)).max(1.0);
    if raw > cap {
        Ok((cap.max(1.0), true))
    } else {
        Ok((raw, false))
    }
}

/// Regret-optimal depth, width and capacity for the deep family,
/// with every order constant set to `c`:
/// `N = c T^{d/(2a+d)} (ln T)^3`, `L = c (d/(2a+d)) ln T`,
/// `m = c (d/(2a+d)) T^{d/(2a+d)} ln T`, `S = N`, all rounded up.
pub fn plan_architecture_besov(t: usize, dim: usize, alpha: f64, c: f64) -> Result<ArchitecturePlan> {
    plan_architecture_besov_with(t, dim, alpha, c, BesovIndex::Infinity, f64::INFINITY)
}

pub fn plan_architecture_besov_with(
    t: usize,
    dim: usize,
    alpha: f64,
    c: f64,
    p: BesovIndex,
    bound_cap: f64,
) -> Result<ArchitecturePlan> {
    if t < 2 || dim < 1 || !(alpha > 0.0) || !(c > 0.0) {
        return Err(Error::Precondition(alloc::string::String::from(
            "planner needs T >= 2, d >= 1, alpha > 0, c > 0",
        )));
    }
    let tf = t as f64;
    let ratio = dim as f64 / (2.0 * alpha + dim as f64);
    let ln_t = Float::ln(tf);
    let power = Float::powf(tf, ratio);
    let capacity = ceil_at_least_one(c * power * ln_t * ln_t * ln_t);
    let depth = ceil_at_least_one(c * ratio * ln_t);
    let width = ceil_at_least_one(c * ratio * power * ln_t);
    let (sup_bound, bound_capped) = besov_sup_bound(capacity, dim, alpha, p, bound_cap)?;
    Ok(ArchitecturePlan {
        family: Family::BesovDeep,
        depth,
        width,
        sparsity: capacity,
        sup_bound,
        capacity,
        bound_capped,
    })
}

/// Approximation architecture for a given capacity `N`:
/// `L = max(2, ceil(ln N))`, `m = ceil(N ln N)`, `S = ceil(c_s N)`.
pub fn approximation_architecture(
    capacity: usize,
    dim: usize,
    alpha: f64,
    p: BesovIndex,
    sparsity_factor: f64,
    bound_cap: f64,
) -> Result<ArchitecturePlan> {
    if capacity < 2 {
        return Err(Error::Precondition(alloc::string::String::from("capacity must be >= 2")));
    }
    let n = capacity as f64;
    let ln_n = Float::ln(n);
    let (sup_bound, bound_capped) = besov_sup_bound(capacity, dim, alpha, p, bound_cap)?;
    Ok(ArchitecturePlan {
        family: Family::BesovDeep,
        depth: ceil_at_least_one(ln_n).max(2),
        width: ceil_at_least_one(n * ln_n),
        sparsity: ceil_at_least_one(sparsity_factor * n),
        sup_bound,
        capacity,
        bound_capped,
    })
}

/// Shallow family: `m = ceil(c sqrt(T))` under path-norm budget `budget`.
pub fn plan_architecture_barron(t: usize, c: f64, dim: usize, budget: f64) -> Result<ArchitecturePlan> {
    if t < 1 || !(c > 0.0) || !(budget > 0.0) {
        return Err(Error::Precondition(alloc::string::String::from(
            "planner needs T >= 1, c > 0 and a positive budget",
        )));
    }
    let width = ceil_at_least_one(c * Float::sqrt(t as f64));
    Ok(ArchitecturePlan {
        family: Family::BarronShallow,
        depth: 2,
        width,
        sparsity: width * (dim + 2),
        sup_bound: budget,
        capacity: width,
        bound_capped: false,
    })
}
