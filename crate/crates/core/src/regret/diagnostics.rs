use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CellStep;
use crate::math::{fit_line, log_log_fit, LineFit};
use crate::oracle::{apply_bellman_to_learned, TabularMdp, ValueTables};
use crate::{Error, Result};

/// Visit counts over `(h, s, a)` cells, with the set of cells reachable at
/// each step under some policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitHistogram {
    pub horizon: usize,
    pub state_count: usize,
    pub action_count: usize,
    pub counts: Vec<u64>,
    pub episodes: u64,
    /// `[H x S]`, true where the state can be reached at step `h`.
    pub support: Vec<bool>,
}

impl VisitHistogram {
    pub fn new(tab: &TabularMdp) -> Self {
        let support = tab.reachable().into_iter().flatten().collect();
        Self {
            horizon: tab.horizon,
            state_count: tab.state_count(),
            action_count: tab.action_count,
            counts: vec![0; tab.horizon * tab.state_count() * tab.action_count],
            episodes: 0,
            support,
        }
    }

    pub fn record_episode(&mut self, cells: &[CellStep]) {
        for (i, step) in cells.iter().enumerate() {
            let idx = (i * self.state_count + step.state) * self.action_count + step.action;
            self.counts[idx] += 1;
        }
        self.episodes += 1;
    }

    /// Smallest visit frequency over supported `(h, s, a)` cells.
    pub fn min_frequency(&self) -> Option<f64> {
        if self.episodes == 0 {
            return None;
        }
        let mut best: Option<f64> = None;
        for h in 0..self.horizon {
            for s in 0..self.state_count {
                if !self.support[h * self.state_count + s] {
                    continue;
                }
                for a in 0..self.action_count {
                    let c = self.counts[(h * self.state_count + s) * self.action_count + a];
                    let f = c as f64 / self.episodes as f64;
                    best = Some(best.map_or(f, |b| b.min(f)));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyReport {
    pub min_frequency: f64,
    /// `(epsilon / A)^K`.
    pub lower_bound: f64,
    pub burn_in: u64,
    /// Whether the burn-in has elapsed.
    pub evaluated: bool,
    /// `min_frequency < 0.1 (epsilon / A)^K` after the burn-in.
    pub violated: bool,
}

/// `max(100, 10 A^K)` episodes.
pub fn occupancy_burn_in(action_count: usize, myopia: usize) -> u64 {
    let a = (action_count as u64).saturating_pow(myopia as u32);
    a.saturating_mul(10).max(100)
}

/// Compares the smallest empirical cell frequency with `(epsilon / A)^K`.
pub fn occupancy_diagnostic(
    hist: &VisitHistogram,
    epsilon: f64,
    action_count: usize,
    horizon: usize,
    myopia: usize,
) -> Result<OccupancyReport> {
    if myopia < 1 || myopia > horizon {
        return Err(Error::config("myopia constant K must lie in 1..=H"));
    }
    let min_frequency = hist.min_frequency().ok_or(Error::InsufficientData {
        requested: 1,
        available: 0,
    })?;
    let lower_bound = Float::powi(epsilon / action_count as f64, myopia as i32);
    let burn_in = occupancy_burn_in(action_count, myopia);
    let evaluated = hist.episodes >= burn_in;
    Ok(OccupancyReport {
        min_frequency,
        lower_bound,
        burn_in,
        evaluated,
        violated: evaluated && min_frequency < 0.1 * lower_bound,
    })
}

/// Slope of `ln(min frequency)` against `ln(epsilon / A)`: an empirical
/// myopia exponent `K^`.
pub fn estimate_myopia(points: &[(f64, f64)], action_count: usize) -> Result<LineFit> {
    let xs: Vec<f64> = points.iter().map(|(e, _)| e / action_count as f64).collect();
    let ys: Vec<f64> = points.iter().map(|(_, f)| *f).collect();
    log_log_fit(&xs, &ys)
}

/// Empirical and expected risk of a fitted step and the bias / variance
/// split of the expected risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub emp_risk: f64,
    /// Monte Carlo expected risk under the mini-batch measure.
    pub exp_risk: f64,
    pub exp_risk_se: f64,
    /// `||Q_h - T_h V_{h+1}||^2` under the mini-batch measure (exact).
    pub bias: f64,
    /// Monte Carlo `E Var[V_{h+1}(s')]`.
    pub variance_term: f64,
    pub variance_exact: f64,
    /// `exp_risk - bias - variance_term`.
    pub split_residual: f64,
    /// Standard error of `split_residual`.
    pub split_se: f64,
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Generalization diagnostics at step `h` for a mini-batch of cell
/// transitions, with fresh successors drawn from the oracle kernel.
pub fn generalization_gap_estimate<R: Rng + ?Sized>(
    tab: &TabularMdp,
    learned: &ValueTables,
    batch: &[CellStep],
    h: usize,
    mc_next_samples: usize,
    rng: &mut R,
) -> Result<GapEstimate> {
    if batch.is_empty() {
        return Err(Error::domain("empty mini-batch"));
    }
    if mc_next_samples < 2 {
        return Err(Error::config("need at least two successor samples"));
    }
    let a_count = tab.action_count;
    let v_next = learned.v_layer(h + 1);
    let backup = apply_bellman_to_learned(tab, v_next, h)?;
    let n = batch.len() as f64;
    let k = mc_next_samples as f64;
    let mut emp = 0.0;
    let mut bias = 0.0;
    let mut var_exact = 0.0;
    let mut exp_sum = 0.0;
    let mut var_sum = 0.0;
    let mut exp_var_of_mean = 0.0;
    let mut res_var_of_mean = 0.0;
    let mut exp_samples = Vec::with_capacity(mc_next_samples);
    let mut res_samples = Vec::with_capacity(mc_next_samples);
    for step in batch {
        let (s, a) = (step.state, step.action);
        let q = learned.q(h, s, a);
        let r = tab.reward(h, s, a);
        let e = q - r - v_next[step.next_state];
        emp += e * e;
        let d = q - backup[s * a_count + a];
        bias += d * d;
        let row = tab.row(h, s, a);
        let ev: f64 = row.iter().zip(v_next).map(|(p, v)| p * v).sum();
        var_exact += row.iter().zip(v_next).map(|(p, v)| p * (v - ev) * (v - ev)).sum::<f64>();
        exp_samples.clear();
        res_samples.clear();
        for _ in 0..mc_next_samples {
            let y = sample_row(row, rng);
            let resid = q - r - v_next[y];
            let dev = v_next[y] - ev;
            exp_samples.push(resid * resid);
            var_sum += dev * dev;
            // per-sample contribution to exp - bias - variance
            res_samples.push(resid * resid - d * d - dev * dev);
        }
        exp_sum += exp_samples.iter().sum::<f64>();
        exp_var_of_mean += crate::math::variance(&exp_samples) / k;
        res_var_of_mean += crate::math::variance(&res_samples) / k;
    }
    let exp_risk = exp_sum / (n * k);
    let variance_term = var_sum / (n * k);
    bias /= n;
    Ok(GapEstimate {
        emp_risk: emp / n,
        exp_risk,
        exp_risk_se: exp_var_of_mean.sqrt() / n,
        bias,
        variance_term,
        variance_exact: var_exact / n,
        split_residual: exp_risk - bias - variance_term,
        split_se: res_var_of_mean.sqrt() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AzumaReport {
    /// Log-log slope of the running envelope; `None` when degenerate.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub degenerate: bool,
    pub envelope_final: f64,
}

/// Growth exponent of `max_{tau <= t} |sum_{s <= tau} x_s|` in `t`, fitted on
/// geometrically spaced `t` from 1 to the end.
pub fn azuma_diagnostic(increments: &[f64]) -> Result<AzumaReport> {
    if increments.len() < 50 {
        return Err(Error::InsufficientData {
            requested: 50,
            available: increments.len(),
        });
    }
    let mut partial = 0.0;
    let mut envelope = Vec::with_capacity(increments.len());
    let mut best = 0.0f64;
    for x in increments {
        partial += x;
        best = best.max(partial.abs());
        envelope.push(best);
    }
    let n = increments.len();
    let start = 1usize;
    let mut ts = Vec::new();
    let mut last = 0;
    for i in 0..40 {
        let t = Float::round(
            start as f64 * Float::powf(n as f64 / start as f64, i as f64 / 39.0),
        ) as usize;
        let t = t.clamp(1, n);
        if t > last {
            ts.push(t);
            last = t;
        }
    }
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| (t as f64, envelope[t - 1]))
        .filter(|(_, e)| *e > 1e-12)
        .collect();
    if pts.len() < 3 {
        return Ok(AzumaReport {
            slope: None,
            slope_se: None,
            degenerate: true,
            envelope_final: best,
        });
    }
    let lx: Vec<f64> = pts.iter().map(|(t, _)| Float::ln(*t)).collect();
    let ly: Vec<f64> = pts.iter().map(|(_, e)| Float::ln(*e)).collect();
    let fit = fit_line(&lx, &ly)?;
    Ok(AzumaReport {
        slope: Some(fit.slope),
        slope_se: Some(fit.slope_se),
        degenerate: false,
        envelope_final: best,
    })
}
