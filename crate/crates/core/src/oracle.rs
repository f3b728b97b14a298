//! Exact finite-horizon dynamic programming on tabular MDPs.
//!
//! Tables are flat, row-major and 1-based in `h` at the API surface:
//! rewards `[H x S x A]`, transitions `[H x S x A x S]`, values
//! `[(H+1) x S]` with the last layer identically zero.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::argmax;
use crate::mdp::{InitialState, MdpSpec, RewardModel, StateCells, TransitionModel};
use crate::{Error, Result};

/// Default limit on the number of oracle cells.
pub const DEFAULT_CELL_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub cells: StateCells,
    pub action_count: usize,
    pub horizon: usize,
    pub rewards: Vec<f64>,
    pub transitions: Vec<f64>,
    /// Law of the initial cell.
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTables {
    pub horizon: usize,
    pub state_count: usize,
    pub action_count: usize,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl ValueTables {
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[((h - 1) * self.state_count + s) * self.action_count + a]
    }

    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let start = ((h - 1) * self.state_count + s) * self.action_count;
        &self.q[start..start + self.action_count]
    }

    /// `V_h(s)` for `h` in `1..=H+1`.
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[(h - 1) * self.state_count + s]
    }

    pub fn v_layer(&self, h: usize) -> &[f64] {
        &self.v[(h - 1) * self.state_count..h * self.state_count]
    }
}

impl TabularMdp {
    pub fn state_count(&self) -> usize {
        self.cells.len()
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[((h - 1) * self.state_count() + s) * self.action_count + a]
    }

    /// `P_h(. | s, a)`.
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let n = self.state_count();
        let start = (((h - 1) * n + s) * self.action_count + a) * n;
        &self.transitions[start..start + n]
    }

    pub fn locate(&self, state: &[f64]) -> usize {
        self.cells.locate(state)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, s, a) = (self.horizon, self.state_count(), self.action_count);
        if h == 0 || s == 0 || a == 0 {
            return Err(Error::config("empty tabular MDP"));
        }
        if self.rewards.len() != h * s * a {
            return Err(Error::Dimension {
                expected: h * s * a,
                found: self.rewards.len(),
            });
        }
        if self.transitions.len() != h * s * a * s {
            return Err(Error::Dimension {
                expected: h * s * a * s,
                found: self.transitions.len(),
            });
        }
        if self.initial.len() != s {
            return Err(Error::Dimension {
                expected: s,
                found: self.initial.len(),
            });
        }
        for row in self.transitions.chunks(s).chain(core::iter::once(&self.initial[..])) {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::domain("negative probability"));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::domain("probability row does not sum to 1"));
            }
        }
        Ok(())
    }

    /// Expected value of a per-state vector under the initial law.
    pub fn initial_expectation(&self, values: &[f64]) -> f64 {
        self.initial.iter().zip(values).map(|(p, v)| p * v).sum()
    }

    /// Cells reachable at each step `h` (index `h - 1`) under some policy.
    pub fn reachable(&self) -> Vec<Vec<bool>> {
        let n = self.state_count();
        let mut out = Vec::with_capacity(self.horizon);
        let mut current: Vec<bool> = self.initial.iter().map(|&p| p > 0.0).collect();
        for h in 1..=self.horizon {
            let mut next = vec![false; n];
            for s in (0..n).filter(|&s| current[s]) {
                for a in 0..self.action_count {
                    for (s2, &p) in self.row(h, s, a).iter().enumerate() {
                        if p > 0.0 {
                            next[s2] = true;
                        }
                    }
                }
            }
            out.push(core::mem::replace(&mut current, next));
        }
        out
    }
}

/// Tabular MDP for `mdp`: an exact copy when `mdp` is tabular, otherwise
/// the uniform grid with `resolution` cells per axis, rewards at cell
/// centers and Monte Carlo landing frequencies from each center.
pub fn discretize<R: Rng + ?Sized>(
    mdp: &MdpSpec,
    resolution: usize,
    mc_samples: usize,
    rng: &mut R,
) -> Result<TabularMdp> {
    discretize_with_cap(mdp, resolution, mc_samples, DEFAULT_CELL_CAP, rng)
}

pub fn discretize_with_cap<R: Rng + ?Sized>(
    mdp: &MdpSpec,
    resolution: usize,
    mc_samples: usize,
    cap: usize,
    rng: &mut R,
) -> Result<TabularMdp> {
    if resolution == 0 || mc_samples == 0 {
        return Err(Error::domain("resolution and mc_samples must be >= 1"));
    }
    mdp.validate()?;
    let (h_count, a_count) = (mdp.horizon, mdp.action_count);
    if mdp.is_tabular() {
        let (RewardModel::Table(r), TransitionModel::Table(p), Some(cells), InitialState::Cells(init)) =
            (&mdp.reward, &mdp.transition, &mdp.cells, &mdp.initial)
        else {
            return Err(Error::config("tabular MDP with a non-cell initial law"));
        };
        let tab = TabularMdp {
            cells: cells.clone(),
            action_count: a_count,
            horizon: h_count,
            rewards: r.clone(),
            transitions: p.clone(),
            initial: init.clone(),
        };
        tab.validate()?;
        return Ok(tab);
    }
    let cells_count = (resolution as u128).checked_pow(mdp.state_dim as u32);
    let n = match cells_count {
        Some(c) if c <= cap as u128 => c as usize,
        _ => {
            return Err(Error::Capacity {
                cells: cells_count.map_or(usize::MAX, |c| c.min(usize::MAX as u128) as usize),
                cap,
            })
        }
    };
    let cells = StateCells::Grid {
        dim: mdp.state_dim,
        resolution,
    };
    let mut rewards = Vec::with_capacity(h_count * n * a_count);
    let mut transitions = Vec::with_capacity(h_count * n * a_count * n);
    for h in 1..=h_count {
        for s in 0..n {
            let center = cells.center(s);
            for a in 0..a_count {
                rewards.push(mdp.reward(h, &center, a)?);
                let start = transitions.len();
                transitions.resize(start + n, 0.0);
                for _ in 0..mc_samples {
                    let next = mdp.sample_next(h, &center, a, rng)?;
                    transitions[start + cells.locate(&next)] += 1.0;
                }
                let row = &mut transitions[start..start + n];
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= total);
            }
        }
    }
    let initial = match &mdp.initial {
        InitialState::Fixed(x) => {
            let mut p = vec![0.0; n];
            p[cells.locate(x)] = 1.0;
            p
        }
        InitialState::UniformBox => vec![1.0 / n as f64; n],
        InitialState::Cells(_) => return Err(Error::config("cell initial law without tables")),
    };
    let tab = TabularMdp {
        cells,
        action_count: a_count,
        horizon: h_count,
        rewards,
        transitions,
        initial,
    };
    tab.validate()?;
    Ok(tab)
}

/// `Q_h(s, a) = r_h(s, a) + sum_s' P_h(s' | s, a) V_next(s')` for any
/// finite `V_next`.
pub fn apply_bellman_to_learned(tab: &TabularMdp, v_next: &[f64], h: usize) -> Result<Vec<f64>> {
    let n = tab.state_count();
    if v_next.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: v_next.len(),
        });
    }
    if h < 1 || h > tab.horizon {
        return Err(Error::domain("step outside 1..=H"));
    }
    let a_count = tab.action_count;
    let mut q = Vec::with_capacity(n * a_count);
    for s in 0..n {
        for a in 0..a_count {
            let ev: f64 = tab.row(h, s, a).iter().zip(v_next).map(|(p, v)| p * v).sum();
            q.push(tab.reward(h, s, a) + ev);
        }
    }
    Ok(q)
}

/// One step of the Bellman optimality recursion; `v_next` must lie in
/// `[0, H - h]`.
pub fn bellman_backup(tab: &TabularMdp, v_next: &[f64], h: usize) -> Result<Vec<f64>> {
    let top = (tab.horizon - h.min(tab.horizon)) as f64;
    if v_next.iter().any(|&v| !(v >= -1e-12 && v <= top + 1e-9)) {
        return Err(Error::domain("continuation value outside [0, H - h]"));
    }
    apply_bellman_to_learned(tab, v_next, h)
}

/// Backward induction `h = H, ..., 1` from `V_{H+1} = 0`.
pub fn solve_optimal(tab: &TabularMdp) -> ValueTables {
    let (hz, n, a_count) = (tab.horizon, tab.state_count(), tab.action_count);
    let mut q = vec![0.0; hz * n * a_count];
    let mut v = vec![0.0; (hz + 1) * n];
    for h in (1..=hz).rev() {
        let (head, tail) = v.split_at_mut(h * n);
        let v_next = &tail[..n];
        let qh = apply_bellman_to_learned(tab, v_next, h).expect("shapes match");
        for s in 0..n {
            let row = &qh[s * a_count..(s + 1) * a_count];
            head[(h - 1) * n + s] = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        q[(h - 1) * n * a_count..h * n * a_count].copy_from_slice(&qh);
    }
    ValueTables {
        horizon: hz,
        state_count: n,
        action_count: a_count,
        q,
        v,
    }
}

/// Deterministic policy picking the lowest-index maximizer of `values`.
pub fn greedy_policy(values: &ValueTables) -> Vec<f64> {
    let a_count = values.action_count;
    let mut policy = vec![0.0; values.q.len()];
    for (row, out) in values.q.chunks(a_count).zip(policy.chunks_mut(a_count)) {
        out[argmax(row)] = 1.0;
    }
    policy
}

/// `Q^pi` and `V^pi` for a per-`(h, s)` action distribution `policy`
/// laid out as `[H x S x A]`.
pub fn policy_value(tab: &TabularMdp, policy: &[f64]) -> Result<ValueTables> {
    let (hz, n, a_count) = (tab.horizon, tab.state_count(), tab.action_count);
    if policy.len() != hz * n * a_count {
        return Err(Error::Dimension {
            expected: hz * n * a_count,
            found: policy.len(),
        });
    }
    for row in policy.chunks(a_count) {
        if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::domain("policy row is not a probability vector"));
        }
    }
    let mut q = vec![0.0; hz * n * a_count];
    let mut v = vec![0.0; (hz + 1) * n];
    for h in (1..=hz).rev() {
        let (head, tail) = v.split_at_mut(h * n);
        let qh = apply_bellman_to_learned(tab, &tail[..n], h)?;
        for s in 0..n {
            let base = ((h - 1) * n + s) * a_count;
            head[(h - 1) * n + s] = (0..a_count).map(|a| policy[base + a] * qh[s * a_count + a]).sum();
        }
        q[(h - 1) * n * a_count..h * n * a_count].copy_from_slice(&qh);
    }
    Ok(ValueTables {
        horizon: hz,
        state_count: n,
        action_count: a_count,
        q,
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::benchmarks::two_state_chain;
    use crate::seeded_rng;

    fn chain() -> TabularMdp {
        discretize(&two_state_chain(), 1, 1, &mut seeded_rng(0)).unwrap()
    }

    #[test]
    fn chain_values() {
        let tab = chain();
        let opt = solve_optimal(&tab);
        assert_eq!(opt.q(1, 0, 0), 1.0);
        assert_eq!(opt.q(1, 0, 1), 0.4);
        assert_eq!(opt.v(1, 0), 1.0);
        assert_eq!(opt.v(3, 0), 0.0);

        let always_b: Vec<f64> = (0..4).flat_map(|_| [0.0, 1.0]).collect();
        let vb = policy_value(&tab, &always_b).unwrap();
        assert!((vb.v(1, 0) - 0.4).abs() < 1e-15);

        let greedy = policy_value(&tab, &greedy_policy(&opt)).unwrap();
        assert_eq!(greedy.v, opt.v);
    }

    #[test]
    fn terminal_backup_is_reward() {
        let tab = chain();
        let q = bellman_backup(&tab, &[0.0, 0.0], 2).unwrap();
        assert_eq!(q, (0..4).map(|i| tab.rewards[4 + i]).collect::<Vec<_>>());
        assert!(matches!(
            bellman_backup(&tab, &[0.0], 2),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn rejects_bad_policy_rows() {
        let tab = chain();
        assert!(matches!(policy_value(&tab, &[0.5; 8]), Ok(_)));
        assert!(matches!(policy_value(&tab, &[0.7; 8]), Err(Error::Domain(_))));
    }

    #[test]
    fn uniform_kernel_frequencies() {
        let mdp = MdpSpec {
            horizon: 1,
            action_count: 2,
            state_dim: 2,
            reward: RewardModel::Constant(0.3),
            transition: TransitionModel::Uniform,
            initial: InitialState::UniformBox,
            cells: None,
            target_meta: None,
        };
        let tab = discretize(&mdp, 2, 10_000, &mut seeded_rng(4)).unwrap();
        assert_eq!(tab.state_count(), 4);
        // binomial sd sqrt(0.25 * 0.75 / 1e4) = 0.0043
        assert!(tab.transitions.iter().all(|p| (p - 0.25).abs() < 0.02));
    }

    #[test]
    fn capacity_error() {
        let mdp = MdpSpec {
            horizon: 1,
            action_count: 2,
            state_dim: 3,
            reward: RewardModel::Constant(0.0),
            transition: TransitionModel::Uniform,
            initial: InitialState::UniformBox,
            cells: None,
            target_meta: None,
        };
        let err = discretize(&mdp, 100, 1, &mut seeded_rng(0)).unwrap_err();
        assert_eq!(
            err,
            Error::Capacity {
                cells: 1_000_000,
                cap: DEFAULT_CELL_CAP
            }
        );
    }
}
