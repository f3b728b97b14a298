use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::argmax;
use crate::oracle::{apply_bellman_to_learned, greedy_policy, policy_value, TabularMdp, ValueTables};
use crate::{Error, Result};

/// One step of a trajectory on oracle cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStep {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
}

fn check_shapes(tab: &TabularMdp, learned: &ValueTables) -> Result<()> {
    let expected = tab.horizon * tab.state_count() * tab.action_count;
    if learned.q.len() != expected || learned.v.len() != (tab.horizon + 1) * tab.state_count() {
        return Err(Error::Dimension {
            expected,
            found: learned.q.len(),
        });
    }
    Ok(())
}

/// `Gamma_h(s, a) = r_h(s, a) + (P_h V_{h+1})(s, a) - Q_h(s, a)` on every cell.
pub fn td_error_table(tab: &TabularMdp, learned: &ValueTables, h: usize) -> Result<Vec<f64>> {
    check_shapes(tab, learned)?;
    let mut gamma = apply_bellman_to_learned(tab, learned.v_layer(h + 1), h)?;
    let n = tab.state_count() * tab.action_count;
    let q = &learned.q[(h - 1) * n..h * n];
    for (g, q) in gamma.iter_mut().zip(q) {
        *g -= q;
    }
    Ok(gamma)
}

/// `sqrt(sum_c (count_c / total) Gamma(c)^2)`: the `L^2` norm under the
/// empirical measure given by `counts`.
pub fn empirical_l2_td_norm(gamma: &[f64], counts: &[usize]) -> Result<f64> {
    if gamma.len() != counts.len() {
        return Err(Error::Dimension {
            expected: gamma.len(),
            found: counts.len(),
        });
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::InsufficientData {
            requested: 1,
            available: 0,
        });
    }
    let ms: f64 = gamma
        .iter()
        .zip(counts)
        .map(|(g, &c)| c as f64 * g * g)
        .sum::<f64>()
        / total as f64;
    Ok(Float::sqrt(ms))
}

/// TD errors of one step together with the mini-batch cell counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdErrorField {
    pub h: usize,
    pub gamma: Vec<f64>,
    pub counts: Vec<usize>,
    pub l2: f64,
    pub max_abs: f64,
}

pub fn td_field(tab: &TabularMdp, learned: &ValueTables, h: usize, counts: Vec<usize>) -> Result<TdErrorField> {
    let gamma = td_error_table(tab, learned, h)?;
    let l2 = empirical_l2_td_norm(&gamma, &counts)?;
    let max_abs = gamma.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    Ok(TdErrorField {
        h,
        gamma,
        counts,
        l2,
        max_abs,
    })
}

/// Greedy rollout with respect to `learned` from cell `s1`.
pub fn greedy_rollout<R: Rng + ?Sized>(
    tab: &TabularMdp,
    learned: &ValueTables,
    s1: usize,
    rng: &mut R,
) -> Vec<CellStep> {
    let mut s = s1;
    let mut out = Vec::with_capacity(tab.horizon);
    for h in 1..=tab.horizon {
        let a = argmax(learned.q_row(h, s));
        let row = tab.row(h, s, a);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (i, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = i;
                break;
            }
        }
        out.push(CellStep {
            state: s,
            action: a,
            next_state: next,
        });
        s = next;
    }
    out
}

/// Per-episode decomposition of `V*_1(s_1) - V^{pi}_1(s_1)` for the greedy
/// policy `pi` of a learned stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    /// `Gamma_h(s_h, a_h)` along the trajectory.
    pub gamma_visited: Vec<f64>,
    /// `E_{pi*}[Gamma_h(s_h, a_h) | s_1]`.
    pub gamma_star: Vec<f64>,
    pub zeta1: Vec<f64>,
    pub zeta2: Vec<f64>,
    pub term_i: f64,
    pub term_ii: f64,
    /// `sum_h E_{pi*} <Q_h, pi*_h - pi_h>`, never positive.
    pub term_iii: f64,
    pub v_star: f64,
    pub v_learned: f64,
    pub v_greedy: f64,
    /// `V*_1 - V_1 - sum_h E_{pi*}[Gamma_h] - Term(iii)`.
    pub residual_optimal: f64,
    /// `V_1 - V^{pi}_1 - sum_h (zeta1 + zeta2) + sum_h Gamma_h(s_h, a_h)`.
    pub residual_greedy: f64,
}

/// Decomposes one greedy episode with exact oracle expectations.
pub fn decompose_episode(
    tab: &TabularMdp,
    optimal: &ValueTables,
    learned: &ValueTables,
    trajectory: &[CellStep],
) -> Result<DecompositionRecord> {
    check_shapes(tab, learned)?;
    check_shapes(tab, optimal)?;
    let (hz, n, a_count) = (tab.horizon, tab.state_count(), tab.action_count);
    if trajectory.len() != hz {
        return Err(Error::Domain(alloc::format!(
            "trajectory has {} steps, expected {hz}",
            trajectory.len()
        )));
    }
    for (i, step) in trajectory.iter().enumerate() {
        let h = i + 1;
        if step.state >= n || step.next_state >= n || step.action >= a_count {
            return Err(Error::domain("trajectory cell out of range"));
        }
        if step.action != argmax(learned.q_row(h, step.state)) {
            return Err(Error::Domain(alloc::format!(
                "action at step {h} is not greedy for the stack"
            )));
        }
        if i + 1 < hz && trajectory[i + 1].state != step.next_state {
            return Err(Error::Domain(alloc::format!("trajectory breaks at step {h}")));
        }
    }
    let greedy = policy_value(tab, &greedy_policy(learned))?;
    let star_policy = greedy_policy(optimal);

    let mut gamma_visited = Vec::with_capacity(hz);
    let mut gamma_star = Vec::with_capacity(hz);
    let mut zeta1 = Vec::with_capacity(hz);
    let mut zeta2 = Vec::with_capacity(hz);
    let mut term_iii = 0.0;

    let s1 = trajectory[0].state;
    let mut dist = vec![0.0; n];
    dist[s1] = 1.0;
    for (i, step) in trajectory.iter().enumerate() {
        let h = i + 1;
        let gamma = td_error_table(tab, learned, h)?;
        let (s, a, s2) = (step.state, step.action, step.next_state);
        gamma_visited.push(gamma[s * a_count + a]);

        // pi*-weighted expectations at step h
        let mut e_gamma = 0.0;
        let mut next = vec![0.0; n];
        for (x, &w) in dist.iter().enumerate().filter(|(_, w)| **w > 0.0) {
            let base = ((h - 1) * n + x) * a_count;
            let a_star = star_policy[base..base + a_count]
                .iter()
                .position(|&p| p == 1.0)
                .expect("deterministic");
            e_gamma += w * gamma[x * a_count + a_star];
            term_iii += w * (learned.q(h, x, a_star) - learned.v(h, x));
            for (y, p) in tab.row(h, x, a_star).iter().enumerate() {
                next[y] += w * p;
            }
        }
        gamma_star.push(e_gamma);
        dist = next;

        let z1 = (learned.v(h, s) - greedy.v(h, s)) - (learned.q(h, s, a) - greedy.q(h, s, a));
        let diff_next: f64 = tab
            .row(h, s, a)
            .iter()
            .enumerate()
            .map(|(y, p)| p * (learned.v(h + 1, y) - greedy.v(h + 1, y)))
            .sum();
        let z2 = diff_next - (learned.v(h + 1, s2) - greedy.v(h + 1, s2));
        zeta1.push(z1);
        zeta2.push(z2);
    }
    if term_iii > 1e-9 {
        return Err(Error::Numeric(alloc::format!(
            "Term(iii) = {term_iii} is positive for a greedy stack"
        )));
    }
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let term_i = sum(&gamma_star) - sum(&gamma_visited);
    let term_ii = sum(&zeta1) + sum(&zeta2);
    let v_star = optimal.v(1, s1);
    let v_learned = learned.v(1, s1);
    let v_greedy = greedy.v(1, s1);
    Ok(DecompositionRecord {
        residual_optimal: (v_star - v_learned) - sum(&gamma_star) - term_iii,
        residual_greedy: (v_learned - v_greedy) - term_ii + sum(&gamma_visited),
        gamma_visited,
        gamma_star,
        zeta1,
        zeta2,
        term_i,
        term_ii,
        term_iii,
        v_star,
        v_learned,
        v_greedy,
    })
}

/// Largest absolute residual of both per-episode identities over
/// `episodes` greedy rollouts started from the initial law.
pub fn verify_decomposition_identity<R: Rng + ?Sized>(
    tab: &TabularMdp,
    optimal: &ValueTables,
    learned: &ValueTables,
    episodes: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..episodes {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut s1 = tab.initial.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (i, &p) in tab.initial.iter().enumerate() {
            acc += p;
            if u < acc {
                s1 = i;
                break;
            }
        }
        let traj = greedy_rollout(tab, learned, s1, rng);
        let rec = decompose_episode(tab, optimal, learned, &traj)?;
        worst = worst.max(rec.residual_optimal.abs()).max(rec.residual_greedy.abs());
    }
    Ok(worst)
}
