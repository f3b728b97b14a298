//! Episodic MDPs over the unit box `[0,1]^d_s` with a finite action set.

mod bump;
mod smoothness;

pub use bump::{cubic_bspline, BumpField};
pub use smoothness::{modulus_of_smoothness, NormIndex};

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::TwoLayerNet;
use crate::math::hash64;
use crate::{seeded_rng, Error, Result};

/// Besov integrability index `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BesovIndex {
    Two,
    Infinity,
}

impl BesovIndex {
    /// `eta = d (1/p - 1/4)_+`, the smoothness floor for deep networks.
    pub fn smoothness_floor(self, dim: usize) -> f64 {
        match self {
            BesovIndex::Two => dim as f64 * 0.25,
            BesovIndex::Infinity => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    BumpSuperposition,
    BarronRandomFeatures,
    TabularRandom,
}

/// Smoothness metadata used to build a synthetic MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub alpha: f64,
    pub p: BesovIndex,
    pub q: f64,
    /// Norm radius of the constructed reward functions.
    pub radius: f64,
    pub construction: Construction,
    /// Finest level of the multiscale construction.
    pub levels: usize,
    pub seed: u64,
    /// Number of states for `tabular_random`.
    pub tabular_states: usize,
    /// Hidden units per reward network for `barron_random_features`.
    pub features: usize,
}

impl TargetSpec {
    pub fn new(construction: Construction) -> Self {
        Self {
            alpha: 1.0,
            p: BesovIndex::Infinity,
            q: f64::INFINITY,
            radius: 1.0,
            construction,
            levels: 6,
            seed: 0,
            tabular_states: 4,
            features: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::config("alpha must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::config("norm radius must be positive"));
        }
        if !(self.q > 0.0) {
            return Err(Error::config("q must be positive"));
        }
        match self.construction {
            Construction::TabularRandom if self.tabular_states == 0 => {
                Err(Error::config("tabular_random needs at least one state"))
            }
            Construction::BarronRandomFeatures if self.features == 0 => {
                Err(Error::config("barron_random_features needs at least one feature"))
            }
            _ => Ok(()),
        }
    }

    /// Smoothness precondition of the deep-network regret bound.
    pub fn check_deep_smoothness(&self, feature_dim: usize) -> Result<()> {
        let eta = self.p.smoothness_floor(feature_dim);
        if self.alpha > eta {
            Ok(())
        } else {
            Err(Error::Precondition(alloc::format!(
                "alpha = {} must exceed d(1/p - 1/4)_+ = {}",
                self.alpha,
                eta
            )))
        }
    }
}

/// One observed step of an episode. `h` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub h: usize,
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// A finite set of representative states: either the cell centers of a
/// uniform grid, or an explicit list of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateCells {
    Grid { dim: usize, resolution: usize },
    Points(Vec<Vec<f64>>),
}

impl StateCells {
    pub fn len(&self) -> usize {
        match self {
            StateCells::Grid { dim, resolution } => resolution.pow(*dim as u32),
            StateCells::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            StateCells::Grid { dim, .. } => *dim,
            StateCells::Points(p) => p.first().map_or(0, Vec::len),
        }
    }

    pub fn center(&self, index: usize) -> Vec<f64> {
        match self {
            StateCells::Grid { dim, resolution } => {
                let mut out = vec![0.0; *dim];
                let mut c = index;
                for axis in (0..*dim).rev() {
                    out[axis] = ((c % resolution) as f64 + 0.5) / *resolution as f64;
                    c /= resolution;
                }
                out
            }
            StateCells::Points(p) => p[index].clone(),
        }
    }

    /// Cell containing `state` (grid), or nearest point (lowest index on ties).
    pub fn locate(&self, state: &[f64]) -> usize {
        match self {
            StateCells::Grid { dim, resolution } => {
                let mut idx = 0usize;
                for &x in state.iter().take(*dim) {
                    let r = *resolution;
                    let cell = Float::floor(x.clamp(0.0, 1.0) * r as f64) as usize;
                    idx = idx * r + cell.min(r - 1);
                }
                idx
            }
            StateCells::Points(points) => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, p) in points.iter().enumerate() {
                    let d: f64 = p.iter().zip(state).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                best
            }
        }
    }

    /// `count` points at the first `count` cell centers of the smallest grid
    /// holding them.
    pub fn embedded(count: usize, dim: usize) -> Self {
        let mut resolution = 1usize;
        while resolution.pow(dim as u32) < count {
            resolution += 1;
        }
        let grid = StateCells::Grid { dim, resolution };
        StateCells::Points((0..count).map(|i| grid.center(i)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RewardModel {
    Constant(f64),
    /// `[H x S x A]` table over the MDP's state cells.
    Table(Vec<f64>),
    /// One field per `(h, a)`, mapped affinely into `[0,1]`.
    Bumps(Vec<BumpField>),
    /// One network per step on `featurize(s, a)`, clamped to `[0,1]`.
    Networks(Vec<TwoLayerNet>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransitionModel {
    /// `[H x S x A x S]` row-stochastic table over the state cells.
    Table(Vec<f64>),
    /// `s' = clip(s + drift[h, a] + noise * U(-1, 1)^d)`.
    Drift { drift: Vec<Vec<f64>>, noise: f64 },
    /// `s' ~ U([0,1]^d)` regardless of `(s, a)`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    Fixed(Vec<f64>),
    UniformBox,
    /// Distribution over the MDP's state cells.
    Cells(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub horizon: usize,
    pub action_count: usize,
    pub state_dim: usize,
    pub reward: RewardModel,
    pub transition: TransitionModel,
    pub initial: InitialState,
    /// Present when the MDP is tabular; rewards and transitions are indexed
    /// by these cells.
    pub cells: Option<StateCells>,
    pub target_meta: Option<TargetSpec>,
}

/// Concatenates `state` with a one-hot encoding of `action`.
pub fn featurize(state: &[f64], action: usize, action_count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(state.len() + action_count);
    featurize_into(state, action, action_count, &mut out)?;
    Ok(out)
}

pub fn featurize_into(
    state: &[f64],
    action: usize,
    action_count: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    if action >= action_count {
        return Err(Error::Domain(alloc::format!(
            "action {action} out of range 0..{action_count}"
        )));
    }
    if state.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::domain("state outside the unit box"));
    }
    out.clear();
    out.extend_from_slice(state);
    out.extend((0..action_count).map(|a| if a == action { 1.0 } else { 0.0 }));
    Ok(())
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl MdpSpec {
    /// Builds a tabular MDP and checks its invariants.
    pub fn tabular(
        cells: StateCells,
        action_count: usize,
        horizon: usize,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let s = cells.len();
        let spec = Self {
            horizon,
            action_count,
            state_dim: cells.dim(),
            reward: RewardModel::Table(rewards),
            transition: TransitionModel::Table(transitions),
            initial: InitialState::Cells(initial),
            cells: Some(cells),
            target_meta: None,
        };
        spec.validate()?;
        debug_assert!(s > 0);
        Ok(spec)
    }

    pub fn state_count(&self) -> Option<usize> {
        self.cells.as_ref().map(StateCells::len)
    }

    pub fn feature_dim(&self) -> usize {
        self.state_dim + self.action_count
    }

    pub fn is_tabular(&self) -> bool {
        matches!(
            (&self.reward, &self.transition, &self.cells),
            (RewardModel::Table(_), TransitionModel::Table(_), Some(_))
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.action_count < 2 {
            return Err(Error::config("action count must be at least 2"));
        }
        if self.state_dim < 1 {
            return Err(Error::config("state dimension must be at least 1"));
        }
        let (h, a) = (self.horizon, self.action_count);
        let s = self.state_count();
        if let Some(cells) = &self.cells {
            if cells.dim() != self.state_dim {
                return Err(Error::Dimension {
                    expected: self.state_dim,
                    found: cells.dim(),
                });
            }
        }
        match &self.reward {
            RewardModel::Constant(c) if !(0.0..=1.0).contains(c) => {
                return Err(Error::config("constant reward outside [0,1]"))
            }
            RewardModel::Table(t) => {
                let s = s.ok_or_else(|| Error::config("reward table needs state cells"))?;
                if t.len() != h * s * a {
                    return Err(Error::Dimension {
                        expected: h * s * a,
                        found: t.len(),
                    });
                }
                if t.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return Err(Error::config("reward table entries must lie in [0,1]"));
                }
            }
            RewardModel::Bumps(f) if f.len() != h * a => {
                return Err(Error::Dimension {
                    expected: h * a,
                    found: f.len(),
                })
            }
            RewardModel::Networks(n) if n.len() != h => {
                return Err(Error::Dimension {
                    expected: h,
                    found: n.len(),
                })
            }
            _ => {}
        }
        match &self.transition {
            TransitionModel::Table(p) => {
                let s = s.ok_or_else(|| Error::config("transition table needs state cells"))?;
                if p.len() != h * s * a * s {
                    return Err(Error::Dimension {
                        expected: h * s * a * s,
                        found: p.len(),
                    });
                }
                for row in p.chunks(s) {
                    if row.iter().any(|&x| !(x >= 0.0)) {
                        return Err(Error::config("negative transition probability"));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::config("transition rows must sum to 1"));
                    }
                }
            }
            TransitionModel::Drift { drift, noise } => {
                if drift.len() != h * a || drift.iter().any(|d| d.len() != self.state_dim) {
                    return Err(Error::config("drift table must be [H*A][d_s]"));
                }
                if !(*noise >= 0.0) {
                    return Err(Error::config("drift noise must be non-negative"));
                }
            }
            TransitionModel::Uniform => {}
        }
        match &self.initial {
            InitialState::Fixed(x) => {
                if x.len() != self.state_dim || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::config("fixed initial state must lie in the box"));
                }
            }
            InitialState::Cells(p) => {
                let s = s.ok_or_else(|| Error::config("cell initial law needs state cells"))?;
                if p.len() != s || p.iter().any(|&x| !(x >= 0.0)) {
                    return Err(Error::config("initial distribution has wrong shape"));
                }
                if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::config("initial distribution must sum to 1"));
                }
            }
            InitialState::UniformBox => {}
        }
        Ok(())
    }

    fn check_step_args(&self, h: usize, state: &[f64], action: usize) -> Result<()> {
        if h < 1 || h > self.horizon {
            return Err(Error::Domain(alloc::format!(
                "step {h} outside 1..={}",
                self.horizon
            )));
        }
        if action >= self.action_count {
            return Err(Error::Domain(alloc::format!(
                "action {action} out of range 0..{}",
                self.action_count
            )));
        }
        if state.len() != self.state_dim {
            return Err(Error::Dimension {
                expected: self.state_dim,
                found: state.len(),
            });
        }
        Ok(())
    }

    /// Deterministic reward `r_h(s, a)`.
    pub fn reward(&self, h: usize, state: &[f64], action: usize) -> Result<f64> {
        self.check_step_args(h, state, action)?;
        let a_count = self.action_count;
        let r = match &self.reward {
            RewardModel::Constant(c) => *c,
            RewardModel::Table(t) => {
                let cells = self.cells.as_ref().expect("validated");
                let s = cells.locate(state);
                t[((h - 1) * cells.len() + s) * a_count + action]
            }
            RewardModel::Bumps(fields) => {
                let field = &fields[(h - 1) * a_count + action];
                0.5 + 0.5 * field.eval(state) / field.sup_bound()
            }
            RewardModel::Networks(nets) => {
                let x = featurize(state, action, a_count)?;
                nets[h - 1].raw(&x).clamp(0.0, 1.0)
            }
        };
        debug_assert!((0.0..=1.0).contains(&r), "reward {r} outside [0,1]");
        Ok(r)
    }

    /// Draws `s_{h+1}`.
    pub fn sample_next<R: Rng + ?Sized>(
        &self,
        h: usize,
        state: &[f64],
        action: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_step_args(h, state, action)?;
        let next = match &self.transition {
            TransitionModel::Table(p) => {
                let cells = self.cells.as_ref().expect("validated");
                let s_count = cells.len();
                let s = cells.locate(state);
                let start = (((h - 1) * s_count + s) * self.action_count + action) * s_count;
                cells.center(sample_categorical(&p[start..start + s_count], rng))
            }
            TransitionModel::Drift { drift, noise } => {
                let shift = &drift[(h - 1) * self.action_count + action];
                state
                    .iter()
                    .zip(shift)
                    .map(|(x, dx)| {
                        let u: f64 = rng.random();
                        (x + dx + noise * (2.0 * u - 1.0)).clamp(0.0, 1.0)
                    })
                    .collect()
            }
            TransitionModel::Uniform => (0..self.state_dim).map(|_| rng.random()).collect(),
        };
        debug_assert!(next.iter().all(|x| (0.0..=1.0).contains(x)));
        Ok(next)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.initial {
            InitialState::Fixed(x) => x.clone(),
            InitialState::UniformBox => (0..self.state_dim).map(|_| rng.random()).collect(),
            InitialState::Cells(p) => {
                let cells = self.cells.as_ref().expect("validated");
                cells.center(sample_categorical(p, rng))
            }
        }
    }
}

/// One environment step: the reward of `(h, s, a)` and a sampled successor.
/// At `h = H` the successor is still drawn but carries no value.
pub fn step<R: Rng + ?Sized>(
    mdp: &MdpSpec,
    h: usize,
    state: &[f64],
    action: usize,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    let reward = mdp.reward(h, state, action)?;
    let next = mdp.sample_next(h, state, action, rng)?;
    Ok((reward, next))
}

const DRIFT_SCALE: f64 = 0.25;
const DRIFT_NOISE: f64 = 0.1;

fn random_drift<R: Rng + ?Sized>(horizon: usize, actions: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..horizon * actions)
        .map(|_| {
            (0..dim)
                .map(|_| DRIFT_SCALE * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        })
        .collect()
}

/// Random two-layer reward network with output in `[0, s]` and path norm at
/// most `s = min(radius, 1)`: a constant unit carrying `s/2` plus random
/// units scaled to path norm `s/2`.
fn random_reward_net<R: Rng + ?Sized>(dim: usize, features: usize, radius: f64, rng: &mut R) -> TwoLayerNet {
    let m = features + 1;
    let scale = radius.min(1.0);
    let mut net = TwoLayerNet::zeros(m, dim, 1.0, radius);
    for k in 0..features {
        for i in 0..dim {
            net.inner[k * dim + i] = 2.0 * rng.random::<f64>() - 1.0;
        }
        net.bias[k] = 2.0 * rng.random::<f64>() - 1.0;
        net.outer[k] = 2.0 * rng.random::<f64>() - 1.0;
    }
    let random_part = net.path_norm();
    if random_part > 0.0 {
        let factor = 0.5 * scale / random_part;
        for b in net.outer.iter_mut().take(features) {
            *b *= factor;
        }
    }
    // constant unit: w = 0, c = 1
    net.bias[features] = 1.0;
    net.outer[features] = 0.5 * scale * m as f64;
    net
}

/// Builds a synthetic MDP whose rewards carry the smoothness described by
/// `spec`. Deterministic in `seed`.
pub fn make_synthetic_mdp(
    spec: &TargetSpec,
    horizon: usize,
    action_count: usize,
    state_dim: usize,
    seed: u64,
) -> Result<MdpSpec> {
    spec.validate()?;
    let mut rng = seeded_rng(hash64(&[seed, spec.seed]));
    let mdp = match spec.construction {
        Construction::BumpSuperposition => {
            let fields = (0..horizon * action_count)
                .map(|i| {
                    BumpField::new(
                        state_dim,
                        spec.alpha,
                        spec.levels,
                        1.0,
                        hash64(&[seed, spec.seed, i as u64]),
                    )
                })
                .collect();
            MdpSpec {
                horizon,
                action_count,
                state_dim,
                reward: RewardModel::Bumps(fields),
                transition: TransitionModel::Drift {
                    drift: random_drift(horizon, action_count, state_dim, &mut rng),
                    noise: DRIFT_NOISE,
                },
                initial: InitialState::UniformBox,
                cells: None,
                target_meta: Some(spec.clone()),
            }
        }
        Construction::BarronRandomFeatures => {
            let dim = state_dim + action_count;
            let nets = (0..horizon)
                .map(|_| random_reward_net(dim, spec.features, spec.radius, &mut rng))
                .collect();
            MdpSpec {
                horizon,
                action_count,
                state_dim,
                reward: RewardModel::Networks(nets),
                transition: TransitionModel::Drift {
                    drift: random_drift(horizon, action_count, state_dim, &mut rng),
                    noise: DRIFT_NOISE,
                },
                initial: InitialState::UniformBox,
                cells: None,
                target_meta: Some(spec.clone()),
            }
        }
        Construction::TabularRandom => {
            let s = spec.tabular_states;
            let cells = StateCells::embedded(s, state_dim);
            let rewards: Vec<f64> = (0..horizon * s * action_count).map(|_| rng.random()).collect();
            let mut transitions = Vec::with_capacity(horizon * s * action_count * s);
            for _ in 0..horizon * s * action_count {
                // Dirichlet(1, ..., 1) rows
                let row: Vec<f64> = (0..s)
                    .map(|_| -Float::ln(1.0 - rng.random::<f64>()))
                    .collect();
                let total: f64 = row.iter().sum();
                transitions.extend(row.iter().map(|x| x / total));
            }
            let initial = vec![1.0 / s as f64; s];
            let mut mdp = MdpSpec::tabular(cells, action_count, horizon, rewards, transitions, initial)?;
            mdp.target_meta = Some(spec.clone());
            mdp
        }
    };
    mdp.validate()?;
    Ok(mdp)
}

/// Small hand-built MDPs used by tests, acceptance checks and the CLI.
pub mod benchmarks {
    use super::*;

    /// Two states at `0.25` (index 0) and `0.75` (index 1), two actions,
    /// `H = 2`, start in state 0. At `h = 1` from state 0, action 0 pays 0
    /// and moves to state 1, action 1 pays 0.4 and stays. State 1 is
    /// absorbing with zero reward at `h = 1`. At `h = 2`, `r(s, .) = s`.
    pub fn two_state_chain() -> MdpSpec {
        let cells = StateCells::Points(vec![vec![0.25], vec![0.75]]);
        let (h, s, a) = (2, 2, 2);
        let mut rewards = vec![0.0; h * s * a];
        let mut trans = vec![0.0; h * s * a * s];
        let r = |h: usize, s: usize, a: usize| (h * 2 + s) * 2 + a;
        let p = |h: usize, s: usize, a: usize, s2: usize| ((h * 2 + s) * 2 + a) * 2 + s2;
        rewards[r(0, 0, 1)] = 0.4;
        trans[p(0, 0, 0, 1)] = 1.0;
        trans[p(0, 0, 1, 0)] = 1.0;
        trans[p(0, 1, 0, 1)] = 1.0;
        trans[p(0, 1, 1, 1)] = 1.0;
        for a in 0..2 {
            rewards[r(1, 1, a)] = 1.0;
            trans[p(1, 0, a, 0)] = 1.0;
            trans[p(1, 1, a, 1)] = 1.0;
        }
        MdpSpec::tabular(cells, a, h, rewards, trans, vec![1.0, 0.0]).expect("valid chain")
    }

    /// Two states, two actions, `H = 2`, every transition a fair coin over
    /// both states, uniform start. Rewards are distinct per `(h, s, a)`.
    pub fn stochastic_two_state() -> MdpSpec {
        let cells = StateCells::Points(vec![vec![0.25], vec![0.75]]);
        let rewards = vec![0.1, 0.6, 0.3, 0.2, 0.9, 0.0, 0.5, 0.7];
        let trans = vec![0.5; 16];
        MdpSpec::tabular(cells, 2, 2, rewards, trans, vec![0.5, 0.5]).expect("valid")
    }
}
