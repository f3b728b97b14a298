//! The episode loop: backward least-squares fitting of the Q-stack on
//! replayed mini-batches, epsilon-greedy rollouts, and exact per-episode
//! regret against the oracle.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{
    default_path_budget, fit_least_squares, plan_architecture_barron, plan_architecture_besov_with,
    ArchitecturePlan, DeepReluNet, Family, FitConfig, FitReport, TwoLayerNet,
};
use crate::math::{argmax, hash64};
use crate::mdp::{featurize, step, BesovIndex, MdpSpec, StateCells, Transition};
use crate::oracle::{discretize, policy_value, solve_optimal, TabularMdp, ValueTables};
use crate::regret::{
    azuma_diagnostic, decompose_episode, estimate_myopia, exponent_fit, generalization_gap_estimate,
    greedy_rollout, occupancy_diagnostic, td_field, AzumaReport, CellStep, DecompositionRecord,
    ExponentFit, GapEstimate, OccupancyReport, RegretLedger, VisitHistogram,
};
use crate::replay::{minibatch_size, ReplayMemory};
use crate::{seeded_rng, Error, Result, SimRng};

/// One step's action-value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QFunction {
    Zero,
    Shallow(TwoLayerNet),
    Deep(DeepReluNet),
    /// Values `[S x A]` on a set of cells, looked up by nearest cell.
    Table { cells: StateCells, values: Vec<f64> },
}

/// Per-step fitted functions `Q_1, ..., Q_H`, truncated to `[0, H - h + 1]`,
/// with `V_h(s) = max_a Q_h(s, a)` and `V_{H+1} = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QStack {
    pub horizon: usize,
    pub action_count: usize,
    pub state_dim: usize,
    pub steps: Vec<QFunction>,
}

impl QStack {
    pub fn zero(horizon: usize, action_count: usize, state_dim: usize) -> Self {
        Self {
            horizon,
            action_count,
            state_dim,
            steps: vec![QFunction::Zero; horizon],
        }
    }

    /// Stack whose step-`h` values are the given `[H x S x A]` tables, e.g.
    /// the oracle's `Q*`.
    pub fn from_tables(tab: &TabularMdp, values: &ValueTables) -> Self {
        let (n, a) = (tab.state_count(), tab.action_count);
        let steps = (0..tab.horizon)
            .map(|h| QFunction::Table {
                cells: tab.cells.clone(),
                values: values.q[h * n * a..(h + 1) * n * a].to_vec(),
            })
            .collect();
        Self {
            horizon: tab.horizon,
            action_count: a,
            state_dim: tab.cells.dim(),
            steps,
        }
    }

    /// Truncation level of step `h`.
    pub fn cap(&self, h: usize) -> f64 {
        (self.horizon + 1 - h) as f64
    }

    pub fn q(&self, h: usize, state: &[f64], action: usize) -> Result<f64> {
        let cap = self.cap(h);
        let raw = match &self.steps[h - 1] {
            QFunction::Zero => 0.0,
            QFunction::Shallow(net) => net.eval(&featurize(state, action, self.action_count)?),
            QFunction::Deep(net) => net.eval(&featurize(state, action, self.action_count)?),
            QFunction::Table { cells, values } => values[cells.locate(state) * self.action_count + action],
        };
        Ok(raw.clamp(0.0, cap))
    }

    pub fn q_row(&self, h: usize, state: &[f64]) -> Result<Vec<f64>> {
        (0..self.action_count).map(|a| self.q(h, state, a)).collect()
    }

    /// `V_h(s)`; zero for `h = H + 1`.
    pub fn v(&self, h: usize, state: &[f64]) -> Result<f64> {
        if h > self.horizon {
            return Ok(0.0);
        }
        let row = self.q_row(h, state)?;
        Ok(row.iter().cloned().fold(0.0, f64::max))
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy_action(&self, h: usize, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_row(h, state)?))
    }

    /// The stack evaluated at the oracle's cell centers.
    pub fn on_cells(&self, tab: &TabularMdp) -> Result<ValueTables> {
        let (hz, n, a_count) = (self.horizon, tab.state_count(), self.action_count);
        let centers: Vec<Vec<f64>> = (0..n).map(|s| tab.cells.center(s)).collect();
        let mut q = Vec::with_capacity(hz * n * a_count);
        let mut v = vec![0.0; (hz + 1) * n];
        for h in 1..=hz {
            for (s, c) in centers.iter().enumerate() {
                let row = self.q_row(h, c)?;
                v[(h - 1) * n + s] = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                q.extend(row);
            }
        }
        Ok(ValueTables {
            horizon: hz,
            state_count: n,
            action_count: a_count,
            q,
            v,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EpsilonMode {
    Fixed { value: f64 },
    /// Schedule evaluated at the current episode `t`.
    Scheduled,
    /// Schedule evaluated once at the episode budget `T`.
    ScheduledAtBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    /// Uniform action with probability epsilon at every step.
    PerStep,
    /// Whole episode uniform with probability epsilon.
    PerEpisode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    Learning,
    /// Uniformly random actions throughout, no fitting.
    UniformBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub episodes: usize,
    pub epsilon: EpsilonMode,
    /// Constant of the epsilon schedule.
    pub epsilon_constant: f64,
    pub rho: f64,
    /// Myopia constant `K`.
    pub myopia: usize,
    pub family: Family,
    /// Smoothness used by the deep planner and the schedule (may be infinite).
    pub alpha: f64,
    /// Order constant of the architecture planner.
    pub arch_constant: f64,
    pub width: Option<usize>,
    pub depth: Option<usize>,
    /// Path-norm budget of the shallow family (default `10 H sqrt(d)`).
    pub path_budget: Option<f64>,
    /// Cap on the deep family's entry bound (default `10 H sqrt(d)`).
    pub bound_cap: Option<f64>,
    pub fit: FitConfig,
    /// Stop tolerance is `tolerance_scale * H / sqrt(t~)`.
    pub tolerance_scale: f64,
    pub refit_every: usize,
    pub warm_start: bool,
    pub exploration: Exploration,
    pub memory_capacity: Option<usize>,
    pub mode: AgentMode,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            epsilon: EpsilonMode::Scheduled,
            epsilon_constant: 1.0,
            rho: 0.5,
            myopia: 1,
            family: Family::BarronShallow,
            alpha: 1.0,
            arch_constant: 1.0,
            width: None,
            depth: None,
            path_budget: None,
            bound_cap: None,
            fit: FitConfig::default(),
            tolerance_scale: 1.0,
            refit_every: 1,
            warm_start: false,
            exploration: Exploration::PerStep,
            memory_capacity: None,
            mode: AgentMode::Learning,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.episodes < 1 {
            return Err(Error::config("agent.episodes must be >= 1"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::config("agent.rho must lie in (0, 1)"));
        }
        if self.myopia < 1 || self.myopia > horizon {
            return Err(Error::config("agent.myopia must lie in 1..=H"));
        }
        if let EpsilonMode::Fixed { value } = self.epsilon {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::config("agent.epsilon must lie in [0, 1]"));
            }
        }
        if !(self.epsilon_constant > 0.0) || !(self.arch_constant > 0.0) {
            return Err(Error::config("schedule and architecture constants must be positive"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::config("agent.alpha must be positive"));
        }
        if self.refit_every == 0 {
            return Err(Error::config("agent.refit_every must be >= 1"));
        }
        if !(self.tolerance_scale > 0.0) {
            return Err(Error::config("agent.tolerance_scale must be positive"));
        }
        if self.width == Some(0) || self.depth == Some(0) {
            return Err(Error::config("width and depth overrides must be >= 1"));
        }
        if self.path_budget.is_some_and(|b| !(b > 0.0)) || self.bound_cap.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::config("budgets must be positive"));
        }
        self.fit.validate()
    }
}

/// Regret-optimal exploration rate with constant `c`, clamped
/// to `[1e-4, 1 - 1e-4]`. `alpha = inf` is allowed for the deep family.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_schedule(
    t: usize,
    alpha: f64,
    dim: usize,
    myopia: usize,
    horizon: usize,
    action_count: usize,
    family: Family,
    c: f64,
) -> f64 {
    let k = myopia as f64;
    let t = t.max(1) as f64;
    let raw = match family {
        Family::BesovDeep => {
            let ratio = if alpha.is_infinite() {
                1.0
            } else {
                2.0 * alpha / (2.0 * alpha + dim as f64)
            };
            c * Float::powf(horizon as f64 * k, 2.0 / (k + 2.0))
                * Float::powf(action_count as f64, k / (k + 2.0))
                * Float::powf(t, -ratio / (k + 2.0))
        }
        Family::BarronShallow => {
            c * Float::powf(horizon as f64, 2.0 / (k + 2.0)) * Float::powf(t, -1.0 / (2.0 * (k + 2.0)))
        }
    };
    raw.clamp(1e-4, 1.0 - 1e-4)
}

/// Greedy action with probability `1 - epsilon`, uniform otherwise.
pub fn epsilon_greedy_action<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// Architecture used by the agent for a given MDP.
pub fn agent_plan(mdp: &MdpSpec, cfg: &AgentConfig) -> Result<ArchitecturePlan> {
    let dim = mdp.feature_dim();
    let default_budget = default_path_budget(mdp.horizon, dim);
    let mut plan = match cfg.family {
        Family::BarronShallow => plan_architecture_barron(
            cfg.episodes,
            cfg.arch_constant,
            dim,
            cfg.path_budget.unwrap_or(default_budget),
        )?,
        Family::BesovDeep => plan_architecture_besov_with(
            cfg.episodes.max(2),
            dim,
            if cfg.alpha.is_infinite() { 1e6 } else { cfg.alpha },
            cfg.arch_constant,
            BesovIndex::Infinity,
            cfg.bound_cap.unwrap_or(default_budget),
        )?,
    };
    if let Some(w) = cfg.width {
        plan.width = w;
        if plan.family == Family::BarronShallow {
            plan.sparsity = w * (dim + 2);
            plan.capacity = w;
        }
    }
    if let Some(l) = cfg.depth {
        if plan.family == Family::BesovDeep {
            plan.depth = l;
        }
    }
    Ok(plan)
}

/// Mini-batch bookkeeping of one backward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub t_tilde: usize,
    /// Replay slots shared by every step.
    pub slots: Vec<usize>,
    /// Fit reports for `h = 1..=H`.
    pub reports: Vec<FitReport>,
}

fn fresh_function<R: Rng + ?Sized>(plan: &ArchitecturePlan, dim: usize, cap: f64, rng: &mut R) -> Result<QFunction> {
    Ok(match plan.family {
        Family::BarronShallow => QFunction::Shallow(TwoLayerNet::random(plan.width, dim, cap, plan.sup_bound, rng)),
        Family::BesovDeep => QFunction::Deep(DeepReluNet::new(dim, plan.deep(cap), rng)?),
    })
}

/// Fits `Q_H, ..., Q_1` on a shared mini-batch of `t~ = ceil(rho |D|)`
/// replayed episodes. Errors carry `(episode, step)`.
pub fn backward_fit<R: Rng + ?Sized>(
    memory: &ReplayMemory,
    episode: usize,
    cfg: &AgentConfig,
    plan: &ArchitecturePlan,
    mdp: &MdpSpec,
    previous: Option<&QStack>,
    rng: &mut R,
) -> Result<(QStack, FitTrace)> {
    let (hz, a_count) = (mdp.horizon, mdp.action_count);
    let stored = memory.len();
    if stored == 0 {
        return Err(Error::InsufficientData {
            requested: 1,
            available: 0,
        }
        .at(episode, hz));
    }
    let t_tilde = minibatch_size(stored, cfg.rho);
    let slots = memory.sample_indices(t_tilde, rng).map_err(|e| e.at(episode, hz))?;
    let dim = mdp.feature_dim();
    let mut stack = QStack::zero(hz, a_count, mdp.state_dim);
    let mut reports = vec![None; hz];
    let tolerance = cfg.tolerance_scale * hz as f64 / Float::sqrt(t_tilde as f64);
    for h in (1..=hz).rev() {
        let batch = memory.batch(h, &slots);
        let mut inputs = Vec::with_capacity(t_tilde);
        let mut targets = Vec::with_capacity(t_tilde);
        for tr in &batch {
            inputs.push(featurize(&tr.state, tr.action, a_count).map_err(|e| e.at(episode, h))?);
            let y = tr.reward + stack.v(h + 1, &tr.next_state).map_err(|e| e.at(episode, h))?;
            debug_assert!(y >= 0.0 && y <= stack.cap(h) + 1e-12);
            targets.push(y);
        }
        let seed = hash64(&[cfg.seed, 0xf17, episode as u64, h as u64]);
        let cap = stack.cap(h);
        let mut init_rng = seeded_rng(seed);
        let mut f = match (cfg.warm_start, previous.map(|p| &p.steps[h - 1])) {
            (true, Some(QFunction::Shallow(n))) => QFunction::Shallow(n.clone()),
            (true, Some(QFunction::Deep(n))) => QFunction::Deep(n.clone()),
            _ => fresh_function(plan, dim, cap, &mut init_rng)?,
        };
        let fit_cfg = FitConfig {
            tolerance,
            seed,
            ls_init: cfg.fit.ls_init && !(cfg.warm_start && previous.is_some()),
            ..cfg.fit
        };
        let report = match &mut f {
            QFunction::Shallow(net) => fit_least_squares(net, &inputs, &targets, &fit_cfg),
            QFunction::Deep(net) => fit_least_squares(net, &inputs, &targets, &fit_cfg),
            _ => unreachable!("fresh functions are networks"),
        }
        .map_err(|e| e.at(episode, h))?;
        reports[h - 1] = Some(report);
        stack.steps[h - 1] = f;
    }
    Ok((
        stack,
        FitTrace {
            t_tilde,
            slots,
            reports: reports.into_iter().map(|r| r.expect("fitted")).collect(),
        },
    ))
}

/// Diagnostics knobs of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub enabled: bool,
    /// Episodes between full diagnostics (default `ceil(T / 50)`).
    pub cadence: Option<usize>,
    /// Oracle cells per axis for non-tabular MDPs.
    pub oracle_resolution: Option<usize>,
    /// Monte Carlo samples per `(h, s, a)` when discretizing.
    pub oracle_mc: usize,
    /// Successor samples per mini-batch point for the gap estimate.
    pub gap_mc: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            cadence: None,
            oracle_resolution: None,
            oracle_mc: 10_000,
            gap_mc: 16,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cadence == Some(0) || self.oracle_resolution == Some(0) {
            return Err(Error::config("cadence and oracle resolution must be >= 1"));
        }
        if self.oracle_mc == 0 || self.gap_mc < 2 {
            return Err(Error::config("oracle_mc must be >= 1 and gap_mc >= 2"));
        }
        Ok(())
    }

    pub fn resolution_for(&self, state_dim: usize) -> Result<usize> {
        match (self.oracle_resolution, state_dim) {
            (Some(r), _) => Ok(r),
            (None, 1 | 2) => Ok(16),
            (None, 3) => Ok(8),
            (None, d) => Err(Error::Config(alloc::format!(
                "no default oracle resolution for d_s = {d}; set one explicitly"
            ))),
        }
    }
}

/// Full diagnostics at one cadence episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticPoint {
    pub t: usize,
    pub epsilon: f64,
    /// Mean epsilon over episodes `1..=t`, the rate behind the cumulative
    /// visit frequencies.
    pub mean_epsilon: f64,
    pub t_tilde: usize,
    /// `epsilon * H`, the exploration charge of the episode.
    pub epsilon_charge: f64,
    pub decomposition: Option<DecompositionRecord>,
    /// `||Gamma_h||` under the mini-batch measure, `h = 1..=H`.
    pub td_l2: Vec<f64>,
    pub td_max_abs: Vec<f64>,
    pub occupancy: Option<OccupancyReport>,
    pub gap_h1: Option<GapEstimate>,
    pub fit_risks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub episodes: usize,
    pub final_cum_regret: f64,
    pub exponent: Option<ExponentFit>,
    pub azuma: Option<AzumaReport>,
    /// Empirical myopia exponent from cadence points with distinct epsilon.
    pub myopia_estimate: Option<f64>,
    pub occupancy_violations: usize,
    pub max_identity_residual: f64,
    pub plan: Option<ArchitecturePlan>,
    pub oracle_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub ledger: RegretLedger,
    pub qstack: QStack,
    pub diagnostics: Vec<DiagnosticPoint>,
    pub histogram: VisitHistogram,
    pub summary: RunSummary,
}

/// Oracle used by a run: the exact tables of a tabular MDP, otherwise a
/// seeded discretization.
pub fn build_oracle(mdp: &MdpSpec, diag: &DiagnosticsConfig, seed: u64) -> Result<TabularMdp> {
    diag.validate()?;
    let resolution = if mdp.is_tabular() { 1 } else { diag.resolution_for(mdp.state_dim)? };
    let mut rng = seeded_rng(hash64(&[seed, 0x0_5ac1e]));
    discretize(mdp, resolution, diag.oracle_mc, &mut rng)
}

/// Runs the episode loop for `cfg.episodes` episodes.
pub fn run_experiment(mdp: &MdpSpec, cfg: &AgentConfig, diag: &DiagnosticsConfig) -> Result<ExperimentOutput> {
    let tab = build_oracle(mdp, diag, cfg.seed)?;
    run_with_oracle(mdp, &tab, cfg, diag, None)
}

fn policy_table(
    tab: &TabularMdp,
    learned: Option<&ValueTables>,
    epsilon: f64,
    exploration: Exploration,
) -> Result<Vec<f64>> {
    let (hz, n, a_count) = (tab.horizon, tab.state_count(), tab.action_count);
    let uniform = 1.0 / a_count as f64;
    let mut uniform_policy = vec![uniform; hz * n * a_count];
    let Some(learned) = learned else {
        return Ok(uniform_policy);
    };
    let mut greedy = vec![0.0; hz * n * a_count];
    for (row, out) in learned.q.chunks(a_count).zip(greedy.chunks_mut(a_count)) {
        out[argmax(row)] = 1.0;
    }
    match exploration {
        Exploration::PerStep => {
            for (u, g) in uniform_policy.iter_mut().zip(&greedy) {
                *u = (1.0 - epsilon) * g + epsilon * uniform;
            }
            Ok(uniform_policy)
        }
        // value is mixed afterwards; return the greedy part
        Exploration::PerEpisode => Ok(greedy),
    }
}

fn executed_value(
    tab: &TabularMdp,
    learned: Option<&ValueTables>,
    epsilon: f64,
    exploration: Exploration,
    s1: usize,
) -> Result<f64> {
    let policy = policy_table(tab, learned, epsilon, exploration)?;
    let v = policy_value(tab, &policy)?.v(1, s1);
    if learned.is_some() && exploration == Exploration::PerEpisode {
        let uniform = vec![1.0 / tab.action_count as f64; policy.len()];
        let vu = policy_value(tab, &uniform)?.v(1, s1);
        return Ok((1.0 - epsilon) * v + epsilon * vu);
    }
    Ok(v)
}

/// Episode loop against a prebuilt oracle. With `frozen` set, that stack is
/// used for every episode and no fitting happens.
pub fn run_with_oracle(
    mdp: &MdpSpec,
    tab: &TabularMdp,
    cfg: &AgentConfig,
    diag: &DiagnosticsConfig,
    frozen: Option<QStack>,
) -> Result<ExperimentOutput> {
    mdp.validate()?;
    cfg.validate(mdp.horizon)?;
    diag.validate()?;
    let (hz, a_count) = (mdp.horizon, mdp.action_count);
    let dim = mdp.feature_dim();
    let total = cfg.episodes;
    let cadence = diag.cadence.unwrap_or_else(|| total.div_ceil(50)).max(1);
    let learning = cfg.mode == AgentMode::Learning;
    let plan = if learning && frozen.is_none() {
        Some(agent_plan(mdp, cfg)?)
    } else {
        None
    };
    let optimal = solve_optimal(tab);

    let mut env_rng = seeded_rng(hash64(&[cfg.seed, 1]));
    let mut sample_rng = seeded_rng(hash64(&[cfg.seed, 2]));
    let mut act_rng = seeded_rng(hash64(&[cfg.seed, 3]));
    let mut diag_rng = seeded_rng(hash64(&[cfg.seed, 4]));

    let mut memory = ReplayMemory::new(hz, cfg.memory_capacity);
    let mut ledger = RegretLedger::new();
    let mut histogram = VisitHistogram::new(tab);
    let mut points = Vec::new();
    let mut stack: Option<QStack> = frozen.clone();
    let mut trace: Option<FitTrace> = None;
    let mut cells_cache: Option<ValueTables> = match &stack {
        Some(s) => Some(s.on_cells(tab)?),
        None => None,
    };
    let mut zeta_sums = Vec::new();
    let mut max_residual = 0.0f64;
    let mut epsilon_sum = 0.0;

    for t in 1..=total {
        let s1 = mdp.sample_initial(&mut env_rng);
        let s1_cell = tab.locate(&s1);

        if learning && frozen.is_none() && !memory.is_empty() && (stack.is_none() || (t - 1) % cfg.refit_every == 0) {
            let plan = plan.as_ref().expect("learning plan");
            let (fitted, tr) = backward_fit(&memory, t, cfg, plan, mdp, stack.as_ref(), &mut sample_rng)?;
            cells_cache = Some(fitted.on_cells(tab)?);
            stack = Some(fitted);
            trace = Some(tr);
        }
        let active = if learning { stack.as_ref() } else { None };
        let epsilon = match (active, cfg.epsilon) {
            (None, _) => 1.0,
            (Some(_), EpsilonMode::Fixed { value }) => value,
            (Some(_), EpsilonMode::Scheduled) => {
                epsilon_schedule(t, cfg.alpha, dim, cfg.myopia, hz, a_count, cfg.family, cfg.epsilon_constant)
            }
            (Some(_), EpsilonMode::ScheduledAtBudget) => {
                epsilon_schedule(total, cfg.alpha, dim, cfg.myopia, hz, a_count, cfg.family, cfg.epsilon_constant)
            }
        };

        epsilon_sum += epsilon;

        // rollout
        let explore_episode = cfg.exploration == Exploration::PerEpisode && act_rng.random::<f64>() < epsilon;
        let mut state = s1.clone();
        let mut transitions = Vec::with_capacity(hz);
        let mut cells = Vec::with_capacity(hz);
        for h in 1..=hz {
            let action = match active {
                None => act_rng.random_range(0..a_count),
                Some(q) => {
                    let row = q.q_row(h, &state).map_err(|e| e.at(t, h))?;
                    if cfg.exploration == Exploration::PerEpisode {
                        if explore_episode {
                            act_rng.random_range(0..a_count)
                        } else {
                            argmax(&row)
                        }
                    } else {
                        epsilon_greedy_action(&row, epsilon, &mut act_rng)
                    }
                }
            };
            let (reward, next) = step(mdp, h, &state, action, &mut env_rng).map_err(|e| e.at(t, h))?;
            cells.push(CellStep {
                state: tab.locate(&state),
                action,
                next_state: tab.locate(&next),
            });
            transitions.push(Transition {
                h,
                state: core::mem::replace(&mut state, next.clone()),
                action,
                reward,
                next_state: next,
            });
        }
        memory.store(transitions).map_err(|e| e.at(t, hz))?;
        histogram.record_episode(&cells);

        let v_star = optimal.v(1, s1_cell);
        let learned_cells = if active.is_some() { cells_cache.as_ref() } else { None };
        let v_pi = executed_value(tab, learned_cells, epsilon, cfg.exploration, s1_cell)?;
        let t_tilde = trace.as_ref().filter(|_| active.is_some()).map_or(0, |tr| tr.t_tilde);
        let row = ledger.push(s1, v_star, v_pi, epsilon, t_tilde).map_err(|e| e.at(t, 1))?;

        let due = diag.enabled && (t % cadence == 0 || t == total);
        if !due {
            continue;
        }
        let occupancy = occupancy_diagnostic(&histogram, epsilon, a_count, hz, cfg.myopia).ok();
        row.min_occ = occupancy.map(|o| o.min_frequency);
        let mut point = DiagnosticPoint {
            t,
            epsilon,
            mean_epsilon: epsilon_sum / t as f64,
            t_tilde,
            epsilon_charge: epsilon * hz as f64,
            decomposition: None,
            td_l2: Vec::new(),
            td_max_abs: Vec::new(),
            occupancy,
            gap_h1: None,
            fit_risks: trace.as_ref().map(|tr| tr.reports.iter().map(|r| r.risk).collect()).unwrap_or_default(),
        };
        if let (Some(learned), true) = (learned_cells, active.is_some()) {
            let traj = greedy_rollout(tab, learned, s1_cell, &mut diag_rng);
            let rec = decompose_episode(tab, &optimal, learned, &traj).map_err(|e| e.at(t, 1))?;
            row.term_i = Some(rec.term_i);
            row.term_ii = Some(rec.term_ii);
            max_residual = max_residual.max(rec.residual_optimal.abs()).max(rec.residual_greedy.abs());
            zeta_sums.push(rec.term_ii);
            point.decomposition = Some(rec);
            if let Some(tr) = trace.as_ref().filter(|_| frozen.is_none()) {
                let n_cells = tab.state_count() * a_count;
                let mut batch_h1 = Vec::new();
                for h in 1..=hz {
                    let mut counts = vec![0usize; n_cells];
                    for tr_h in memory.batch(h, &tr.slots) {
                        let s = tab.locate(&tr_h.state);
                        counts[s * a_count + tr_h.action] += 1;
                        if h == 1 {
                            batch_h1.push(CellStep {
                                state: s,
                                action: tr_h.action,
                                next_state: tab.locate(&tr_h.next_state),
                            });
                        }
                    }
                    let field = td_field(tab, learned, h, counts).map_err(|e| e.at(t, h))?;
                    point.td_l2.push(field.l2);
                    point.td_max_abs.push(field.max_abs);
                }
                row.td_l2_max_h = point.td_l2.iter().cloned().reduce(f64::max);
                let gap = generalization_gap_estimate(tab, learned, &batch_h1, 1, diag.gap_mc, &mut diag_rng)
                    .map_err(|e| e.at(t, 1))?;
                row.gap_h1 = Some(gap.exp_risk - gap.emp_risk);
                point.gap_h1 = Some(gap);
            }
        }
        points.push(point);
    }

    ledger.check()?;
    let cumulative = ledger.cumulative();
    let exponent = exponent_fit(&cumulative, total.div_ceil(2)).ok();
    let azuma = azuma_diagnostic(&zeta_sums).ok();
    let occ_pairs: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.occupancy.filter(|o| o.evaluated && o.min_frequency > 0.0).map(|o| (p.mean_epsilon, o.min_frequency)))
        .collect();
    let distinct = {
        let mut eps: Vec<u64> = occ_pairs.iter().map(|(e, _)| e.to_bits()).collect();
        eps.sort_unstable();
        eps.dedup();
        eps.len()
    };
    let myopia_estimate = if distinct >= 3 {
        estimate_myopia(&occ_pairs, a_count).ok().map(|f| f.slope)
    } else {
        None
    };
    let occupancy_violations = points
        .iter()
        .filter(|p| p.occupancy.is_some_and(|o| o.violated))
        .count();
    let summary = RunSummary {
        episodes: total,
        final_cum_regret: ledger.final_cumulative(),
        exponent,
        azuma,
        myopia_estimate,
        occupancy_violations,
        max_identity_residual: max_residual,
        plan,
        oracle_cells: tab.state_count(),
    };
    Ok(ExperimentOutput {
        ledger,
        qstack: stack.unwrap_or_else(|| QStack::zero(hz, a_count, mdp.state_dim)),
        diagnostics: points,
        histogram,
        summary,
    })
}

/// Uniform-random agent on the same seeds.
pub fn baseline_config(cfg: &AgentConfig) -> AgentConfig {
    AgentConfig {
        mode: AgentMode::UniformBaseline,
        ..cfg.clone()
    }
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<QStack>();
    check::<SimRng>();
}
