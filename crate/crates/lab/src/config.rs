//! Experiment configuration: a strict JSON document with `mdp`, `agent`,
//! `diagnostics`, `probe` and `output` sections.

use std::path::Path;

use nvi_core::agent::{AgentConfig, AgentMode, DiagnosticsConfig, EpsilonMode, Exploration};
use nvi_core::approx::{default_path_budget, Family, FitConfig, ProbeConfig};
use nvi_core::mdp::{benchmarks, make_synthetic_mdp, BesovIndex, Construction, MdpSpec, TargetSpec};
use serde::{Deserialize, Serialize};

use crate::error::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    TabularRandom,
    BumpSuperposition,
    BarronRandomFeatures,
    TwoStateChain,
    StochasticTwoState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MdpSection {
    pub generator: Generator,
    pub state_dim: usize,
    pub horizon: usize,
    pub actions: usize,
    pub alpha: f64,
    pub p: BesovIndex,
    /// `None` means `q = inf`.
    pub q: Option<f64>,
    pub radius: f64,
    pub levels: usize,
    pub tabular_states: usize,
    pub features: usize,
    pub seed: u64,
}

impl Default for MdpSection {
    fn default() -> Self {
        Self {
            generator: Generator::TabularRandom,
            state_dim: 1,
            horizon: 3,
            actions: 2,
            alpha: 1.0,
            p: BesovIndex::Infinity,
            q: None,
            radius: 1.0,
            levels: 6,
            tabular_states: 4,
            features: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonKind {
    Fixed,
    Scheduled,
    ScheduledAtBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub min_epochs: usize,
    pub patience: usize,
    pub projection_every: usize,
    pub ls_init: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            learning_rate: f.learning_rate,
            max_epochs: f.max_epochs,
            min_epochs: f.min_epochs,
            patience: f.patience,
            projection_every: f.projection_every,
            ls_init: f.ls_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub family: Family,
    pub episodes: usize,
    pub epsilon_mode: EpsilonKind,
    /// Required when `epsilon_mode` is `fixed`.
    pub epsilon: Option<f64>,
    pub epsilon_constant: f64,
    pub rho: f64,
    pub myopia: usize,
    /// Smoothness used by the planner and schedule; defaults to `mdp.alpha`.
    pub alpha: Option<f64>,
    pub arch_constant: f64,
    pub width: Option<usize>,
    pub depth: Option<usize>,
    pub path_budget: Option<f64>,
    pub bound_cap: Option<f64>,
    pub fit: FitSection,
    pub tolerance_scale: f64,
    pub refit_every: usize,
    pub warm_start: bool,
    pub exploration: Exploration,
    pub memory_capacity: Option<usize>,
    pub baseline: bool,
    pub seed: u64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::default();
        Self {
            family: a.family,
            episodes: a.episodes,
            epsilon_mode: EpsilonKind::Scheduled,
            epsilon: None,
            epsilon_constant: a.epsilon_constant,
            rho: a.rho,
            myopia: a.myopia,
            alpha: None,
            arch_constant: a.arch_constant,
            width: None,
            depth: None,
            path_budget: None,
            bound_cap: None,
            fit: FitSection::default(),
            tolerance_scale: a.tolerance_scale,
            refit_every: a.refit_every,
            warm_start: a.warm_start,
            exploration: a.exploration,
            memory_capacity: None,
            baseline: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub enabled: bool,
    pub cadence: Option<usize>,
    pub oracle_resolution: Option<usize>,
    pub oracle_mc: usize,
    pub gap_mc: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let d = DiagnosticsConfig::default();
        Self {
            enabled: d.enabled,
            cadence: d.cadence,
            oracle_resolution: d.oracle_resolution,
            oracle_mc: d.oracle_mc,
            gap_mc: d.gap_mc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub enabled: bool,
    pub family: Family,
    pub capacities: Vec<usize>,
    pub sparsity_factor: f64,
    pub grid_resolution: usize,
    pub seeds: usize,
    pub max_epochs: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            enabled: true,
            family: Family::BesovDeep,
            capacities: vec![4, 8, 16],
            sparsity_factor: 4.0,
            grid_resolution: 64,
            seeds: 1,
            max_epochs: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    /// Ledger formats; `csv` is always written.
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            formats: vec![Format::Csv],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mdp: MdpSection,
    pub agent: AgentSection,
    pub diagnostics: DiagnosticsSection,
    pub probe: ProbeSection,
    pub output: OutputSection,
}

fn invalid(field: &str, message: impl Into<String>) -> LabError {
    LabError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field against the preconditions of the module that
    /// consumes it.
    pub fn validate(&self) -> Result<(), LabError> {
        let m = &self.mdp;
        if m.horizon == 0 {
            return Err(invalid("mdp.horizon", "must be >= 1"));
        }
        if m.actions == 0 {
            return Err(invalid("mdp.actions", "must be >= 1"));
        }
        if m.state_dim == 0 {
            return Err(invalid("mdp.state_dim", "must be >= 1"));
        }
        if !(m.alpha > 0.0) || !m.alpha.is_finite() {
            return Err(invalid("mdp.alpha", "must be positive and finite"));
        }
        if m.q.is_some_and(|q| !(q > 0.0)) {
            return Err(invalid("mdp.q", "must be positive"));
        }
        if !(m.radius > 0.0) {
            return Err(invalid("mdp.radius", "must be positive"));
        }
        if m.generator == Generator::TabularRandom && m.tabular_states == 0 {
            return Err(invalid("mdp.tabular_states", "must be >= 1"));
        }
        if m.generator == Generator::BarronRandomFeatures && m.features == 0 {
            return Err(invalid("mdp.features", "must be >= 1"));
        }
        let horizon = self.horizon();
        let a = &self.agent;
        if a.episodes == 0 {
            return Err(invalid("agent.episodes", "must be >= 1"));
        }
        if !(a.rho > 0.0 && a.rho < 1.0) {
            return Err(invalid("agent.rho", format!("must lie in (0, 1), got {}", a.rho)));
        }
        if a.myopia == 0 || a.myopia > horizon {
            return Err(invalid("agent.myopia", format!("must lie in 1..={horizon}")));
        }
        match (a.epsilon_mode, a.epsilon) {
            (EpsilonKind::Fixed, None) => return Err(invalid("agent.epsilon", "required for fixed mode")),
            (EpsilonKind::Fixed, Some(e)) if !(0.0..=1.0).contains(&e) => {
                return Err(invalid("agent.epsilon", "must lie in [0, 1]"))
            }
            (EpsilonKind::Scheduled | EpsilonKind::ScheduledAtBudget, Some(_)) => {
                return Err(invalid("agent.epsilon", "only valid with epsilon_mode = fixed"))
            }
            _ => {}
        }
        let positive = [
            ("agent.epsilon_constant", a.epsilon_constant),
            ("agent.arch_constant", a.arch_constant),
            ("agent.tolerance_scale", a.tolerance_scale),
            ("agent.fit.learning_rate", a.fit.learning_rate),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(field, "must be positive and finite"));
            }
        }
        if a.alpha.is_some_and(|x| !(x > 0.0)) {
            return Err(invalid("agent.alpha", "must be positive"));
        }
        if a.width == Some(0) {
            return Err(invalid("agent.width", "must be >= 1"));
        }
        if a.depth.is_some_and(|l| l < 2) {
            return Err(invalid("agent.depth", "must be >= 2"));
        }
        if a.path_budget.is_some_and(|b| !(b > 0.0)) {
            return Err(invalid("agent.path_budget", "must be positive"));
        }
        if a.bound_cap.is_some_and(|b| !(b > 0.0)) {
            return Err(invalid("agent.bound_cap", "must be positive"));
        }
        if a.refit_every == 0 {
            return Err(invalid("agent.refit_every", "must be >= 1"));
        }
        if a.memory_capacity == Some(0) {
            return Err(invalid("agent.memory_capacity", "must be >= 1"));
        }
        if a.fit.max_epochs == 0 {
            return Err(invalid("agent.fit.max_epochs", "must be >= 1"));
        }
        if a.fit.patience == 0 {
            return Err(invalid("agent.fit.patience", "must be >= 1"));
        }
        if a.fit.projection_every == 0 {
            return Err(invalid("agent.fit.projection_every", "must be >= 1"));
        }
        if a.family == Family::BesovDeep && a.episodes < 2 {
            return Err(invalid("agent.episodes", "the deep planner needs at least 2 episodes"));
        }
        let d = &self.diagnostics;
        if d.cadence == Some(0) {
            return Err(invalid("diagnostics.cadence", "must be >= 1"));
        }
        if d.oracle_resolution == Some(0) {
            return Err(invalid("diagnostics.oracle_resolution", "must be >= 1"));
        }
        if d.oracle_mc == 0 {
            return Err(invalid("diagnostics.oracle_mc", "must be >= 1"));
        }
        if d.gap_mc < 2 {
            return Err(invalid("diagnostics.gap_mc", "must be >= 2"));
        }
        if !self.is_tabular() {
            self.diagnostics_config()
                .resolution_for(self.state_dim())
                .map_err(|e| invalid("diagnostics.oracle_resolution", e.to_string()))?;
        }
        let p = &self.probe;
        if p.enabled {
            if p.capacities.is_empty() || p.capacities.windows(2).any(|w| w[0] >= w[1]) || p.capacities[0] < 2 {
                return Err(invalid("probe.capacities", "must be strictly increasing and >= 2"));
            }
            if p.grid_resolution < 2 {
                return Err(invalid("probe.grid_resolution", "must be >= 2"));
            }
            if p.seeds == 0 || p.max_epochs == 0 {
                return Err(invalid("probe.seeds", "seeds and max_epochs must be >= 1"));
            }
            if !(p.sparsity_factor > 0.0) {
                return Err(invalid("probe.sparsity_factor", "must be positive"));
            }
        }
        if self.output.directory.is_empty() {
            return Err(invalid("output.directory", "must not be empty"));
        }
        // the owning modules have the final word
        self.build_mdp().map_err(|e| invalid("mdp", e.to_string()))?;
        self.agent_config()
            .validate(horizon)
            .map_err(|e| invalid("agent", e.to_string()))?;
        Ok(())
    }

    fn is_tabular(&self) -> bool {
        !matches!(
            self.mdp.generator,
            Generator::BumpSuperposition | Generator::BarronRandomFeatures
        )
    }

    /// Horizon of the MDP actually built (benchmarks fix their own).
    pub fn horizon(&self) -> usize {
        match self.mdp.generator {
            Generator::TwoStateChain | Generator::StochasticTwoState => 2,
            _ => self.mdp.horizon,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.mdp.generator {
            Generator::TwoStateChain | Generator::StochasticTwoState => 1,
            _ => self.mdp.state_dim,
        }
    }

    pub fn action_count(&self) -> usize {
        match self.mdp.generator {
            Generator::TwoStateChain | Generator::StochasticTwoState => 2,
            _ => self.mdp.actions,
        }
    }

    pub fn target_spec(&self) -> Option<TargetSpec> {
        let construction = match self.mdp.generator {
            Generator::TabularRandom => Construction::TabularRandom,
            Generator::BumpSuperposition => Construction::BumpSuperposition,
            Generator::BarronRandomFeatures => Construction::BarronRandomFeatures,
            _ => return None,
        };
        let m = &self.mdp;
        Some(TargetSpec {
            alpha: m.alpha,
            p: m.p,
            q: m.q.unwrap_or(f64::INFINITY),
            radius: m.radius,
            construction,
            levels: m.levels,
            seed: m.seed,
            tabular_states: m.tabular_states,
            features: m.features,
        })
    }

    pub fn build_mdp(&self) -> nvi_core::Result<MdpSpec> {
        let m = &self.mdp;
        match self.mdp.generator {
            Generator::TwoStateChain => Ok(benchmarks::two_state_chain()),
            Generator::StochasticTwoState => Ok(benchmarks::stochastic_two_state()),
            _ => make_synthetic_mdp(
                &self.target_spec().expect("synthetic generator"),
                m.horizon,
                m.actions,
                m.state_dim,
                m.seed,
            ),
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        let a = &self.agent;
        let epsilon = match a.epsilon_mode {
            EpsilonKind::Fixed => EpsilonMode::Fixed {
                value: a.epsilon.unwrap_or(0.0),
            },
            EpsilonKind::Scheduled => EpsilonMode::Scheduled,
            EpsilonKind::ScheduledAtBudget => EpsilonMode::ScheduledAtBudget,
        };
        AgentConfig {
            episodes: a.episodes,
            epsilon,
            epsilon_constant: a.epsilon_constant,
            rho: a.rho,
            myopia: a.myopia,
            family: a.family,
            alpha: a.alpha.unwrap_or(self.mdp.alpha),
            arch_constant: a.arch_constant,
            width: a.width,
            depth: a.depth,
            path_budget: a.path_budget,
            bound_cap: a.bound_cap,
            fit: FitConfig {
                learning_rate: a.fit.learning_rate,
                max_epochs: a.fit.max_epochs,
                min_epochs: a.fit.min_epochs,
                patience: a.fit.patience,
                projection_every: a.fit.projection_every,
                ls_init: a.fit.ls_init,
                ..FitConfig::default()
            },
            tolerance_scale: a.tolerance_scale,
            refit_every: a.refit_every,
            warm_start: a.warm_start,
            exploration: a.exploration,
            memory_capacity: a.memory_capacity,
            mode: if a.baseline {
                AgentMode::UniformBaseline
            } else {
                AgentMode::Learning
            },
            seed: a.seed,
        }
    }

    pub fn diagnostics_config(&self) -> DiagnosticsConfig {
        let d = &self.diagnostics;
        DiagnosticsConfig {
            enabled: d.enabled,
            cadence: d.cadence,
            oracle_resolution: d.oracle_resolution,
            oracle_mc: d.oracle_mc,
            gap_mc: d.gap_mc,
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        let p = &self.probe;
        let base = ProbeConfig::default();
        ProbeConfig {
            family: p.family,
            alpha: self.mdp.alpha,
            p: self.mdp.p,
            sparsity_factor: p.sparsity_factor,
            bound_cap: default_path_budget(1, self.state_dim()),
            path_budget: default_path_budget(1, self.state_dim()),
            grid_resolution: p.grid_resolution,
            seeds: p.seeds,
            h_cap: 1.0,
            fit: FitConfig {
                max_epochs: p.max_epochs,
                min_epochs: p.max_epochs.min(base.fit.min_epochs),
                seed: self.agent.seed,
                ..base.fit
            },
        }
    }
}
