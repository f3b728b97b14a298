use nvi_core::agent::{
    agent_plan, backward_fit, baseline_config, epsilon_greedy_action, run_experiment, run_with_oracle, AgentConfig,
    DiagnosticsConfig, EpsilonMode, QStack,
};
use nvi_core::approx::Family;
use nvi_core::mdp::{
    benchmarks, InitialState, MdpSpec, RewardModel, StateCells, Transition, TransitionModel,
};
use nvi_core::oracle::{discretize, solve_optimal};
use nvi_core::replay::ReplayMemory;
use nvi_core::{seeded_rng, Error};

fn deterministic_mdp() -> MdpSpec {
    let (s, a, h) = (3, 2, 3);
    let cells = StateCells::embedded(s, 1);
    let rewards: Vec<f64> = (0..h * s * a).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
    let mut trans = vec![0.0; h * s * a * s];
    for (row, p) in trans.chunks_mut(s).enumerate() {
        p[(row * 5 + 2) % s] = 1.0;
    }
    MdpSpec::tabular(cells, a, h, rewards, trans, vec![1.0 / 3.0; 3]).unwrap()
}

#[test]
fn oracle_stack_with_no_exploration_has_zero_regret() {
    let mdp = deterministic_mdp();
    let tab = discretize(&mdp, 1, 1, &mut seeded_rng(0)).unwrap();
    let stack = QStack::from_tables(&tab, &solve_optimal(&tab));
    let cfg = AgentConfig {
        episodes: 50,
        epsilon: EpsilonMode::Fixed { value: 0.0 },
        ..AgentConfig::default()
    };
    let out = run_with_oracle(&mdp, &tab, &cfg, &DiagnosticsConfig::default(), Some(stack)).unwrap();
    assert_eq!(out.ledger.len(), 50);
    assert!(out.ledger.rows.iter().all(|r| r.regret.abs() < 1e-12));
    for p in &out.diagnostics {
        let d = p.decomposition.as_ref().unwrap();
        assert!(d.gamma_visited.iter().chain(&d.zeta1).chain(&d.zeta2).all(|x| x.abs() < 1e-12));
        assert!(d.term_iii.abs() < 1e-12);
    }
}

#[test]
fn learner_beats_uniform_on_the_chain() {
    let mdp = benchmarks::two_state_chain();
    let cfg = AgentConfig {
        episodes: 200,
        myopia: 2,
        seed: 5,
        ..AgentConfig::default()
    };
    let diag = DiagnosticsConfig::default();
    let learner = run_experiment(&mdp, &cfg, &diag).unwrap();
    let baseline = run_experiment(&mdp, &baseline_config(&cfg), &diag).unwrap();
    assert!(learner.summary.final_cum_regret < baseline.summary.final_cum_regret);
    assert!(baseline.ledger.rows.iter().all(|r| r.epsilon == 1.0));
}

#[test]
fn runs_are_deterministic_in_the_seed() {
    let mdp = benchmarks::stochastic_two_state();
    let cfg = AgentConfig {
        episodes: 120,
        seed: 9,
        ..AgentConfig::default()
    };
    let a = run_experiment(&mdp, &cfg, &DiagnosticsConfig::default()).unwrap();
    let b = run_experiment(&mdp, &cfg, &DiagnosticsConfig::default()).unwrap();
    assert_eq!(a, b);
    let other = run_experiment(&mdp, &AgentConfig { seed: 10, ..cfg }, &DiagnosticsConfig::default()).unwrap();
    assert_ne!(a.ledger, other.ledger);
}

#[test]
fn deep_family_runs_on_a_continuous_mdp() {
    let mut spec = nvi_core::mdp::TargetSpec::new(nvi_core::mdp::Construction::BumpSuperposition);
    spec.levels = 3;
    let mdp = nvi_core::mdp::make_synthetic_mdp(&spec, 2, 2, 1, 3).unwrap();
    let cfg = AgentConfig {
        episodes: 40,
        family: Family::BesovDeep,
        myopia: 1,
        seed: 2,
        ..AgentConfig::default()
    };
    let out = run_experiment(&mdp, &cfg, &DiagnosticsConfig { oracle_mc: 500, ..DiagnosticsConfig::default() }).unwrap();
    assert_eq!(out.ledger.len(), 40);
    assert_eq!(out.summary.oracle_cells, 16);
    assert!(matches!(out.qstack.steps[0], nvi_core::agent::QFunction::Deep(_)));
}

#[test]
fn uniform_exploration_frequencies() {
    let mut rng = seeded_rng(4);
    let mut counts = [0usize; 4];
    let n = 10_000;
    for _ in 0..n {
        counts[epsilon_greedy_action(&[0.0, 1.0, 2.0, 3.0], 1.0, &mut rng)] += 1;
    }
    let sigma = (n as f64 * 0.25 * 0.75).sqrt();
    for c in counts {
        assert!((c as f64 - 2500.0).abs() < 3.0 * sigma, "{counts:?}");
    }
}

fn single_step_mdp(rewards: Vec<f64>) -> MdpSpec {
    let cells = StateCells::Points(vec![vec![0.2], vec![0.8]]);
    MdpSpec::tabular(cells, 2, 1, rewards, vec![0.5; 8], vec![0.5, 0.5]).unwrap()
}

fn transition(h: usize, s: f64, a: usize, r: f64, next: f64) -> Transition {
    Transition {
        h,
        state: vec![s],
        action: a,
        reward: r,
        next_state: vec![next],
    }
}

#[test]
fn one_step_fit_recovers_rewards() {
    let rewards = vec![0.1, 0.7, 0.9, 0.3];
    let mdp = single_step_mdp(rewards.clone());
    let cfg = AgentConfig {
        episodes: 100,
        rho: 0.99,
        tolerance_scale: 1e-3,
        path_budget: Some(100.0),
        ..AgentConfig::default()
    };
    let plan = agent_plan(&mdp, &cfg).unwrap();
    let mut memory = ReplayMemory::new(1, None);
    for k in 0..40 {
        let (s, a) = (k % 2, (k / 2) % 2);
        let x = [0.2, 0.8][s];
        memory.store(vec![transition(1, x, a, rewards[s * 2 + a], x)]).unwrap();
    }
    let (stack, trace) = backward_fit(&memory, 41, &cfg, &plan, &mdp, None, &mut seeded_rng(1)).unwrap();
    assert_eq!(trace.t_tilde, 40);
    assert!(trace.reports[0].risk < 1e-3, "{:?}", trace.reports[0]);
    for (s, x) in [0.2, 0.8].iter().enumerate() {
        for a in 0..2 {
            assert!((stack.q(1, &[*x], a).unwrap() - rewards[s * 2 + a]).abs() < 0.05);
        }
    }
}

#[test]
fn single_episode_memory_interpolates() {
    let mdp = benchmarks::stochastic_two_state();
    let cfg = AgentConfig {
        rho: 0.9,
        ..AgentConfig::default()
    };
    let plan = agent_plan(&mdp, &cfg).unwrap();
    let mut memory = ReplayMemory::new(2, None);
    memory
        .store(vec![transition(1, 0.25, 1, 0.6, 0.75), transition(2, 0.75, 0, 0.5, 0.25)])
        .unwrap();
    let (_, trace) = backward_fit(&memory, 2, &cfg, &plan, &mdp, None, &mut seeded_rng(3)).unwrap();
    assert_eq!(trace.t_tilde, 1);
    assert!(trace.reports.iter().all(|r| r.risk < 1e-6), "{:?}", trace.reports);
}

#[test]
fn zero_rewards_fit_to_zero() {
    let mdp = MdpSpec {
        horizon: 2,
        action_count: 2,
        state_dim: 1,
        reward: RewardModel::Constant(0.0),
        transition: TransitionModel::Uniform,
        initial: InitialState::UniformBox,
        cells: None,
        target_meta: None,
    };
    let cfg = AgentConfig::default();
    let plan = agent_plan(&mdp, &cfg).unwrap();
    let mut memory = ReplayMemory::new(2, None);
    let mut rng = seeded_rng(8);
    use rand::Rng;
    for _ in 0..30 {
        let (x, y, z): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        memory
            .store(vec![
                transition(1, x, rng.random_range(0..2), 0.0, y),
                transition(2, y, rng.random_range(0..2), 0.0, z),
            ])
            .unwrap();
    }
    let (stack, _) = backward_fit(&memory, 31, &cfg, &plan, &mdp, None, &mut rng).unwrap();
    for i in 0..=20 {
        assert!(stack.v(1, &[i as f64 / 20.0]).unwrap() <= 0.05);
    }
}

#[test]
fn fit_errors_carry_episode_and_step() {
    let mdp = benchmarks::stochastic_two_state();
    let cfg = AgentConfig::default();
    let plan = agent_plan(&mdp, &cfg).unwrap();
    let memory = ReplayMemory::new(2, None);
    let err = backward_fit(&memory, 7, &cfg, &plan, &mdp, None, &mut seeded_rng(0)).unwrap_err();
    assert!(matches!(err, Error::AtStep { episode: 7, .. }), "{err:?}");
}

#[test]
fn invalid_configuration_is_rejected() {
    let mdp = benchmarks::two_state_chain();
    let bad = AgentConfig {
        rho: 1.5,
        ..AgentConfig::default()
    };
    assert!(matches!(
        run_experiment(&mdp, &bad, &DiagnosticsConfig::default()),
        Err(Error::Config(_))
    ));
}
