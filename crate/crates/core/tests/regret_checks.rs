use nvi_core::agent::QStack;
use nvi_core::mdp::{benchmarks, make_synthetic_mdp, Construction, MdpSpec, StateCells, TargetSpec};
use nvi_core::oracle::{discretize, solve_optimal, TabularMdp, ValueTables};
use nvi_core::regret::{
    azuma_diagnostic, decompose_episode, generalization_gap_estimate, greedy_rollout, occupancy_diagnostic,
    td_error_table, verify_decomposition_identity, CellStep, VisitHistogram,
};
use nvi_core::seeded_rng;
use rand::Rng;

fn tab_of(mdp: &MdpSpec) -> TabularMdp {
    discretize(mdp, 1, 1, &mut seeded_rng(0)).unwrap()
}

fn tables(tab: &TabularMdp, q: Vec<f64>) -> ValueTables {
    let values = ValueTables {
        horizon: tab.horizon,
        state_count: tab.state_count(),
        action_count: tab.action_count,
        q,
        v: vec![0.0; (tab.horizon + 1) * tab.state_count()],
    };
    QStack::from_tables(tab, &values).on_cells(tab).unwrap()
}

fn random_tables<R: Rng>(tab: &TabularMdp, rng: &mut R) -> ValueTables {
    let (hz, n, a) = (tab.horizon, tab.state_count(), tab.action_count);
    let q = (0..hz * n * a)
        .map(|i| (hz - i / (n * a)) as f64 * rng.random::<f64>())
        .collect();
    tables(tab, q)
}

fn deterministic(seed: u64) -> TabularMdp {
    let (s, a, h) = (3, 2, 3);
    let mut rng = seeded_rng(seed);
    let rewards: Vec<f64> = (0..h * s * a).map(|_| rng.random()).collect();
    let mut trans = vec![0.0; h * s * a * s];
    for p in trans.chunks_mut(s) {
        p[rng.random_range(0..s)] = 1.0;
    }
    tab_of(&MdpSpec::tabular(StateCells::embedded(s, 1), a, h, rewards, trans, vec![1.0 / 3.0; 3]).unwrap())
}

fn unit_reward_mdp() -> TabularMdp {
    let (s, a, h) = (2, 2, 2);
    tab_of(&MdpSpec::tabular(StateCells::embedded(s, 1), a, h, vec![1.0; 8], vec![0.5; 16], vec![0.5; 2]).unwrap())
}

#[test]
fn optimal_stack_has_no_td_error() {
    let mut spec = TargetSpec::new(Construction::TabularRandom);
    spec.tabular_states = 3;
    let tab = tab_of(&make_synthetic_mdp(&spec, 3, 2, 1, 1).unwrap());
    let optimal = solve_optimal(&tab);
    let learned = QStack::from_tables(&tab, &optimal).on_cells(&tab).unwrap();
    for h in 1..=3 {
        assert!(td_error_table(&tab, &learned, h).unwrap().iter().all(|g| g.abs() < 1e-12));
    }
}

#[test]
fn zero_stack_with_unit_rewards() {
    let tab = unit_reward_mdp();
    let zero = tables(&tab, vec![0.0; 8]);
    for h in 1..=2 {
        for g in td_error_table(&tab, &zero, h).unwrap() {
            assert!(g >= 1.0);
        }
    }
    // terminal step: Gamma = r_H - Q_H
    let mut rng = seeded_rng(2);
    let learned = random_tables(&tab, &mut rng);
    let gamma = td_error_table(&tab, &learned, 2).unwrap();
    for s in 0..2 {
        for a in 0..2 {
            assert!((gamma[s * 2 + a] - (1.0 - learned.q(2, s, a))).abs() < 1e-15);
        }
    }
}

#[test]
fn deterministic_transitions_have_no_transition_noise() {
    let mut rng = seeded_rng(3);
    for seed in 0..5 {
        let tab = deterministic(seed);
        let optimal = solve_optimal(&tab);
        let learned = random_tables(&tab, &mut rng);
        for s1 in 0..3 {
            let traj = greedy_rollout(&tab, &learned, s1, &mut rng);
            let rec = decompose_episode(&tab, &optimal, &learned, &traj).unwrap();
            assert!(rec.zeta2.iter().all(|z| z.abs() < 1e-12));
            assert!(rec.term_iii <= 1e-9);
        }
        assert!(verify_decomposition_identity(&tab, &optimal, &learned, 30, &mut rng).unwrap() <= 1e-10);
    }
}

#[test]
fn identity_holds_for_the_zero_stack() {
    let tab = tab_of(&benchmarks::stochastic_two_state());
    let optimal = solve_optimal(&tab);
    let zero = tables(&tab, vec![0.0; 8]);
    assert!(verify_decomposition_identity(&tab, &optimal, &zero, 100, &mut seeded_rng(4)).unwrap() <= 1e-8);
}

#[test]
fn mismatched_trajectory_is_rejected() {
    let tab = tab_of(&benchmarks::stochastic_two_state());
    let optimal = solve_optimal(&tab);
    let learned = tables(&tab, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    let traj = vec![
        CellStep { state: 0, action: 0, next_state: 1 },
        CellStep { state: 1, action: 1, next_state: 0 },
    ];
    assert!(decompose_episode(&tab, &optimal, &learned, &traj).is_err());
    let broken = vec![
        CellStep { state: 0, action: 1, next_state: 1 },
        CellStep { state: 0, action: 1, next_state: 0 },
    ];
    assert!(decompose_episode(&tab, &optimal, &learned, &broken).is_err());
}

#[test]
fn transition_noise_has_mean_zero() {
    let tab = tab_of(&benchmarks::stochastic_two_state());
    let optimal = solve_optimal(&tab);
    let mut rng = seeded_rng(5);
    let learned = random_tables(&tab, &mut rng);
    let mut z2 = Vec::new();
    for _ in 0..10_000 {
        let s1 = rng.random_range(0..2);
        let rec = decompose_episode(&tab, &optimal, &learned, &greedy_rollout(&tab, &learned, s1, &mut rng)).unwrap();
        z2.push(rec.zeta2[0]);
    }
    let (m, se) = (nvi_core::math::mean(&z2), nvi_core::math::standard_error(&z2));
    assert!(m.abs() <= 3.0 * se, "{m} vs {se}");
}

#[test]
fn uniform_exploration_of_a_single_state() {
    let tab = tab_of(&MdpSpec::tabular(StateCells::embedded(1, 1), 2, 1, vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0]).unwrap());
    let mut hist = VisitHistogram::new(&tab);
    let mut rng = seeded_rng(6);
    for _ in 0..10_000 {
        let a = rng.random_range(0..2);
        hist.record_episode(&[CellStep { state: 0, action: a, next_state: 0 }]);
    }
    let report = occupancy_diagnostic(&hist, 1.0, 2, 1, 1).unwrap();
    assert!((report.min_frequency - 0.5).abs() < 0.02);
    assert!(!report.violated);
}

#[test]
fn starved_cells_are_flagged() {
    let tab = tab_of(&benchmarks::two_state_chain());
    let mut hist = VisitHistogram::new(&tab);
    let greedy = [
        CellStep { state: 0, action: 0, next_state: 1 },
        CellStep { state: 1, action: 0, next_state: 1 },
    ];
    for _ in 0..500 {
        hist.record_episode(&greedy);
    }
    let report = occupancy_diagnostic(&hist, 0.4, 2, 2, 2).unwrap();
    assert!(report.violated);
    assert_eq!(report.min_frequency, 0.0);
}

#[test]
fn chain_occupancy_under_epsilon_greedy() {
    // greedy action 0 everywhere, epsilon = 0.4
    let tab = tab_of(&benchmarks::two_state_chain());
    let mut hist = VisitHistogram::new(&tab);
    let mut rng = seeded_rng(7);
    let eps = 0.4;
    let act = |rng: &mut rand_chacha::ChaCha8Rng| if rng.random::<f64>() < eps { rng.random_range(0..2) } else { 0 };
    for _ in 0..10_000 {
        let a1 = act(&mut rng);
        let s2 = if a1 == 0 { 1 } else { 0 };
        let a2 = act(&mut rng);
        hist.record_episode(&[
            CellStep { state: 0, action: a1, next_state: s2 },
            CellStep { state: s2, action: a2, next_state: s2 },
        ]);
    }
    let report = occupancy_diagnostic(&hist, eps, 2, 2, 2).unwrap();
    assert!((report.lower_bound - 0.04).abs() < 1e-12);
    // the rarest cell (h=2, s=0, a=1) has probability exactly (eps/2)^2
    let sigma = (0.04f64 * 0.96 / 10_000.0).sqrt();
    assert!((report.min_frequency - 0.04).abs() <= 3.0 * sigma, "{report:?}");
    assert!(!report.violated);
}

#[test]
fn gap_estimate_special_cases() {
    let mut rng = seeded_rng(8);
    let tab = deterministic(1);
    let learned = random_tables(&tab, &mut rng);
    let batch: Vec<CellStep> = (0..20)
        .map(|i| {
            let (s, a) = (i % 3, i % 2);
            let next = tab.row(1, s, a).iter().position(|&p| p == 1.0).unwrap();
            CellStep { state: s, action: a, next_state: next }
        })
        .collect();
    let gap = generalization_gap_estimate(&tab, &learned, &batch, 1, 8, &mut rng).unwrap();
    assert_eq!(gap.variance_term, 0.0);
    assert!((gap.exp_risk - gap.bias).abs() < 1e-12);

    // Q_1 set to the backup of the learned V_2: no bias
    let stoch = tab_of(&benchmarks::stochastic_two_state());
    let mut learned = random_tables(&stoch, &mut rng);
    let backup = nvi_core::oracle::apply_bellman_to_learned(&stoch, learned.v_layer(2), 1).unwrap();
    learned.q[..4].copy_from_slice(&backup);
    let batch = vec![
        CellStep { state: 0, action: 0, next_state: 1 },
        CellStep { state: 1, action: 1, next_state: 0 },
    ];
    let gap = generalization_gap_estimate(&stoch, &learned, &batch, 1, 4000, &mut rng).unwrap();
    assert!(gap.bias < 1e-24);
    assert!((gap.exp_risk - gap.variance_term).abs() <= 4.0 * gap.split_se + 1e-12);
}

#[test]
fn constant_drift_envelope() {
    let r = azuma_diagnostic(&[1.0; 500]).unwrap();
    assert!((r.slope.unwrap() - 1.0).abs() <= 0.05);
}
