use nvi_core::approx::{
    plan_architecture_barron, plan_architecture_besov, DeepArchitecture, DeepReluNet, Regressor, TwoLayerNet,
};
use nvi_core::mdp::{make_synthetic_mdp, Construction, TargetSpec, Transition};
use nvi_core::oracle::{bellman_backup, discretize, TabularMdp};
use nvi_core::replay::ReplayMemory;
use nvi_core::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

fn random_tabular(seed: u64, states: usize, horizon: usize) -> TabularMdp {
    let mut spec = TargetSpec::new(Construction::TabularRandom);
    spec.tabular_states = states;
    let mdp = make_synthetic_mdp(&spec, horizon, 2, 1, seed).unwrap();
    discretize(&mdp, 1, 1, &mut seeded_rng(seed)).unwrap()
}

fn shallow(seed: u64, width: usize, dim: usize) -> TwoLayerNet {
    let mut rng = seeded_rng(seed);
    let mut net = TwoLayerNet::random(width, dim, 3.0, 1e9, &mut rng);
    for b in net.outer.iter_mut() {
        *b = 4.0 * rng.random::<f64>() - 2.0;
    }
    net
}

fn deep(seed: u64, depth: usize, width: usize, dim: usize, sparsity: usize) -> DeepReluNet {
    let arch = DeepArchitecture {
        depth,
        width,
        sparsity,
        sup_bound: 2.0,
        h_cap: 3.0,
    };
    DeepReluNet::new(dim, arch, &mut seeded_rng(seed)).unwrap()
}

/// Worst relative gap between `accumulate_grad` and central differences,
/// or `None` when a coordinate sits on a kink.
fn max_relative_grad_error<N: Regressor + Clone>(net: &N, x: &[f64]) -> Option<f64> {
    let p = net.params();
    let mut grad = vec![0.0; p.len()];
    net.accumulate_grad(x, 1.0, &mut grad);
    let step = 1e-6;
    let mut probe = net.clone();
    let mut at = |i: usize, v: f64| {
        let mut q = p.clone();
        q[i] = v;
        probe.set_params(&q);
        probe.raw(x)
    };
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let (f0, fp, fm) = (at(i, p[i]), at(i, p[i] + step), at(i, p[i] - step));
        let (right, left) = ((fp - f0) / step, (f0 - fm) / step);
        if (right - left).abs() > 1e-5 * (1.0 + right.abs()) {
            return None;
        }
        let central = (fp - fm) / (2.0 * step);
        let err = (grad[i] - central).abs() / grad[i].abs().max(central.abs()).max(1.0);
        worst = worst.max(err);
    }
    Some(worst)
}

fn episode(h_max: usize, tag: f64) -> Vec<Transition> {
    (1..=h_max)
        .map(|h| Transition {
            h,
            state: vec![tag],
            action: 0,
            reward: 0.0,
            next_state: vec![tag],
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shallow_gradient_matches_differences(seed in any::<u64>(), width in 1usize..12, dim in 1usize..5) {
        let net = shallow(seed, width, dim);
        let mut rng = seeded_rng(seed ^ 1);
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let err = max_relative_grad_error(&net, &x);
        prop_assume!(err.is_some());
        prop_assert!(err.unwrap() < 1e-4, "error {:?}", err);
    }

    #[test]
    fn deep_gradient_matches_differences(
        seed in any::<u64>(),
        depth in 2usize..5,
        width in 1usize..8,
        dim in 1usize..4,
        dense in any::<bool>(),
    ) {
        let sparsity = if dense { 10_000 } else { 3 * width + dim };
        let net = deep(seed, depth, width, dim, sparsity);
        let mut rng = seeded_rng(seed ^ 2);
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let err = max_relative_grad_error(&net, &x);
        prop_assume!(err.is_some());
        prop_assert!(err.unwrap() < 1e-4, "error {:?}", err);
    }

    #[test]
    fn evaluation_is_truncated_and_projection_idempotent(seed in any::<u64>(), budget in 0.1f64..20.0) {
        let mut net = shallow(seed, 6, 2);
        net.budget = budget;
        let mut rng = seeded_rng(seed);
        for _ in 0..16 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let y = net.eval(&x);
            prop_assert!((0.0..=net.h_cap).contains(&y));
            prop_assert_eq!(y.clamp(0.0, net.h_cap), y);
        }
        net.project();
        let once = net.clone();
        net.project();
        prop_assert_eq!(&once, &net);
        prop_assert!(net.path_norm() <= budget * (1.0 + 1e-11));

        let mut d = deep(seed, 3, 4, 2, 10_000);
        for w in d.weights.iter_mut().flatten() {
            *w *= 5.0;
        }
        d.project();
        let once = d.clone();
        d.project();
        prop_assert_eq!(&once, &d);
        prop_assert!(d.satisfies_constraints(1e-12));
    }

    #[test]
    fn bellman_backup_is_monotone(seed in any::<u64>(), states in 1usize..5, shift in 0.0f64..1.0) {
        let tab = random_tabular(seed, states, 3);
        let mut rng = seeded_rng(seed);
        for h in 1..=3 {
            let room = (3 - h) as f64;
            let low: Vec<f64> = (0..states).map(|_| rng.random::<f64>() * room).collect();
            let high: Vec<f64> = low.iter().map(|v| (v + shift * rng.random::<f64>()).min(room)).collect();
            let q_low = bellman_backup(&tab, &low, h).unwrap();
            let q_high = bellman_backup(&tab, &high, h).unwrap();
            for (a, b) in q_low.iter().zip(&q_high) {
                prop_assert!(a <= &(b + 1e-12));
            }
        }
    }

    #[test]
    fn minibatch_sampling_is_deterministic(seed in any::<u64>(), n in 1usize..40, frac in 0.01f64..1.0) {
        let mut mem = ReplayMemory::new(2, None);
        for i in 0..n {
            mem.store(episode(2, i as f64)).unwrap();
        }
        let k = ((frac * n as f64).ceil() as usize).clamp(1, n);
        let a = mem.sample_indices(k, &mut seeded_rng(seed)).unwrap();
        let b = mem.sample_indices(k, &mut seeded_rng(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
        for h in 1..=2 {
            let batch = mem.batch(h, &a);
            for (slot, tr) in a.iter().zip(&batch) {
                prop_assert_eq!(tr.state[0], *slot as f64);
            }
        }
    }

    #[test]
    fn planners_grow_with_the_budget(t in 3usize..200_000, extra in 1usize..100_000, dim in 1usize..6, alpha in 0.5f64..4.0) {
        let small = plan_architecture_besov(t, dim, alpha, 1.0).unwrap();
        let large = plan_architecture_besov(t + extra, dim, alpha, 1.0).unwrap();
        prop_assert!(small.depth <= large.depth);
        prop_assert!(small.width <= large.width);
        prop_assert!(small.sparsity <= large.sparsity);
        let a = plan_architecture_barron(t, 1.0, dim, 10.0).unwrap();
        let b = plan_architecture_barron(t + extra, 1.0, dim, 10.0).unwrap();
        prop_assert!(a.width <= b.width);
    }
}

#[test]
fn minibatch_slots_are_uniform() {
    // chi-square over slot frequencies, 9 degrees of freedom
    let n = 10;
    let mut mem = ReplayMemory::new(1, None);
    for i in 0..n {
        mem.store(episode(1, i as f64)).unwrap();
    }
    let mut rng = seeded_rng(99);
    let draws = 20_000;
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        for slot in mem.sample_indices(3, &mut rng).unwrap() {
            counts[slot] += 1;
        }
    }
    let expected = 3.0 * draws as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 0.999 quantile of chi-square(9)
    assert!(chi2 < 27.88, "chi2 = {chi2}");
}
