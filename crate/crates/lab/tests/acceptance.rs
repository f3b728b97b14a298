//! Acceptance suite: one pass/fail line per criterion.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nvi_core::agent::{run_experiment, AgentConfig, DiagnosticsConfig, EpsilonMode, QStack};
use nvi_core::approx::{
    approximation_probe, plan_architecture_besov, rademacher_bound, rademacher_probe, DeepArchitecture, DeepReluNet,
    Family, ProbeConfig, Regressor, TwoLayerNet,
};
use nvi_core::math::{hash64, log_log_fit, mean, standard_error};
use nvi_core::mdp::{benchmarks, make_synthetic_mdp, BumpField, Construction, StateCells, TargetSpec};
use nvi_core::oracle::{discretize, solve_optimal, TabularMdp, ValueTables};
use nvi_core::regret::{
    azuma_diagnostic, decompose_episode, generalization_gap_estimate, greedy_rollout, occupancy_diagnostic,
    verify_decomposition_identity, CellStep,
};
use nvi_core::seeded_rng;
use nvi_lab::config::{EpsilonKind, Generator};
use nvi_lab::runner::run_into;
use nvi_lab::ExperimentConfig;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_tabular(seed: u64, states: usize, horizon: usize, actions: usize) -> TabularMdp {
    let mut spec = TargetSpec::new(Construction::TabularRandom);
    spec.tabular_states = states;
    let mdp = make_synthetic_mdp(&spec, horizon, actions, 1, seed).unwrap();
    discretize(&mdp, 1, 1, &mut seeded_rng(seed)).unwrap()
}

/// Random learned tables with `Q_h` in `[0, H - h + 1]` and `V = max Q`.
fn random_learned<R: Rng>(tab: &TabularMdp, rng: &mut R) -> ValueTables {
    let (hz, n, a) = (tab.horizon, tab.state_count(), tab.action_count);
    let mut q = Vec::with_capacity(hz * n * a);
    for h in 1..=hz {
        let cap = (hz + 1 - h) as f64;
        for _ in 0..n * a {
            q.push(cap * rng.random::<f64>());
        }
    }
    let values = ValueTables {
        horizon: hz,
        state_count: n,
        action_count: a,
        q,
        v: vec![0.0; (hz + 1) * n],
    };
    QStack::from_tables(tab, &values).on_cells(tab).unwrap()
}

/// Values of a deterministic Markov policy by backward recursion.
fn evaluate_policy(tab: &TabularMdp, actions: &[usize]) -> Vec<Vec<f64>> {
    let (hz, n) = (tab.horizon, tab.state_count());
    let mut v = vec![vec![0.0; n]; hz + 1];
    for h in (1..=hz).rev() {
        for s in 0..n {
            let a = actions[(h - 1) * n + s];
            let next: f64 = tab.row(h, s, a).iter().zip(&v[h]).map(|(p, x)| p * x).sum();
            v[h - 1][s] = tab.reward(h, s, a) + next;
        }
    }
    v
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let states = 1 + (i % 4) as usize;
        let horizon = 1 + (i / 4 % 3) as usize;
        let tab = random_tabular(1000 + i, states, horizon, 2);
        let optimal = solve_optimal(&tab);
        let slots = horizon * states;
        let mut best = vec![vec![f64::NEG_INFINITY; states]; horizon];
        for code in 0..(1usize << slots) {
            let actions: Vec<usize> = (0..slots).map(|k| (code >> k) & 1).collect();
            let v = evaluate_policy(&tab, &actions);
            for h in 0..horizon {
                for s in 0..states {
                    best[h][s] = best[h][s].max(v[h][s]);
                }
            }
        }
        for h in 1..=horizon {
            for s in 0..states {
                worst = worst.max((optimal.v(h, s) - best[h - 1][s]).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max |V* - max_pi V^pi| = {worst:.2e} over 100 MDPs"))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut rng = seeded_rng(2);
    for i in 0..20u64 {
        let tab = random_tabular(2000 + i, 2 + (i % 3) as usize, 2 + (i % 2) as usize, 2);
        let optimal = solve_optimal(&tab);
        let learned = random_learned(&tab, &mut rng);
        let r = verify_decomposition_identity(&tab, &optimal, &learned, 200, &mut rng).unwrap();
        worst = worst.max(r);
    }
    outcome(worst <= 1e-8, format!("max residual {worst:.2e} over 20 instances"))
}

fn criterion_3() -> Outcome {
    let tab = random_tabular(3, 3, 3, 2);
    let hz = tab.horizon;
    let optimal = solve_optimal(&tab);
    let mut rng = seeded_rng(3);
    let learned = random_learned(&tab, &mut rng);
    let episodes = 10_000;
    let mut z1 = vec![Vec::with_capacity(episodes); hz];
    let mut z2 = vec![Vec::with_capacity(episodes); hz];
    let mut bound_ok = true;
    for _ in 0..episodes {
        let u: f64 = rng.random();
        let s1 = ((u * tab.state_count() as f64) as usize).min(tab.state_count() - 1);
        let traj = greedy_rollout(&tab, &learned, s1, &mut rng);
        let rec = decompose_episode(&tab, &optimal, &learned, &traj).unwrap();
        for h in 0..hz {
            bound_ok &= rec.zeta1[h].abs() <= 2.0 * hz as f64 && rec.zeta2[h].abs() <= 2.0 * hz as f64;
            z1[h].push(rec.zeta1[h]);
            z2[h].push(rec.zeta2[h]);
        }
    }
    let mut worst_z = 0.0f64;
    let mut means_ok = true;
    for series in z1.iter().chain(&z2) {
        let (m, se) = (mean(series), standard_error(series));
        let ok = m.abs() <= 3.0 * se + 1e-12;
        means_ok &= ok;
        if se > 0.0 {
            worst_z = worst_z.max(m.abs() / se);
        }
    }
    let mut walk_rng = seeded_rng(hash64(&[3, 0x3a1c]));
    let walk: Vec<f64> = (0..10_000).map(|_| 2.0 * walk_rng.random::<f64>() - 1.0).collect();
    let azuma = azuma_diagnostic(&walk).unwrap();
    let slope = azuma.slope.unwrap_or(f64::NAN);
    let slope_ok = (slope - 0.5).abs() <= 0.2;
    outcome(
        means_ok && bound_ok && slope_ok,
        format!(
            "max |mean|/SE {worst_z:.2} over {} step series, |zeta| <= 2H: {bound_ok}, random-walk slope {slope:.3}",
            2 * hz
        ),
    )
}

fn hand_variance_case() -> (TabularMdp, ValueTables, Vec<CellStep>) {
    // H = 3, two states, fair-coin transitions, learned V_2 = (0, 2)
    let cells = StateCells::Points(vec![vec![0.25], vec![0.75]]);
    let (h, s, a) = (3, 2, 2);
    let rewards = vec![0.0; h * s * a];
    let trans = vec![0.5; h * s * a * s];
    let mdp = nvi_core::mdp::MdpSpec::tabular(cells, a, h, rewards, trans, vec![0.5, 0.5]).unwrap();
    let tab = discretize(&mdp, 1, 1, &mut seeded_rng(0)).unwrap();
    let mut q = vec![0.0; h * s * a];
    q[(s * a)..(s * a + 4)].copy_from_slice(&[0.0, 0.0, 2.0, 2.0]);
    q[..4].copy_from_slice(&[1.0, 1.0, 1.0, 1.0]);
    let values = ValueTables {
        horizon: h,
        state_count: s,
        action_count: a,
        q,
        v: vec![0.0; (h + 1) * s],
    };
    let learned = QStack::from_tables(&tab, &values).on_cells(&tab).unwrap();
    let batch = vec![
        CellStep { state: 0, action: 0, next_state: 0 },
        CellStep { state: 1, action: 1, next_state: 1 },
    ];
    (tab, learned, batch)
}

fn criterion_4() -> Outcome {
    let mut rng = seeded_rng(4);
    let mut worst_ratio = 0.0f64;
    let mut pass = true;
    let (tab, learned, batch) = hand_variance_case();
    let gap = generalization_gap_estimate(&tab, &learned, &batch, 1, 4000, &mut rng).unwrap();
    let hand_ok = (gap.variance_exact - 1.0).abs() < 1e-12
        && (gap.variance_term - 1.0).abs() < 1e-12
        && gap.split_residual.abs() <= 4.0 * gap.split_se + 1e-12;
    pass &= hand_ok;
    for i in 0..9u64 {
        let tab = random_tabular(4000 + i, 3, 3, 2);
        let learned = random_learned(&tab, &mut rng);
        let batch: Vec<CellStep> = (0..40)
            .map(|_| {
                let s = rng.random_range(0..tab.state_count());
                let a = rng.random_range(0..2);
                let next = nvi_core::math::argmax(tab.row(1, s, a));
                CellStep { state: s, action: a, next_state: next }
            })
            .collect();
        let gap = generalization_gap_estimate(&tab, &learned, &batch, 1, 200, &mut rng).unwrap();
        let ok = gap.split_residual.abs() <= 4.0 * gap.split_se + 1e-12;
        pass &= ok;
        if gap.split_se > 0.0 {
            worst_ratio = worst_ratio.max(gap.split_residual.abs() / gap.split_se);
        }
    }
    outcome(
        pass,
        format!("hand case variance_term = {:.6} ({hand_ok}), worst |split|/SE {worst_ratio:.2} on 9 random instances", gap.variance_term),
    )
}

fn criterion_5() -> Outcome {
    let mdp = benchmarks::two_state_chain();
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    let mut runs = 0;
    for eps in [0.2, 0.4, 0.8] {
        for seed in 0..10u64 {
            let cfg = AgentConfig {
                episodes: 3000,
                epsilon: EpsilonMode::Fixed { value: eps },
                myopia: 2,
                rho: 0.1,
                refit_every: 10,
                seed: hash64(&[5, seed]),
                ..AgentConfig::default()
            };
            let out = run_experiment(&mdp, &cfg, &DiagnosticsConfig::default()).unwrap();
            let report = occupancy_diagnostic(&out.histogram, eps, 2, 2, 2).unwrap();
            runs += 1;
            if !report.evaluated || report.violated {
                violations += 1;
            }
            min_ratio = min_ratio.min(report.min_frequency / report.lower_bound);
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over {runs} runs, min frequency / (eps/A)^K = {min_ratio:.3}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = seeded_rng(6);
    let mut covered = 0;
    let mut halving_ok = true;
    for _ in 0..200 {
        let n = rng.random_range(16..=1024);
        let d = rng.random_range(1..=10);
        let b = 0.5 + 4.5 * rng.random::<f64>();
        let est = rademacher_probe(n, d, b, 200, &mut rng).unwrap();
        if est.mc_estimate <= est.analytic_bound + 3.0 * est.standard_error {
            covered += 1;
        }
        let ratio = rademacher_bound(4 * n, d, b) / rademacher_bound(n, d, b);
        halving_ok &= (ratio - 0.5).abs() < 1e-12;
    }
    let reference = rademacher_bound(100, 3, 2.0);
    outcome(
        covered >= 190 && halving_ok,
        format!("{covered}/200 draws under the bound, halving exact: {halving_ok}, bound(100, 3, 2) = {reference:.4}"),
    )
}

fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [1.0, 2.0] {
        let field = BumpField::new(1, alpha, 8, 1.0, 7);
        let scale = 0.45 / field.sup_bound();
        let target = |x: &[f64]| 0.5 + scale * field.eval(x);
        let cfg = ProbeConfig {
            family: Family::BesovDeep,
            alpha,
            sparsity_factor: 4.0,
            h_cap: 1.0,
            bound_cap: 10.0,
            ..ProbeConfig::default()
        };
        let points = approximation_probe(target, 1, &[8, 16, 32, 64], &cfg).unwrap();
        let xs: Vec<f64> = points.iter().map(|p| p.capacity as f64).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.smoothed).collect();
        let slope = log_log_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN);
        let monotone = ys.windows(2).all(|w| w[1] <= w[0]);
        let ok = monotone && slope >= -1.5 * alpha && slope <= -0.5 * alpha;
        pass &= ok;
        parts.push(format!("alpha {alpha}: slope {slope:.3} in [{:.1}, {:.1}]", -1.5 * alpha, -0.5 * alpha));
    }
    outcome(pass, parts.join("; "))
}

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
        if ((fp - f0) - (f0 - fm)).abs() > 1e-5 * step * (1.0 + ((fp - f0) / step).abs()) {
            return None;
        }
        let central = (fp - fm) / (2.0 * step);
        worst = worst.max((grad[i] - central).abs() / grad[i].abs().max(central.abs()).max(1.0));
    }
    Some(worst)
}

fn criterion_8() -> Outcome {
    let mut rng = seeded_rng(8);
    let (mut worst_shallow, mut worst_deep) = (0.0f64, 0.0f64);
    let (mut shallow_probes, mut deep_probes) = (0, 0);
    while shallow_probes < 100 {
        let dim = rng.random_range(1..=4);
        let mut net = TwoLayerNet::random(rng.random_range(1..=16), dim, 3.0, 1e9, &mut rng);
        for b in net.outer.iter_mut() {
            *b = 4.0 * rng.random::<f64>() - 2.0;
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        if let Some(e) = max_relative_grad_error(&net, &x) {
            worst_shallow = worst_shallow.max(e);
            shallow_probes += 1;
        }
    }
    while deep_probes < 100 {
        let dim = rng.random_range(1..=3);
        let width = rng.random_range(2..=8);
        let arch = DeepArchitecture {
            depth: rng.random_range(2..=4),
            width,
            sparsity: if rng.random::<bool>() { 10_000 } else { 4 * width },
            sup_bound: 2.0,
            h_cap: 3.0,
        };
        let net = DeepReluNet::new(dim, arch, &mut rng).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        if let Some(e) = max_relative_grad_error(&net, &x) {
            worst_deep = worst_deep.max(e);
            deep_probes += 1;
        }
    }
    outcome(
        worst_shallow < 1e-4 && worst_deep < 1e-4,
        format!("max relative error shallow {worst_shallow:.2e}, deep {worst_deep:.2e} (100 probes each)"),
    )
}

fn regret_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.mdp.generator = Generator::TabularRandom;
    cfg.mdp.state_dim = 1;
    cfg.mdp.horizon = 3;
    cfg.mdp.actions = 2;
    cfg.mdp.tabular_states = 4;
    cfg.mdp.seed = seed;
    cfg.agent.family = Family::BarronShallow;
    cfg.agent.episodes = 2000;
    cfg.agent.epsilon_mode = EpsilonKind::Scheduled;
    cfg.agent.epsilon_constant = 0.5;
    cfg.agent.myopia = 1;
    cfg.agent.rho = 0.5;
    cfg.agent.seed = seed;
    cfg.probe.enabled = false;
    cfg
}

fn criterion_9_and_11(work: &Path) -> (Outcome, Outcome) {
    let results: Vec<(bool, String)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..5u64)
            .map(|seed| {
                scope.spawn(move || {
                    let cfg = regret_config(seed);
                    let run = run_into(&cfg, &work.join(format!("seed_{seed}"))).unwrap();
                    let mut base_cfg = cfg.clone();
                    base_cfg.agent.baseline = true;
                    let mdp = base_cfg.build_mdp().unwrap();
                    let base = run_experiment(&mdp, &base_cfg.agent_config(), &base_cfg.diagnostics_config()).unwrap();
                    let fit = run.output.summary.exponent.unwrap();
                    let ratio = run.output.summary.final_cum_regret / base.summary.final_cum_regret;
                    let ok = fit.slope < 0.95 && fit.upper < 1.0 && ratio < 0.8;
                    (ok, format!("seed {seed}: slope {:.3} (+2SE {:.3}), regret ratio {ratio:.3}", fit.slope, fit.upper))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let passed = results.iter().filter(|r| r.0).count();
    let detail: Vec<&str> = results.iter().map(|r| r.1.as_str()).collect();
    let c9 = outcome(passed >= 4, format!("{passed}/5 seeds pass [{}]", detail.join("; ")));

    let again = run_into(&regret_config(0), &work.join("seed_0_again")).unwrap();
    let a = fs::read(work.join("seed_0").join("ledger.csv")).unwrap();
    let b = fs::read(again.dir.join("ledger.csv")).unwrap();
    let c11 = outcome(a == b && !a.is_empty(), format!("ledger.csv identical: {} ({} bytes)", a == b, a.len()));
    (c9, c11)
}

fn criterion_10() -> Outcome {
    let plan = plan_architecture_besov(10_000, 4, 2.0, 1.0).unwrap();
    let exact = plan.depth == 5 && plan.width == 461;
    let mut in_range = Vec::new();
    let mut depth_ok = true;
    for k in 0..=20 {
        let t = 10f64.powf(4.0 + k as f64 / 20.0).round() as usize;
        let p = plan_architecture_besov(t, 4, 2.0, 1.0).unwrap();
        let ratio = p.width as f64 / 512.0;
        if (0.5..=2.0).contains(&ratio) {
            in_range.push(t);
        }
        depth_ok &= (2.5..=10.0).contains(&(p.depth as f64));
    }
    let m_at = |t: usize| plan_architecture_besov(t, 4, 2.0, 1.0).unwrap().width;
    outcome(
        exact && !in_range.is_empty() && depth_ok,
        format!(
            "(L, m) at T=1e4 = ({}, {}); m/512 = {:.2}, {:.2}, {:.2} at T = 1e4, 1e4.5, 1e5; {} of 21 grid points within [0.5, 2]",
            plan.depth,
            plan.width,
            m_at(10_000) as f64 / 512.0,
            m_at(31_623) as f64 / 512.0,
            m_at(100_000) as f64 / 512.0,
            in_range.len()
        ),
    )
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temp dir");
    let mut all_pass = true;
    let mut report = |id: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= limit;
        all_pass &= pass;
        println!(
            "criterion {id:>2} {name}: {} ({}; {:.2} s, limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    };
    report(1, "oracle exactness", Duration::from_secs(10), &mut criterion_1);
    report(2, "decomposition identity", Duration::from_secs(30), &mut criterion_2);
    report(3, "martingale properties", Duration::from_secs(120), &mut criterion_3);
    report(4, "bias-variance split", Duration::from_secs(60), &mut criterion_4);
    report(5, "occupancy bound", Duration::from_secs(120), &mut criterion_5);
    report(6, "rademacher probe", Duration::from_secs(60), &mut criterion_6);
    report(7, "approximation rate", Duration::from_secs(600), &mut criterion_7);
    report(8, "gradient correctness", Duration::from_secs(60), &mut criterion_8);
    let mut c11 = None;
    report(9, "sublinear regret trend", Duration::from_secs(1800), &mut || {
        let (c9, det) = criterion_9_and_11(work.path());
        c11 = Some(det);
        c9
    });
    report(10, "architecture planner anchors", Duration::from_secs(1), &mut criterion_10);
    report(11, "determinism", Duration::from_secs(1800), &mut || c11.take().expect("criterion 9 ran"));
    if all_pass {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria FAIL");
        ExitCode::FAILURE
    }
}
