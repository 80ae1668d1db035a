use coopd2d::channel::{compute_gains, NoiseModel, PairGammas};
use coopd2d::coopshare::{brute_force_pair_opt, evaluate_pair, ActionGrid, QosConfig, ResourceDecision};
use coopd2d::dqn::{
    argmax_action, greedy_decision, select_action, td_target, train_agent, train_step, ActionFeatures, AgentState,
    EpsilonSchedule, Experience, PairChannel, QNetwork, ReplayMemory, RewardTransform, TargetMax, TrainConfig,
    INPUT_FEATURES, STATE_FEATURES,
};
use coopd2d::seeds;
use coopd2d::topology::fixed_line_scenario;
use proptest::prelude::*;

fn qos() -> QosConfig {
    QosConfig {
        phi: 20.0,
        phi2: 20.0,
        ..QosConfig::default()
    }
}

fn small_grid() -> ActionGrid {
    let q = qos();
    ActionGrid::from_levels(vec![q.p_min, q.p_max], vec![0.15, 0.35]).unwrap()
}

fn training_grid() -> ActionGrid {
    let q = qos();
    ActionGrid::build(q.p_min, q.p_max, 9.0, 0.05).unwrap()
}

fn line_link(d_cu_dt: f64) -> PairChannel {
    let s = fixed_line_scenario(1000.0, 500.0, 500.0, d_cu_dt, 3.8).unwrap();
    let g = compute_gains(&s, NoiseModel::new(-174.0, 1.0).unwrap());
    PairChannel::from_gains(&g, 0, 0)
}

fn state(grid: &ActionGrid, link: &PairChannel) -> AgentState {
    AgentState::new(link.gains, &grid.decision(grid.midpoint()), &qos())
}

/// `1 - sum |x_j - target_j|` over the action features, built from ReLU
/// pairs, so the unique maximum sits on the target action.
fn peaked_network(target: [f64; 4]) -> QNetwork {
    let mut net = QNetwork::zeros(&[INPUT_FEATURES, 8, 1]).unwrap();
    let layers = net.layers_mut();
    for (j, t) in target.iter().enumerate() {
        for (k, sign) in [(2 * j, 1.0), (2 * j + 1, -1.0)] {
            layers[0].weights[k * INPUT_FEATURES + STATE_FEATURES + j] = sign;
            layers[0].biases[k] = -sign * t;
        }
    }
    layers[1].weights.iter_mut().for_each(|w| *w = -1.0);
    layers[1].biases[0] = 1.0;
    net
}

fn constant_network(c: f64) -> QNetwork {
    let mut net = QNetwork::zeros(&[INPUT_FEATURES, 4, 1]).unwrap();
    net.layers_mut()[1].biases[0] = c;
    net
}

fn random_network(sizes: &[usize], seed: u64) -> QNetwork {
    QNetwork::init(sizes, &mut seeds::rng(seed)).unwrap()
}

/// Plain nested-loop evaluation of a ReLU network.
#[allow(clippy::needless_range_loop)]
fn reference_forward(net: &QNetwork, x: &[f64]) -> f64 {
    let mut a = x.to_vec();
    let last = net.layers().len() - 1;
    for (k, l) in net.layers().iter().enumerate() {
        let mut z = vec![0.0; l.outputs];
        for o in 0..l.outputs {
            let mut acc = l.biases[o];
            for i in 0..l.inputs {
                acc += l.weights[o * l.inputs + i] * a[i];
            }
            z[o] = if k < last { acc.max(0.0) } else { acc };
        }
        a = z;
    }
    a[0]
}

proptest! {
    #[test]
    fn forward_matches_nested_loops(seed: u64, x in prop::collection::vec(-1.0..1.0f64, INPUT_FEATURES)) {
        let net = random_network(&[INPUT_FEATURES, 64, 64, 1], seed);
        let got = net.forward(&x).unwrap();
        let want = reference_forward(&net, &x);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn state_features_are_normalized(
        e in [-16.0..0.0f64, -16.0..0.0f64, -16.0..0.0f64, -16.0..0.0f64],
        pc in 0.0..1.0f64, pr in 0.0..1.0f64, pd in 0.0..1.0f64, theta in 0.001..0.499f64,
    ) {
        let q = qos();
        let p = |t: f64| q.p_min * (q.p_max / q.p_min).powf(t);
        let d = ResourceDecision { p_c: p(pc), p_r: p(pr), p_d: p(pd), theta };
        let s = AgentState::new(e.map(|v| 10f64.powf(v)), &d, &q);
        prop_assert!(s.features.iter().all(|f| (-1.0..=1.0).contains(f)));
    }
}

#[test]
fn pointed_maximum_is_selected() {
    let q = qos();
    let grid = small_grid();
    let feats = ActionFeatures::new(&grid, &q);
    let link = line_link(500.0);
    let s = state(&grid, &link);
    for k in 0..grid.joint_size() {
        let net = peaked_network(feats.of(k));
        assert_eq!(net.forward(&feats.input(&s, k)).unwrap(), 1.0);
        assert_eq!(select_action(&net, &s, &feats, 0.0, &mut seeds::rng(0)), k);
    }
}

#[test]
fn constant_network_picks_the_first_action() {
    let q = qos();
    let grid = training_grid();
    let feats = ActionFeatures::new(&grid, &q);
    let s = state(&grid, &line_link(500.0));
    assert_eq!(
        select_action(&constant_network(0.5), &s, &feats, 0.0, &mut seeds::rng(1)),
        0
    );
}

#[test]
fn full_exploration_is_uniform() {
    let q = qos();
    let grid = small_grid();
    let feats = ActionFeatures::new(&grid, &q);
    let s = state(&grid, &line_link(500.0));
    let net = random_network(&[INPUT_FEATURES, 8, 1], 3);
    let mut rng = seeds::rng(2024);
    let k = grid.joint_size();
    let draws = 100_000;
    let mut counts = vec![0usize; k];
    for _ in 0..draws {
        counts[select_action(&net, &s, &feats, 1.0, &mut rng)] += 1;
    }
    let expect = draws as f64 / k as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // 99th percentile of chi-square with 15 degrees of freedom
    assert_eq!(k, 16);
    assert!(chi2 < 30.578, "chi-square {chi2}");
}

fn experience(s: AgentState, a: usize, r: f64) -> Experience {
    Experience {
        s,
        a_index: a,
        r,
        s_next: s,
    }
}

#[test]
fn td_target_examples() {
    let q = qos();
    let grid = training_grid();
    let feats = ActionFeatures::new(&grid, &q);
    let s = state(&grid, &line_link(500.0));
    let net = random_network(&[INPUT_FEATURES, 16, 1], 5);
    assert_eq!(
        td_target(&net, &experience(s, 3, 3.7), &feats, 0.0, TargetMax::FullGrid),
        3.7
    );

    let t = td_target(
        &constant_network(2.0),
        &experience(s, 3, 1.0),
        &feats,
        0.9,
        TargetMax::FullGrid,
    );
    assert!((t - 2.8).abs() < 1e-12);

    let brute = (0..grid.joint_size())
        .map(|a| net.forward(&feats.input(&s, a)).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let t = td_target(&net, &experience(s, 0, 1.0), &feats, 0.9, TargetMax::FullGrid);
    assert_eq!(t, 1.0 + 0.9 * brute);
    assert_eq!(argmax_action(&net, &s, &feats).1, brute);
}

#[test]
fn targets_ignore_updates_to_the_online_network() {
    let q = qos();
    let grid = training_grid();
    let feats = ActionFeatures::new(&grid, &q);
    let s = state(&grid, &line_link(500.0));
    let target = random_network(&[INPUT_FEATURES, 16, 1], 8);
    let mut net = target.clone();
    let batch: Vec<Experience> = (0..4).map(|a| experience(s, a * 100, 1.0 + a as f64)).collect();
    let refs: Vec<&Experience> = batch.iter().collect();
    let before: Vec<f64> = batch
        .iter()
        .map(|e| td_target(&target, e, &feats, 0.5, TargetMax::FullGrid))
        .collect();
    for _ in 0..5 {
        train_step(&mut net, &target, &refs, &feats, 0.5, 1e-2, TargetMax::FullGrid).unwrap();
    }
    assert_ne!(net, target);
    let after: Vec<f64> = batch
        .iter()
        .map(|e| td_target(&target, e, &feats, 0.5, TargetMax::FullGrid))
        .collect();
    assert_eq!(before, after);
}

#[test]
fn train_step_fixed_point() {
    let q = qos();
    let grid = training_grid();
    let feats = ActionFeatures::new(&grid, &q);
    let s = state(&grid, &line_link(750.0));
    let mut net = random_network(&[INPUT_FEATURES, 16, 1], 9);
    let batch: Vec<Experience> = [0, 77, 4000]
        .iter()
        .map(|&a| experience(s, a, net.forward(&feats.input(&s, a)).unwrap()))
        .collect();
    let refs: Vec<&Experience> = batch.iter().collect();
    let before = net.clone();
    let loss = train_step(&mut net, &before, &refs, &feats, 0.0, 0.1, TargetMax::FullGrid).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(net, before);
}

#[test]
fn train_step_on_a_linear_unit_is_hand_computable() {
    let q = qos();
    let grid = small_grid();
    let feats = ActionFeatures::new(&grid, &q);
    let s = state(&grid, &line_link(500.0));
    let mut net = QNetwork::zeros(&[INPUT_FEATURES, 1]).unwrap();
    let target = net.clone();
    let (a, r, lr) = (5, 2.5, 0.1);
    let e = experience(s, a, r);
    let loss = train_step(&mut net, &target, &[&e], &feats, 0.0, lr, TargetMax::FullGrid).unwrap();
    // loss (w.x + b - r)^2 at w = 0, b = 0; one step moves each weight by 2 lr r x
    assert_eq!(loss, r * r);
    let x = feats.input(&s, a);
    let l = &net.layers()[0];
    for (w, xi) in l.weights.iter().zip(x) {
        assert!((w - 2.0 * lr * r * xi).abs() < 1e-15);
    }
    assert!((l.biases[0] - 2.0 * lr * r).abs() < 1e-15);
}

#[test]
fn non_finite_loss_is_a_training_error() {
    let q = qos();
    let grid = small_grid();
    let feats = ActionFeatures::new(&grid, &q);
    let s = state(&grid, &line_link(500.0));
    let mut net = QNetwork::zeros(&[INPUT_FEATURES, 1]).unwrap();
    let target = net.clone();
    let e = experience(s, 0, f64::INFINITY);
    let err = train_step(&mut net, &target, &[&e], &feats, 0.0, 0.1, TargetMax::FullGrid).unwrap_err();
    assert!(err.to_string().contains("non-finite"));
}

#[test]
fn replay_ring_keeps_the_newest() {
    let grid = small_grid();
    let s = state(&grid, &line_link(500.0));
    let mut mem = ReplayMemory::new(5);
    for i in 0..13 {
        mem.push(experience(s, i, i as f64));
    }
    assert_eq!(mem.len(), 5);
    let kept: Vec<usize> = mem.iter_oldest_first().map(|e| e.a_index).collect();
    assert_eq!(kept, vec![8, 9, 10, 11, 12]);
    let mut rng = seeds::rng(4);
    let mut picked: Vec<usize> = mem.sample(3, &mut rng).iter().map(|e| e.a_index).collect();
    picked.sort_unstable();
    picked.dedup();
    assert_eq!(picked.len(), 3);
    assert!(picked.iter().all(|a| (8..13).contains(a)));
    assert_eq!(mem.sample(50, &mut rng).len(), 5);
}

#[test]
fn epsilon_schedule() {
    let e = EpsilonSchedule::default();
    assert_eq!(e.at(0), 1.0);
    assert!((e.at(250) - 0.6).abs() < 1e-12);
    assert!((e.at(500) - 0.2).abs() < 1e-12);
    assert_eq!(e.at(10_000), 0.2);
    assert!((0..700).all(|t| e.at(t + 1) <= e.at(t)));
}

proptest! {
    #[test]
    fn reward_transforms_keep_the_order_of_rewards_worth_having(
        a in -1e9..1e9f64,
        b in -1e9..1e9f64,
        r_max in 1.0..1e9f64,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        for t in [RewardTransform::Identity, RewardTransform::SignedLog, RewardTransform::Scaled] {
            prop_assert!(t.apply(lo, r_max) <= t.apply(hi, r_max));
        }
        // scaled targets only flatten below -r_max
        if lo > -r_max && lo < hi {
            prop_assert!(RewardTransform::Scaled.apply(lo, r_max) < RewardTransform::Scaled.apply(hi, r_max));
        }
    }
}

#[test]
fn scaled_targets() {
    let t = RewardTransform::Scaled;
    assert_eq!(t.apply(8e7, 8e7), 1.0);
    assert_eq!(t.apply(2e7, 8e7), 0.25);
    assert_eq!(t.apply(0.0, 8e7), 0.0);
    assert_eq!(t.apply(-1e12, 8e7), -1.0);
    // before any positive reward every penalty is -1
    assert_eq!(t.apply(-5.0, 0.0), -1.0);
}

#[test]
fn greedy_decision_gates_on_qos() {
    let q = qos();
    let grid = small_grid();
    let feats = ActionFeatures::new(&grid, &q);
    let link = line_link(500.0);
    let mut feasible = 0;
    for a in 0..grid.joint_size() {
        let net = peaked_network(feats.of(a));
        let ev = evaluate_pair(&link.gammas, &grid.decision(a), &q).unwrap();
        match greedy_decision(&net, &link, &grid, &q) {
            Some((d, u)) => {
                feasible += 1;
                assert!(ev.feasible());
                assert_eq!(d, grid.decision(a));
                assert_eq!(u, ev.u);
            }
            None => assert!(!ev.feasible()),
        }
    }
    assert!(feasible > 0 && feasible < grid.joint_size());
}

#[test]
fn greedy_never_beats_the_oracle() {
    let q = qos();
    let grid = training_grid();
    let link = line_link(750.0);
    let best = brute_force_pair_opt(&link.gammas, &q, &grid).unwrap().u;
    for seed in 0..10 {
        if let Some((_, u)) = greedy_decision(&random_network(&[INPUT_FEATURES, 16, 16, 1], seed), &link, &grid, &q) {
            assert!(u <= best);
        }
    }
}

fn short_config(seed: u64) -> TrainConfig {
    TrainConfig {
        episodes: 30,
        steps_per_episode: 20,
        hidden: vec![16, 16],
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let q = qos();
    let grid = training_grid();
    let link = line_link(500.0);
    let a = train_agent(&link, &q, &grid, &short_config(17)).unwrap();
    let b = train_agent(&link, &q, &grid, &short_config(17)).unwrap();
    assert_eq!(a.net.to_bytes(), b.net.to_bytes());
    assert_eq!(format!("{:?}", a.log), format!("{:?}", b.log));
    let c = train_agent(&link, &q, &grid, &short_config(18)).unwrap();
    assert_ne!(a.net, c.net);
}

#[test]
fn single_feasible_action_is_learned() {
    let q = qos();
    // both relay hops and the D2D link need full power at theta = 0.25
    let noise = NoiseModel::new(-174.0, 1.0).unwrap();
    let gammas = PairGammas {
        mn: 1e9,
        mb: 3e6,
        nb: 3e6,
        nn: 500.0,
    };
    let link = PairChannel {
        gains: [gammas.mn, gammas.mb, gammas.nb, gammas.nn].map(|g| g * noise.noise_power_w()),
        gammas,
    };
    let grid = ActionGrid::from_levels(vec![q.p_min, q.p_max], vec![0.25]).unwrap();
    let feasible: Vec<usize> = (0..grid.joint_size())
        .filter(|&a| evaluate_pair(&link.gammas, &grid.decision(a), &q).unwrap().feasible())
        .collect();
    assert_eq!(feasible, vec![grid.joint_size() - 1]);
    let only = brute_force_pair_opt(&link.gammas, &q, &grid).unwrap();
    let cfg = TrainConfig {
        episodes: 60,
        steps_per_episode: 20,
        hidden: vec![16, 16],
        seed: 5,
        ..TrainConfig::default()
    };
    let agent = train_agent(&link, &q, &grid, &cfg).unwrap();
    let (d, u) = greedy_decision(&agent.net, &link, &grid, &q).expect("greedy action feasible");
    assert_eq!(d, only.decision);
    assert_eq!(u, only.u);
}

#[test]
fn line_geometry_reaches_the_oracle() {
    let q = qos();
    let grid = training_grid();
    let link = line_link(500.0);
    let cfg = TrainConfig {
        greedy_log_every: 500,
        ..TrainConfig::default()
    };
    let agent = train_agent(&link, &q, &grid, &cfg).unwrap();
    assert_eq!(agent.log.len(), 500);
    let best = brute_force_pair_opt(&link.gammas, &q, &grid).unwrap().u;
    let got = agent.log.last().unwrap().greedy_u.unwrap();
    assert!(got >= 0.9 * best, "greedy {got} vs oracle {best}");
}
