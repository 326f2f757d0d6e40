use crisp::approx::Matrix;
use crisp::mdp::{ActionVec, GoalVec, StateVec};
use crisp::rl::{
    standard_normal, Batch, ReplayBuffer, ReplayRecord, RewardSource, SacAgent, SacConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(s: usize, a: f64, r: f64, s2: usize) -> ReplayRecord {
    let onehot = |i: usize| StateVec(if i == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] });
    ReplayRecord {
        state: onehot(s),
        goal: GoalVec(vec![0.0]),
        action: ActionVec(vec![a]),
        reward: r,
        next_state: onehot(s2),
        done: false,
        source: RewardSource::Intrinsic,
    }
}

/// Two states. In state 0 a positive action moves to state 1 at no cost,
/// anything else stays put at cost 1. State 1 always returns to state 0 at cost 1.
fn two_state_step(s: usize, a: f64) -> (f64, usize) {
    match (s, a > 0.0) {
        (0, true) => (0.0, 1),
        (0, false) => (-1.0, 0),
        _ => (-1.0, 0),
    }
}

/// Optimal action values by value iteration on the two-action abstraction.
fn value_iteration(gamma: f64) -> [[f64; 2]; 2] {
    let mut v = [0.0f64; 2];
    for _ in 0..10_000 {
        let q = |s: usize, up: bool| {
            let (r, s2) = two_state_step(s, if up { 1.0 } else { -1.0 });
            r + gamma * v[s2]
        };
        v = [q(0, true).max(q(0, false)), q(1, true).max(q(1, false))];
    }
    let q = |s: usize, up: bool| {
        let (r, s2) = two_state_step(s, if up { 1.0 } else { -1.0 });
        r + gamma * v[s2]
    };
    [[q(0, false), q(0, true)], [q(1, false), q(1, true)]]
}

#[test]
fn two_state_critic_matches_value_iteration() {
    let gamma = 0.5;
    let oracle = value_iteration(gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = SacConfig {
        hidden: vec![32, 32],
        alpha: 1e-4,
        gamma,
        tau: 0.05,
        batch_size: 64,
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        ..SacConfig::default()
    };
    let mut agent = SacAgent::new(2, 1, 1, cfg, &mut rng).unwrap();
    let mut buf = ReplayBuffer::new(10_000, RewardSource::Intrinsic).unwrap();
    for _ in 0..4000 {
        let s = rng.random_range(0..2);
        let a: f64 = rng.random_range(-1.0..1.0);
        let (r, s2) = two_state_step(s, a);
        buf.push(record(s, a, r, s2)).unwrap();
    }
    for _ in 0..5000 {
        let batch = buf.sample(&mut rng, 64).unwrap();
        agent.critic_update(&batch, &mut rng).unwrap();
        agent.actor_update(&batch, &mut rng, None).unwrap();
    }
    let obs = Matrix::from_rows(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]);
    let acts = Matrix::from_rows(&[[-0.9], [0.9], [-0.9], [0.9]]);
    let (q1, q2) = agent.q_values(&obs, &acts).unwrap();
    let want = [oracle[0][0], oracle[0][1], oracle[1][0], oracle[1][1]];
    for i in 0..4 {
        let q = q1[i].min(q2[i]);
        assert!((q - want[i]).abs() < 0.05, "row {i}: {q} vs {}", want[i]);
    }
}

/// Critic whose value is `k · (relu(a) + relu(−a)) + m · a`; hidden layer of two units.
fn set_action_critic(agent: &mut SacAgent, k: f64, m: f64) {
    let od = agent.obs_dim();
    for c in agent.critics.iter_mut() {
        c.values_mut().iter_mut().for_each(|v| *v = 0.0);
        let w0 = c.block_mut("l0.weight").unwrap();
        w0[od] = 1.0;
        w0[(od + 1) + od] = -1.0;
        let w1 = c.block_mut("l1.weight").unwrap();
        w1[0] = k + m;
        w1[1] = k - m;
    }
}

fn bandit_agent(alpha: f64, seed: u64) -> SacAgent {
    let cfg = SacConfig {
        hidden: vec![2],
        alpha,
        actor_lr: 1e-2,
        ..SacConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SacAgent::new(1, 1, 1, cfg, &mut rng).unwrap()
}

fn bandit_batch(n: usize) -> Batch {
    let r = ReplayRecord {
        state: StateVec(vec![1.0]),
        goal: GoalVec(vec![0.0]),
        action: ActionVec(vec![0.0]),
        reward: 0.0,
        next_state: StateVec(vec![1.0]),
        done: true,
        source: RewardSource::Intrinsic,
    };
    Batch::from_records(std::iter::repeat_n(&r, n)).unwrap()
}

fn mean_action(agent: &SacAgent) -> f64 {
    let raw = agent.policy_head(&Matrix::row_vector(&[1.0, 0.0])).unwrap();
    raw.get(0, 0).tanh()
}

fn log_std(agent: &SacAgent) -> f64 {
    let raw = agent.policy_head(&Matrix::row_vector(&[1.0, 0.0])).unwrap();
    raw.get(0, 1)
}

#[test]
fn bandit_actor_moves_toward_better_action() {
    // Q(a) = a: the best action is +1.
    let mut agent = bandit_agent(0.01, 3);
    set_action_critic(&mut agent, 0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let before = mean_action(&agent);
    let batch = bandit_batch(64);
    for _ in 0..300 {
        agent.actor_update(&batch, &mut rng, None).unwrap();
    }
    let after = mean_action(&agent);
    assert!(after > before + 0.3, "{before} -> {after}");
    assert!(after > 0.5);
}

#[test]
fn larger_alpha_keeps_policy_wider() {
    // Symmetric Q(a) = −|a|.
    let run = |alpha: f64| {
        let mut agent = bandit_agent(alpha, 5);
        set_action_critic(&mut agent, -1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = bandit_batch(128);
        for _ in 0..1500 {
            agent.actor_update(&batch, &mut rng, None).unwrap();
        }
        log_std(&agent)
    };
    let narrow = run(0.01);
    let wide = run(1.0);
    assert!(wide > narrow + 0.5, "log std {narrow} vs {wide}");
}

#[test]
fn actor_uses_minimum_of_the_two_critics() {
    let mut agent = bandit_agent(0.1, 8);
    set_action_critic(&mut agent, 0.0, 1.0);
    // Second critic: same slope, constant offset −5 (always lower).
    let b = agent.critics[1].block_mut("l1.bias").unwrap();
    b[0] = -5.0;
    let batch = bandit_batch(16);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = standard_normal(&mut rng, 16, 1);
    let expected = {
        let raw = agent.policy_head(&batch.obs).unwrap();
        let s = crisp::approx::gaussian_policy_sample(&raw, &noise).unwrap();
        let (q1, q2) = agent.q_values(&batch.obs, &s.action).unwrap();
        (0..16)
            .map(|i| (0.1 * s.log_prob[i] - q1[i].min(q2[i])) / 16.0)
            .sum::<f64>()
    };
    let stats = agent.actor_update_with_noise(&batch, &noise, None).unwrap();
    assert_eq!(stats.min_from_first, 0);
    assert!((stats.rl_loss - expected).abs() < 1e-12);
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(100, RewardSource::Extrinsic).unwrap();
    for i in 0..100 {
        let mut r = record(0, 0.0, -1.0, 0);
        r.source = RewardSource::Extrinsic;
        r.state.0[1] = i as f64;
        buf.push(r).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 100_000;
    let mut counts = vec![0usize; 100];
    for i in buf.sample_indices(&mut rng, draws) {
        counts[i] += 1;
    }
    let expected = draws as f64 / 100.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // upper 1% point of the chi-square distribution with 99 degrees of freedom
    assert!(chi2 < 134.642, "chi2 = {chi2}");
}
