use super::nn::Gradients;
use super::ppo::{minibatch_loss, StepConsts, LOG_HEADER};
use super::*;
use crate::bits::BitVec;
use crate::env::{Backend, Env, EnvConfig, Observation, Outcome};
use crate::network::SpeciesFilter;
use crate::rules::default_catalog;
use crate::testutil::{form, fructose_net};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::sync::Arc;

fn live_config(letters: &str, start: &[&str], goal: &str) -> EnvConfig {
    let catalog = if letters == "*" {
        default_catalog().clone()
    } else {
        default_catalog().subset(letters)
    };
    EnvConfig::new(
        Backend::Live {
            catalog: Arc::new(catalog),
            filter: SpeciesFilter::default(),
        },
        start.iter().map(|s| form(s)).collect(),
        form(goal),
    )
}

fn loop_config() -> EnvConfig {
    let mut cfg = live_config("a", &["O"], "C=O");
    cfg.pool_species = Some(BTreeSet::new());
    cfg
}

fn tiny_shapes() -> Shapes {
    Shapes {
        n_bits: 16,
        d_in: 8,
        h: 4,
        head_hidden: 6,
    }
}

/// Parameters with every weight drawn uniformly, including the output
/// layers the default init zeroes.
fn randomized(shapes: Shapes, seed: u64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat: Vec<f64> = (0..shapes.flat_len())
        .map(|_| rng.gen_range(-0.5..0.5))
        .collect();
    PolicyParams::from_flat(shapes, &flat).unwrap()
}

fn bits_from(shapes: Shapes, ones: &[usize]) -> BitVec {
    let mut b = BitVec::zeros(shapes.n_bits);
    for &i in ones {
        b.set(i);
    }
    b
}

fn obs_from(shapes: Shapes, ones: &[usize], frac: f64) -> Observation {
    Observation {
        bits: bits_from(shapes, ones),
        step_frac: frac,
    }
}

#[test]
fn distributions_are_valid_uniform_at_init_and_shift_invariant() {
    let shapes = tiny_shapes();
    let state = RecurrentState::zeros(shapes.h);
    let obs = obs_from(shapes, &[1, 5, 9], 0.25);
    let acts: Vec<BitVec> = vec![
        bits_from(shapes, &[0, 2]),
        bits_from(shapes, &[3]),
        bits_from(shapes, &[4, 7, 11]),
        bits_from(shapes, &[15]),
    ];

    // Freshly initialized parameters zero the scoring head: exactly
    // uniform regardless of the inputs.
    let init = PolicyParams::init(shapes, 3);
    let out = policy_step(&init, &state, &obs, &acts).unwrap();
    for &p in &out.probs {
        assert!((p - 0.25).abs() < 1e-15);
    }
    assert_eq!(out.value, 0.0);

    let params = randomized(shapes, 11);
    let out = policy_step(&params, &state, &obs, &acts).unwrap();
    assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(out.probs.iter().all(|&p| p >= 0.0));
    assert!(out.log_probs.iter().all(|&lp| lp <= 0.0));
    let again = policy_step(&params, &state, &obs, &acts).unwrap();
    assert_eq!(out.probs, again.probs);
    assert_eq!(out.value, again.value);

    // A single legal action gets probability exactly one.
    let solo = policy_step(&params, &state, &obs, &acts[..1]).unwrap();
    assert_eq!(solo.probs, vec![1.0]);
    assert_eq!(solo.log_probs, vec![0.0]);

    // The head bias shifts every logit equally; the softmax is invariant.
    let mut shifted = params.clone();
    shifted.b_s2 += 3.7;
    let out2 = policy_step(&shifted, &state, &obs, &acts).unwrap();
    for (a, b) in out.probs.iter().zip(&out2.probs) {
        assert!((a - b).abs() < 1e-12);
    }

    assert!(matches!(
        policy_step(&params, &state, &obs, &[]),
        Err(AgentError::EmptyActionSet)
    ));
}

#[test]
fn the_recurrent_state_changes_the_action_distribution() {
    let shapes = tiny_shapes();
    let params = randomized(shapes, 17);
    let obs = obs_from(shapes, &[2, 8], 0.1);
    let acts = vec![bits_from(shapes, &[1]), bits_from(shapes, &[6, 13])];

    let fresh = RecurrentState::zeros(shapes.h);
    let first = policy_step(&params, &fresh, &obs, &acts).unwrap();
    // Take one step to obtain a different recurrent state, then rescore
    // the same observation and actions.
    let second = policy_step(&params, &first.state, &obs, &acts).unwrap();
    let diff = (first.probs[0] - second.probs[0]).abs();
    assert!(diff > 1e-9, "history had no effect on the policy: {diff}");
}

fn fake_episode(values: &[f64], rewards: &[f64]) -> EpisodeRecord {
    let shapes = tiny_shapes();
    let n = values.len();
    let steps: Vec<StepRecord> = (0..n)
        .map(|t| StepRecord {
            observation: obs_from(shapes, &[t % 16], 0.0),
            afterstates: vec![bits_from(shapes, &[(t + 1) % 16])],
            chosen: 0,
            log_prob: 0.0,
            value: values[t],
            reward: rewards[t],
            done: t == n - 1,
            state_before: RecurrentState::zeros(shapes.h),
        })
        .collect();
    EpisodeRecord {
        steps,
        outcome: Outcome::Timeout,
        ret: rewards.iter().sum(),
        len: n as u32,
    }
}

#[test]
fn gae_matches_its_closed_forms_and_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rewards: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let batch = RolloutBatch {
        episodes: vec![fake_episode(&values, &rewards)],
    };

    // lambda = 0 collapses the series to the one-step TD error.
    let (adv, targets) = compute_gae(&batch, 0.9, 0.0);
    for t in 0..3 {
        let next = if t == 2 { 0.0 } else { values[t + 1] };
        let delta = rewards[t] + 0.9 * next - values[t];
        assert!((adv[0][t] - delta).abs() < 1e-12);
        assert!((targets[0][t] - (delta + values[t])).abs() < 1e-12);
    }

    // gamma = lambda = 1 with a zero baseline gives reward-to-go, which
    // in the sparse scheme is the terminal reward everywhere.
    let zeros = RolloutBatch {
        episodes: vec![fake_episode(&[0.0, 0.0, 0.0], &[0.0, 0.0, -1.0])],
    };
    let (adv, _) = compute_gae(&zeros, 1.0, 1.0);
    assert_eq!(adv[0], vec![-1.0, -1.0, -1.0]);

    // General case against direct summation of the discounted series.
    let (gamma, lambda) = (0.97, 0.8);
    let (adv, _) = compute_gae(&batch, gamma, lambda);
    for t in 0..3 {
        let mut direct = 0.0;
        for l in t..3 {
            let next = if l == 2 { 0.0 } else { values[l + 1] };
            let delta = rewards[l] + gamma * next - values[l];
            direct += (gamma * lambda).powi((l - t) as i32) * delta;
        }
        assert!((adv[0][t] - direct).abs() < 1e-12, "t={t}");
    }
}

/// Synthetic episodes whose old log probabilities are exact, so the
/// surrogate sits at ratio 1 where the objective is smooth.
fn synthetic_batch(
    params: &PolicyParams,
    seed: u64,
    episodes: usize,
) -> (Vec<EpisodeRecord>, Vec<Vec<StepConsts>>) {
    let shapes = params.shapes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = Vec::new();
    let mut consts = Vec::new();
    for _ in 0..episodes {
        let n_steps = rng.gen_range(2..=3);
        let mut state = RecurrentState::zeros(shapes.h);
        let mut steps = Vec::new();
        let mut cs = Vec::new();
        for t in 0..n_steps {
            let obs_ones: Vec<usize> =
                (0..shapes.n_bits).filter(|_| rng.gen_bool(0.3)).collect();
            let obs = obs_from(shapes, &obs_ones, t as f64 / n_steps as f64);
            let n_act = rng.gen_range(2..=4);
            let acts: Vec<BitVec> = (0..n_act)
                .map(|_| {
                    let ones: Vec<usize> =
                        (0..shapes.n_bits).filter(|_| rng.gen_bool(0.3)).collect();
                    bits_from(shapes, &ones)
                })
                .collect();
            let out = policy_step(params, &state, &obs, &acts).unwrap();
            let chosen = rng.gen_range(0..n_act);
            cs.push(StepConsts {
                old_log_prob: out.log_probs[chosen],
                advantage: rng.gen_range(-1.0..1.0),
                target: rng.gen_range(-1.0..1.0),
            });
            steps.push(StepRecord {
                observation: obs,
                afterstates: acts,
                chosen,
                log_prob: out.log_probs[chosen],
                value: out.value,
                reward: 0.0,
                done: t == n_steps - 1,
                state_before: state.clone(),
            });
            state = out.state;
        }
        eps.push(EpisodeRecord {
            steps,
            outcome: Outcome::Timeout,
            ret: 0.0,
            len: n_steps as u32,
        });
        consts.push(cs);
    }
    (eps, consts)
}

#[test]
fn analytic_gradients_match_central_finite_differences() {
    let shapes = tiny_shapes();
    let cfg = PPOConfig::default();
    for seed in 0..5u64 {
        let params = randomized(shapes, 100 + seed);
        let (eps, consts) = synthetic_batch(&params, 200 + seed, 2);
        let ep_refs: Vec<&EpisodeRecord> = eps.iter().collect();
        let cs_refs: Vec<&[StepConsts]> = consts.iter().map(|c| c.as_slice()).collect();

        let (_, grads, _) = minibatch_loss(&params, &ep_refs, &cs_refs, &cfg).unwrap();
        let analytic = grads.to_flat();

        let flat = params.to_flat();
        let eps_fd = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += eps_fd;
            let mut minus = flat.clone();
            minus[i] -= eps_fd;
            let lp = minibatch_loss(
                &PolicyParams::from_flat(shapes, &plus).unwrap(),
                &ep_refs,
                &cs_refs,
                &cfg,
            )
            .unwrap()
            .0;
            let lm = minibatch_loss(
                &PolicyParams::from_flat(shapes, &minus).unwrap(),
                &ep_refs,
                &cs_refs,
                &cfg,
            )
            .unwrap()
            .0;
            let fd = (lp - lm) / (2.0 * eps_fd);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-4);
            worst = worst.max((analytic[i] - fd).abs() / denom);
        }
        assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
    }
}

#[test]
fn rollouts_are_reproducible_and_pay_once() {
    let config = EnvConfig::from_network(fructose_net().clone()).unwrap();
    let shapes = Shapes::for_bits(config.fingerprint.n_bits);
    let params = PolicyParams::init(shapes, 9);

    let a = collect_rollouts(&params, &config, 8, 77).unwrap();
    let b = collect_rollouts(&params, &config, 8, 77).unwrap();
    assert_eq!(a.episodes.len(), 8);
    for (x, y) in a.episodes.iter().zip(&b.episodes) {
        assert_eq!(x.len, y.len);
        assert_eq!(x.outcome, y.outcome);
        assert_eq!(x.ret, y.ret);
        let xs: Vec<_> = x.steps.iter().map(|s| (s.chosen, s.log_prob, s.reward)).collect();
        let ys: Vec<_> = y.steps.iter().map(|s| (s.chosen, s.log_prob, s.reward)).collect();
        assert_eq!(xs, ys);
    }

    for ep in &a.episodes {
        assert_eq!(ep.steps.len(), ep.len as usize);
        let nonzero: Vec<usize> = ep
            .steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.reward != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![ep.steps.len() - 1], "one terminal reward");
        assert!(ep.steps.iter().all(|s| s.log_prob <= 0.0));
        assert!(ep.steps.last().unwrap().done);
        let first = &ep.steps[0].state_before;
        assert!(first.h.iter().all(|&v| v == 0.0));
        assert_eq!(
            (ep.ret - ep.steps.iter().map(|s| s.reward).sum::<f64>()).abs() < 1e-12,
            true
        );
    }
}

#[test]
fn uniform_policy_times_out_on_the_loop_and_pins_the_fructose_baseline() {
    let shapes_loop = Shapes {
        n_bits: 1000,
        d_in: 8,
        h: 4,
        head_hidden: 4,
    };
    let uniform = PolicyParams::init(shapes_loop, 0);
    let batch = collect_rollouts(&uniform, &loop_config(), 5, 3).unwrap();
    for ep in &batch.episodes {
        assert_eq!(ep.outcome, Outcome::Timeout);
        assert_eq!(ep.ret, -1.0);
        assert_eq!(ep.len, 20);
        // A single legal action per state: log probability exactly zero.
        assert!(ep.steps.iter().all(|s| s.log_prob == 0.0));
    }

    // Monte Carlo baseline of the untrained (exactly uniform) policy on
    // the fructose system, frozen with a tolerance. Goals are rare but
    // nonzero: random walks do stumble into HMF.
    let config = EnvConfig::from_network(fructose_net().clone()).unwrap();
    let params = PolicyParams::init(Shapes::for_bits(config.fingerprint.n_bits), 0);
    let batch = collect_rollouts(&params, &config, 1000, 2026).unwrap();
    let mean = batch.episodes.iter().map(|e| e.ret).sum::<f64>() / 1000.0;
    let goals = batch
        .episodes
        .iter()
        .filter(|e| e.outcome == Outcome::Goal)
        .count();
    assert!(
        (mean - UNIFORM_FRUCTOSE_MEAN_RETURN).abs() < 0.05,
        "mean return {mean}, {goals} goal episodes"
    );
}

/// Monte Carlo mean return of the uniform policy on the forward fructose
/// system, 1000 episodes, seed 2026.
const UNIFORM_FRUCTOSE_MEAN_RETURN: f64 = -1.0;

#[test]
fn ratio_one_statistics_and_zero_advantage_gradients() {
    let shapes = tiny_shapes();
    let params = randomized(shapes, 31);
    let (eps, consts) = synthetic_batch(&params, 32, 3);
    let ep_refs: Vec<&EpisodeRecord> = eps.iter().collect();
    let cs_refs: Vec<&[StepConsts]> = consts.iter().map(|c| c.as_slice()).collect();
    let cfg = PPOConfig::default();

    // Old log probabilities came from these same parameters, so every
    // ratio is exactly one: nothing clips and the KL estimate is zero.
    let (_, _, stats) = minibatch_loss(&params, &ep_refs, &cs_refs, &cfg).unwrap();
    assert_eq!(stats.clip_count, 0);
    assert_eq!(stats.kl_sum, 0.0);

    // Zeroed advantages kill the policy term; with the value and entropy
    // coefficients off, the whole gradient vanishes.
    let zeroed: Vec<Vec<StepConsts>> = consts
        .iter()
        .map(|ep| {
            ep.iter()
                .map(|c| StepConsts {
                    advantage: 0.0,
                    ..*c
                })
                .collect()
        })
        .collect();
    let zs: Vec<&[StepConsts]> = zeroed.iter().map(|c| c.as_slice()).collect();
    let mut off = cfg;
    off.value_coef = 0.0;
    off.entropy_coef = 0.0;
    let (loss, grads, _) = minibatch_loss(&params, &ep_refs, &zs, &off).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.to_flat().iter().all(|&g| g == 0.0));
}

#[test]
fn updates_move_parameters_and_abort_on_non_finite_loss() {
    let config = live_config("gh", &["CC=O"], "CC(O)O");
    let shapes = Shapes::for_bits(config.fingerprint.n_bits);
    let mut params = PolicyParams::init(shapes, 1);
    let mut opt = Adam::new(shapes.flat_len());
    let cfg = PPOConfig {
        episodes_per_batch: 8,
        minibatch_episodes: 4,
        ..PPOConfig::default()
    };
    let batch = collect_rollouts(&params, &config, 8, 5).unwrap();

    let before = params.to_flat();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let diag = ppo_update(&mut params, &mut opt, &batch, &cfg, &mut rng).unwrap();
    assert!(params.is_finite());
    assert_ne!(params.to_flat(), before);
    assert!(diag.entropy > 0.0);
    assert!(diag.value_loss > 0.0);
    assert!(diag.grad_norm > 0.0);

    // Poisoned parameters produce a non-finite loss; the update must
    // restore its entry state and report the abort.
    let mut poisoned = params.clone();
    poisoned.w_s2.fill(f64::INFINITY);
    let entry = poisoned.to_flat();
    let err = ppo_update(&mut poisoned, &mut opt.clone(), &batch, &cfg, &mut rng);
    assert!(matches!(err, Err(AgentError::NonFinite(_))));
    assert_eq!(poisoned.to_flat(), entry);
}

#[test]
fn forced_chain_is_solved_immediately_and_logged_deterministically() {
    // One legal action per state: any policy walks start -> mid -> goal.
    let config = live_config("bg", &["OCCO"], "CC=O");
    let cfg = PPOConfig {
        episodes_per_batch: 8,
        minibatch_episodes: 4,
        trajectory_budget: 200,
        ..PPOConfig::default()
    };
    let result = train(&config, &cfg, StopCondition::BestFound(2), 1000).unwrap();
    assert!(result.trajectories <= 8, "stops after the first batch");
    let first = &result.log[0];
    assert_eq!(first.outcome, Outcome::Goal);
    assert_eq!(first.path_len, 2);
    assert_eq!(first.best_len, Some(2));
    assert_eq!(first.ret, 1.5);

    let again = train(&config, &cfg, StopCondition::BestFound(2), 1000).unwrap();
    assert_eq!(result.log, again.log);
    assert_eq!(LOG_HEADER, "trajectory,outcome,return,path_len,best_len");
    assert_eq!(
        result.log[0].to_string(),
        "1,goal,1.5,2,2"
    );

    // Greedy rollout needs no training when there is nothing to choose.
    let params = PolicyParams::init(Shapes::for_bits(1000), 0);
    let report = greedy_rollout(&params, &config).unwrap();
    assert_eq!(report.outcome, Outcome::Goal);
    assert_eq!(report.steps, 2);
    assert_eq!(report.trace.len(), 2);
    assert!(report.trace[0].starts_with("T 1 b1@"));
}

#[test]
fn ppo_learns_to_hydrate_instead_of_wandering() {
    // From acetaldehyde both a keto-enol detour and the direct hydration
    // are legal; the goal is the hydrate, so the optimal episode is one
    // step and pays 2. The learner must shift mass onto hydration.
    let config = live_config("gh", &["CC=O"], "CC(O)O");
    let cfg = PPOConfig {
        episodes_per_batch: 32,
        minibatch_episodes: 8,
        trajectory_budget: 2_000,
        seed: 4,
        ..PPOConfig::default()
    };
    let result = train(&config, &cfg, StopCondition::GreedyOptimal(1), 64).unwrap();
    assert!(
        result.trajectories < 2_000,
        "greedy policy never became optimal"
    );
    let report = greedy_rollout(&result.params, &config).unwrap();
    assert_eq!(report.outcome, Outcome::Goal);
    assert_eq!(report.steps, 1);
    assert_eq!(report.ret, 2.0);

    // The running best is non-increasing once set.
    let mut last = u32::MAX;
    for row in &result.log {
        if let Some(b) = row.best_len {
            assert!(b <= last);
            last = b;
        }
    }
}

#[test]
fn qtable_handles_chains_loops_and_overflow() {
    // Forced chain: the very first episode finds the optimum.
    let chain = live_config("bg", &["OCCO"], "CC=O");
    let result = tabular_baseline(
        &chain,
        &QTableConfig {
            episodes: 100,
            ..QTableConfig::default()
        },
    )
    .unwrap();
    assert_eq!(result.best_len, Some(2));
    assert_eq!(result.log.len(), 100);
    assert!(result.log.iter().all(|r| r.outcome == Outcome::Goal));

    // Two choices, one step apart in quality: the greedy action at the
    // start state must become hydration (index 1; enolization is 0).
    let two = live_config("gh", &["CC=O"], "CC(O)O");
    let result = tabular_baseline(
        &two,
        &QTableConfig {
            episodes: 400,
            seed: 1,
            ..QTableConfig::default()
        },
    )
    .unwrap();
    assert_eq!(result.best_len, Some(1));
    let start: crate::env::StateKey = [(form("CC=O"), 1)].into_iter().collect();
    let row = &result.q[&start];
    assert!(row[1] > row[0], "hydration should dominate: {row:?}");
    assert!((row[1] - 2.0).abs() < 0.2, "optimal Q near its return");

    // Unreachable goal: every backup is zero or negative.
    let looped = tabular_baseline(
        &loop_config(),
        &QTableConfig {
            episodes: 50,
            ..QTableConfig::default()
        },
    )
    .unwrap();
    assert!(looped.best_len.is_none());
    assert!(looped
        .q
        .values()
        .flat_map(|row| row.iter())
        .all(|&v| v <= 0.0));

    // The loop visits two states; a one-state budget overflows.
    let err = tabular_baseline(
        &loop_config(),
        &QTableConfig {
            max_states: 1,
            ..QTableConfig::default()
        },
    );
    assert!(matches!(err, Err(AgentError::StateOverflow { limit: 1 })));
}

#[test]
fn checkpoints_roundtrip_and_reject_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.bin");
    let params = randomized(tiny_shapes(), 8);

    save_params(&params, &path).unwrap();
    let loaded = load_params(&path).unwrap();
    assert_eq!(loaded.shapes, params.shapes);
    assert_eq!(loaded.to_flat(), params.to_flat());

    // Flip one byte in the middle: the checksum must catch it.
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&path, &bytes).unwrap();
    match load_params(&path) {
        Err(AgentError::Checkpoint(msg)) => assert!(msg.contains("checksum"), "{msg}"),
        other => panic!("expected checksum rejection, got {other:?}"),
    }

    // Truncation is caught before anything is parsed.
    std::fs::write(&path, &bytes[..10]).unwrap();
    assert!(matches!(
        load_params(&path),
        Err(AgentError::Checkpoint(_))
    ));
}
