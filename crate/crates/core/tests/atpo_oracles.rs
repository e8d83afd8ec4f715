mod common;

use std::sync::Arc;

use atpo_core::atpo::{
    action_losses, atpo_init, atpo_loss, atpo_update, mixed_policy, AtpoOptions, Task, TaskLibrary,
};
use atpo_core::baselines::{
    Agent, AssistantAgent, AssistantTask, AtpoAgent, BopaAgent, BopaTask, PerseusAgent,
    RandomAgent, TransitionRecord, ValueIterationAgent,
};
use atpo_core::decision::{
    greedy_policy, value_iteration, TieBreak, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use atpo_core::environments::{BuiltTask, Cell, NightPursuitTask, OvercookedTask};
use atpo_core::kernel::Kernel;
use atpo_core::pomdp::{AlphaVector, AlphaVectorPolicy, Belief, PerseusConfig, TabularPOMDP};
use atpo_core::sampling::rng_from_seed;
use common::{
    brute_posterior, enumerate_joint, expectimax_q_with, filter_history, random_distribution,
    random_library, sample_history, task, two_action_model_with, TWO_O,
};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn task_posterior_matches_enumeration(
        seed in any::<u64>(),
        k in 2usize..=3,
        na in 1usize..=3,
        nz in 1usize..=3,
        len in 0usize..=4,
    ) {
        let (lib, mut rng) = random_library(seed, k, na, nz);
        let truth = rng.gen_range(0..k);
        let history = sample_history(&mut rng, &lib.tasks()[truth].pomdp, len);
        let prior = random_distribution(&mut rng, k);
        prop_assume!(prior[truth] > 0.0);
        let state = filter_history(&lib, Some(prior.clone()), &history);
        let oracle = brute_posterior(&lib, &prior, &history);
        for (p, o) in state.posterior.probs().iter().zip(&oracle) {
            prop_assert!((p - o).abs() <= 1e-9, "{:?} vs {:?}", state.posterior.probs(), oracle);
        }
        // surviving tasks carry the exact filtering belief
        for (i, t) in lib.tasks().iter().enumerate() {
            if oracle[i] > 0.0 {
                let joint = enumerate_joint(&t.pomdp, &history);
                let s: f64 = joint.iter().sum();
                for (b, j) in state.per_task_beliefs[i].probs().iter().zip(&joint) {
                    prop_assert!((b - j / s).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn mixed_policy_is_a_distribution(seed in any::<u64>(), k in 1usize..=4, na in 1usize..=4, len in 0usize..=4) {
        let (lib, mut rng) = random_library(seed, k, na, 3);
        let truth = rng.gen_range(0..k);
        let history = sample_history(&mut rng, &lib.tasks()[truth].pomdp, len);
        let state = filter_history(&lib, None, &history);
        let mix = mixed_policy(&state, &lib);
        prop_assert!(mix.iter().all(|&p| p >= 0.0));
        prop_assert!((mix.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    /// Appending an independent dummy symbol to every observation multiplies
    /// each task's step likelihood by the same factor, which must cancel.
    #[test]
    fn posterior_ignores_a_common_likelihood_factor(seed in any::<u64>(), len in 1usize..=4) {
        let (lib, mut rng) = random_library(seed, 3, 2, 2);
        let dummy = random_distribution(&mut rng, 3);
        let widened = TaskLibrary::new(
            lib.tasks()
                .iter()
                .map(|t| {
                    let p = &t.pomdp;
                    let o: Vec<Vec<Vec<f64>>> = (0..p.num_actions())
                        .map(|a| {
                            (0..p.num_states())
                                .map(|y| {
                                    let row = p.observation().dense_row(a, y);
                                    row.iter().flat_map(|&q| dummy.iter().map(move |&c| q * c)).collect()
                                })
                                .collect()
                        })
                        .collect();
                    let wide = TabularPOMDP::new(
                        p.base().clone(),
                        Kernel::from_dense(&o).unwrap(),
                        p.initial_belief().clone(),
                    )
                    .unwrap();
                    Task { label: t.label.clone(), pomdp: Arc::new(wide), policy: t.policy.clone() }
                })
                .collect(),
        )
        .unwrap();
        let truth = rng.gen_range(0..3);
        let history = sample_history(&mut rng, &lib.tasks()[truth].pomdp, len);
        let d = (0..len).map(|_| loop {
            let d = rng.gen_range(0..3);
            if dummy[d] > 0.0 {
                break d;
            }
        });
        let wide_history: Vec<_> = history.iter().zip(d).map(|(&(a, z), d)| (a, z * 3 + d)).collect();
        let plain = filter_history(&lib, None, &history);
        let wide = filter_history(&widened, None, &wide_history);
        for (p, w) in plain.posterior.probs().iter().zip(wide.posterior.probs()) {
            prop_assert!((p - w).abs() <= 1e-12);
        }
    }
}

#[test]
fn two_tasks_differing_only_in_observations() {
    // task 1 reads the state through a much sharper sensor
    let sharp = [[[0.95, 0.05], [0.1, 0.9]], [[0.5, 0.5], [0.1, 0.9]]];
    let b0 = || Belief::new(vec![0.5, 0.5]).unwrap();
    let leaf = || {
        vec![AlphaVector {
            values: vec![0.0, 0.0],
            action: 0,
        }]
    };
    let lib = TaskLibrary::new(vec![
        task("blurred", two_action_model_with(TWO_O, b0()), leaf()),
        task("sharp", two_action_model_with(sharp, b0()), leaf()),
    ])
    .unwrap();
    let history = [(0, 0), (0, 0), (0, 1)];

    // forward recursion by hand
    let t = [[0.9, 0.1], [0.2, 0.8]];
    let joint = |o: [[f64; 2]; 2]| {
        let mut w = [0.5, 0.5];
        for &(_, z) in &history {
            let mut next = [0.0; 2];
            for y in 0..2 {
                next[y] = (w[0] * t[0][y] + w[1] * t[1][y]) * o[y][z];
            }
            w = next;
        }
        w[0] + w[1]
    };
    let (l0, l1) = (joint(TWO_O[0]), joint(sharp[0]));
    let state = filter_history(&lib, None, &history);
    assert!((state.posterior.probs()[0] - l0 / (l0 + l1)).abs() < 1e-12);
    assert!((state.posterior.probs()[1] - l1 / (l0 + l1)).abs() < 1e-12);
}

#[test]
fn losses_match_expectimax_oracle() {
    let sharp = [[[0.95, 0.05], [0.1, 0.9]], [[0.6, 0.4], [0.3, 0.7]]];
    let alphas = [
        vec![[3.0, -1.0], [0.5, 1.5], [1.0, 1.0]],
        vec![[0.0, 2.0], [2.5, 0.0]],
    ];
    let actions = [vec![0, 1, 0], vec![1, 0]];
    let models = [TWO_O, sharp];
    let lib = TaskLibrary::new(
        (0..2)
            .map(|k| {
                let vs = alphas[k]
                    .iter()
                    .zip(&actions[k])
                    .map(|(v, &a)| AlphaVector {
                        values: v.to_vec(),
                        action: a,
                    })
                    .collect();
                task(
                    &format!("t{k}"),
                    two_action_model_with(models[k], Belief::new(vec![0.3, 0.7]).unwrap()),
                    vs,
                )
            })
            .collect(),
    )
    .unwrap();
    let mut rng = rng_from_seed(5);
    let mut state = atpo_init(&lib, None).unwrap();
    for _ in 0..6 {
        let b: Vec<[f64; 2]> = state
            .per_task_beliefs
            .iter()
            .map(|b| [b.probs()[0], b.probs()[1]])
            .collect();
        let q: Vec<Vec<f64>> = (0..2)
            .map(|k| {
                (0..2)
                    .map(|a| expectimax_q_with(models[k], b[k], a, &alphas[k]))
                    .collect()
            })
            .collect();
        // greedy task policies, uniform over exact ties
        let greedy: Vec<Vec<f64>> = q
            .iter()
            .map(|qk| {
                let m = qk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let ties = qk.iter().filter(|&&v| v == m).count() as f64;
                qk.iter()
                    .map(|&v| if v == m { 1.0 / ties } else { 0.0 })
                    .collect()
            })
            .collect();
        for target in 0..2 {
            let best = q[target].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let per_action: Vec<f64> = q[target].iter().map(|v| best - v).collect();
            for (got, want) in action_losses(&state, &lib, target).iter().zip(&per_action) {
                assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            }
            let per_task = atpo_loss(&state, &lib, target);
            for k in 0..2 {
                let want: f64 = greedy[k].iter().zip(&per_action).map(|(p, l)| p * l).sum();
                assert!((per_task[k] - want).abs() < 1e-9);
                assert!(per_task[k] >= 0.0);
            }
            assert!(
                per_task[target].abs() < 1e-12,
                "the target's own policy has no loss"
            );
        }
        let a = rng.gen_range(0..2);
        let z = rng.gen_range(0..2);
        state.last_mixed_policy = Some(mixed_policy(&state, &lib));
        state = atpo_update(&state, &lib, a, z, &AtpoOptions::default()).unwrap();
    }
}

fn solved_night(
    preys: [Cell; 2],
) -> (
    BuiltTask,
    Arc<AlphaVectorPolicy>,
    Arc<atpo_core::decision::StatePolicy>,
) {
    let built = NightPursuitTask::new(preys, 3, 3, 0.3)
        .unwrap()
        .build()
        .unwrap();
    let alpha = PerseusConfig::default().solve(&built.pomdp).policy;
    let vf = value_iteration(built.pomdp.base(), DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
    let pi = greedy_policy(&vf, TieBreak::Uniform).unwrap();
    (built, Arc::new(alpha), Arc::new(pi))
}

fn night_library() -> Vec<(
    BuiltTask,
    Arc<AlphaVectorPolicy>,
    Arc<atpo_core::decision::StatePolicy>,
)> {
    vec![
        solved_night([Cell::new(0, 0), Cell::new(2, 2)]),
        solved_night([Cell::new(2, 0), Cell::new(0, 2)]),
    ]
}

fn observation_agents(
    tasks: &[(
        BuiltTask,
        Arc<AlphaVectorPolicy>,
        Arc<atpo_core::decision::StatePolicy>,
    )],
) -> Vec<Box<dyn Agent>> {
    let lib = Arc::new(
        TaskLibrary::new(
            tasks
                .iter()
                .map(|(b, a, _)| Task {
                    label: b.label.clone(),
                    pomdp: Arc::new(b.pomdp.clone()),
                    policy: a.clone(),
                })
                .collect(),
        )
        .unwrap(),
    );
    let bopa = tasks
        .iter()
        .map(|(b, _, pi)| BopaTask {
            pomdp: Arc::new(b.pomdp.clone()),
            mdp_policy: pi.clone(),
        })
        .collect();
    vec![
        Box::new(AtpoAgent::new(lib, AtpoOptions::default(), None).unwrap()),
        Box::new(BopaAgent::new(bopa, false)),
    ]
}

/// Observation-only agents never look at the state or the teammate's
/// action: blanking those fields changes nothing.
#[test]
fn observation_agents_ignore_hidden_fields() {
    let tasks = night_library();
    let mut full = observation_agents(&tasks);
    let mut blind = observation_agents(&tasks);
    let sim = &tasks[1].0.simulator;
    for (f, b) in full.iter_mut().zip(blind.iter_mut()) {
        let mut env = rng_from_seed(9);
        let (mut rf, mut rb) = (rng_from_seed(10), rng_from_seed(10));
        for _ in 0..5 {
            f.reset();
            b.reset();
            let mut s = sim.reset(&mut env);
            for _ in 0..50 {
                let a = f.act(None, &mut rf).unwrap();
                assert_eq!(a, b.act(None, &mut rb).unwrap());
                let out = sim.step(&s, a, &mut env).unwrap();
                f.observe(&TransitionRecord {
                    prev_state: Some(s.index),
                    next_state: Some(out.next.index),
                    observation: out.observation,
                    teammate_action: Some(out.teammate_action),
                    own_action: a,
                })
                .unwrap();
                b.observe(&TransitionRecord {
                    prev_state: None,
                    next_state: None,
                    observation: out.observation,
                    teammate_action: None,
                    own_action: a,
                })
                .unwrap();
                assert_eq!(f.task_posterior(), b.task_posterior(), "{}", f.name());
                s = out.next;
                if out.done {
                    break;
                }
            }
        }
    }
}

/// Drives `agent` for `steps` decisions against `sim`, feeding it only what
/// it is entitled to see, and checks every action is in range.
fn fuzz_actions(agent: &mut dyn Agent, built: &BuiltTask, steps: usize, seed: u64) {
    let info = agent.information();
    let na = built.pomdp.num_actions();
    let mut env = rng_from_seed(seed);
    let mut rng = rng_from_seed(seed + 1);
    let mut s = built.simulator.reset(&mut env);
    agent.reset();
    for _ in 0..steps {
        let visible = info.sees_state().then_some(s.index);
        let a = agent.act(visible, &mut rng).unwrap();
        assert!(a < na, "{} chose {a}", agent.name());
        let out = built.simulator.step(&s, a, &mut env).unwrap();
        agent
            .observe(&TransitionRecord {
                prev_state: visible,
                next_state: info.sees_state().then_some(out.next.index),
                observation: out.observation,
                teammate_action: info.sees_teammate().then_some(out.teammate_action),
                own_action: a,
            })
            .unwrap();
        s = out.next;
        if out.done || s.step >= 50 {
            agent.reset();
            s = built.simulator.reset(&mut env);
        }
    }
}

#[test]
fn every_agent_acts_in_range_on_night_pursuit() {
    let tasks = night_library();
    let (built, alpha, pi) = &tasks[0];
    let mut agents = observation_agents(&tasks);
    agents.push(Box::new(ValueIterationAgent::new(pi.clone())));
    agents.push(Box::new(PerseusAgent::new(
        Arc::new(built.pomdp.clone()),
        alpha.clone(),
    )));
    agents.push(Box::new(RandomAgent::new(built.pomdp.num_actions())));
    for (i, agent) in agents.iter_mut().enumerate() {
        fuzz_actions(agent.as_mut(), built, 10_000, 100 + i as u64);
    }
}

#[test]
fn assistant_acts_in_range_on_overcooked() {
    let built: Vec<BuiltTask> = OvercookedTask::all()
        .iter()
        .map(|t| t.build().unwrap())
        .collect();
    let tasks = built
        .iter()
        .map(|b| {
            let vf = value_iteration(b.pomdp.base(), DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
            AssistantTask {
                teammate: Arc::new(b.teammate.clone()),
                mdp_policy: Arc::new(greedy_policy(&vf, TieBreak::Uniform).unwrap()),
            }
        })
        .collect();
    let mut agent = AssistantAgent::new(tasks);
    for (i, b) in built.iter().enumerate() {
        fuzz_actions(&mut agent, b, 10_000 / built.len() + 1, 200 + i as u64);
    }
}
