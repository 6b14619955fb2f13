//! Statistical and analytic checks of sampling, agents, runs and reports.

use edu_bandit::report::{read_curves_csv, write_curves_csv, write_summary_json, Accumulator};
use edu_bandit::*;

fn env(c: u8) -> Environment {
    make_category_env(c).unwrap()
}

fn sigma3(p: f64, n: f64) -> f64 {
    3.0 * (p * (1.0 - p) / n).sqrt()
}

#[test]
fn cat4_recommendation3_pass_rate() {
    let e = env(4);
    let mut rng = RngStream::new(2024);
    let n = 100_000;
    let passes: u32 = (0..n)
        .map(|_| u32::from(e.step(2, &mut rng).unwrap().value()))
        .sum();
    let rate = f64::from(passes) / f64::from(n);
    assert!((rate - 0.5).abs() <= 0.005, "rate {rate}");
}

#[test]
fn cohort_sampling_frequencies() {
    let n = 100_000;
    let mut rng = RngStream::new(77);
    let default = Cohort::default();
    let hits = (0..n)
        .filter(|_| default.sample_category(&mut rng) == 1)
        .count();
    let f = hits as f64 / n as f64;
    assert!((f - 55.0 / 90.0).abs() <= 0.01, "category 1 frequency {f}");

    let uniform = Cohort::new(vec![0.25; 4]).unwrap();
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[usize::from(uniform.sample_category(&mut rng) - 1)] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 0.25).abs() <= 0.01, "{counts:?}");
    }

    let degenerate = Cohort::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((0..10_000).all(|_| degenerate.sample_category(&mut rng) == 1));
}

#[test]
fn random_agent_uniform_choices() {
    let agent = Agent::new(AgentKind::Random, 4, Params::default()).unwrap();
    let mut rng = RngStream::new(5);
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[agent.select_action(&mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 0.25).abs() <= 0.01, "{counts:?}");
    }
}

#[test]
fn full_exploration_matches_random_agent() {
    let params = Params {
        epsilon: 1.0,
        ucb_c: 0.0,
    };
    // greedy part would always pick arm 1 if it were ever used
    let agent = Agent::from_parts(
        AgentKind::EpsilonGreedy,
        params,
        vec![5; 4],
        vec![0.0, 1.0, 0.0, 0.0],
    )
    .unwrap();
    let mut rng = RngStream::new(6);
    let n = 100_000.0;
    let mut counts = [0usize; 4];
    for _ in 0..n as usize {
        counts[agent.select_action(&mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / n - 0.25).abs() <= sigma3(0.25, n), "{counts:?}");
    }
}

#[test]
fn ucb_pulls_every_arm_first() {
    for c in 1..=4 {
        let spec = Experiment::new(AgentKind::Ucb, Choice::Category(c))
            .with_horizon(4)
            .with_runs(10);
        for run in 0..10 {
            let t = run_trajectory(&spec, run).unwrap();
            assert_eq!(t.actions, vec![0, 1, 2, 3]);
        }
    }
}

#[test]
fn cat4_random_long_run_rate() {
    let spec = Experiment::new(AgentKind::Random, Choice::Category(4))
        .with_horizon(10_000)
        .with_runs(1)
        .with_seed(42);
    let t = run_trajectory(&spec, 0).unwrap();
    let rate = f64::from(t.total_reward()) / 10_000.0;
    assert!((rate - 0.125).abs() <= 0.01, "rate {rate}");
}

#[test]
fn cat3_replay_is_consistent_with_expected_reward() {
    let spec = Experiment::new(AgentKind::EpsilonGreedy, Choice::Category(3))
        .with_horizon(300)
        .with_runs(4)
        .with_seed(9);
    let e = env(3);
    for run in 0..4 {
        let a = run_trajectory(&spec, run).unwrap();
        let b = run_trajectory(&spec, run).unwrap();
        assert_eq!(a.rewards, b.rewards);
        for (&act, &r) in a.actions.iter().zip(&a.rewards) {
            let p = e.expected_reward(act as usize).unwrap();
            if p == 0.0 {
                assert_eq!(r, 0);
            }
            if p == 1.0 {
                assert_eq!(r, 1);
            }
        }
    }
}

#[test]
fn single_run_experiment_equals_trajectory() {
    let spec = Experiment::new(AgentKind::Ucb, Choice::Category(2))
        .with_horizon(60)
        .with_runs(1)
        .with_seed(3);
    let all = run_experiment(&spec, Some(2)).unwrap();
    assert_eq!(all, vec![run_trajectory(&spec, 0).unwrap()]);
}

#[test]
fn parallel_equals_serial() {
    for choice in [
        Choice::Category(2),
        Choice::Category(4),
        Choice::Cohort(Cohort::default()),
    ] {
        let spec = Experiment::new(AgentKind::EpsilonGreedy, choice)
            .with_horizon(120)
            .with_runs(700)
            .with_seed(11);
        let serial = run_aggregate(&spec, Some(1)).unwrap();
        let parallel = run_aggregate(&spec, Some(8)).unwrap();
        assert_eq!(serial, parallel);
        let from_trajectories = aggregate(&run_experiment(&spec, Some(8)).unwrap(), &spec).unwrap();
        assert_eq!(serial, from_trajectories);
    }
}

#[test]
fn runs_are_independent_of_run_count() {
    let spec = Experiment::new(AgentKind::Ucb, Choice::Category(3))
        .with_horizon(80)
        .with_runs(50)
        .with_seed(1);
    let all = run_experiment(&spec, None).unwrap();
    let fewer = run_experiment(&spec.clone().with_runs(20), None).unwrap();
    assert_eq!(&all[..20], &fewer[..]);
    assert_eq!(all[37], run_trajectory(&spec, 37).unwrap());
}

#[test]
fn degenerate_cohort_reproduces_single_environment() {
    for kind in AgentKind::ALL {
        for cat in 1..=4u8 {
            let mut weights = vec![0.0; 4];
            weights[usize::from(cat - 1)] = 1.0;
            let cohort = Experiment::new(kind, Choice::Cohort(Cohort::new(weights).unwrap()))
                .with_horizon(200)
                .with_runs(5)
                .with_seed(21);
            let single = Experiment {
                environment: Choice::Category(cat),
                ..cohort.clone()
            };
            for run in 0..5 {
                let a = run_trajectory(&cohort, run).unwrap();
                let b = run_trajectory(&single, run).unwrap();
                assert_eq!(a.actions, b.actions);
                assert_eq!(a.rewards, b.rewards);
                assert_eq!(a.categories, Some(vec![cat; 200]));
            }
        }
    }
}

fn fixed(arm: usize) -> impl Fn(&Environment) -> Result<FixedArm> + Sync {
    move |e: &Environment| {
        Ok(FixedArm {
            arm,
            arm_count: e.arm_count(),
        })
    }
}

#[test]
fn cohort_fixed_arm_mixture_rates() {
    let spec = Experiment::new(AgentKind::Random, Choice::Cohort(Cohort::default()))
        .with_horizon(2_000)
        .with_runs(200)
        .with_seed(8);
    let arm3 = run_aggregate_with(&spec, None, &fixed(2)).unwrap();
    let expected3 = (55.0 + 20.0 + 10.0 + 5.0 * 0.5) / 90.0;
    assert!(
        (arm3.mean_reward_rate - expected3).abs() < 0.005,
        "{}",
        arm3.mean_reward_rate
    );
    let arm1 = run_aggregate_with(&spec, None, &fixed(0)).unwrap();
    let expected1 = (55.0 + 20.0 * 0.5) / 90.0;
    assert!(
        (arm1.mean_reward_rate - expected1).abs() < 0.005,
        "{}",
        arm1.mean_reward_rate
    );
}

#[test]
fn fixed_arm_cat4_rate() {
    let spec = Experiment::new(AgentKind::Random, Choice::Category(4)).with_seed(4);
    let r = run_aggregate_with(&spec, None, &fixed(2)).unwrap();
    assert!((r.mean_reward_rate - 0.5).abs() <= 0.015);
    assert_eq!(r.action_frequency, vec![0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn cat1_aggregate_is_exact() {
    for kind in AgentKind::ALL {
        let spec = Experiment::new(kind, Choice::Category(1))
            .with_horizon(40)
            .with_runs(100);
        let r = run_aggregate(&spec, None).unwrap();
        for t in 0..40 {
            assert_eq!(r.mean_cumulative[t], (t + 1) as f64);
            assert_eq!(r.ci_lower[t], r.mean_cumulative[t]);
            assert_eq!(r.ci_upper[t], r.mean_cumulative[t]);
            assert_eq!(r.mean_regret[t], 0.0);
        }
        assert_eq!(r.mean_reward_rate, 1.0);
    }
}

#[test]
fn greedy_lock_in_drives_frequency_to_one() {
    // arm 3 pays on the first pull, after which its estimate is the unique max
    let spec = Experiment::new(AgentKind::EpsilonGreedy, Choice::Category(3))
        .with_params(Params {
            epsilon: 0.0,
            ucb_c: 0.0,
        })
        .with_seed(5)
        .with_runs(1);
    let locked = |e: &Environment| {
        Agent::from_parts(
            AgentKind::EpsilonGreedy,
            Params {
                epsilon: 0.0,
                ucb_c: 0.0,
            },
            vec![0, 0, 1, 0],
            vec![0.0, 0.0, 1.0, 0.0],
        )
        .inspect(|a| assert_eq!(a.arm_count(), e.arm_count()))
    };
    let mut last = 0.0;
    for horizon in [10, 100, 1000] {
        let s = spec.clone().with_horizon(horizon);
        let t = run_experiment_with(&s, Some(1), &locked).unwrap();
        let f = action_distribution(&t, 4).unwrap()[2];
        assert!(f >= last);
        last = f;
    }
    assert_eq!(last, 1.0);
}

#[test]
fn random_agent_pooled_frequency() {
    let spec = Experiment::new(AgentKind::Random, Choice::Category(2))
        .with_runs(400)
        .with_seed(2);
    let t = run_experiment(&spec, None).unwrap();
    for f in action_distribution(&t, 4).unwrap() {
        assert!((f - 0.25).abs() <= 0.01);
    }
}

#[test]
fn merged_halves_equal_one_shot() {
    let spec = Experiment::new(AgentKind::Ucb, Choice::Category(4))
        .with_horizon(90)
        .with_runs(301);
    let runs = run_experiment(&spec, None).unwrap();
    let mut left = Accumulator::new(90, 4, 1.0);
    let mut right = Accumulator::new(90, 4, 1.0);
    for (i, t) in runs.iter().enumerate() {
        if i % 3 == 0 {
            left.add(i as u64, t).unwrap();
        } else {
            right.add(i as u64, t).unwrap();
        }
    }
    right.merge(left).unwrap();
    assert_eq!(
        right.finish(&spec).unwrap(),
        aggregate(&runs, &spec).unwrap()
    );
}

#[test]
fn curves_csv_golden_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = Experiment::new(AgentKind::EpsilonGreedy, Choice::Category(1))
        .with_horizon(3)
        .with_runs(10);
    let r = run_aggregate(&spec, None).unwrap();
    let path = dir.path().join("curves.csv");
    write_curves_csv(&r, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text,
        "episode,mean_cum_reward,ci_lower,ci_upper,mean_regret\n\
         1,1.000000,1.000000,1.000000,0.000000\n\
         2,2.000000,2.000000,2.000000,0.000000\n\
         3,3.000000,3.000000,3.000000,0.000000\n"
    );

    let spec = Experiment::new(AgentKind::Ucb, Choice::Category(2))
        .with_horizon(200)
        .with_runs(300);
    let r = run_aggregate(&spec, None).unwrap();
    write_curves_csv(&r, &path).unwrap();
    let rows = read_curves_csv(&path).unwrap();
    assert_eq!(rows.len(), 200);
    for (t, row) in rows.iter().enumerate() {
        assert_eq!(row.episode, t + 1);
        assert!((row.mean_cum_reward - r.mean_cumulative[t]).abs() <= 5e-7);
        assert!((row.ci_lower - r.ci_lower[t]).abs() <= 5e-7);
        assert!((row.ci_upper - r.ci_upper[t]).abs() <= 5e-7);
        assert!((row.mean_regret - r.mean_regret[t]).abs() <= 5e-7);
    }
}

#[test]
fn summary_json_fields() {
    let dir = tempfile::tempdir().unwrap();
    let spec = Experiment::new(AgentKind::Random, Choice::Category(4))
        .with_horizon(50)
        .with_runs(200)
        .with_seed(99);
    let r = run_aggregate(&spec, None).unwrap();
    let path = dir.path().join("summary.json");
    write_summary_json(&r, &spec, &path).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["base_seed"], 99);
    assert_eq!(v["spec"]["agent"], "random");
    assert_eq!(v["spec"]["environment"], "cat4");
    assert_eq!(v["engine_version"], env!("CARGO_PKG_VERSION"));
    let freq = v["action_frequency"].as_object().unwrap();
    assert_eq!(freq.keys().collect::<Vec<_>>(), ["1", "2", "3", "4"]);
    let counts = v["action_counts"].as_object().unwrap();
    let total: u64 = counts.values().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 50 * 200);
    for (k, f) in freq {
        let from_counts = counts[k].as_u64().unwrap() as f64 / total as f64;
        assert!((f.as_f64().unwrap() - from_counts).abs() < 1e-12);
    }
    let sum: f64 = freq.values().map(|f| f.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert_eq!(v["mean_reward_rate"].as_f64().unwrap(), r.mean_reward_rate);
}

#[test]
fn f32_runs_match_f64_decisions_on_deterministic_env() {
    let s64 = Experiment::new(AgentKind::Ucb, Choice::Category(1))
        .with_horizon(30)
        .with_runs(3);
    let s32 = ExperimentSpec::<f32>::new(AgentKind::Ucb, EnvironmentChoice::Category(1))
        .with_horizon(30)
        .with_runs(3);
    let a = run_aggregate(&s64, None).unwrap();
    let b = run_aggregate(&s32, None).unwrap();
    assert_eq!(b.mean_reward_rate, 1.0f32);
    assert_eq!(a.action_counts, b.action_counts);
}
