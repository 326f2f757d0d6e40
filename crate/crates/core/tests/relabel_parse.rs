mod common;

use common::{brute_force_parse, line_demo, LineEnv, ReachPrimitive};
use crisp::demos::{DemoDataset, DemoMetadata};
use crisp::relabel::{
    fixed_window_parse, load_subgoals, pip_parse, repopulate, save_subgoals, ParserKind,
    SubgoalDataset,
};
use proptest::prelude::*;

const C: usize = 5;
const DELTA: f64 = 1e-6;

fn xs() -> Vec<f64> {
    (0..=10).map(f64::from).collect()
}

fn pip_subgoals(reach: f64, max_step: f64) -> Vec<f64> {
    let mut env = LineEnv::new(max_step);
    let mut prim = ReachPrimitive::new(reach, C, max_step);
    let out = pip_parse(&line_demo(&xs()), 0, &mut prim, &mut env, C, DELTA).unwrap();
    out.transitions.iter().map(|t| t.subgoal.0[0]).collect()
}

#[test]
fn stronger_primitive_gives_fewer_subgoals() {
    let weak = pip_subgoals(2.5, 1.0);
    let strong = pip_subgoals(5.0, 1.0);
    assert_eq!(strong, vec![5.0, 10.0]);
    assert_eq!(weak, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
    assert!(strong.len() < weak.len());
}

#[test]
fn omnipotent_primitive_emits_nothing() {
    assert!(pip_subgoals(1e6, 1e6).is_empty());
}

#[test]
fn incapable_primitive_forces_every_state() {
    let mut env = LineEnv::new(1.0);
    let mut prim = ReachPrimitive::new(0.0, C, 1.0);
    let out = pip_parse(&line_demo(&xs()), 0, &mut prim, &mut env, C, DELTA).unwrap();
    let subgoals: Vec<f64> = out.transitions.iter().map(|t| t.subgoal.0[0]).collect();
    assert_eq!(subgoals, (1..=10).map(f64::from).collect::<Vec<_>>());
    assert!(out.transitions.iter().all(|t| !t.verified));
}

#[test]
fn verified_transitions_are_reachable() {
    let mut env = LineEnv::new(1.0);
    let mut prim = ReachPrimitive::new(2.5, C, 1.0);
    let out = pip_parse(&line_demo(&xs()), 0, &mut prim, &mut env, C, DELTA).unwrap();
    for t in out.transitions.iter().filter(|t| t.verified) {
        assert!((t.subgoal.0[0] - t.initial_state.0[0]).abs() <= 2.5);
    }
    assert!(out.env_steps > 0);
}

#[test]
fn window_arithmetic() {
    let env = LineEnv::new(1.0);
    let demo = line_demo(&xs());
    let w3 = fixed_window_parse(&demo, 0, 3, &env).unwrap();
    let pairs: Vec<(usize, usize)> = w3.iter().map(|t| (t.start_index, t.subgoal_index)).collect();
    assert_eq!(pairs, vec![(0, 3), (3, 6), (6, 9)]);
    for k in [11, 50] {
        let w = fixed_window_parse(&demo, 0, k, &env).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].subgoal.0[0], 10.0);
    }
    let w1 = fixed_window_parse(&demo, 0, 1, &env).unwrap();
    assert_eq!(w1.len(), 10);
    assert!(w1.iter().enumerate().all(|(i, t)| t.start_index == i && t.subgoal_index == i + 1));
    assert!(fixed_window_parse(&demo, 0, 0, &env).is_err());
}

fn dataset(demos: Vec<Vec<f64>>) -> DemoDataset {
    DemoDataset {
        meta: DemoMetadata {
            env: "line".into(),
            generator: "test".into(),
            seed: 0,
        },
        trajectories: demos.iter().map(|d| line_demo(d)).collect(),
    }
}

#[test]
fn repopulate_is_deterministic_and_stamps_provenance() {
    let demos = dataset(vec![xs(), vec![0.0, 0.5, 3.0, 3.5, 7.0]]);
    let mut env = LineEnv::new(1.0);
    let mut dg = SubgoalDataset::default();
    let mut prim = ReachPrimitive::new(2.5, C, 1.0);
    repopulate(&mut dg, &demos, &mut prim, &mut env, ParserKind::Pip, C, DELTA, 0, "ckpt-0").unwrap();
    let first = dg.clone();
    let mut again = SubgoalDataset::default();
    repopulate(&mut again, &demos, &mut prim, &mut env, ParserKind::Pip, C, DELTA, 0, "ckpt-0").unwrap();
    assert_eq!(again, first);
    // next period, stronger primitive: contents replaced, epoch advances
    let mut strong = ReachPrimitive::new(5.0, C, 1.0);
    repopulate(&mut dg, &demos, &mut strong, &mut env, ParserKind::Pip, C, DELTA, 2500, "ckpt-1").unwrap();
    let p = dg.provenance.as_ref().unwrap();
    assert_eq!(p.epoch, 2500);
    assert_eq!(p.checkpoint, "ckpt-1");
    assert!(dg.len() < first.len());
    assert!(repopulate(&mut dg, &demos, &mut strong, &mut env, ParserKind::Pip, C, DELTA, 100, "x").is_err());
}

#[test]
fn window_output_ignores_the_primitive() {
    let demos = dataset(vec![xs()]);
    let mut env = LineEnv::new(1.0);
    let mut a = SubgoalDataset::default();
    let mut b = SubgoalDataset::default();
    let mut weak = ReachPrimitive::new(0.0, C, 1.0);
    let mut strong = ReachPrimitive::new(1e6, C, 1e6);
    repopulate(&mut a, &demos, &mut weak, &mut env, ParserKind::FixedWindow(3), C, DELTA, 0, "w").unwrap();
    repopulate(&mut b, &demos, &mut strong, &mut env, ParserKind::FixedWindow(3), C, DELTA, 0, "s").unwrap();
    assert_eq!(a.transitions, b.transitions);
}

#[test]
fn rejected_demos_are_skipped() {
    let mut demos = dataset(vec![xs()]);
    let mut bad = line_demo(&xs());
    bad.states[0].0.push(1.0);
    demos.trajectories.push(bad);
    let mut env = LineEnv::new(1.0);
    let mut dg = SubgoalDataset::default();
    let mut prim = ReachPrimitive::new(2.5, C, 1.0);
    let rep = repopulate(&mut dg, &demos, &mut prim, &mut env, ParserKind::Pip, C, DELTA, 0, "c").unwrap();
    assert_eq!(rep.skipped, 1);
    assert_eq!(dg.demos_parsed, 1);
    let only_bad = DemoDataset {
        trajectories: vec![demos.trajectories[1].clone()],
        ..demos.clone()
    };
    assert!(matches!(
        repopulate(&mut SubgoalDataset::default(), &only_bad, &mut prim, &mut env, ParserKind::Pip, C, DELTA, 0, "c"),
        Err(crisp::Error::EmptyDataset(_))
    ));
}

#[test]
fn subgoal_file_round_trip() {
    let demos = dataset(vec![xs(), vec![0.0, 2.0, 4.5, 9.0]]);
    let mut env = LineEnv::new(1.0);
    let mut dg = SubgoalDataset::default();
    let mut prim = ReachPrimitive::new(2.5, C, 1.0);
    repopulate(&mut dg, &demos, &mut prim, &mut env, ParserKind::Pip, C, DELTA, 0, "c").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dg.jsonl");
    save_subgoals(&dg, &path).unwrap();
    assert_eq!(load_subgoals(&path).unwrap(), dg);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pip_matches_brute_force(
        steps in proptest::collection::vec(-2.0f64..3.0, 1..25),
        reach in 0.0f64..8.0,
        c in 1usize..6,
    ) {
        let mut xs = vec![0.0];
        for s in steps {
            let last = *xs.last().unwrap();
            xs.push(last + s);
        }
        let max_step = 10.0;
        let mut env = LineEnv::new(max_step);
        let mut prim = ReachPrimitive::new(reach, c, max_step);
        let out = pip_parse(&line_demo(&xs), 0, &mut prim, &mut env, c, DELTA).unwrap();
        let got: Vec<(usize, usize, bool)> = out
            .transitions
            .iter()
            .map(|t| (t.start_index, t.subgoal_index, t.verified))
            .collect();
        prop_assert_eq!(got, brute_force_parse(&xs, prim.per_step, max_step, c, DELTA));
    }

    #[test]
    fn nested_reach_never_adds_subgoals(
        increments in proptest::collection::vec(0.0f64..2.0, 1..30),
        r1 in 0.5f64..4.0,
        extra in 0.0f64..4.0,
    ) {
        // monotone demo: reachability from each state is a prefix
        let mut xs = vec![0.0];
        for s in increments {
            let last = *xs.last().unwrap();
            xs.push(last + s);
        }
        let count = |reach: f64| {
            let mut env = LineEnv::new(100.0);
            let mut prim = ReachPrimitive::new(reach, C, 100.0);
            pip_parse(&line_demo(&xs), 0, &mut prim, &mut env, C, DELTA).unwrap().transitions.len()
        };
        prop_assert!(count(r1 + extra) <= count(r1));
    }
}
