mod common;

use std::sync::Arc;

use common::oracle::{exists_input, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relucert::network::{Hyperbox, Network, Norm, PhaseStatus};
use relucert::reluverify::{solve, Budget, EncodeConfig, EncodedQuery, OutputGoal, SolverConfig, Verdict};

struct Case {
    net: Arc<Network>,
    region: Hyperbox,
    goal: Vec<(usize, f64)>,
    rhs: f64,
}

fn random_case(rng: &mut ChaCha8Rng, width: f64) -> Case {
    let net = common::random_classifier(rng, 2);
    let center: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let region = Hyperbox::around(&center, width / 2.0).unwrap();
    let a = rng.random_range(0..net.output_dim());
    let b = (a + 1) % net.output_dim();
    let y = net.evaluate(&center).unwrap();
    let rhs = y[a] - y[b] + rng.random_range(-0.2..0.4);
    Case { net: Arc::new(net), region, goal: vec![(a, 1.0), (b, -1.0)], rhs }
}

fn query(case: &Case, seed_phases: bool) -> EncodedQuery {
    let mut q = EncodedQuery::new(Arc::clone(&case.net));
    q.encode_network(&case.region, 0, &EncodeConfig { seed_phases, triangle: false }).unwrap();
    let terms = case.goal.iter().map(|&(o, c)| (0, o, c)).collect();
    q.set_goal(OutputGoal { terms, rhs: case.rhs, offset: 0.0, label: case.goal[0].0 }).unwrap();
    q
}

fn oracle(case: &Case) -> bool {
    let region = Region { lower: case.region.lower().to_vec(), upper: case.region.upper().to_vec(), l1: None };
    exists_input(&case.net, &region, &case.goal, case.rhs)
}

fn run(q: &EncodedQuery, fix: bool) -> Verdict {
    let cfg = SolverConfig { fix_phases: fix, ..SolverConfig::default() };
    solve(q, &cfg, &Budget::unlimited())
}

fn check_witness(case: &Case, v: &Verdict) {
    if let relucert::reluverify::Outcome::Sat { counterexample, .. } = &v.outcome {
        let x = &counterexample.points[0];
        assert!(case.region.contains_point(x));
        let y = case.net.evaluate(x).unwrap();
        let value: f64 = case.goal.iter().map(|&(o, c)| c * y[o]).sum();
        assert!(value >= case.rhs - 1e-6, "witness value {value} < {}", case.rhs);
    }
}

#[test]
fn solve_matches_phase_enumeration_on_200_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sat = 0;
    for i in 0..200 {
        let width = [0.1, 0.4, 2.0][i % 3];
        let case = random_case(&mut rng, width);
        let q = query(&case, true);
        let undetermined = q.phases().iter().filter(|p| **p == PhaseStatus::Undetermined).count();
        let v = run(&q, true);
        assert!(!matches!(v.outcome, relucert::reluverify::Outcome::Timeout(_)), "{:?}", v.outcome);
        assert_eq!(v.is_sat(), oracle(&case), "case {i}");
        assert!(v.stats.splits < (1u64 << undetermined).max(1), "leaf bound violated");
        check_witness(&case, &v);
        sat += v.is_sat() as usize;
    }
    assert!(sat > 30 && sat < 170, "{sat} sat");
}

#[test]
fn twelve_relu_network_matches_4096_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let net = Network::random(&mut rng, &[2, 12, 3], 1.0).unwrap();
        let center = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let y = net.evaluate(&center).unwrap();
        let case = Case {
            net: Arc::new(net),
            region: Hyperbox::around(&center, 1.0).unwrap(),
            goal: vec![(1, 1.0), (0, -1.0)],
            rhs: y[1] - y[0] + rng.random_range(0.0..0.5),
        };
        let v = run(&query(&case, true), true);
        assert_eq!(v.is_sat(), oracle(&case));
        check_witness(&case, &v);
    }
}

#[test]
fn disabling_phase_fixing_keeps_verdicts() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let case = random_case(&mut rng, 0.5);
        let on = run(&query(&case, true), true);
        let off = run(&query(&case, false), false);
        assert_eq!(on.is_sat(), off.is_sat());
        check_witness(&case, &off);
    }
}

#[test]
fn phase_fixing_never_adds_splits_on_narrow_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let case = random_case(&mut rng, 0.1);
        let on = run(&query(&case, true), true);
        let off = run(&query(&case, false), false);
        assert_eq!(on.is_sat(), off.is_sat());
        assert!(on.stats.splits <= off.stats.splits, "{} > {}", on.stats.splits, off.stats.splits);
    }
}

#[test]
fn triangle_relaxation_keeps_verdicts() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..60 {
        let case = random_case(&mut rng, 1.0);
        let mut q = EncodedQuery::new(Arc::clone(&case.net));
        q.encode_network(&case.region, 0, &EncodeConfig { seed_phases: true, triangle: true }).unwrap();
        let terms = case.goal.iter().map(|&(o, c)| (0, o, c)).collect();
        q.set_goal(OutputGoal { terms, rhs: case.rhs, offset: 0.0, label: 0 }).unwrap();
        let v = run(&q, true);
        assert_eq!(v.is_sat(), oracle(&case));
    }
}

#[test]
fn l1_region_oracle_sanity() {
    // 2-D L1 ball of radius 1: (0.6, 0.6) is outside, (0.5, 0.5) on the boundary
    let id = Network::from_parts(vec![(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0])]).unwrap();
    let ball = Region::ball(&[0.0, 0.0], 1.0, Norm::L1);
    assert!(!exists_input(&id, &ball, &[(0, 1.0), (1, 1.0)], 1.2));
    assert!(exists_input(&id, &ball, &[(0, 1.0), (1, 1.0)], 1.0));
}
