use std::time::Duration;

use approx::assert_relative_eq;

use super::*;
use crate::estimators::EstimateReport;
use crate::parallel::{replicate_rng, run_replicates, Execution};
use crate::tree::{extract_skeleton, SpineAssignment};

fn one_state() -> FiniteChain {
    FiniteChain::new(ChainKind::Transition, vec![vec![1.0]], None).unwrap()
}

fn two_state(theta: Option<f64>) -> FiniteChain {
    FiniteChain::new(ChainKind::Transition, vec![vec![0.7, 0.3], vec![0.4, 0.6]], theta).unwrap()
}

fn model(chain: FiniteChain, pmf: Vec<f64>, n: usize, k: usize) -> DiscreteModel {
    DiscreteModel::new(chain, OffspringLaw::new(pmf).unwrap(), n, k, 0).unwrap()
}

fn binary(n: usize, k: usize) -> DiscreteModel {
    model(one_state(), vec![0.0, 0.0, 1.0], n, k)
}

fn critical(n: usize, k: usize) -> DiscreteModel {
    model(one_state(), vec![0.5, 0.0, 0.5], n, k)
}

fn lhs(m: &DiscreteModel, stat: &SpineStatistic) -> f64 {
    oracle_lhs(m, stat, ORACLE_BUDGET).unwrap()
}

fn rhs(m: &DiscreteModel, stat: &SpineStatistic, c: MomentConvention) -> f64 {
    oracle_rhs(m, stat, c, ORACLE_BUDGET).unwrap()
}

#[test]
fn binary_tree_is_full() {
    let tree = simulate_p_dt(&binary(3, 1), &SimOptions::default(), &mut replicate_rng(1, 0)).unwrap();
    assert_eq!(tree.alive_indices(3.0).unwrap().len(), 8);
    assert_eq!(tree.len(), 15);
}

#[test]
fn critical_population_has_unit_mean() {
    let m = critical(4, 1);
    let samples = run_replicates(40_000, 2, &Execution::parallel(0), |rng, _| {
        Ok(simulate_p_dt(&m, &SimOptions::default(), rng)?.alive_indices(4.0)?.len() as f64)
    })
    .unwrap();
    assert!(EstimateReport::from_samples("n", &samples, 0, Duration::ZERO).covers99(1.0));
}

#[test]
fn one_state_chain_keeps_position() {
    let tree = simulate_p_dt(&binary(3, 1), &SimOptions::default(), &mut replicate_rng(3, 0)).unwrap();
    assert!(tree.records().iter().all(|r| r.birth_state().position == 0.0));
}

#[test]
fn size_biased_spine_never_dies() {
    let m = critical(5, 1);
    for i in 0..200 {
        let q = simulate_skeleton_q_dt(&m, false, &SimOptions::default(), &mut replicate_rng(4, i)).unwrap();
        for node in q.skeleton.nodes().iter().filter(|n| n.birth < 5.0) {
            assert_eq!(node.children, Some(2));
        }
    }
}

#[test]
fn two_spines_split_half_the_time() {
    let m = binary(1, 2);
    let n = 20_000;
    let split = (0..n)
        .filter(|&i| {
            let q = simulate_skeleton_q_dt(&m, false, &SimOptions::default(), &mut replicate_rng(5, i)).unwrap();
            q.skeleton.split_time(0, 1).is_finite()
        })
        .count() as f64;
    assert!((split / n as f64 - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
}

#[test]
fn weight_reduces_to_moment_power_for_one_spine() {
    for n in 1..=5 {
        let m = binary(n, 1);
        let q = simulate_skeleton_q_dt(&m, false, &SimOptions::default(), &mut replicate_rng(6, n as u64)).unwrap();
        assert_eq!(many_to_few_weight_dt(&q.skeleton, &m.law, MomentConvention::PerNode), 2f64.powi(n as i32));
    }
}

#[test]
fn two_spine_weights_match_second_moment() {
    for (n, expected) in [(1, 4.0), (2, 16.0)] {
        let m = binary(n, 2);
        for i in 0..50 {
            let q = simulate_skeleton_q_dt(&m, false, &SimOptions::default(), &mut replicate_rng(7, i)).unwrap();
            assert_eq!(many_to_few_weight_dt(&q.skeleton, &m.law, MomentConvention::PerNode), expected);
        }
    }
}

#[test]
fn per_edge_moment_overcounts_split_nodes() {
    let m = binary(2, 2);
    let mut seen_split = false;
    for i in 0..200 {
        let q = simulate_skeleton_q_dt(&m, false, &SimOptions::default(), &mut replicate_rng(8, i)).unwrap();
        let w = many_to_few_weight_dt(&q.skeleton, &m.law, MomentConvention::PerEdge);
        if q.skeleton.split_time(0, 1) == 1.0 {
            seen_split = true;
            assert_eq!(w, 64.0);
        }
    }
    assert!(seen_split);
}

#[test]
fn one_spine_skeleton_is_a_line() {
    let m = model(two_state(None), vec![0.2, 0.3, 0.5], 4, 1);
    for i in 0..50 {
        let mut rng = replicate_rng(9, i);
        let tree = simulate_p_dt(&m, &SimOptions::default(), &mut rng).unwrap();
        let spines = crate::sim_ct::attach_spines(&tree, 1, &mut rng).unwrap();
        let sk = extract_skeleton(&tree, &spines, tree.horizon()).unwrap();
        let term = &spines.terminals()[0];
        assert_eq!(sk.nodes().len(), term.generation() + 1);
    }
}

#[test]
fn oracle_examples() {
    assert_eq!(lhs(&critical(2, 1), &SpineStatistic::one(1, 1)), 1.0);
    assert_eq!(lhs(&binary(2, 2), &SpineStatistic::one(2, 1)), 16.0);
    let dead = model(one_state(), vec![1.0], 1, 1);
    assert_eq!(lhs(&dead, &SpineStatistic::one(1, 1)), 0.0);
    assert_relative_eq!(rhs(&critical(2, 1), &SpineStatistic::one(1, 1), MomentConvention::PerNode), 1.0, max_relative = 1e-14);
    assert_relative_eq!(rhs(&binary(2, 2), &SpineStatistic::one(2, 1), MomentConvention::PerNode), 16.0, max_relative = 1e-14);
}

#[test]
fn tilted_chain_oracles_agree() {
    let m = model(two_state(Some(0.5)), vec![0.0, 0.5, 0.5], 3, 1);
    for target in 0..2 {
        let stat = SpineStatistic::indicators(&[target], 2).unwrap();
        let (l, r) = (lhs(&m, &stat), rhs(&m, &stat, MomentConvention::PerNode));
        assert!((l - r).abs() <= ORACLE_TOL * (1.0 + l.abs()), "{l} vs {r}");
    }
}

#[test]
fn per_edge_rhs_gives_64() {
    let m = binary(2, 2);
    let stat = SpineStatistic::one(2, 1);
    let per_edge = rhs(&m, &stat, MomentConvention::PerEdge);
    assert!(per_edge > 16.0);
    // Splits at generation 1 or 2 weigh 4*4*4 = 64 each.
    let split_weight = 64.0;
    assert!(per_edge <= split_weight);
}

#[test]
fn conventions_coincide_for_one_spine() {
    let m = model(two_state(Some(0.5)), vec![1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0], 3, 1);
    let stat = SpineStatistic::one(1, 2);
    assert_eq!(rhs(&m, &stat, MomentConvention::PerNode), rhs(&m, &stat, MomentConvention::PerEdge));
}

#[test]
fn budget_is_enforced() {
    let m = model(two_state(None), vec![1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0], 4, 1);
    assert!(matches!(
        oracle_lhs(&m, &SpineStatistic::one(1, 2), 1e3),
        Err(Error::BudgetExceeded { .. })
    ));
}

#[test]
fn spine_monte_carlo_converges_to_oracle() {
    let m = model(two_state(Some(0.5)), vec![0.0, 0.5, 0.5], 3, 2);
    let stat = SpineStatistic::indicators(&[0, 1], 2).unwrap();
    let exact = rhs(&m, &stat, MomentConvention::PerNode);
    let samples = run_replicates(100_000, 10, &Execution::parallel(0), |rng, _| {
        let q = simulate_skeleton_q_dt(&m, false, &SimOptions::default(), rng)?;
        let states: Vec<usize> = q
            .skeleton
            .spine_states()?
            .into_iter()
            .map(|s| s.expect("spines survive").position as usize)
            .collect();
        Ok(many_to_few_weight_dt(&q.skeleton, &m.law, MomentConvention::PerNode) * stat.eval(&states))
    })
    .unwrap();
    let r = EstimateReport::from_samples("q", &samples, 0, Duration::ZERO);
    assert!(r.covers99(exact), "{r:?} vs {exact}");
}

#[test]
fn full_tree_mode_builds_valid_trees() {
    let m = model(two_state(None), vec![0.2, 0.3, 0.5], 3, 2);
    let q = simulate_skeleton_q_dt(&m, true, &SimOptions::default(), &mut replicate_rng(11, 0)).unwrap();
    let tree = q.tree.unwrap();
    for node in q.skeleton.nodes() {
        assert_eq!(tree.get(&node.label), Some(node));
    }
    let spines = SpineAssignment::new(q.skeleton.carriers().to_vec()).unwrap();
    assert_eq!(extract_skeleton(&tree, &spines, 3.0).unwrap(), q.skeleton);
}

#[test]
fn builtin_grid_passes() {
    let cases = builtin_grid();
    assert_eq!(cases.len(), 384);
    let results = run_grid(&cases, MomentConvention::PerNode, ORACLE_BUDGET, &Execution::parallel(0)).unwrap();
    let evaluated: Vec<_> = results.iter().filter(|r| r.status != GridStatus::Skipped).collect();
    assert!(evaluated.len() >= 240, "only {} cases fit the budget", evaluated.len());
    for r in &evaluated {
        assert!(r.passed(), "{r:?}");
    }
}

#[test]
fn per_edge_grid_fails_split_cases() {
    let cases: Vec<GridCase> = builtin_grid()
        .into_iter()
        .filter(|c| c.model.chain.states() == 1 && c.model.generations <= 2)
        .collect();
    let results = run_grid(&cases, MomentConvention::PerEdge, ORACLE_BUDGET, &Execution::sequential()).unwrap();
    assert!(results.iter().filter(|r| r.k == 1).all(|r| r.passed()));
    let bad = results
        .iter()
        .find(|r| r.law == "point-2" && r.k == 2 && r.n == 2 && r.statistic == "one" && r.zeta == "one")
        .unwrap();
    assert_eq!(bad.status, GridStatus::Fail);
    assert_eq!(bad.lhs, Some(16.0));
}
