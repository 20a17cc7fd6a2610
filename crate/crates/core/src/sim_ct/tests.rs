use std::time::Duration;

use approx::assert_relative_eq;

use super::*;
use crate::estimators::EstimateReport;
use crate::parallel::{replicate_rng, run_replicates, Execution};
use crate::tree::{spine_probability, SpineAssignment};

fn bbm() -> ContinuousModel {
    ContinuousModel::binary_bbm(MotionModel::Brownian)
}

fn report(samples: &[f64]) -> EstimateReport {
    EstimateReport::from_samples("test", samples, 0, Duration::ZERO)
}

fn exec() -> Execution {
    Execution::parallel(0)
}

fn with_record(t: f64) -> SimOptions {
    SimOptions {
        record_times: vec![t],
        ..SimOptions::default()
    }
}

#[test]
fn no_branching_gives_single_particle() {
    let mut model = bbm();
    model.rate = BranchRate::constant(0.0).unwrap();
    let tree = simulate_p(&model, 2.0, &SimOptions::default(), &mut replicate_rng(1, 0)).unwrap();
    assert_eq!(tree.len(), 1);
    assert_eq!(tree.alive_at(2.0).unwrap(), vec![ParticleLabel::root()]);
}

#[test]
fn binary_population_mean_is_exponential() {
    let model = bbm();
    let samples = run_replicates(20_000, 7, &exec(), |rng, _| {
        let tree = simulate_p(&model, 1.0, &SimOptions::default(), rng)?;
        Ok(tree.alive_indices(1.0)?.len() as f64)
    })
    .unwrap();
    let r = report(&samples);
    assert!(r.covers99(std::f64::consts::E), "{r:?}");
}

#[test]
fn childless_law_dies_at_exponential_time() {
    let mut model = bbm();
    model.law = OffspringLaw::point_mass(0);
    let t: f64 = 0.7;
    let samples = run_replicates(20_000, 8, &exec(), |rng, _| {
        let tree = simulate_p(&model, t, &SimOptions::default(), rng)?;
        Ok(if tree.alive_indices(t)?.is_empty() { 1.0 } else { 0.0 })
    })
    .unwrap();
    assert!(report(&samples).covers99(1.0 - (-t).exp()));
}

#[test]
fn spines_pick_children_uniformly() {
    let tree = crate::tree::fixtures_for_tests::one_binary_branch();
    let n = 20_000;
    let mut first = 0.0;
    let mut together = 0.0;
    for i in 0..n {
        let mut rng = replicate_rng(9, i);
        let one = attach_spines(&tree, 1, &mut rng).unwrap();
        if one.terminals()[0] == ParticleLabel::from_path(vec![1]).unwrap() {
            first += 1.0;
        }
        let two = attach_spines(&tree, 2, &mut rng).unwrap();
        if two.terminals()[0] == two.terminals()[1] {
            together += 1.0;
        }
    }
    let se = (0.25 / n as f64).sqrt();
    assert!((first / n as f64 - 0.5).abs() < 4.0 * se);
    assert!((together / n as f64 - 0.5).abs() < 4.0 * se);
}

#[test]
fn branchless_tree_keeps_marks_on_root() {
    let mut model = bbm();
    model.rate = BranchRate::constant(0.0).unwrap();
    let mut rng = replicate_rng(10, 0);
    let tree = simulate_p(&model, 1.0, &SimOptions::default(), &mut rng).unwrap();
    let spines = attach_spines(&tree, 3, &mut rng).unwrap();
    assert!(spines.terminals().iter().all(|l| l.is_root()));
}

#[test]
fn single_spine_branches_at_size_biased_rate() {
    let model = bbm();
    let samples = run_replicates(20_000, 11, &exec(), |rng, _| {
        let q = simulate_skeleton_q(&model, 50.0, 1, QMode::SkeletonOnly, &SimOptions::default(), rng)?;
        Ok(q.weighted.skeleton.nodes()[0].death)
    })
    .unwrap();
    assert!(report(&samples).covers99(0.5));
}

#[test]
fn two_spines_split_at_rate_two() {
    let model = bbm();
    let samples = run_replicates(20_000, 12, &exec(), |rng, _| {
        let q = simulate_skeleton_q(&model, 30.0, 2, QMode::SkeletonOnly, &SimOptions::default(), rng)?;
        Ok(q.weighted.skeleton.split_time(0, 1))
    })
    .unwrap();
    assert!(samples.iter().all(|s| s.is_finite()));
    assert!(report(&samples).covers99(0.5));
}

#[test]
fn tilted_spine_drifts() {
    let model = ContinuousModel::binary_bbm(MotionModel::BrownianTilt { lambda: 1.0 });
    let t = 1.5;
    let samples = run_replicates(20_000, 13, &exec(), |rng, _| {
        let q = simulate_skeleton_q(&model, t, 1, QMode::SkeletonOnly, &SimOptions::default(), rng)?;
        Ok(q.weighted.skeleton.spine_states()?[0].unwrap().position)
    })
    .unwrap();
    assert!(report(&samples).covers99(t));
}

#[test]
fn many_to_one_weight_is_deterministic() {
    let model = bbm();
    for i in 0..200 {
        let q = simulate_skeleton_q(&model, 1.0, 1, QMode::SkeletonOnly, &SimOptions::default(), &mut replicate_rng(14, i))
            .unwrap();
        assert_relative_eq!(many_to_few_weight(&q.weighted), std::f64::consts::E, max_relative = 1e-12);
    }
}

#[test]
fn two_spine_weight_depends_only_on_split_time() {
    let model = bbm();
    let t: f64 = 1.0;
    let samples = run_replicates(50_000, 15, &exec(), |rng, _| {
        let q = simulate_skeleton_q(&model, t, 2, QMode::SkeletonOnly, &SimOptions::default(), rng)?;
        let s = q.weighted.skeleton.split_time(0, 1).min(t);
        let expected = (3.0 * s + 2.0 * (t - s)).exp();
        let w = many_to_few_weight(&q.weighted);
        assert!((w - expected).abs() <= 1e-10 * expected, "{w} vs {expected}");
        Ok(w)
    })
    .unwrap();
    assert!(report(&samples).covers99(2.0 * (2.0 * t).exp() - t.exp()));
}

#[test]
fn wrong_spine_rate_biases_two_spine_mean() {
    let model = bbm();
    let opts = SimOptions {
        unsound_spine_rate: true,
        ..SimOptions::default()
    };
    let samples = run_replicates(50_000, 15, &exec(), |rng, _| {
        let q = simulate_skeleton_q(&model, 1.0, 2, QMode::SkeletonOnly, &opts, rng)?;
        Ok(many_to_few_weight(&q.weighted))
    })
    .unwrap();
    let e = std::f64::consts::E;
    assert!(!report(&samples).covers99(2.0 * e * e - e));
}

#[test]
fn no_branching_weight_is_one() {
    let mut model = bbm();
    model.rate = BranchRate::constant(0.0).unwrap();
    let q = simulate_skeleton_q(&model, 1.0, 3, QMode::SkeletonOnly, &SimOptions::default(), &mut replicate_rng(16, 0))
        .unwrap();
    assert_eq!(many_to_few_weight(&q.weighted), 1.0);
}

#[test]
fn tilt_ratio_telescopes_along_the_spine() {
    let model = ContinuousModel::binary_bbm(MotionModel::BrownianTilt { lambda: 0.8 });
    for i in 0..100 {
        let q = simulate_skeleton_q(&model, 1.0, 1, QMode::SkeletonOnly, &SimOptions::default(), &mut replicate_rng(17, i))
            .unwrap();
        let sk = &q.weighted.skeleton;
        let end = sk.spine_states().unwrap()[0].unwrap();
        let x0 = model.origin;
        let direct = 1.0 / (0.8 * (end.position - x0) - 0.5 * 0.64).exp();
        assert_relative_eq!(q.weighted.zeta_ratio_product, direct, max_relative = 1e-10);
    }
}

#[test]
fn full_tree_mode_embeds_the_skeleton() {
    let model = bbm();
    let q = simulate_skeleton_q(&model, 1.5, 2, QMode::FullTree, &SimOptions::default(), &mut replicate_rng(18, 3)).unwrap();
    let tree = q.tree.unwrap();
    for node in q.weighted.skeleton.nodes() {
        assert_eq!(tree.get(&node.label), Some(node));
    }
    let alive = tree.alive_at(1.5).unwrap();
    for c in q.weighted.skeleton.carriers() {
        assert!(alive.contains(c));
    }
}

#[test]
fn zeta_tilde_without_branching() {
    let tree = crate::tree::fixtures_for_tests::single(1.0);
    let model = bbm();
    let spines = SpineAssignment::new(vec![ParticleLabel::root()]).unwrap();
    assert_relative_eq!(zeta_tilde(&tree, &spines, &model, 1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-14);
    assert_relative_eq!(z_process(&tree, &model, 1.0, 1, 1e6).unwrap(), (-1.0f64).exp(), max_relative = 1e-14);
}

#[test]
fn zeta_tilde_vanishes_in_graveyard() {
    let tree = crate::tree::fixtures_for_tests::uneven();
    let model = bbm();
    let spines = SpineAssignment::new(vec![ParticleLabel::from_path(vec![2]).unwrap()]).unwrap();
    assert_eq!(zeta_tilde(&tree, &spines, &model, 1.0).unwrap(), 0.0);
}

#[test]
fn single_spine_z_counts_particles() {
    let model = bbm();
    for i in 0..50 {
        let tree = simulate_p(&model, 1.0, &SimOptions::default(), &mut replicate_rng(19, i)).unwrap();
        let n = tree.alive_indices(1.0).unwrap().len() as f64;
        assert_relative_eq!(
            z_process(&tree, &model, 1.0, 1, 1e6).unwrap(),
            n * (-1.0f64).exp(),
            max_relative = 1e-12
        );
    }
}

#[test]
fn z_is_the_spine_average_of_zeta_tilde() {
    let model = ContinuousModel::binary_bbm(MotionModel::BrownianTilt { lambda: 0.5 });
    let t = 0.8;
    let tree = simulate_p(&model, t, &SimOptions::default(), &mut replicate_rng(20, 1)).unwrap();
    assert!(tree.alive_indices(t).unwrap().len() >= 2);
    for k in 1..=2 {
        let z = z_process(&tree, &model, t, k, 1e6).unwrap();
        let samples: Vec<f64> = (0..4000)
            .map(|i| {
                let spines = attach_spines(&tree, k, &mut replicate_rng(21, i)).unwrap();
                zeta_tilde(&tree, &spines, &model, t).unwrap()
            })
            .collect();
        assert!(report(&samples).covers99(z), "k={k}: z={z}");
    }
}

#[test]
fn zeta_tilde_and_z_have_unit_mean() {
    let model = ContinuousModel::binary_bbm(MotionModel::BrownianTilt { lambda: 1.0 });
    let t = 0.5;
    let samples = run_replicates(10_000, 22, &exec(), |rng, _| {
        let tree = simulate_p(&model, t, &SimOptions::default(), rng)?;
        let spines = attach_spines(&tree, 2, rng)?;
        Ok((zeta_tilde(&tree, &spines, &model, t)?, z_process(&tree, &model, t, 2, 1e6)?))
    })
    .unwrap();
    let zt: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let z: Vec<f64> = samples.iter().map(|s| s.1).collect();
    assert!(report(&zt).covers99(1.0));
    assert!(report(&z).covers99(1.0));
}

#[test]
fn gibbs_weights_normalize_and_match_spine_probabilities() {
    let model = bbm();
    let t = 1.0;
    for i in 0..20 {
        let tree = simulate_p(&model, t, &SimOptions::default(), &mut replicate_rng(23, i)).unwrap();
        for k in 1..=2 {
            let (weights, z) = gibbs_weights(&tree, &model, t, k, 1e6).unwrap();
            let total: f64 = weights.iter().map(|w| w.1).sum();
            assert!((total - 1.0).abs() < 1e-10);
            for (tuple, g) in &weights {
                let spines = SpineAssignment::new(tuple.clone()).unwrap();
                let zt = zeta_tilde(&tree, &spines, &model, t).unwrap();
                let p = spine_probability(&tree, tuple, t).unwrap();
                assert!((g - zt * p / z).abs() < 1e-10, "{g} vs {}", zt * p / z);
            }
        }
    }
}

#[test]
fn enumeration_cap_is_enforced() {
    let tree = crate::tree::fixtures_for_tests::one_binary_branch();
    assert!(matches!(
        z_process(&tree, &bbm(), 1.0, 3, 7.0),
        Err(Error::EnumerationCap { .. })
    ));
}

#[test]
fn position_dependent_rate_routes_agree() {
    let mut model = bbm();
    model.rate = BranchRate::piecewise(vec![0.0], vec![0.5, 1.5], 1.5).unwrap();
    let t = 1.0;
    let opts = SimOptions::default();
    let direct = run_replicates(20_000, 24, &exec(), |rng, _| {
        Ok(simulate_p(&model, t, &opts, rng)?.alive_indices(t)?.len() as f64)
    })
    .unwrap();
    let spine = run_replicates(20_000, 25, &exec(), |rng, _| {
        let q = simulate_skeleton_q(&model, t, 1, QMode::SkeletonOnly, &opts, rng)?;
        Ok(many_to_few_weight(&q.weighted))
    })
    .unwrap();
    let (d, s) = (report(&direct), report(&spine));
    assert!(d.overlaps99(&s), "{d:?} {s:?}");
}

#[test]
fn rate_integral_is_exact_for_constant_rate() {
    let rate = BranchRate::constant(2.0).unwrap();
    assert_eq!(rate_integral(&rate, &[], 0.25, 1.0), 1.5);
}

#[test]
fn rate_integral_uses_trapezoids() {
    let rate = BranchRate::piecewise(vec![0.0], vec![0.0, 1.0], 1.0).unwrap();
    let path: Vec<PathPoint> = [(0.0, -1.0), (0.5, 1.0), (1.0, 1.0)]
        .iter()
        .map(|&(time, p)| PathPoint {
            time,
            state: MotionState::new(p, 1.0),
        })
        .collect();
    assert_relative_eq!(rate_integral(&rate, &path, 0.0, 1.0), 0.25 + 0.5);
}

#[test]
fn explosion_is_reported() {
    let opts = SimOptions {
        population_cap: 50,
        ..SimOptions::default()
    };
    let err = simulate_p(&bbm(), 10.0, &opts, &mut replicate_rng(26, 0)).unwrap_err();
    assert!(matches!(err, Error::Explosion { .. }));
}

#[test]
fn record_times_are_queryable() {
    let model = bbm();
    let tree = simulate_p(&model, 1.0, &with_record(0.5), &mut replicate_rng(27, 0)).unwrap();
    for i in tree.alive_indices(0.5).unwrap() {
        tree.record(i).state_at(0.5).unwrap();
    }
    assert!(z_process(&tree, &model, 0.5, 1, 1e6).is_ok());
}
