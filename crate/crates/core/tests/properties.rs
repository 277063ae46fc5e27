mod common;

use common::{monotone_theta, random_theta, rng};
use monomdp::generator::{random_monotone_mdp, GeneratorSpec};
use monomdp::isotonic::{penalty, project_affine, AffinePolicy, RegularizedProblem};
use monomdp::lp::{build_lp, vectorize, LpLayout};
use monomdp::policy::{
    conditional_to_occupation, evaluate_expected_cost, is_monotone, occupation_to_conditional,
    propagate_distribution,
};
use monomdp::{ConditionalPolicy, OccupationMeasure};
use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use rand::Rng;

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..7, 1usize..4, 1usize..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn positive_occupation_round_trips((nx, nu, horizon) in dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let pi = Array3::from_shape_simple_fn((horizon + 1, nx, nu), || 0.01 + r.gen::<f64>());
        let measure = OccupationMeasure::new(pi.clone());
        let (theta, p) = occupation_to_conditional(&measure, None);
        let back = conditional_to_occupation(&theta, &p);
        for (a, b) in back.pi().iter().zip(&pi) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn propagation_conserves_mass((nx, nu, horizon) in dims(), seed in 0u64..1000) {
        let model = random_monotone_mdp(&GeneratorSpec::new(nx, nu, horizon, seed)).unwrap();
        let theta = ConditionalPolicy::new(random_theta(&mut rng(seed), nx, nu, horizon)).unwrap();
        let p = propagate_distribution(&model, &theta);
        for row in p.p().axis_iter(Axis(0)) {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn forward_cost_matches_backward_recursion((nx, nu, horizon) in dims(), seed in 0u64..1000) {
        let model = random_monotone_mdp(&GeneratorSpec::new(nx, nu, horizon, seed)).unwrap();
        let theta = random_theta(&mut rng(seed ^ 7), nx, nu, horizon);
        let forward = evaluate_expected_cost(&model, &ConditionalPolicy::new(theta.clone()).unwrap());
        prop_assert!((forward - common::backward_cost(&model, &theta)).abs() <= 1e-9);
    }

    #[test]
    fn penalty_vanishes_exactly_on_monotone((nx, nu, horizon) in dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let random = random_theta(&mut r, nx, nu, horizon);
        prop_assert_eq!(penalty(&random, 1.0) == 0.0, is_monotone(random.view(), 0.0));
        let mono = monotone_theta(&mut r, nx, nu, horizon);
        prop_assert!(is_monotone(mono.view(), 0.0));
        prop_assert_eq!(penalty(&mono, 3.0), 0.0);
    }

    #[test]
    fn penalty_is_homogeneous_in_lambda((nx, nu, horizon) in dims(), seed in any::<u64>(), lambda in 0.0f64..100.0) {
        let theta = random_theta(&mut rng(seed), nx, nu, horizon);
        let once = penalty(&theta, lambda);
        prop_assert!((penalty(&theta, 2.0 * lambda) - 2.0 * once).abs() <= 1e-12 * once.max(1.0));
    }

    #[test]
    fn affine_projection_is_idempotent((nx, nu, horizon) in dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let raw = Array3::from_shape_simple_fn((horizon + 1, nx, nu), || 4.0 * r.gen::<f64>() - 2.0);
        let once = project_affine(raw.clone());
        for (row, before) in once.theta().lanes(Axis(2)).into_iter().zip(raw.lanes(Axis(2))) {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            // pure shift: differences between entries are preserved
            let shift = before[0] - row[0];
            for (a, b) in row.iter().zip(before.iter()) {
                prop_assert!((b - a - shift).abs() <= 1e-12);
            }
        }
        let twice = project_affine(once.theta().clone());
        for (a, b) in twice.theta().iter().zip(once.theta()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn subgradient_steps_keep_rows_affine(seed in 0u64..500, steps in 1u64..30, lambda in 0.0f64..20.0) {
        let model = random_monotone_mdp(&GeneratorSpec::new(4, 3, 5, seed)).unwrap();
        let start = ConditionalPolicy::new(random_theta(&mut rng(seed), 4, 3, 5)).unwrap();
        let p = propagate_distribution(&model, &start);
        let problem = RegularizedProblem::new(&model, p, lambda).unwrap();
        let mut it = AffinePolicy::from(start);
        for n in 1..=steps {
            it = problem.step(&it, n).unwrap();
            for row in it.theta().lanes(Axis(2)) {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn flat_index_is_a_bijection((nx, nu, horizon) in dims()) {
        let layout = LpLayout { n_states: nx, n_actions: nu, horizon };
        let mut hit = vec![false; layout.n_decision()];
        for k in 0..=horizon {
            for x in 1..=nx {
                for u in 1..=nu {
                    let i = layout.flat_index(x, u, k).unwrap();
                    prop_assert!(!hit[i]);
                    hit[i] = true;
                    prop_assert_eq!(layout.unflatten(i).unwrap(), (x, u, k));
                }
            }
        }
        prop_assert!(hit.into_iter().all(|h| h));
    }

    #[test]
    fn feasible_points_have_unit_mass_and_matching_cost((nx, nu, horizon) in dims(), seed in 0u64..1000) {
        let model = random_monotone_mdp(&GeneratorSpec::new(nx, nu, horizon, seed)).unwrap();
        let mut r = rng(seed);
        let table = Array2::from_shape_simple_fn((horizon + 1, nx), || r.gen_range(1..=nu));
        let theta = ConditionalPolicy::deterministic(&table, nu).unwrap();
        let p = propagate_distribution(&model, &theta);
        let pi = conditional_to_occupation(&theta, &p);
        let alpha = vectorize(&pi);
        let lp = build_lp(&model).unwrap();
        prop_assert!(lp.equality_residual(&alpha).iter().all(|v| v.abs() <= 1e-12));
        for mass in pi.mass_per_time() {
            prop_assert!((mass - 1.0).abs() <= 1e-9);
        }
        prop_assert!((lp.objective(&alpha) - evaluate_expected_cost(&model, &theta)).abs() <= 1e-9);
    }
}
