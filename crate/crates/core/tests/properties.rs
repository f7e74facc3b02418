mod common;

use jcc_core::augment::{augment, initial_aug_state};
use jcc_core::dp::{
    boole_recursion, boole_safety_bound, cheapest_max_safety_policy, evaluate_at,
    evaluate_policy_cost, lambda_recursion, max_safety_recursion, min_cost_recursion,
    safest_min_cost_policy,
};
use jcc_core::dual::{pareto_sweep, solve, Method, Status};
use jcc_core::model::{random_mdp, GriddedMdp, RandomMdpParams};
use jcc_core::sim::{brute_force_performance_set, lower_convex_envelope, rollout};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn instance(seed: u64, s: usize, a: usize, n: usize) -> GriddedMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_mdp(
        &mut rng,
        RandomMdpParams {
            num_states: s,
            num_actions: a,
            horizon: n,
            ..RandomMdpParams::default()
        },
    )
}

fn small() -> impl Strategy<Value = (GriddedMdp, usize)> {
    (
        any::<u64>(),
        1usize..=4,
        1usize..=3,
        1usize..=3,
        any::<prop::sample::Index>(),
    )
        .prop_map(|(seed, s, a, n, i)| (instance(seed, s, a, n), i.index(s)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_values_match_the_trajectory_tree((m, x0) in small(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = random_table(&mut rng, &m);
        let tree = tree_eval(&m, x0, |k, x, b| table_action(&m, &table, k, x, b));
        let (c, v) = evaluate_at(&m, &table_policy(&m, &table), initial_aug_state(&m, x0).unwrap()).unwrap();
        prop_assert!((c - tree.cost).abs() <= 1e-9 * tree.cost.max(1.0));
        prop_assert!((v - tree.safety).abs() <= 1e-12);
    }

    #[test]
    fn boole_bound_never_exceeds_exact_safety((m, x0) in small(), lambda in 0.0f64..100.0) {
        let (_, p) = boole_recursion(&m, lambda).unwrap();
        let (_, v) = evaluate_at(&m, &p, initial_aug_state(&m, x0).unwrap()).unwrap();
        prop_assert!(boole_safety_bound(&m, &p, x0).unwrap() <= v + 1e-12);
    }

    #[test]
    fn lambda_values_bound_every_policy((m, x0) in small(), lambda in 0.0f64..50.0) {
        let (j, p) = lambda_recursion(augment(&m), lambda).unwrap();
        let s0 = initial_aug_state(&m, x0).unwrap();
        let (c, v) = evaluate_at(&m, &p, s0).unwrap();
        prop_assert!((j.at(0, s0) - (c - lambda * v)).abs() <= 1e-9 * (1.0 + c.abs() + lambda));
        let best = enumerate_policies(&m, x0)
            .into_iter()
            .map(|(c, v)| c - lambda * v)
            .fold(f64::INFINITY, f64::min);
        prop_assert!((j.at(0, s0) - best).abs() <= 1e-9 * (1.0 + best.abs()));
    }

    #[test]
    fn border_policies_are_lexicographically_optimal((m, x0) in small()) {
        let s0 = initial_aug_state(&m, x0).unwrap();
        let all = enumerate_policies(&m, x0);
        let (v_max, _) = max_safety_recursion(&m);
        let v_high = v_max.at(0, s0);
        let (c_min, _) = min_cost_recursion(&m);
        let c_low = c_min.at(0, s0);
        let (c, v) = evaluate_at(&m, &cheapest_max_safety_policy(&m), s0).unwrap();
        prop_assert!((v - v_high).abs() <= 1e-12);
        for &(pc, pv) in &all {
            prop_assert!(pv <= v_high + 1e-12);
            if pv >= v_high - 1e-12 {
                prop_assert!(c <= pc + 1e-9);
            }
        }
        let (c, v) = evaluate_at(&m, &safest_min_cost_policy(&m), s0).unwrap();
        prop_assert!((c - c_low).abs() <= 1e-9);
        for &(pc, pv) in &all {
            prop_assert!(pc >= c_low - 1e-9);
            if pc <= c_low + 1e-9 {
                prop_assert!(v >= pv - 1e-12);
            }
        }
    }

    #[test]
    fn library_oracle_agrees_with_test_oracle((m, x0) in small(), alpha in 0.0f64..=1.0) {
        let mut ours: Vec<(f64, f64)> = enumerate_policies(&m, x0);
        let mut lib: Vec<(f64, f64)> = brute_force_performance_set(&m, x0)
            .unwrap()
            .into_iter()
            .map(|p| (p.cost, p.safety))
            .collect();
        prop_assert_eq!(ours.len(), lib.len());
        let key = |a: &(f64, f64), b: &(f64, f64)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1));
        ours.sort_by(key);
        lib.sort_by(key);
        for (a, b) in ours.iter().zip(&lib) {
            prop_assert!((a.0 - b.0).abs() <= 1e-9 && (a.1 - b.1).abs() <= 1e-12);
        }
        let points = brute_force_performance_set(&m, x0).unwrap();
        match (best_mixed_cost(&ours, alpha), lower_convex_envelope(&points, alpha)) {
            (Some(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-9),
            (None, Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn solve_reaches_the_hull((m, x0) in small(), t in 0.0f64..=1.0) {
        let all = enumerate_policies(&m, x0);
        let v_high = all.iter().map(|p| p.1).fold(0.0, f64::max);
        let alpha = t * v_high;
        let r = solve(&m, x0, alpha, 1e-9, 200).unwrap();
        prop_assert!(matches!(r.status, Status::Solved | Status::Trivial));
        prop_assert!(r.safety >= alpha - 1e-9);
        let best = best_mixed_cost(&all, alpha).unwrap();
        prop_assert!(r.cost <= best + 2e-9 && r.cost >= best - 1e-9);
    }

    #[test]
    fn sweep_columns_are_monotone((m, x0) in small(), mut lambdas in prop::collection::vec(0.0f64..1e3, 2..12)) {
        lambdas.sort_by(f64::total_cmp);
        for method in [Method::Exact] {
            let pts = pareto_sweep(&m, x0, &lambdas, method).unwrap();
            for w in pts.windows(2) {
                prop_assert!(w[1].safety >= w[0].safety - 1e-12);
                prop_assert!(w[1].cost >= w[0].cost - 1e-9);
            }
        }
    }

    #[test]
    fn cost_evaluation_is_linear_in_the_tree((m, x0) in small(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = random_table(&mut rng, &m);
        let costs = evaluate_policy_cost(&m, &table_policy(&m, &table)).unwrap();
        let tree = tree_eval(&m, x0, |k, x, b| table_action(&m, &table, k, x, b));
        let s0 = initial_aug_state(&m, x0).unwrap();
        prop_assert!((costs.at(0, s0) - tree.cost).abs() <= 1e-9 * tree.cost.max(1.0));
    }
}

#[test]
fn rollouts_track_dp_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let m = random_instance(&mut rng, 6, 3, 5);
        let x0 = 0;
        let all = tree_eval(&m, x0, |_, _, _| 0);
        let policy = jcc_core::dual::MixedPolicy::deterministic(table_policy(
            &m,
            &vec![0; m.horizon() * 2 * m.num_states()],
        ));
        let batch = rollout(&m, &policy, x0, 20_000, 4).unwrap();
        let n = batch.rollouts.len() as f64;
        let f = batch.rollouts.iter().filter(|r| r.safe).count() as f64 / n;
        let se = (all.safety * (1.0 - all.safety) / n).sqrt();
        assert!(
            (f - all.safety).abs() <= 4.0 * se + 1e-12,
            "{f} vs {}",
            all.safety
        );
        let mean = batch.rollouts.iter().map(|r| r.cost).sum::<f64>() / n;
        assert!(
            (mean - all.cost).abs() <= 0.05 * all.cost.max(1.0),
            "{mean} vs {}",
            all.cost
        );
    }
}
