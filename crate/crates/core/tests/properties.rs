use proptest::prelude::*;
use uncoupled::baselines::max_weight_oracle;
use uncoupled::chain::arborescence::exhaustive_min_in_tree;
use uncoupled::chain::stationary::closed_class;
use uncoupled::chain::{check_closed_forms, stochastic_potentials, ChainAlgorithm, ChainModel, HistoryCount, STATE_CAP};
use uncoupled::gnum::{run_gnum, GNumConfig};
use uncoupled::oracles::{brute_force_gnum_optimum, concave_optimum, dual_value, CONCAVE_MAX_ITERS, MULTISET_CAP};
use uncoupled::trace::config_hash;
use uncoupled::{GameEnvironment, OccupationMeasure, Scale, UtilitySpec};

fn table(sizes: Vec<usize>) -> impl Strategy<Value = GameEnvironment> {
    let n = sizes.len();
    let p: usize = sizes.iter().product();
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), p)
        .prop_map(move |rows| GameEnvironment::from_table(sizes.clone(), rows).unwrap())
}

fn small_game() -> impl Strategy<Value = GameEnvironment> {
    prop_oneof![table(vec![2, 2]), table(vec![2, 3]), table(vec![3, 2]), table(vec![2, 2, 2])]
}

fn measure(p: usize) -> impl Strategy<Value = OccupationMeasure> {
    prop::collection::vec(0.0f64..1.0, p).prop_map(|w| {
        let total: f64 = w.iter().sum::<f64>().max(1e-12);
        OccupationMeasure::new(w.iter().map(|x| x / total).collect())
    })
}

fn logs(n: usize) -> Vec<UtilitySpec> {
    vec![UtilitySpec::log1p(); n]
}

fn sum_log(rates: &[f64]) -> f64 {
    rates.iter().map(|r| r.ln_1p()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn average_payoff_is_linear_in_the_measure(
        env in table(vec![2, 3]),
        m1 in measure(6),
        m2 in measure(6),
        alpha in 0.0f64..1.0,
    ) {
        let mixed = env.average_payoff(&m1.mix(&m2, alpha)).unwrap();
        let a = env.average_payoff(&m1).unwrap();
        let b = env.average_payoff(&m2).unwrap();
        for i in 0..2 {
            prop_assert!((mixed[i] - (alpha * a[i] + (1.0 - alpha) * b[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn max_weight_is_invariant_to_positive_scaling(
        env in small_game(),
        lambda in prop::collection::vec(0.0f64..2.0, 3),
        scale in 0.1f64..10.0,
    ) {
        let n = env.num_nodes();
        let lambda = &lambda[..n];
        let scaled: Vec<f64> = lambda.iter().map(|l| l * scale).collect();
        let a = max_weight_oracle(&env, lambda, 1 << 20).unwrap();
        let b = max_weight_oracle(&env, &scaled, 1 << 20).unwrap();
        prop_assert!((b.value - scale * a.value).abs() <= 1e-9 * scale.max(1.0));
        let at = env.payoffs_at(b.index).unwrap();
        let weight: f64 = at.iter().zip(lambda).map(|(r, l)| r * l).sum();
        prop_assert!((weight - a.value).abs() <= 1e-9);
    }

    #[test]
    fn dual_bounds_the_relaxed_optimum(
        env in small_game(),
        lambda in prop::collection::vec(0.0f64..2.0, 3),
    ) {
        let n = env.num_nodes();
        let u = logs(n);
        let primal = concave_optimum(&env, &u, Scale::Natural, 1e-9, CONCAVE_MAX_ITERS).unwrap().value;
        prop_assert!(dual_value(&env, &u, &lambda[..n]).unwrap() >= primal - 1e-9);
    }

    #[test]
    fn window_optima_grow_along_divisors(env in table(vec![2, 2])) {
        let u = logs(2);
        let v: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&k| brute_force_gnum_optimum(&env, &u, k, Scale::Natural, MULTISET_CAP).unwrap().value)
            .collect();
        let relaxed = concave_optimum(&env, &u, Scale::Natural, 1e-10, CONCAVE_MAX_ITERS).unwrap().value;
        prop_assert!(v[0] <= v[1] + 1e-12 && v[1] <= v[2] + 1e-12);
        prop_assert!(v[2] <= relaxed + 1e-8);
    }

    #[test]
    fn single_window_optimum_is_the_best_profile(env in small_game()) {
        let u = logs(env.num_nodes());
        let opt = brute_force_gnum_optimum(&env, &u, 1, Scale::Natural, MULTISET_CAP).unwrap();
        let direct = (0..env.num_profiles())
            .map(|i| sum_log(&env.payoffs_at(i).unwrap()))
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((opt.value - direct).abs() < 1e-12);
        prop_assert!(opt.best.iter().all(|h| (sum_log(&env.payoffs_at(h[0]).unwrap()) - direct).abs() < 1e-12));
    }

    #[test]
    fn relaxed_optimum_is_feasible_and_beats_a_mixture_grid(env in table(vec![2, 2])) {
        let u = logs(2);
        let opt = concave_optimum(&env, &u, Scale::Natural, 1e-10, CONCAVE_MAX_ITERS).unwrap();
        prop_assert!(opt.measure.iter().all(|&p| p >= -1e-12));
        prop_assert!((opt.measure.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let rates = env.average_payoff(&OccupationMeasure::new(opt.measure.clone())).unwrap();
        for (a, b) in rates.iter().zip(&opt.rates) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert!((sum_log(&rates) - opt.value).abs() < 1e-9);
        let rows: Vec<Vec<f64>> = (0..4).map(|i| env.payoffs_at(i).unwrap()).collect();
        let steps = 40;
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=steps - i {
                for k in 0..=steps - i - j {
                    let w = [i, j, k, steps - i - j - k].map(|x| x as f64 / steps as f64);
                    let r: Vec<f64> = (0..2).map(|n| (0..4).map(|p| w[p] * rows[p][n]).sum()).collect();
                    grid_best = grid_best.max(sum_log(&r));
                }
            }
        }
        prop_assert!(opt.value >= grid_best - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn transition_probabilities_sit_inside_their_resistance_bracket(env in table(vec![2, 2]), pick in 0usize..1000) {
        let model = ChainModel::new(&env, &logs(2), ChainAlgorithm::Gnum { window: 1 }, None, STATE_CAP).unwrap();
        let x = pick % model.num_states();
        for eps in [1e-2, 1e-4] {
            let row = &model.dense_matrix(eps)[x];
            for (y, &p) in row.iter().enumerate() {
                let terms = model.transition_terms(x, y);
                match model.resistance(x, y) {
                    None => prop_assert_eq!(p, 0.0),
                    Some(r) => {
                        let upper: f64 = terms.iter().map(|t| t.coefficient).sum::<f64>() * eps.powf(r);
                        let lower = terms
                            .iter()
                            .filter(|t| (t.exponent - r).abs() < 1e-12)
                            .map(|t| t.probability(eps))
                            .fold(0.0, f64::max);
                        prop_assert!(p <= upper * (1.0 + 1e-9) && p >= lower * (1.0 - 1e-9), "{x}->{y}: {lower} <= {p} <= {upper}");
                    }
                }
            }
        }
    }

    #[test]
    fn chain_potentials_match_exhaustive_trees(env in table(vec![2, 2])) {
        let model = ChainModel::new(&env, &logs(2), ChainAlgorithm::Gnum { window: 1 }, None, STATE_CAP).unwrap();
        prop_assert_eq!(model.num_states(), 16);
        let edges = model.resistance_edges();
        let fast = stochastic_potentials(&model);
        for (root, g) in fast.iter().enumerate() {
            let slow = exhaustive_min_in_tree(16, &edges, root);
            match (g, slow) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9, "root {root}: {a} vs {b}"),
                (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn orbit_counted_closed_forms_hold_on_random_games(env in table(vec![2, 2]), k in 1usize..=2) {
        prop_assume!(env.check_interdependence().unwrap().holds);
        let model = ChainModel::new(&env, &logs(2), ChainAlgorithm::Gnum { window: k }, None, STATE_CAP).unwrap();
        let check = check_closed_forms(&model, &stochastic_potentials(&model), HistoryCount::RotationOrbits, 1e-9);
        prop_assert!(check.passed, "{check:?}");
    }
}

#[test]
fn long_run_visits_exactly_the_closed_class() {
    let env = GameEnvironment::two_node_example();
    let u = logs(2);
    let model = ChainModel::new(&env, &u, ChainAlgorithm::Gnum { window: 1 }, None, STATE_CAP).unwrap();
    let class = closed_class(&model).unwrap();
    let trace = run_gnum(&env, &GNumConfig::new(0.3, 1, 2_000_000, 11), &u).unwrap();
    assert_eq!(trace.slot_stats.unwrap().distinct_states_visited, Some(class.len()));
}

#[test]
fn identical_seeds_give_byte_identical_csv() {
    let env = GameEnvironment::two_node_example();
    let u = logs(2);
    let cfg = GNumConfig::new(0.1, 2, 5_000, 3).with_stride(1);
    let csv = |cfg: &GNumConfig| {
        let mut out = Vec::new();
        run_gnum(&env, cfg, &u).unwrap().write_csv(&mut out).unwrap();
        out
    };
    let a = csv(&cfg);
    assert_eq!(a, csv(&cfg));
    assert!(!a.is_empty());
    assert_ne!(a, csv(&GNumConfig::new(0.1, 2, 5_000, 4).with_stride(1)));
}

#[test]
fn config_hash_survives_a_serde_round_trip() {
    let env = GameEnvironment::two_node_example();
    let u = logs(2);
    let trace = run_gnum(&env, &GNumConfig::new(0.2, 1, 100, 5), &u).unwrap();
    let text = serde_json::to_string(&trace.meta.config).unwrap();
    let back: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(config_hash(&back), trace.meta.config_hash);
    let cfg: GNumConfig = serde_json::from_value(back).unwrap();
    let again = run_gnum(&env, &cfg, &u).unwrap();
    assert!(trace.same_run(&again));
}
