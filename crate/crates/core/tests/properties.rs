use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use infotrap::dynamics::{self, SimulationConfig, TieBreakRule};
use infotrap::gaussian::{
    self, BeliefState, DivisionVector, Environment, FrequencyVector, GaussianPrior,
};
use infotrap::{oracle, spanning};

fn env_from(n: usize, k: usize, entries: &[f64]) -> Environment {
    let rows: Vec<Vec<f64>> = entries.chunks(k).take(n).map(|r| r.to_vec()).collect();
    let mut u = vec![0.0; k];
    u[0] = 1.0;
    Environment::with_target(&rows, u).unwrap()
}

fn prior_from(k: usize, entries: &[f64]) -> GaussianPrior {
    let a = DMatrix::from_row_slice(k, k, &entries[..k * k]);
    let cov = &a * a.transpose() + DMatrix::identity(k, k) * 0.1;
    GaussianPrior::new(DVector::zeros(k), (&cov + cov.transpose()) * 0.5).unwrap()
}

/// Environment, prior and a count vector.
fn instance() -> impl Strategy<Value = (Environment, GaussianPrior, Vec<u64>)> {
    (1usize..=5, 1usize..=3).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(-5.0f64..5.0, n * k),
            prop::collection::vec(-1.0f64..1.0, k * k),
            prop::collection::vec(0u64..8, n),
        )
            .prop_map(move |(c, a, q)| (env_from(n, k, &c), prior_from(k, &a), q))
    })
}

/// Environment in which the sources span the target.
fn spanning_env() -> impl Strategy<Value = Environment> {
    (1usize..=5, 1usize..=3)
        .prop_flat_map(|(n, k)| {
            prop::collection::vec(-5.0f64..5.0, n * k).prop_map(move |c| env_from(n, k, &c))
        })
        .prop_filter("sources must span the target", |env| {
            !spanning::enumerate_minimal_spanning_sets(env)
                .unwrap()
                .is_empty()
        })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn variance_decreases_with_every_observation((env, prior, q) in instance()) {
        let q = DivisionVector::new(q);
        let v = gaussian::posterior_variance(&env, &prior, &q).unwrap();
        for i in 0..env.num_sources() {
            let next = gaussian::posterior_variance(&env, &prior, &q.incremented(i)).unwrap();
            prop_assert!(next <= v + 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn variance_is_midpoint_convex(
        (env, prior, q) in instance(),
        extra in prop::collection::vec(0.0f64..6.0, 5),
    ) {
        let a: Vec<f64> = q.iter().map(|&x| x as f64).collect();
        let b: Vec<f64> = a.iter().zip(&extra).map(|(x, e)| (x + e) * 0.5).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let va = gaussian::posterior_variance_at(&env, &prior, &a).unwrap();
        let vb = gaussian::posterior_variance_at(&env, &prior, &b).unwrap();
        let vm = gaussian::posterior_variance_at(&env, &prior, &mid).unwrap();
        prop_assert!(va + vb >= 2.0 * vm - 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences(
        (env, prior, _q) in instance(),
        x in prop::collection::vec(0.5f64..10.0, 5),
    ) {
        let x = &x[..env.num_sources()];
        let g = gaussian::grad_posterior_variance(&env, &prior, x).unwrap();
        let v = gaussian::posterior_variance_at(&env, &prior, x).unwrap();
        let scale = max_abs(&g).max(v);
        let h = 1e-5;
        for j in 0..x.len() {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[j] += h;
            dn[j] -= h;
            let fd = (gaussian::posterior_variance_at(&env, &prior, &up).unwrap()
                - gaussian::posterior_variance_at(&env, &prior, &dn).unwrap())
                / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-6 * scale, "j={} fd={} g={}", j, fd, g[j]);
        }
    }

    #[test]
    fn second_derivative_bounded_by_first(
        (env, prior, _q) in instance(),
        x in prop::collection::vec(0.5f64..10.0, 5),
    ) {
        let x = &x[..env.num_sources()];
        let g = gaussian::grad_posterior_variance(&env, &prior, x).unwrap();
        let v = gaussian::posterior_variance_at(&env, &prior, x).unwrap();
        let scale = max_abs(&g).max(v);
        for j in 0..x.len() {
            if g[j].abs() <= 1e-6 * scale {
                continue;
            }
            let h = 1e-3 * x[j];
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[j] += h;
            dn[j] -= h;
            let d2 = (gaussian::posterior_variance_at(&env, &prior, &up).unwrap() - 2.0 * v
                + gaussian::posterior_variance_at(&env, &prior, &dn).unwrap())
                / (h * h);
            prop_assert!((d2 / g[j]).abs() <= 2.0 / x[j] * (1.0 + 1e-6) + 1e-4);
        }
    }

    #[test]
    fn discrete_reduction_sandwiched_by_gradient((env, prior, q) in instance()) {
        let q = DivisionVector::new(q);
        let v = gaussian::posterior_variance(&env, &prior, &q).unwrap();
        let g = gaussian::grad_posterior_variance(&env, &prior, &q.as_f64()).unwrap();
        for (j, gj) in g.iter().enumerate() {
            let drop = gaussian::variance_reduction(&env, &prior, &q, j).unwrap();
            let qj = q.counts()[j] as f64;
            let tol = 1e-12 * v;
            prop_assert!(drop <= gj.abs() + tol);
            prop_assert!(drop + tol >= qj / (qj + 1.0) * gj.abs());
        }
    }

    #[test]
    fn directional_derivative_bounded_below(
        env in spanning_env(),
        a in prop::collection::vec(-1.0f64..1.0, 9),
        q in prop::collection::vec(0u64..30, 5),
    ) {
        let prior = prior_from(env.num_states(), &a);
        let q = DivisionVector::new(q[..env.num_sources()].to_vec());
        let best = &spanning::enumerate_minimal_spanning_sets(&env).unwrap()[0];
        let v = gaussian::posterior_variance(&env, &prior, &q).unwrap();
        let g = gaussian::grad_posterior_variance(&env, &prior, &q.as_f64()).unwrap();
        let along: f64 = g.iter().zip(best.lambda_star.weights()).map(|(g, l)| g * l).sum();
        prop_assert!(along.abs() >= v * v / (best.phi * best.phi) * (1.0 - 1e-10));
    }

    #[test]
    fn asymptotic_variance_at_least_phi_squared(env in spanning_env(), w in prop::collection::vec(0.01f64..1.0, 5)) {
        let lam = FrequencyVector::normalized(w[..env.num_sources()].to_vec()).unwrap();
        let (phi_all, _) = spanning::phi_by_l1(&env).unwrap();
        let vstar = gaussian::asymptotic_variance(&env, &lam).unwrap();
        prop_assert!(vstar >= phi_all * phi_all * (1.0 - 1e-10));
    }

    #[test]
    fn asymptotic_variance_is_homogeneous(env in spanning_env(), w in prop::collection::vec(0.01f64..1.0, 5), c in 0.01f64..100.0) {
        let lam = FrequencyVector::normalized(w[..env.num_sources()].to_vec()).unwrap();
        let v = gaussian::asymptotic_variance(&env, &lam).unwrap();
        let vc = gaussian::asymptotic_variance(&env, &lam.scaled(c).unwrap()).unwrap();
        prop_assert!((vc - v / c).abs() <= 1e-12 * (v / c));
    }

    #[test]
    fn l1_program_matches_enumeration(env in spanning_env()) {
        let sets = spanning::enumerate_minimal_spanning_sets(&env).unwrap();
        let (phi, beta) = spanning::phi_by_l1(&env).unwrap();
        prop_assert!((phi - sets[0].phi).abs() <= 1e-9 * phi);
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        prop_assert!((l1 - phi).abs() <= 1e-9 * phi);
        let rebuilt = env.coefficients().transpose() * DVector::from_vec(beta);
        let u = env.single_target().unwrap();
        prop_assert!((rebuilt - u).norm() <= 1e-9 * u.norm().max(1.0));
    }

    #[test]
    fn lambda_star_is_on_the_simplex(env in spanning_env()) {
        for set in spanning::enumerate_minimal_spanning_sets(&env).unwrap() {
            prop_assert!(set.lambda_star.is_simplex_normalized());
            prop_assert_eq!(set.lambda_star.support(), set.indices.clone());
        }
    }

    #[test]
    fn optimal_frequency_attains_phi_squared(env in spanning_env()) {
        let best = &spanning::enumerate_minimal_spanning_sets(&env).unwrap()[0];
        let v = gaussian::asymptotic_variance(&env, &best.lambda_star).unwrap();
        prop_assert!((v - best.phi * best.phi).abs() <= 1e-9 * v);
    }

    #[test]
    fn rounded_frequencies_sum_to_t(w in prop::collection::vec(0.0f64..1.0, 1..6), t in 0u64..500) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let lam = FrequencyVector::normalized(w).unwrap();
        let q = oracle::round_frequencies(&lam, t);
        prop_assert_eq!(q.total(), t);
        for (n, l) in q.counts().iter().zip(lam.weights()) {
            prop_assert!((*n as f64 - l * t as f64).abs() < 1.0 + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn outside_coordinates_sum_below_one(c in prop::collection::vec(-5.0f64..5.0, 15)) {
        let env = env_from(5, 3, &c);
        let report = spanning::check_assumptions(&env).unwrap();
        prop_assume!(report.unique_minimizer && report.strong_linear_independence && report.all_minimal_sets_size_k);
        let best = &spanning::enumerate_minimal_spanning_sets(&env).unwrap()[0];
        let sums = spanning::outside_coordinate_sums(&env, &best.indices).unwrap();
        prop_assert_eq!(sums.len(), 2);
        for (_, s) in sums {
            prop_assert!(s.abs() < 1.0);
        }
    }

    #[test]
    fn perturbation_bound_holds(c in prop::collection::vec(-5.0f64..5.0, 12), w in prop::collection::vec(0.01f64..1.0, 4)) {
        let env = env_from(4, 3, &c);
        let report = spanning::check_assumptions(&env).unwrap();
        prop_assume!(report.unique_minimizer && report.all_minimal_sets_size_k);
        let best = &spanning::enumerate_minimal_spanning_sets(&env).unwrap()[0];
        let eta = spanning::perturbation_eta(&env).unwrap();
        let lam = FrequencyVector::normalized(w).unwrap();
        let rho: f64 = (0..4)
            .filter(|i| best.indices.binary_search(i).is_err())
            .map(|i| lam.weights()[i])
            .sum();
        let v = gaussian::asymptotic_variance(&env, &lam).unwrap();
        let bound = spanning::perturbation_lower_bound(best.phi, eta, rho);
        prop_assert!(v >= bound * (1.0 - 1e-9), "v={} bound={} eta={} rho={}", v, bound, eta, rho);
    }

    #[test]
    fn scaled_variance_converges_at_rate_one_over_t(env in spanning_env(), a in prop::collection::vec(-1.0f64..1.0, 9)) {
        let prior = prior_from(env.num_states(), &a);
        let best = &spanning::enumerate_minimal_spanning_sets(&env).unwrap()[0];
        // The 1/t regime starts once the data outweigh the prior.
        let info = env.information_matrix(best.lambda_star.weights()) * 100.0;
        let prior_scale = prior.precision().clone().symmetric_eigen().eigenvalues.max();
        prop_assume!(best.size() == env.num_states());
        prop_assume!(info.symmetric_eigen().eigenvalues.min() >= 10.0 * prior_scale);
        let limit = best.phi * best.phi;
        let scaled_err = |t: u64| {
            let q = oracle::round_frequencies(&best.lambda_star, t);
            let v = gaussian::posterior_variance(&env, &prior, &q).unwrap();
            (t as f64 * v - limit).abs() * t as f64
        };
        // First-order constant: prior precision plus at most one count of
        // rounding per source, both seen through x = M⁻¹u.
        let m = env.information_matrix(best.lambda_star.weights());
        let x = m.cholesky().unwrap().solve(env.single_target().unwrap());
        let rounding: f64 = (0..env.num_sources()).map(|i| env.source(i).dot(&x).powi(2)).sum();
        let c = x.dot(&(prior.precision() * &x)) + rounding;
        for t in [100, 200, 400] {
            prop_assert!(scaled_err(t) <= 1.5 * c, "t={} C={} got {}", t, c, scaled_err(t));
        }
    }

    #[test]
    fn simulation_is_deterministic(env in spanning_env(), a in prop::collection::vec(-1.0f64..1.0, 9), seed in any::<u64>()) {
        let prior = prior_from(env.num_states(), &a);
        let cfg = SimulationConfig::new(50).with_tie_break(TieBreakRule::Random(seed));
        let a = dynamics::simulate(&env, &prior, &cfg).unwrap();
        let b = dynamics::simulate(&env, &prior, &cfg).unwrap();
        prop_assert_eq!(a.choices, b.choices);
        prop_assert_eq!(a.variance_path, b.variance_path);
    }

    #[test]
    fn greedy_choice_invariant_to_weight_scaling(env in spanning_env(), a in prop::collection::vec(-1.0f64..1.0, 9), c in 0.01f64..100.0) {
        let prior = prior_from(env.num_states(), &a);
        let cfg = SimulationConfig::new(40);
        let a = dynamics::simulate(&env, &prior, &cfg).unwrap();
        let b = dynamics::simulate(&env.with_scaled_weights(c).unwrap(), &prior, &cfg).unwrap();
        prop_assert_eq!(a.choices, b.choices);
    }

    #[test]
    fn oracle_beats_rounded_benchmark(env in spanning_env(), a in prop::collection::vec(-1.0f64..1.0, 9), t in 1u64..12) {
        let prior = prior_from(env.num_states(), &a);
        let best = &spanning::enumerate_minimal_spanning_sets(&env).unwrap()[0];
        let found = oracle::optimal_division(&env, &prior, t).unwrap();
        let rounded = gaussian::posterior_variance(&env, &prior, &oracle::round_frequencies(&best.lambda_star, t)).unwrap();
        prop_assert!(found.value <= rounded * (1.0 + 1e-12));
        prop_assert_eq!(found.counts.total(), t);
    }

    #[test]
    fn incremental_precision_matches_rebuild((env, prior, _q) in instance(), picks in prop::collection::vec(0usize..5, 0..60)) {
        let mut state = BeliefState::from_prior(&prior, false);
        let mut counts = vec![0.0; env.num_sources()];
        for p in picks {
            let i = p % env.num_sources();
            state.observe(&env.source(i), 1.0);
            counts[i] += 1.0;
        }
        let scale = gaussian::BeliefState::from_counts(&env, &prior, &counts).unwrap().precision().amax();
        prop_assert!(state.reconstruction_residual(&env, &prior, &counts) <= 1e-9 * scale.max(1.0));
    }
}
