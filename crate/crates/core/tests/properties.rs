use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use confident_control::adaptive::{adaptive_policy, AdaptiveConfig, LambdaSource};
use confident_control::config::RunConfig;
use confident_control::experiments::results::{ResultRow, ResultTable};
use confident_control::experiments::sign_test_p;
use confident_control::guarantees::{opt_cost_time_only, theorem_constants};
use confident_control::linalg::{synthesize, LinearModel};
use confident_control::plant::{simulate, Disturbance};
use confident_control::policy::{epsilon_consistent_blackbox, lqr_policy, BiasMode, LinearFeedback, Policy};

fn matrix(rows: usize, cols: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(range, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn vector(n: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(range, n).prop_map(DVector::from_vec)
}

/// A 2-state, 1-input plant with a controllable pair.
fn plant() -> impl Strategy<Value = LinearModel> {
    (matrix(2, 2, -1.2..1.2), matrix(2, 1, -2.0..2.0))
        .prop_filter("controllable", |(a, b)| {
            let ctrb = DMatrix::from_columns(&[b.column(0).into_owned(), (a * b).column(0).into_owned()]);
            ctrb.determinant().abs() > 1e-2
        })
        .prop_map(|(a, b)| LinearModel::new(a, b, DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap())
}

fn bias_mode() -> impl Strategy<Value = BiasMode> {
    prop_oneof![Just(BiasMode::Rotation), Just(BiasMode::Scaling), Just(BiasMode::OffsetGain)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_riccati_matches_quadratic_root(a in -2.0..2.0f64, b in 0.2..2.0f64, q in 0.1..5.0f64, r in 0.1..5.0f64) {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let syn = synthesize(&LinearModel::new(m(a), m(b), m(q), m(r)).unwrap()).unwrap();
        // b²p² + (r(1−a²) − q b²) p − q r = 0, positive root
        let lin = r * (1.0 - a * a) - q * b * b;
        let p = (-lin + (lin * lin + 4.0 * b * b * q * r).sqrt()) / (2.0 * b * b);
        prop_assert!((syn.p[(0, 0)] - p).abs() <= 1e-9 * p.max(1.0));
    }

    #[test]
    fn epsilon_consistent_stays_within_epsilon(
        gain in matrix(2, 3, -3.0..3.0),
        eps in 0.0..2.0f64,
        mode in bias_mode(),
        seed in any::<u64>(),
        x in vector(3, -10.0..10.0),
    ) {
        let mut inner = LinearFeedback::new(gain.clone(), "inner");
        let mut black = epsilon_consistent_blackbox(LinearFeedback::new(gain, "inner"), 3, 2, eps, mode, seed);
        let gap = (black.act(0, &x) - inner.act(0, &x)).norm();
        prop_assert!(gap <= eps * x.norm() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn external_confidence_sequences_keep_invariants(
        model in plant(),
        seq in prop::collection::vec(-0.5..1.5f64, 40),
        alpha in 0.001..0.5f64,
        cap in prop::option::of(0.01..0.5f64),
        x0 in vector(2, -3.0..3.0),
    ) {
        let syn = synthesize(&model).unwrap();
        let config = AdaptiveConfig { alpha, source: LambdaSource::External(seq), decrease_cap: cap, ..Default::default() };
        let black = LinearFeedback::new(-syn.k.clone(), "flipped");
        let mut pol = adaptive_policy(&syn, black, lqr_policy(&syn), config);
        simulate(&syn.model, &Disturbance::new(2, vec![]), &mut pol, &x0, 40);
        let c = pol.confidence().unwrap();
        prop_assert_eq!(c.lambdas[0], 1.0);
        prop_assert!(c.is_monotone());
        prop_assert!(c.lambdas.iter().all(|l| (0.0..=1.0).contains(l)));
    }

    #[test]
    fn no_feedback_law_beats_the_optimum(
        model in plant(),
        gain in matrix(1, 2, -3.0..3.0),
        w in prop::collection::vec(vector(2, -1.0..1.0), 30),
        x0 in vector(2, -2.0..2.0),
    ) {
        let syn = synthesize(&model).unwrap();
        let opt = opt_cost_time_only(&syn, &w, &x0).value();
        for mut pol in [Box::new(LinearFeedback::new(gain, "random")) as Box<dyn Policy>, Box::new(lqr_policy(&syn))] {
            let traj = simulate(&syn.model, &Disturbance::new(2, w.clone()), &mut pol, &x0, w.len());
            prop_assert!(traj.cost_with_terminal(&syn.p) >= opt * (1.0 - 1e-9));
        }
    }

    #[test]
    fn constants_grow_with_residual_and_inconsistency(model in plant(), c1 in 0.0..1e-3f64, dc in 1e-6..1e-3f64, e1 in 0.0..0.1f64, de in 1e-4..0.1f64) {
        let syn = synthesize(&model).unwrap();
        let base = theorem_constants(&syn, c1, e1);
        let more_c = theorem_constants(&syn, c1 + dc, e1);
        let more_e = theorem_constants(&syn, c1, e1 + de);
        prop_assert!(more_c.gamma > base.gamma);
        if let (Some(m0), Some(mc), Some(me)) = (base.mu, more_c.mu, more_e.mu) {
            prop_assert!(mc >= m0);
            prop_assert!(me >= m0);
        }
    }

    #[test]
    fn sign_test_is_a_decreasing_probability(n in 1usize..40, wins in 0usize..40) {
        let wins = wins.min(n);
        let p = sign_test_p(wins, n);
        prop_assert!((0.0..=1.0).contains(&p));
        if wins < n {
            prop_assert!(sign_test_p(wins + 1, n) < p);
        }
        prop_assert_eq!(sign_test_p(0, n), 1.0);
    }

    #[test]
    fn effective_config_reparses_to_the_same_values(seed in any::<u64>(), alpha in 1e-6..1.0f64, thetas in prop::collection::vec(-3.0..3.0f64, 1..6)) {
        let listed: Vec<String> = thetas.iter().map(|t| t.to_string()).collect();
        let text = format!("seed = {seed}\n[adaptive]\nalpha = {alpha}\n[sweep]\nthetas = {}\n", listed.join(", "));
        let cfg = RunConfig::parse(&text).unwrap();
        cfg.get::<u64>("run", "seed", 0).unwrap();
        cfg.get::<f64>("adaptive", "alpha", 0.0).unwrap();
        cfg.get_list::<f64>("sweep", "thetas", &[]).unwrap();
        cfg.get::<usize>("sweep", "runs", 10).unwrap();
        let again = RunConfig::parse(&cfg.effective()).unwrap();
        prop_assert_eq!(again.get::<u64>("run", "seed", 0).unwrap(), seed);
        prop_assert_eq!(again.get::<f64>("adaptive", "alpha", 0.0).unwrap(), alpha);
        prop_assert_eq!(again.get_list::<f64>("sweep", "thetas", &[]).unwrap(), thetas);
        prop_assert_eq!(again.get::<usize>("sweep", "runs", 0).unwrap(), 10);
    }

    #[test]
    fn result_tables_round_trip_through_csv(values in prop::collection::vec((any::<f64>().prop_filter("finite", |v| v.is_finite()), any::<bool>(), prop::option::of(0.0..1.0f64)), 1..20)) {
        let rows: Vec<ResultRow> = values
            .iter()
            .enumerate()
            .map(|(i, &(value, diverged, lambda))| ResultRow {
                point: format!("p{}", i % 3),
                policy: "adaptive".into(),
                seed: i as u64,
                metric: "cost".into(),
                value,
                diverged,
                lambda_final: lambda,
                lambda_mean: lambda,
                ratio: None,
            })
            .collect();
        let table = ResultTable { rows };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = ResultTable::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.rows, table.rows);
    }
}
