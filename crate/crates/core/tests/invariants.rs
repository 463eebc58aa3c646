use choicelab_core::baselines::{rf_predict, rf_train, ForestConfig};
use choicelab_core::data::{encode_features, make_split, split_indices, Choice, SplitSpec};
use choicelab_core::harness::evaluate;
use choicelab_core::nnkit::{Classifier, Matrix, Standardizer};
use choicelab_core::prospect::{alpha_from_raw, choice_prob, raw_from_alpha, subjective_value, user_log_likelihood, SVParams};
use choicelab_core::repr::{user_text_vector, Architecture, FusionInput, FusionModel, RepKind, WordVectorTable};
use choicelab_core::{ChoiceRecord, Dataset, GambleOption, GambleScenario, Recipient, UserId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn recipient() -> impl Strategy<Value = Recipient> {
    prop_oneof![Just(Recipient::Own), Just(Recipient::Other)]
}

fn option() -> impl Strategy<Value = GambleOption> {
    (-50.0..50.0f64, 0.0..=1.0f64, recipient()).prop_map(|(v, p, r)| GambleOption::new(v, p, r).unwrap())
}

fn scenario() -> impl Strategy<Value = GambleScenario> {
    (option(), option()).prop_map(|(a, b)| GambleScenario::new(a, b))
}

fn record() -> impl Strategy<Value = ChoiceRecord> {
    (0..6u8, scenario(), any::<bool>()).prop_map(|(u, s, c)| ChoiceRecord {
        user_id: UserId(format!("u{u}")),
        scenario: s,
        choice: Choice::from_label(c),
    })
}

fn params() -> impl Strategy<Value = SVParams> {
    (0.01..1.49f64, 0.01..1.49f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(ag, al, bs, bo)| SVParams {
        alpha_gain: ag,
        alpha_loss: al,
        beta_self: bs,
        beta_other: bo,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn features_have_six_finite_entries(s in scenario()) {
        let f = encode_features(&s);
        prop_assert_eq!(f.len(), 6);
        prop_assert!(f.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn split_partitions_and_is_deterministic(n in 5usize..400, f in 0.05..0.95f64, seed in any::<u64>()) {
        let spec = SplitSpec { train_fraction: f, test_folds: 2, seed };
        let (tr, va, te) = split_indices(n, &spec).unwrap();
        prop_assert!((tr.len() as f64 - f * n as f64).abs() <= 0.5 + 1e-9);
        let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, &spec).unwrap(), (tr, va, te));
    }

    #[test]
    fn record_split_matches_index_split(records in prop::collection::vec(record(), 5..60), seed in any::<u64>()) {
        let ds = Dataset::from_records(records.clone());
        let spec = SplitSpec { seed, ..SplitSpec::default() };
        let split = make_split(&ds, &spec).unwrap();
        let (tr, va, te) = split_indices(records.len(), &spec).unwrap();
        prop_assert_eq!(split.train, tr.iter().map(|&i| records[i].clone()).collect::<Vec<_>>());
        prop_assert_eq!(split.val, va.iter().map(|&i| records[i].clone()).collect::<Vec<_>>());
        prop_assert_eq!(split.test, te.iter().map(|&i| records[i].clone()).collect::<Vec<_>>());
    }

    #[test]
    fn accuracy_bookkeeping_is_exact(
        pairs in prop::collection::vec((record(), 0.0..=1.0f64), 1..200)
    ) {
        let (records, probs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let m = evaluate(&probs, &records).unwrap();
        let all = m.all();
        prop_assert_eq!(all.total, records.len());
        prop_assert_eq!(all.correct, m.gains.correct + m.losses.correct);
        let lhs = m.accuracy_all() * all.total as f64;
        let rhs = m.accuracy_gains() * m.gains.total as f64 + m.accuracy_losses() * m.losses.total as f64;
        prop_assert!((lhs - rhs).abs() < 1e-9);
        for a in [m.accuracy_all(), m.accuracy_gains(), m.accuracy_losses()] {
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn alpha_transform_round_trips(raw in -10.0..10.0f64, d in 1e-3..5.0f64, a in 1e-3..1.499f64) {
        let x = alpha_from_raw(raw);
        prop_assert!(x > 0.0 && x < 1.5);
        prop_assert!(alpha_from_raw(raw + d) > x);
        prop_assert!((raw_from_alpha(x) - raw).abs() < 1e-10);
        prop_assert!((alpha_from_raw(raw_from_alpha(a)) - a).abs() < 1e-10);
    }

    #[test]
    fn subjective_value_is_monotone_and_linear_in_p(
        p in 0.0..=1.0f64, v1 in 0.0..50.0f64, dv in 0.01..10.0f64, par in params()
    ) {
        prop_assert!(subjective_value(p.max(1e-3), v1 + dv, &par) > subjective_value(p.max(1e-3), v1, &par));
        prop_assert!(subjective_value(p.max(1e-3), -v1 - dv, &par) < subjective_value(p.max(1e-3), -v1, &par));
        let half = subjective_value(p * 0.5, v1, &par);
        prop_assert!((2.0 * half - subjective_value(p, v1, &par)).abs() <= 1e-9 * (1.0 + half.abs()));
    }

    #[test]
    fn swapping_options_complements_probability(s in scenario(), par in params()) {
        let sum = choice_prob(&s, &par) + choice_prob(&s.swapped(), &par);
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn likelihood_ignores_record_order(
        records in prop::collection::vec(record(), 1..40), par in params(), seed in any::<u64>()
    ) {
        use rand::seq::SliceRandom;
        let a = user_log_likelihood(&records, &par).unwrap();
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = user_log_likelihood(&shuffled, &par).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn centroid_is_permutation_invariant_and_scale_equivariant(
        vocab in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 1..12),
        picks in prop::collection::vec(0usize..12, 1..30),
        seed in any::<u64>(),
        c in -4.0..4.0f64,
    ) {
        use rand::seq::SliceRandom;
        let mut table = WordVectorTable::new(3);
        let mut scaled = WordVectorTable::new(3);
        for (i, v) in vocab.iter().enumerate() {
            table.insert(&format!("w{i}"), v.clone()).unwrap();
            scaled.insert(&format!("w{i}"), v.iter().map(|x| c * x).collect()).unwrap();
        }
        let tokens: Vec<String> = picks.iter().map(|&i| format!("w{}", i % vocab.len())).collect();
        let base = user_text_vector(&table, &tokens).unwrap();
        let mut shuffled = tokens.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(user_text_vector(&table, &shuffled).unwrap(), base.clone());
        for (s, b) in user_text_vector(&scaled, &tokens).unwrap().iter().zip(&base) {
            prop_assert!((s - c * b).abs() <= 1e-12 * (1.0 + (c * b).abs()));
        }
    }

    #[test]
    fn forest_outputs_probabilities_deterministically(
        rows in prop::collection::vec((prop::collection::vec(-3.0..3.0f64, 4), any::<bool>()), 2..60),
        seed in any::<u64>(),
    ) {
        let cfg = ForestConfig { n_trees: 5, seed, ..ForestConfig::default() };
        let f = rf_train(&rows, &cfg).unwrap();
        prop_assert_eq!(&rf_train(&rows, &cfg).unwrap(), &f);
        for (x, _) in &rows {
            let p = rf_predict(&f, x).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}

fn fusion_inputs(n_users: usize, scenarios: &[GambleScenario], seed: u64) -> Vec<(FusionInput, bool)> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scenarios
        .iter()
        .map(|s| (FusionInput { user: rng.random_range(0..n_users), features: encode_features(s) }, rng.random_bool(0.5)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embedding_rows_of_other_users_get_zero_gradient(
        n_users in 2usize..8, scenarios in prop::collection::vec(scenario(), 1..10), seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture::small(4);
        let m = FusionModel::beh2vec(n_users, &arch, Standardizer::identity(6), &mut rng).unwrap();
        let dim = m.source().dim();
        for (x, y) in fusion_inputs(n_users, &scenarios, seed) {
            let mut g = m.zero_grads();
            m.accumulate(&x, y, &mut g);
            let flat = m.flatten_grads(&g);
            for u in (0..n_users).filter(|&u| u != x.user) {
                prop_assert!(flat[u * dim..(u + 1) * dim].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn predictions_are_pure_and_in_unit_interval(
        scenarios in prop::collection::vec(scenario(), 1..10), seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture::small(5);
        let vectors = Matrix::from_vec(3, 5, (0..15).map(|i| (i as f64 + seed as f64 % 7.0).cos()).collect()).unwrap();
        // Standardized like training inputs; raw outcomes can push the logit
        // past the point where the sigmoid rounds to exactly 1.0.
        let features: Vec<[f64; 6]> = scenarios.iter().map(encode_features).collect();
        let scaler = Standardizer::fit(6, features.iter().map(|f| &f[..]));
        let models = [
            FusionModel::beh2vec(3, &arch, scaler.clone(), &mut rng).unwrap(),
            FusionModel::with_fixed(RepKind::Text, vectors, &arch, scaler, &mut rng).unwrap(),
        ];
        for m in &models {
            let copy = m.clone();
            for (x, _) in fusion_inputs(3, &scenarios, seed) {
                let p = m.predict(&x);
                prop_assert!(p > 0.0 && p < 1.0);
                prop_assert_eq!(p.to_bits(), copy.predict(&x).to_bits());
            }
        }
    }
}
