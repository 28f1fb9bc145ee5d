use super::*;
use crate::environments::{SyntheticLinearEnv, SyntheticSpec, SyntheticTruth};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALL: [Variant; 10] = [
    Variant::Cats,
    Variant::CatsFix,
    Variant::CatsStaged,
    Variant::Calinucb,
    Variant::Tsrc,
    Variant::Wtsrc,
    Variant::RandomFix,
    Variant::RandomEi,
    Variant::OracleFull,
    Variant::KnownOnly,
];

fn layout(n: usize, k: usize, known: &[usize]) -> FeatureLayout {
    FeatureLayout {
        n_features: n,
        n_arms: k,
        known_set: known.to_vec(),
        groups: None,
    }
}

fn params(variant: Variant, alpha: f64, budget: usize) -> PolicyParams {
    let mut p = PolicyParams::new(variant, alpha, budget);
    p.stop_time = Some(50);
    p
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_context(n: usize, observed: &[usize], rng: &mut ChaCha8Rng) -> (Vec<f64>, ObservedContext) {
    let full: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
    let ctx = ObservedContext::from_full(&full, observed).unwrap();
    (full, ctx)
}

/// Trains every feature model on a few random (known, reward) pairs.
fn train_feature_models(policy: &mut CabPolicy, rng: &mut ChaCha8Rng, reward_scale: f64) {
    let n = policy.layout.n_features;
    let known_set = policy.layout.known_set.clone();
    for i in complement(n, &known_set) {
        for _ in 0..3 {
            let (_, known) = random_context(n, &known_set, rng);
            let r: f64 = rng.random_range(-1.0..1.0);
            policy.feature_models[i]
                .as_mut()
                .unwrap()
                .update(known.values(), r * reward_scale, 1.0)
                .unwrap();
        }
    }
}

#[test]
fn zero_budget_requests_nothing() {
    for variant in ALL {
        if variant == Variant::OracleFull {
            continue;
        }
        let policy = CabPolicy::new(params(variant, 0.5, 0), layout(6, 2, &[1]), &mut rng(0)).unwrap();
        let known = ObservedContext::from_full(&[0.1; 6], &[1]).unwrap();
        let (req, ctx) = policy
            .choose_features_with_reveal(
                &known,
                &mut |m: &[usize]| ObservedContext::from_full(&[0.1; 6], &[&[1], m].concat()),
                &mut rng(1),
            )
            .unwrap();
        assert!(req.features.is_empty(), "{variant:?}");
        assert_eq!(ctx, known);
    }
}

#[test]
fn greedy_cats_picks_the_feature_aligned_with_the_known_context() {
    // Known feature 0; selectable 1..4.
    let mut policy = CabPolicy::new(params(Variant::Cats, 0.0, 1), layout(4, 2, &[0]), &mut rng(0)).unwrap();
    policy.feature_models[1]
        .as_mut()
        .unwrap()
        .update(&[1.0, 0.0, 0.0, 0.0, 0.0], 1.0, 1.0)
        .unwrap();
    let known = ObservedContext::from_full(&[1.0, 0.0, 0.0, 0.0], &[0]).unwrap();
    let req = policy.choose_features(&known, &mut rng(3)).unwrap();
    assert_eq!(req.features, vec![1]);
}

#[test]
fn greedy_selection_matches_subset_enumeration() {
    let mut r = rng(21);
    for _ in 0..20 {
        let known_set = [0, 1];
        let mut policy =
            CabPolicy::new(params(Variant::Cats, 0.0, 2), layout(8, 2, &known_set), &mut r).unwrap();
        train_feature_models(&mut policy, &mut r, 1.0);
        let (_, known) = random_context(8, &known_set, &mut r);
        let got = policy.choose_features(&known, &mut r).unwrap().features;

        let selectable = complement(8, &known_set);
        let value = |i: usize| policy.feature_model(i).unwrap().predict(known.values());
        let mut best = (f64::NEG_INFINITY, vec![]);
        for a in 0..selectable.len() {
            for b in (a + 1)..selectable.len() {
                let v = value(selectable[a]) + value(selectable[b]);
                if v > best.0 {
                    best = (v, vec![selectable[a], selectable[b]]);
                }
            }
        }
        assert_eq!(got, best.1);
    }
}

#[test]
fn single_arm_always_chosen() {
    let policy = CabPolicy::new(params(Variant::Cats, 1.0, 1), layout(3, 1, &[]), &mut rng(0)).unwrap();
    let ctx = ObservedContext::from_full(&[0.2, 0.1, 0.4], &[0, 1, 2]).unwrap();
    let mut r = rng(4);
    for _ in 0..100 {
        assert_eq!(policy.choose_arm(&ctx, &mut r).unwrap(), 0);
    }
}

#[test]
fn greedy_arm_choice() {
    let mut policy = CabPolicy::new(params(Variant::Cats, 0.0, 0), layout(2, 2, &[0, 1]), &mut rng(0)).unwrap();
    let ctx = ObservedContext::from_full(&[0.5, 0.0], &[0, 1]).unwrap();
    // Arm 1 learns a positive payoff on this context; arm 0 stays at zero.
    policy.arm_models[1].update(ctx.values(), 0.6, 1.0).unwrap();
    assert!(policy.arm_models[1].predict(ctx.values()) > 0.0);
    assert_eq!(policy.choose_arm(&ctx, &mut rng(1)).unwrap(), 1);
}

#[test]
fn sampled_arm_distribution_matches_gaussian_argmax() {
    let alpha = 0.5;
    let mut policy = CabPolicy::new(params(Variant::Cats, alpha, 0), layout(3, 3, &[0, 1, 2]), &mut rng(0)).unwrap();
    let mut r = rng(8);
    for _ in 0..30 {
        let (_, ctx) = random_context(3, &[0, 1, 2], &mut r);
        for k in 0..3 {
            let reward = 0.1 * k as f64 + r.random_range(-0.2..0.2);
            policy.arm_models[k].update(ctx.values(), reward, 1.0).unwrap();
        }
    }
    let ctx = ObservedContext::from_full(&[0.3, -0.2, 0.25], &[0, 1, 2]).unwrap();
    let draws = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        counts[policy.choose_arm(&ctx, &mut r).unwrap()] += 1;
    }

    // Oracle: each score is a scalar normal N(xᵀm, α²·xᵀA⁻¹x), sampled directly.
    let mut oracle_rng = rng(99);
    let stats: Vec<(f64, f64)> = policy
        .arm_models
        .iter()
        .map(|m| {
            let inv = m.precision().clone().try_inverse().unwrap();
            let x = nalgebra::DVector::from_column_slice(ctx.values());
            (m.predict(ctx.values()), alpha * (x.transpose() * inv * &x)[(0, 0)].sqrt())
        })
        .collect();
    let oracle_draws = 200_000;
    let mut oracle = [0usize; 3];
    for _ in 0..oracle_draws {
        let scores: Vec<f64> = stats
            .iter()
            .map(|&(mu, sd)| mu + sd * oracle_rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        oracle[argmax(&scores)] += 1;
    }
    let tv: f64 = (0..3)
        .map(|k| (counts[k] as f64 / draws as f64 - oracle[k] as f64 / oracle_draws as f64).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv <= 0.03, "total variation {tv}");
}

#[test]
fn known_only_never_touches_feature_models() {
    let mut policy = CabPolicy::new(params(Variant::KnownOnly, 0.5, 0), layout(4, 2, &[0]), &mut rng(0)).unwrap();
    let before: Vec<_> = (1..4).map(|i| policy.feature_model(i).unwrap().clone()).collect();
    let known = ObservedContext::from_full(&[0.2, 0.1, 0.1, 0.1], &[0]).unwrap();
    let req = policy.choose_features(&known, &mut rng(1)).unwrap();
    policy.learn(&known, &known, &req, 1, 1.0).unwrap();
    for (i, b) in (1..4).zip(before) {
        assert_eq!(policy.feature_model(i).unwrap().mean(), b.mean());
    }
    assert_eq!(policy.arm_model(1).precision()[(0, 0)], 1.0 + 0.04);
}

#[test]
fn unselected_feature_models_stay_at_prior() {
    let mut policy = CabPolicy::new(params(Variant::Cats, 0.0, 1), layout(3, 2, &[0]), &mut rng(0)).unwrap();
    let full = [0.2, 0.3, 0.1];
    let known = ObservedContext::from_full(&full, &[0]).unwrap();
    for _ in 0..20 {
        let req = FeatureRequest {
            features: vec![1],
            units: vec![0],
            stage_contexts: vec![],
        };
        let ctx = ObservedContext::from_full(&full, &[0, 1]).unwrap();
        policy.learn(&known, &ctx, &req, 0, 0.5).unwrap();
    }
    let untouched = policy.feature_model(2).unwrap();
    assert_eq!(untouched.precision(), &nalgebra::DMatrix::<f64>::identity(4, 4));
    assert!(untouched.mean().iter().all(|&v| v == 0.0));
}

#[test]
fn learn_rejects_unknown_arm() {
    let mut policy = CabPolicy::new(params(Variant::Cats, 0.5, 1), layout(3, 2, &[0]), &mut rng(0)).unwrap();
    let known = ObservedContext::from_full(&[0.1, 0.2, 0.3], &[0]).unwrap();
    let err = policy.learn(&known, &known, &FeatureRequest::default(), 5, 1.0);
    assert!(matches!(err, Err(CabError::Protocol(_))));
    assert_eq!(policy.steps(), 0);
}

#[test]
fn budget_larger_than_pool_is_a_config_error() {
    for variant in [Variant::Cats, Variant::RandomEi, Variant::Tsrc] {
        assert!(matches!(
            CabPolicy::new(params(variant, 0.5, 3), layout(4, 2, &[0, 1]), &mut rng(0)),
            Err(CabError::Config(_))
        ));
    }
}

#[test]
fn wtsrc_window_matches_rebuild() {
    let n = 6;
    let known_set = [0];
    let mut p = params(Variant::Wtsrc, 0.3, 2);
    p.window = 100;
    let mut policy = CabPolicy::new(p, layout(n, 3, &known_set), &mut rng(0)).unwrap();
    let mut r = rng(12);
    let mut history: Vec<(Vec<usize>, f64)> = Vec::new();
    for _ in 0..250 {
        let (full, known) = random_context(n, &known_set, &mut r);
        let req = policy.choose_features(&known, &mut r).unwrap();
        let ctx = ObservedContext::from_full(&full, &[&known_set[..], &req.features].concat()).unwrap();
        let arm = policy.choose_arm(&ctx, &mut r).unwrap();
        let reward: f64 = r.random_range(0.0..1.0);
        policy.learn(&known, &ctx, &req, arm, reward).unwrap();
        history.push((req.features, reward));
    }
    let bias = ObservedContext::bias_only(n);
    for i in 1..n {
        let mut rebuilt = GaussianLinearModel::new(n + 1).unwrap();
        for (features, reward) in &history[150..] {
            if features.contains(&i) {
                rebuilt.update(bias.values(), *reward, 1.0).unwrap();
            }
        }
        let live = policy.feature_model(i).unwrap();
        for (a, b) in live.precision().iter().zip(rebuilt.precision().iter()) {
            assert!((a - b).abs() <= 1e-8);
        }
        for (a, b) in live.mean().iter().zip(rebuilt.mean().iter()) {
            assert!((a - b).abs() <= 1e-8, "feature {i}: {a} vs {b}");
        }
    }
}

#[test]
fn cats_fix_freezes_feature_models_after_cutoff() {
    let mut p = params(Variant::CatsFix, 0.5, 1);
    p.stop_time = Some(10);
    let mut policy = CabPolicy::new(p, layout(4, 2, &[0]), &mut rng(0)).unwrap();
    let mut r = rng(2);
    let mut snapshot = None;
    for step in 0..30 {
        if step == 10 {
            snapshot = Some(policy.feature_models.clone());
        }
        let (full, known) = random_context(4, &[0], &mut r);
        let req = policy.choose_features(&known, &mut r).unwrap();
        let ctx = ObservedContext::from_full(&full, &[&[0][..], &req.features].concat()).unwrap();
        let arm = policy.choose_arm(&ctx, &mut r).unwrap();
        policy.learn(&known, &ctx, &req, arm, 1.0).unwrap();
    }
    let snapshot = snapshot.unwrap();
    for (i, frozen) in snapshot.iter().enumerate().skip(1) {
        assert_eq!(policy.feature_model(i).unwrap().mean(), frozen.as_ref().unwrap().mean());
    }
    // Past the cutoff scoring is by posterior mean, so it no longer depends on the rng.
    let (_, known) = random_context(4, &[0], &mut r);
    let a = policy.choose_features(&known, &mut rng(1)).unwrap();
    let b = policy.choose_features(&known, &mut rng(2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn staged_selection_grows_the_context() {
    let n = 6;
    let known_set = [0, 1];
    let mut policy = CabPolicy::new(params(Variant::CatsStaged, 0.3, 3), layout(n, 2, &known_set), &mut rng(0)).unwrap();
    let mut r = rng(5);
    for _ in 0..40 {
        let (full, known) = random_context(n, &known_set, &mut r);
        let mut calls = Vec::new();
        let (req, ctx) = policy
            .choose_features_with_reveal(
                &known,
                &mut |m: &[usize]| {
                    calls.push(m.len());
                    ObservedContext::from_full(&full, &[&known_set[..], m].concat())
                },
                &mut r,
            )
            .unwrap();
        assert_eq!(calls, vec![1, 2, 3]);
        assert_eq!(req.features.len(), 3);
        assert_eq!(req.stage_contexts.len(), 3);
        // The first stage is scored on the known context alone.
        assert!(req.stage_contexts.iter().any(|(_, c)| c == known.values()));
        let arm = policy.choose_arm(&ctx, &mut r).unwrap();
        policy.learn(&known, &ctx, &req, arm, 0.5).unwrap();
    }
    assert!(policy.choose_features(&ObservedContext::bias_only(n), &mut r).is_err());
}

#[test]
fn group_mode_requests_whole_groups() {
    let groups = FeatureGroups::parse("a: 2,3\nb: 4\nc: 5,6\n").unwrap();
    let layout = FeatureLayout {
        n_features: 6,
        n_arms: 2,
        known_set: vec![0],
        groups: Some(groups),
    };
    let policy = CabPolicy::new(params(Variant::Cats, 0.5, 2), layout, &mut rng(0)).unwrap();
    let known = ObservedContext::from_full(&[0.3, 0.0, 0.0, 0.0, 0.0, 0.0], &[0]).unwrap();
    let mut r = rng(1);
    for _ in 0..50 {
        let req = policy.choose_features(&known, &mut r).unwrap();
        assert_eq!(req.units.len(), 2);
        let expected: Vec<usize> = {
            let mut v: Vec<usize> = req
                .units
                .iter()
                .flat_map(|&u| [vec![1, 2], vec![3], vec![4, 5]][u].clone())
                .collect();
            v.sort_unstable();
            v
        };
        assert_eq!(req.features, expected);
    }
}

#[test]
fn oracle_with_zero_relevance_takes_first_indices() {
    let truth = SyntheticTruth {
        arm_weights: vec![vec![0.1, 0.2, 0.0, 0.3, 0.0], vec![0.0, 0.0, 0.5, 0.0, 0.1]],
        feature_weights: vec![vec![0.0; 5]; 4],
        known_set: vec![0],
    };
    let full = [0.5, 0.2, 0.4, 0.1];
    let known = ObservedContext::from_full(&full, &[0]).unwrap();
    let (set, arm) = oracle_action(&truth, &known, &full, 2).unwrap();
    assert_eq!(set, vec![1, 2]);
    // c^{V+U*} = (0.5, 0.2, 0.4, 0, 1): arm 0 → 0.05 + 0.04 = 0.09, arm 1 → 0.2 + 0.1 = 0.3.
    assert_eq!(arm, 1);
}

#[test]
fn oracle_matches_exhaustive_search() {
    let spec = SyntheticSpec {
        n_features: 8,
        n_arms: 3,
        n_known: 2,
        noise: 0.0,
    };
    for seed in 0..30 {
        let mut env = SyntheticLinearEnv::generate(spec, 2, seed).unwrap();
        let selectable = env.selectable();
        for t in 0..10 {
            let known = env.begin_step(t).unwrap();
            let full = env.current_context().to_vec();
            let (set, arm) = oracle_action(env.truth(), &known, &full, 2).unwrap();
            let mut best = (f64::NEG_INFINITY, vec![], 0);
            for a in 0..selectable.len() {
                for b in (a + 1)..selectable.len() {
                    let pick = vec![selectable[a], selectable[b]];
                    let ctx = env.reveal(&pick).unwrap();
                    for k in 0..3 {
                        let v = env.truth().expected_reward(&ctx, k);
                        if v > best.0 + 1e-12 {
                            best = (v, pick.clone(), k);
                        }
                    }
                }
            }
            assert_eq!((set, arm), (best.1, best.2), "seed {seed} t {t}");
        }
    }
}

#[test]
fn oracle_with_everything_revealed_is_full_context_greedy() {
    let spec = SyntheticSpec {
        n_features: 6,
        n_arms: 4,
        n_known: 2,
        noise: 0.0,
    };
    let mut env = SyntheticLinearEnv::generate(spec, 4, 3).unwrap();
    let selectable = env.selectable();
    for t in 0..50 {
        let known = env.begin_step(t).unwrap();
        let full = env.current_context().to_vec();
        let (set, arm) = oracle_action(env.truth(), &known, &full, 4).unwrap();
        assert_eq!(set, selectable);
        let ctx = env.reveal(&selectable).unwrap();
        let rewards: Vec<f64> = (0..4).map(|k| env.truth().expected_reward(&ctx, k)).collect();
        assert_eq!(arm, argmax(&rewards));
    }
}

#[test]
fn oracle_rejects_oversized_budget() {
    let env = SyntheticLinearEnv::generate(
        SyntheticSpec {
            n_features: 4,
            n_arms: 2,
            n_known: 1,
            noise: 0.0,
        },
        0,
        0,
    )
    .unwrap();
    let known = ObservedContext::bias_only(4);
    assert!(oracle_action(env.truth(), &known, &[0.0; 4], 4).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn requests_are_exact_and_disjoint_from_known(
        seed in any::<u64>(),
        variant_idx in 0usize..10,
        budget in 0usize..=5,
    ) {
        let variant = ALL[variant_idx];
        let known_set = [1, 4];
        let mut r = rng(seed);
        let mut policy = CabPolicy::new(params(variant, 0.4, budget), layout(7, 3, &known_set), &mut r).unwrap();
        for _ in 0..5 {
            let (full, known) = random_context(7, &known_set, &mut r);
            let (req, ctx) = policy
                .choose_features_with_reveal(
                    &known,
                    &mut |m: &[usize]| ObservedContext::from_full(&full, &[&known_set[..], m].concat()),
                    &mut r,
                )
                .unwrap();
            let expected = match variant {
                Variant::OracleFull => 5,
                Variant::KnownOnly => 0,
                _ => budget,
            };
            prop_assert_eq!(req.features.len(), expected);
            let mut dedup = req.features.clone();
            dedup.dedup();
            prop_assert_eq!(&dedup, &req.features);
            prop_assert!(req.features.iter().all(|i| !known_set.contains(i)));
            let arm = policy.choose_arm(&ctx, &mut r).unwrap();
            prop_assert!(arm < 3);
            policy.learn(&known, &ctx, &req, arm, r.random_range(0.0..1.0)).unwrap();
        }
    }

    #[test]
    fn greedy_selection_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let known_set = [0, 2];
        let mut a = CabPolicy::new(params(Variant::Cats, 0.0, 2), layout(7, 2, &known_set), &mut rng(0)).unwrap();
        let mut b = a.clone();
        train_feature_models(&mut a, &mut rng(seed), 1.0);
        train_feature_models(&mut b, &mut rng(seed), scale);
        let (_, known) = random_context(7, &known_set, &mut rng(seed ^ 1));
        let ra = a.choose_features(&known, &mut rng(1)).unwrap();
        let rb = b.choose_features(&known, &mut rng(2)).unwrap();
        prop_assert_eq!(ra.features, rb.features);
    }

    #[test]
    fn zero_alpha_is_deterministic(seed in any::<u64>(), variant_idx in 0usize..10) {
        let variant = ALL[variant_idx];
        prop_assume!(variant != Variant::RandomEi);
        let known_set = [3];
        let mut r = rng(seed);
        let mut policy = CabPolicy::new(params(variant, 0.0, 2), layout(5, 2, &known_set), &mut r).unwrap();
        for _ in 0..8 {
            let (full, known) = random_context(5, &known_set, &mut r);
            let mut reveal = |m: &[usize]| ObservedContext::from_full(&full, &[&known_set[..], m].concat());
            let (req1, ctx1) = policy.choose_features_with_reveal(&known, &mut reveal, &mut rng(1)).unwrap();
            let (req2, ctx2) = policy.choose_features_with_reveal(&known, &mut reveal, &mut rng(2)).unwrap();
            prop_assert_eq!(&req1, &req2);
            let arm1 = policy.choose_arm(&ctx1, &mut rng(3)).unwrap();
            let arm2 = policy.choose_arm(&ctx2, &mut rng(4)).unwrap();
            prop_assert_eq!(arm1, arm2);
            policy.learn(&known, &ctx1, &req1, arm1, r.random_range(0.0..1.0)).unwrap();
        }
    }
}
