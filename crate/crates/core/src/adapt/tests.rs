use super::*;
use crate::model::{ArchitectureSpec, Params};
use crate::synthgen::{generate, rng_from_seed, DatasetSpec, Variant};

fn small_arch() -> ArchitectureSpec {
    ArchitectureSpec {
        latent_dim: 8,
        ..ArchitectureSpec::kunet(60, 30)
    }
}

fn dynamic(arch: ArchitectureSpec, gammas: &[f64], seed: u64) -> Model {
    Model::dynamic(arch, gammas, &mut rng_from_seed(seed)).unwrap()
}

fn episodes(variant: Variant, seed: u64, n: usize) -> Vec<crate::synthgen::Episode> {
    generate(&DatasetSpec::new(variant, seed), n).unwrap().episodes
}

fn theta_mut(model: &mut Model, layer: usize) -> &mut Vec<f64> {
    match &mut model.params {
        Params::Dynamic { trunk, .. } => &mut trunk[layer].theta.values,
        _ => panic!("not dynamic"),
    }
}

fn trunk_bytes(model: &Model) -> String {
    match &model.params {
        Params::Dynamic { trunk, .. } => serde_json::to_string(trunk).unwrap(),
        _ => panic!("not dynamic"),
    }
}

/// Pairs whose targets equal the model's own predictions.
fn perfect_pairs(model: &Model, seed: u64) -> Vec<Pair> {
    let ep = &episodes(Variant::S1, seed, 1)[0];
    let xs: Vec<Vec<f64>> = ep.support.iter().map(|p| p.0.clone()).collect();
    let ys = model.predict(&xs).unwrap();
    xs.into_iter().zip(ys).collect()
}

fn sgd_plain() -> AdaptConfig {
    AdaptConfig {
        optimizer: OptimizerKind::Sgd,
        grad_transform: GradTransform::Identity,
        ..AdaptConfig::default()
    }
}

#[test]
fn task_loss_is_zero_for_perfect_predictions() {
    let m = dynamic(small_arch(), &[0.1, 0.1], 1);
    let pairs = perfect_pairs(&m, 2);
    assert!(task_loss(&m, &pairs).unwrap().abs() < 1e-24);
}

#[test]
fn task_loss_adds_the_penalty() {
    let mut m = dynamic(small_arch(), &[0.1, 0.1], 1);
    theta_mut(&mut m, 0)[0] = 1.0;
    theta_mut(&mut m, 0)[1] = 1.0;
    let pairs = perfect_pairs(&m, 2);
    assert!((task_loss(&m, &pairs).unwrap() - 0.2).abs() < 1e-12);
    assert!(pair_mse(&m, &pairs).unwrap().abs() < 1e-24);
}

#[test]
fn task_loss_without_penalty_is_mean_squared_error() {
    let m = dynamic(small_arch(), &[0.0, 0.0], 1);
    let pairs: Vec<Pair> = perfect_pairs(&m, 2)
        .into_iter()
        .map(|(x, y)| (x, y.iter().map(|v| v + 0.5).collect()))
        .collect();
    assert!((task_loss(&m, &pairs).unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn empty_pairs_are_a_contract_error() {
    let m = dynamic(small_arch(), &[0.1, 0.1], 1);
    assert!(matches!(task_loss(&m, &[]), Err(Error::Contract(_))));
}

#[test]
fn disabled_phase1_is_identity() {
    let mut m = dynamic(small_arch(), &[1e-4, 1e-4], 3);
    let before = m.clone();
    let cfg = AdaptConfig {
        phase1_enabled: false,
        ..AdaptConfig::default()
    };
    let ep = &episodes(Variant::S1, 4, 1)[0];
    let trace = phase1_adapt(&mut m, &ep.support, &cfg, 10).unwrap();
    assert_eq!(m, before);
    assert_eq!(trace.losses.len(), 1);
}

#[test]
fn static_variant_has_no_phase1() {
    let mut m = Model::static_model(small_arch(), &mut rng_from_seed(1)).unwrap();
    let ep = &episodes(Variant::S1, 4, 1)[0];
    let err = phase1_adapt(&mut m, &ep.support, &AdaptConfig::default(), 10).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn phase1_lowers_support_loss_and_keeps_trunk() {
    let cfg = AdaptConfig::default();
    let eps = episodes(Variant::S1, 5, 100);
    let mut model = dynamic(ArchitectureSpec::kunet(60, 30), &cfg.gammas, 6);
    let trunk = trunk_bytes(&model);
    let mut rng = rng_from_seed(7);
    let mut decreased = 0;
    for ep in &eps {
        let mut m = model.clone();
        m.reset_episode(&mut rng).unwrap();
        let trace = phase1_adapt(&mut m, &ep.support, &cfg, 10).unwrap();
        assert_eq!(trace.losses.len(), 11);
        if trace.last() <= trace.initial() {
            decreased += 1;
        }
        assert_eq!(trunk_bytes(&m), trunk);
    }
    assert!(decreased >= 95, "support loss fell on {decreased} of 100 episodes");
    model.reset_episode(&mut rng).unwrap();
    assert_eq!(trunk_bytes(&model), trunk);
}

#[test]
fn cached_trunk_path_matches_full_graph() {
    let cfg = AdaptConfig::default();
    let ep = &episodes(Variant::S2, 8, 1)[0];
    let base = dynamic(small_arch(), &cfg.gammas, 9);
    let mut a = base.clone();
    let mut b = base.clone();
    let ta = phase1_impl(&mut a, &ep.support, &cfg, 5, true).unwrap();
    let tb = phase1_impl(&mut b, &ep.support, &cfg, 5, false).unwrap();
    for (x, y) in ta.losses.iter().zip(&tb.losses) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
    }
    let (Params::Dynamic { branch: ba, .. }, Params::Dynamic { branch: bb, .. }) = (&a.params, &b.params) else {
        unreachable!()
    };
    for (la, lb) in ba.iter().zip(bb) {
        for (x, y) in la.psi.values.iter().zip(&lb.psi.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn frozen_phase2_changes_nothing() {
    let cfg = AdaptConfig::default();
    let mut m = dynamic(small_arch(), &cfg.gammas, 10);
    let before = m.clone();
    let ep = &episodes(Variant::S1, 11, 1)[0];
    let mut opt = Optimizer::new(cfg.optimizer);
    let mse = phase2_step(&mut m, &ep.query, &cfg, false, &mut opt).unwrap();
    assert_eq!(m, before);
    assert!((mse - pair_mse(&before, &ep.query).unwrap()).abs() < 1e-15);
}

#[test]
fn penalty_gradient_shrinks_theta() {
    let gamma = 0.3;
    let mut cfg = sgd_plain();
    cfg.gammas = vec![gamma, gamma];
    cfg.alphas = vec![1e-4, 2e-4];
    let mut m = dynamic(small_arch(), &cfg.gammas, 12);
    for (l, v) in [(0, 0.7), (1, -0.4)] {
        theta_mut(&mut m, l)[3] = v;
    }
    let pairs = perfect_pairs(&m, 13);
    let before = m.clone();
    let mut opt = Optimizer::new(cfg.optimizer);
    phase2_step(&mut m, &pairs, &cfg, true, &mut opt).unwrap();
    for (l, v) in [(0usize, 0.7), (1, -0.4)] {
        let expected = v - cfg.alphas[l] * 2.0 * gamma * v;
        let got = theta_mut(&mut m, l)[3];
        assert!((got - expected).abs() < 1e-12, "layer {l}: {got} vs {expected}");
    }
    let mut after = m.clone();
    let mut b = before.clone();
    for l in 0..2 {
        theta_mut(&mut after, l)[3] = 0.0;
        theta_mut(&mut b, l)[3] = 0.0;
    }
    assert_eq!(after, b);
}

#[test]
fn penalty_only_step_on_single_weight() {
    let mut cfg = sgd_plain();
    cfg.gammas = vec![0.5, 0.5];
    cfg.alphas = vec![0.1, 0.1];
    cfg.beta = 0.5;
    let mut m = dynamic(small_arch(), &cfg.gammas, 14);
    theta_mut(&mut m, 1)[0] = 1.0;
    let pairs = perfect_pairs(&m, 15);
    let mut opt = Optimizer::new(cfg.optimizer);
    phase2_step(&mut m, &pairs, &cfg, true, &mut opt).unwrap();
    assert!((theta_mut(&mut m, 1)[0] - 0.9).abs() < 1e-12);
}

#[test]
fn single_episode_run_logs_one_record() {
    let cfg = AdaptConfig {
        epochs: 1,
        batches_per_epoch: 1,
        ..AdaptConfig::default()
    };
    let eps = episodes(Variant::S1, 16, 1);
    let mut m = dynamic(small_arch(), &cfg.gammas, 17);
    let log = train_run(&eps, &mut m, &cfg, 18).unwrap();
    assert_eq!(log.epochs.len(), 1);
    assert_eq!(log.episode_query_mse.len(), 1);
    assert!(log.epochs[0].mean_query_mse.is_finite());
}

#[test]
fn short_dataset_is_a_config_error() {
    let cfg = AdaptConfig {
        epochs: 2,
        batches_per_epoch: 3,
        ..AdaptConfig::default()
    };
    let eps = episodes(Variant::S1, 16, 5);
    let mut m = dynamic(small_arch(), &cfg.gammas, 17);
    assert!(matches!(train_run(&eps, &mut m, &cfg, 18), Err(Error::Config { .. })));
}

#[test]
fn runs_are_deterministic() {
    let cfg = AdaptConfig {
        epochs: 2,
        batches_per_epoch: 5,
        ..AdaptConfig::default()
    };
    let eps = episodes(Variant::S2, 19, 10);
    let run = || {
        let mut m = dynamic(small_arch(), &cfg.gammas, 20);
        let log = train_run(&eps, &mut m, &cfg, 21).unwrap();
        (serde_json::to_string(&log).unwrap(), m.to_json().unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn observer_sees_trunk_change_only_in_phase2() {
    let cfg = AdaptConfig {
        epochs: 1,
        batches_per_epoch: 4,
        ..AdaptConfig::default()
    };
    let eps = episodes(Variant::S1, 22, 4);
    let mut m = dynamic(small_arch(), &cfg.gammas, 23);
    let mut last = trunk_bytes(&m);
    let mut phase2_changes = 0;
    train_run_observed(&eps, &mut m, &cfg, 24, &mut |event, model| {
        let now = trunk_bytes(model);
        match event {
            PhaseEvent::AfterPhase2 => phase2_changes += usize::from(now != last),
            _ => assert_eq!(now, last, "trunk moved before phase 2 ({event:?})"),
        }
        last = now;
    })
    .unwrap();
    assert_eq!(phase2_changes, 4);
}

#[test]
fn evaluation_leaves_model_untouched() {
    let cfg = AdaptConfig::default();
    let eps = episodes(Variant::S1, 25, 6);
    let m = dynamic(small_arch(), &cfg.gammas, 26);
    let before = m.to_json().unwrap();
    let a = evaluate(&eps, &m, &cfg, "s1", "dynamic", 27).unwrap();
    let b = evaluate(&eps, &m, &cfg, "s1", "dynamic", 27).unwrap();
    assert_eq!(m.to_json().unwrap(), before);
    assert_eq!(a, b);
    assert_eq!(a.episodes, 6);
    let vals: Vec<f64> = a.records.iter().map(|r| r.query_mse).collect();
    let m0 = vals.iter().sum::<f64>() / 6.0;
    assert!((a.mean_mse - m0).abs() < 1e-12);
}

#[test]
fn static_and_lora_train_and_evaluate() {
    let cfg = AdaptConfig {
        epochs: 1,
        batches_per_epoch: 3,
        ..AdaptConfig::default()
    };
    let eps = episodes(Variant::S1, 28, 3);
    let mut s = Model::static_model(small_arch(), &mut rng_from_seed(29)).unwrap();
    let before = s.clone();
    train_run(&eps, &mut s, &cfg, 30).unwrap();
    assert_ne!(s, before);
    let mut l = Model::lora_from(&s, 4, 1.0, &mut rng_from_seed(31)).unwrap();
    let base_before = match &l.params {
        Params::Lora { base, .. } => base.clone(),
        _ => unreachable!(),
    };
    train_run(&eps, &mut l, &cfg, 32).unwrap();
    match &l.params {
        Params::Lora { base, .. } => assert_eq!(base, &base_before),
        _ => unreachable!(),
    }
    let r = evaluate(&eps, &l, &cfg, "s1", "lora", 33).unwrap();
    assert!(r.mean_mse.is_finite());
}

/// Trained with the penalty 10x larger, trunk perturbations end up smaller.
#[test]
fn larger_penalty_gives_smaller_perturbation() {
    let eps = episodes(Variant::S1, 34, 60);
    for seed in 0..3 {
        let norm = |gamma: f64| {
            let cfg = AdaptConfig {
                epochs: 3,
                batches_per_epoch: 20,
                gammas: vec![gamma, gamma],
                alphas: vec![1e-4, 1e-4],
                optimizer: OptimizerKind::Sgd,
                ..AdaptConfig::default()
            };
            let mut m = dynamic(small_arch(), &cfg.gammas, 40 + seed);
            train_run(&eps, &mut m, &cfg, 50 + seed).unwrap();
            (0..2)
                .map(|l| theta_mut(&mut m, l).iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        };
        let (lo, hi) = (norm(1.0), norm(10.0));
        assert!(hi < lo, "seed {seed}: {hi} >= {lo}");
    }
}
