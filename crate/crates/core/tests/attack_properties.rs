//! Attack-level invariants: exact degenerate equivalences between the
//! method families, norm feasibility under randomized configurations, and
//! the tensor properties the attack math leans on.

mod common;

use advgrad_core::attacks::{
    one_step_attack, run_attack, AttackConfig, Method, Norm, StepRule,
};
use advgrad_core::tensor::cosine_similarity;
use advgrad_core::Tensor;
use common::ModelGen;
use proptest::prelude::*;

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn momentum_with_zero_decay_equals_plain_iterative_bitwise() {
    let mut gen = ModelGen::new(7);
    for _ in 0..15 {
        let model = gen.random_model();
        let x = gen.safe_input(&model, 0.0);
        let y = gen.random_label(&model);
        for (mi, plain) in [(Method::MiFgsm, Method::IFgsm), (Method::MiFgm, Method::IFgm)] {
            let mut cfg_mi = AttackConfig::new(mi);
            cfg_mi.decay = 0.0;
            cfg_mi.norm = mi.natural_norm();
            let mut cfg_plain = AttackConfig::new(plain);
            cfg_plain.norm = plain.natural_norm();
            let a = run_attack(&model, &x, y, &cfg_mi).unwrap();
            let b = run_attack(&model, &x, y, &cfg_plain).unwrap();
            assert_eq!(
                bits(&a.adversarial),
                bits(&b.adversarial),
                "{mi} vs {plain} diverged"
            );
        }
    }
}

#[test]
fn single_iteration_equals_one_step_bitwise() {
    let mut gen = ModelGen::new(8);
    for _ in 0..15 {
        let model = gen.random_model();
        let x = gen.safe_input(&model, 0.0);
        let y = gen.random_label(&model);
        let n: usize = x.len();
        for method in [Method::IFgsm, Method::IFgm, Method::MiFgsm, Method::MiFgm] {
            let mut cfg = AttackConfig::new(method);
            cfg.iterations = 1;
            cfg.norm = method.natural_norm();
            let iterative = run_attack(&model, &x, y, &cfg).unwrap();
            let single = one_step_attack(
                &model,
                &x,
                y,
                cfg.epsilon_effective(n),
                cfg.norm,
                cfg.clip_valid_range,
            )
            .unwrap();
            assert_eq!(
                bits(&iterative.adversarial),
                bits(&single.adversarial),
                "{method} at T=1 differs from its one-step counterpart"
            );
        }
    }
}

#[test]
fn targeted_runs_stay_feasible_and_traced() {
    let mut gen = ModelGen::new(9);
    for _ in 0..10 {
        let model = gen.random_model();
        let x = gen.safe_input(&model, 0.0);
        let y = gen.random_label(&model);
        let target = (y + 1) % model.num_classes();
        let mut cfg = AttackConfig::new(Method::MiFgsm);
        cfg.target = Some(target);
        cfg.iterations = 8;
        let res = run_attack(&model, &x, y, &cfg).unwrap();
        assert_eq!(res.trace.iterations(), 8);
        let delta = res.adversarial.sub(&x).unwrap();
        assert!(delta.linf_norm() <= res.epsilon_effective + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every method under every step rule keeps its perturbation inside the
    /// effective ball (the acceptance suite re-runs this at larger scale).
    #[test]
    fn attacks_respect_their_budget(
        seed in 0u64..10_000,
        eps in 1.0f64..64.0,
        iters in 1usize..12,
        alpha in 0.5f64..8.0,
        decay in 0.0f64..2.0,
        fixed in proptest::bool::ANY,
        clip_range in proptest::bool::ANY,
        method_idx in 0usize..6,
    ) {
        let method = Method::ALL[method_idx];
        let mut gen = ModelGen::new(seed);
        let model = gen.random_model();
        let x = gen.safe_input(&model, 0.0);
        let y = gen.random_label(&model);
        let mut cfg = AttackConfig::new(method);
        cfg.epsilon = eps;
        cfg.decay = decay;
        cfg.clip_valid_range = clip_range;
        if !method.is_one_step() {
            cfg.iterations = iters;
            if fixed {
                cfg.step_rule = StepRule::Fixed { alpha };
            }
        }
        let res = run_attack(&model, &x, y, &cfg).unwrap();
        let delta = res.adversarial.sub(&x).unwrap();
        let dist = cfg.norm.distance(&delta);
        let slack = match cfg.norm { Norm::LInf => 1e-12, Norm::L2 => 1e-9 };
        prop_assert!(
            dist <= res.epsilon_effective + slack,
            "{} dist {} > eps {}",
            method,
            dist,
            res.epsilon_effective
        );
        prop_assert_eq!(res.trace.iterations(), cfg.iterations);
        if clip_range {
            prop_assert!(res
                .adversarial
                .data()
                .iter()
                .all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    /// Norm chain on random tensors.
    #[test]
    fn norm_chain_holds(data in proptest::collection::vec(-100.0f64..100.0, 1..64)) {
        let t = Tensor::from_vec(data).unwrap();
        prop_assert!(t.l1_norm() >= t.l2_norm() - 1e-12);
        prop_assert!(t.l2_norm() >= t.linf_norm() - 1e-12);
    }

    /// sign is idempotent with values in {-1, 0, 1}.
    #[test]
    fn sign_is_idempotent(data in proptest::collection::vec(-10.0f64..10.0, 1..32)) {
        let t = Tensor::from_vec(data).unwrap();
        let s = t.sign();
        prop_assert!(s.data().iter().all(|&v| v == -1.0 || v == 0.0 || v == 1.0));
        let ss = s.sign();
        prop_assert_eq!(ss.data(), s.data());
    }

    /// Cosine similarity is symmetric and invariant to positive scaling.
    #[test]
    fn cosine_symmetry_and_scale_invariance(
        a in proptest::collection::vec(-10.0f64..10.0, 4..16),
        b_seed in proptest::collection::vec(-10.0f64..10.0, 4..16),
        lambda in 0.01f64..100.0,
    ) {
        let n = a.len().min(b_seed.len());
        let ta = Tensor::from_vec(a[..n].to_vec()).unwrap();
        let tb = Tensor::from_vec(b_seed[..n].to_vec()).unwrap();
        let ab = cosine_similarity(&ta, &tb).unwrap();
        let ba = cosine_similarity(&tb, &ta).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        let scaled = cosine_similarity(&ta.scale(lambda), &tb).unwrap();
        prop_assert!((ab - scaled).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }
}
