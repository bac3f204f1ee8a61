//! Analytic gradients against central finite differences, and the
//! loss-zero/RHS equivalence, across random architectures and all
//! differentiable property kinds.

mod common;

use common::{fd_param_gradients, max_rel_err, min_kink_distance, random_net};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robnet_core::attack::{sample_ball, seeded_rng};
use robnet_core::data::InputDomain;
use robnet_core::loss::{combined_loss, constraint_loss, LossConfig, Sampler};
use robnet_core::nn::{cross_entropy, Activation, Network};
use robnet_core::properties::{PropertyKind, PropertySpec};

/// Random architecture in the 2-16 input / up-to-3-layer envelope, with a
/// point that keeps every unit clear of its kink so finite differences see
/// a locally smooth function.
fn smooth_instance(seed: u64) -> (Network, Vec<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let in_dim = rng.gen_range(2..=16);
        let depth = rng.gen_range(1..=3);
        let mut dims = vec![in_dim];
        for _ in 0..depth - 1 {
            dims.push(rng.gen_range(2..=8));
        }
        let out_dim = rng.gen_range(2..=4);
        dims.push(out_dim);
        let acts: Vec<Activation> = (0..depth)
            .map(|i| {
                if i + 1 == depth {
                    Activation::Identity
                } else if rng.gen_bool(0.5) {
                    Activation::Relu
                } else {
                    Activation::Clamp { lo: 0.0, hi: 1.0 }
                }
            })
            .collect();
        let net = random_net(&mut rng, &dims, &acts, 0.8, 0.3);
        let x: Vec<f64> = (0..in_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if min_kink_distance(&net, &x) > 1e-4 {
            let label = rng.gen_range(0..out_dim);
            return (net, x, label);
        }
    }
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    for seed in 0..8 {
        let (net, x, label) = smooth_instance(seed);
        let (logits, tape) = net.forward(&x);
        let (_, ce_grad) = cross_entropy(&logits, label);
        let (analytic, _) = net.backward(&tape, &ce_grad);
        let fd = fd_param_gradients(&net, 1e-6, |n| cross_entropy(&n.eval(&x), label).0);
        let err = max_rel_err(&analytic, &fd);
        assert!(err < 1e-4, "seed {seed}: cross-entropy gradient error {err}");
    }
}

/// Finds a candidate where the hinge is strictly active and the margin's
/// max-components are well separated, so the loss is differentiable there.
fn active_candidate(
    spec: &PropertySpec,
    net: &Network,
    center: &[f64],
    label: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    for _ in 0..200 {
        let cand = sample_ball(center, spec.epsilon, 1, InputDomain::Unbounded, rng).remove(0);
        let margin = spec.violation_margin(net, center, label, &cand).unwrap();
        if margin <= 1e-3 || min_kink_distance(net, &cand) < 1e-4 {
            continue;
        }
        // The SR/LR margins take a max over output deviations; require the
        // top two to be separated so the max is locally smooth.
        let out = net.eval(&cand);
        let center_out = net.eval(center);
        let mut devs: Vec<f64> =
            out.iter().zip(&center_out).map(|(a, b)| (a - b).abs()).collect();
        devs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if matches!(spec.kind(), PropertyKind::Sr | PropertyKind::Lr)
            && (devs.len() < 2 || devs[0] - devs[1] < 1e-3)
        {
            continue;
        }
        return Some(cand);
    }
    None
}

#[test]
fn constraint_loss_gradients_match_finite_differences_when_the_hinge_is_active() {
    let specs = [
        PropertySpec::standard(0.3, 0.2).unwrap(),
        PropertySpec::strong_classification(0.3, 0.5, false).unwrap(),
        PropertySpec::strong_classification(0.3, 0.6, true).unwrap(),
        PropertySpec::lipschitz(0.3, 0.5).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for seed in 0..40u64 {
        let (net, center, label) = smooth_instance(100 + seed);
        let spec = &specs[(seed % 4) as usize];
        let Some(cand) = active_candidate(spec, &net, &center, label, &mut rng) else {
            continue;
        };
        let (_, analytic) = constraint_loss(spec, &net, &center, label, &cand).unwrap();
        let fd = fd_param_gradients(&net, 1e-6, |n| {
            constraint_loss(spec, n, &center, label, &cand).unwrap().0
        });
        let err = max_rel_err(&analytic, &fd);
        assert!(err < 1e-3, "seed {seed} {:?}: constraint gradient error {err}", spec.kind());
        checked += 1;
    }
    assert!(checked >= 12, "too few active-hinge instances found: {checked}");
}

#[test]
fn combined_loss_gradients_match_finite_differences_with_a_frozen_sampler() {
    // A uniform sampler with a reseeded stream draws the same candidates
    // for every perturbed network, which is what finite differences need;
    // PGD candidates move with the parameters and are excluded by design.
    let spec = PropertySpec::standard(0.2, 0.15).unwrap();
    let mut cfg = LossConfig::new(0.2);
    cfg.sampler = Sampler::RandomUniform;
    cfg.samples_per_point = 1;
    cfg.beta = 0.5;
    let mut checked = 0;
    for seed in 0..20u64 {
        let (net, x, label) = smooth_instance(300 + seed);
        let batch = [(x.as_slice(), label)];
        let eval = |n: &Network| {
            let mut rng = seeded_rng(9000 + seed);
            combined_loss(&cfg, Some(&spec), n, &batch, InputDomain::Unbounded, &mut rng)
                .unwrap()
                .0
        };
        // Only instances whose sampled candidate sits on an active, smooth
        // hinge are usable; others re-roll.
        let mut rng = seeded_rng(9000 + seed);
        let cand = sample_ball(&x, spec.epsilon, 1, InputDomain::Unbounded, &mut rng).remove(0);
        let margin = spec.violation_margin(&net, &x, 0, &cand).unwrap();
        if margin.abs() < 1e-3 || min_kink_distance(&net, &cand) < 1e-4 {
            continue;
        }
        let mut rng = seeded_rng(9000 + seed);
        let (_, analytic) =
            combined_loss(&cfg, Some(&spec), &net, &batch, InputDomain::Unbounded, &mut rng)
                .unwrap();
        let fd = fd_param_gradients(&net, 1e-6, eval);
        let err = max_rel_err(&analytic, &fd);
        assert!(err < 1e-3, "seed {seed}: combined gradient error {err}");
        checked += 1;
    }
    assert!(checked >= 8, "too few smooth instances: {checked}");
}

#[test]
fn constraint_loss_is_zero_exactly_when_the_rhs_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for kind in [PropertyKind::Sr, PropertyKind::Scr, PropertyKind::Lr] {
        let mut zeros = 0;
        let mut positives = 0;
        for trial in 0..1000u64 {
            let (net, center, label) = smooth_instance(500 + trial % 9);
            let spec = match kind {
                PropertyKind::Sr => PropertySpec::standard(0.3, 0.35).unwrap(),
                PropertyKind::Scr => PropertySpec::strong_classification(0.3, 0.4, false).unwrap(),
                PropertyKind::Lr => PropertySpec::lipschitz(0.3, 1.5).unwrap(),
                PropertyKind::Cr => unreachable!(),
            };
            let cand = sample_ball(&center, spec.epsilon, 1, InputDomain::Unbounded, &mut rng)
                .remove(0);
            let (loss, _) = constraint_loss(&spec, &net, &center, label, &cand).unwrap();
            let holds = spec.rhs_holds(&net, &center, label, &cand).unwrap();
            assert!(loss >= 0.0, "{kind:?} trial {trial}: negative loss {loss}");
            assert!(
                (loss == 0.0) == holds,
                "{kind:?} trial {trial}: loss {loss} vs holds {holds}"
            );
            if holds {
                zeros += 1;
            } else {
                positives += 1;
            }
        }
        assert!(zeros > 50 && positives > 50, "{kind:?} is one-sided: {zeros}/{positives}");
    }
}

#[test]
fn classification_kind_has_no_differentiable_loss() {
    let (net, center, label) = smooth_instance(4);
    let spec = PropertySpec::classification(0.1).unwrap();
    let cand = center.clone();
    assert!(constraint_loss(&spec, &net, &center, label, &cand).is_err());
}
