//! Property semantics, cross-checked three ways: boolean right-hand sides
//! against signed margins, the pointwise implications between properties,
//! and the constraint AST against direct evaluation.

mod common;

use common::random_net;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robnet_core::attack::sample_ball;
use robnet_core::data::InputDomain;
use robnet_core::nn::Activation;
use robnet_core::properties::{PropertyError, PropertyKind, PropertySpec};

fn mixed_net(seed: u64, in_dim: usize, out_dim: usize) -> robnet_core::nn::Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = [Activation::Relu, Activation::Clamp { lo: -1.0, hi: 1.0 }, Activation::Identity];
    random_net(&mut rng, &[in_dim, 5, 4, out_dim], &acts, 1.2, 0.3)
}

fn spec_of(kind: PropertyKind, eps: f64) -> PropertySpec {
    match kind {
        PropertyKind::Sr => PropertySpec::standard(eps, 0.4).unwrap(),
        PropertyKind::Cr => PropertySpec::classification(eps).unwrap(),
        PropertyKind::Scr => PropertySpec::strong_classification(eps, 0.3, false).unwrap(),
        PropertyKind::Lr => PropertySpec::lipschitz(eps, 2.5).unwrap(),
    }
}

#[test]
fn rhs_holds_iff_margin_nonpositive_across_all_kinds() {
    let kinds = [PropertyKind::Sr, PropertyKind::Cr, PropertyKind::Scr, PropertyKind::Lr];
    for kind in kinds {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut held = 0;
        let mut violated = 0;
        for trial in 0..1000u64 {
            let net = mixed_net(trial % 7, 3, 3);
            let spec = spec_of(kind, 0.3);
            let center: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.6..0.6)).collect();
            let label = rng.gen_range(0..3);
            let candidate = &sample_ball(&center, spec.epsilon, 1, InputDomain::Unbounded, &mut rng)[0];
            let holds = spec.rhs_holds(&net, &center, label, candidate).unwrap();
            let margin = spec.violation_margin(&net, &center, label, candidate).unwrap();
            assert!(
                holds == (margin <= 0.0),
                "{kind:?} trial {trial}: holds={holds} but margin={margin}"
            );
            if holds {
                held += 1;
            } else {
                violated += 1;
            }
        }
        assert!(held > 50 && violated > 50, "{kind:?} trials are one-sided: {held}/{violated}");
    }
}

#[test]
fn lipschitz_rhs_implies_standard_rhs_with_scaled_delta() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut implications = 0;
    for trial in 0..1000u64 {
        let net = mixed_net(trial % 5, 2, 2);
        let eps = rng.gen_range(0.05..0.4);
        let l = rng.gen_range(0.5..4.0);
        let lr = PropertySpec::lipschitz(eps, l).unwrap();
        let sr = PropertySpec::standard(eps, eps * l).unwrap();
        let center: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let candidate = &sample_ball(&center, eps, 1, InputDomain::Unbounded, &mut rng)[0];
        if lr.rhs_holds(&net, &center, 0, candidate).unwrap() {
            assert!(
                sr.rhs_holds(&net, &center, 0, candidate).unwrap(),
                "trial {trial}: LR holds but SR(eps*L) does not"
            );
            implications += 1;
        }
    }
    assert!(implications > 100, "too few LR-holding trials to be meaningful: {implications}");
}

#[test]
fn strong_classification_implies_classification_on_probability_vectors() {
    // The implication needs normalized outputs, so it is checked directly
    // on synthetic probability vectors through the margin arithmetic.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut implications = 0;
    for trial in 0..2000u64 {
        let m = rng.gen_range(2..6);
        let mut v: Vec<f64> = (0..m).map(|_| rng.gen_range(1e-3..1.0_f64)).collect();
        // Half the trials concentrate mass on one class so the implication
        // premise actually fires.
        let label = rng.gen_range(0..m);
        if trial % 2 == 0 {
            v[label] += rng.gen_range(1.0..4.0);
        }
        let total: f64 = v.iter().sum();
        for x in &mut v {
            *x /= total;
        }
        let eta = rng.gen_range(0.500001..0.9);
        let scr = PropertySpec::strong_classification(0.1, eta, false).unwrap();
        let cr = PropertySpec::classification(0.1).unwrap();
        let center_out = vec![0.0; m];
        let scr_margin = scr.margin_from_outputs(&center_out, &v, label, 0.0);
        if scr_margin <= 0.0 {
            let cr_margin = cr.margin_from_outputs(&center_out, &v, label, 0.0);
            assert!(
                cr_margin < 0.0,
                "trial {trial}: score {} >= eta {eta} > 0.5 must make the label the strict argmax",
                v[label]
            );
            implications += 1;
        }
    }
    assert!(implications > 200, "too few SCR-holding trials: {implications}");
}

#[test]
fn violation_ast_matches_negated_rhs_pointwise() {
    let kinds = [PropertyKind::Sr, PropertyKind::Cr, PropertyKind::Scr, PropertyKind::Lr];
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for kind in kinds {
        for trial in 0..250u64 {
            let net = mixed_net(100 + trial % 6, 2, 3);
            let spec = spec_of(kind, 0.25);
            let center: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let label = rng.gen_range(0..3);
            let constraint = spec.to_constraint(&net, &center, label).unwrap();
            for candidate in sample_ball(&center, spec.epsilon, 4, InputDomain::Unbounded, &mut rng)
            {
                let out = net.eval(&candidate);
                let holds = spec.rhs_holds(&net, &center, label, &candidate).unwrap();
                assert!(
                    constraint.eval(&candidate, &out) == !holds,
                    "{kind:?} trial {trial}: AST and RHS disagree at {candidate:?}"
                );
            }
        }
    }
}

#[test]
fn violation_ast_has_the_documented_disjunct_shape() {
    let net2 = mixed_net(1, 2, 2);
    let net3 = mixed_net(2, 2, 3);
    let sr = PropertySpec::standard(0.1, 0.5).unwrap();
    let dnf = sr.to_constraint(&net2, &[0.0, 0.0], 0).unwrap().dnf();
    assert!(dnf.len() == 4, "SR over 2 outputs: 2 outputs x 2 signs");
    assert!(dnf.iter().all(|c| c.len() == 1), "SR disjuncts are single comparisons");

    let cr = PropertySpec::classification(0.1).unwrap();
    let dnf = cr.to_constraint(&net3, &[0.0, 0.0], 1).unwrap().dnf();
    assert!(dnf.len() == 2, "CR with 3 classes: one disjunct per competitor");
    assert!(dnf.iter().all(|c| c.len() == 1));

    let scr = PropertySpec::strong_classification(0.1, 0.3, false).unwrap();
    let dnf = scr.to_constraint(&net3, &[0.0, 0.0], 2).unwrap().dnf();
    assert!(dnf.len() == 1 && dnf[0].len() == 1, "SCR is a single threshold comparison");

    let lr = PropertySpec::lipschitz(0.1, 2.0).unwrap();
    let dnf = lr.to_constraint(&net2, &[0.0, 0.0], 0).unwrap().dnf();
    assert!(dnf.len() == 4, "LR over 2 outputs: 2 outputs x 2 signs");
    assert!(dnf.iter().all(|c| c.len() == 4), "each LR disjunct bounds both inputs on both sides");
}

#[test]
fn candidates_outside_the_ball_are_rejected() {
    let net = mixed_net(3, 2, 2);
    let spec = PropertySpec::standard(0.1, 0.5).unwrap();
    let err = spec.rhs_holds(&net, &[0.0, 0.0], 0, &[0.5, 0.0]).unwrap_err();
    assert!(matches!(err, PropertyError::OutsideBall { .. }), "got {err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Margin arithmetic from raw outputs: holds iff nonpositive, under
    /// arbitrary finite outputs rather than network-generated ones.
    #[test]
    fn margin_sign_is_consistent_from_raw_outputs(
        center_out in prop::collection::vec(-5.0_f64..5.0, 2..5),
        cand_shift in prop::collection::vec(-5.0_f64..5.0, 2..5),
        label in 0usize..2,
        delta in 0.01_f64..3.0,
        dist_in in 0.0_f64..0.5,
    ) {
        let m = center_out.len().min(cand_shift.len());
        let center_out = &center_out[..m];
        let cand_out: Vec<f64> =
            center_out.iter().zip(&cand_shift[..m]).map(|(a, b)| a + b).collect();
        let sr = PropertySpec::standard(0.5, delta).unwrap();
        let margin = sr.margin_from_outputs(center_out, &cand_out, label, dist_in);
        let max_dev = center_out
            .iter()
            .zip(&cand_out)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        prop_assert!((margin <= 0.0) == (max_dev <= delta));

        let lr = PropertySpec::lipschitz(0.5, 2.0).unwrap();
        let margin = lr.margin_from_outputs(center_out, &cand_out, label, dist_in);
        prop_assert!((margin <= 0.0) == (max_dev <= 2.0 * dist_in));
    }

    /// The LR -> SR implication holds for every sampled candidate, not just
    /// seeded ones.
    #[test]
    fn lipschitz_implies_standard_proptest(
        seed in 0u64..50,
        eps in 0.05_f64..0.3,
        l in 0.5_f64..3.0,
        frac in prop::collection::vec(-1.0_f64..1.0, 2),
    ) {
        let net = mixed_net(seed, 2, 2);
        let center = [0.1, -0.1];
        let candidate: Vec<f64> =
            center.iter().zip(&frac).map(|(c, f)| c + f * eps).collect();
        let lr = PropertySpec::lipschitz(eps, l).unwrap();
        let sr = PropertySpec::standard(eps, eps * l).unwrap();
        if lr.rhs_holds(&net, &center, 0, &candidate).unwrap() {
            prop_assert!(sr.rhs_holds(&net, &center, 0, &candidate).unwrap());
        }
    }
}
