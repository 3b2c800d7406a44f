mod common;

use cameras::attack::{least_likely_label, pgd, AttackConfig, DEFAULT_RAW_EPSILON};
use cameras::saliency::{SaliencyMethod, SaliencyOptions};
use cameras::sanity::{
    adversarial_correspondence, cascading_randomization, correspondence_with, edge_map, spearman, verdict,
    Criterion, EdgeControl, Evidence, MethodFn,
};
use cameras::{Error, Preprocessing};
use common::{held_out, model};
use proptest::prelude::*;

fn gradcam() -> MethodFn {
    MethodFn { method: SaliencyMethod::Gradcam, options: SaliencyOptions::default() }
}

proptest! {
    #[test]
    fn spearman_is_symmetric_and_bounded(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let r = spearman(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert_eq!(r, spearman(&b, &a).unwrap());
    }

    #[test]
    fn spearman_ignores_monotone_transforms(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let stretched: Vec<f64> = a.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
        prop_assert!((spearman(&a, &b).unwrap() - spearman(&stretched, &b).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn curve_starts_with_the_original_map() {
    let net = model();
    let image = &held_out()[0].image;
    let curve = cascading_randomization(net, image, &gradcam(), &[1, 2, 3, 4], 0).unwrap();
    let depths: Vec<usize> = curve.points.iter().map(|p| p.depth).collect();
    assert_eq!(depths, [0, 1, 2, 3, 4]);
    assert_eq!(curve.points[0].similarity, Some(1.0));
    let layers: Vec<&str> = curve.points[1..].iter().map(|p| p.layer.as_str()).collect();
    assert_eq!(layers, ["fc", "conv3", "conv2", "conv1"]);
    assert_eq!(curve, cascading_randomization(net, image, &gradcam(), &[1, 2, 3, 4], 0).unwrap());
}

#[test]
fn depth_lists_are_validated() {
    let net = model();
    let image = &held_out()[0].image;
    for bad in [&[0usize][..], &[5], &[2, 1], &[1, 1]] {
        assert!(cascading_randomization(net, image, &gradcam(), bad, 0).is_err());
    }
}

#[test]
fn edge_control_never_changes_and_fails() {
    let net = model();
    let image = &held_out()[1].image;
    let curve = cascading_randomization(net, image, &EdgeControl, &[1, 2, 3, 4], 3).unwrap();
    assert!(curve.points.iter().all(|p| p.similarity == Some(1.0)));
    let v = verdict("edge_control", Some(Evidence::Curve(curve)), Criterion::MeanSimilarityBelow { threshold: 0.3 }).unwrap();
    assert!(!v.passed);
    assert_eq!(v.statistic, 1.0);
    let json = serde_json::to_value(&v).unwrap();
    assert_eq!(json["criterion"]["threshold"], 0.3);
    assert!(json["evidence"]["value"]["points"].is_array());
}

#[test]
fn gradcam_decorrelates_under_randomization() {
    let net = model();
    let mean: f64 = held_out()[..6]
        .iter()
        .map(|s| {
            cascading_randomization(net, &s.image, &gradcam(), &[1, 2, 3, 4], 0)
                .unwrap()
                .mean_randomized_similarity()
                .unwrap()
        })
        .sum::<f64>()
        / 6.0;
    assert!(mean < 0.3, "{mean}");
}

#[test]
fn correspondence_needs_a_successful_attack() {
    let net = model();
    let s = &held_out()[0];
    let map = SaliencyMethod::Gradcam.compute(net, &s.image, &SaliencyOptions::default()).unwrap();
    let mut weak = AttackConfig::from_raw_epsilon(DEFAULT_RAW_EPSILON, &Preprocessing::symmetric(3)).unwrap();
    weak.max_iterations = 5;
    assert!(matches!(
        adversarial_correspondence(net, &s.image, &map, &weak),
        Err(Error::SanityInconclusive(_))
    ));
    let strong = AttackConfig::from_raw_epsilon(128.0 / 255.0, &Preprocessing::symmetric(3)).unwrap();
    let r = adversarial_correspondence(net, &s.image, &map, &strong).unwrap();
    assert!((-1.0..=1.0).contains(&r));
    let target = least_likely_label(net, &s.image).unwrap();
    let attack = pgd(net, &s.image, target, &strong, None).unwrap();
    assert_eq!(correspondence_with(&attack, &map).unwrap(), r);
    let control = correspondence_with(&attack, &edge_map(&s.image).unwrap()).unwrap();
    let v = verdict("gradcam", Some(Evidence::Correlation(r)), Criterion::ExceedsControl { control }).unwrap();
    assert_eq!(v.passed, r > control);
}

#[test]
fn mismatched_evidence_is_rejected() {
    assert!(verdict("x", None, Criterion::MeanSimilarityBelow { threshold: 0.3 }).is_err());
    assert!(verdict("x", Some(Evidence::Correlation(0.2)), Criterion::MeanSimilarityBelow { threshold: 0.3 }).is_err());
}
