mod common;

use cameras::resample::{bilinear_resize, resize_stack, roundtrip_error, Raster2D, RasterStack};
use common::{max_abs_diff, reference_bilinear, reference_field};
use proptest::prelude::*;

fn raster(max_side: usize) -> impl Strategy<Value = Raster2D> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(h, w)| {
        prop::collection::vec(-10.0f64..10.0, h * w)
            .prop_map(move |v| Raster2D::new(h, w, v).unwrap())
    })
}

proptest! {
    #[test]
    fn matches_reference(src in raster(8), h in 1usize..=32, w in 1usize..=32) {
        let out = bilinear_resize(&src, (h, w)).unwrap();
        prop_assert!(max_abs_diff(out.values(), &reference_bilinear(&src, (h, w))) <= 1e-9);
    }

    #[test]
    fn identity_is_bit_exact(src in raster(12)) {
        prop_assert_eq!(bilinear_resize(&src, src.dims()).unwrap(), src);
    }

    #[test]
    fn constants_preserved(h in 1usize..8, w in 1usize..8, th in 1usize..40, tw in 1usize..40, v in -5.0f64..5.0) {
        let out = bilinear_resize(&Raster2D::filled(h, w, v).unwrap(), (th, tw)).unwrap();
        prop_assert!(out.values().iter().all(|x| (x - v).abs() <= 1e-9));
    }

    #[test]
    fn output_within_source_range(src in raster(8), h in 1usize..=24, w in 1usize..=24) {
        let out = bilinear_resize(&src, (h, w)).unwrap();
        prop_assert!(out.min() >= src.min() - 1e-12 && out.max() <= src.max() + 1e-12);
    }

    #[test]
    fn linear_in_the_source(
        (x, y) in (1usize..=6, 1usize..=6).prop_flat_map(|(h, w)| (
            prop::collection::vec(-3.0f64..3.0, h * w).prop_map(move |v| Raster2D::new(h, w, v).unwrap()),
            prop::collection::vec(-3.0f64..3.0, h * w).prop_map(move |v| Raster2D::new(h, w, v).unwrap()),
        )),
        a in -2.0f64..2.0, b in -2.0f64..2.0, t in (1usize..20, 1usize..20),
    ) {
        let combo = Raster2D::new(x.height(), x.width(),
            x.values().iter().zip(y.values()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let lhs = bilinear_resize(&combo, t).unwrap();
        let rx = bilinear_resize(&x, t).unwrap();
        let ry = bilinear_resize(&y, t).unwrap();
        let rhs: Vec<f64> = rx.values().iter().zip(ry.values()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(max_abs_diff(lhs.values(), &rhs) <= 1e-9);
    }

    #[test]
    fn stack_resizes_channelwise(k in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let data: Vec<f64> = (0..k * h * w).map(|i| ((i as u64).wrapping_mul(seed | 1) % 97) as f64 / 7.0).collect();
        let stack = RasterStack::new(k, h, w, data).unwrap();
        let out = resize_stack(&stack, (2 * h, 2 * w)).unwrap();
        for c in 0..k {
            let single = bilinear_resize(&stack.channel_raster(c).unwrap(), (2 * h, 2 * w)).unwrap();
            prop_assert_eq!(out.channel(c), single.values());
        }
    }
}

#[test]
fn constant_reference_roundtrips_exactly() {
    let r = Raster2D::filled(16, 16, 0.7).unwrap();
    for m in [1, 3, 8, 15] {
        assert!(roundtrip_error(&r, (m, m)).unwrap() <= 1e-12);
    }
}

#[test]
fn roundtrip_error_is_monotone_on_reference_field() {
    let f = reference_field();
    let errors: Vec<f64> = [4, 8, 12, 16].iter().map(|&m| roundtrip_error(&f, (m, m)).unwrap()).collect();
    assert!(errors.windows(2).all(|p| p[0] >= p[1]), "{errors:?}");
    assert_eq!(errors[3], 0.0);
}

#[test]
fn mean_error_bounded_by_smallest_size_error() {
    let f = reference_field();
    let errors: Vec<f64> = [4, 8, 12].iter().map(|&m| roundtrip_error(&f, (m, m)).unwrap()).collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let max = errors.iter().cloned().fold(f64::MIN, f64::max);
    assert!(mean <= max);
    assert_eq!(max, errors[0]);
}

#[test]
fn roundtrip_error_matches_reference_interpolator() {
    let f = reference_field();
    for m in [4, 8, 12] {
        let low = Raster2D::new(m, m, reference_bilinear(&f, (m, m))).unwrap();
        let back = reference_bilinear(&low, (16, 16));
        let expected = f.values().iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!((roundtrip_error(&f, (m, m)).unwrap() - expected).abs() <= 1e-12);
    }
}

#[test]
fn oversized_low_dims_rejected() {
    assert!(roundtrip_error(&reference_field(), (17, 4)).is_err());
}
