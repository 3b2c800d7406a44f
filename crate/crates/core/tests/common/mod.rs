//! Shared fixtures and independent reference implementations for the
//! integration tests.
#![allow(dead_code)]

use std::sync::OnceLock;

use cameras::fixture::{
    quadrant_dataset, trained_quadrant_model, QuadrantSample, TrainConfig, HELD_OUT_SEED,
    TRAIN_SIZE,
};
use cameras::nn::Network;
use cameras::resample::{Raster2D, RasterStack};
use cameras::LayerTensors;

/// The trained quadrant CNN, built once per test binary.
pub fn model() -> &'static Network {
    static MODEL: OnceLock<Network> = OnceLock::new();
    MODEL.get_or_init(|| {
        let (net, report) =
            trained_quadrant_model(TRAIN_SIZE, &TrainConfig::default()).expect("training runs");
        assert!(report.train_accuracy >= 0.95, "fixture undertrained: {report:?}");
        net
    })
}

pub fn held_out() -> &'static [QuadrantSample] {
    static DATA: OnceLock<Vec<QuadrantSample>> = OnceLock::new();
    DATA.get_or_init(|| quadrant_dataset(100, HELD_OUT_SEED))
}

/// Direct evaluation of the half-pixel-centre formula, one output cell at a
/// time.
pub fn reference_bilinear(src: &Raster2D, (h, w): (usize, usize)) -> Vec<f64> {
    let (n_r, n_c) = src.dims();
    let coord = |j: usize, n: usize, t: usize| -> (usize, usize, f64) {
        let s = (j as f64 + 0.5) * (n as f64 / t as f64) - 0.5;
        let s = s.max(0.0).min((n - 1) as f64);
        let lo = s.floor() as usize;
        let hi = if lo + 1 < n { lo + 1 } else { lo };
        (lo, hi, s - lo as f64)
    };
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let (r0, r1, fr) = coord(i, n_r, h);
        for j in 0..w {
            let (c0, c1, fc) = coord(j, n_c, w);
            let top = src.get(r0, c0) * (1.0 - fc) + src.get(r0, c1) * fc;
            let bottom = src.get(r1, c0) * (1.0 - fc) + src.get(r1, c1) * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// The pinned smooth reference field `sin(i/5) * cos(j/5)` on 16x16.
pub fn reference_field() -> Raster2D {
    Raster2D::from_fn(16, 16, |i, j| (i as f64 / 5.0).sin() * (j as f64 / 5.0).cos()).unwrap()
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Grad-CAM written out from its definition: channel weights are gradient
/// sums over `m + n`, then a rectified weighted sum, upsampling and min-max
/// normalization.
pub fn reference_gradcam(t: &LayerTensors, out: (usize, usize)) -> Vec<f64> {
    let (k, m, n) = t.activations.shape();
    let mut s = vec![0.0; m * n];
    for c in 0..k {
        let mut wk = 0.0;
        for i in 0..m {
            for j in 0..n {
                wk += t.gradients.data()[c * m * n + i * n + j];
            }
        }
        wk /= (m + n) as f64;
        for p in 0..m * n {
            s[p] += wk * t.activations.data()[c * m * n + p];
        }
    }
    let rect: Vec<f64> = s.iter().map(|v| v.max(0.0)).collect();
    let up = reference_bilinear(&Raster2D::new(m, n, rect).unwrap(), out);
    min_max(&up)
}

/// `normalize(ReLU(sum_k W_k * A_k))` on stacks of equal shape.
pub fn reference_fuse(a: &RasterStack, w: &RasterStack) -> Vec<f64> {
    let plane = a.plane_len();
    let mut s = vec![0.0; plane];
    for c in 0..a.channels() {
        for p in 0..plane {
            s[p] += a.channel(c)[p] * w.channel(c)[p];
        }
    }
    min_max(&s.iter().map(|v| v.max(0.0)).collect::<Vec<_>>())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Central-difference check of `capture` at `count` random coefficients of
/// `layer`: each activation is nudged by `delta` through the injection hook.
///
/// Coefficients where the forward and backward one-sided differences
/// disagree sit within `delta` of a ReLU or max-pool kink, where no
/// derivative exists; those are redrawn and counted in `skipped`.
pub struct FdCheck {
    pub errors: Vec<f64>,
    pub skipped: usize,
}

impl FdCheck {
    pub fn worst(&self) -> f64 {
        self.errors.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn finite_difference_check(
    model: &dyn cameras::Classifier,
    image: &cameras::ImageTensor,
    layer: &cameras::LayerRef,
    target: usize,
    count: usize,
    delta: f64,
    seed: u64,
) -> FdCheck {
    use rand::{Rng, SeedableRng};
    let captured = model.capture(image, layer, target).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let len = captured.activations.data().len();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
    let mut check = FdCheck { errors: Vec::with_capacity(count), skipped: 0 };
    while check.errors.len() < count {
        assert!(check.skipped < 10 * count, "too many kinks sampled");
        let idx = rng.random_range(0..len);
        let eval = |shift: f64| {
            let mut a = captured.activations.clone();
            a.data_mut()[idx] += shift;
            model.logits_with_injection(image, layer, &a).unwrap()[target]
        };
        let (up, mid, down) = (eval(delta), eval(0.0), eval(-delta));
        let (forward, backward) = ((up - mid) / delta, (mid - down) / delta);
        if rel(forward, backward) > 1e-2 && (forward - backward).abs() > 1e-9 {
            check.skipped += 1;
            continue;
        }
        let fd = (up - down) / (2.0 * delta);
        check.errors.push(rel(fd, captured.gradients.data()[idx]));
    }
    check
}
