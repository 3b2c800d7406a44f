//! Desk-scale test substrate: a synthetic "bright square in quadrant q"
//! dataset and small CNNs trained on it.
//!
//! The salient region of every image is known by construction, which makes
//! localization and sanity statistics checkable without external data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bridge::{argmax, softmax, Classifier, ImageTensor, Preprocessing};
use crate::error::Result;
use crate::metrics::{ObjectAnnotation, Region};
use crate::nn::{BackwardUntil, Conv2d, Gradients, Layer, LayerKind, Linear, Network};

pub const IMAGE_SIDE: usize = 64;
pub const SQUARE_SIDE: usize = 16;
pub const NUM_CLASSES: usize = 4;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["top_left", "top_right", "bottom_left", "bottom_right"];

/// One synthetic image with its quadrant label and square location.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantSample {
    pub image: ImageTensor,
    pub label: usize,
    /// Inclusive `(x0, y0, x1, y1)` of the bright square.
    pub square: (usize, usize, usize, usize),
}

impl QuadrantSample {
    /// Inclusive `(x0, y0, x1, y1)` of the labelled quadrant.
    pub fn quadrant(&self) -> (usize, usize, usize, usize) {
        quadrant_box(self.label)
    }

    pub fn square_annotation(&self) -> ObjectAnnotation {
        let (x0, y0, x1, y1) = self.square;
        ObjectAnnotation { class: self.label, region: Region::Box { x0, y0, x1, y1 } }
    }

    pub fn quadrant_annotation(&self) -> ObjectAnnotation {
        let (x0, y0, x1, y1) = self.quadrant();
        ObjectAnnotation { class: self.label, region: Region::Box { x0, y0, x1, y1 } }
    }
}

pub fn quadrant_box(label: usize) -> (usize, usize, usize, usize) {
    let half = IMAGE_SIDE / 2;
    let (qx, qy) = (label % 2, label / 2);
    (qx * half, qy * half, qx * half + half - 1, qy * half + half - 1)
}

/// `n` images with labels cycling through the four quadrants.
pub fn quadrant_dataset(n: usize, seed: u64) -> Vec<QuadrantSample> {
    let pre = Preprocessing::symmetric(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = IMAGE_SIDE / 2;
    (0..n)
        .map(|i| {
            let label = i % NUM_CLASSES;
            let (qx, qy) = (label % 2, label / 2);
            let x0 = qx * half + rng.random_range(0..=half - SQUARE_SIDE);
            let y0 = qy * half + rng.random_range(0..=half - SQUARE_SIDE);
            let color: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.6..1.0));
            let plane = IMAGE_SIDE * IMAGE_SIDE;
            let mut data = vec![0.0; 3 * plane];
            for (c, chan) in data.chunks_mut(plane).enumerate() {
                for (idx, v) in chan.iter_mut().enumerate() {
                    let (r, col) = (idx / IMAGE_SIDE, idx % IMAGE_SIDE);
                    let inside = (y0..y0 + SQUARE_SIDE).contains(&r)
                        && (x0..x0 + SQUARE_SIDE).contains(&col);
                    let raw = if inside {
                        (color[c] + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0)
                    } else {
                        rng.random_range(0.0..0.25)
                    };
                    *v = pre.normalize(c, raw);
                }
            }
            QuadrantSample {
                image: ImageTensor::from_data(3, IMAGE_SIDE, IMAGE_SIDE, data)
                    .expect("generated image is valid"),
                label,
                square: (x0, y0, x0 + SQUARE_SIDE - 1, y0 + SQUARE_SIDE - 1),
            }
        })
        .collect()
}

/// conv1 -> pool1 -> conv2 -> pool2 -> conv3 -> 2x2 adaptive pool -> fc.
pub fn quadrant_cnn(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        Layer::new("conv1", LayerKind::Conv2d(Conv2d::new(3, 8, 3, 1, true, &mut rng))),
        Layer::new("pool1", LayerKind::MaxPool2d { size: 2 }),
        Layer::new("conv2", LayerKind::Conv2d(Conv2d::new(8, 16, 3, 1, true, &mut rng))),
        Layer::new("pool2", LayerKind::MaxPool2d { size: 2 }),
        Layer::new("conv3", LayerKind::Conv2d(Conv2d::new(16, 16, 3, 1, true, &mut rng))),
        Layer::new("pool3", LayerKind::AdaptiveAvgPool2d { height: 2, width: 2 }),
        Layer::new("fc", LayerKind::Linear(Linear::new(64, NUM_CLASSES, &mut rng))),
    ];
    Network::new("toy-quadrant-cnn", 3, NUM_CLASSES, layers, Preprocessing::symmetric(3))
        .expect("static architecture is valid")
}

/// One convolution, global average pooling, and a linear head; its layer
/// gradients have a closed form.
pub fn linear_toy(seed: u64, channels: usize, bias: bool) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = Conv2d::new(3, channels, 3, 1, true, &mut rng);
    let mut fc = Linear::new(channels, NUM_CLASSES, &mut rng);
    if bias {
        conv.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        fc.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let layers = vec![
        Layer::new("conv1", LayerKind::Conv2d(conv)),
        Layer::new("gap", LayerKind::AdaptiveAvgPool2d { height: 1, width: 1 }),
        Layer::new("fc", LayerKind::Linear(fc)),
    ];
    Network::new("toy-linear", 3, NUM_CLASSES, layers, Preprocessing::symmetric(3))
        .expect("static architecture is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop early once training accuracy reaches this fraction.
    pub stop_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 6, batch_size: 16, learning_rate: 3e-3, seed: 0, stop_accuracy: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Fraction of samples whose prediction equals their label.
pub fn accuracy(model: &dyn Classifier, samples: &[QuadrantSample]) -> Result<f64> {
    let correct: Result<Vec<bool>> = samples
        .par_iter()
        .map(|s| Ok(model.predict(&s.image)?.label == s.label))
        .collect();
    let correct = correct?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / samples.len().max(1) as f64)
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn update(&mut self, net: &mut Network, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (((params, g), m), v) in net
            .params_mut()
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.m.0)
            .zip(&mut self.v.0)
        {
            let Some((weight, bias)) = params else { continue };
            for (p, (gi, (mi, vi))) in weight
                .iter_mut()
                .chain(bias.iter_mut())
                .zip(g.weight.iter().chain(&g.bias).zip(
                    m.weight.iter_mut().chain(m.bias.iter_mut()).zip(v.weight.iter_mut().chain(v.bias.iter_mut())),
                ))
            {
                *mi = Self::BETA1 * *mi + (1.0 - Self::BETA1) * gi;
                *vi = Self::BETA2 * *vi + (1.0 - Self::BETA2) * gi * gi;
                *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Cross-entropy loss and parameter gradients for one sample.
fn sample_gradients(net: &Network, sample: &QuadrantSample) -> Result<(f64, Gradients)> {
    let trace = net.forward_trace(sample.image.stack())?;
    let logits = trace.last().expect("non-empty network").data();
    let mut g = softmax(logits);
    let loss = -g[sample.label].max(1e-300).ln();
    g[sample.label] -= 1.0;
    let mut grads = Gradients::zeros_like(net);
    net.backward(sample.image.stack(), &trace, &g, BackwardUntil::Input, Some(&mut grads));
    Ok((loss, grads))
}

/// Mini-batch Adam on cross-entropy. Deterministic for a fixed config:
/// per-sample gradients are computed in parallel but summed in order.
pub fn train(net: &mut Network, samples: &[QuadrantSample], cfg: &TrainConfig) -> Result<TrainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam { m: Gradients::zeros_like(net), v: Gradients::zeros_like(net), step: 0 };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport { epochs_run: 0, final_loss: f64::NAN, train_accuracy: 0.0 };
    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample: Result<Vec<(f64, Gradients)>> =
                batch.par_iter().map(|&i| sample_gradients(net, &samples[i])).collect();
            let mut total = Gradients::zeros_like(net);
            for (loss, g) in per_sample? {
                epoch_loss += loss;
                total.add_assign(&g);
            }
            let scale = 1.0 / batch.len() as f64;
            for pg in &mut total.0 {
                pg.weight.iter_mut().chain(pg.bias.iter_mut()).for_each(|v| *v *= scale);
            }
            adam.update(net, &total, cfg.learning_rate);
        }
        report.epochs_run = epoch + 1;
        report.final_loss = epoch_loss / samples.len() as f64;
        report.train_accuracy = accuracy(net, samples)?;
        if cfg.stop_accuracy.is_some_and(|a| report.train_accuracy >= a) {
            break;
        }
    }
    Ok(report)
}

/// Seeds for the standard fixture: training data, held-out data, weights.
pub const TRAIN_SEED: u64 = 11;
pub const HELD_OUT_SEED: u64 = 12_345;
pub const WEIGHT_SEED: u64 = 3;
pub const TRAIN_SIZE: usize = 400;
/// Ladder ceiling for 64x64 inputs: the default 1000/224 upscaling ratio.
pub const FIXTURE_MAX_SIZE: (usize, usize) = (286, 286);

/// Trains the quadrant CNN on `train_size` generated images.
pub fn trained_quadrant_model(train_size: usize, cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    let data = quadrant_dataset(train_size, TRAIN_SEED);
    let mut net = quadrant_cnn(WEIGHT_SEED);
    let report = train(&mut net, &data, cfg)?;
    Ok((net, report))
}

/// Index of the predicted class.
pub fn predicted(model: &dyn Classifier, image: &ImageTensor) -> Result<usize> {
    Ok(argmax(&model.logits(image)?))
}
