//! The narrow interface through which the saliency, metric, sanity and
//! attack code touches a classifier.
//!
//! A [`Classifier`] accepts images of any spatial size at or above its
//! minimum, reports pre-softmax logits, and can capture the activations of
//! a named layer together with the gradient of one class logit with respect
//! to those activations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::resample::{resize_stack, RasterStack};

/// Smallest spatial extent accepted for an input image.
pub const MIN_IMAGE_SIDE: usize = 8;

/// A preprocessed `c x h x w` model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor(RasterStack);

impl ImageTensor {
    pub fn new(stack: RasterStack) -> Result<Self> {
        let (c, h, w) = stack.shape();
        if c != 1 && c != 3 {
            return Err(invalid(format!("image must have 1 or 3 channels, got {c}")));
        }
        if h < MIN_IMAGE_SIDE || w < MIN_IMAGE_SIDE {
            return Err(invalid(format!(
                "image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {h}x{w}"
            )));
        }
        if !stack.is_finite() {
            return Err(invalid("image contains non-finite values"));
        }
        Ok(Self(stack))
    }

    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(RasterStack::new(channels, height, width, data)?)
    }

    pub fn channels(&self) -> usize {
        self.0.channels()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.0.height(), self.0.width())
    }

    pub fn stack(&self) -> &RasterStack {
        &self.0
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn into_stack(self) -> RasterStack {
        self.0
    }

    /// Bilinear resize of every channel.
    pub fn resized(&self, target: (usize, usize)) -> Result<Self> {
        Self::new(resize_stack(&self.0, target)?)
    }

    /// Multiplies every channel by the same per-pixel `mask`.
    pub fn masked(&self, mask: &[f64]) -> Result<Self> {
        let plane = self.0.plane_len();
        if mask.len() != plane {
            return Err(invalid(format!(
                "mask has {} values, image plane has {plane}",
                mask.len()
            )));
        }
        let mut out = self.0.clone();
        for k in 0..out.channels() {
            for (v, m) in out.channel_mut(k).iter_mut().zip(mask) {
                *v *= m;
            }
        }
        Self::new(out)
    }
}

/// Per-channel normalization applied to raw pixel values in `value_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Raw value range before normalization, usually `[0, 1]`.
    pub value_range: (f64, f64),
}

impl Preprocessing {
    pub fn new(mean: Vec<f64>, std: Vec<f64>, value_range: (f64, f64)) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() {
            return Err(invalid("preprocessing mean/std must be non-empty and equal length"));
        }
        if std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(invalid("preprocessing std must be positive"));
        }
        if !(value_range.0 < value_range.1) {
            return Err(invalid("preprocessing value range must be increasing"));
        }
        Ok(Self { mean, std, value_range })
    }

    /// Mean 0.5, std 0.5 over raw `[0, 1]`, mapping inputs to `[-1, 1]`.
    pub fn symmetric(channels: usize) -> Self {
        Self {
            mean: vec![0.5; channels],
            std: vec![0.5; channels],
            value_range: (0.0, 1.0),
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn idx(&self, channel: usize) -> usize {
        if self.mean.len() == 1 {
            0
        } else {
            channel
        }
    }

    pub fn normalize(&self, channel: usize, raw: f64) -> f64 {
        let i = self.idx(channel);
        (raw - self.mean[i]) / self.std[i]
    }

    pub fn denormalize(&self, channel: usize, value: f64) -> f64 {
        let i = self.idx(channel);
        value * self.std[i] + self.mean[i]
    }

    /// Valid normalized range of `channel`.
    pub fn normalized_range(&self, channel: usize) -> (f64, f64) {
        (
            self.normalize(channel, self.value_range.0),
            self.normalize(channel, self.value_range.1),
        )
    }

    /// Converts a raw-unit distance into normalized units for `channel`.
    pub fn scale_to_normalized(&self, channel: usize, raw: f64) -> f64 {
        raw / self.std[self.idx(channel)]
    }
}

/// The outcome of a forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    /// Pre-softmax class scores.
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(invalid("empty score vector"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(invalid("non-finite class scores"));
        }
        let label = argmax(&scores);
        let probabilities = softmax(&scores);
        Ok(Self { label, scores, probabilities })
    }
}

/// First index of the largest value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// First index of the smallest value.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Names one layer of a model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerRef(pub String);

impl LayerRef {
    pub fn new(path: impl Into<String>) -> Self {
        Self(path.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LayerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Activations of one layer and the gradient of a class logit with respect
/// to them, captured from a single forward/backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensors {
    pub layer: LayerRef,
    pub target: usize,
    pub activations: RasterStack,
    pub gradients: RasterStack,
    /// Scores of the forward pass the tensors came from.
    pub scores: Vec<f64>,
}

impl LayerTensors {
    pub fn new(
        layer: LayerRef,
        target: usize,
        activations: RasterStack,
        gradients: RasterStack,
        scores: Vec<f64>,
    ) -> Result<Self> {
        if activations.shape() != gradients.shape() {
            return Err(Error::CaptureFailed(format!(
                "activation shape {:?} != gradient shape {:?}",
                activations.shape(),
                gradients.shape()
            )));
        }
        if !activations.is_finite() || !gradients.is_finite() {
            return Err(Error::CaptureFailed(format!(
                "non-finite tensors captured at {layer}"
            )));
        }
        Ok(Self { layer, target, activations, gradients, scores })
    }
}

/// Maps the logits of a forward pass to the gradient of a scalar loss with
/// respect to those logits.
pub type LossGradient<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

/// A differentiable image classifier.
///
/// Implementations run in inference mode: no call mutates observable state.
pub trait Classifier: Send + Sync {
    fn id(&self) -> &str;

    fn num_classes(&self) -> usize;

    fn input_channels(&self) -> usize;

    fn preprocessing(&self) -> &Preprocessing;

    /// Pre-softmax class scores.
    fn logits(&self, image: &ImageTensor) -> Result<Vec<f64>>;

    fn predict(&self, image: &ImageTensor) -> Result<Prediction> {
        Prediction::from_scores(self.logits(image)?)
    }

    /// Activations at `layer` and `d logit[target] / d activations`.
    fn capture(&self, image: &ImageTensor, layer: &LayerRef, target: usize)
        -> Result<LayerTensors>;

    /// Runs the forward pass with the output of `layer` replaced by
    /// `activations` and returns the resulting logits.
    fn logits_with_injection(
        &self,
        image: &ImageTensor,
        layer: &LayerRef,
        activations: &RasterStack,
    ) -> Result<Vec<f64>>;

    /// Logits at `image` and the gradient of a loss with respect to the
    /// input; `loss_grad` turns logits into `d loss / d logits`.
    fn input_gradient(
        &self,
        image: &ImageTensor,
        loss_grad: &LossGradient<'_>,
    ) -> Result<(Vec<f64>, RasterStack)>;

    /// Parametric layers, output layer first.
    fn list_layers(&self) -> Vec<LayerRef>;

    /// The last convolutional layer unless configured otherwise.
    fn default_layer(&self) -> Result<LayerRef>;

    /// An independent copy whose first `depth` layers of
    /// [`list_layers`](Self::list_layers) carry re-drawn parameters.
    fn randomize_through(&self, depth: usize, seed: u64) -> Result<Box<dyn Classifier>>;

    /// Whether concurrent calls on one handle are safe.
    fn is_reentrant(&self) -> bool {
        true
    }

    /// Whether registration wrapped a fixed-size head in an adaptive pooling shim.
    fn pooling_shim(&self) -> Option<(usize, usize)> {
        None
    }
}

/// Registration descriptor for a model, typically read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub id: String,
    /// Path to the serialized network, relative to the descriptor file.
    pub weights: String,
    pub preprocessing: Preprocessing,
    #[serde(default)]
    pub default_layer: Option<String>,
    /// Spatial size the network was trained at.
    pub input_size: (usize, usize),
    #[serde(default = "default_min_input")]
    pub min_input: (usize, usize),
    #[serde(default)]
    pub classes: Vec<String>,
}

fn default_min_input() -> (usize, usize) {
    (MIN_IMAGE_SIDE, MIN_IMAGE_SIDE)
}

impl ModelDescriptor {
    /// Resolves a class given either as an index or a name.
    pub fn class_index(&self, label: &str) -> Option<usize> {
        if let Ok(i) = label.parse::<usize>() {
            return Some(i);
        }
        self.classes.iter().position(|c| c == label)
    }
}
