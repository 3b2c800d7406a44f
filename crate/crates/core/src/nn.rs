//! A small sequential CNN with hand-written backpropagation.
//!
//! This is the in-crate [`Classifier`] adapter: convolutions (optionally
//! followed by ReLU), max pooling, adaptive average pooling and linear
//! layers. Every layer output is addressable by name for activation and
//! gradient capture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bridge::{
    Classifier, ImageTensor, LayerRef, LayerTensors, LossGradient, ModelDescriptor, Preprocessing,
};
use crate::error::{invalid, Error, Result};
use crate::resample::RasterStack;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    /// `(out, in, kernel, kernel)`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

impl Conv2d {
    /// He-initialized convolution.
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        relu: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
        let weight = (0..out_channels * in_channels * kernel * kernel)
            .map(|_| normal.sample(rng))
            .collect();
        Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            weight,
            bias: vec![0.0; out_channels],
            relu,
        }
    }

    fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = (h + 2 * self.padding).checked_sub(self.kernel)? + 1;
        let ow = (w + 2 * self.padding).checked_sub(self.kernel)? + 1;
        Some((oh, ow))
    }

    /// Output columns `x` for which input column `x + kx - padding` is in range.
    fn valid_span(&self, k: usize, in_len: usize, out_len: usize) -> (usize, usize) {
        let lo = self.padding.saturating_sub(k);
        let hi = (in_len + self.padding).saturating_sub(k).min(out_len);
        (lo, hi.max(lo))
    }

    fn forward(&self, x: &RasterStack) -> Option<RasterStack> {
        let (c, h, w) = x.shape();
        if c != self.in_channels {
            return None;
        }
        let (oh, ow) = self.output_dims(h, w)?;
        let k = self.kernel;
        let mut out = vec![0.0; self.out_channels * oh * ow];
        for (o, plane) in out.chunks_mut(oh * ow).enumerate() {
            plane.fill(self.bias[o]);
            for ci in 0..c {
                let src = x.channel(ci);
                for ky in 0..k {
                    let (y0, y1) = self.valid_span(ky, h, oh);
                    for kx in 0..k {
                        let wv = self.weight[((o * c + ci) * k + ky) * k + kx];
                        let (x0, x1) = self.valid_span(kx, w, ow);
                        for y in y0..y1 {
                            let iy = y + ky - self.padding;
                            let dst = &mut plane[y * ow + x0..y * ow + x1];
                            let row = &src[iy * w + x0 + kx - self.padding..iy * w + x1 + kx - self.padding];
                            for (d, s) in dst.iter_mut().zip(row) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
            if self.relu {
                for v in plane.iter_mut() {
                    if !(*v > 0.0) {
                        *v = 0.0;
                    }
                }
            }
        }
        RasterStack::new(self.out_channels, oh, ow, out).ok()
    }

    /// Gradient with respect to the input; parameter gradients are added to
    /// `grads` when given.
    fn backward(
        &self,
        x: &RasterStack,
        out: &RasterStack,
        grad_out: &RasterStack,
        grads: Option<&mut ParamGrad>,
    ) -> RasterStack {
        let (c, h, w) = x.shape();
        let (_, oh, ow) = out.shape();
        let k = self.kernel;
        let mut g = grad_out.clone();
        if self.relu {
            for (gv, ov) in g.data_mut().iter_mut().zip(out.data()) {
                if !(*ov > 0.0) {
                    *gv = 0.0;
                }
            }
        }
        let mut grad_in = vec![0.0; c * h * w];
        let mut pg = grads;
        for o in 0..self.out_channels {
            let gp = g.channel(o);
            if let Some(p) = pg.as_deref_mut() {
                p.bias[o] += gp.iter().sum::<f64>();
            }
            for ci in 0..c {
                let src = x.channel(ci);
                let gi = &mut grad_in[ci * h * w..(ci + 1) * h * w];
                for ky in 0..k {
                    let (y0, y1) = self.valid_span(ky, h, oh);
                    for kx in 0..k {
                        let widx = ((o * c + ci) * k + ky) * k + kx;
                        let wv = self.weight[widx];
                        let (x0, x1) = self.valid_span(kx, w, ow);
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let iy = y + ky - self.padding;
                            let grow = &gp[y * ow + x0..y * ow + x1];
                            let base = iy * w + x0 + kx - self.padding;
                            let srow = &src[base..base + (x1 - x0)];
                            let irow = &mut gi[base..base + (x1 - x0)];
                            for ((gv, s), d) in grow.iter().zip(srow).zip(irow.iter_mut()) {
                                acc += gv * s;
                                *d += wv * gv;
                            }
                        }
                        if let Some(p) = pg.as_deref_mut() {
                            p.weight[widx] += acc;
                        }
                    }
                }
            }
        }
        RasterStack::new(c, h, w, grad_in).expect("input shape is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `(out, in)`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (1.0 / in_features as f64).sqrt()).unwrap();
        Self {
            in_features,
            out_features,
            weight: (0..in_features * out_features).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; out_features],
        }
    }

    fn forward(&self, x: &RasterStack) -> Option<RasterStack> {
        let input = x.data();
        if input.len() != self.in_features {
            return None;
        }
        let out = (0..self.out_features)
            .map(|o| {
                let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
                self.bias[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        RasterStack::new(self.out_features, 1, 1, out).ok()
    }

    fn backward(
        &self,
        x: &RasterStack,
        grad_out: &RasterStack,
        grads: Option<&mut ParamGrad>,
    ) -> RasterStack {
        let input = x.data();
        let g = grad_out.data();
        let mut grad_in = vec![0.0; self.in_features];
        for (o, gv) in g.iter().enumerate() {
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            for (d, wv) in grad_in.iter_mut().zip(row) {
                *d += wv * gv;
            }
        }
        if let Some(p) = grads {
            for (o, gv) in g.iter().enumerate() {
                p.bias[o] += gv;
                let row = &mut p.weight[o * self.in_features..(o + 1) * self.in_features];
                for (d, s) in row.iter_mut().zip(input) {
                    *d += gv * s;
                }
            }
        }
        let (c, h, w) = x.shape();
        RasterStack::new(c, h, w, grad_in).expect("input shape is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d(Conv2d),
    MaxPool2d { size: usize },
    AdaptiveAvgPool2d { height: usize, width: usize },
    Linear(Linear),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
}

impl Layer {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self { name: name.into(), kind }
    }

    fn is_parametric(&self) -> bool {
        matches!(self.kind, LayerKind::Conv2d(_) | LayerKind::Linear(_))
    }

    fn param_lens(&self) -> (usize, usize) {
        match &self.kind {
            LayerKind::Conv2d(c) => (c.weight.len(), c.bias.len()),
            LayerKind::Linear(l) => (l.weight.len(), l.bias.len()),
            _ => (0, 0),
        }
    }

    fn forward(&self, x: &RasterStack) -> Option<RasterStack> {
        match &self.kind {
            LayerKind::Conv2d(c) => c.forward(x),
            LayerKind::MaxPool2d { size } => max_pool(x, *size),
            LayerKind::AdaptiveAvgPool2d { height, width } => adaptive_avg_pool(x, *height, *width),
            LayerKind::Linear(l) => l.forward(x),
        }
    }

    fn backward(
        &self,
        x: &RasterStack,
        out: &RasterStack,
        grad_out: &RasterStack,
        grads: Option<&mut ParamGrad>,
    ) -> RasterStack {
        match &self.kind {
            LayerKind::Conv2d(c) => c.backward(x, out, grad_out, grads),
            LayerKind::MaxPool2d { size } => max_pool_backward(x, *size, grad_out),
            LayerKind::AdaptiveAvgPool2d { .. } => adaptive_avg_pool_backward(x, grad_out),
            LayerKind::Linear(l) => l.backward(x, grad_out, grads),
        }
    }

    fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match &mut self.kind {
            LayerKind::Conv2d(c) => Some((&mut c.weight, &mut c.bias)),
            LayerKind::Linear(l) => Some((&mut l.weight, &mut l.bias)),
            _ => None,
        }
    }
}

fn max_pool(x: &RasterStack, size: usize) -> Option<RasterStack> {
    let (c, h, w) = x.shape();
    let (oh, ow) = (h / size, w / size);
    if oh == 0 || ow == 0 {
        return None;
    }
    let mut out = Vec::with_capacity(c * oh * ow);
    for k in 0..c {
        let src = x.channel(k);
        for y in 0..oh {
            for xx in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..size {
                    for dx in 0..size {
                        m = m.max(src[(y * size + dy) * w + xx * size + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    RasterStack::new(c, oh, ow, out).ok()
}

/// Routes each output gradient to the first maximal input of its window.
fn max_pool_backward(x: &RasterStack, size: usize, grad_out: &RasterStack) -> RasterStack {
    let (c, h, w) = x.shape();
    let (_, oh, ow) = grad_out.shape();
    let mut grad_in = RasterStack::zeros(c, h, w).expect("input shape is valid");
    for k in 0..c {
        let src = x.channel(k);
        let g = grad_out.channel(k);
        let gi = grad_in.channel_mut(k);
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = (y * size) * w + xx * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = (y * size + dy) * w + xx * size + dx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                }
                gi[best] += g[y * ow + xx];
            }
        }
    }
    grad_in
}

/// Window `[floor(i * n / out), ceil((i + 1) * n / out))` of output cell `i`.
fn pool_window(i: usize, n: usize, out: usize) -> (usize, usize) {
    (i * n / out, ((i + 1) * n).div_ceil(out))
}

fn adaptive_avg_pool(x: &RasterStack, oh: usize, ow: usize) -> Option<RasterStack> {
    let (c, h, w) = x.shape();
    let mut out = Vec::with_capacity(c * oh * ow);
    for k in 0..c {
        let src = x.channel(k);
        for i in 0..oh {
            let (y0, y1) = pool_window(i, h, oh);
            for j in 0..ow {
                let (x0, x1) = pool_window(j, w, ow);
                let mut sum = 0.0;
                for y in y0..y1 {
                    sum += src[y * w + x0..y * w + x1].iter().sum::<f64>();
                }
                out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    RasterStack::new(c, oh, ow, out).ok()
}

fn adaptive_avg_pool_backward(x: &RasterStack, grad_out: &RasterStack) -> RasterStack {
    let (c, h, w) = x.shape();
    let (_, oh, ow) = grad_out.shape();
    let mut grad_in = RasterStack::zeros(c, h, w).expect("input shape is valid");
    for k in 0..c {
        let g = grad_out.channel(k);
        let gi = grad_in.channel_mut(k);
        for i in 0..oh {
            let (y0, y1) = pool_window(i, h, oh);
            for j in 0..ow {
                let (x0, x1) = pool_window(j, w, ow);
                let share = g[i * ow + j] / ((y1 - y0) * (x1 - x0)) as f64;
                for y in y0..y1 {
                    for v in &mut gi[y * w + x0..y * w + x1] {
                        *v += share;
                    }
                }
            }
        }
    }
    grad_in
}

/// Gradient of one layer's weight and bias tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients for every layer (empty for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<ParamGrad>);

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self(
            net.layers
                .iter()
                .map(|l| {
                    let (w, b) = l.param_lens();
                    ParamGrad { weight: vec![0.0; w], bias: vec![0.0; b] }
                })
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }
}

/// Where a backward pass stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardUntil {
    /// Return the gradient with respect to the output of this layer index.
    LayerOutput(usize),
    /// Propagate all the way to the input image.
    Input,
}

/// A sequential classifier over `ImageTensor`s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub id: String,
    pub input_channels: usize,
    pub num_classes: usize,
    pub layers: Vec<Layer>,
    pub preprocessing: Preprocessing,
    #[serde(default)]
    pub default_layer: Option<String>,
    #[serde(default)]
    pub shim: Option<(usize, usize)>,
}

impl Network {
    pub fn new(
        id: impl Into<String>,
        input_channels: usize,
        num_classes: usize,
        layers: Vec<Layer>,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &layers {
            if !seen.insert(l.name.as_str()) {
                return Err(invalid(format!("duplicate layer name {}", l.name)));
            }
        }
        match &layers.last().unwrap().kind {
            LayerKind::Linear(l) if l.out_features == num_classes => {}
            _ => return Err(invalid("last layer must be a linear head over num_classes")),
        }
        Ok(Self {
            id: id.into(),
            input_channels,
            num_classes,
            layers,
            preprocessing,
            default_layer: None,
            shim: None,
        })
    }

    /// Applies a registration descriptor: preprocessing, default layer, and
    /// an adaptive pooling shim in front of the first linear layer when the
    /// network would otherwise only accept `input_size`.
    pub fn register(mut self, descriptor: &ModelDescriptor) -> Result<Self> {
        self.id = descriptor.id.clone();
        self.preprocessing = descriptor.preprocessing.clone();
        if let Some(layer) = &descriptor.default_layer {
            self.layer_index(&LayerRef::new(layer.clone()))?;
            self.default_layer = Some(layer.clone());
        }
        let first_linear = self
            .layers
            .iter()
            .position(|l| matches!(l.kind, LayerKind::Linear(_)))
            .expect("head is linear");
        let pooled = first_linear > 0
            && matches!(self.layers[first_linear - 1].kind, LayerKind::AdaptiveAvgPool2d { .. });
        if first_linear > 0 && !pooled && self.shim.is_none() {
            let (h, w) = descriptor.input_size;
            let probe = ImageTensor::from_data(
                self.input_channels,
                h,
                w,
                vec![0.0; self.input_channels * h * w],
            )?;
            let trace = self.forward_trace(probe.stack())?;
            let (_, ph, pw) = trace[first_linear - 1].shape();
            self.layers.insert(
                first_linear,
                Layer::new("shim_pool", LayerKind::AdaptiveAvgPool2d { height: ph, width: pw }),
            );
            self.shim = Some((ph, pw));
        }
        Ok(self)
    }

    fn unsupported(&self, x: &RasterStack, reason: String) -> Error {
        let (channels, height, width) = x.shape();
        Error::UnsupportedInput { channels, height, width, reason }
    }

    /// Outputs of every layer, in order.
    pub fn forward_trace(&self, input: &RasterStack) -> Result<Vec<RasterStack>> {
        if input.channels() != self.input_channels {
            return Err(self.unsupported(
                input,
                format!("model expects {} channels", self.input_channels),
            ));
        }
        self.forward_from(input, 0)
    }

    /// Runs layers `start..` on `x`, returning their outputs.
    fn forward_from(&self, x: &RasterStack, start: usize) -> Result<Vec<RasterStack>> {
        let mut outputs: Vec<RasterStack> = Vec::with_capacity(self.layers.len() - start);
        for layer in &self.layers[start..] {
            let prev = outputs.last().unwrap_or(x);
            let out = layer.forward(prev).ok_or_else(|| {
                self.unsupported(
                    x,
                    format!(
                        "layer {} cannot ingest a {:?} tensor",
                        layer.name,
                        prev.shape()
                    ),
                )
            })?;
            outputs.push(out);
        }
        Ok(outputs)
    }

    /// Backpropagates `grad_logits` through a recorded trace.
    pub fn backward(
        &self,
        input: &RasterStack,
        trace: &[RasterStack],
        grad_logits: &[f64],
        until: BackwardUntil,
        mut grads: Option<&mut Gradients>,
    ) -> RasterStack {
        let last = self.layers.len() - 1;
        let mut g = RasterStack::new(self.num_classes, 1, 1, grad_logits.to_vec())
            .expect("logit gradient has num_classes entries");
        for i in (0..=last).rev() {
            if until == BackwardUntil::LayerOutput(i) {
                return g;
            }
            let x = if i == 0 { input } else { &trace[i - 1] };
            let pg = grads.as_deref_mut().map(|gs| &mut gs.0[i]);
            g = self.layers[i].backward(x, &trace[i], &g, pg);
        }
        g
    }

    pub fn layer_index(&self, layer: &LayerRef) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == layer.0)
            .ok_or_else(|| Error::LayerNotFound(layer.0.clone()))
    }

    /// Parameter tensors of every layer, for optimizers.
    pub fn params_mut(&mut self) -> Vec<Option<(&mut Vec<f64>, &mut Vec<f64>)>> {
        self.layers.iter_mut().map(|l| l.params_mut()).collect()
    }

    fn parametric_output_first(&self) -> Vec<usize> {
        (0..self.layers.len()).rev().filter(|&i| self.layers[i].is_parametric()).collect()
    }

    /// Cascading re-draw of the first `depth` parametric layers (output
    /// first) from a normal with each tensor's own mean and std.
    ///
    /// Layer `d` in output-first order always uses stream `d` of the seeded
    /// generator, so different depths agree on the layers they share.
    pub fn randomized(&self, depth: usize, seed: u64) -> Result<Network> {
        let order = self.parametric_output_first();
        if depth == 0 || depth > order.len() {
            return Err(invalid(format!(
                "randomization depth must be in 1..={}, got {depth}",
                order.len()
            )));
        }
        let mut net = self.clone();
        for (position, &idx) in order.iter().take(depth).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(position as u64);
            let (weight, bias) = net.layers[idx].params_mut().expect("parametric layer");
            redraw(weight, &mut rng);
            redraw(bias, &mut rng);
        }
        Ok(net)
    }
}

fn redraw<R: Rng>(values: &mut [f64], rng: &mut R) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let normal = Normal::new(mean, std).expect("finite parameters");
    for v in values.iter_mut() {
        *v = normal.sample(rng);
    }
}

impl Classifier for Network {
    fn id(&self) -> &str {
        &self.id
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn input_channels(&self) -> usize {
        self.input_channels
    }

    fn preprocessing(&self) -> &Preprocessing {
        &self.preprocessing
    }

    fn logits(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        let trace = self.forward_trace(image.stack())?;
        Ok(trace.last().expect("non-empty network").data().to_vec())
    }

    fn capture(
        &self,
        image: &ImageTensor,
        layer: &LayerRef,
        target: usize,
    ) -> Result<LayerTensors> {
        if target >= self.num_classes {
            return Err(invalid(format!(
                "target class {target} out of range for {} classes",
                self.num_classes
            )));
        }
        let idx = self.layer_index(layer)?;
        let trace = self.forward_trace(image.stack())?;
        let mut onehot = vec![0.0; self.num_classes];
        onehot[target] = 1.0;
        let grad = self.backward(
            image.stack(),
            &trace,
            &onehot,
            BackwardUntil::LayerOutput(idx),
            None,
        );
        let scores = trace.last().expect("non-empty network").data().to_vec();
        LayerTensors::new(layer.clone(), target, trace[idx].clone(), grad, scores)
    }

    fn logits_with_injection(
        &self,
        image: &ImageTensor,
        layer: &LayerRef,
        activations: &RasterStack,
    ) -> Result<Vec<f64>> {
        let idx = self.layer_index(layer)?;
        if idx + 1 == self.layers.len() {
            return Ok(activations.data().to_vec());
        }
        let outputs = self.forward_from(activations, idx + 1).map_err(|_| {
            self.unsupported(
                image.stack(),
                format!("injected tensor {:?} rejected after {layer}", activations.shape()),
            )
        })?;
        Ok(outputs.last().expect("non-empty tail").data().to_vec())
    }

    fn input_gradient(
        &self,
        image: &ImageTensor,
        loss_grad: &LossGradient<'_>,
    ) -> Result<(Vec<f64>, RasterStack)> {
        let trace = self.forward_trace(image.stack())?;
        let logits = trace.last().expect("non-empty network").data().to_vec();
        let g = loss_grad(&logits);
        if g.len() != self.num_classes {
            return Err(invalid("loss gradient length must equal class count"));
        }
        let grad = self.backward(image.stack(), &trace, &g, BackwardUntil::Input, None);
        Ok((logits, grad))
    }

    fn list_layers(&self) -> Vec<LayerRef> {
        self.parametric_output_first()
            .into_iter()
            .map(|i| LayerRef::new(self.layers[i].name.clone()))
            .collect()
    }

    fn default_layer(&self) -> Result<LayerRef> {
        if let Some(name) = &self.default_layer {
            return Ok(LayerRef::new(name.clone()));
        }
        self.layers
            .iter()
            .rev()
            .find(|l| matches!(l.kind, LayerKind::Conv2d(_)))
            .map(|l| LayerRef::new(l.name.clone()))
            .ok_or_else(|| Error::LayerNotFound("no convolutional layer".into()))
    }

    fn randomize_through(&self, depth: usize, seed: u64) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(self.randomized(depth, seed)?))
    }

    fn pooling_shim(&self) -> Option<(usize, usize)> {
        self.shim
    }
}
