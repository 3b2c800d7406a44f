//! Multi-scale activation/gradient saliency and the Grad-CAM baseline.
//!
//! The multi-scale method resizes the input over a ladder of sizes, keeps
//! only the scales whose prediction matches the original label, brings the
//! captured activations and gradients of each kept scale back to the input
//! resolution, averages them, and fuses the averages pixel-wise.

use serde::{Deserialize, Serialize};

use crate::bridge::{Classifier, ImageTensor, LayerRef, LayerTensors};
use crate::error::{invalid, Error, Result};
use crate::resample::{bilinear_resize, resize_stack, Raster2D, RasterStack};

/// How intermediate sizes between the base and maximum are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderKind {
    /// `base + round((max - base) * (t - 1) / steps)`: evenly spaced,
    /// ending exactly at `max`.
    #[default]
    Linear,
    /// `size[t] = size[t-1] + floor(max / steps) * (t - 1)`, which grows
    /// super-linearly and can overshoot `max`. Kept for comparison only.
    LiteralRecurrence,
}

/// The ladder of input sizes used by [`compute_cameras`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub base: (usize, usize),
    pub max: (usize, usize),
    pub steps: usize,
    pub kind: LadderKind,
    pub sizes: Vec<(usize, usize)>,
}

/// Default largest size of the ladder.
pub const DEFAULT_MAX_SIZE: (usize, usize) = (1000, 1000);
/// Default number of steps between base and maximum size.
pub const DEFAULT_STEPS: usize = 7;

/// Builds the linear ladder from `base` to `max` in `steps` steps.
pub fn make_schedule(
    base: (usize, usize),
    max: (usize, usize),
    steps: usize,
) -> Result<ScaleSchedule> {
    make_schedule_with(base, max, steps, LadderKind::Linear)
}

pub fn make_schedule_with(
    base: (usize, usize),
    max: (usize, usize),
    steps: usize,
    kind: LadderKind,
) -> Result<ScaleSchedule> {
    if base.0 == 0 || base.1 == 0 {
        return Err(invalid(format!("base size must be positive, got {base:?}")));
    }
    if max.0 < base.0 || max.1 < base.1 {
        return Err(invalid(format!(
            "max size {max:?} must be at least the base size {base:?}"
        )));
    }
    let sizes = if steps == 0 {
        vec![base]
    } else {
        match kind {
            LadderKind::Linear => (0..=steps)
                .map(|t| {
                    let axis = |b: usize, m: usize| {
                        b + (((m - b) * t) as f64 / steps as f64).round() as usize
                    };
                    (axis(base.0, max.0), axis(base.1, max.1))
                })
                .collect(),
            LadderKind::LiteralRecurrence => {
                let stride = (max.0 / steps, max.1 / steps);
                let mut sizes = Vec::with_capacity(steps + 1);
                let mut current = base;
                for t in 1..=steps + 1 {
                    current = (
                        current.0 + stride.0 * (t - 1),
                        current.1 + stride.1 * (t - 1),
                    );
                    sizes.push(current);
                }
                sizes
            }
        }
    };
    Ok(ScaleSchedule { base, max, steps, kind, sizes })
}

/// Provenance of a saliency map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub method: String,
    pub layer: Option<LayerRef>,
    pub target: Option<usize>,
    pub schedule: Option<ScaleSchedule>,
    /// Number of scales accumulated.
    pub accepted_scales: usize,
    /// Scales dropped because their prediction differed, with that prediction.
    pub skipped_scales: Vec<((usize, usize), usize)>,
}

impl MapMeta {
    pub fn named(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            layer: None,
            target: None,
            schedule: None,
            accepted_scales: 0,
            skipped_scales: Vec::new(),
        }
    }
}

/// An `h x w` importance raster with values in `[0, 1]`.
///
/// Whenever any value is positive the maximum is exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
    pub meta: MapMeta,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>, meta: MapMeta) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(invalid(format!(
                "saliency map {height}x{width} cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("saliency values must lie in [0, 1]"));
        }
        if values.iter().any(|&v| v > 0.0) && !values.iter().any(|&v| v == 1.0) {
            return Err(invalid("non-zero saliency map must reach 1"));
        }
        Ok(Self { height, width, values, meta })
    }

    /// Wraps an already normalized raster.
    pub fn from_normalized(raster: &Raster2D, meta: MapMeta) -> Result<Self> {
        Self::new(
            raster.height(),
            raster.width(),
            raster.values().iter().map(|&v| v as f32).collect(),
            meta,
        )
    }

    /// A map that is 1 everywhere.
    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![1.0; height * width], MapMeta::named("ones"))
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width], MapMeta::named("zeros"))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// Row-major position of the first maximal value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }
}

/// Running sums of resized activations and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorState {
    activations: RasterStack,
    gradients: RasterStack,
    accepted: usize,
}

impl AccumulatorState {
    pub fn new(channels: usize, dims: (usize, usize)) -> Result<Self> {
        Ok(Self {
            activations: RasterStack::zeros(channels, dims.0, dims.1)?,
            gradients: RasterStack::zeros(channels, dims.0, dims.1)?,
            accepted: 0,
        })
    }

    /// Adds one scale's captures, already resized to the accumulator dims.
    pub fn add(&mut self, activations: &RasterStack, gradients: &RasterStack) -> Result<()> {
        if activations.shape() != self.activations.shape()
            || gradients.shape() != self.gradients.shape()
        {
            return Err(invalid(format!(
                "accumulator is {:?}, got {:?} and {:?}",
                self.activations.shape(),
                activations.shape(),
                gradients.shape()
            )));
        }
        for (s, v) in self.activations.data_mut().iter_mut().zip(activations.data()) {
            *s += v;
        }
        for (s, v) in self.gradients.data_mut().iter_mut().zip(gradients.data()) {
            *s += v;
        }
        self.accepted += 1;
        Ok(())
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    /// Mean activations and gradients over the accepted scales.
    pub fn averages(&self) -> Option<(RasterStack, RasterStack)> {
        if self.accepted == 0 {
            return None;
        }
        let n = self.accepted as f64;
        let mut a = self.activations.clone();
        a.data_mut().iter_mut().for_each(|v| *v /= n);
        let mut w = self.gradients.clone();
        w.data_mut().iter_mut().for_each(|v| *v /= n);
        Some((a, w))
    }
}

/// `(x - min) / (max - min)`; a constant raster maps to zeros.
pub fn normalize(raw: &Raster2D) -> Result<Raster2D> {
    if raw.values().iter().any(|v| !v.is_finite()) {
        return Err(invalid("cannot normalize non-finite values"));
    }
    let (lo, hi) = (raw.min(), raw.max());
    let range = hi - lo;
    let values = if range > 0.0 {
        raw.values().iter().map(|v| (v - lo) / range).collect()
    } else {
        vec![0.0; raw.values().len()]
    };
    Raster2D::new(raw.height(), raw.width(), values)
}

fn relu_normalized(values: Vec<f64>, dims: (usize, usize), meta: MapMeta) -> Result<SaliencyMap> {
    let rect: Vec<f64> = values.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect();
    let raw = Raster2D::new(dims.0, dims.1, rect)?;
    SaliencyMap::from_normalized(&normalize(&raw)?, meta)
}

/// Pixel-wise fusion: `normalize(ReLU(sum_k W_k * A_k))`.
pub fn fuse(activations: &RasterStack, gradients: &RasterStack) -> Result<SaliencyMap> {
    fuse_with_meta(activations, gradients, MapMeta::named("fuse"))
}

fn fuse_with_meta(
    activations: &RasterStack,
    gradients: &RasterStack,
    meta: MapMeta,
) -> Result<SaliencyMap> {
    if activations.shape() != gradients.shape() {
        return Err(invalid(format!(
            "activation stack {:?} and gradient stack {:?} differ",
            activations.shape(),
            gradients.shape()
        )));
    }
    let mut sum = vec![0.0; activations.plane_len()];
    for k in 0..activations.channels() {
        for ((s, a), w) in sum.iter_mut().zip(activations.channel(k)).zip(gradients.channel(k)) {
            *s += w * a;
        }
    }
    relu_normalized(sum, (activations.height(), activations.width()), meta)
}

/// Optional knobs shared by the saliency operations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SaliencyOptions {
    /// Layer to read; the model's default layer when absent.
    pub layer: Option<LayerRef>,
    /// Class whose logit is differentiated; the predicted label when absent.
    pub target: Option<usize>,
}

impl SaliencyOptions {
    pub fn at_layer(layer: LayerRef) -> Self {
        Self { layer: Some(layer), target: None }
    }

    pub fn with_target(mut self, target: usize) -> Self {
        self.target = Some(target);
        self
    }

    fn resolve_layer(&self, model: &dyn Classifier) -> Result<LayerRef> {
        match &self.layer {
            Some(l) => Ok(l.clone()),
            None => model.default_layer(),
        }
    }
}

/// Multi-scale saliency.
///
/// The label fixed by the original-size prediction gates every scale; a
/// target override only changes the class whose logit is differentiated.
pub fn compute_cameras(
    model: &dyn Classifier,
    image: &ImageTensor,
    schedule: &ScaleSchedule,
    options: &SaliencyOptions,
) -> Result<SaliencyMap> {
    let layer = options.resolve_layer(model)?;
    let base = image.dims();
    if schedule.base != base {
        return Err(invalid(format!(
            "schedule base {:?} does not match image dims {base:?}",
            schedule.base
        )));
    }
    let label = model.predict(image)?.label;
    let target = options.target.unwrap_or(label);
    let mut acc: Option<AccumulatorState> = None;
    let mut per_scale = Vec::with_capacity(schedule.sizes.len());
    let mut skipped = Vec::new();

    for &size in &schedule.sizes {
        let scaled = if size == base { image.clone() } else { image.resized(size)? };
        let predicted = model.predict(&scaled)?.label;
        per_scale.push((size, predicted));
        if predicted != label {
            skipped.push((size, predicted));
            continue;
        }
        let captured = model.capture(&scaled, &layer, target)?;
        let a = resize_stack(&captured.activations, base)?;
        let w = resize_stack(&captured.gradients, base)?;
        let state = match acc.as_mut() {
            Some(s) => s,
            None => acc.insert(AccumulatorState::new(a.channels(), base)?),
        };
        state.add(&a, &w)?;
    }

    let state = acc.ok_or(Error::DegenerateSchedule { label, per_scale })?;
    let (a, w) = state.averages().expect("at least one accepted scale");
    let meta = MapMeta {
        method: "cameras".into(),
        layer: Some(layer),
        target: Some(target),
        schedule: Some(schedule.clone()),
        accepted_scales: state.accepted(),
        skipped_scales: skipped,
    };
    fuse_with_meta(&a, &w, meta)
}

/// Grad-CAM channel weights: gradient sums scaled by `1 / (m + n)`.
pub fn gradcam_weights(tensors: &LayerTensors) -> Vec<f64> {
    let g = &tensors.gradients;
    let scale = 1.0 / (g.height() + g.width()) as f64;
    (0..g.channels()).map(|k| g.channel(k).iter().sum::<f64>() * scale).collect()
}

/// Grad-CAM map from an existing capture, resized to `output` dims.
pub fn gradcam_from_capture(tensors: &LayerTensors, output: (usize, usize)) -> Result<SaliencyMap> {
    let weights = gradcam_weights(tensors);
    let a = &tensors.activations;
    let mut s = vec![0.0; a.plane_len()];
    for (k, wk) in weights.iter().enumerate() {
        for (acc, v) in s.iter_mut().zip(a.channel(k)) {
            *acc += wk * v;
        }
    }
    let rect: Vec<f64> = s.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect();
    let coarse = Raster2D::new(a.height(), a.width(), rect)?;
    let fine = bilinear_resize(&coarse, output)?;
    let meta = MapMeta {
        method: "gradcam".into(),
        layer: Some(tensors.layer.clone()),
        target: Some(tensors.target),
        schedule: None,
        accepted_scales: 1,
        skipped_scales: Vec::new(),
    };
    SaliencyMap::from_normalized(&normalize(&fine)?, meta)
}

/// Single-scale Grad-CAM at the image's own resolution.
pub fn compute_gradcam(
    model: &dyn Classifier,
    image: &ImageTensor,
    options: &SaliencyOptions,
) -> Result<SaliencyMap> {
    let layer = options.resolve_layer(model)?;
    let target = match options.target {
        Some(t) => t,
        None => model.predict(image)?.label,
    };
    let captured = model.capture(image, &layer, target)?;
    gradcam_from_capture(&captured, image.dims())
}

/// A selectable backpropagation saliency method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SaliencyMethod {
    /// Multi-scale accumulation; the ladder base is each image's own size.
    Cameras {
        max: (usize, usize),
        steps: usize,
        #[serde(default)]
        ladder: LadderKind,
    },
    Gradcam,
}

impl Default for SaliencyMethod {
    fn default() -> Self {
        SaliencyMethod::Cameras {
            max: DEFAULT_MAX_SIZE,
            steps: DEFAULT_STEPS,
            ladder: LadderKind::Linear,
        }
    }
}

impl SaliencyMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SaliencyMethod::Cameras { .. } => "cameras",
            SaliencyMethod::Gradcam => "gradcam",
        }
    }

    pub fn compute(
        &self,
        model: &dyn Classifier,
        image: &ImageTensor,
        options: &SaliencyOptions,
    ) -> Result<SaliencyMap> {
        match self {
            SaliencyMethod::Cameras { max, steps, ladder } => {
                let schedule = make_schedule_with(image.dims(), *max, *steps, *ladder)?;
                compute_cameras(model, image, &schedule, options)
            }
            SaliencyMethod::Gradcam => compute_gradcam(model, image, options),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ladder_sizes() {
        let s = make_schedule((224, 224), DEFAULT_MAX_SIZE, DEFAULT_STEPS).unwrap();
        let sides: Vec<usize> = s.sizes.iter().map(|d| d.0).collect();
        assert_eq!(sides, [224, 335, 446, 557, 667, 778, 889, 1000]);
        assert!(s.sizes.iter().all(|d| d.0 == d.1));
    }

    #[test]
    fn small_ladders() {
        assert_eq!(make_schedule((224, 224), (1000, 1000), 0).unwrap().sizes, [(224, 224)]);
        assert_eq!(
            make_schedule((4, 4), (8, 8), 2).unwrap().sizes,
            [(4, 4), (6, 6), (8, 8)]
        );
        assert_eq!(
            make_schedule((4, 6), (8, 6), 2).unwrap().sizes,
            [(4, 6), (6, 6), (8, 6)]
        );
        assert!(make_schedule((10, 10), (9, 12), 3).is_err());
    }

    #[test]
    fn literal_recurrence_overshoots() {
        let s = make_schedule_with((224, 224), (1000, 1000), 7, LadderKind::LiteralRecurrence)
            .unwrap();
        assert_eq!(s.sizes[0], (224, 224));
        assert_eq!(s.sizes[1], (366, 366));
        assert_eq!(s.sizes[3], (1076, 1076));
        assert_eq!(s.sizes.len(), 8);
    }

    #[test]
    fn normalize_cases() {
        let r = Raster2D::new(2, 2, vec![0.0, 5.0, 10.0, 2.5]).unwrap();
        assert_eq!(normalize(&r).unwrap().values(), &[0.0, 0.5, 1.0, 0.25]);
        let c = Raster2D::filled(3, 3, 4.2).unwrap();
        assert!(normalize(&c).unwrap().values().iter().all(|&v| v == 0.0));
        let n = Raster2D::new(1, 3, vec![-3.0, 7.0, 1.0]).unwrap();
        let out = normalize(&n).unwrap();
        assert_eq!((out.min(), out.max()), (0.0, 1.0));
    }

    #[test]
    fn fuse_zero_gradients_annihilate() {
        let a = RasterStack::new(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let w = RasterStack::zeros(2, 2, 2).unwrap();
        let m = fuse(&a, &w).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fuse_single_positive_coefficient() {
        let a = RasterStack::new(1, 3, 3, vec![1.0; 9]).unwrap();
        let mut g = vec![-0.5; 9];
        g[4] = 0.2;
        let w = RasterStack::new(1, 3, 3, g).unwrap();
        let m = fuse(&a, &w).unwrap();
        for (i, &v) in m.values().iter().enumerate() {
            assert_eq!(v, if i == 4 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn fuse_rejects_mismatch() {
        let a = RasterStack::zeros(2, 2, 2).unwrap();
        let w = RasterStack::zeros(1, 2, 2).unwrap();
        assert!(fuse(&a, &w).is_err());
    }

    #[test]
    fn map_invariants_enforced() {
        assert!(SaliencyMap::new(1, 2, vec![0.5, 0.2], MapMeta::named("x")).is_err());
        assert!(SaliencyMap::new(1, 2, vec![1.5, 0.2], MapMeta::named("x")).is_err());
        assert!(SaliencyMap::new(1, 2, vec![1.0, 0.2], MapMeta::named("x")).is_ok());
        assert!(SaliencyMap::zeros(2, 2).is_ok());
    }

    #[test]
    fn accumulator_averages() {
        let mut acc = AccumulatorState::new(1, (1, 2)).unwrap();
        assert!(acc.averages().is_none());
        let a = RasterStack::new(1, 1, 2, vec![1.0, 3.0]).unwrap();
        let w = RasterStack::new(1, 1, 2, vec![2.0, -2.0]).unwrap();
        acc.add(&a, &w).unwrap();
        acc.add(&a, &w).unwrap();
        let (ma, mw) = acc.averages().unwrap();
        assert_eq!(ma, a);
        assert_eq!(mw, w);
        assert!(acc.add(&RasterStack::zeros(2, 1, 2).unwrap(), &w).is_err());
    }
}
