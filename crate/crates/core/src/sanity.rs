//! Sanity checks for saliency methods.
//!
//! Cascading randomization re-draws model parameters from the logits layer
//! backwards and measures how similar each randomized model's map stays to
//! the original; a method whose maps come from the model must degrade.
//! Adversarial correspondence compares per-pixel perturbation magnitudes of
//! an unmasked PGD run against the saliency map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{least_likely_label, pgd, AttackConfig, AttackResult};
use crate::bridge::{Classifier, ImageTensor};
use crate::error::{invalid, Error, Result};
use crate::resample::Raster2D;
use crate::saliency::{normalize, MapMeta, SaliencyMap, SaliencyMethod, SaliencyOptions};

/// Anything that turns a model and an image into a saliency map.
pub trait SaliencyFn: Sync {
    fn name(&self) -> String;

    /// Map for the model's own predicted label.
    fn compute(&self, model: &dyn Classifier, image: &ImageTensor) -> Result<SaliencyMap>;
}

/// A configured method applied at a fixed layer (or each model's default).
#[derive(Debug, Clone, PartialEq)]
pub struct MethodFn {
    pub method: SaliencyMethod,
    pub options: SaliencyOptions,
}

impl SaliencyFn for MethodFn {
    fn name(&self) -> String {
        self.method.name().to_string()
    }

    fn compute(&self, model: &dyn Classifier, image: &ImageTensor) -> Result<SaliencyMap> {
        self.method.compute(model, image, &self.options)
    }
}

/// Model-independent negative control: normalized Sobel gradient magnitude
/// of the channel-mean image.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdgeControl;

impl SaliencyFn for EdgeControl {
    fn name(&self) -> String {
        "edge_control".to_string()
    }

    fn compute(&self, _model: &dyn Classifier, image: &ImageTensor) -> Result<SaliencyMap> {
        edge_map(image)
    }
}

pub fn edge_map(image: &ImageTensor) -> Result<SaliencyMap> {
    let (c, h, w) = image.stack().shape();
    let mut gray = vec![0.0; h * w];
    for k in 0..c {
        for (g, v) in gray.iter_mut().zip(image.stack().channel(k)) {
            *g += v / c as f64;
        }
    }
    let at = |r: isize, col: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let col = col.clamp(0, w as isize - 1) as usize;
        gray[r * w + col]
    };
    let mut mag = Vec::with_capacity(h * w);
    for r in 0..h as isize {
        for col in 0..w as isize {
            let gx = (at(r - 1, col + 1) + 2.0 * at(r, col + 1) + at(r + 1, col + 1))
                - (at(r - 1, col - 1) + 2.0 * at(r, col - 1) + at(r + 1, col - 1));
            let gy = (at(r + 1, col - 1) + 2.0 * at(r + 1, col) + at(r + 1, col + 1))
                - (at(r - 1, col - 1) + 2.0 * at(r - 1, col) + at(r - 1, col + 1));
            mag.push((gx * gx + gy * gy).sqrt());
        }
    }
    let raster = normalize(&Raster2D::new(h, w, mag)?)?;
    SaliencyMap::from_normalized(&raster, MapMeta::named("edge_control"))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
///
/// If either input is constant the correlation is undefined; it is reported
/// as 1 when the inputs are identical and 0 otherwise.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(invalid("spearman needs two equal-length, non-empty samples"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

fn map_similarity(a: &SaliencyMap, b: &SaliencyMap) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(invalid("maps differ in size"));
    }
    spearman(&a.values_f64(), &b.values_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Number of randomized layers; 0 is the original model.
    pub depth: usize,
    /// Deepest randomized layer at this depth.
    pub layer: String,
    /// Spearman similarity to the original map; absent when the map failed.
    pub similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Path of a rendered artifact for this depth, if one was written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
    #[serde(skip)]
    pub map: Option<SaliencyMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationCurve {
    pub method: String,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl RandomizationCurve {
    /// Mean similarity over the available points at depth >= 1.
    pub fn mean_randomized_similarity(&self) -> Option<f64> {
        let sims: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.depth >= 1)
            .filter_map(|p| p.similarity)
            .collect();
        if sims.is_empty() {
            None
        } else {
            Some(sims.iter().sum::<f64>() / sims.len() as f64)
        }
    }
}

/// Similarity of `saliency`'s map under progressively deeper randomization.
///
/// The first point is the depth-0 self-comparison; every requested depth
/// uses the randomized model's own predicted label.
pub fn cascading_randomization(
    model: &dyn Classifier,
    image: &ImageTensor,
    saliency: &dyn SaliencyFn,
    depths: &[usize],
    seed: u64,
) -> Result<RandomizationCurve> {
    let layers = model.list_layers();
    for (i, &d) in depths.iter().enumerate() {
        if d == 0 || d > layers.len() {
            return Err(invalid(format!("depth {d} outside 1..={}", layers.len())));
        }
        if i > 0 && d <= depths[i - 1] {
            return Err(invalid("depths must be strictly increasing"));
        }
    }
    let original = saliency.compute(model, image)?;
    let mut points = vec![CurvePoint {
        depth: 0,
        layer: String::new(),
        similarity: Some(map_similarity(&original, &original)?),
        error: None,
        artifact: None,
        map: Some(original.clone()),
    }];
    let randomized: Vec<CurvePoint> = depths
        .par_iter()
        .map(|&d| {
            let layer = layers[d - 1].0.clone();
            let outcome = model
                .randomize_through(d, seed)
                .and_then(|m| saliency.compute(m.as_ref(), image))
                .and_then(|map| map_similarity(&original, &map).map(|s| (s, map)));
            match outcome {
                Ok((similarity, map)) => CurvePoint {
                    depth: d,
                    layer,
                    similarity: Some(similarity),
                    error: None,
                    artifact: None,
                    map: Some(map),
                },
                Err(e) => CurvePoint {
                    depth: d,
                    layer,
                    similarity: None,
                    error: Some(e.to_string()),
                    artifact: None,
                    map: None,
                },
            }
        })
        .collect();
    points.extend(randomized);
    Ok(RandomizationCurve { method: saliency.name(), seed, points })
}

/// Per-pixel L2 norm of the perturbation across channels.
pub fn perturbation_magnitude(result: &AttackResult) -> Result<Raster2D> {
    let p = &result.perturbation;
    let mut mag = vec![0.0; p.plane_len()];
    for k in 0..p.channels() {
        for (m, v) in mag.iter_mut().zip(p.channel(k)) {
            *m += v * v;
        }
    }
    Raster2D::new(p.height(), p.width(), mag.into_iter().map(f64::sqrt).collect())
}

/// Spearman correlation between a map and the magnitude of the
/// perturbation found by an unmasked attack toward the least likely label.
pub fn adversarial_correspondence(
    model: &dyn Classifier,
    image: &ImageTensor,
    map: &SaliencyMap,
    cfg: &AttackConfig,
) -> Result<f64> {
    if map.dims() != image.dims() {
        return Err(invalid("map does not match image"));
    }
    let target = least_likely_label(model, image)?;
    let result = pgd(model, image, target, cfg, None)
        .map_err(|e| Error::SanityInconclusive(format!("attack failed: {e}")))?;
    if !result.success {
        return Err(Error::SanityInconclusive(format!(
            "attack reached confidence {:.4} < {}",
            result.final_confidence, cfg.target_confidence
        )));
    }
    correspondence_with(&result, map)
}

/// Correlation between an existing attack's perturbation and `map`.
pub fn correspondence_with(result: &AttackResult, map: &SaliencyMap) -> Result<f64> {
    let magnitude = perturbation_magnitude(result)?;
    if magnitude.dims() != map.dims() {
        return Err(invalid("map does not match perturbation"));
    }
    spearman(magnitude.values(), &map.values_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// Mean randomized similarity must stay below `threshold`.
    MeanSimilarityBelow { threshold: f64 },
    /// Correlation must exceed that of a control map.
    ExceedsControl { control: f64 },
}

impl Criterion {
    pub fn describe(&self) -> String {
        match self {
            Criterion::MeanSimilarityBelow { threshold } => format!(
                "mean Spearman similarity over randomized depths must be below {threshold}"
            ),
            Criterion::ExceedsControl { control } => {
                format!("correlation must exceed the control correlation {control}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Evidence {
    Curve(RandomizationCurve),
    Correlation(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityVerdict {
    pub method: String,
    pub passed: bool,
    /// The statistic the criterion was applied to.
    pub statistic: f64,
    pub evidence: Evidence,
    pub criterion: Criterion,
    pub description: String,
}

/// Applies `criterion` to `evidence`.
pub fn verdict(
    method: &str,
    evidence: Option<Evidence>,
    criterion: Criterion,
) -> Result<SanityVerdict> {
    let evidence = evidence.ok_or_else(|| invalid("a verdict needs evidence"))?;
    let (statistic, passed) = match (&evidence, &criterion) {
        (Evidence::Curve(curve), Criterion::MeanSimilarityBelow { threshold }) => {
            let mean = curve.mean_randomized_similarity().ok_or_else(|| {
                Error::SanityInconclusive("curve has no randomized points".into())
            })?;
            (mean, mean < *threshold)
        }
        (Evidence::Correlation(r), Criterion::ExceedsControl { control }) => {
            if !r.is_finite() {
                return Err(invalid("correlation must be finite"));
            }
            (*r, r > control)
        }
        _ => return Err(invalid("evidence kind does not match criterion")),
    };
    Ok(SanityVerdict {
        method: method.to_string(),
        passed,
        statistic,
        description: criterion.describe(),
        evidence,
        criterion,
    })
}
