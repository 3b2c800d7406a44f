//! Pointing game and positive/negative map density.

use serde::{Deserialize, Serialize};

use crate::bridge::{Classifier, ImageTensor};
use crate::error::{invalid, Error, Result};
use crate::saliency::SaliencyMap;

/// Default pointing-game tolerance in pixels.
pub const DEFAULT_TOLERANCE: usize = 15;

/// An annotated object region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Inclusive pixel box `(x0, y0, x1, y1)`.
    Box { x0: usize, y0: usize, x1: usize, y1: usize },
    /// Binary mask at the image's `(height, width)`, row-major.
    Mask { height: usize, width: usize, pixels: Vec<bool> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub class: usize,
    pub region: Region,
}

impl ObjectAnnotation {
    /// Checks the region against an image of `dims = (height, width)`.
    pub fn validate(&self, dims: (usize, usize)) -> Result<()> {
        match &self.region {
            Region::Box { x0, y0, x1, y1 } => {
                if x0 > x1 || y0 > y1 {
                    return Err(invalid(format!("box ({x0},{y0},{x1},{y1}) is inverted")));
                }
                if *y1 >= dims.0 || *x1 >= dims.1 {
                    return Err(invalid(format!(
                        "box ({x0},{y0},{x1},{y1}) exceeds image {}x{}",
                        dims.0, dims.1
                    )));
                }
            }
            Region::Mask { height, width, pixels } => {
                if (*height, *width) != dims || pixels.len() != height * width {
                    return Err(invalid(format!(
                        "mask {height}x{width} does not match image {}x{}",
                        dims.0, dims.1
                    )));
                }
                if !pixels.iter().any(|&p| p) {
                    return Err(invalid("mask region is empty"));
                }
            }
        }
        Ok(())
    }

    /// Whether `(row, col)` lies within Chebyshev distance `tolerance` of the region.
    pub fn contains_within(&self, row: usize, col: usize, tolerance: usize) -> bool {
        match &self.region {
            Region::Box { x0, y0, x1, y1 } => {
                row + tolerance >= *y0
                    && row <= y1 + tolerance
                    && col + tolerance >= *x0
                    && col <= x1 + tolerance
            }
            Region::Mask { height, width, pixels } => {
                let r0 = row.saturating_sub(tolerance);
                let r1 = (row + tolerance).min(height - 1);
                let c0 = col.saturating_sub(tolerance);
                let c1 = (col + tolerance).min(width - 1);
                (r0..=r1).any(|r| (c0..=c1).any(|c| pixels[r * width + c]))
            }
        }
    }
}

/// Outcome of one pointing-game trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingRecord {
    pub image_id: String,
    pub class: usize,
    pub hit: bool,
    /// `(row, col)` of the map's first maximal pixel.
    pub point: (usize, usize),
    pub tolerance: usize,
}

/// Hit iff the map's argmax lies within `tolerance` of any annotated region.
pub fn pointing_game(
    image_id: &str,
    map: &SaliencyMap,
    annotations: &[ObjectAnnotation],
    tolerance: usize,
) -> Result<PointingRecord> {
    let first = annotations
        .first()
        .ok_or_else(|| invalid("pointing game needs at least one annotation"))?;
    for a in annotations {
        a.validate(map.dims())?;
        if a.class != first.class {
            return Err(invalid("annotations must all belong to one class"));
        }
    }
    let point = map.argmax();
    let hit = annotations
        .iter()
        .any(|a| a.contains_within(point.0, point.1, tolerance));
    Ok(PointingRecord {
        image_id: image_id.to_string(),
        class: first.class,
        hit,
        point,
        tolerance,
    })
}

/// Fraction of hits.
pub fn aggregate_pointing(records: &[PointingRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(invalid("no pointing records to aggregate"));
    }
    Ok(records.iter().filter(|r| r.hit).count() as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityScores {
    pub rho_plus: f64,
    pub rho_minus: f64,
    /// Softmax confidence on the label for the unmasked image.
    pub base_confidence: f64,
}

/// `P(label | image * mask) * (h * w) / sum(mask)`; masking happens in
/// normalized input space, identically on every channel.
fn density(
    model: &dyn Classifier,
    image: &ImageTensor,
    mask: &[f64],
    label: usize,
) -> Result<f64> {
    if label >= model.num_classes() {
        return Err(invalid(format!("label {label} out of range")));
    }
    let mass: f64 = mask.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::UndefinedDensity);
    }
    let masked = image.masked(mask)?;
    let p = model.predict(&masked)?.probabilities[label];
    Ok(p * mask.len() as f64 / mass)
}

fn check_dims(image: &ImageTensor, map: &SaliencyMap) -> Result<()> {
    if image.dims() != map.dims() {
        return Err(invalid(format!(
            "map {:?} does not match image {:?}",
            map.dims(),
            image.dims()
        )));
    }
    Ok(())
}

pub fn positive_density(
    model: &dyn Classifier,
    image: &ImageTensor,
    map: &SaliencyMap,
    label: usize,
) -> Result<f64> {
    check_dims(image, map)?;
    density(model, image, &map.values_f64(), label)
}

pub fn negative_density(
    model: &dyn Classifier,
    image: &ImageTensor,
    map: &SaliencyMap,
    label: usize,
) -> Result<f64> {
    check_dims(image, map)?;
    let complement: Vec<f64> = map.values().iter().map(|&v| 1.0 - v as f64).collect();
    density(model, image, &complement, label)
}

pub fn density_scores(
    model: &dyn Classifier,
    image: &ImageTensor,
    map: &SaliencyMap,
    label: usize,
) -> Result<DensityScores> {
    Ok(DensityScores {
        rho_plus: positive_density(model, image, map, label)?,
        rho_minus: negative_density(model, image, map, label)?,
        base_confidence: model.predict(image)?.probabilities[label],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::MapMeta;

    fn peak_map(h: usize, w: usize, at: (usize, usize)) -> SaliencyMap {
        let mut v = vec![0.1f32; h * w];
        v[at.0 * w + at.1] = 1.0;
        SaliencyMap::new(h, w, v, MapMeta::named("peak")).unwrap()
    }

    fn boxed(x0: usize, y0: usize, x1: usize, y1: usize) -> ObjectAnnotation {
        ObjectAnnotation { class: 0, region: Region::Box { x0, y0, x1, y1 } }
    }

    #[test]
    fn hit_at_box_center() {
        let r = pointing_game("a", &peak_map(40, 40, (20, 20)), &[boxed(15, 15, 25, 25)], 0).unwrap();
        assert!(r.hit);
        assert_eq!(r.point, (20, 20));
    }

    #[test]
    fn miss_just_beyond_tolerance() {
        let tol = 3;
        // box columns 10..=12; peak at column 12 + tol + 1
        let map = peak_map(30, 30, (11, 12 + tol + 1));
        let r = pointing_game("a", &map, &[boxed(10, 10, 12, 12)], tol).unwrap();
        assert!(!r.hit);
        let map = peak_map(30, 30, (11, 12 + tol));
        assert!(pointing_game("a", &map, &[boxed(10, 10, 12, 12)], tol).unwrap().hit);
    }

    #[test]
    fn constant_map_points_at_origin() {
        let map = SaliencyMap::zeros(20, 20).unwrap();
        let near = pointing_game("a", &map, &[boxed(2, 2, 5, 5)], 2).unwrap();
        assert_eq!(near.point, (0, 0));
        assert!(near.hit);
        let far = pointing_game("a", &map, &[boxed(3, 3, 5, 5)], 2).unwrap();
        assert!(!far.hit);
    }

    #[test]
    fn mask_regions_dilate() {
        let mut pixels = vec![false; 100];
        pixels[5 * 10 + 5] = true;
        let ann = ObjectAnnotation {
            class: 1,
            region: Region::Mask { height: 10, width: 10, pixels },
        };
        assert!(pointing_game("m", &peak_map(10, 10, (7, 3)), std::slice::from_ref(&ann), 2)
            .unwrap()
            .hit);
        assert!(!pointing_game("m", &peak_map(10, 10, (8, 5)), &[ann], 2).unwrap().hit);
    }

    #[test]
    fn annotation_validation() {
        let map = peak_map(10, 10, (0, 0));
        assert!(pointing_game("a", &map, &[], 0).is_err());
        assert!(pointing_game("a", &map, &[boxed(5, 5, 2, 8)], 0).is_err());
        assert!(pointing_game("a", &map, &[boxed(5, 5, 10, 8)], 0).is_err());
        let empty = ObjectAnnotation {
            class: 0,
            region: Region::Mask { height: 10, width: 10, pixels: vec![false; 100] },
        };
        assert!(pointing_game("a", &map, &[empty], 0).is_err());
    }

    #[test]
    fn aggregation() {
        let rec = |hit| PointingRecord {
            image_id: "x".into(),
            class: 0,
            hit,
            point: (0, 0),
            tolerance: 0,
        };
        assert_eq!(aggregate_pointing(&[rec(true), rec(true), rec(false), rec(true)]).unwrap(), 0.75);
        assert_eq!(aggregate_pointing(&[rec(true), rec(true)]).unwrap(), 1.0);
        assert!(aggregate_pointing(&[]).is_err());
    }
}
