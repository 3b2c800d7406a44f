//! Targeted projected-gradient attacks, optionally steered by a saliency map.
//!
//! The objective is cross-entropy toward the target class plus
//! `beta * ||p * (1 - mask)||_2`, which lets the perturbation grow where the
//! map is salient and penalizes it elsewhere. Without a mask (or with
//! `beta = 0`, or a mask of ones) this is plain signed-gradient PGD.

use serde::{Deserialize, Serialize};

use crate::bridge::{argmin, softmax, Classifier, ImageTensor, Preprocessing};
use crate::error::{invalid, Error, Result};
use crate::resample::RasterStack;
use crate::saliency::SaliencyMap;

/// Default budget in raw pixel units.
pub const DEFAULT_RAW_EPSILON: f64 = 12.0 / 255.0;
pub const DEFAULT_BETA: f64 = 50.0;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;
pub const DEFAULT_TARGET_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Per-channel l-infinity bound in normalized units; one entry applies
    /// to every channel.
    pub epsilon: Vec<f64>,
    /// Per-channel step size in normalized units.
    pub step_size: Vec<f64>,
    pub max_iterations: usize,
    pub target_confidence: f64,
    pub beta: f64,
}

impl AttackConfig {
    pub fn new(
        epsilon: Vec<f64>,
        step_size: Vec<f64>,
        max_iterations: usize,
        target_confidence: f64,
        beta: f64,
    ) -> Result<Self> {
        let cfg = Self { epsilon, step_size, max_iterations, target_confidence, beta };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Converts a raw-unit budget through `preprocessing`; the step size is
    /// a tenth of the budget.
    pub fn from_raw_epsilon(raw_epsilon: f64, preprocessing: &Preprocessing) -> Result<Self> {
        let epsilon: Vec<f64> = (0..preprocessing.channels())
            .map(|c| preprocessing.scale_to_normalized(c, raw_epsilon))
            .collect();
        let step_size = epsilon.iter().map(|e| e / 10.0).collect();
        Self::new(
            epsilon,
            step_size,
            DEFAULT_MAX_ITERATIONS,
            DEFAULT_TARGET_CONFIDENCE,
            DEFAULT_BETA,
        )
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_empty() || self.epsilon.iter().any(|e| !(*e > 0.0)) {
            return Err(invalid("epsilon must be positive"));
        }
        if self.step_size.is_empty() || self.step_size.iter().any(|a| !(*a > 0.0)) {
            return Err(invalid("step size must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max iterations must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.target_confidence) {
            return Err(invalid("target confidence must lie in [0, 1]"));
        }
        if !(self.beta >= 0.0) {
            return Err(invalid("beta must be non-negative"));
        }
        Ok(())
    }

    fn channel_value(values: &[f64], channel: usize) -> f64 {
        if values.len() == 1 {
            values[0]
        } else {
            values[channel]
        }
    }

    pub fn epsilon_for(&self, channel: usize) -> f64 {
        Self::channel_value(&self.epsilon, channel)
    }

    pub fn step_for(&self, channel: usize) -> f64 {
        Self::channel_value(&self.step_size, channel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub target: usize,
    pub perturbation: RasterStack,
    pub perturbed: RasterStack,
    pub success: bool,
    pub final_confidence: f64,
    pub iterations: usize,
    pub l2_norm: f64,
    pub linf_norm: f64,
    /// Target-class confidence after each iteration.
    pub confidence_trace: Vec<f64>,
    /// l-infinity norm of the perturbation after each iteration.
    pub linf_trace: Vec<f64>,
}

impl AttackResult {
    pub fn perturbed_image(&self) -> Result<ImageTensor> {
        ImageTensor::new(self.perturbed.clone())
    }
}

pub fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn linf_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Class with the lowest clean score; ties go to the lowest index.
pub fn least_likely_label(model: &dyn Classifier, image: &ImageTensor) -> Result<usize> {
    Ok(argmin(&model.logits(image)?))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Signed-gradient descent on the (optionally masked) objective toward
/// `target`, projecting onto the l-infinity ball and the valid input range
/// after every step.
pub fn pgd(
    model: &dyn Classifier,
    image: &ImageTensor,
    target: usize,
    cfg: &AttackConfig,
    mask: Option<&SaliencyMap>,
) -> Result<AttackResult> {
    cfg.validate()?;
    let classes = model.num_classes();
    if target >= classes {
        return Err(invalid(format!("target {target} out of range for {classes} classes")));
    }
    let (c, h, w) = image.stack().shape();
    let plane = h * w;
    if cfg.epsilon.len() > 1 && cfg.epsilon.len() != c || cfg.step_size.len() > 1 && cfg.step_size.len() != c {
        return Err(invalid("per-channel attack settings must match the image channels"));
    }
    // (1 - mask) per pixel; absent mask means no penalty.
    let complement: Option<Vec<f64>> = match mask {
        Some(m) => {
            if m.dims() != (h, w) {
                return Err(invalid(format!(
                    "mask {:?} does not match image {:?}",
                    m.dims(),
                    (h, w)
                )));
            }
            Some(m.values().iter().map(|&v| 1.0 - v as f64).collect())
        }
        None => None,
    };
    let pre = model.preprocessing();
    let ranges: Vec<(f64, f64)> = (0..c).map(|k| pre.normalized_range(k)).collect();
    let clean = image.data();

    let loss_grad = |logits: &[f64]| -> Vec<f64> {
        let mut g = softmax(logits);
        g[target] -= 1.0;
        g
    };

    let mut p = vec![0.0; c * plane];
    let mut current = image.clone();
    let (mut logits, mut grad) = model.input_gradient(&current, &loss_grad)?;
    let mut confidence_trace = Vec::new();
    let mut linf_trace = Vec::new();
    let mut success = false;
    let mut iterations = 0;

    loop {
        if iterations > 0 {
            let conf = softmax(&logits)[target];
            confidence_trace.push(conf);
            if conf >= cfg.target_confidence {
                success = true;
                break;
            }
        }
        if iterations == cfg.max_iterations {
            break;
        }
        iterations += 1;

        let mut total = grad.data().to_vec();
        if let Some(comp) = &complement {
            let weighted_norm = (0..c * plane)
                .map(|i| {
                    let q = p[i] * comp[i % plane];
                    q * q
                })
                .sum::<f64>()
                .sqrt();
            if weighted_norm > 0.0 {
                for (i, t) in total.iter_mut().enumerate() {
                    let m = comp[i % plane];
                    *t += cfg.beta * m * m * p[i] / weighted_norm;
                }
            }
        }
        if total.iter().any(|v| !v.is_finite()) {
            return Err(Error::AttackDiverged { iteration: iterations });
        }

        let mut perturbed = Vec::with_capacity(c * plane);
        for k in 0..c {
            let (eps, step) = (cfg.epsilon_for(k), cfg.step_for(k));
            let (lo, hi) = ranges[k];
            for i in k * plane..(k + 1) * plane {
                let stepped = (p[i] - step * sign(total[i])).clamp(-eps, eps);
                let x = (clean[i] + stepped).clamp(lo, hi);
                p[i] = x - clean[i];
                perturbed.push(x);
            }
        }
        linf_trace.push(linf_norm(&p));
        current = ImageTensor::from_data(c, h, w, perturbed)?;
        (logits, grad) = model.input_gradient(&current, &loss_grad)?;
    }

    let final_confidence = softmax(&logits)[target];
    Ok(AttackResult {
        target,
        l2_norm: l2_norm(&p),
        linf_norm: linf_norm(&p),
        perturbation: RasterStack::new(c, h, w, p)?,
        perturbed: current.into_stack(),
        success,
        final_confidence,
        iterations,
        confidence_trace,
        linf_trace,
    })
}

/// Percentage by which the masked attack's L2 norm undercuts the vanilla one.
pub fn norm_reduction(masked: &AttackResult, vanilla: &AttackResult) -> Result<f64> {
    if !masked.success || !vanilla.success {
        return Err(Error::NotComparable(format!(
            "both attacks must succeed (masked: {}, vanilla: {})",
            masked.success, vanilla.success
        )));
    }
    if masked.target != vanilla.target {
        return Err(Error::NotComparable("attacks target different classes".into()));
    }
    if !(vanilla.l2_norm > 0.0) {
        return Err(Error::NotComparable("vanilla perturbation is zero".into()));
    }
    Ok(100.0 * (1.0 - masked.l2_norm / vanilla.l2_norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(l2: f64, success: bool) -> AttackResult {
        AttackResult {
            target: 1,
            perturbation: RasterStack::zeros(1, 1, 1).unwrap(),
            perturbed: RasterStack::zeros(1, 1, 1).unwrap(),
            success,
            final_confidence: 0.995,
            iterations: 3,
            l2_norm: l2,
            linf_norm: l2,
            confidence_trace: vec![],
            linf_trace: vec![],
        }
    }

    #[test]
    fn reduction_percentages() {
        assert_eq!(norm_reduction(&result(2.0, true), &result(2.0, true)).unwrap(), 0.0);
        assert_eq!(norm_reduction(&result(1.0, true), &result(2.0, true)).unwrap(), 50.0);
        assert!(matches!(
            norm_reduction(&result(1.0, false), &result(2.0, true)),
            Err(Error::NotComparable(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::new(vec![0.0], vec![0.1], 10, 0.9, 1.0).is_err());
        assert!(AttackConfig::new(vec![0.1], vec![0.1], 0, 0.9, 1.0).is_err());
        assert!(AttackConfig::new(vec![0.1], vec![0.1], 10, 1.5, 1.0).is_err());
        assert!(AttackConfig::new(vec![0.1], vec![0.1], 10, 0.9, -1.0).is_err());
        let cfg = AttackConfig::from_raw_epsilon(DEFAULT_RAW_EPSILON, &Preprocessing::symmetric(3))
            .unwrap();
        assert!((cfg.epsilon_for(2) - 24.0 / 255.0).abs() < 1e-15);
        assert!((cfg.step_for(0) - 2.4 / 255.0).abs() < 1e-15);
        assert_eq!(cfg.beta, 50.0);
    }

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-0.0), 0.0);
        assert_eq!(sign(-3.0), -1.0);
    }
}
