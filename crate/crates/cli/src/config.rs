//! Run configuration: a TOML file, command-line overrides, and model loading.

use std::fs;
use std::path::{Path, PathBuf};

use cameras::attack::{AttackConfig, DEFAULT_BETA, DEFAULT_MAX_ITERATIONS, DEFAULT_RAW_EPSILON, DEFAULT_TARGET_CONFIDENCE};
use cameras::bridge::ModelDescriptor;
use cameras::metrics::DEFAULT_TOLERANCE;
use cameras::nn::Network;
use cameras::saliency::{LadderKind, SaliencyMethod, SaliencyOptions, DEFAULT_MAX_SIZE, DEFAULT_STEPS};
use cameras::sanity::{EdgeControl, MethodFn, SaliencyFn};
use cameras::{Classifier, LayerRef, Preprocessing};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Cameras,
    Gradcam,
    /// Image-only Sobel map; a negative control for the sanity checks.
    EdgeControl,
}

impl MethodName {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "cameras" => Ok(MethodName::Cameras),
            "gradcam" | "grad-cam" => Ok(MethodName::Gradcam),
            "edge-control" | "edge_control" => Ok(MethodName::EdgeControl),
            other => Err(CliError::Config(format!(
                "unknown method {other:?} (expected cameras, gradcam or edge-control)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Cameras => "cameras",
            MethodName::Gradcam => "gradcam",
            MethodName::EdgeControl => "edge_control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub pointing: bool,
    pub tolerance: usize,
    pub density: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { pointing: true, tolerance: DEFAULT_TOLERANCE, density: true }
    }
}

/// Attack settings; budgets are in raw pixel units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSettings {
    pub epsilon: f64,
    /// Defaults to a tenth of `epsilon`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    pub max_iterations: usize,
    pub target_confidence: f64,
    pub beta: f64,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_RAW_EPSILON,
            step_size: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            target_confidence: DEFAULT_TARGET_CONFIDENCE,
            beta: DEFAULT_BETA,
        }
    }
}

impl AttackSettings {
    /// Converts to normalized units through `pre`.
    pub fn resolve(&self, pre: &Preprocessing) -> Result<AttackConfig, CliError> {
        let channels = pre.channels();
        let epsilon = (0..channels).map(|c| pre.scale_to_normalized(c, self.epsilon)).collect();
        let raw_step = self.step_size.unwrap_or(self.epsilon / 10.0);
        let step = (0..channels).map(|c| pre.scale_to_normalized(c, raw_step)).collect();
        AttackConfig::new(epsilon, step, self.max_iterations, self.target_confidence, self.beta)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SanitySettings {
    /// Randomization depths; every parametric layer when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    pub threshold: f64,
    /// Also run the adversarial-correspondence check.
    pub correspondence: bool,
}

impl Default for SanitySettings {
    fn default() -> Self {
        Self { depths: None, threshold: 0.3, correspondence: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Model descriptor (TOML), relative to the config file.
    pub model: PathBuf,
    pub method: MethodName,
    pub zeta_max: (usize, usize),
    pub steps: usize,
    pub ladder: LadderKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    pub metrics: MetricsConfig,
    pub attack: AttackSettings,
    pub sanity: SanitySettings,
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.toml"),
            method: MethodName::Cameras,
            zeta_max: DEFAULT_MAX_SIZE,
            steps: DEFAULT_STEPS,
            ladder: LadderKind::Linear,
            layer: None,
            metrics: MetricsConfig::default(),
            attack: AttackSettings::default(),
            sanity: SanitySettings::default(),
            out: PathBuf::from("out"),
            seed: 0,
            workers: 0,
        }
    }
}

/// Command-line values that replace config entries when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub zeta_max: Option<(usize, usize)>,
    pub steps: Option<usize>,
    pub layer: Option<String>,
    pub method: Option<MethodName>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
}

impl RunConfig {
    /// Reads `path`, resolving the model path against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.model.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.model = dir.join(&cfg.model);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.model {
            self.model = v.clone();
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.zeta_max {
            self.zeta_max = v;
        }
        if let Some(v) = o.steps {
            self.steps = v;
        }
        if let Some(v) = &o.layer {
            self.layer = Some(v.clone());
        }
        if let Some(v) = o.method {
            self.method = v;
        }
        if let Some(v) = o.beta {
            self.attack.beta = v;
        }
        if let Some(v) = o.epsilon {
            self.attack.epsilon = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.zeta_max.0 == 0 || self.zeta_max.1 == 0 {
            return Err(CliError::Config("zeta_max must be positive".into()));
        }
        if !(self.sanity.threshold > -1.0 && self.sanity.threshold <= 1.0) {
            return Err(CliError::Config("sanity threshold must lie in (-1, 1]".into()));
        }
        if let Some(d) = &self.sanity.depths {
            if d.is_empty() || d.windows(2).any(|p| p[0] >= p[1]) || d[0] == 0 {
                return Err(CliError::Config("sanity depths must be increasing and >= 1".into()));
            }
        }
        self.attack.resolve(&Preprocessing::symmetric(1))?;
        Ok(())
    }

    pub fn saliency_method(&self) -> Option<SaliencyMethod> {
        match self.method {
            MethodName::Cameras => Some(SaliencyMethod::Cameras {
                max: self.zeta_max,
                steps: self.steps,
                ladder: self.ladder,
            }),
            MethodName::Gradcam => Some(SaliencyMethod::Gradcam),
            MethodName::EdgeControl => None,
        }
    }

    pub fn options(&self) -> SaliencyOptions {
        SaliencyOptions { layer: self.layer.clone().map(LayerRef::new), target: None }
    }

    pub fn saliency_fn(&self) -> Box<dyn SaliencyFn> {
        match self.saliency_method() {
            Some(method) => Box::new(MethodFn { method, options: self.options() }),
            None => Box::new(EdgeControl),
        }
    }
}

/// A registered network together with its descriptor.
pub struct LoadedModel {
    pub descriptor: ModelDescriptor,
    pub network: Network,
}

/// Reads a descriptor and the network weights it points to.
pub fn load_model(descriptor_path: &Path) -> Result<LoadedModel, CliError> {
    let text = fs::read_to_string(descriptor_path).map_err(|e| {
        CliError::Model(format!("cannot read descriptor {}: {e}", descriptor_path.display()))
    })?;
    let descriptor: ModelDescriptor = toml::from_str(&text)
        .map_err(|e| CliError::Model(format!("{}: {e}", descriptor_path.display())))?;
    let weights = descriptor_path.parent().unwrap_or(Path::new(".")).join(&descriptor.weights);
    let raw = fs::read(&weights)
        .map_err(|e| CliError::Model(format!("cannot read weights {}: {e}", weights.display())))?;
    let network: Network = serde_json::from_slice(&raw)
        .map_err(|e| CliError::Model(format!("{}: {e}", weights.display())))?;
    let network = network.register(&descriptor).map_err(|e| CliError::Model(e.to_string()))?;
    if descriptor.preprocessing.channels() != 1
        && descriptor.preprocessing.channels() != network.input_channels()
    {
        return Err(CliError::Model("preprocessing channels do not match the network".into()));
    }
    Ok(LoadedModel { descriptor, network })
}

/// Parses `"1000"` or `"1000x800"` (height x width).
pub fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => {
            let v = parse(s)?;
            Ok((v, v))
        }
    }
}

/// Parses a decimal or a fraction such as `12/255`.
pub fn parse_fraction(s: &str) -> Result<f64, String> {
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    match s.split_once('/') {
        Some((a, b)) => Ok(parse(a)? / parse(b)?),
        None => parse(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_replace_entries() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides { steps: Some(0), beta: Some(1.0), method: Some(MethodName::Gradcam), ..Default::default() });
        assert_eq!((cfg.steps, cfg.attack.beta, cfg.method), (0, 1.0, MethodName::Gradcam));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("stepz = 3").is_err());
    }

    #[test]
    fn argument_parsers() {
        assert_eq!(parse_dims("300").unwrap(), (300, 300));
        assert_eq!(parse_dims("300x200").unwrap(), (300, 200));
        assert!(parse_dims("a").is_err());
        assert!((parse_fraction("12/255").unwrap() - 12.0 / 255.0).abs() < 1e-15);
        assert_eq!(parse_fraction("0.5").unwrap(), 0.5);
        assert!(MethodName::parse("rise").is_err());
    }

    #[test]
    fn raw_budgets_convert_per_channel() {
        let pre = Preprocessing::new(vec![0.5, 0.4, 0.3], vec![0.5, 0.25, 1.0], (0.0, 1.0)).unwrap();
        let cfg = AttackSettings::default().resolve(&pre).unwrap();
        assert!((cfg.epsilon[1] - DEFAULT_RAW_EPSILON / 0.25).abs() < 1e-15);
        assert!((cfg.step_size[2] - DEFAULT_RAW_EPSILON / 10.0).abs() < 1e-15);
    }
}
