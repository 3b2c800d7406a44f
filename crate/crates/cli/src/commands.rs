//! The batch commands and the toy fixture generator.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cameras::attack::{least_likely_label, norm_reduction, pgd, AttackConfig, AttackResult};
use cameras::bridge::ModelDescriptor;
use cameras::fixture::{
    quadrant_cnn, quadrant_dataset, trained_quadrant_model, TrainConfig, CLASS_NAMES,
    FIXTURE_MAX_SIZE, IMAGE_SIDE, WEIGHT_SEED,
};
use cameras::metrics::{density_scores, pointing_game, DensityScores, PointingRecord};
use cameras::saliency::SaliencyMap;
use cameras::sanity::{
    cascading_randomization, correspondence_with, edge_map, verdict, Criterion, Evidence,
    SanityVerdict,
};
use cameras::{Classifier, ImageTensor, Preprocessing};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{load_model, LoadedModel, Overrides, RunConfig};
use crate::error::{is_model_failure, CliError, EXIT_OK, EXIT_PARTIAL};
use crate::io::{
    list_images, load_annotations, load_image, to_rgb, write_json, write_map, write_png,
    AnnotatedObject, AnnotationFile, ImageEntry, LabelRef, Manifest, ManifestEntry,
};
use crate::render;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Saliency,
    Eval,
    Sanity,
    Attack,
}

/// An image that was skipped, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub image_id: String,
    pub error: String,
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: CommandKind,
    pub images: PathBuf,
    pub config: RunConfig,
    pub model: ModelDescriptor,
    /// Adaptive pooling inserted at registration, if any.
    pub pooling_shim: Option<(usize, usize)>,
    pub processed: usize,
    pub failures: Vec<Failure>,
}

pub struct Context {
    pub config: RunConfig,
    pub model: LoadedModel,
    pub images: PathBuf,
    pub entries: Vec<ImageEntry>,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(config_path: Option<&Path>, images: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match config_path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        config.apply(overrides);
        config.validate()?;
        let model = load_model(&config.model)?;
        if let Some(layer) = &config.layer {
            model
                .network
                .layer_index(&cameras::LayerRef::new(layer.clone()))
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        let entries = list_images(images)?;
        let width = match (config.workers, model.network.is_reentrant()) {
            (_, false) => 1,
            (0, true) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            (n, true) => n,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(width)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        fs::create_dir_all(&config.out)?;
        Ok(Self { config, model, images: images.to_path_buf(), entries, pool })
    }

    fn net(&self) -> &dyn Classifier {
        &self.model.network
    }

    fn pre(&self) -> &Preprocessing {
        self.model.network.preprocessing()
    }

    fn out(&self, name: impl AsRef<Path>) -> PathBuf {
        self.config.out.join(name)
    }

    fn load(&self, entry: &ImageEntry) -> Result<ImageTensor, String> {
        load_image(&entry.path, self.pre(), self.net().input_channels())
    }

    fn map(&self, image: &ImageTensor, target: Option<usize>) -> cameras::Result<SaliencyMap> {
        match self.config.saliency_method() {
            Some(method) => {
                let mut opts = self.config.options();
                opts.target = target;
                method.compute(self.net(), image, &opts)
            }
            None => edge_map(image),
        }
    }

    fn write_manifest(&self, command: CommandKind, processed: usize, failures: &[Failure]) -> Result<(), CliError> {
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            images: self.images.clone(),
            config: self.config.clone(),
            model: self.model.descriptor.clone(),
            pooling_shim: self.model.network.pooling_shim(),
            processed,
            failures: failures.to_vec(),
        };
        write_json(&self.out("run_manifest.json"), &manifest)
    }
}

/// Per-image result: done, skipped, or a model failure that aborts the run.
enum Step<T> {
    Done(T),
    Skipped(String),
    Fatal(String),
}

fn step_err<T>(e: cameras::Error) -> Step<T> {
    if is_model_failure(&e) {
        Step::Fatal(e.to_string())
    } else {
        Step::Skipped(e.to_string())
    }
}

macro_rules! attempt {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return step_err(e),
        }
    };
}

/// Splits outcomes; a model failure anywhere becomes the run's error.
fn partition<T>(ctx: &Context, steps: Vec<(String, Step<T>)>) -> Result<(Vec<T>, Vec<Failure>), CliError> {
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (id, step) in steps {
        match step {
            Step::Done(v) => done.push(v),
            Step::Skipped(error) => {
                warn!("skipping {id}: {error}");
                failures.push(Failure { image_id: id, error });
            }
            Step::Fatal(error) => {
                let _ = ctx.write_manifest(CommandKind::Saliency, done.len(), &failures);
                return Err(CliError::Model(format!("{id}: {error}")));
            }
        }
    }
    Ok((done, failures))
}

fn run_all<T: Send>(ctx: &Context, f: impl Fn(&ImageEntry) -> Step<T> + Sync) -> Vec<(String, Step<T>)> {
    ctx.pool.install(|| ctx.entries.par_iter().map(|e| (e.id.clone(), f(e))).collect())
}

/// Counts of a finished run; failures turn into the partial exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub processed: usize,
    pub failed: usize,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failed > 0 {
            EXIT_PARTIAL
        } else {
            EXIT_OK
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    #[serde(default)]
    pub pointing: Vec<PointingRecord>,
    #[serde(default)]
    pub density: Option<DensityScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub saliency_ms: f64,
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub image_id: String,
    pub method: String,
    pub label: usize,
    pub map_file: String,
    pub overlay_file: String,
    pub metrics: RecordMetrics,
    pub timings: Timings,
    pub accepted_scales: usize,
    pub skipped_scales: Vec<((usize, usize), usize)>,
}

fn append_records(path: &Path, records: &[ResultRecord]) -> Result<(), CliError> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    for r in records {
        let mut line = serde_json::to_vec(r).map_err(|e| CliError::Io(e.to_string()))?;
        line.push(b'\n');
        file.write_all(&line)?;
    }
    Ok(())
}

fn image_record(ctx: &Context, entry: &ImageEntry, with_metrics: bool) -> Step<ResultRecord> {
    let image = match ctx.load(entry) {
        Ok(i) => i,
        Err(e) => return Step::Skipped(format!("unreadable image: {e}")),
    };
    let annotations = match (&entry.annotation, with_metrics && ctx.config.metrics.pointing) {
        (Some(path), true) => match load_annotations(path, &ctx.model.descriptor, image.dims()) {
            Ok(a) => a,
            Err(e) => return Step::Skipped(format!("annotation: {e}")),
        },
        _ => Vec::new(),
    };
    let label = attempt!(ctx.net().predict(&image)).label;
    let start = Instant::now();
    let map = attempt!(ctx.map(&image, None));
    let saliency_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut metrics = RecordMetrics::default();
    if with_metrics {
        let mut classes: Vec<usize> = annotations.iter().map(|a| a.class).collect();
        classes.sort_unstable();
        classes.dedup();
        for class in classes {
            let objects: Vec<_> = annotations.iter().filter(|a| a.class == class).cloned().collect();
            let class_map = if class == label || ctx.config.saliency_method().is_none() {
                map.clone()
            } else {
                attempt!(ctx.map(&image, Some(class)))
            };
            let rec = attempt!(pointing_game(&entry.id, &class_map, &objects, ctx.config.metrics.tolerance));
            metrics.pointing.push(rec);
        }
        if ctx.config.metrics.density {
            match density_scores(ctx.net(), &image, &map, label) {
                Ok(d) => metrics.density = Some(d),
                Err(cameras::Error::UndefinedDensity) => warn!("{}: density undefined for a degenerate map", entry.id),
                Err(e) => return step_err(e),
            }
        }
    }

    let map_file = format!("{}.cams", entry.id);
    let overlay_file = format!("{}_overlay.png", entry.id);
    let written = write_map(&ctx.out(&map_file), &map)
        .and_then(|_| write_png(&ctx.out(&overlay_file), &render::overlay(&to_rgb(&image, ctx.pre()), &map)));
    if let Err(e) = written {
        return Step::Skipped(e.to_string());
    }
    Step::Done(ResultRecord {
        image_id: entry.id.clone(),
        method: ctx.config.method.as_str().to_string(),
        label,
        map_file,
        overlay_file,
        metrics,
        timings: Timings { saliency_ms },
        accepted_scales: map.meta.accepted_scales,
        skipped_scales: map.meta.skipped_scales.clone(),
    })
}

/// Writes a map, an overlay and a record line per image.
pub fn cmd_saliency(ctx: &Context) -> Result<RunSummary, CliError> {
    let steps = run_all(ctx, |e| image_record(ctx, e, false));
    let (records, failures) = partition(ctx, steps)?;
    append_records(&ctx.out("records.jsonl"), &records)?;
    ctx.write_manifest(CommandKind::Saliency, records.len(), &failures)?;
    info!("saliency: {} maps, {} skipped", records.len(), failures.len());
    Ok(RunSummary { processed: records.len(), failed: failures.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub images: usize,
    /// Fraction of pointing trials that hit; absent without annotations.
    pub pointing_accuracy: Option<f64>,
    pub pointing_trials: usize,
    pub mean_rho_plus: Option<f64>,
    pub mean_rho_minus: Option<f64>,
    pub records: Vec<ResultRecord>,
    pub failures: Vec<Failure>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl EvalReport {
    pub fn from_records(method: &str, records: Vec<ResultRecord>, failures: Vec<Failure>) -> Self {
        let trials: Vec<bool> = records.iter().flat_map(|r| r.metrics.pointing.iter().map(|p| p.hit)).collect();
        let hits = trials.iter().filter(|h| **h).count();
        Self {
            method: method.to_string(),
            images: records.len(),
            pointing_accuracy: (!trials.is_empty()).then(|| hits as f64 / trials.len() as f64),
            pointing_trials: trials.len(),
            mean_rho_plus: mean(records.iter().filter_map(|r| r.metrics.density.map(|d| d.rho_plus))),
            mean_rho_minus: mean(records.iter().filter_map(|r| r.metrics.density.map(|d| d.rho_minus))),
            records,
            failures,
        }
    }

    /// Header and one row, in the shape of a results table.
    pub fn csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "method,images,pointing_trials,pointing_accuracy,mean_rho_plus,mean_rho_minus\n{},{},{},{},{},{}\n",
            self.method,
            self.images,
            self.pointing_trials,
            cell(self.pointing_accuracy),
            cell(self.mean_rho_plus),
            cell(self.mean_rho_minus)
        )
    }
}

/// Pointing game and densities over annotated images.
pub fn cmd_eval(ctx: &Context) -> Result<RunSummary, CliError> {
    let steps = run_all(ctx, |e| image_record(ctx, e, true));
    let (records, failures) = partition(ctx, steps)?;
    append_records(&ctx.out("records.jsonl"), &records)?;
    let report = EvalReport::from_records(ctx.config.method.as_str(), records, failures.clone());
    write_json(&ctx.out("eval_report.json"), &report)?;
    crate::io::atomic_write(&ctx.out("summary.csv"), report.csv().as_bytes())?;
    ctx.write_manifest(CommandKind::Eval, report.images, &failures)?;
    Ok(RunSummary { processed: report.images, failed: failures.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityImageReport {
    pub image_id: String,
    pub randomization: SanityVerdict,
    pub strip_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondence: Option<SanityVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondence_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityReport {
    pub method: String,
    pub seed: u64,
    pub threshold: f64,
    pub depths: Vec<usize>,
    /// Mean of the per-image randomized similarities.
    pub mean_similarity: Option<f64>,
    /// Whether every image passed the randomization criterion.
    pub passed: bool,
    pub images: Vec<SanityImageReport>,
    pub failures: Vec<Failure>,
}

fn correspondence(ctx: &Context, cfg: &AttackConfig, image: &ImageTensor, map: &SaliencyMap) -> Result<SanityVerdict, String> {
    let target = least_likely_label(ctx.net(), image).map_err(|e| e.to_string())?;
    let attack = pgd(ctx.net(), image, target, cfg, None).map_err(|e| e.to_string())?;
    if !attack.success {
        return Err(format!("inconclusive: attack reached confidence {:.4}", attack.final_confidence));
    }
    let r = correspondence_with(&attack, map).map_err(|e| e.to_string())?;
    let control = correspondence_with(&attack, &edge_map(image).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    verdict(ctx.config.method.as_str(), Some(Evidence::Correlation(r)), Criterion::ExceedsControl { control })
        .map_err(|e| e.to_string())
}

/// Cascading randomization per image, with a strip image and a verdict.
pub fn cmd_sanity(ctx: &Context) -> Result<RunSummary, CliError> {
    let layers = ctx.net().list_layers().len();
    let depths = ctx.config.sanity.depths.clone().unwrap_or_else(|| (1..=layers).collect());
    if depths.last().is_some_and(|d| *d > layers) {
        return Err(CliError::Config(format!("sanity depths exceed the {layers} parametric layers")));
    }
    let saliency = ctx.config.saliency_fn();
    let attack_cfg = ctx.config.attack.resolve(ctx.pre())?;
    let criterion = Criterion::MeanSimilarityBelow { threshold: ctx.config.sanity.threshold };
    let steps = run_all(ctx, |entry| {
        let image = match ctx.load(entry) {
            Ok(i) => i,
            Err(e) => return Step::Skipped(format!("unreadable image: {e}")),
        };
        let mut curve = attempt!(cascading_randomization(ctx.net(), &image, saliency.as_ref(), &depths, ctx.config.seed));
        let strip_file = format!("{}_strip.png", entry.id);
        let rgb = to_rgb(&image, ctx.pre());
        let panels: Vec<(usize, Option<&SaliencyMap>)> = curve.points.iter().map(|p| (p.depth, p.map.as_ref())).collect();
        if let Err(e) = write_png(&ctx.out(&strip_file), &render::strip(&rgb, &panels)) {
            return Step::Skipped(e.to_string());
        }
        let (correspondence, correspondence_error) = match (ctx.config.sanity.correspondence, &curve.points[0].map) {
            (true, Some(map)) => match correspondence(ctx, &attack_cfg, &image, map) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e)),
            },
            _ => (None, None),
        };
        for p in &mut curve.points {
            p.artifact = Some(strip_file.clone());
        }
        let randomization = attempt!(verdict(&saliency.name(), Some(Evidence::Curve(curve)), criterion.clone()));
        let report = SanityImageReport { image_id: entry.id.clone(), randomization, strip_file, correspondence, correspondence_error };
        if let Err(e) = write_json(&ctx.out(format!("{}_sanity.json", entry.id)), &report) {
            return Step::Skipped(e.to_string());
        }
        Step::Done(report)
    });
    let (images, failures) = partition(ctx, steps)?;
    let report = SanityReport {
        method: saliency.name(),
        seed: ctx.config.seed,
        threshold: ctx.config.sanity.threshold,
        depths,
        mean_similarity: mean(images.iter().map(|i| i.randomization.statistic)),
        passed: !images.is_empty() && images.iter().all(|i| i.randomization.passed),
        images,
        failures: failures.clone(),
    };
    write_json(&ctx.out("sanity_report.json"), &report)?;
    ctx.write_manifest(CommandKind::Sanity, report.images.len(), &failures)?;
    Ok(RunSummary { processed: report.images.len(), failed: failures.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Vanilla,
    Masked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub kind: AttackKind,
    pub target: usize,
    pub success: bool,
    pub final_confidence: f64,
    pub iterations: usize,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub confidence_trace: Vec<f64>,
    pub perturbed_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionEntry {
    /// `100 * (1 - masked / vanilla)` of the L2 norms; absent when not comparable.
    pub percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEntry {
    pub image_id: String,
    pub clean_label: usize,
    pub target: usize,
    pub results: Vec<AttackSummary>,
    pub reduction: ReductionEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackManifest {
    pub method: String,
    pub raw_epsilon: f64,
    pub config: AttackConfig,
    pub mean_reduction: Option<f64>,
    pub entries: Vec<AttackEntry>,
    pub failures: Vec<Failure>,
}

fn summarize(ctx: &Context, kind: AttackKind, r: &AttackResult, id: &str) -> Result<AttackSummary, CliError> {
    let suffix = match kind {
        AttackKind::Vanilla => "vanilla",
        AttackKind::Masked => "masked",
    };
    let perturbed_file = format!("{id}_{suffix}.png");
    let image = r.perturbed_image().map_err(|e| CliError::Io(e.to_string()))?;
    write_png(&ctx.out(&perturbed_file), &to_rgb(&image, ctx.pre()))?;
    Ok(AttackSummary {
        kind,
        target: r.target,
        success: r.success,
        final_confidence: r.final_confidence,
        iterations: r.iterations,
        l2_norm: r.l2_norm,
        linf_norm: r.linf_norm,
        confidence_trace: r.confidence_trace.clone(),
        perturbed_file,
    })
}

/// Vanilla and saliency-masked attacks toward the least likely label.
pub fn cmd_attack(ctx: &Context) -> Result<RunSummary, CliError> {
    let cfg = ctx.config.attack.resolve(ctx.pre())?;
    let steps = run_all(ctx, |entry| {
        let image = match ctx.load(entry) {
            Ok(i) => i,
            Err(e) => return Step::Skipped(format!("unreadable image: {e}")),
        };
        let clean_label = attempt!(ctx.net().predict(&image)).label;
        let target = attempt!(least_likely_label(ctx.net(), &image));
        let map = attempt!(ctx.map(&image, None));
        let vanilla = attempt!(pgd(ctx.net(), &image, target, &cfg, None));
        let masked = attempt!(pgd(ctx.net(), &image, target, &cfg, Some(&map)));
        let reduction = match norm_reduction(&masked, &vanilla) {
            Ok(p) => ReductionEntry { percent: Some(p), reason: None },
            Err(e) => ReductionEntry { percent: None, reason: Some(e.to_string()) },
        };
        let results = summarize(ctx, AttackKind::Vanilla, &vanilla, &entry.id)
            .and_then(|v| Ok(vec![v, summarize(ctx, AttackKind::Masked, &masked, &entry.id)?]));
        match results {
            Ok(results) => Step::Done(AttackEntry { image_id: entry.id.clone(), clean_label, target, results, reduction }),
            Err(e) => Step::Skipped(e.to_string()),
        }
    });
    let (entries, failures) = partition(ctx, steps)?;
    let manifest = AttackManifest {
        method: ctx.config.method.as_str().to_string(),
        raw_epsilon: ctx.config.attack.epsilon,
        config: cfg,
        mean_reduction: mean(entries.iter().filter_map(|e| e.reduction.percent)),
        entries,
        failures: failures.clone(),
    };
    write_json(&ctx.out("attack_manifest.json"), &manifest)?;
    ctx.write_manifest(CommandKind::Attack, manifest.entries.len(), &failures)?;
    Ok(RunSummary { processed: manifest.entries.len(), failed: failures.len() })
}

/// Options of the fixture generator.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureOptions {
    pub out: PathBuf,
    pub count: usize,
    pub seed: u64,
    /// 0 leaves the network at its random initialization.
    pub epochs: usize,
    pub train_size: usize,
}

/// Writes a trained quadrant model, its descriptor, annotated PNG images, a
/// manifest and a ready-to-use config.
pub fn build_fixture(opts: &FixtureOptions) -> Result<(), CliError> {
    let net = if opts.epochs == 0 {
        quadrant_cnn(WEIGHT_SEED)
    } else {
        let cfg = TrainConfig { epochs: opts.epochs, ..TrainConfig::default() };
        let (net, report) = trained_quadrant_model(opts.train_size, &cfg).map_err(|e| CliError::Model(e.to_string()))?;
        info!("fixture model: {report:?}");
        net
    };
    let pre = net.preprocessing.clone();
    write_json(&opts.out.join("model.json"), &net)?;
    let descriptor = ModelDescriptor {
        id: net.id.clone(),
        weights: "model.json".into(),
        preprocessing: pre.clone(),
        default_layer: Some("conv3".into()),
        input_size: (IMAGE_SIDE, IMAGE_SIDE),
        min_input: (8, 8),
        classes: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    crate::io::atomic_write(&opts.out.join("model.toml"), to_toml(&descriptor)?.as_bytes())?;

    let mut entries = Vec::with_capacity(opts.count);
    for (i, s) in quadrant_dataset(opts.count, opts.seed).iter().enumerate() {
        let id = format!("{i:04}");
        let image = PathBuf::from("images").join(format!("{id}.png"));
        let annotation = PathBuf::from("images").join(format!("{id}.json"));
        write_png(&opts.out.join(&image), &to_rgb(&s.image, &pre))?;
        let (x0, y0, x1, y1) = s.square;
        let ann = AnnotationFile {
            image_id: id.clone(),
            width: IMAGE_SIDE,
            height: IMAGE_SIDE,
            objects: vec![AnnotatedObject {
                label: LabelRef::Name(CLASS_NAMES[s.label].into()),
                bbox: Some([x0, y0, x1, y1]),
                mask_file: None,
            }],
        };
        write_json(&opts.out.join(&annotation), &ann)?;
        entries.push(ManifestEntry { id: Some(id), image, annotation: Some(annotation) });
    }
    write_json(&opts.out.join("manifest.json"), &Manifest { entries })?;
    let config = RunConfig {
        model: PathBuf::from("model.toml"),
        zeta_max: FIXTURE_MAX_SIZE,
        out: PathBuf::from("out"),
        ..RunConfig::default()
    };
    crate::io::atomic_write(&opts.out.join("config.toml"), to_toml(&config)?.as_bytes())?;
    Ok(())
}

fn to_toml<T: Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(|e| CliError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, hit: bool) -> ResultRecord {
        ResultRecord {
            image_id: id.into(),
            method: "cameras".into(),
            label: 0,
            map_file: format!("{id}.cams"),
            overlay_file: format!("{id}_overlay.png"),
            metrics: RecordMetrics {
                pointing: vec![PointingRecord { image_id: id.into(), class: 0, hit, point: (0, 0), tolerance: 15 }],
                density: Some(DensityScores { rho_plus: 2.0, rho_minus: if hit { 0.5 } else { 1.0 }, base_confidence: 0.9 }),
            },
            timings: Timings { saliency_ms: 1.0 },
            accepted_scales: 8,
            skipped_scales: vec![],
        }
    }

    #[test]
    fn three_hits_of_four() {
        let recs = vec![record("a", true), record("b", true), record("c", false), record("d", true)];
        let report = EvalReport::from_records("cameras", recs, vec![]);
        assert_eq!(report.pointing_accuracy, Some(0.75));
        assert_eq!(report.mean_rho_plus, Some(2.0));
        assert_eq!(report.mean_rho_minus, Some(0.625));
        let text = serde_json::to_string(&report).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&text).unwrap(), report);
        assert!(report.csv().ends_with("cameras,4,4,0.750000,2.000000,0.625000\n"));
    }

    #[test]
    fn partial_runs_exit_three() {
        assert_eq!(RunSummary { processed: 3, failed: 1 }.exit_code(), EXIT_PARTIAL);
        assert_eq!(RunSummary { processed: 3, failed: 0 }.exit_code(), EXIT_OK);
    }
}
