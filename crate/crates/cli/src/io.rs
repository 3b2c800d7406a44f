//! Image decoding, map files, annotations, input listing and atomic writes.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use cameras::bridge::ModelDescriptor;
use cameras::metrics::{ObjectAnnotation, Region};
use cameras::saliency::{MapMeta, SaliencyMap};
use cameras::{ImageTensor, Preprocessing};
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Writes `bytes` next to `path` under a temporary name, then renames it
/// into place so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| CliError::Io(format!("bad path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    atomic_write(path, &text)
}

/// Decodes an 8-bit image into a normalized planar tensor.
///
/// Grayscale input for a 3-channel model is replicated across channels;
/// colour input for a 1-channel model is converted to luma.
pub fn load_image(path: &Path, pre: &Preprocessing, channels: usize) -> Result<ImageTensor, String> {
    let decoded = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (lo, hi) = pre.value_range;
    let raw = |v: u8| lo + (hi - lo) * v as f64 / 255.0;
    let mut data = Vec::with_capacity(channels * h * w);
    match channels {
        1 => {
            let luma = decoded.to_luma8();
            data.extend(luma.as_raw().iter().map(|&v| pre.normalize(0, raw(v))));
        }
        3 => {
            let rgb = decoded.to_rgb8();
            for c in 0..3 {
                data.extend(rgb.as_raw().iter().skip(c).step_by(3).map(|&v| pre.normalize(c, raw(v))));
            }
        }
        other => return Err(format!("unsupported model channel count {other}")),
    }
    ImageTensor::from_data(channels, h, w, data).map_err(|e| format!("{}: {e}", path.display()))
}

/// Converts a normalized tensor back to an 8-bit RGB raster.
pub fn to_rgb(image: &ImageTensor, pre: &Preprocessing) -> RgbImage {
    let (c, h, w) = image.stack().shape();
    let (lo, hi) = pre.value_range;
    let mut out = RgbImage::new(w as u32, h as u32);
    for (idx, px) in out.pixels_mut().enumerate() {
        for (k, slot) in px.0.iter_mut().enumerate() {
            let ch = if c == 1 { 0 } else { k };
            let raw = pre.denormalize(ch, image.stack().channel(ch)[idx]);
            *slot = (((raw - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

pub fn png_bytes(img: &RgbImage) -> Result<Vec<u8>, CliError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(buf.into_inner())
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<(), CliError> {
    atomic_write(path, &png_bytes(img)?)
}

const MAP_MAGIC: &[u8; 4] = b"CAMS";
const MAP_VERSION: u8 = 1;

/// Map file: `CAMS`, version byte, height and width as u32 LE, then the
/// values as f32 LE in row-major order.
pub fn encode_map(map: &SaliencyMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 4 * map.values().len());
    out.extend_from_slice(MAP_MAGIC);
    out.push(MAP_VERSION);
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_map(bytes: &[u8]) -> Result<SaliencyMap, String> {
    if bytes.len() < 13 || &bytes[..4] != MAP_MAGIC {
        return Err("not a map file".into());
    }
    if bytes[4] != MAP_VERSION {
        return Err(format!("unsupported map version {}", bytes[4]));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (h, w) = (word(5), word(9));
    if bytes.len() != 13 + 4 * h * w {
        return Err(format!("map body length does not match {h}x{w}"));
    }
    let values = bytes[13..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SaliencyMap::new(h, w, values, MapMeta::named("file")).map_err(|e| e.to_string())
}

pub fn write_map(path: &Path, map: &SaliencyMap) -> Result<(), CliError> {
    atomic_write(path, &encode_map(map))
}

pub fn read_map(path: &Path) -> Result<SaliencyMap, String> {
    decode_map(&fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?)
}

/// One input image, with an optional annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(default)]
    pub id: Option<String>,
    pub image: PathBuf,
    #[serde(default)]
    pub annotation: Option<PathBuf>,
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Lists inputs from a directory of PNG files (annotations as `<stem>.json`
/// alongside) or from a JSON manifest with paths relative to itself.
pub fn list_images(input: &Path) -> Result<Vec<ImageEntry>, CliError> {
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        paths.sort();
        return Ok(paths
            .into_iter()
            .map(|p| {
                let ann = p.with_extension("json");
                ImageEntry { id: stem(&p), annotation: ann.is_file().then_some(ann), path: p }
            })
            .collect());
    }
    let text = fs::read_to_string(input)
        .map_err(|e| CliError::Config(format!("cannot read images {}: {e}", input.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    let base = input.parent().unwrap_or(Path::new("."));
    Ok(manifest
        .entries
        .into_iter()
        .map(|e| ImageEntry {
            id: e.id.unwrap_or_else(|| stem(&e.image)),
            path: base.join(&e.image),
            annotation: e.annotation.map(|a| base.join(a)),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub label: LabelRef,
    /// Inclusive `[x0, y0, x1, y1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[usize; 4]>,
    /// Binary mask image, relative to the annotation file; non-zero is inside.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<AnnotatedObject>,
}

/// Reads an annotation file and checks it against the image dims.
pub fn load_annotations(
    path: &Path,
    descriptor: &ModelDescriptor,
    image_dims: (usize, usize),
) -> Result<Vec<ObjectAnnotation>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file: AnnotationFile = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if (file.height, file.width) != image_dims {
        return Err(format!(
            "annotation is {}x{} but image is {}x{}",
            file.height, file.width, image_dims.0, image_dims.1
        ));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    file.objects
        .iter()
        .map(|o| {
            let class = match &o.label {
                LabelRef::Index(i) => *i,
                LabelRef::Name(n) => descriptor.class_index(n).ok_or_else(|| format!("unknown class {n:?}"))?,
            };
            let region = match (&o.bbox, &o.mask_file) {
                (Some([x0, y0, x1, y1]), None) => Region::Box { x0: *x0, y0: *y0, x1: *x1, y1: *y1 },
                (None, Some(mask)) => {
                    let m = image::open(base.join(mask)).map_err(|e| format!("{}: {e}", mask.display()))?.to_luma8();
                    Region::Mask {
                        height: m.height() as usize,
                        width: m.width() as usize,
                        pixels: m.as_raw().iter().map(|&v| v > 0).collect(),
                    }
                }
                _ => return Err("each object needs exactly one of bbox or mask_file".to_string()),
            };
            let ann = ObjectAnnotation { class, region };
            ann.validate(image_dims).map_err(|e| e.to_string())?;
            Ok(ann)
        })
        .collect()
}
