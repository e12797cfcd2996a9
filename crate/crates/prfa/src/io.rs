//! PNG images, objectness masks and the annotation file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, RgbImage};
use prfa_core::{BBox, GroundTruthObject, Image, Sample, SearchMask};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}: malformed annotations: {source}")]
    Annotations { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

/// Converts any decoded image to RGB in `[0, 1]`, dividing by the full
/// scale of its bit depth.
pub fn from_dynamic(img: DynamicImage) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => {
            img.to_rgb16().into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect()
        }
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => {
            img.to_rgb32f().into_raw().into_iter().map(|v| f64::from(v).clamp(0.0, 1.0)).collect()
        }
        _ => img.to_rgb8().into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
    };
    Image::from_raw(w, h, data).expect("decoded buffer matches its dimensions")
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_rgb8(img: &Image) -> RgbImage {
    let raw = img.as_slice().iter().map(|&v| quantize(v)).collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer matches dimensions")
}

/// Maps a perturbation in `[-ε, ε]` to `δ / (2ε) + 0.5`, channel by channel.
pub fn perturbation_to_rgb8(delta: &Image, epsilon: f64) -> RgbImage {
    let raw = delta.as_slice().iter().map(|&d| quantize(d / (2.0 * epsilon) + 0.5)).collect();
    RgbImage::from_raw(delta.width() as u32, delta.height() as u32, raw).expect("buffer matches dimensions")
}

pub fn load_png(path: &Path) -> Result<Image, IoError> {
    let img = image::open(path).map_err(|source| IoError::Image { path: path.to_path_buf(), source })?;
    Ok(from_dynamic(img))
}

pub fn save_rgb8(img: &RgbImage, path: &Path) -> Result<(), IoError> {
    img.save_with_format(path, ImageFormat::Png).map_err(|source| IoError::Image { path: path.to_path_buf(), source })
}

pub fn save_png(img: &Image, path: &Path) -> Result<(), IoError> {
    save_rgb8(&to_rgb8(img), path)
}

pub fn encode_png(img: &Image) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    to_rgb8(img).write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, image::ImageError> {
    Ok(from_dynamic(image::load_from_memory_with_format(bytes, ImageFormat::Png)?))
}

/// Reads an objectness mask; pixels above half intensity admit patch origins.
pub fn mask_from_file(path: &Path, width: usize, height: usize) -> Result<SearchMask, IoError> {
    let img = image::open(path).map_err(|source| IoError::Image { path: path.to_path_buf(), source })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if (w, h) != (width, height) {
        return Err(IoError::Invalid(format!(
            "{}: mask is {w}x{h}, image is {width}x{height}",
            path.display()
        )));
    }
    SearchMask::from_intensities(w, h, img.to_luma8().as_raw()).map_err(|e| IoError::Invalid(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationObject {
    pub label: usize,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

/// `{"num_classes": Y, "images": {"<file name>": [{"label", "box"}, ...]}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub num_classes: usize,
    pub images: BTreeMap<String, Vec<AnnotationObject>>,
}

impl Annotations {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(file_err(path))?;
        serde_json::from_str(&text).map_err(|source| IoError::Annotations { path: path.to_path_buf(), source })
    }

    pub fn from_samples(num_classes: usize, samples: &[Sample]) -> Self {
        let images = samples
            .iter()
            .map(|s| {
                let objs = s
                    .objects
                    .iter()
                    .map(|o| AnnotationObject { label: o.label, bbox: [o.bbox.x1, o.bbox.y1, o.bbox.x2, o.bbox.y2] })
                    .collect();
                (format!("{}.png", s.name), objs)
            })
            .collect();
        Self { num_classes, images }
    }

    fn objects(&self, name: &str) -> Result<Vec<GroundTruthObject>, String> {
        let objs = self.images.get(name).ok_or_else(|| "no annotations for image".to_string())?;
        objs.iter()
            .map(|o| {
                let b = BBox::new(o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3]);
                if o.label >= self.num_classes {
                    Err(format!("label {} out of range for {} classes", o.label, self.num_classes))
                } else if !b.is_valid() {
                    Err(format!("invalid box {:?}", o.bbox))
                } else {
                    Ok(GroundTruthObject::new(b, o.label))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemError {
    pub name: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub num_classes: usize,
    pub samples: Vec<Sample>,
    /// Items that could not be loaded; the rest of the dataset is unaffected.
    pub errors: Vec<ItemError>,
}

fn stem(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(s, _)| s)
}

/// Loads every annotated PNG under `images_dir`, in file-name order.
///
/// Unreadable images, annotations without an image, images without
/// annotations and out-of-range labels are recorded per item. With
/// `mask_dir`, `<stem>.png` in it becomes that image's objectness prior.
pub fn load_dataset(images_dir: &Path, annotations: &Path, mask_dir: Option<&Path>) -> Result<Dataset, IoError> {
    let ann = Annotations::read(annotations)?;
    let mut names: Vec<String> = fs::read_dir(images_dir)
        .map_err(file_err(images_dir))?
        .filter_map(Result::ok)
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    for name in ann.images.keys() {
        if !names.contains(name) {
            names.push(name.clone());
        }
    }
    names.sort();
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for name in names {
        let loaded = ann.objects(&name).and_then(|objects| {
            let image = load_png(&images_dir.join(&name)).map_err(|e| e.to_string())?;
            let mut sample = Sample::new(stem(&name), image, objects);
            if let Some(dir) = mask_dir {
                let path = dir.join(format!("{}.png", stem(&name)));
                if path.exists() {
                    let (w, h) = sample.image.dims();
                    sample.prior = Some(mask_from_file(&path, w, h).map_err(|e| e.to_string())?);
                }
            }
            Ok(sample)
        });
        match loaded {
            Ok(s) => samples.push(s),
            Err(message) => errors.push(ItemError { name, message }),
        }
    }
    Ok(Dataset { num_classes: ann.num_classes, samples, errors })
}

/// Writes samples as `<dir>/images/<name>.png` plus `<dir>/annotations.json`.
pub fn write_dataset(dir: &Path, num_classes: usize, samples: &[Sample]) -> Result<(), IoError> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(file_err(&images))?;
    for s in samples {
        save_png(&s.image, &images.join(format!("{}.png", s.name)))?;
    }
    let ann = Annotations::from_samples(num_classes, samples);
    let path = dir.join("annotations.json");
    let text = serde_json::to_string_pretty(&ann).expect("annotations serialize");
    fs::write(&path, text + "\n").map_err(file_err(&path))
}
