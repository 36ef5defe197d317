//! Image/mask datasets: loading, resizing, binarisation, splits, batching
//! and a synthetic lesion generator.
//!
//! Layout on disk: `<root>/images/<id>.<ext>` and `<root>/masks/<id>.<ext>`
//! with identical stems. Images may be PNG or JPEG, masks PNG.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{GrayImage, ImageError, Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{lit, Element, Tensor};

pub const DEFAULT_TARGET: (usize, usize) = (192, 256);
/// Mask pixels strictly above this grey level become foreground.
pub const MASK_THRESHOLD: u8 = 127;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
const MASK_EXTENSIONS: [&str; 1] = ["png"];

/// One resized image/mask pair. Pixels are kept as bytes; [`Sample::image`]
/// scales to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub height: usize,
    pub width: usize,
    /// Channel-major RGB, `3 × H × W`.
    pub rgb: Vec<u8>,
    /// `H × W`, values in `{0, 1}`.
    pub mask: Vec<u8>,
}

impl Sample {
    pub fn from_images(id: impl Into<String>, image: &RgbImage, mask: &GrayImage, target: (usize, usize)) -> Result<Self> {
        let (h, w) = target;
        if h == 0 || w == 0 {
            return Err(Error::Config(format!("target size must be non-zero, got {h}x{w}")));
        }
        let image = imageops::resize(image, w as u32, h as u32, FilterType::Triangle);
        let mask = imageops::resize(mask, w as u32, h as u32, FilterType::Nearest);
        let plane = h * w;
        let mut rgb = vec![0u8; 3 * plane];
        for (i, px) in image.pixels().enumerate() {
            for c in 0..3 {
                rgb[c * plane + i] = px.0[c];
            }
        }
        Ok(Self {
            id: id.into(),
            height: h,
            width: w,
            rgb,
            mask: mask.pixels().map(|p| u8::from(p.0[0] > MASK_THRESHOLD)).collect(),
        })
    }

    pub fn image<T: Element>(&self) -> Vec<T> {
        self.rgb.iter().map(|&v| lit::<T>(v as f64 / 255.0)).collect()
    }

    pub fn mask<T: Element>(&self) -> Vec<T> {
        self.mask.iter().map(|&v| lit::<T>(v as f64)).collect()
    }
}

fn stem(path: &Path) -> Option<String> {
    path.file_stem().and_then(|s| s.to_str()).map(str::to_owned)
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| match e {
        ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            source: other,
        },
    })
}

/// Loads and resizes an image (bilinear, scaled by 1/255 on access) and its
/// mask (nearest neighbour, binarised).
pub fn load_pair(image_path: impl AsRef<Path>, mask_path: impl AsRef<Path>, target: (usize, usize)) -> Result<Sample> {
    let (ip, mp) = (image_path.as_ref(), mask_path.as_ref());
    let id = stem(ip).ok_or_else(|| Error::Pairing(format!("{} has no file stem", ip.display())))?;
    if stem(mp).as_deref() != Some(id.as_str()) {
        return Err(Error::Pairing(format!(
            "image {} and mask {} have different stems",
            ip.display(),
            mp.display()
        )));
    }
    let image = open_image(ip)?.to_rgb8();
    let mask = open_image(mp)?.to_luma8();
    Sample::from_images(id, &image, &mask, target)
}

fn list_by_stem(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            continue;
        }
        if let Some(id) = stem(&path) {
            if let Some(prev) = out.insert(id.clone(), path.clone()) {
                return Err(Error::Pairing(format!(
                    "duplicate id '{id}': {} and {}",
                    prev.display(),
                    path.display()
                )));
            }
        }
    }
    Ok(out)
}

/// Image/mask paths of a dataset directory, sorted by id.
pub fn scan_dir(root: impl AsRef<Path>) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let root = root.as_ref();
    let images = list_by_stem(&root.join("images"), &IMAGE_EXTENSIONS)?;
    let mut masks = list_by_stem(&root.join("masks"), &MASK_EXTENSIONS)?;
    let mut out = Vec::with_capacity(images.len());
    for (id, ip) in images {
        let mp = masks
            .remove(&id)
            .ok_or_else(|| Error::Pairing(format!("image {} has no mask", ip.display())))?;
        out.push((id, ip, mp));
    }
    if let Some((id, _)) = masks.into_iter().next() {
        return Err(Error::Pairing(format!("mask '{id}' has no image")));
    }
    Ok(out)
}

/// Samples in lexicographic id order.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load_dir(root: impl AsRef<Path>, target: (usize, usize)) -> Result<Self> {
        let samples = scan_dir(root)?
            .into_iter()
            .map(|(_, ip, mp)| load_pair(ip, mp, target))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }

    pub fn from_samples(mut samples: Vec<Sample>) -> Self {
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        Self { samples }
    }

    /// In-memory synthetic dataset (see [`synth_pair`]).
    pub fn synthetic(count: usize, seed: u64, target: (usize, usize)) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..count)
            .map(|i| {
                let (img, mask) = synth_pair(&mut rng, target.0, target.1);
                Sample::from_images(synth_id(i), &img, &mask, target)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_samples(samples))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.id.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    #[default]
    Lexicographic,
    SeededShuffle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub test_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ordering: Ordering,
}

impl SplitSpec {
    pub fn new(train_count: usize, test_count: usize) -> Self {
        Self {
            train_count,
            test_count,
            seed: 0,
            ordering: Ordering::Lexicographic,
        }
    }

    pub fn isic2018() -> Self {
        Self::new(2074, 520)
    }

    pub fn ph2() -> Self {
        Self::new(170, 30)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "isic" | "isic2018" => Ok(Self::isic2018()),
            "ph2" => Ok(Self::ph2()),
            other => Err(Error::Config(format!("unknown split preset '{other}' (isic2018|ph2)"))),
        }
    }
}

/// Dataset indices of the training and test subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Takes the first `train_count` items (after ordering) for training and the
/// next `test_count` for testing.
pub fn split(dataset_len: usize, spec: &SplitSpec) -> Result<Split> {
    let needed = spec.train_count + spec.test_count;
    if needed > dataset_len {
        return Err(Error::Config(format!(
            "split needs {} + {} items, dataset has {dataset_len}",
            spec.train_count, spec.test_count
        )));
    }
    let mut order: Vec<usize> = (0..dataset_len).collect();
    if spec.ordering == Ordering::SeededShuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    }
    let train = order[..spec.train_count].to_vec();
    let test = order[spec.train_count..needed].to_vec();
    debug_assert!(train.iter().all(|i| !test.contains(i)));
    Ok(Split { train, test })
}

/// Index groups for one epoch. Without shuffling the indices are visited in
/// ascending (id) order; with shuffling the permutation depends only on
/// `(seed, epoch)`.
pub fn batch_order(indices: &[usize], batch_size: usize, shuffle: bool, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if indices.is_empty() {
        return Err(Error::Usage("cannot batch an empty split".into()));
    }
    let mut order = indices.to_vec();
    order.sort_unstable();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// A stacked batch: images `[B, 3, H, W]`, masks `[B, 1, H, W]`.
#[derive(Debug, Clone)]
pub struct Batch<T: Element> {
    pub ids: Vec<String>,
    pub images: Tensor<T>,
    pub masks: Tensor<T>,
}

pub fn make_batch<T: Element>(dataset: &Dataset, indices: &[usize]) -> Result<Batch<T>> {
    let first = indices
        .first()
        .and_then(|&i| dataset.samples.get(i))
        .ok_or_else(|| Error::Usage("empty or out-of-range batch".into()))?;
    let (h, w) = (first.height, first.width);
    let mut images = Vec::with_capacity(indices.len() * 3 * h * w);
    let mut masks = Vec::with_capacity(indices.len() * h * w);
    let mut ids = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = dataset
            .samples
            .get(i)
            .ok_or_else(|| Error::Usage(format!("sample index {i} out of range")))?;
        if (s.height, s.width) != (h, w) {
            return Err(Error::shape("make_batch", format!("sample '{}' is {}x{}, expected {h}x{w}", s.id, s.height, s.width)));
        }
        images.extend(s.image::<T>());
        masks.extend(s.mask::<T>());
        ids.push(s.id.clone());
    }
    let b = indices.len();
    Ok(Batch {
        ids,
        images: Tensor::from_vec(images, &[b, 3, h, w])?,
        masks: Tensor::from_vec(masks, &[b, 1, h, w])?,
    })
}

pub fn synth_id(i: usize) -> String {
    format!("synth_{i:05}")
}

/// A textured skin-tone background with one dark elliptical "lesion" and
/// its mask (255 inside the ellipse).
pub fn synth_pair(rng: &mut impl Rng, height: usize, width: usize) -> (RgbImage, GrayImage) {
    let (h, w) = (height as f64, width as f64);
    let base = [rng.gen_range(190.0..235.0), rng.gen_range(140.0..185.0), rng.gen_range(120.0..165.0)];
    let lesion = [rng.gen_range(70.0..130.0), rng.gen_range(40.0..85.0), rng.gen_range(25.0..70.0)];
    let (cy, cx) = (rng.gen_range(0.3..0.7) * h, rng.gen_range(0.3..0.7) * w);
    let (ry, rx) = (rng.gen_range(0.12..0.3) * h, rng.gen_range(0.12..0.3) * w);
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let (freq_y, freq_x, phase) = (rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3), rng.gen_range(0.0..6.3));
    let (sin, cos) = theta.sin_cos();
    let mut img = RgbImage::new(width as u32, height as u32);
    let mut mask = GrayImage::new(width as u32, height as u32);
    for y in 0..height {
        for x in 0..width {
            let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
            let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
            let r = (u / rx).powi(2) + (v / ry).powi(2);
            let texture = 8.0 * (freq_y * y as f64 + phase).sin() * (freq_x * x as f64).cos() + rng.gen_range(-10.0..10.0);
            let colour = if r <= 1.0 { &lesion } else { &base };
            let px = colour.map(|c| (c + texture).clamp(0.0, 255.0) as u8);
            img.put_pixel(x as u32, y as u32, Rgb(px));
            mask.put_pixel(x as u32, y as u32, image::Luma([if r <= 1.0 { 255 } else { 0 }]));
        }
    }
    (img, mask)
}

/// Writes `count` synthetic pairs as PNG files under `out/images` and
/// `out/masks`. Returns the generated ids.
pub fn write_synthetic(out: impl AsRef<Path>, count: usize, seed: u64, size: (usize, usize)) -> Result<Vec<String>> {
    let out = out.as_ref();
    let (idir, mdir) = (out.join("images"), out.join("masks"));
    for d in [&idir, &mdir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let (img, mask) = synth_pair(&mut rng, size.0, size.1);
        let id = synth_id(i);
        let ip = idir.join(format!("{id}.png"));
        img.save(&ip).map_err(|e| Error::Image { path: ip, source: e })?;
        let mp = mdir.join(format!("{id}.png"));
        mask.save(&mp).map_err(|e| Error::Image { path: mp, source: e })?;
        ids.push(id);
    }
    Ok(ids)
}
