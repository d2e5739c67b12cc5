//! CIFAR-10 / CIFAR-100 binary-format loading and training-time augmentation.
//!
//! Record layouts (all bytes unsigned):
//!
//! * CIFAR-10: 1 label byte, then 3072 pixel bytes.
//! * CIFAR-100: 1 coarse label byte, 1 fine label byte, then 3072 pixel bytes.
//!
//! Pixels are 1024 red, 1024 green, 1024 blue, each plane row-major 32×32.
//! A pixel byte `b` becomes `b / 255`, then is standardized per channel by
//! the training split's mean and standard deviation.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Shape4, Tensor};

pub const IMAGE_SIZE: usize = 32;
pub const IMAGE_CHANNELS: usize = 3;
pub const PIXELS_PER_IMAGE: usize = IMAGE_CHANNELS * IMAGE_SIZE * IMAGE_SIZE;
pub const RECORDS_PER_CIFAR10_FILE: usize = 10_000;

const CIFAR10_TRAIN_FILES: [&str; 5] =
    ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
const CIFAR10_TEST_FILE: &str = "test_batch.bin";
const CIFAR100_TRAIN_FILE: &str = "train.bin";
const CIFAR100_TEST_FILE: &str = "test.bin";

/// Stream keys for [`Rng::fork`].
const SHUFFLE_STREAM: u64 = 0x5348_5546;
const AUGMENT_STREAM: u64 = 0x4155_474D;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarFormat {
    Cifar10,
    Cifar100,
}

impl CifarFormat {
    pub fn record_len(self) -> usize {
        match self {
            CifarFormat::Cifar10 => 1 + PIXELS_PER_IMAGE,
            CifarFormat::Cifar100 => 2 + PIXELS_PER_IMAGE,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            CifarFormat::Cifar10 => 10,
            CifarFormat::Cifar100 => 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    /// Class label (the fine label for CIFAR-100).
    pub label: u8,
    pub coarse_label: Option<u8>,
    pub pixels: Vec<u8>,
}

impl Record {
    pub fn to_bytes(&self, format: CifarFormat) -> Vec<u8> {
        let mut out = Vec::with_capacity(format.record_len());
        if format == CifarFormat::Cifar100 {
            out.push(self.coarse_label.unwrap_or(0));
        }
        out.push(self.label);
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Splits a byte buffer into records; the length must be a whole number of records.
pub fn parse_records(bytes: &[u8], format: CifarFormat, path: &Path) -> Result<Vec<Record>> {
    let len = format.record_len();
    if bytes.is_empty() || bytes.len() % len != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("length {} is not a positive multiple of the {len}-byte record", bytes.len()),
        });
    }
    let classes = format.classes();
    bytes
        .chunks_exact(len)
        .enumerate()
        .map(|(i, rec)| {
            let (coarse, label, pixels) = match format {
                CifarFormat::Cifar10 => (None, rec[0], &rec[1..]),
                CifarFormat::Cifar100 => (Some(rec[0]), rec[1], &rec[2..]),
            };
            if label as usize >= classes {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("record {i} has label {label}, expected < {classes}"),
                });
            }
            Ok(Record { label, coarse_label: coarse, pixels: pixels.to_vec() })
        })
        .collect()
}

/// Reads one batch file. With `expected_records`, the file must hold exactly that many.
pub fn read_batch_file(path: &Path, format: CifarFormat, expected_records: Option<usize>) -> Result<Vec<Record>> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    if let Some(n) = expected_records {
        let expected = n * format.record_len();
        if bytes.len() != expected {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("expected exactly {expected} bytes ({n} records), found {}", bytes.len()),
            });
        }
    }
    parse_records(&bytes, format, path)
}

pub fn write_records(path: &Path, records: &[Record], format: CifarFormat) -> Result<()> {
    let mut bytes = Vec::with_capacity(records.len() * format.record_len());
    for r in records {
        bytes.extend(r.to_bytes(format));
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Per-channel mean and standard deviation of `b / 255` pixel values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ChannelStats {
    pub fn compute(pixels: &[u8]) -> Self {
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        let mut sum = [0f64; 3];
        let mut sq = [0f64; 3];
        let mut hist = [[0u64; 256]; 3];
        for img in pixels.chunks_exact(PIXELS_PER_IMAGE) {
            for c in 0..3 {
                for &b in &img[c * plane..(c + 1) * plane] {
                    hist[c][b as usize] += 1;
                }
            }
        }
        let count = (pixels.len() / 3) as f64;
        let mut mean = [0f64; 3];
        let mut std = [0f64; 3];
        for c in 0..3 {
            for (b, &k) in hist[c].iter().enumerate() {
                let v = b as f64 / 255.0;
                sum[c] += k as f64 * v;
            }
            mean[c] = sum[c] / count;
            for (b, &k) in hist[c].iter().enumerate() {
                let d = b as f64 / 255.0 - mean[c];
                sq[c] += k as f64 * d * d;
            }
            // constant channels would divide by zero; leave them unscaled
            std[c] = (sq[c] / count).sqrt();
            if std[c] == 0.0 {
                std[c] = 1.0;
            }
        }
        ChannelStats { mean, std }
    }

    #[inline]
    pub fn standardize(&self, channel: usize, byte: u8) -> f32 {
        ((byte as f64 / 255.0 - self.mean[channel]) / self.std[channel]) as f32
    }
}

#[derive(Clone, Debug)]
pub struct LabeledImage {
    /// `(1, 3, h, w)` standardized pixels.
    pub pixels: Tensor<f32>,
    pub label: usize,
    pub coarse_label: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub split: Split,
    pub format: CifarFormat,
    pub classes: usize,
    pub stats: ChannelStats,
    pixels: Vec<u8>,
    labels: Vec<u8>,
    coarse: Option<Vec<u8>>,
}

impl Dataset {
    /// Dataset over `records`, standardized by `stats` or by its own statistics.
    pub fn from_records(split: Split, format: CifarFormat, records: Vec<Record>, stats: Option<ChannelStats>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut pixels = Vec::with_capacity(records.len() * PIXELS_PER_IMAGE);
        let mut labels = Vec::with_capacity(records.len());
        let mut coarse = (format == CifarFormat::Cifar100).then(|| Vec::with_capacity(records.len()));
        for r in records {
            if r.pixels.len() != PIXELS_PER_IMAGE {
                return Err(Error::InvalidArgument(format!("record has {} pixel bytes", r.pixels.len())));
            }
            pixels.extend_from_slice(&r.pixels);
            labels.push(r.label);
            if let Some(c) = coarse.as_mut() {
                c.push(r.coarse_label.unwrap_or(0));
            }
        }
        let stats = stats.unwrap_or_else(|| ChannelStats::compute(&pixels));
        Ok(Dataset { split, format, classes: format.classes(), stats, pixels, labels, coarse })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }

    pub fn raw_pixels(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS_PER_IMAGE..(i + 1) * PIXELS_PER_IMAGE]
    }

    /// The `i`-th record exactly as it appears in the binary file.
    pub fn record(&self, i: usize) -> Record {
        Record {
            label: self.labels[i],
            coarse_label: self.coarse.as_ref().map(|c| c[i]),
            pixels: self.raw_pixels(i).to_vec(),
        }
    }

    fn write_standardized(&self, i: usize, dst: &mut [f32]) {
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        for (k, (d, &b)) in dst.iter_mut().zip(self.raw_pixels(i)).enumerate() {
            *d = self.stats.standardize(k / plane, b);
        }
    }

    pub fn image(&self, i: usize) -> LabeledImage {
        let mut data = vec![0f32; PIXELS_PER_IMAGE];
        self.write_standardized(i, &mut data);
        LabeledImage {
            pixels: Tensor::from_vec([1, IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE], data).expect("fixed image shape"),
            label: self.label(i),
            coarse_label: self.coarse.as_ref().map(|c| c[i] as usize),
        }
    }

    /// The first `count` examples (all of them if `count >= len`).
    pub fn take(&self, count: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..count.min(self.len())).collect();
        self.select(&idx)
    }

    /// Examples at `indices`, keeping this split's standardization statistics.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let records = indices
            .iter()
            .map(|&i| {
                if i >= self.len() {
                    Err(Error::Index(format!("example {i} outside 0..{}", self.len())))
                } else {
                    Ok(self.record(i))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::from_records(self.split, self.format, records, Some(self.stats))
    }
}

fn resolve_dir(dir: &Path, probe: &str, nested: &str) -> PathBuf {
    if !dir.join(probe).exists() && dir.join(nested).join(probe).exists() {
        dir.join(nested)
    } else {
        dir.to_path_buf()
    }
}

/// Loads the five CIFAR-10 training batches and the test batch from `dir`
/// (or its `cifar-10-batches-bin` subdirectory). Both splits are
/// standardized with training-set statistics.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    if !dir.exists() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let dir = resolve_dir(dir, CIFAR10_TRAIN_FILES[0], "cifar-10-batches-bin");
    let mut train = Vec::with_capacity(5 * RECORDS_PER_CIFAR10_FILE);
    for name in CIFAR10_TRAIN_FILES {
        train.extend(read_batch_file(&dir.join(name), CifarFormat::Cifar10, Some(RECORDS_PER_CIFAR10_FILE))?);
    }
    let test = read_batch_file(&dir.join(CIFAR10_TEST_FILE), CifarFormat::Cifar10, Some(RECORDS_PER_CIFAR10_FILE))?;
    let train = Dataset::from_records(Split::Train, CifarFormat::Cifar10, train, None)?;
    let test = Dataset::from_records(Split::Test, CifarFormat::Cifar10, test, Some(train.stats))?;
    Ok((train, test))
}

/// Loads CIFAR-100 `train.bin` (50,000 records) and `test.bin` (10,000) from
/// `dir` (or its `cifar-100-binary` subdirectory). Fine labels are used.
pub fn load_cifar100(dir: &Path) -> Result<(Dataset, Dataset)> {
    if !dir.exists() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let dir = resolve_dir(dir, CIFAR100_TRAIN_FILE, "cifar-100-binary");
    let train = read_batch_file(&dir.join(CIFAR100_TRAIN_FILE), CifarFormat::Cifar100, Some(50_000))?;
    let test = read_batch_file(&dir.join(CIFAR100_TEST_FILE), CifarFormat::Cifar100, Some(10_000))?;
    let train = Dataset::from_records(Split::Train, CifarFormat::Cifar100, train, None)?;
    let test = Dataset::from_records(Split::Test, CifarFormat::Cifar100, test, Some(train.stats))?;
    Ok((train, test))
}

/// Random CIFAR-format records with uniformly random pixels and labels, for
/// tests and data-free smoke runs.
pub fn synthetic_records(count: usize, format: CifarFormat, seed: u64) -> Vec<Record> {
    use rand::RngCore;
    let mut rng = Rng::new(seed);
    (0..count)
        .map(|_| {
            let mut pixels = vec![0u8; PIXELS_PER_IMAGE];
            rng.fill_bytes(&mut pixels);
            let label = rng.below(format.classes()) as u8;
            let coarse_label = (format == CifarFormat::Cifar100).then(|| rng.below(20) as u8);
            Record { label, coarse_label, pixels }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub pad: usize,
    pub crop: usize,
    pub flip_probability: f64,
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { pad: 4, crop: IMAGE_SIZE, flip_probability: 0.5, enabled: true }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop > IMAGE_SIZE + 2 * self.pad {
            return Err(Error::InvalidArgument(format!(
                "crop {} must lie in 1..={} for padding {}",
                self.crop,
                IMAGE_SIZE + 2 * self.pad,
                self.pad
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::InvalidArgument(format!("flip probability {} outside [0, 1]", self.flip_probability)));
        }
        Ok(())
    }

    /// Largest crop offset along each axis.
    pub fn max_offset(&self) -> usize {
        IMAGE_SIZE + 2 * self.pad - self.crop
    }
}

/// One draw of the augmentation: crop origin inside the padded image and the flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentParams {
    pub offset_y: usize,
    pub offset_x: usize,
    pub flip: bool,
}

impl AugmentParams {
    /// Draws `offset_y`, then `offset_x` (each uniform on `0..=max_offset`),
    /// then `flip = uniform[0,1) < flip_probability`.
    pub fn sample(cfg: &AugmentConfig, rng: &mut Rng) -> Self {
        let range = cfg.max_offset() + 1;
        let offset_y = rng.below(range);
        let offset_x = rng.below(range);
        let flip = rng.uniform() < cfg.flip_probability;
        AugmentParams { offset_y, offset_x, flip }
    }

    /// Identity parameters for a configuration: centered crop, no flip.
    pub fn centered(cfg: &AugmentConfig) -> Self {
        AugmentParams { offset_y: cfg.pad, offset_x: cfg.pad, flip: false }
    }
}

/// Zero-pads each side by `cfg.pad`, crops `crop × crop` at the given offsets,
/// and mirrors horizontally when `params.flip`. `src` is `3 × 32 × 32`.
pub fn apply_augment(src: &[f32], cfg: &AugmentConfig, params: AugmentParams, dst: &mut [f32]) {
    let (size, crop, pad) = (IMAGE_SIZE, cfg.crop, cfg.pad as isize);
    debug_assert_eq!(dst.len(), IMAGE_CHANNELS * crop * crop);
    for c in 0..IMAGE_CHANNELS {
        let plane = &src[c * size * size..(c + 1) * size * size];
        for y in 0..crop {
            let sy = (params.offset_y + y) as isize - pad;
            let row = &mut dst[(c * crop + y) * crop..(c * crop + y + 1) * crop];
            if sy < 0 || sy >= size as isize {
                row.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            for (x, d) in row.iter_mut().enumerate() {
                let cx = if params.flip { crop - 1 - x } else { x };
                let sx = (params.offset_x + cx) as isize - pad;
                *d = if sx < 0 || sx >= size as isize { 0.0 } else { plane[sy as usize * size + sx as usize] };
            }
        }
    }
}

/// Random pad-crop-flip of one image; the label is unchanged.
pub fn augment(image: &LabeledImage, cfg: &AugmentConfig, rng: &mut Rng) -> Result<LabeledImage> {
    cfg.validate()?;
    let s = image.pixels.shape();
    if (s.n, s.c, s.h, s.w) != (1, IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE) {
        return Err(Error::ShapeMismatch(format!("augment expects (1,3,32,32), got {s}")));
    }
    if !cfg.enabled {
        return Ok(image.clone());
    }
    let params = AugmentParams::sample(cfg, rng);
    let mut out = vec![0f32; IMAGE_CHANNELS * cfg.crop * cfg.crop];
    apply_augment(image.pixels.data(), cfg, params, &mut out);
    Ok(LabeledImage {
        pixels: Tensor::from_vec([1, IMAGE_CHANNELS, cfg.crop, cfg.crop], out)?,
        label: image.label,
        coarse_label: image.coarse_label,
    })
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    /// Dataset indices of the batch items.
    pub indices: Vec<usize>,
}

/// One epoch over a dataset in mini-batches. The last batch may be short.
///
/// The visiting order is a shuffle drawn from `rng.fork(shuffle key)`;
/// example `i` is augmented with `rng.fork(augment key).fork(i)`, so a batch
/// depends only on `(rng, i)` and not on the order batches are consumed.
pub struct BatchIter<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    position: usize,
    augment: Option<(AugmentConfig, Rng)>,
}

impl<'a> BatchIter<'a> {
    pub fn new(
        dataset: &'a Dataset,
        batch_size: usize,
        shuffle: bool,
        rng: &Rng,
        augment: Option<AugmentConfig>,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        if shuffle {
            order.shuffle(&mut rng.fork(SHUFFLE_STREAM));
        }
        let augment = match augment {
            Some(cfg) if cfg.enabled => {
                cfg.validate()?;
                if cfg.crop != IMAGE_SIZE {
                    return Err(Error::InvalidArgument("batched augmentation must crop back to 32x32".into()));
                }
                Some((cfg, rng.fork(AUGMENT_STREAM)))
            }
            _ => None,
        };
        Ok(BatchIter { dataset, order, batch_size, position: 0, augment })
    }

    pub fn batch_count(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.position >= self.order.len() {
            return None;
        }
        let end = (self.position + self.batch_size).min(self.order.len());
        let indices = self.order[self.position..end].to_vec();
        self.position = end;
        let mut data = vec![0f32; indices.len() * PIXELS_PER_IMAGE];
        let mut scratch = vec![0f32; PIXELS_PER_IMAGE];
        for (slot, &i) in data.chunks_exact_mut(PIXELS_PER_IMAGE).zip(&indices) {
            match &self.augment {
                Some((cfg, base)) => {
                    self.dataset.write_standardized(i, &mut scratch);
                    let params = AugmentParams::sample(cfg, &mut base.fork(i as u64));
                    apply_augment(&scratch, cfg, params, slot);
                }
                None => self.dataset.write_standardized(i, slot),
            }
        }
        let labels = indices.iter().map(|&i| self.dataset.label(i)).collect();
        let shape = Shape4 { n: indices.len(), c: IMAGE_CHANNELS, h: IMAGE_SIZE, w: IMAGE_SIZE };
        Some(Batch { images: Tensor::from_vec(shape, data).expect("batch shape"), labels, indices })
    }
}

pub fn batch_iterator<'a>(
    dataset: &'a Dataset,
    batch_size: usize,
    shuffle: bool,
    rng: &Rng,
    augment: Option<AugmentConfig>,
) -> Result<BatchIter<'a>> {
    BatchIter::new(dataset, batch_size, shuffle, rng, augment)
}

/// Augmentation parameters used for example `index` by a [`BatchIter`] built from `rng`.
pub fn augment_params_for(rng: &Rng, cfg: &AugmentConfig, index: usize) -> AugmentParams {
    AugmentParams::sample(cfg, &mut rng.fork(AUGMENT_STREAM).fork(index as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset(n: usize, seed: u64) -> Dataset {
        Dataset::from_records(Split::Train, CifarFormat::Cifar10, synthetic_records(n, CifarFormat::Cifar10, seed), None).unwrap()
    }

    #[test]
    fn single_record_layout() {
        let mut bytes = vec![7u8];
        bytes.extend(std::iter::repeat_n(255u8, PIXELS_PER_IMAGE));
        let recs = parse_records(&bytes, CifarFormat::Cifar10, Path::new("mem")).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].label, 7);
        assert!(recs[0].pixels.iter().all(|&b| b as f64 / 255.0 == 1.0));
    }

    #[test]
    fn cifar100_fine_label_is_second_byte() {
        let mut bytes = vec![3u8, 42u8];
        bytes.extend(std::iter::repeat_n(0u8, PIXELS_PER_IMAGE));
        let recs = parse_records(&bytes, CifarFormat::Cifar100, Path::new("mem")).unwrap();
        assert_eq!((recs[0].label, recs[0].coarse_label), (42, Some(3)));
        assert_eq!(recs[0].to_bytes(CifarFormat::Cifar100), bytes);
    }

    #[test]
    fn truncated_and_bad_label() {
        let bytes = vec![1u8; 3072];
        let err = parse_records(&bytes, CifarFormat::Cifar10, Path::new("x.bin")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let mut bytes = vec![10u8];
        bytes.extend(std::iter::repeat_n(0u8, PIXELS_PER_IMAGE));
        assert!(parse_records(&bytes, CifarFormat::Cifar10, Path::new("x.bin")).is_err());
    }

    #[test]
    fn standardization_moments() {
        let ds = tiny_dataset(64, 1);
        let mut sums = [0f64; 3];
        let mut sq = [0f64; 3];
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        for i in 0..ds.len() {
            let img = ds.image(i);
            for (k, &v) in img.pixels.data().iter().enumerate() {
                sums[k / plane] += v as f64;
                sq[k / plane] += (v as f64) * (v as f64);
            }
        }
        let count = (ds.len() * plane) as f64;
        for c in 0..3 {
            let mean = sums[c] / count;
            let std = (sq[c] / count - mean * mean).sqrt();
            assert!(mean.abs() < 1e-3 && (std - 1.0).abs() < 1e-3, "channel {c}: {mean} {std}");
        }
    }

    #[test]
    fn zero_image_stays_zero() {
        let img = LabeledImage { pixels: Tensor::zeros([1, 3, 32, 32]).unwrap(), label: 2, coarse_label: None };
        for seed in 0..20 {
            let out = augment(&img, &AugmentConfig::default(), &mut Rng::new(seed)).unwrap();
            assert!(out.pixels.data().iter().all(|&v| v == 0.0));
            assert_eq!(out.label, 2);
        }
    }

    #[test]
    fn centered_crop_is_identity() {
        let ds = tiny_dataset(1, 2);
        let img = ds.image(0);
        let cfg = AugmentConfig::default();
        let mut out = vec![0f32; PIXELS_PER_IMAGE];
        apply_augment(img.pixels.data(), &cfg, AugmentParams::centered(&cfg), &mut out);
        assert_eq!(out, img.pixels.data());
    }

    #[test]
    fn flip_and_shift_semantics() {
        let mut src = vec![0f32; PIXELS_PER_IMAGE];
        for (k, v) in src.iter_mut().enumerate() {
            *v = k as f32 + 1.0;
        }
        let cfg = AugmentConfig::default();
        let mut out = vec![0f32; PIXELS_PER_IMAGE];
        apply_augment(&src, &cfg, AugmentParams { offset_y: 4, offset_x: 4, flip: true }, &mut out);
        assert_eq!(out[0], src[31]);
        apply_augment(&src, &cfg, AugmentParams { offset_y: 0, offset_x: 0, flip: false }, &mut out);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[4 * 32 + 4], src[0]);
        apply_augment(&src, &cfg, AugmentParams { offset_y: 8, offset_x: 8, flip: false }, &mut out);
        assert_eq!(out[0], src[4 * 32 + 4]);
        assert_eq!(out[31 * 32 + 31], 0.0);
    }

    #[test]
    fn offsets_replay_documented_sequence() {
        let cfg = AugmentConfig::default();
        let img = tiny_dataset(1, 3).image(0);
        let out = augment(&img, &cfg, &mut Rng::new(1234)).unwrap();
        let mut replay = Rng::new(1234);
        let params = AugmentParams { offset_y: replay.below(9), offset_x: replay.below(9), flip: replay.uniform() < 0.5 };
        let mut expected = vec![0f32; PIXELS_PER_IMAGE];
        apply_augment(img.pixels.data(), &cfg, params, &mut expected);
        assert_eq!(out.pixels.data(), &expected[..]);
        assert_eq!(augment(&img, &cfg, &mut Rng::new(1234)).unwrap().pixels, out.pixels);
    }

    #[test]
    fn batch_counts_and_order() {
        let ds = tiny_dataset(300, 4);
        let rng = Rng::new(0);
        let it = batch_iterator(&ds, 128, false, &rng, None).unwrap();
        assert_eq!(it.batch_count(), 3);
        let batches: Vec<Batch> = it.collect();
        assert_eq!(batches.iter().map(|b| b.labels.len()).collect::<Vec<_>>(), vec![128, 128, 44]);
        assert_eq!(batches.iter().flat_map(|b| b.indices.clone()).collect::<Vec<_>>(), (0..300).collect::<Vec<_>>());

        let a: Vec<Vec<usize>> = batch_iterator(&ds, 64, true, &rng, Some(AugmentConfig::default())).unwrap().map(|b| b.indices).collect();
        let b: Vec<Vec<usize>> = batch_iterator(&ds, 64, true, &rng, Some(AugmentConfig::default())).unwrap().map(|b| b.indices).collect();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.concat();
        assert_ne!(all, (0..300).collect::<Vec<_>>());
        all.sort();
        assert_eq!(all, (0..300).collect::<Vec<_>>());

        assert!(batch_iterator(&ds, 0, false, &rng, None).is_err());
        assert_eq!((50_000usize).div_ceil(128), 391);
    }

    #[test]
    fn record_round_trip() {
        let recs = synthetic_records(5, CifarFormat::Cifar100, 9);
        let ds = Dataset::from_records(Split::Test, CifarFormat::Cifar100, recs.clone(), None).unwrap();
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(&ds.record(i), r);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(Dataset::from_records(Split::Train, CifarFormat::Cifar10, vec![], None), Err(Error::EmptyDataset)));
    }
}
