//! Labeled datasets: CIFAR-style binary ingestion, synthetic generators,
//! balanced splitting, and channel normalization.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg;
use crate::rng::Stream;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Bytes per CIFAR-10 binary record: 1 label + 32*32*3 pixels.
pub const CIFAR_RECORD_BYTES: usize = 3073;
pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CHANNELS: usize = 3;

/// Per-channel statistics used for normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    /// Set when a zero-spread channel had its std replaced by 1.
    pub zero_std_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub stats: Option<NormStats>,
}

impl LabeledDataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, num_classes: usize) -> Result<LabeledDataset> {
        if images.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Validation(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset {
            images,
            labels,
            num_classes,
            stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Flattened per-image values, in storage order. One row per image.
    pub fn flat_inputs(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.len() * self.feature_dim());
        for img in &self.images {
            out.extend_from_slice(&img.values);
        }
        out
    }

    pub fn feature_dim(&self) -> usize {
        self.images
            .first()
            .map(|i| i.values.len())
            .unwrap_or(0)
    }

    /// Mean intensity per channel over the whole dataset, in the current
    /// (scaled, unnormalized) value space.
    pub fn channel_means(&self) -> Vec<f32> {
        if self.is_empty() {
            return Vec::new();
        }
        let c = self.images[0].channels;
        let mut sums = vec![0.0f64; c];
        let mut count = 0usize;
        for img in &self.images {
            for px in img.values.chunks_exact(c) {
                for (s, &v) in sums.iter_mut().zip(px) {
                    *s += v as f64;
                }
            }
            count += img.height * img.width;
        }
        sums.iter().map(|s| (*s / count as f64) as f32).collect()
    }
}

/// Parses CIFAR-10 binary records: 1 label byte then 1024 R, 1024 G, 1024 B
/// bytes, each plane row-major 32x32. Pixels are scaled by 1/255.
pub fn parse_cifar_bytes(bytes: &[u8], max_records: usize) -> Result<LabeledDataset> {
    parse_planar_bytes(bytes, max_records, CIFAR_SIDE, CIFAR_SIDE, CIFAR_CHANNELS)
}

/// Generic reader for the planar record container (label byte + channel
/// planes); synthetic datasets reuse it with their own dimensions.
pub fn parse_planar_bytes(
    bytes: &[u8],
    max_records: usize,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<LabeledDataset> {
    let record = 1 + height * width * channels;
    if !bytes.len().is_multiple_of(record) {
        let index = bytes.len() / record;
        return Err(Error::Format(format!(
            "byte length {} is not a multiple of record size {record}; record {index} is truncated",
            bytes.len()
        )));
    }
    let n = (bytes.len() / record).min(max_records);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let rec = &bytes[i * record..(i + 1) * record];
        let label = rec[0];
        if label > 9 {
            return Err(Error::CorruptRecord { index: i, label });
        }
        let mut img = Image::zeros(height, width, channels);
        let plane = height * width;
        for ch in 0..channels {
            for p in 0..plane {
                let v = rec[1 + ch * plane + p] as f32 / 255.0;
                img.values[p * channels + ch] = v;
            }
        }
        images.push(img);
        labels.push(label as usize);
    }
    LabeledDataset::new(images, labels, 10)
}

/// Writes a dataset back into the planar record container. Values are
/// quantized with round(v * 255), so a parse -> encode round trip of byte
/// data is exact.
pub fn encode_planar_bytes(ds: &LabeledDataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (img, &label) in ds.images.iter().zip(&ds.labels) {
        if label > 9 {
            return Err(Error::Validation(format!(
                "label {label} does not fit the single-byte container"
            )));
        }
        out.push(label as u8);
        let plane = img.height * img.width;
        for ch in 0..img.channels {
            for p in 0..plane {
                let v = img.values[p * img.channels + ch];
                let q = libm::roundf(v.clamp(0.0, 1.0) * 255.0) as u8;
                out.push(q);
            }
        }
    }
    Ok(out)
}

/// Two-class (or k-class) Gaussian mixture specification for the toy task.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureSpec {
    pub dim: usize,
    /// One mean vector per class.
    pub means: Vec<Vec<f64>>,
    /// One row-major dim x dim covariance per class.
    pub covariances: Vec<Vec<f64>>,
    pub samples_per_class: usize,
}

impl GaussianMixtureSpec {
    /// Equal-prior two-Gaussian task with means `-+(separation, 0)` and unit
    /// covariance, the default toy geometry.
    pub fn symmetric_2d(separation: f64, samples_per_class: usize) -> GaussianMixtureSpec {
        GaussianMixtureSpec {
            dim: 2,
            means: vec![vec![-separation, 0.0], vec![separation, 0.0]],
            covariances: vec![vec![1.0, 0.0, 0.0, 1.0]; 2],
            samples_per_class,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.len() != self.covariances.len() || self.means.is_empty() {
            return Err(Error::Validation(String::from(
                "means and covariances must be non-empty and equal length",
            )));
        }
        for (k, m) in self.means.iter().enumerate() {
            if m.len() != self.dim {
                return Err(Error::Validation(format!("mean {k} has wrong dimension")));
            }
        }
        for (k, c) in self.covariances.iter().enumerate() {
            if c.len() != self.dim * self.dim {
                return Err(Error::Validation(format!(
                    "covariance {k} has wrong dimension"
                )));
            }
            linalg::cholesky(c, self.dim).map_err(|_| {
                Error::Validation(format!("covariance {k} is not symmetric positive definite"))
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl VectorDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Repackages points as 1x1xdim images so the classifier stack can train
    /// on them directly. No pixel-range invariant applies; these values were
    /// never scaled.
    pub fn to_labeled(&self) -> Result<LabeledDataset> {
        let dim = self.points.first().map(|p| p.len()).unwrap_or(0);
        let images = self
            .points
            .iter()
            .map(|p| Image::new(1, 1, dim, p.iter().map(|&v| v as f32).collect()))
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(images, self.labels.clone(), self.num_classes)
    }
}

/// Draws `samples_per_class` points per class; deterministic for a fixed
/// seed, class by class.
pub fn make_gaussian_mixture(spec: &GaussianMixtureSpec, seed: u64) -> Result<VectorDataset> {
    spec.validate()?;
    let num_classes = spec.means.len();
    let mut points = Vec::with_capacity(num_classes * spec.samples_per_class);
    let mut labels = Vec::with_capacity(num_classes * spec.samples_per_class);
    for k in 0..num_classes {
        let chol = linalg::cholesky(&spec.covariances[k], spec.dim)?;
        let mut stream = Stream::indexed(seed, "gmm", &[k as u64]);
        for _ in 0..spec.samples_per_class {
            let z: Vec<f64> = (0..spec.dim).map(|_| stream.normal()).collect();
            let mut x = spec.means[k].clone();
            for r in 0..spec.dim {
                for c in 0..=r {
                    x[r] += chol[r * spec.dim + c] * z[c];
                }
            }
            points.push(x);
            labels.push(k);
        }
    }
    Ok(VectorDataset {
        points,
        labels,
        num_classes,
    })
}

/// Procedurally generated grayscale image task. Each class is an oriented
/// soft bar (angle pi*k/num_classes) with jittered offset, amplitude, and
/// additive pixel noise, so geometric transforms interact with class
/// identity. Values are clipped to `[0, 1]`.
pub fn make_synthetic_images(
    num_classes: usize,
    per_class: usize,
    side: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if side < 8 {
        return Err(Error::Validation(format!("side {side} below minimum 8")));
    }
    let mut images = Vec::with_capacity(num_classes * per_class);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    let center = (side as f64 - 1.0) / 2.0;
    let bar_width = side as f64 / 10.0;
    for k in 0..num_classes {
        let theta = core::f64::consts::PI * k as f64 / num_classes as f64;
        // Unit normal to the bar direction.
        let (ny, nx) = (-libm::sin(theta), libm::cos(theta));
        for i in 0..per_class {
            let mut stream = Stream::indexed(seed, "synth", &[k as u64, i as u64]);
            let offset = stream.uniform_in(-(side as f64) / 8.0, side as f64 / 8.0);
            let amp = stream.uniform_in(0.7, 1.0);
            let mut img = Image::zeros(side, side, 1);
            for r in 0..side {
                for c in 0..side {
                    // Signed distance to the bar's center line, shifted by a
                    // per-image offset along the line normal.
                    let dy = r as f64 - center;
                    let dx = c as f64 - center;
                    let d = dx * nx + dy * ny - offset;
                    let v = amp * libm::exp(-d * d / (2.0 * bar_width * bar_width));
                    let noise = 0.08 * stream.normal();
                    img.set(r, c, 0, ((v + noise) as f32).clamp(0.0, 1.0));
                }
            }
            images.push(img);
            labels.push(k);
        }
    }
    LabeledDataset::new(images, labels, num_classes)
}

/// Splits into a class-balanced training subset and a disjoint validation
/// subset, shuffle driven by the seed.
pub fn split_balanced(
    ds: &LabeledDataset,
    train_size: usize,
    val_size: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if train_size + val_size > ds.len() {
        return Err(Error::Validation(format!(
            "requested {train_size}+{val_size} examples from a dataset of {}",
            ds.len()
        )));
    }
    let k = ds.num_classes;
    // Per-class quota: counts differ by at most one, lower class indices
    // take the remainder.
    let base = train_size / k;
    let rem = train_size % k;
    let quotas: Vec<usize> = (0..k).map(|c| base + usize::from(c < rem)).collect();

    let mut stream = Stream::new(seed, "split");
    let order = stream.permutation(ds.len());

    let mut taken = vec![0usize; k];
    let mut train_idx = Vec::with_capacity(train_size);
    let mut rest = Vec::new();
    for &i in &order {
        let c = ds.labels[i];
        if taken[c] < quotas[c] {
            taken[c] += 1;
            train_idx.push(i);
        } else {
            rest.push(i);
        }
    }
    if train_idx.len() < train_size {
        return Err(Error::Validation(format!(
            "classes too small for a balanced training subset of {train_size}"
        )));
    }
    if rest.len() < val_size {
        return Err(Error::Validation(format!(
            "only {} examples left for a validation subset of {val_size}",
            rest.len()
        )));
    }
    let val_idx = &rest[..val_size];
    let subset = |idx: &[usize]| {
        LabeledDataset::new(
            idx.iter().map(|&i| ds.images[i].clone()).collect(),
            idx.iter().map(|&i| ds.labels[i]).collect(),
            ds.num_classes,
        )
    };
    Ok((subset(&train_idx)?, subset(val_idx)?))
}

/// Computes per-channel mean/std over `ds` and returns the normalized
/// dataset with the statistics stored. A zero-spread channel falls back to
/// std 1 and sets the warning flag.
pub fn normalize(ds: &LabeledDataset) -> Result<LabeledDataset> {
    let stats = fit_stats(ds)?;
    normalize_with(ds, &stats)
}

/// Fits normalization statistics without applying them.
pub fn fit_stats(ds: &LabeledDataset) -> Result<NormStats> {
    if ds.is_empty() {
        return Err(Error::Validation(String::from(
            "cannot fit statistics on an empty dataset",
        )));
    }
    let c = ds.images[0].channels;
    let mut sums = vec![0.0f64; c];
    let mut sqs = vec![0.0f64; c];
    let mut count = 0usize;
    for img in &ds.images {
        for px in img.values.chunks_exact(c) {
            for ch in 0..c {
                let v = px[ch] as f64;
                sums[ch] += v;
                sqs[ch] += v * v;
            }
        }
        count += img.height * img.width;
    }
    let n = count as f64;
    let mut mean = Vec::with_capacity(c);
    let mut std = Vec::with_capacity(c);
    let mut fallback = false;
    for ch in 0..c {
        let m = sums[ch] / n;
        let var = (sqs[ch] / n - m * m).max(0.0);
        let s = libm::sqrt(var);
        mean.push(m as f32);
        if s < 1e-12 {
            fallback = true;
            std.push(1.0);
        } else {
            std.push(s as f32);
        }
    }
    Ok(NormStats {
        mean,
        std,
        zero_std_fallback: fallback,
    })
}

/// Applies previously fitted statistics; validation data is normalized with
/// the training constants through this path.
pub fn normalize_with(ds: &LabeledDataset, stats: &NormStats) -> Result<LabeledDataset> {
    let mut out = ds.clone();
    for img in &mut out.images {
        let c = img.channels;
        if c != stats.mean.len() {
            return Err(Error::Validation(format!(
                "stats cover {} channels but image has {c}",
                stats.mean.len()
            )));
        }
        for px in img.values.chunks_exact_mut(c) {
            for (ch, v) in px.iter_mut().enumerate() {
                *v = (*v - stats.mean[ch]) / stats.std[ch];
            }
        }
    }
    out.stats = Some(stats.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cifar_record(label: u8, fill: u8) -> Vec<u8> {
        let mut rec = vec![fill; CIFAR_RECORD_BYTES];
        rec[0] = label;
        rec
    }

    #[test]
    fn parse_two_records() {
        let mut bytes = cifar_record(3, 128);
        bytes.extend(cifar_record(9, 0));
        let ds = parse_cifar_bytes(&bytes, 2).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![3, 9]);
        let img = &ds.images[0];
        assert_eq!((img.height, img.width, img.channels), (32, 32, 3));
        assert!(img.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn parse_truncates_by_request() {
        let mut bytes = Vec::new();
        for _ in 0..5 {
            bytes.extend(cifar_record(1, 7));
        }
        let ds = parse_cifar_bytes(&bytes, 3).unwrap();
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn parse_rejects_partial_record() {
        let bytes = vec![0u8; 3000];
        let err = parse_cifar_bytes(&bytes, 10).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn parse_rejects_bad_label() {
        let bytes = cifar_record(10, 0);
        let err = parse_cifar_bytes(&bytes, 1).unwrap_err();
        assert_eq!(err, Error::CorruptRecord { index: 0, label: 10 });
    }

    #[test]
    fn byte_round_trip_is_exact() {
        let mut stream = Stream::new(11, "bytes");
        let mut bytes = Vec::new();
        for _ in 0..4 {
            bytes.push(stream.below(10) as u8);
            for _ in 0..3072 {
                bytes.push(stream.below(256) as u8);
            }
        }
        let ds = parse_cifar_bytes(&bytes, usize::MAX).unwrap();
        let back = encode_planar_bytes(&ds).unwrap();
        assert_eq!(bytes, back);
    }

    #[test]
    fn cifar_plane_layout() {
        // First pixel of each plane lands in channel order at (0, 0).
        let mut rec = vec![0u8; CIFAR_RECORD_BYTES];
        rec[1] = 255; // R plane start
        rec[1 + 1024] = 51; // G plane start
        rec[1 + 2048] = 102; // B plane start
        let ds = parse_cifar_bytes(&rec, 1).unwrap();
        let img = &ds.images[0];
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert!((img.get(0, 0, 1) - 0.2).abs() < 1e-6);
        assert!((img.get(0, 0, 2) - 0.4).abs() < 1e-6);
    }

    #[test]
    fn gaussian_mixture_means_and_determinism() {
        let spec = GaussianMixtureSpec::symmetric_2d(1.0, 1000);
        let ds = make_gaussian_mixture(&spec, 7).unwrap();
        assert_eq!(ds.len(), 2000);
        for k in 0..2 {
            let pts: Vec<&Vec<f64>> = ds
                .points
                .iter()
                .zip(&ds.labels)
                .filter(|(_, &l)| l == k)
                .map(|(p, _)| p)
                .collect();
            let mean_x = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
            let mean_y = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
            // 4 sigma / sqrt(n) Monte Carlo bound, comfortably below 0.15.
            assert!((mean_x - spec.means[k][0]).abs() < 0.15);
            assert!((mean_y - spec.means[k][1]).abs() < 0.15);
        }
        let again = make_gaussian_mixture(&spec, 7).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn gaussian_mixture_empty_and_invalid() {
        let spec = GaussianMixtureSpec::symmetric_2d(1.0, 0);
        assert!(make_gaussian_mixture(&spec, 1).unwrap().is_empty());

        let mut bad = GaussianMixtureSpec::symmetric_2d(1.0, 10);
        bad.covariances[0] = vec![1.0, 2.0, 2.0, 1.0]; // not PD
        assert!(matches!(
            make_gaussian_mixture(&bad, 1),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let a = make_synthetic_images(4, 16, 16, 1).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a.class_counts(), vec![16; 4]);
        let b = make_synthetic_images(4, 16, 16, 1).unwrap();
        assert_eq!(a, b);
        assert!(a
            .images
            .iter()
            .all(|img| img.values.iter().all(|&v| (0.0..=1.0).contains(&v))));
    }

    #[test]
    fn synthetic_rejects_small_side() {
        assert!(matches!(
            make_synthetic_images(4, 4, 7, 1),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn split_is_balanced_and_deterministic() {
        let ds = make_synthetic_images(4, 256, 8, 5).unwrap();
        let (train, val) = split_balanced(&ds, 512, 256, 9).unwrap();
        assert_eq!(train.class_counts(), vec![128; 4]);
        assert_eq!(val.len(), 256);
        let (train2, val2) = split_balanced(&ds, 512, 256, 9).unwrap();
        assert_eq!(train, train2);
        assert_eq!(val, val2);
    }

    #[test]
    fn split_subsets_are_disjoint() {
        let ds = make_synthetic_images(2, 32, 8, 2).unwrap();
        let (train, val) = split_balanced(&ds, 32, 16, 3).unwrap();
        for t in &train.images {
            assert!(val.images.iter().all(|v| v != t));
        }
    }

    #[test]
    fn split_rejects_infeasible_sizes() {
        let ds = make_synthetic_images(4, 256, 8, 5).unwrap();
        assert!(split_balanced(&ds, 1024, 1, 0).is_err());
    }

    #[test]
    fn normalize_constant_dataset_uses_fallback() {
        let images = vec![Image::new(2, 2, 1, vec![0.5; 4]).unwrap(); 3];
        let ds = LabeledDataset::new(images, vec![0, 1, 0], 2).unwrap();
        let out = normalize(&ds).unwrap();
        let stats = out.stats.as_ref().unwrap();
        assert!(stats.zero_std_fallback);
        assert_eq!(stats.std, vec![1.0]);
        assert!(out.images.iter().all(|i| i.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn normalize_centers_the_fitted_set() {
        let ds = make_synthetic_images(3, 32, 8, 4).unwrap();
        let out = normalize(&ds).unwrap();
        let m = out.channel_means();
        assert!(m[0].abs() < 1e-5, "post-normalize mean {}", m[0]);
    }

    #[test]
    fn val_uses_train_stats_not_its_own() {
        let ds = make_synthetic_images(3, 64, 8, 4).unwrap();
        let (train, val) = split_balanced(&ds, 96, 48, 1).unwrap();
        let train_norm = normalize(&train).unwrap();
        let stats = train_norm.stats.clone().unwrap();
        let val_norm = normalize_with(&val, &stats).unwrap();
        assert_eq!(val_norm.stats.as_ref().unwrap(), &stats);
        // The val set's own mean is generally nonzero under train stats.
        let own = normalize(&val).unwrap();
        assert_ne!(own.images[0].values, val_norm.images[0].values);
    }
}
