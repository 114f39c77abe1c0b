//! Dataset assembly: synthetic generation or CIFAR-format file loading,
//! three-way balanced splits, and train-fitted normalization statistics.

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use augmetrics_core::data::{
    fit_stats, make_synthetic_images, parse_cifar_bytes, split_balanced, LabeledDataset,
};
use std::path::Path;

/// Reads a CIFAR-style binary file (3073-byte records).
pub fn load_cifar_file(path: &Path, max_records: usize) -> Result<LabeledDataset> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_cifar_bytes(&bytes, max_records)?)
}

/// Train/val/test datasets, pixel-scaled, with training statistics attached
/// to all three so every evaluation normalizes identically.
pub struct SplitDatasets {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

fn three_way(
    ds: &LabeledDataset,
    train_size: usize,
    val_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let (train, rest) = split_balanced(ds, train_size, val_size + test_size, seed)?;
    let take = |lo: usize, hi: usize| {
        LabeledDataset::new(
            rest.images[lo..hi].to_vec(),
            rest.labels[lo..hi].to_vec(),
            rest.num_classes,
        )
    };
    Ok((train, take(0, val_size)?, take(val_size, val_size + test_size)?))
}

pub fn load_datasets(cfg: &ExperimentConfig) -> Result<SplitDatasets> {
    let d = &cfg.dataset;
    let total_needed = d.train_size + d.val_size + d.test_size;
    let base = match d.source.as_str() {
        "synthetic" => {
            let per_class = total_needed.div_ceil(d.classes) + d.classes;
            make_synthetic_images(d.classes, per_class, d.side, d.seed)?
        }
        "cifar" => {
            let path = d.path.as_ref().expect("validated");
            load_cifar_file(Path::new(path), usize::MAX)?
        }
        other => return Err(CliError::Config(format!("dataset.source: `{other}`"))),
    };
    if base.len() < total_needed {
        return Err(CliError::Config(format!(
            "dataset has {} examples, need {total_needed}",
            base.len()
        )));
    }
    let (mut train, mut val, mut test) =
        three_way(&base, d.train_size, d.val_size, d.test_size, d.seed)?;
    let stats = fit_stats(&train)?;
    train.stats = Some(stats.clone());
    val.stats = Some(stats.clone());
    test.stats = Some(stats);
    Ok(SplitDatasets { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::example_config;
    use augmetrics_core::data::encode_planar_bytes;
    use augmetrics_core::data::make_synthetic_images;

    #[test]
    fn synthetic_split_sizes_and_shared_stats() {
        let cfg = example_config();
        let ds = load_datasets(&cfg).unwrap();
        assert_eq!(ds.train.len(), 512);
        assert_eq!(ds.val.len(), 256);
        assert_eq!(ds.test.len(), 256);
        assert_eq!(ds.train.stats, ds.val.stats);
        assert_eq!(ds.train.stats, ds.test.stats);
        // Deterministic per config.
        let again = load_datasets(&cfg).unwrap();
        assert_eq!(again.train, ds.train);
    }

    #[test]
    fn cifar_file_round_trip() {
        // CIFAR records are 32x32x3; synthesize a small planar file.
        let side = 32;
        let ds = make_synthetic_images(2, 6, side, 3).unwrap();
        // Expand grayscale to 3 channels.
        let images: Vec<_> = ds
            .images
            .iter()
            .map(|img| {
                let mut rgb = augmetrics_core::image::Image::zeros(side, side, 3);
                for r in 0..side {
                    for c in 0..side {
                        for k in 0..3 {
                            rgb.set(r, c, k, img.get(r, c, 0));
                        }
                    }
                }
                rgb
            })
            .collect();
        let rgb_ds = LabeledDataset::new(images, ds.labels.clone(), 2).unwrap();
        let bytes = encode_planar_bytes(&rgb_ds).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        std::fs::write(&path, &bytes).unwrap();
        let loaded = load_cifar_file(&path, usize::MAX).unwrap();
        assert_eq!(loaded.len(), rgb_ds.len());
        assert_eq!(loaded.labels, rgb_ds.labels);
        // Byte quantization round-trips exactly for encoded values.
        let re = encode_planar_bytes(&loaded).unwrap();
        assert_eq!(re, bytes);
    }
}
