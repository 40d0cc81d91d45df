//! Dataset handling: a synthetic Gaussian-cluster generator for desk-scale
//! experiments and a parser for the big-endian IDX image/label format.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::LabeledExample;
use std::fs;
use std::path::Path;

/// Gaussian class clusters with unit covariance around class means placed at
/// radius `margin` from the origin in random directions. `margin = 0` makes
/// the classes indistinguishable; large margins make them linearly separable.
pub fn generate_synthetic(
    num_classes: usize,
    input_dim: usize,
    samples_per_class: usize,
    margin: f64,
    seed: u64,
) -> Result<Vec<LabeledExample>> {
    if num_classes == 0 || input_dim == 0 {
        return Err(Error::Config("num_classes and input_dim must be positive".into()));
    }
    if margin < 0.0 {
        return Err(Error::Config(format!("margin must be >= 0, got {margin}")));
    }
    let mut rng = SeededRng::new(seed, 0);
    let mut means = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let raw: Vec<f64> = (0..input_dim).map(|_| rng.standard_normal()).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        means.push(if norm == 0.0 {
            vec![0.0; input_dim]
        } else {
            raw.iter().map(|x| margin * x / norm).collect()
        });
    }
    let mut dataset = Vec::with_capacity(num_classes * samples_per_class);
    for (label, mean) in means.iter().enumerate() {
        for _ in 0..samples_per_class {
            let features: Vec<f64> = mean.iter().map(|m| m + rng.standard_normal()).collect();
            dataset.push(LabeledExample {
                features,
                label,
            });
        }
    }
    Ok(dataset)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Config(format!(
            "idx: truncated reading {what} at byte offset {offset}"
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Parses a standard IDX image/label file pair. Pixels are scaled to [0, 1];
/// the image and label counts must agree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<LabeledExample>> {
    let images = fs::read(images_path)
        .map_err(|e| Error::Config(format!("idx: cannot read {}: {e}", images_path.display())))?;
    let labels = fs::read(labels_path)
        .map_err(|e| Error::Config(format!("idx: cannot read {}: {e}", labels_path.display())))?;

    let magic = read_be_u32(&images, 0, "images magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Config(format!(
            "idx: bad images magic {magic:#010x} at byte offset 0, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_be_u32(&images, 4, "image count")? as usize;
    let rows = read_be_u32(&images, 8, "image rows")? as usize;
    let cols = read_be_u32(&images, 12, "image cols")? as usize;
    let pixels_per_image = rows * cols;
    let expected = 16 + count * pixels_per_image;
    if images.len() != expected {
        return Err(Error::Config(format!(
            "idx: images payload is {} bytes, expected {expected} (truncation at byte offset {})",
            images.len(),
            images.len().min(expected)
        )));
    }

    let magic = read_be_u32(&labels, 0, "labels magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Config(format!(
            "idx: bad labels magic {magic:#010x} at byte offset 0, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let label_count = read_be_u32(&labels, 4, "label count")? as usize;
    if label_count != count {
        return Err(Error::Config(format!(
            "idx: {count} images but {label_count} labels"
        )));
    }
    let expected = 8 + count;
    if labels.len() != expected {
        return Err(Error::Config(format!(
            "idx: labels payload is {} bytes, expected {expected} (truncation at byte offset {})",
            labels.len(),
            labels.len().min(expected)
        )));
    }

    let mut dataset = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * pixels_per_image;
        let features: Vec<f64> = images[start..start + pixels_per_image]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        dataset.push(LabeledExample {
            features,
            label: labels[8 + i] as usize,
        });
    }
    Ok(dataset)
}
