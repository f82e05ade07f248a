//! IDX-format reader (the MNIST container format). Big-endian throughout:
//! image files start with magic 2051, label files with magic 2049.

use std::path::Path;

use dpglm::linalg::{norm, Matrix};
use dpglm::Dataset;

use crate::error::{CliError, Result};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(CliError::Parse(format!(
            "{what}: truncated file, needed {end} bytes, found {}",
            bytes.len()
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

fn check_magic(bytes: &[u8], expect: u32, what: &str) -> Result<()> {
    let got = read_u32(bytes, 0, what)?;
    if got != expect {
        return Err(CliError::Parse(format!(
            "{what}: bad magic {got} at offset 0 (expected {expect})"
        )));
    }
    Ok(())
}

/// Parse raw IDX image bytes into row vectors with pixels scaled to [0, 1].
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    check_magic(bytes, IMAGE_MAGIC, "images")?;
    let count = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let pixels = rows * cols;
    let expect = 16 + count * pixels;
    if bytes.len() != expect {
        return Err(CliError::Parse(format!(
            "images: payload is {} bytes, header implies {expect}",
            bytes.len()
        )));
    }
    Ok((0..count)
        .map(|i| {
            bytes[16 + i * pixels..16 + (i + 1) * pixels]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect()
        })
        .collect())
}

/// Parse raw IDX label bytes.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC, "labels")?;
    let count = read_u32(bytes, 4, "labels")? as usize;
    let expect = 8 + count;
    if bytes.len() != expect {
        return Err(CliError::Parse(format!(
            "labels: payload is {} bytes, header implies {expect}",
            bytes.len()
        )));
    }
    Ok(bytes[8..].to_vec())
}

/// Load an image/label IDX pair into a dataset. Each image vector is scaled
/// by 1/max(1, ||x||) so every feature row lies in the unit ball; labels are
/// kept as raw digit values.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let xs = parse_idx_images(&std::fs::read(images)?)?;
    let ys = parse_idx_labels(&std::fs::read(labels)?)?;
    if xs.len() != ys.len() {
        return Err(CliError::Parse(format!(
            "count mismatch: {} images vs {} labels",
            xs.len(),
            ys.len()
        )));
    }
    if xs.is_empty() {
        return Err(CliError::Parse("empty IDX pair".into()));
    }
    let d = xs[0].len();
    let mut features = Matrix::zeros(xs.len(), d);
    for (i, mut x) in xs.into_iter().enumerate() {
        let scale = 1.0 / norm(&x).max(1.0);
        x.iter_mut().for_each(|v| *v *= scale);
        features.data[i * d..(i + 1) * d].copy_from_slice(&x);
    }
    let labels = ys.iter().map(|&y| y as f64).collect();
    Ok(Dataset { features, labels, feature_norm_bound: 1.0, label_bound: 9.0, truncated: 0 })
}
