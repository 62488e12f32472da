//! IDX reader for the MNIST distribution files.

use std::fs;
use std::path::{Path, PathBuf};

use mer_core::streams::{BaseData, Dataset};
use mer_core::Example;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}: bad magic number 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { file: &'static str, found: u32, expected: u32 },
    #[error("{file}: truncated {field} (need {needed} bytes, have {available})")]
    Truncated { file: &'static str, field: &'static str, needed: usize, available: usize },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

fn be_u32(bytes: &[u8], at: usize, file: &'static str, field: &'static str) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated { file, field, needed: at + 4, available: bytes.len() })
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io { path: path.to_path_buf(), source })
}

/// Parses an image file and a label file already in memory.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset, IdxError> {
    let magic = be_u32(images, 0, "images", "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic { file: "images", found: magic, expected: IMAGE_MAGIC });
    }
    let magic = be_u32(labels, 0, "labels", "magic")?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic { file: "labels", found: magic, expected: LABEL_MAGIC });
    }
    let count = be_u32(images, 4, "images", "image count")? as usize;
    let rows = be_u32(images, 8, "images", "row count")? as usize;
    let cols = be_u32(images, 12, "images", "column count")? as usize;
    let label_count = be_u32(labels, 4, "labels", "label count")? as usize;
    if count != label_count {
        return Err(IdxError::CountMismatch { images: count, labels: label_count });
    }
    let pixels = rows * cols;
    let needed = 16 + count * pixels;
    if images.len() < needed {
        return Err(IdxError::Truncated { file: "images", field: "pixel data", needed, available: images.len() });
    }
    if labels.len() < 8 + count {
        return Err(IdxError::Truncated {
            file: "labels",
            field: "label data",
            needed: 8 + count,
            available: labels.len(),
        });
    }
    let examples = images[16..needed]
        .chunks_exact(pixels.max(1))
        .take(count)
        .zip(&labels[8..8 + count])
        .map(|(px, &y)| Example { x: px.iter().map(|&b| b as f32 / 255.0).collect(), y: y as usize, task_id: 0 })
        .collect();
    Ok(Dataset { examples, rows, cols })
}

/// Loads one split; the example count is `dataset.examples.len()`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, IdxError> {
    parse_idx(&read(images_path)?, &read(labels_path)?)
}

/// Loads the standard four MNIST files from `dir`.
pub const MNIST_FILES: [&str; 4] =
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];

/// The four MNIST files under `dir`, in the order of [`MNIST_FILES`].
pub fn mnist_paths(dir: &Path) -> [PathBuf; 4] {
    MNIST_FILES.map(|f| dir.join(f))
}

pub fn load_mnist(dir: &Path) -> Result<BaseData, IdxError> {
    let [train_x, train_y, test_x, test_y] = mnist_paths(dir);
    Ok(BaseData { train: load_idx(&train_x, &train_y)?, test: load_idx(&test_x, &test_y)? })
}
