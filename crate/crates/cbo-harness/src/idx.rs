//! Reader for the big-endian IDX container used by MNIST-style datasets.
//!
//! Layout: a 32-bit magic (2051 for image tensors, 2049 for label vectors),
//! one 32-bit size per dimension, then raw unsigned bytes. Pixels are
//! rescaled to `[0, 1]`.

use std::path::{Path, PathBuf};

use cbo::objectives::LabeledDataset;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: expected magic {expected}, read {got}")]
    WrongMagic {
        path: PathBuf,
        expected: u32,
        got: u32,
    },
    #[error("{path}: truncated; needed {needed} bytes, file has {got}")]
    Truncated {
        path: PathBuf,
        needed: usize,
        got: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: label {value} at index {index} is not a digit class")]
    BadLabel {
        path: PathBuf,
        index: usize,
        value: u8,
    },
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, IdxError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(IdxError::Truncated {
            path: path.to_path_buf(),
            needed: end,
            got: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Raw parsed image tensor: `count` images of `rows x cols` pixels in `[0,1]`.
#[derive(Debug)]
pub struct IdxImages {
    pub pixels: Vec<f64>,
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
}

pub fn parse_images(bytes: &[u8], path: &Path) -> Result<IdxImages, IdxError> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::WrongMagic {
            path: path.to_path_buf(),
            expected: IMAGE_MAGIC,
            got: magic,
        });
    }
    let count = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let needed = 16 + count * rows * cols;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            path: path.to_path_buf(),
            needed,
            got: bytes.len(),
        });
    }
    let pixels = bytes[16..needed]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok(IdxImages {
        pixels,
        count,
        rows,
        cols,
    })
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, IdxError> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::WrongMagic {
            path: path.to_path_buf(),
            expected: LABEL_MAGIC,
            got: magic,
        });
    }
    let count = read_u32(bytes, 4, path)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            path: path.to_path_buf(),
            needed,
            got: bytes.len(),
        });
    }
    Ok(bytes[8..needed].to_vec())
}

/// Loads an image/label pair into a dataset with one-hot digit labels.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset, IdxError> {
    let image_bytes = std::fs::read(images_path).map_err(|source| IdxError::Io {
        path: images_path.to_path_buf(),
        source,
    })?;
    let label_bytes = std::fs::read(labels_path).map_err(|source| IdxError::Io {
        path: labels_path.to_path_buf(),
        source,
    })?;

    let images = parse_images(&image_bytes, images_path)?;
    let labels = parse_labels(&label_bytes, labels_path)?;
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let mut classes = Vec::with_capacity(labels.len());
    for (index, &value) in labels.iter().enumerate() {
        if value > 9 {
            return Err(IdxError::BadLabel {
                path: labels_path.to_path_buf(),
                index,
                value,
            });
        }
        classes.push(value as usize);
    }

    let input_dim = images.rows * images.cols;
    LabeledDataset::new(images.pixels, classes, input_dim, 10).map_err(|_| IdxError::Truncated {
        path: images_path.to_path_buf(),
        needed: input_dim * labels.len(),
        got: 0,
    })
}

/// Serializes a dataset back into IDX bytes; the inverse of `load_idx` for
/// byte-valued pixels, used to synthesize fixtures.
pub fn encode_images(pixels: &[u8], count: usize, rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
