//! MNIST IDX ingestion.
//!
//! ```text
//! images: u32 BE magic 2051 | u32 count | u32 rows | u32 cols | count·rows·cols u8
//! labels: u32 BE magic 2049 | u32 count | count u8
//! ```

use std::path::Path;

use crate::engine::{Rng, Tensor};
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

/// Images scaled to `[0, 1]`, shape `[n, 1, rows, cols]`, with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<u8>) -> Result<Self> {
        let n = images.shape()[0];
        if n != labels.len() {
            return Err(Error::CountMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        if images.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid("pixel values must lie in [0, 1]"));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sample_len(&self) -> usize {
        self.images.len() / self.len().max(1)
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let d = self.sample_len();
        &self.images.data()[i * d..(i + 1) * d]
    }

    /// Gathers the given samples into a `[batch × sample_len]` tensor.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let d = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i] as usize).collect();
        (
            Tensor::new(vec![indices.len(), d], data).expect("consistent batch"),
            labels,
        )
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let (images, labels) = self.batch(indices);
        let mut shape = self.images.shape().to_vec();
        shape[0] = indices.len();
        Dataset {
            images: images.reshape(shape).expect("same element count"),
            labels: labels.into_iter().map(|l| l as u8).collect(),
        }
    }

    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Splits off a seeded random validation slice of `count` samples.
    /// Returns `(remaining, validation)`; both keep the original sample order.
    pub fn split_validation(&self, count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if count >= self.len() {
            return Err(Error::invalid(format!(
                "validation slice of {count} leaves no training data out of {}",
                self.len()
            )));
        }
        let perm = Rng::with_stream(seed, 0x5151).permutation(self.len());
        let mut val: Vec<usize> = perm[..count].to_vec();
        let mut rest: Vec<usize> = perm[count..].to_vec();
        val.sort_unstable();
        rest.sort_unstable();
        Ok((self.select(&rest), self.select(&val)))
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            what: "image header",
            needed: 16,
            available: bytes.len(),
        });
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            what: "image file",
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let (n, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    let needed = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .and_then(|v| v.checked_add(16))
        .ok_or_else(|| Error::invalid("image header dimensions overflow"))?;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            what: "image file",
            needed,
            available: bytes.len(),
        });
    }
    Ok((n, rows, cols, &bytes[16..needed]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            what: "label header",
            needed: 8,
            available: bytes.len(),
        });
    }
    let magic = be_u32(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            what: "label file",
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4) as usize;
    if bytes.len() < 8 + n {
        return Err(Error::Truncated {
            what: "label file",
            needed: 8 + n,
            available: bytes.len(),
        });
    }
    Ok(&bytes[8..8 + n])
}

pub fn dataset_from_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::invalid("IDX file holds no images"));
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= 10) {
        return Err(Error::LabelOutOfRange {
            index,
            label: label as usize,
            classes: 10,
        });
    }
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new(Tensor::new(vec![n, 1, rows, cols], data)?, labels.to_vec())
}

pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    dataset_from_idx(&images, &labels)
}

/// Serializes a dataset back to IDX (pixels rounded to the nearest byte).
pub fn to_idx(data: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let shape = data.images().shape();
    let (rows, cols) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let mut images = Vec::with_capacity(16 + data.images().len());
    images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&(data.len() as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    images.extend(
        data.images()
            .data()
            .iter()
            .map(|&v| (v * 255.0).round() as u8),
    );
    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(data.len() as u32).to_be_bytes());
    labels.extend_from_slice(data.labels());
    (images, labels)
}
