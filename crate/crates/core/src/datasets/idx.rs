//! Big-endian IDX files as used by MNIST.

use std::fs;
use std::path::Path;

use super::views::{split_halves, train_val_split, ViewedDataset};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw images: `count` images of `rows x cols` unsigned bytes, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    /// Pixels scaled to `[0, 1]` by `/255`, one image per row.
    pub fn to_matrix(&self) -> DenseMatrix {
        let data = self.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
        DenseMatrix::from_vec(self.count, self.rows * self.cols, data).expect("sizes agree")
    }
}

/// Images and labels together.
#[derive(Clone, Debug, PartialEq)]
pub struct MnistData {
    pub images: DenseMatrix,
    pub labels: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Truncated(format!("{what} header")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic {
            expected: format!("{expected:#010x}"),
            found: format!("{found:#010x}"),
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGE_MAGIC, "image file")?;
    let count = be_u32(bytes, 4, "image file")? as usize;
    let rows = be_u32(bytes, 8, "image file")? as usize;
    let cols = be_u32(bytes, 12, "image file")? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Truncated(format!(
            "image file holds {} of {need} pixel bytes",
            body.len()
        )));
    }
    if body.len() > need {
        return Err(Error::Format(format!(
            "{} trailing bytes after image data",
            body.len() - need
        )));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC, "label file")?;
    let count = be_u32(bytes, 4, "label file")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Truncated(format!(
            "label file holds {} of {count} labels",
            body.len()
        )));
    }
    if body.len() > count {
        return Err(Error::Format(format!(
            "{} trailing bytes after label data",
            body.len() - count
        )));
    }
    Ok(body.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    parse_idx_images(&fs::read(path)?)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&fs::read(path)?)
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<()> {
    fs::write(path, encode_idx_images(images))?;
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    fs::write(path, encode_idx_labels(labels))?;
    Ok(())
}

/// Loads an image file and its label file, scaling pixels to `[0, 1]`.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<MnistData> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    Ok(MnistData {
        images: images.to_matrix(),
        labels: labels.into_iter().map(usize::from).collect(),
        rows: images.rows,
        cols: images.cols,
    })
}

/// Standard file names inside an MNIST directory.
pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// `(train, test)` from a directory holding the four uncompressed MNIST files.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(MnistData, MnistData)> {
    let d = dir.as_ref();
    let train = load_mnist_idx(d.join(MNIST_TRAIN_IMAGES), d.join(MNIST_TRAIN_LABELS))?;
    let test = load_mnist_idx(d.join(MNIST_TEST_IMAGES), d.join(MNIST_TEST_LABELS))?;
    Ok((train, test))
}

/// Left/right-half views of MNIST: the first `n_train` rows of a seeded
/// permutation of the training set, and the full test set.
pub fn mnist_views(
    dir: impl AsRef<Path>,
    n_train: usize,
    seed: u64,
) -> Result<(ViewedDataset, ViewedDataset)> {
    let (train, test) = load_mnist_dir(dir)?;
    let train = split_halves(&train.images, Some(train.labels))?;
    let (train, _) = train_val_split(&train, n_train, seed)?;
    let test = split_halves(&test.images, Some(test.labels))?;
    Ok((train, test))
}
