use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{dim_err, Error, Result};
use crate::model::TwoViewBatch;
use crate::numerics::{DenseMatrix, Rng};

/// Dataset metadata, stored as a flat `key=value` text file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    /// Views are 0/1 valued, which selects cross-entropy reconstruction.
    pub binary_views: bool,
    pub x_name: String,
    pub y_name: String,
    pub provenance: String,
    /// Any further keys, kept in sorted order.
    pub extra: BTreeMap<String, String>,
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        fs::read_to_string(path)?.parse()
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "binary_views={}", self.binary_views)?;
        writeln!(f, "x_name={}", self.x_name)?;
        writeln!(f, "y_name={}", self.y_name)?;
        writeln!(f, "provenance={}", self.provenance)?;
        for (k, v) in &self.extra {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for Manifest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for (ln, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("manifest line {}: expected key=value", ln + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "binary_views" => {
                    m.binary_views = v.parse().map_err(|_| {
                        Error::Format(format!(
                            "manifest line {}: binary_views must be true/false",
                            ln + 1
                        ))
                    })?
                }
                "x_name" => m.x_name = v.into(),
                "y_name" => m.y_name = v.into(),
                "provenance" => m.provenance = v.into(),
                _ => {
                    m.extra.insert(k.into(), v.into());
                }
            }
        }
        Ok(m)
    }
}

/// Two aligned views with optional class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewedDataset {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub labels: Option<Vec<usize>>,
    pub manifest: Manifest,
}

impl ViewedDataset {
    pub fn new(
        x: DenseMatrix,
        y: DenseMatrix,
        labels: Option<Vec<usize>>,
        manifest: Manifest,
    ) -> Result<Self> {
        if x.rows() != y.rows() {
            return dim_err(
                "ViewedDataset::new",
                format!("{} x-rows vs {} y-rows", x.rows(), y.rows()),
            );
        }
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return dim_err(
                    "ViewedDataset::new",
                    format!("{} labels for {} rows", l.len(), x.rows()),
                );
            }
        }
        Ok(Self {
            x,
            y,
            labels,
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            manifest: self.manifest.clone(),
        }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn to_batch(&self) -> TwoViewBatch {
        TwoViewBatch {
            x: self.x.clone(),
            y: self.y.clone(),
        }
    }

    /// Labels, or an error when the dataset has none.
    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("dataset has no labels".into()))
    }
}

/// Splits `height x width` row-major images into left and right halves,
/// each flattened row-major (`width/2` columns per pixel row).
pub fn split_halves_dims(
    images: &DenseMatrix,
    height: usize,
    width: usize,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if images.cols() != height * width || !width.is_multiple_of(2) {
        return dim_err(
            "split_halves",
            format!(
                "{} columns is not an even-width {height}x{width} image",
                images.cols()
            ),
        );
    }
    let half = width / 2;
    let n = images.rows();
    let mut x = DenseMatrix::zeros(n, height * half);
    let mut y = DenseMatrix::zeros(n, height * half);
    for i in 0..n {
        let src = images.row(i);
        let (xr, yr) = (x.row_mut(i), y.row_mut(i));
        for r in 0..height {
            xr[r * half..(r + 1) * half].copy_from_slice(&src[r * width..r * width + half]);
        }
        for r in 0..height {
            yr[r * half..(r + 1) * half].copy_from_slice(&src[r * width + half..(r + 1) * width]);
        }
    }
    Ok((x, y))
}

/// Left half of each 28x28 image as the x view, right half as the y view (392 values each).
pub fn split_halves(images: &DenseMatrix, labels: Option<Vec<usize>>) -> Result<ViewedDataset> {
    let (x, y) = split_halves_dims(images, 28, 28)?;
    let manifest = Manifest {
        binary_views: false,
        x_name: "left".into(),
        y_name: "right".into(),
        provenance: "mnist halves".into(),
        extra: BTreeMap::new(),
    };
    ViewedDataset::new(x, y, labels, manifest)
}

/// Inverse of [`split_halves_dims`].
pub fn reassemble_dims(x: &DenseMatrix, y: &DenseMatrix, height: usize) -> Result<DenseMatrix> {
    if x.shape() != y.shape() || height == 0 || !x.cols().is_multiple_of(height) {
        return dim_err(
            "reassemble",
            format!(
                "views {:?} and {:?} with height {height}",
                x.shape(),
                y.shape()
            ),
        );
    }
    let half = x.cols() / height;
    let width = 2 * half;
    let mut out = DenseMatrix::zeros(x.rows(), height * width);
    for i in 0..x.rows() {
        let dst = out.row_mut(i);
        for r in 0..height {
            dst[r * width..r * width + half].copy_from_slice(&x.row(i)[r * half..(r + 1) * half]);
            dst[r * width + half..(r + 1) * width]
                .copy_from_slice(&y.row(i)[r * half..(r + 1) * half]);
        }
    }
    Ok(out)
}

pub fn reassemble(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    reassemble_dims(x, y, 28)
}

/// Seeded shuffle, then the first `n_train` rows versus the rest.
pub fn train_val_split(
    data: &ViewedDataset,
    n_train: usize,
    seed: u64,
) -> Result<(ViewedDataset, ViewedDataset)> {
    if n_train > data.len() {
        return Err(Error::InvalidArgument(format!(
            "n_train {n_train} exceeds {} rows",
            data.len()
        )));
    }
    let perm = Rng::seed_from(seed).permutation(data.len());
    Ok((data.select(&perm[..n_train]), data.select(&perm[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn left_ones_right_zeros() {
        let img = DenseMatrix::from_fn(1, 784, |_, c| if c % 28 < 14 { 1.0 } else { 0.0 });
        let d = split_halves(&img, None).unwrap();
        assert_eq!(d.x.shape(), (1, 392));
        assert!(d.x.as_slice().iter().all(|&v| v == 1.0));
        assert!(d.y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pixel_index_arithmetic() {
        let img = DenseMatrix::from_fn(1, 784, |_, c| c as f64);
        let d = split_halves(&img, None).unwrap();
        assert_eq!(d.y.get(0, 3 * 14 + 3), (3 * 28 + 17) as f64);
        assert_eq!(d.x.get(0, 5 * 14 + 13), (5 * 28 + 13) as f64);
        assert!(split_halves(&DenseMatrix::zeros(1, 783), None).is_err());
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let m = DenseMatrix::from_fn(50, 1, |r, _| r as f64);
        let d =
            ViewedDataset::new(m.clone(), m, Some((0..50).collect()), Manifest::default()).unwrap();
        let (a, b) = train_val_split(&d, 40, 3).unwrap();
        assert_eq!((a.len(), b.len()), (40, 10));
        let mut all: Vec<usize> = a
            .labels
            .unwrap()
            .into_iter()
            .chain(b.labels.unwrap())
            .collect();
        all.sort();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        let (a, b) = train_val_split(&d, 50, 3).unwrap();
        assert_eq!((a.len(), b.len()), (50, 0));
        assert!(train_val_split(&d, 51, 3).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = Manifest {
            binary_views: true,
            x_name: "en".into(),
            y_name: "hi".into(),
            provenance: "synthetic".into(),
            ..Default::default()
        };
        m.extra.insert("idf".into(), "ln(N/(1+df))".into());
        assert_eq!(m.to_string().parse::<Manifest>().unwrap(), m);
        assert!("nonsense".parse::<Manifest>().is_err());
        assert!("binary_views=maybe".parse::<Manifest>().is_err());
    }

    proptest! {
        #[test]
        fn reassemble_inverts_split(vals in proptest::collection::vec(0u8..=255, 784 * 2)) {
            let img = DenseMatrix::from_vec(2, 784, vals.iter().map(|&b| f64::from(b) / 255.0).collect()).unwrap();
            let d = split_halves(&img, None).unwrap();
            prop_assert_eq!(reassemble(&d.x, &d.y).unwrap(), img);
        }
    }
}
