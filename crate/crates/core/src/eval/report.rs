use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{dim_err, Error, Result};

/// Evaluation results; absent metrics were not requested.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub sum_correlation: Option<f64>,
    pub mse_self: Option<f64>,
    pub mse_cross: Option<f64>,
    /// Percent.
    pub transfer_l2r: Option<f64>,
    pub transfer_r2l: Option<f64>,
    pub folds: usize,
    pub metadata: BTreeMap<String, String>,
}

const COLUMNS: [&str; 6] = [
    "sum_correlation",
    "mse_self",
    "mse_cross",
    "transfer_l2r",
    "transfer_r2l",
    "folds",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        for v in [self.transfer_l2r, self.transfer_r2l].into_iter().flatten() {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "accuracy {v} outside [0, 100]"
                )));
            }
        }
        Ok(())
    }

    /// Header and one row; metadata keys follow the metric columns in sorted order.
    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(self.metadata.keys().map(|k| csv_escape(k)));
        let mut row = vec![
            cell(self.sum_correlation),
            cell(self.mse_self),
            cell(self.mse_cross),
            cell(self.transfer_l2r),
            cell(self.transfer_r2l),
            self.folds.to_string(),
        ];
        row.extend(self.metadata.values().map(|v| csv_escape(v)));
        format!("{}\n{}\n", header.join(","), row.join(","))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |name: &str, v: Option<f64>, unit: &str| {
            if let Some(v) = v {
                let _ = writeln!(s, "{name:<22}{v:.4}{unit}");
            }
        };
        line("sum correlation", self.sum_correlation, "");
        line("mse self (per elem)", self.mse_self, "");
        line("mse cross (per elem)", self.mse_cross, "");
        line("transfer left->right", self.transfer_l2r, " %");
        line("transfer right->left", self.transfer_r2l, " %");
        if self.transfer_l2r.is_some() || self.transfer_r2l.is_some() {
            let _ = writeln!(s, "{:<22}{}", "folds", self.folds);
        }
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "{k:<22}{v}");
        }
        s
    }
}

/// Binary greyscale PGM (`P5`, maxval 255); values are clamped to `[0, 1]`.
pub fn encode_pgm(pixels: &[f64], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if pixels.len() != rows * cols {
        return dim_err(
            "encode_pgm",
            format!("{} pixels for a {rows}x{cols} image", pixels.len()),
        );
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, pixels: &[f64], rows: usize, cols: usize) -> Result<()> {
    fs::write(path, encode_pgm(pixels, rows, cols)?)?;
    Ok(())
}
