use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Pearson correlation between all feature and target columns of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub labels: Vec<String>,
    pub matrix: Matrix,
    /// Columns with zero variance; their off-diagonal entries are 0.
    pub constant_columns: Vec<String>,
}

impl Correlation {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.matrix.get(i, j))
    }

    /// Square CSV with the labels as the first row and first column.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut head = vec![String::new()];
        head.extend(self.labels.iter().cloned());
        out.write_record(&head)?;
        for (i, l) in self.labels.iter().enumerate() {
            let mut row = vec![l.clone()];
            row.extend(self.matrix.row(i).iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Single pass over the rows with running means and co-moments.
pub fn correlation_matrix(d: &Dataset) -> Result<Correlation> {
    if d.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "correlation: ≥ 2 rows required, got {}",
            d.len()
        )));
    }
    let labels: Vec<String> = d.feature_names.iter().chain(&d.target_names).cloned().collect();
    let k = labels.len();
    let mut mean = vec![0.0; k];
    let mut comoment = vec![0.0; k * k];
    let mut delta = vec![0.0; k];
    let mut row = vec![0.0; k];
    for (n, (f, t)) in d.features.iter_rows().zip(d.targets.iter_rows()).enumerate() {
        row[..f.len()].copy_from_slice(f);
        row[f.len()..].copy_from_slice(t);
        let n = (n + 1) as f64;
        for i in 0..k {
            delta[i] = row[i] - mean[i];
            mean[i] += delta[i] / n;
        }
        for i in 0..k {
            for j in i..k {
                comoment[i * k + j] += delta[i] * (row[j] - mean[j]);
            }
        }
    }

    let n = d.len() as f64;
    let constant: Vec<bool> = (0..k)
        .map(|i| {
            let sd = (comoment[i * k + i] / n).sqrt();
            sd <= 1e-12 * mean[i].abs().max(1.0)
        })
        .collect();
    let constant_columns: Vec<String> = labels
        .iter()
        .zip(&constant)
        .filter(|(_, c)| **c)
        .map(|(l, _)| l.clone())
        .collect();
    if !constant_columns.is_empty() {
        log::warn!(
            "constant columns get correlation 0: {}",
            constant_columns.join(", ")
        );
    }

    let mut out = Matrix::identity(k);
    let data = out.data_mut();
    for i in 0..k {
        for j in i + 1..k {
            let r = if constant[i] || constant[j] {
                0.0
            } else {
                let r = comoment[i * k + j] / (comoment[i * k + i] * comoment[j * k + j]).sqrt();
                r.clamp(-1.0, 1.0)
            };
            data[i * k + j] = r;
            data[j * k + i] = r;
        }
    }
    Ok(Correlation {
        labels,
        matrix: out,
        constant_columns,
    })
}
