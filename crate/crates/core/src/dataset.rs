//! Feature/target matrices with per-sample metadata, and their CSV form.
//!
//! CSV layout: a header row, the feature columns, the target columns, then
//! whichever tag columns (`branch`, `district`, `population_label`, `day`)
//! any sample carries. Missing tags are written as empty fields.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Binary population label of a unit (the candidate hidden feature).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Population {
    A,
    B,
}

impl Population {
    pub fn other(self) -> Self {
        match self {
            Population::A => Population::B,
            Population::B => Population::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Population::A => "A",
            Population::B => "B",
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Population {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Population::A),
            "B" | "b" => Ok(Population::B),
            other => Err(Error::InvalidArgument(format!("population label must be A or B, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTags {
    pub branch: Option<u8>,
    pub district: Option<String>,
    pub population_label: Option<Population>,
    pub day: Option<u32>,
}

impl SampleTags {
    pub fn branch(id: u8) -> Self {
        Self {
            branch: Some(id),
            ..Self::default()
        }
    }
}

const TAG_COLUMNS: [&str; 4] = ["branch", "district", "population_label", "day"];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub features: Matrix,
    pub targets: Matrix,
    pub tags: Vec<SampleTags>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        target_names: Vec<String>,
        features: Matrix,
        targets: Matrix,
        tags: Vec<SampleTags>,
    ) -> Result<Self> {
        if features.rows() != targets.rows() || features.rows() != tags.len() {
            return Err(Error::InvalidArgument(format!(
                "row counts differ: {} features, {} targets, {} tags",
                features.rows(),
                targets.rows(),
                tags.len()
            )));
        }
        if feature_names.len() != features.cols() || target_names.len() != targets.cols() {
            return Err(Error::InvalidArgument("column names do not match matrix widths".into()));
        }
        Ok(Self {
            feature_names,
            target_names,
            features,
            targets,
            tags,
        })
    }

    /// Dataset with generated column names `x0..`, `y0..` and empty tags.
    pub fn from_matrices(features: Matrix, targets: Matrix) -> Result<Self> {
        let f = (0..features.cols()).map(|i| format!("x{i}")).collect();
        let t = (0..targets.cols()).map(|i| format!("y{i}")).collect();
        let tags = vec![SampleTags::default(); features.rows()];
        Self::new(f, t, features, targets, tags)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            features: self.features.select_rows(idx),
            targets: self.targets.select_rows(idx),
            tags: idx.iter().map(|&i| self.tags[i].clone()).collect(),
        }
    }

    /// Rows whose tags satisfy `keep`, in original order.
    pub fn filter(&self, keep: impl Fn(&SampleTags) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.tags[i])).collect();
        self.subset(&idx)
    }

    /// Concatenates two datasets with identical columns.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.feature_names != other.feature_names || self.target_names != other.target_names {
            return Err(Error::InvalidArgument("cannot concatenate datasets with different columns".into()));
        }
        let mut f = self.features.data().to_vec();
        f.extend_from_slice(other.features.data());
        let mut t = self.targets.data().to_vec();
        t.extend_from_slice(other.targets.data());
        let mut tags = self.tags.clone();
        tags.extend(other.tags.iter().cloned());
        Self::new(
            self.feature_names.clone(),
            self.target_names.clone(),
            Matrix::new(self.len() + other.len(), self.feature_dim(), f)?,
            Matrix::new(self.len() + other.len(), self.target_dim(), t)?,
            tags,
        )
    }

    fn tag_columns_present(&self) -> Vec<&'static str> {
        TAG_COLUMNS
            .iter()
            .copied()
            .filter(|c| {
                self.tags.iter().any(|t| match *c {
                    "branch" => t.branch.is_some(),
                    "district" => t.district.is_some(),
                    "population_label" => t.population_label.is_some(),
                    _ => t.day.is_some(),
                })
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let tag_cols = self.tag_columns_present();
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.extend(self.target_names.iter().map(String::as_str));
        header.extend(tag_cols.iter().copied());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            rec.extend(self.targets.row(i).iter().map(|v| v.to_string()));
            let t = &self.tags[i];
            for c in &tag_cols {
                rec.push(match *c {
                    "branch" => t.branch.map(|b| b.to_string()).unwrap_or_default(),
                    "district" => t.district.clone().unwrap_or_default(),
                    "population_label" => t.population_label.map(|p| p.to_string()).unwrap_or_default(),
                    _ => t.day.map(|d| d.to_string()).unwrap_or_default(),
                });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads a dataset whose last `n_targets` non-tag columns are targets.
    pub fn load_csv(path: impl AsRef<Path>, n_targets: usize) -> Result<Self> {
        let path = path.as_ref();
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            message,
        };
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let value_cols: Vec<usize> = (0..header.len())
            .filter(|&i| !TAG_COLUMNS.contains(&header[i].as_str()))
            .collect();
        if value_cols.len() <= n_targets {
            return Err(malformed(format!(
                "need at least one feature column besides {n_targets} target column(s)"
            )));
        }
        let n_features = value_cols.len() - n_targets;
        let col_of = |name: &str| header.iter().position(|h| h == name);
        let (cb, cd, cp, cy) = (col_of("branch"), col_of("district"), col_of("population_label"), col_of("day"));

        let mut features = Vec::new();
        let mut targets = Vec::new();
        let mut tags = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = line + 2;
            for (k, &c) in value_cols.iter().enumerate() {
                let raw = rec.get(c).unwrap_or("");
                let v: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|_| malformed(format!("line {line}: `{raw}` in column `{}` is not a number", header[c])))?;
                if !v.is_finite() {
                    return Err(malformed(format!("line {line}: non-finite value")));
                }
                if k < n_features {
                    features.push(v);
                } else {
                    targets.push(v);
                }
            }
            let field = |c: Option<usize>| c.and_then(|c| rec.get(c)).map(str::trim).filter(|s| !s.is_empty());
            let parse_err = |what: &str| malformed(format!("line {line}: bad {what} tag"));
            tags.push(SampleTags {
                branch: field(cb).map(|s| s.parse().map_err(|_| parse_err("branch"))).transpose()?,
                district: field(cd).map(str::to_string),
                population_label: field(cp).map(|s| s.parse().map_err(|_| parse_err("population_label"))).transpose()?,
                day: field(cy).map(|s| s.parse().map_err(|_| parse_err("day"))).transpose()?,
            });
        }
        let rows = tags.len();
        Dataset::new(
            value_cols[..n_features].iter().map(|&c| header[c].clone()).collect(),
            value_cols[n_features..].iter().map(|&c| header[c].clone()).collect(),
            Matrix::new(rows, n_features, features)?,
            Matrix::new(rows, n_targets, targets)?,
            tags,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let features = Matrix::new(3, 2, vec![0.1, 1.0, -0.25, 2.0, 1e-17, 3.0]).unwrap();
        let targets = Matrix::new(3, 1, vec![256.0, 0.0, 1.0 / 3.0]).unwrap();
        let mut tags = vec![SampleTags::branch(1), SampleTags::branch(2), SampleTags::default()];
        tags[0].district = Some("d1".into());
        tags[1].population_label = Some(Population::B);
        tags[2].day = Some(7);
        Dataset::new(vec!["x".into(), "w".into()], vec!["y".into()], features, targets, tags).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.save_csv(&p).unwrap();
        let back = Dataset::load_csv(&p, 1).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn header_lists_only_present_tags() {
        let mut d = sample();
        for t in &mut d.tags {
            *t = SampleTags::branch(1);
        }
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x,w,y,branch");
    }

    #[test]
    fn mismatched_rows_rejected() {
        let r = Dataset::new(
            vec!["x".into()],
            vec!["y".into()],
            Matrix::zeros(2, 1),
            Matrix::zeros(3, 1),
            vec![SampleTags::default(); 2],
        );
        assert!(r.is_err());
    }

    #[test]
    fn filter_and_concat() {
        let d = sample();
        let b1 = d.filter(|t| t.branch == Some(1));
        assert_eq!(b1.len(), 1);
        let both = b1.concat(&d).unwrap();
        assert_eq!(both.len(), 4);
        assert_eq!(both.targets.get(0, 0), 256.0);
    }
}
