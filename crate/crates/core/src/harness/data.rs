use std::f64::consts::SQRT_2;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QsvmError, Result};

const IRIS_CSV: &str = include_str!("../../data/iris.csv");

/// Feature matrix with string class labels, rows in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    /// `m×n`
    pub x: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        x: DMatrix<f64>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(QsvmError::InvalidData("dataset has no rows".into()));
        }
        if x.nrows() != labels.len() || x.ncols() != feature_names.len() {
            return Err(QsvmError::InvalidArgument(format!(
                "{}x{} features with {} labels and {} names",
                x.nrows(),
                x.ncols(),
                labels.len(),
                feature_names.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(QsvmError::InvalidData("features must be finite".into()));
        }
        Ok(Self {
            name: name.into(),
            feature_names,
            x,
            labels,
        })
    }

    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Vec<String> {
        let mut classes = self.labels.clone();
        classes.sort();
        classes.dedup();
        classes
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// The given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            x: self.x.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, label_column, name)
}

/// Parses a headed CSV; every column except `label_column` must be numeric.
pub fn read_csv(input: impl Read, label_column: &str, name: impl Into<String>) -> Result<Dataset> {
    let (feature_names, x, labels) = parse_table(input, Some(label_column))?;
    Dataset::new(name, feature_names, x, labels.expect("label column requested"))
}

/// Feature names and values of a headed, all-numeric CSV (no label column).
pub fn read_unlabeled_csv(input: impl Read) -> Result<(Vec<String>, DMatrix<f64>)> {
    let (names, x, _) = parse_table(input, None)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(QsvmError::InvalidData("features must be finite".into()));
    }
    Ok((names, x))
}

pub fn load_unlabeled_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    read_unlabeled_csv(open(path.as_ref())?)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

type Table = (Vec<String>, DMatrix<f64>, Option<Vec<String>>);

fn parse_table(input: impl Read, label_column: Option<&str>) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| QsvmError::Parse(e.to_string()))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(QsvmError::InvalidData("empty file".into()));
    }
    let label_idx = match label_column {
        Some(label) => Some(
            headers
                .iter()
                .position(|h| h == label)
                .ok_or_else(|| QsvmError::Config(format!("label column {label:?} not found in header")))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| QsvmError::Parse(format!("row {row}: {e}")))?;
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(cell.to_string());
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    QsvmError::Parse(format!(
                        "non-numeric value {cell:?} at row {row}, column {}",
                        &headers[j]
                    ))
                })?;
                values.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(QsvmError::InvalidData("file has a header but no rows".into()));
    }
    let x = DMatrix::from_row_slice(rows, feature_names.len(), &values);
    Ok((feature_names, x, label_idx.map(|_| labels)))
}

/// The 150-sample, three-species iris measurements.
pub fn iris() -> Dataset {
    read_csv(IRIS_CSV.as_bytes(), "species", "iris").expect("bundled file is well formed")
}

/// Two classes separated by the ellipse `(x₁/a)² + (x₂/b)² = 1`.
///
/// Points are drawn uniformly from the region `(x₁/a)² + (x₂/b)² ≤ 2`,
/// rejecting those with `|(x₁/a)² + (x₂/b)² − 1| < margin`, so both classes
/// cover bands of equal area. Every draw `p` is paired with `−p`, which
/// centres the sample exactly and keeps the separator free of linear terms
/// after standardization. Half of the `m` points lie inside (label `"-1"`),
/// half outside (label `"1"`); `m` must be a positive multiple of 4.
pub fn ellipse(m: usize, margin: f64, seed: u64) -> Result<Dataset> {
    const A: f64 = 1.5;
    const B: f64 = 1.0;
    if m == 0 || !m.is_multiple_of(4) {
        return Err(QsvmError::InvalidArgument(format!(
            "ellipse sample size must be a positive multiple of 4, got {m}"
        )));
    }
    if !(0.0..1.0).contains(&margin) {
        return Err(QsvmError::InvalidArgument(format!(
            "margin must lie in [0, 1), got {margin}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_class = m / 4;
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    while inside.len() < per_class || outside.len() < per_class {
        let p = [
            rng.random_range(-SQRT_2 * A..SQRT_2 * A),
            rng.random_range(-SQRT_2 * B..SQRT_2 * B),
        ];
        let level = (p[0] / A).powi(2) + (p[1] / B).powi(2) - 1.0;
        if level.abs() < margin || level > 1.0 {
            continue;
        }
        let bucket = if level < 0.0 { &mut inside } else { &mut outside };
        if bucket.len() < per_class {
            bucket.push(p);
        }
    }
    let mut values = Vec::with_capacity(2 * m);
    let mut labels = Vec::with_capacity(m);
    for (points, label) in [(&inside, "-1"), (&outside, "1")] {
        for p in points {
            for sign in [1.0, -1.0] {
                values.extend([sign * p[0], sign * p[1]]);
                labels.push(label.to_string());
            }
        }
    }
    Dataset::new(
        format!("ellipse-{seed}"),
        vec!["x1".into(), "x2".into()],
        DMatrix::from_row_slice(m, 2, &values),
        labels,
    )
}
