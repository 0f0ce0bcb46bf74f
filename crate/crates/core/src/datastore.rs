//! Flat-file ingestion for feature matrices, labels and predicted
//! probabilities.
//!
//! All numeric files are headerless CSV with one instance per line. Label
//! files hold one integer per line. Loaded containers are immutable.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result, Scalar};

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Dense n×d matrix of per-instance feature vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    rows: usize,
    dims: usize,
    values: Vec<T>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(rows: usize, dims: usize, values: Vec<T>) -> Result<Self> {
        if rows == 0 || dims == 0 {
            return Err(Error::Shape(format!("feature matrix must be at least 1x1, got {rows}x{dims}")));
        }
        if values.len() != rows * dims {
            return Err(Error::Shape(format!(
                "expected {} values for a {rows}x{dims} matrix, got {}",
                rows * dims,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                source_name: "<memory>".into(),
                line: pos / dims + 1,
                token: values[pos].to_string(),
            });
        }
        Ok(Self { rows, dims, values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dims) {
            return Err(Error::RaggedRow {
                source_name: "<memory>".into(),
                line: bad + 1,
                expected: dims,
                found: rows[bad].len(),
            });
        }
        Self::new(rows.len(), dims, rows.concat())
    }

    /// Rows picked out by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::OutOfBounds { index: i, size: self.rows });
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.dims, values)
    }

    /// CSV text with 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24);
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| format!("{:.16e}", v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io { path: path.to_path_buf(), source };
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(self.to_csv().as_bytes()).map_err(io_err)
    }
}

impl<T> FeatureMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.dims)
    }
}

/// Class labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(pos) = labels.iter().position(|&l| l >= num_classes) {
            return Err(Error::Range {
                source_name: "<memory>".into(),
                line: pos + 1,
                value: labels[pos].to_string(),
                reason: format!("labels must lie in [0, {num_classes})"),
            });
        }
        Ok(Self { labels, num_classes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Row-stochastic n×C matrix of predicted class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix<T> {
    rows: usize,
    classes: usize,
    values: Vec<T>,
}

impl<T: Scalar> ProbabilityMatrix<T> {
    pub fn new(rows: usize, classes: usize, values: Vec<T>) -> Result<Self> {
        Self::validated(rows, classes, values, "<memory>")
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != classes) {
            return Err(Error::RaggedRow {
                source_name: "<memory>".into(),
                line: bad + 1,
                expected: classes,
                found: rows[bad].len(),
            });
        }
        Self::new(rows.len(), classes, rows.concat())
    }

    fn validated(rows: usize, classes: usize, values: Vec<T>, source_name: &str) -> Result<Self> {
        if rows == 0 || classes == 0 {
            return Err(Error::EmptyInput(source_name.to_string()));
        }
        if values.len() != rows * classes {
            return Err(Error::Shape(format!(
                "expected {} probabilities for {rows}x{classes}, got {}",
                rows * classes,
                values.len()
            )));
        }
        for (r, row) in values.chunks_exact(classes).enumerate() {
            if let Some(v) = row.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
                return Err(Error::Range {
                    source_name: source_name.to_string(),
                    line: r + 1,
                    value: v.to_string(),
                    reason: "probabilities must lie in [0, 1]".into(),
                });
            }
            let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Normalization {
                    source_name: source_name.to_string(),
                    line: r + 1,
                    sum,
                });
            }
        }
        Ok(Self { rows, classes, values })
    }
}

impl<T> ProbabilityMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.classes..(i + 1) * self.classes]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Parses a rectangular CSV grid. Trailing blank lines are ignored.
fn parse_grid<T: Scalar>(text: &str, source_name: &str) -> Result<(usize, usize, Vec<T>)> {
    let body = text.trim_end();
    if body.is_empty() {
        return Err(Error::EmptyInput(source_name.to_string()));
    }
    let mut cols = 0;
    let mut rows = 0;
    let mut values = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        let line_no = idx + 1;
        let tokens: Vec<&str> = line.split(',').collect();
        if idx == 0 {
            cols = tokens.len();
        } else if tokens.len() != cols {
            return Err(Error::RaggedRow {
                source_name: source_name.to_string(),
                line: line_no,
                expected: cols,
                found: tokens.len(),
            });
        }
        for tok in tokens {
            let tok = tok.trim();
            match tok.parse::<T>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        source_name: source_name.to_string(),
                        line: line_no,
                        token: tok.to_string(),
                    })
                }
            }
        }
        rows += 1;
    }
    Ok((rows, cols, values))
}

pub fn parse_features<T: Scalar>(text: &str, source_name: &str) -> Result<FeatureMatrix<T>> {
    let (rows, dims, values) = parse_grid(text, source_name)?;
    FeatureMatrix::new(rows, dims, values)
}

pub fn load_features<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMatrix<T>> {
    let path = path.as_ref();
    parse_features(&read_text(path)?, &path.display().to_string())
}

pub fn parse_labels(text: &str, num_classes: usize, source_name: &str) -> Result<LabelVector> {
    let body = text.trim_end();
    if body.is_empty() {
        return Err(Error::EmptyInput(source_name.to_string()));
    }
    let mut labels = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        let tok = line.trim();
        let value: i64 = tok.parse().map_err(|_| Error::Parse {
            source_name: source_name.to_string(),
            line: idx + 1,
            token: tok.to_string(),
        })?;
        if value < 0 || value as u64 >= num_classes as u64 {
            return Err(Error::Range {
                source_name: source_name.to_string(),
                line: idx + 1,
                value: tok.to_string(),
                reason: format!("labels must lie in [0, {num_classes})"),
            });
        }
        labels.push(value as usize);
    }
    Ok(LabelVector { labels, num_classes })
}

pub fn load_labels(path: impl AsRef<Path>, num_classes: usize) -> Result<LabelVector> {
    let path = path.as_ref();
    parse_labels(&read_text(path)?, num_classes, &path.display().to_string())
}

pub fn parse_probabilities<T: Scalar>(text: &str, source_name: &str) -> Result<ProbabilityMatrix<T>> {
    let (rows, classes, values) = parse_grid(text, source_name)?;
    ProbabilityMatrix::validated(rows, classes, values, source_name)
}

pub fn load_probabilities<T: Scalar>(path: impl AsRef<Path>) -> Result<ProbabilityMatrix<T>> {
    let path = path.as_ref();
    parse_probabilities(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_layout() {
        let m: FeatureMatrix<f64> = parse_features("1.0,0.0\n0.0,1.0", "t").unwrap();
        assert_eq!((m.rows(), m.dims()), (2, 2));
        assert_eq!(m.values(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_row() {
        let m: FeatureMatrix<f64> = parse_features("1.0,2.0,3.0\n", "t").unwrap();
        assert_eq!((m.rows(), m.dims()), (1, 3));
    }

    #[test]
    fn ragged_row_names_line() {
        let err = parse_features::<f64>("1.0,2.0\n3.0", "t").unwrap_err();
        assert!(matches!(err, Error::RaggedRow { line: 2, expected: 2, found: 1, .. }), "{err}");
    }

    #[test]
    fn non_numeric_and_non_finite_tokens() {
        assert!(matches!(parse_features::<f64>("1.0,abc", "t"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_features::<f64>("1.0,2\ninf,0", "t"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_features::<f64>("NaN", "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_file_is_error() {
        assert!(matches!(parse_features::<f64>("", "t"), Err(Error::EmptyInput(_))));
        assert!(matches!(parse_features::<f64>("\n\n", "t"), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn labels() {
        assert_eq!(parse_labels("0\n1\n0", 2, "t").unwrap().labels(), &[0, 1, 0]);
        assert_eq!(parse_labels("1\n1", 10, "t").unwrap().labels(), &[1, 1]);
        assert!(matches!(parse_labels("2", 2, "t"), Err(Error::Range { .. })));
        assert!(matches!(parse_labels("-1", 2, "t"), Err(Error::Range { .. })));
        assert!(matches!(parse_labels("1.5", 2, "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn probabilities() {
        let p: ProbabilityMatrix<f64> = parse_probabilities("0.5,0.5", "t").unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
        let p: ProbabilityMatrix<f64> = parse_probabilities("1.0,0.0\n0.25,0.75", "t").unwrap();
        assert_eq!((p.rows(), p.classes()), (2, 2));
        let err = parse_probabilities::<f64>("0.6,0.3", "t").unwrap_err();
        match err {
            Error::Normalization { sum, .. } => assert!((sum - 0.9).abs() < 1e-12),
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(parse_probabilities::<f64>("-0.5,1.5", "t"), Err(Error::Range { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let m = FeatureMatrix::from_rows(&[vec![0.1, -2.5e-300], vec![1.0 / 3.0, 7.0]]).unwrap();
        m.write_csv(&path).unwrap();
        assert_eq!(load_features::<f64>(&path).unwrap(), m);
        assert!(matches!(load_features::<f64>(dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            rows in 1usize..6,
            dims in 1usize..5,
            seed in proptest::collection::vec(-1e12f64..1e12, 30),
        ) {
            let values: Vec<f64> = seed.iter().cycle().take(rows * dims).map(|v| v / 7.0).collect();
            let m = FeatureMatrix::new(rows, dims, values).unwrap();
            let back: FeatureMatrix<f64> = parse_features(&m.to_csv(), "t").unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
