//! Labeled datasets: loading, class splits, standardization and folds.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Binary class label in `{-1, +1}`.
pub type Label = i8;

/// Exact pairwise diameter is computed up to this many rows.
pub const EXACT_DIAMETER_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Libsvm,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "libsvm" | "svmlight" => Ok(DataFormat::Libsvm),
            other => Err(Error::invalid(format!("unknown data format {other:?}"))),
        }
    }
}

/// How labels were encoded in the source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelEncoding {
    PlusMinusOne,
    /// `{0, 1}` input, mapped `0 -> -1`.
    ZeroOne,
}

/// Rows `x_i` in `R^d` with labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<Label>,
    pub feature_names: Option<Vec<String>>,
    pub encoding: LabelEncoding,
}

impl LabeledDataset {
    /// Validates labels and finiteness. Features are stored row-major.
    pub fn new(features: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::invalid(format!("label {bad} not in {{-1, +1}}")));
        }
        for (i, row) in features.outer_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("row {i}")));
            }
        }
        Ok(Self {
            features: features.as_standard_layout().into_owned(),
            labels,
            feature_names: None,
            encoding: LabelEncoding::PlusMinusOne,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Labels as `f64` values `±1.0`.
    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(l)).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        row(&self.features, i)
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// True when only one class is present (flagged at load, not an error).
    pub fn is_single_class(&self) -> bool {
        self.count(1) == 0 || self.count(-1) == 0
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            encoding: self.encoding,
        }
    }

    /// Row-wise concatenation; both sides must have the same dimension.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("dimensions checked");
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut out = LabeledDataset::new(features, labels)?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }
}

/// Contiguous view of row `i` of a standard-layout matrix.
pub fn row(m: &Array2<f64>, i: usize) -> &[f64] {
    let d = m.ncols();
    let start = i * d;
    &m.as_slice().expect("matrices are kept in standard layout")[start..start + d]
}

/// Samples grouped by label: the two class-conditional empirical measures.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSplit {
    pub positives: Array2<f64>,
    pub negatives: Array2<f64>,
}

impl ClassSplit {
    pub fn n_plus(&self) -> usize {
        self.positives.nrows()
    }

    pub fn n_minus(&self) -> usize {
        self.negatives.nrows()
    }

    pub fn is_balanced(&self) -> bool {
        self.n_plus() == self.n_minus()
    }
}

/// Splits rows by label, preserving the original order inside each class.
pub fn split_by_label(ds: &LabeledDataset) -> Result<ClassSplit> {
    let pos: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 1).collect();
    let neg: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == -1).collect();
    for (label, idx) in [(1, &pos), (-1, &neg)] {
        if idx.is_empty() {
            return Err(Error::ClassTooSmall {
                label,
                found: 0,
                required: 1,
            });
        }
    }
    Ok(ClassSplit {
        positives: ds.features.select(Axis(0), &pos),
        negatives: ds.features.select(Axis(0), &neg),
    })
}

/// Per-feature affine transform recorded by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub diameter: f64,
    pub per_feature_mean: Vec<f64>,
    pub per_feature_std: Vec<f64>,
}

impl DatasetStats {
    /// Applies the recorded transform to a single point.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.per_feature_mean.iter().zip(&self.per_feature_std))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    /// Applies the recorded transform to every row of a dataset.
    pub fn apply_dataset(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        if ds.dim() != self.per_feature_mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.per_feature_mean.len(),
                found: ds.dim(),
            });
        }
        let mut out = ds.clone();
        for mut r in out.features.outer_iter_mut() {
            let t = self.apply(r.as_slice().expect("standard layout"));
            r.assign(&Array1::from(t));
        }
        Ok(out)
    }
}

/// Centers each column and scales it to unit population standard deviation
/// (divisor `n`). Constant columns become zero and record std 0.
pub fn standardize(ds: &LabeledDataset) -> Result<(LabeledDataset, DatasetStats)> {
    if ds.len() < 2 {
        return Err(Error::invalid("standardize needs at least 2 rows"));
    }
    let n = ds.len() as f64;
    let mean: Vec<f64> = ds.features.columns().into_iter().map(|c| c.sum() / n).collect();
    let std: Vec<f64> = ds
        .features
        .columns()
        .into_iter()
        .zip(&mean)
        .map(|(c, &m)| {
            let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            // Round-off on a constant column can leave ~1e-17 spread.
            if s <= 1e-300 || s < 1e-14 * m.abs() {
                0.0
            } else {
                s
            }
        })
        .collect();
    let mut stats = DatasetStats {
        diameter: 0.0,
        per_feature_mean: mean,
        per_feature_std: std,
    };
    let out = stats.apply_dataset(ds)?;
    stats.diameter = diameter(&out).value;
    Ok((out, stats))
}

/// `diam(X)`: exact maximum pairwise distance, or a bounding-box bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diameter {
    pub value: f64,
    /// True when `value` is the bounding-box diagonal rather than the exact maximum.
    pub is_bound: bool,
}

pub fn diameter(ds: &LabeledDataset) -> Diameter {
    points_diameter(&ds.features)
}

pub fn points_diameter(x: &Array2<f64>) -> Diameter {
    let n = x.nrows();
    if n <= EXACT_DIAMETER_LIMIT {
        let mut best = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(squared_distance(row(x, i), row(x, j)));
            }
        }
        Diameter {
            value: best.sqrt(),
            is_bound: false,
        }
    } else {
        let diag: f64 = x
            .columns()
            .into_iter()
            .map(|c| {
                let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (hi - lo) * (hi - lo)
            })
            .sum();
        Diameter {
            value: diag.sqrt(),
            is_bound: true,
        }
    }
}

pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// One cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified `k`-fold partition of `0..n`, deterministic in `seed`.
///
/// Each class is shuffled and dealt round-robin; the negatives continue the
/// deal where the positives stopped so fold sizes differ by at most one.
pub fn kfold_split(ds: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = ds.len();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("fold count {k} outside 2..={n}")));
    }
    let mut rng = rng::stream(seed, rng::streams::FOLDS);
    let mut assignment = vec![0usize; n];
    let mut next = 0usize;
    for label in [1, -1] {
        let mut idx: Vec<usize> = (0..n).filter(|&i| ds.labels[i] == label).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| assignment[i] == f);
            Fold { train, validation }
        })
        .collect())
}

/// Stratified train/test split; `test_fraction` of each class goes to test.
pub fn train_test_split(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid("test fraction must lie in [0, 1)"));
    }
    let mut rng = rng::stream(seed, rng::streams::SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [1, -1] {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == label).collect();
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

// ---------------------------------------------------------------------------
// Loading

/// Reads a dataset from disk. `n_features` fixes `d` for LIBSVM input
/// (otherwise the largest index seen); it is checked against CSV headers.
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    n_features: Option<usize>,
) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        DataFormat::Csv => parse_csv(reader, n_features),
        DataFormat::Libsvm => parse_libsvm(reader, n_features),
    }
}

/// CSV with a header row; the column named `label` holds the labels.
pub fn parse_csv<R: Read>(reader: R, n_features: Option<usize>) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or(Error::Parse {
            line: 1,
            message: "header has no \"label\" column".into(),
        })?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let d = names.len();
    if let Some(expected) = n_features {
        if expected != d {
            return Err(Error::DimensionMismatch { expected, found: d });
        }
    }
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != d + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", d + 1, record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("line {line}")));
            }
            if j == label_col {
                raw_labels.push((line, v));
            } else {
                values.push(v);
            }
        }
    }
    let n = raw_labels.len();
    let features = Array2::from_shape_vec((n, d), values).expect("row lengths checked");
    let mut ds = finish(features, &raw_labels)?;
    ds.feature_names = Some(names);
    Ok(ds)
}

/// Sparse `label idx:val ...` lines with 1-based indices; absent entries are 0.
pub fn parse_libsvm<R: BufRead>(reader: R, n_features: Option<usize>) -> Result<LabeledDataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_labels = Vec::new();
    let mut max_index = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("cannot parse label {label_tok:?}"),
        })?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected idx:val, found {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature value {val:?}"),
            })?;
            if !val.is_finite() {
                return Err(Error::NonFinite(format!("line {line_no}")));
            }
            if let Some(d) = n_features {
                if idx > d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: idx,
                    });
                }
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
        raw_labels.push((line_no, label));
    }
    let d = n_features.unwrap_or(max_index);
    let mut features = Array2::zeros((rows.len(), d));
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            features[[i, j]] = v;
        }
    }
    finish(features, &raw_labels)
}

fn finish(features: Array2<f64>, raw_labels: &[(usize, f64)]) -> Result<LabeledDataset> {
    let has_zero = raw_labels.iter().any(|&(_, v)| v == 0.0);
    let encoding = if has_zero {
        LabelEncoding::ZeroOne
    } else {
        LabelEncoding::PlusMinusOne
    };
    let labels = raw_labels
        .iter()
        .map(|&(line, v)| match (encoding, v) {
            (LabelEncoding::PlusMinusOne, 1.0) => Ok(1),
            (LabelEncoding::PlusMinusOne, -1.0) => Ok(-1),
            (LabelEncoding::ZeroOne, 1.0) => Ok(1),
            (LabelEncoding::ZeroOne, 0.0) => Ok(-1),
            _ => Err(Error::Parse {
                line,
                message: format!("label {v} outside {{-1,+1}} / {{0,1}}"),
            }),
        })
        .collect::<Result<Vec<Label>>>()?;
    let mut ds = LabeledDataset::new(features, labels)?;
    ds.encoding = encoding;
    Ok(ds)
}

/// Writes a dataset as CSV with a trailing `label` column.
pub fn write_csv<W: std::io::Write>(ds: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = match &ds.feature_names {
        Some(names) => names.clone(),
        None => (1..=ds.dim()).map(|j| format!("f{j}")).collect(),
    };
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.labels[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
