//! Datasets with binary labels, CSV ingestion, junk predictors and splits.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// A dense feature matrix with one binary label per row.
///
/// Features are stored row-major. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    n: usize,
    p: usize,
}

impl Dataset {
    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidData("rows have differing lengths".into()));
        }
        let features = rows.into_iter().flatten().collect();
        Self::new(features, labels, feature_names)
    }

    /// Builds a dataset from a row-major `n × p` buffer.
    pub fn new(features: Vec<f64>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let n = labels.len();
        let p = feature_names.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if p == 0 {
            return Err(Error::InvalidData("dataset has no features".into()));
        }
        if features.len() != n * p {
            return Err(Error::InvalidData(format!(
                "feature buffer has {} values, expected {n} x {p}",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos / p,
                pos % p
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidData(format!("label at row {i} is not 0 or 1")));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            n,
            p,
        })
    }

    /// Same as [`Dataset::new`] with names `x1..xp`.
    pub fn unnamed(features: Vec<f64>, labels: Vec<u8>, p: usize) -> Result<Self> {
        Self::new(features, labels, default_names(p))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.p)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.p + j]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, j)).collect()
    }

    pub fn label_mean(&self) -> f64 {
        self.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / self.n as f64
    }

    /// Per-column sample means.
    pub fn column_means(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| self.column(j).iter().sum::<f64>() / self.n as f64)
            .collect()
    }

    /// Per-column sample standard deviations (denominator `n - 1`, 0 when `n = 1`).
    pub fn column_sds(&self) -> Vec<f64> {
        let means = self.column_means();
        (0..self.p)
            .map(|j| {
                if self.n < 2 {
                    return 0.0;
                }
                let ss: f64 = self.column(j).iter().map(|v| (v - means[j]).powi(2)).sum();
                (ss / (self.n - 1) as f64).sqrt()
            })
            .collect()
    }

    /// Rows `indices` (in the given order) as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.feature_names.clone())
    }

    /// Writes a CSV with a header, the features, then a `label_name` column.
    ///
    /// `extra` columns (name, values) are appended after the label.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P, label_name: &str, extra: &[(&str, &[f64])]) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv_to(file, label_name, extra)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, out: W, label_name: &str, extra: &[(&str, &[f64])]) -> Result<()> {
        for (name, values) in extra {
            if values.len() != self.n {
                return Err(Error::InvalidParam(format!(
                    "extra column '{name}' has {} values for {} rows",
                    values.len(),
                    self.n
                )));
            }
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(label_name);
        header.extend(extra.iter().map(|(name, _)| *name));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n {
            record.clear();
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(self.labels[i].to_string());
            record.extend(extra.iter().map(|(_, values)| values[i].to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }
}

pub(crate) fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Which CSV column holds the labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Name(name) => write!(f, "'{name}'"),
            LabelColumn::Index(i) => write!(f, "#{i}"),
        }
    }
}

impl From<&str> for LabelColumn {
    /// A bare integer is read as a column index, anything else as a name.
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }
}

/// Loads a headed, comma-separated file.
///
/// Labels that are all numerically 0 or 1 are used as is. Otherwise the column
/// must hold exactly two distinct strings; the lexicographically smaller maps
/// to 0 and the larger to 1 (so `ham` → 0, `spam` → 1).
pub fn load_csv<P: AsRef<Path>>(path: P, label_column: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, label_column)
}

pub fn read_csv<R: std::io::Read>(input: R, label_column: &LabelColumn) -> Result<Dataset> {
    let table = read_table(input, Some(label_column), true)?;
    let labels = map_labels(&table.raw_labels, &table.label_name)?;
    Dataset::new(table.features, labels, table.feature_names)
}

/// Loads unlabelled points: every column is a feature except `skip`, which is
/// dropped if present. Labels of the returned dataset are all 0.
pub fn load_points_csv<P: AsRef<Path>>(path: P, skip: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_points_csv(file, skip)
}

pub fn read_points_csv<R: std::io::Read>(input: R, skip: Option<&str>) -> Result<Dataset> {
    let skip = skip.map(|s| LabelColumn::Name(s.to_string()));
    let table = read_table(input, skip.as_ref(), false)?;
    let n = if table.feature_names.is_empty() { 0 } else { table.features.len() / table.feature_names.len() };
    Dataset::new(table.features, vec![0; n], table.feature_names)
}

struct Table {
    features: Vec<f64>,
    raw_labels: Vec<String>,
    feature_names: Vec<String>,
    label_name: String,
}

/// With `label_column = None` every column is numeric. A missing label column
/// is an error only when `required`.
fn read_table<R: std::io::Read>(input: R, label_column: Option<&LabelColumn>, required: bool) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = match label_column {
        None => None,
        Some(col) => {
            let found = match col {
                LabelColumn::Name(name) => headers.iter().position(|h| h == name),
                LabelColumn::Index(i) => (*i < headers.len()).then_some(*i),
            };
            if found.is_none() && required {
                return Err(Error::NoLabelColumn(col.to_string()));
            }
            found
        }
    };
    let label_name = label_idx.map_or_else(String::new, |i| headers[i].clone());
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based data row, not counting the header
        let row = r + 1;
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(Error::MissingValue {
                    row,
                    column: headers[j].clone(),
                });
            }
            if Some(j) == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: headers[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    row,
                    column: headers[j].clone(),
                    value: cell.to_string(),
                });
            }
            features.push(v);
        }
    }
    Ok(Table {
        features,
        raw_labels,
        feature_names,
        label_name,
    })
}

fn map_labels(raw: &[String], column: &str) -> Result<Vec<u8>> {
    let numeric: Option<Vec<u8>> = raw
        .iter()
        .map(|s| match s.parse::<f64>() {
            Ok(0.0) => Some(0),
            Ok(1.0) => Some(1),
            _ => None,
        })
        .collect();
    if let Some(labels) = numeric {
        if !labels.is_empty() {
            return Ok(labels);
        }
    }
    let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    if distinct.len() != 2 {
        return Err(Error::BadLabels {
            column: column.to_string(),
            found: distinct.into_iter().take(10).map(str::to_string).collect(),
        });
    }
    let low = *distinct.iter().next().expect("two values");
    Ok(raw.iter().map(|s| u8::from(s != low)).collect())
}

/// Appends `count` junk predictors, each a random permutation of an original
/// column.
///
/// Source columns are drawn without replacement until all `p` are used, then
/// with replacement. The `k`-th junk column is named `<source>_junk_<k>`.
pub fn augment_junk(d: &Dataset, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidParam("junk count must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let p = d.p();
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let sources: Vec<usize> = (0..count)
        .map(|k| if k < p { order[k] } else { rng.gen_range(0..p) })
        .collect();

    let new_p = p + count;
    let mut junk_cols = Vec::with_capacity(count);
    for &src in &sources {
        let mut col = d.column(src);
        col.shuffle(&mut rng);
        junk_cols.push(col);
    }
    let mut features = Vec::with_capacity(d.n() * new_p);
    for i in 0..d.n() {
        features.extend_from_slice(d.row(i));
        features.extend(junk_cols.iter().map(|c| c[i]));
    }
    let mut names = d.feature_names().to_vec();
    names.extend(
        sources
            .iter()
            .enumerate()
            .map(|(k, &src)| format!("{}_junk_{}", d.feature_names()[src], k + 1)),
    );
    Dataset::new(features, d.labels().to_vec(), names)
}

/// A random partition of a dataset's rows.
#[derive(Clone, Debug)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    /// Source row indices of `train`, ascending.
    pub train_rows: Vec<usize>,
    /// Source row indices of `test`, ascending.
    pub test_rows: Vec<usize>,
}

/// Uniform random split with `round(fraction · n)` training rows.
pub fn train_test_split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    let n = d.n();
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::EmptySplit { n, fraction: train_fraction });
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::EmptySplit { n, fraction: train_fraction });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let mut train_rows = idx[..n_train].to_vec();
    let mut test_rows = idx[n_train..].to_vec();
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok(SplitPair {
        train: d.subset(&train_rows)?,
        test: d.subset(&test_rows)?,
        train_rows,
        test_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn toy(n: usize, p: usize) -> Dataset {
        let features = (0..n * p).map(|v| v as f64 * 0.5).collect();
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        Dataset::unnamed(features, labels, p).unwrap()
    }

    #[test]
    fn parses_three_row_file() {
        let csv = "a,b,y\n1,2,0\n3.5,-1,1\n0,0,1\n";
        let d = read_csv(Cursor::new(csv), &"y".into()).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.feature_names(), ["a", "b"]);
        assert_eq!(d.row(1), [3.5, -1.0]);
        assert_eq!(d.labels(), [0, 1, 1]);
    }

    #[test]
    fn label_column_by_index_keeps_feature_order() {
        let csv = "y,a,b\n1,2,3\n0,4,5\n";
        let d = read_csv(Cursor::new(csv), &LabelColumn::Index(0)).unwrap();
        assert_eq!(d.feature_names(), ["a", "b"]);
        assert_eq!(d.row(0), [2.0, 3.0]);
        assert_eq!(d.labels(), [1, 0]);
    }

    #[test]
    fn string_labels_map_by_sorted_order() {
        let csv = "a,class\n1,spam\n2,ham\n3,spam\n";
        let d = read_csv(Cursor::new(csv), &"class".into()).unwrap();
        assert_eq!(d.labels(), [1, 0, 1]);
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let csv = "a,b,y\n1,2,0\n3,oops,1\n";
        let err = read_csv(Cursor::new(csv), &"y".into()).unwrap_err();
        match err {
            Error::NonNumeric { row, ref column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn bad_label_columns_rejected() {
        let three = "a,y\n1,a\n2,b\n3,c\n";
        assert!(matches!(
            read_csv(Cursor::new(three), &"y".into()),
            Err(Error::BadLabels { .. })
        ));
        let one = "a,y\n1,a\n2,a\n";
        assert!(matches!(read_csv(Cursor::new(one), &"y".into()), Err(Error::BadLabels { .. })));
        assert!(matches!(
            read_csv(Cursor::new("a,y\n1,\n"), &"y".into()),
            Err(Error::MissingValue { .. })
        ));
        assert!(matches!(
            read_csv(Cursor::new("a,b\n1,0\n"), &"y".into()),
            Err(Error::NoLabelColumn(_))
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_csv("/nonexistent/definitely/missing.csv", &"y".into()).unwrap_err();
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = Dataset::unnamed(vec![0.1, -1e-300, 1.0 / 3.0, 12_345.678_9], vec![1, 0], 2).unwrap();
        let mut buf = Vec::new();
        d.write_csv_to(&mut buf, "y", &[]).unwrap();
        let back = read_csv(Cursor::new(buf), &"y".into()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn junk_augmentation_shape_and_names() {
        let d = toy(20, 57);
        let aug = augment_junk(&d, 50, 3).unwrap();
        assert_eq!(aug.p(), 107);
        assert_eq!(aug.labels(), d.labels());
        assert!(aug.feature_names()[57].contains("_junk_1"));
        // first 50 junk columns come from distinct sources
        let sources: BTreeSet<&str> = aug.feature_names()[57..]
            .iter()
            .map(|s| s.split("_junk_").next().unwrap())
            .collect();
        assert_eq!(sources.len(), 50);
        assert!(matches!(augment_junk(&d, 0, 1), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn junk_column_is_a_permutation_of_its_source() {
        let d = toy(30, 3);
        let aug = augment_junk(&d, 1, 11).unwrap();
        let name = &aug.feature_names()[3];
        let src = d.feature_names().iter().position(|n| name.starts_with(&format!("{n}_"))).unwrap();
        let mut a = d.column(src);
        let mut b = aug.column(3);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_eq!(augment_junk(&d, 1, 11).unwrap(), aug);
    }

    #[test]
    fn junk_beyond_p_reuses_sources() {
        let d = toy(10, 2);
        let aug = augment_junk(&d, 5, 0).unwrap();
        assert_eq!(aug.p(), 7);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = toy(10, 2);
        let s = train_test_split(&d, 0.8, 5).unwrap();
        assert_eq!((s.train.n(), s.test.n()), (8, 2));
        let again = train_test_split(&d, 0.8, 5).unwrap();
        assert_eq!(s.train_rows, again.train_rows);
        let mut all: Vec<usize> = s.train_rows.iter().chain(&s.test_rows).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(matches!(
            train_test_split(&toy(5, 1), 0.999, 1),
            Err(Error::EmptySplit { .. })
        ));
    }

    #[test]
    fn invalid_datasets_rejected() {
        assert!(Dataset::unnamed(vec![f64::NAN], vec![0], 1).is_err());
        assert!(Dataset::unnamed(vec![1.0], vec![2], 1).is_err());
        assert!(Dataset::unnamed(vec![1.0, 2.0], vec![0], 1).is_err());
        assert!(Dataset::unnamed(vec![], vec![], 1).is_err());
    }

    #[test]
    fn points_csv_drops_optional_label() {
        let with = read_points_csv("a,y,b\n1,0,2\n3,1,4\n".as_bytes(), Some("y")).unwrap();
        assert_eq!(with.feature_names(), ["a", "b"]);
        assert_eq!(with.row(1), [3.0, 4.0]);
        assert_eq!(with.labels(), [0, 0]);
        let without = read_points_csv("a,b\n1,2\n".as_bytes(), Some("y")).unwrap();
        assert_eq!(without.p(), 2);
        assert!(read_points_csv("a,b\n1,x\n".as_bytes(), None).is_err());
    }
}
