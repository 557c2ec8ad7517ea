//! Tabular classification datasets: CSV loading, min-max normalization,
//! one-hot targets and stratified fold assignment.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature matrix (rows are samples) with integer labels in `0..class_names.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    name: String,
}

impl Dataset {
    /// Builds a dataset, checking that it has at least two samples, one
    /// feature, two classes, finite features and that every class occurs.
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        name: impl Into<String>,
    ) -> Result<Self> {
        let ds = Self::unchecked(features, labels, class_names, name.into())?;
        if ds.n_samples() < 2 {
            return Err(Error::InvalidData(format!(
                "dataset needs at least 2 samples, got {}",
                ds.n_samples()
            )));
        }
        if ds.n_classes() < 2 {
            return Err(Error::InvalidData(
                "single class: at least 2 distinct labels are required".into(),
            ));
        }
        let counts = ds.class_counts();
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidData(format!(
                "class {:?} has no samples",
                ds.class_names[missing]
            )));
        }
        Ok(ds)
    }

    fn unchecked(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        name: String,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidData("dataset has no feature columns".into()));
        }
        if features.nrows() == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::InvalidData(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % features.nrows(), pos / features.nrows());
            return Err(Error::Cell {
                row: r + 1,
                column: c + 1,
                message: "non-finite feature value".into(),
            });
        }
        Ok(Self {
            features,
            labels,
            class_names,
            name,
        })
    }

    /// Rows selected by `indices`, in that order. The class list is kept
    /// whole, so a subset may lack some classes.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset {
            features,
            labels,
            class_names: self.class_names.clone(),
            name: self.name.clone(),
        }
    }

    /// Same samples and labels with replaced features (e.g. after normalization).
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Dataset> {
        Self::unchecked(
            features,
            self.labels.clone(),
            self.class_names.clone(),
            self.name.clone(),
        )
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Sample indices grouped by class id.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        class_members(&self.labels, self.n_classes())
    }
}

pub(crate) fn class_members(labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    members
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("last") {
            return Ok(LabelColumn::Last);
        }
        s.parse::<usize>().map(LabelColumn::Index).map_err(|_| {
            Error::InvalidConfig(format!(
                "label column must be \"last\" or a 0-based index, got {s:?}"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_column: LabelColumn,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: false,
            label_column: LabelColumn::Last,
        }
    }
}

/// Loads a comma-separated dataset. Labels are encoded by order of first
/// appearance; all other columns must be finite numbers.
pub fn load_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, options, name)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv(reader: impl std::io::Read, options: CsvOptions, name: String) -> Result<Dataset> {
    let table = read_table(reader, options.has_header, Some(options.label_column))?;
    let raw = table.labels.unwrap_or_default();
    let mut labels = Vec::with_capacity(raw.len());
    let mut class_names: Vec<String> = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    for field in raw {
        let next = class_names.len();
        let id = *class_ids.entry(field.clone()).or_insert_with(|| {
            class_names.push(field);
            next
        });
        labels.push(id);
    }
    if class_names.len() < 2 {
        return Err(Error::InvalidData(format!(
            "single class: only label {:?} present",
            class_names.first().map(String::as_str).unwrap_or("")
        )));
    }
    Dataset::new(table.features, labels, class_names, name)
}

/// Numeric columns of a CSV file, plus the raw label strings when a label
/// column is given.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub features: DMatrix<f64>,
    pub labels: Option<Vec<String>>,
}

pub fn load_table(path: impl AsRef<Path>, has_header: bool, label_column: Option<LabelColumn>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, has_header, label_column)
}

pub fn read_table(
    reader: impl std::io::Read,
    has_header: bool,
    label_column: Option<LabelColumn>,
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    let mut width = None;

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let ncols = record.len();
        let label_idx = match label_column {
            None => None,
            Some(LabelColumn::Last) => Some(ncols - 1),
            Some(LabelColumn::Index(i)) => Some(i),
        };
        if let Some(idx) = label_idx.filter(|&i| i >= ncols) {
            return Err(Error::Cell {
                row: line,
                column: idx + 1,
                message: format!("label column missing (row has {ncols} columns)"),
            });
        }
        if ncols < 1 + label_idx.is_some() as usize {
            return Err(Error::Cell {
                row: line,
                column: 1,
                message: "row has no feature columns".into(),
            });
        }
        match width {
            None => width = Some(ncols),
            Some(w) if w != ncols => {
                return Err(Error::Cell {
                    row: line,
                    column: ncols.min(w) + 1,
                    message: format!("expected {w} columns, found {ncols}"),
                })
            }
            _ => {}
        }

        for (col, field) in record.iter().enumerate() {
            if Some(col) == label_idx {
                labels.push(field.to_string());
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Cell {
                row: line,
                column: col + 1,
                message: format!("non-numeric feature value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row: line,
                    column: col + 1,
                    message: format!("non-finite feature value {field:?}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }

    let Some(width) = width else {
        return Err(Error::InvalidData("empty file: no data rows".into()));
    };
    let n_features = width - label_column.is_some() as usize;
    Ok(RawTable {
        features: DMatrix::from_row_slice(rows, n_features, &values),
        labels: label_column.map(|_| labels),
    })
}

/// Per-column minimum and range used for min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

impl NormalizationParams {
    pub fn n_features(&self) -> usize {
        self.min.len()
    }
}

/// Fits min-max scaling on `train`. Constant columns get range 1.
pub fn fit_normalization(train: &DMatrix<f64>) -> Result<NormalizationParams> {
    if train.nrows() == 0 {
        return Err(Error::InvalidData("cannot fit normalization on zero rows".into()));
    }
    let mut min = Vec::with_capacity(train.ncols());
    let mut range = Vec::with_capacity(train.ncols());
    for col in train.column_iter() {
        let lo = col.min();
        let hi = col.max();
        let r = hi - lo;
        min.push(lo);
        range.push(if r > 0.0 { r } else { 1.0 });
    }
    Ok(NormalizationParams { min, range })
}

/// Applies `(x - min) / range` column-wise. Values are not clipped.
pub fn apply_normalization(
    features: &DMatrix<f64>,
    params: &NormalizationParams,
) -> Result<DMatrix<f64>> {
    if features.ncols() != params.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, normalization expects {}",
            features.ncols(),
            params.n_features()
        )));
    }
    let mut out = features.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (lo, r) = (params.min[j], params.range[j]);
        col.apply(|v| *v = (*v - lo) / r);
    }
    Ok(out)
}

/// `{0, 1}` indicator targets, one row per label.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<DMatrix<f64>> {
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::InvalidData(format!(
            "label {bad} out of range for {n_classes} classes"
        )));
    }
    let mut y = DMatrix::zeros(labels.len(), n_classes);
    for (i, &label) in labels.iter().enumerate() {
        y[(i, label)] = 1.0;
    }
    Ok(y)
}

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of_sample: Vec<usize>,
    k: usize,
    seed: u64,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of_sample(&self) -> &[usize] {
        &self.fold_of_sample
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_sample.len())
            .filter(|&i| self.fold_of_sample[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_sample.len())
            .filter(|&i| self.fold_of_sample[i] != fold)
            .collect()
    }
}

/// Stratified fold assignment: each class is shuffled with a seeded
/// generator and dealt round-robin, continuing the deal across classes so
/// overall fold sizes also stay within one of each other.
pub fn stratified_k_fold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("fold count must be at least 2, got {k}")));
    }
    if k > dataset.n_samples() {
        return Err(Error::InvalidConfig(format!(
            "fold count {k} exceeds sample count {}",
            dataset.n_samples()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of_sample = vec![0; dataset.n_samples()];
    let mut next = 0;
    for mut members in dataset.class_members() {
        members.shuffle(&mut rng);
        for i in members {
            fold_of_sample[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment {
        fold_of_sample,
        k,
        seed,
    })
}
