//! Accuracy, stratified cross-validation, exhaustive grid search and
//! benchmark tables of accuracies with per-dataset ranks.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{apply_normalization, fit_normalization, stratified_k_fold, Dataset};
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::model::{train, train_with_scores, ModelConfig, Variant};
use crate::ranking::average_ranks_descending;
use crate::weighting::{ScoreBasis, WeightingConfig, TAU_GRID};

/// Percentage of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidData("accuracy of an empty prediction".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// SplitMix64 finalizer over the combined inputs; used to give every
/// (configuration, fold) its own random layer independent of run order.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Folds whose training part lacks a class; they are still evaluated.
    pub warnings: Vec<String>,
}

struct Fold {
    train: Dataset,
    test: Dataset,
}

fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<(Vec<Fold>, Vec<String>)> {
    let assignment = stratified_k_fold(dataset, k, seed)?;
    let mut warnings = Vec::new();
    let folds = (0..k)
        .map(|f| {
            let train = dataset.subset(&assignment.train_indices(f));
            if let Some(c) = train.class_counts().iter().position(|&c| c == 0) {
                warnings.push(format!(
                    "fold {}: class {:?} absent from training data",
                    f + 1,
                    dataset.class_names()[c]
                ));
            }
            Fold {
                train,
                test: dataset.subset(&assignment.test_indices(f)),
            }
        })
        .collect();
    Ok((folds, warnings))
}

fn fold_config(config: &ModelConfig, fold: usize) -> ModelConfig {
    ModelConfig {
        seed: derive_seed(config.seed, fold as u64, 0),
        ..*config
    }
}

fn evaluate_fold(fold: &Fold, config: &ModelConfig, basis: Option<&ScoreBasis>) -> Result<f64> {
    let model = match basis {
        Some(b) => train_with_scores(&fold.train, config, b.scores(config.weighting.tau_multiplier))?,
        None => train(&fold.train, config)?,
    };
    let pred = model.predict(fold.test.features())?;
    accuracy(&pred.labels, fold.test.labels())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// k-fold stratified cross-validation. The split depends on `seed`; the
/// random layer of fold `f` is seeded from `config.seed` and `f`.
pub fn cross_validate(dataset: &Dataset, config: &ModelConfig, k: usize, seed: u64) -> Result<CvResult> {
    config.validate()?;
    let (folds, warnings) = make_folds(dataset, k, seed)?;
    let fold_accuracies = folds
        .iter()
        .enumerate()
        .map(|(f, fold)| evaluate_fold(fold, &fold_config(config, f), None))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvResult {
        mean: mean(&fold_accuracies),
        fold_accuracies,
        warnings,
    })
}

/// Hyperparameter grids. The kernel and tau grids only apply to the robust
/// variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub gamma: Vec<f64>,
    pub hidden: Vec<usize>,
    pub kernel: Vec<f64>,
    pub tau: Vec<f64>,
    pub k: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            gamma: (-5..=5).map(|e| 10f64.powi(e)).collect(),
            hidden: (3..=203).step_by(20).collect(),
            kernel: (-5..=5).map(|e| 2f64.powi(e)).collect(),
            tau: TAU_GRID.to_vec(),
            k: 5,
            seed: 0,
        }
    }
}

impl GridSpec {
    /// A grid with one value per axis.
    pub fn single(gamma: f64, hidden: usize, kernel: f64, tau: f64) -> Self {
        Self {
            gamma: vec![gamma],
            hidden: vec![hidden],
            kernel: vec![kernel],
            tau: vec![tau],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("gamma", self.gamma.is_empty()),
            ("hidden", self.hidden.is_empty()),
            ("kernel", self.kernel.is_empty()),
            ("tau", self.tau.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidConfig(format!("{name} grid is empty")));
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("fold count must be at least 2, got {}", self.k)));
        }
        Ok(())
    }

    /// Number of configurations searched for `variant`.
    pub fn cardinality(&self, variant: Variant) -> usize {
        let base = self.gamma.len() * self.hidden.len();
        if variant.is_robust() {
            base * self.kernel.len() * self.tau.len()
        } else {
            base
        }
    }

    /// Every configuration in search order: gamma, then hidden nodes, then
    /// kernel width, then tau. Each gets a seed derived from the grid seed
    /// and its position.
    pub fn configs(&self, base: &ModelConfig) -> Vec<ModelConfig> {
        let robust = base.variant.is_robust();
        let kernels: &[f64] = if robust { &self.kernel } else { &[f64::NAN] };
        let taus: &[f64] = if robust { &self.tau } else { &[f64::NAN] };
        let mut out = Vec::with_capacity(self.cardinality(base.variant));
        for &gamma in &self.gamma {
            for &hidden_nodes in &self.hidden {
                for &kernel in kernels {
                    for &tau in taus {
                        let mut cfg = ModelConfig {
                            gamma,
                            hidden_nodes,
                            seed: derive_seed(self.seed, out.len() as u64, 1),
                            ..*base
                        };
                        if robust {
                            cfg.weighting = WeightingConfig {
                                kernel: KernelParams { gamma: kernel },
                                tau_multiplier: tau,
                                ..base.weighting
                            };
                        }
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub config: ModelConfig,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub best_config: ModelConfig,
    pub best_mean: f64,
    pub trace: Vec<TraceEntry>,
    pub warnings: Vec<String>,
}

/// Exhaustive search over `grid` for the variant of `base`, using one fold
/// split for every configuration. The highest mean accuracy wins; ties go to
/// the configuration seen first.
///
/// Work is spread over the current rayon pool; results do not depend on the
/// number of threads.
pub fn grid_search(dataset: &Dataset, base: &ModelConfig, grid: &GridSpec) -> Result<GridSearchResult> {
    grid.validate()?;
    let configs = grid.configs(base);
    for cfg in &configs {
        cfg.validate()?;
    }
    let (folds, warnings) = make_folds(dataset, grid.k, grid.seed)?;
    let k = folds.len();

    // Scores depend on the fold and kernel width only, so build them once
    // per pair instead of once per configuration.
    let bases: Vec<ScoreBasis> = if base.variant.is_robust() {
        let normalized = folds
            .iter()
            .map(|f| {
                let params = fit_normalization(f.train.features())?;
                apply_normalization(f.train.features(), &params)
            })
            .collect::<Result<Vec<_>>>()?;
        (0..grid.kernel.len() * k)
            .into_par_iter()
            .map(|idx| {
                let (ki, f) = (idx / k, idx % k);
                let wc = WeightingConfig {
                    kernel: KernelParams { gamma: grid.kernel[ki] },
                    ..base.weighting
                };
                let train = &folds[f].train;
                ScoreBasis::build(&normalized[f], train.labels(), train.n_classes(), &wc)
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let per_kernel = grid.tau.len();

    let accuracies: Vec<f64> = (0..configs.len() * k)
        .into_par_iter()
        .map(|idx| {
            let (ci, f) = (idx / k, idx % k);
            let basis = (!bases.is_empty()).then(|| {
                let ki = (ci / per_kernel) % grid.kernel.len();
                &bases[ki * k + f]
            });
            evaluate_fold(&folds[f], &fold_config(&configs[ci], f), basis)
        })
        .collect::<Result<_>>()?;

    let trace: Vec<TraceEntry> = configs
        .into_iter()
        .zip(accuracies.chunks(k))
        .map(|(config, accs)| TraceEntry {
            config,
            fold_accuracies: accs.to_vec(),
            mean: mean(accs),
        })
        .collect();
    let best = trace
        .iter()
        .enumerate()
        .fold(0, |best, (i, e)| if e.mean > trace[best].mean { i } else { best });
    Ok(GridSearchResult {
        best_config: trace[best].config,
        best_mean: trace[best].mean,
        trace,
        warnings,
    })
}

/// Accuracy (percent) of each model on each dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// One row per dataset, one column per model.
    pub accuracy: Vec<Vec<f64>>,
    /// An "Average Rank" row found in the source file, as printed there.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reported_ranks: Option<Vec<f64>>,
}

const SUMMARY_ACCURACY: &str = "Average Accuracy";
const SUMMARY_RANK: &str = "Average Rank";

impl BenchmarkTable {
    pub fn new(models: Vec<String>, datasets: Vec<String>, accuracy: Vec<Vec<f64>>) -> Result<Self> {
        if models.is_empty() || datasets.is_empty() {
            return Err(Error::InvalidData("benchmark table is empty".into()));
        }
        if accuracy.len() != datasets.len() || accuracy.iter().any(|r| r.len() != models.len()) {
            return Err(Error::DimensionMismatch(format!(
                "accuracy matrix does not match {} datasets x {} models",
                datasets.len(),
                models.len()
            )));
        }
        if accuracy.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidData("NaN accuracy in benchmark table".into()));
        }
        Ok(Self {
            models,
            datasets,
            accuracy,
            reported_ranks: None,
        })
    }

    pub fn model_index(&self, name: &str) -> Option<usize> {
        self.models.iter().position(|m| m.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, model: usize) -> Vec<f64> {
        self.accuracy.iter().map(|row| row[model]).collect()
    }

    /// Per-dataset ranks; 1 is the best accuracy, ties share the mean rank.
    pub fn rank_matrix(&self) -> Vec<Vec<f64>> {
        self.accuracy.iter().map(|row| average_ranks_descending(row)).collect()
    }

    pub fn average_accuracy(&self) -> Vec<f64> {
        (0..self.models.len()).map(|j| mean(&self.column(j))).collect()
    }

    /// Reads a table whose header is `dataset,<model>...`. An "Average
    /// Accuracy" row is skipped; an "Average Rank" row is kept in
    /// `reported_ranks` and not treated as a dataset.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let models: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut datasets = Vec::new();
        let mut accuracy = Vec::new();
        let mut reported = None;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let name = record.get(0).unwrap_or_default();
            if name == SUMMARY_ACCURACY {
                continue;
            }
            let row = record
                .iter()
                .enumerate()
                .skip(1)
                .map(|(col, cell)| {
                    cell.parse::<f64>().map_err(|_| Error::Cell {
                        row: line,
                        column: col + 1,
                        message: format!("non-numeric accuracy {cell:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if name == SUMMARY_RANK {
                reported = Some(row);
                continue;
            }
            datasets.push(name.to_string());
            accuracy.push(row);
        }
        let mut table = Self::new(models, datasets, accuracy)?;
        if let Some(r) = &reported {
            if r.len() != table.models.len() {
                return Err(Error::DimensionMismatch(format!(
                    "average rank row has {} values for {} models",
                    r.len(),
                    table.models.len()
                )));
            }
        }
        table.reported_ranks = reported;
        Ok(table)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    fn write_rows(
        &self,
        out: impl Write,
        rows: &[Vec<f64>],
        summary: &[(&str, Vec<f64>)],
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["dataset".to_string()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header)?;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>();
        for (name, row) in self.datasets.iter().zip(rows) {
            w.write_record(std::iter::once(name.clone()).chain(fmt(row)))?;
        }
        for (name, row) in summary {
            w.write_record(std::iter::once(name.to_string()).chain(fmt(row)))?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))
    }

    /// Accuracies to 4 decimals followed by the average accuracy and
    /// average rank rows.
    pub fn write_accuracy_csv(&self, out: impl Write) -> Result<()> {
        let summary = [
            (SUMMARY_ACCURACY, self.average_accuracy()),
            (SUMMARY_RANK, average_ranks(self)?),
        ];
        self.write_rows(out, &self.accuracy, &summary)
    }

    pub fn write_rank_csv(&self, out: impl Write) -> Result<()> {
        let summary = [(SUMMARY_RANK, average_ranks(self)?)];
        self.write_rows(out, &self.rank_matrix(), &summary)
    }
}

/// Mean per-dataset rank of every model.
pub fn average_ranks(table: &BenchmarkTable) -> Result<Vec<f64>> {
    if table.datasets.is_empty() || table.models.is_empty() {
        return Err(Error::InvalidData("benchmark table is empty".into()));
    }
    let ranks = table.rank_matrix();
    Ok((0..table.models.len())
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / ranks.len() as f64)
        .collect())
}
