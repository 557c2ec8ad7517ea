//! RVFL-family classifiers: plain RVFL, RVFL without direct links (ELM), and
//! the two robust variants that reweight samples by contribution score.

mod io;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{apply_normalization, fit_normalization, one_hot, Dataset, NormalizationParams};
use crate::error::{Error, Result};
use crate::kernel::CenterScheme;
use crate::ridge::{solve_auto, SolveRequest};
use crate::weighting::{compute_scores, ContributionScores, WeightingConfig};

pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "rvfl")]
    Rvfl,
    /// RVFL with the direct input-to-output links removed.
    #[serde(rename = "elm")]
    Elm,
    /// Robust RVFL with kernel-mean class centers.
    #[serde(rename = "r2vfl-a")]
    R2vflA,
    /// Robust RVFL with median class centers.
    #[serde(rename = "r2vfl-m")]
    R2vflM,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Rvfl, Variant::Elm, Variant::R2vflA, Variant::R2vflM];

    pub fn direct_link(self) -> bool {
        self != Variant::Elm
    }

    pub fn is_robust(self) -> bool {
        self.center_scheme().is_some()
    }

    pub fn center_scheme(self) -> Option<CenterScheme> {
        match self {
            Variant::R2vflA => Some(CenterScheme::Average),
            Variant::R2vflM => Some(CenterScheme::Median),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Rvfl => "rvfl",
            Variant::Elm => "elm",
            Variant::R2vflA => "r2vfl-a",
            Variant::R2vflM => "r2vfl-m",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rvfl" => Ok(Variant::Rvfl),
            "elm" | "rvflwodl" => Ok(Variant::Elm),
            "r2vfl-a" | "r2vfla" => Ok(Variant::R2vflA),
            "r2vfl-m" | "r2vflm" => Ok(Variant::R2vflM),
            _ => Err(Error::InvalidConfig(format!(
                "unknown variant {s:?} (expected rvfl, elm, r2vfl-a or r2vfl-m)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::InvalidConfig(format!("unknown activation {s:?}"))),
        }
    }
}

/// Hyperparameters of one model. `weighting` is only used by the robust
/// variants, and its center scheme must match the variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden_nodes: usize,
    /// Output-layer regularization; larger means weaker shrinkage.
    pub gamma: f64,
    pub activation: Activation,
    pub seed: u64,
    pub weighting: WeightingConfig,
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            hidden_nodes: 103,
            gamma: 1.0,
            activation: Activation::default(),
            seed: 0,
            weighting: WeightingConfig::new(variant.center_scheme().unwrap_or(CenterScheme::Average)),
        }
    }

    /// Switches variant, keeping the weighting scheme consistent with it.
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        if let Some(scheme) = variant.center_scheme() {
            self.weighting.center_scheme = scheme;
        }
        self
    }

    pub fn direct_link(&self) -> bool {
        self.variant.direct_link()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_nodes == 0 {
            return Err(Error::InvalidConfig("hidden_nodes must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if let Some(scheme) = self.variant.center_scheme() {
            self.weighting.validate()?;
            if self.weighting.center_scheme != scheme {
                return Err(Error::InvalidConfig(format!(
                    "variant {} requires the {:?} center scheme",
                    self.variant, scheme
                )));
            }
        }
        Ok(())
    }
}

/// Fixed random input-to-hidden weights `W1` (n x L) and per-node biases.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomLayer {
    pub input_weights: DMatrix<f64>,
    pub bias: Vec<f64>,
}

impl RandomLayer {
    pub fn n_inputs(&self) -> usize {
        self.input_weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.input_weights.ncols()
    }
}

/// Uniform `[-1, 1]` weights and biases from a ChaCha8 stream seeded with
/// `seed`; weights are drawn node by node, then the biases.
pub fn init_random_layer(n_inputs: usize, hidden_nodes: usize, seed: u64) -> Result<RandomLayer> {
    if n_inputs == 0 || hidden_nodes == 0 {
        return Err(Error::InvalidConfig(format!(
            "random layer needs positive sizes, got {n_inputs} x {hidden_nodes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_weights = DMatrix::from_fn(n_inputs, hidden_nodes, |_, _| rng.random_range(-1.0..=1.0));
    let bias = (0..hidden_nodes).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok(RandomLayer {
        input_weights,
        bias,
    })
}

/// `Psi(X W1 + B1)` with the bias row repeated for every sample.
pub fn hidden_matrix(x: &DMatrix<f64>, layer: &RandomLayer, activation: Activation) -> Result<DMatrix<f64>> {
    if x.ncols() != layer.n_inputs() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} features, random layer expects {}",
            x.ncols(),
            layer.n_inputs()
        )));
    }
    let mut h = x * &layer.input_weights;
    for (k, mut col) in h.column_iter_mut().enumerate() {
        let b = layer.bias[k];
        col.apply(|z| *z = activation.apply(*z + b));
    }
    Ok(h)
}

/// `[X A1]` when `direct_link` is set, otherwise `A1` alone.
pub fn design_matrix(x: &DMatrix<f64>, a1: &DMatrix<f64>, direct_link: bool) -> Result<DMatrix<f64>> {
    if x.nrows() != a1.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} rows, hidden matrix {}",
            x.nrows(),
            a1.nrows()
        )));
    }
    if !direct_link {
        return Ok(a1.clone());
    }
    let (l, n, h) = (x.nrows(), x.ncols(), a1.ncols());
    let mut d = DMatrix::zeros(l, n + h);
    d.columns_mut(0, n).copy_from(x);
    d.columns_mut(n, h).copy_from(a1);
    Ok(d)
}

/// A fitted classifier; immutable and safe to share between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub random_layer: RandomLayer,
    /// `W2`, `(n + L) x m` with direct links or `L x m` without.
    pub output_weights: DMatrix<f64>,
    pub normalization: NormalizationParams,
    pub config: ModelConfig,
    pub class_names: Vec<String>,
    /// Training-sample scores of the robust variants.
    pub scores: Option<ContributionScores>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: DMatrix<f64>,
    pub labels: Vec<usize>,
}

/// Row-wise argmax, lowest index on ties.
pub fn argmax_rows(scores: &DMatrix<f64>) -> Vec<usize> {
    scores
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.normalization.n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Design matrix for raw (unnormalized) inputs.
    pub fn design(&self, x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let x = apply_normalization(x_raw, &self.normalization)?;
        let a1 = hidden_matrix(&x, &self.random_layer, self.config.activation)?;
        design_matrix(&x, &a1, self.config.direct_link())
    }

    pub fn predict(&self, x_raw: &DMatrix<f64>) -> Result<Prediction> {
        let scores = self.design(x_raw)? * &self.output_weights;
        let labels = argmax_rows(&scores);
        Ok(Prediction { scores, labels })
    }
}

pub fn predict(model: &TrainedModel, x_raw: &DMatrix<f64>) -> Result<Prediction> {
    model.predict(x_raw)
}

/// Fits normalization, the random layer and (for the robust variants) the
/// contribution scores, then solves for the output weights.
pub fn train(dataset: &Dataset, config: &ModelConfig) -> Result<TrainedModel> {
    fit(dataset, config, None)
}

/// Trains a robust variant with caller-supplied contribution scores in place
/// of the computed ones. Scores may be 0 (sample removed) up to 1.
pub fn train_with_scores(
    dataset: &Dataset,
    config: &ModelConfig,
    scores: ContributionScores,
) -> Result<TrainedModel> {
    if !config.variant.is_robust() {
        return Err(Error::InvalidConfig(format!(
            "variant {} does not use contribution scores",
            config.variant
        )));
    }
    if scores.len() != dataset.n_samples() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} samples",
            scores.len(),
            dataset.n_samples()
        )));
    }
    if let Some(bad) = scores.r.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidData(format!("contribution score {bad} outside [0, 1]")));
    }
    fit(dataset, config, Some(scores))
}

fn fit(dataset: &Dataset, config: &ModelConfig, scores: Option<ContributionScores>) -> Result<TrainedModel> {
    config.validate()?;
    let normalization = fit_normalization(dataset.features())?;
    let x = apply_normalization(dataset.features(), &normalization)?;
    let random_layer = init_random_layer(dataset.n_features(), config.hidden_nodes, config.seed)?;
    let a1 = hidden_matrix(&x, &random_layer, config.activation)?;
    let mut design = design_matrix(&x, &a1, config.direct_link())?;
    drop(a1);
    let mut targets = one_hot(dataset.labels(), dataset.n_classes())?;

    let scores = match (config.variant.is_robust(), scores) {
        (false, _) => None,
        (true, Some(s)) => Some(s),
        (true, None) => Some(compute_scores(&dataset.with_features(x)?, &config.weighting)?),
    };
    if let Some(s) = &scores {
        for (i, &r) in s.r.iter().enumerate() {
            design.row_mut(i).scale_mut(r);
            targets.row_mut(i).scale_mut(r);
        }
    }

    let output_weights = solve_auto(SolveRequest::new(&design, &targets, config.gamma)?)?;
    Ok(TrainedModel {
        random_layer,
        output_weights,
        normalization,
        config: *config,
        class_names: dataset.class_names().to_vec(),
        scores,
    })
}
