//! Per-sample contribution scores: neighborhood class probability times an
//! improved Huber weight on the distance to the sample's class center.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{distance_from_kernel_value, kernel_matrix, CenterScheme, ClassGeometry, KernelParams};

/// Threshold multipliers applied to each class radius.
pub const TAU_GRID: [f64; 5] = [0.5, 0.625, 0.75, 0.875, 1.0];

/// How the class-probability neighborhood radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum DeltaMode {
    Absolute(f64),
    /// The given quantile of all pairwise feature-space distances.
    Quantile(f64),
}

impl Default for DeltaMode {
    fn default() -> Self {
        DeltaMode::Quantile(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingConfig {
    pub delta: DeltaMode,
    pub tau_multiplier: f64,
    pub center_scheme: CenterScheme,
    pub kernel: KernelParams,
}

impl WeightingConfig {
    pub fn new(center_scheme: CenterScheme) -> Self {
        Self {
            delta: DeltaMode::default(),
            tau_multiplier: 1.0,
            center_scheme,
            kernel: KernelParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.tau_multiplier > 0.0 && self.tau_multiplier <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau multiplier must lie in (0, 1], got {}",
                self.tau_multiplier
            )));
        }
        match self.delta {
            DeltaMode::Absolute(v) if !(v > 0.0 && v.is_finite()) => Err(Error::InvalidConfig(
                format!("delta must be positive, got {v}"),
            )),
            DeltaMode::Quantile(q) if !(q > 0.0 && q < 1.0) => Err(Error::InvalidConfig(format!(
                "delta quantile must lie in (0, 1), got {q}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Class probability `cp`, Huber weight `m` and their product `r` per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionScores {
    pub cp: Vec<f64>,
    pub m: Vec<f64>,
    pub r: Vec<f64>,
}

impl ContributionScores {
    /// Every sample at full weight.
    pub fn ones(l: usize) -> Self {
        Self {
            cp: vec![1.0; l],
            m: vec![1.0; l],
            r: vec![1.0; l],
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

pub fn contribution_scores(cp: Vec<f64>, m: Vec<f64>) -> Result<ContributionScores> {
    if cp.len() != m.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} class probabilities but {} Huber weights",
            cp.len(),
            m.len()
        )));
    }
    let r = cp.iter().zip(&m).map(|(c, w)| c * w).collect();
    Ok(ContributionScores { cp, m, r })
}

/// `1` inside the threshold (inclusive), `tau / d` beyond it.
pub fn huber_weight(distance: f64, tau: f64) -> f64 {
    if distance <= tau {
        1.0
    } else {
        tau / distance
    }
}

/// Type-7 (linear interpolation) quantile of unsorted values.
fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    values[lo] + (values[hi] - values[lo]) * frac
}

fn pairwise_distances(k: &DMatrix<f64>) -> Vec<f64> {
    let l = k.nrows();
    let mut out = Vec::with_capacity(l * (l - 1) / 2);
    for j in 1..l {
        for i in 0..j {
            out.push(distance_from_kernel_value(k[(i, j)]));
        }
    }
    out
}

fn resolve_delta_from_kernel(k: &DMatrix<f64>, mode: DeltaMode) -> Result<f64> {
    match mode {
        DeltaMode::Absolute(v) => Ok(v),
        DeltaMode::Quantile(q) => {
            if k.nrows() < 2 {
                return Err(Error::InvalidData(
                    "quantile delta needs at least 2 samples".into(),
                ));
            }
            let mut d = pairwise_distances(k);
            // all-duplicate data has a zero quantile; keep the radius positive
            Ok(quantile(&mut d, q).max(f64::EPSILON))
        }
    }
}

/// Neighborhood radius for the class probability.
pub fn resolve_delta(dataset: &Dataset, config: &WeightingConfig) -> Result<f64> {
    config.validate()?;
    if let DeltaMode::Absolute(v) = config.delta {
        return Ok(v);
    }
    let k = kernel_matrix(dataset.features(), dataset.features(), config.kernel)?;
    resolve_delta_from_kernel(&k, config.delta)
}

fn class_probability_from_kernel(k: &DMatrix<f64>, labels: &[usize], delta: f64) -> Vec<f64> {
    let l = labels.len();
    (0..l)
        .map(|i| {
            let (mut same, mut total) = (0usize, 0usize);
            for j in 0..l {
                if distance_from_kernel_value(k[(i, j)]) <= delta {
                    total += 1;
                    if labels[j] == labels[i] {
                        same += 1;
                    }
                }
            }
            same as f64 / total as f64
        })
        .collect()
}

/// Fraction of each sample's feature-space neighborhood (itself included)
/// that shares its label.
pub fn class_probability(dataset: &Dataset, config: &WeightingConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let k = kernel_matrix(dataset.features(), dataset.features(), config.kernel)?;
    let delta = resolve_delta_from_kernel(&k, config.delta)?;
    Ok(class_probability_from_kernel(&k, dataset.labels(), delta))
}

fn huber_from_distances(own: &[f64], labels: &[usize], radii: &[f64], tau_multiplier: f64) -> Vec<f64> {
    own.iter()
        .zip(labels)
        .map(|(&d, &y)| {
            let radius = radii[y];
            if radius <= 0.0 {
                1.0
            } else {
                huber_weight(d, tau_multiplier * radius)
            }
        })
        .collect()
}

/// Huber weight of each sample from its distance to its own class center,
/// with threshold `tau_multiplier * radius` of that class.
pub fn huber_weights(
    dataset: &Dataset,
    geometry: &ClassGeometry,
    k_train: &DMatrix<f64>,
    config: &WeightingConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let own = dataset
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &y)| geometry.distance(i, y, k_train))
        .collect::<Result<Vec<_>>>()?;
    Ok(huber_from_distances(&own, dataset.labels(), geometry.radii(), config.tau_multiplier))
}

/// Everything about the scores that does not depend on the threshold
/// multiplier, so a sweep over tau reuses one kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBasis {
    cp: Vec<f64>,
    own_distance: Vec<f64>,
    labels: Vec<usize>,
    radii: Vec<f64>,
    delta: f64,
}

impl ScoreBasis {
    /// `features` should already be in the space the model trains on.
    pub fn build(
        features: &DMatrix<f64>,
        labels: &[usize],
        n_classes: usize,
        config: &WeightingConfig,
    ) -> Result<Self> {
        config.validate()?;
        let k = kernel_matrix(features, features, config.kernel)?;
        let delta = resolve_delta_from_kernel(&k, config.delta)?;
        let cp = class_probability_from_kernel(&k, labels, delta);
        let geometry = ClassGeometry::build(&k, labels, n_classes, config.center_scheme)?;
        let own_distance = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| geometry.distance(i, y, &k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cp,
            own_distance,
            labels: labels.to_vec(),
            radii: geometry.radii().to_vec(),
            delta,
        })
    }

    pub fn scores(&self, tau_multiplier: f64) -> ContributionScores {
        let m = huber_from_distances(&self.own_distance, &self.labels, &self.radii, tau_multiplier);
        let r = self.cp.iter().zip(&m).map(|(c, w)| c * w).collect();
        ContributionScores {
            cp: self.cp.clone(),
            m,
            r,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn own_distances(&self) -> &[f64] {
        &self.own_distance
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
}

/// Scores for every sample of `dataset` under `config`.
pub fn compute_scores(dataset: &Dataset, config: &WeightingConfig) -> Result<ContributionScores> {
    ScoreBasis::build(dataset.features(), dataset.labels(), dataset.n_classes(), config)
        .map(|b| b.scores(config.tau_multiplier))
}
