//! RBF kernel evaluation and the kernel-trick geometry used by the robust
//! weighting: feature-space distances, class centers and class radii.
//!
//! The center and radius routines take a precomputed kernel matrix over the
//! training samples and never look at the kernel function itself.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RBF kernel `exp(-gamma * |x - y|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma: f64,
}

impl KernelParams {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let p = Self { gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma > 0.0 && self.gamma.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "kernel gamma must be positive and finite, got {}",
                self.gamma
            )))
        }
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn rbf_kernel(x: &[f64], y: &[f64], params: KernelParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel arguments have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    params.validate()?;
    Ok((-params.gamma * sq_dist(x, y)).exp())
}

fn rows_of(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// `K[i][j] = k(a_i, b_j)` over the rows of `a` and `b`.
pub fn kernel_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, params: KernelParams) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "kernel inputs have {} and {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    params.validate()?;
    let n = a.ncols();
    let (ra, rb) = (rows_of(a), rows_of(b));
    let mut k = DMatrix::zeros(a.nrows(), b.nrows());
    for j in 0..b.nrows() {
        let yj = &rb[j * n..(j + 1) * n];
        for i in 0..a.nrows() {
            let xi = &ra[i * n..(i + 1) * n];
            k[(i, j)] = (-params.gamma * sq_dist(xi, yj)).exp();
        }
    }
    Ok(k)
}

/// Feature-space distance from a kernel value between two points whose
/// self-similarity is 1 (true for RBF).
pub fn distance_from_kernel_value(k: f64) -> f64 {
    (2.0 - 2.0 * k).max(0.0).sqrt()
}

/// `|theta(x) - theta(y)|` for the RBF feature map, via the kernel trick.
pub fn feature_space_distance(x: &[f64], y: &[f64], params: KernelParams) -> Result<f64> {
    rbf_kernel(x, y, params).map(distance_from_kernel_value)
}

/// How a class center is formed in feature space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterScheme {
    /// Mean of the mapped class members, handled implicitly by the kernel trick.
    Average,
    /// Coordinate-wise median of the class members' kernel rows `K(G_j, G_j)`.
    Median,
}

fn check_class(class: &[usize], k_train: &DMatrix<f64>) -> Result<()> {
    if class.is_empty() {
        return Err(Error::InvalidData("empty class".into()));
    }
    if let Some(&bad) = class.iter().find(|&&i| i >= k_train.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "sample index {bad} outside kernel matrix of size {}",
            k_train.nrows()
        )));
    }
    Ok(())
}

fn class_mean_self_similarity(class: &[usize], k_train: &DMatrix<f64>) -> f64 {
    let lj = class.len() as f64;
    let mut total = 0.0;
    for &a in class {
        for &b in class {
            total += k_train[(a, b)];
        }
    }
    total / (lj * lj)
}

fn average_center_distance(i: usize, class: &[usize], k_train: &DMatrix<f64>, self_term: f64) -> f64 {
    let lj = class.len() as f64;
    let cross: f64 = class.iter().map(|&k| k_train[(i, k)]).sum();
    (k_train[(i, i)] - 2.0 * cross / lj + self_term).max(0.0).sqrt()
}

/// Distance from sample `i` to the feature-space mean of `class`.
pub fn distance_to_average_center(i: usize, class: &[usize], k_train: &DMatrix<f64>) -> Result<f64> {
    check_class(class, k_train)?;
    if i >= k_train.nrows() {
        return Err(Error::DimensionMismatch(format!("sample index {i} out of range")));
    }
    let self_term = class_mean_self_similarity(class, k_train);
    Ok(average_center_distance(i, class, k_train, self_term))
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (left, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Coordinate-wise median of the rows of `k_class`, the class-to-class
/// kernel block. Even counts average the two middle values.
pub fn median_center(k_class: &DMatrix<f64>) -> Result<Vec<f64>> {
    if k_class.nrows() == 0 {
        return Err(Error::InvalidData("empty class".into()));
    }
    let mut buf = Vec::with_capacity(k_class.nrows());
    Ok(k_class
        .column_iter()
        .map(|col| {
            buf.clear();
            buf.extend(col.iter().copied());
            median_in_place(&mut buf)
        })
        .collect())
}

fn median_center_distance(i: usize, class: &[usize], center: &[f64], k_train: &DMatrix<f64>) -> f64 {
    class
        .iter()
        .zip(center)
        .map(|(&g, &c)| {
            let d = k_train[(i, g)] - c;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance between the projected sample `[K(x_i, g)]_{g in class}`
/// and a median center.
pub fn distance_to_median_center(
    i: usize,
    class: &[usize],
    center: &[f64],
    k_train: &DMatrix<f64>,
) -> Result<f64> {
    check_class(class, k_train)?;
    if center.len() != class.len() {
        return Err(Error::DimensionMismatch(format!(
            "center has {} components for a class of {}",
            center.len(),
            class.len()
        )));
    }
    if i >= k_train.nrows() {
        return Err(Error::DimensionMismatch(format!("sample index {i} out of range")));
    }
    Ok(median_center_distance(i, class, center, k_train))
}

#[derive(Debug, Clone, PartialEq)]
enum CenterData {
    /// `(1/l_j^2) * sum K(g, g')` over the class.
    Average(f64),
    Median(Vec<f64>),
}

/// Per-class centers and radii over one training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGeometry {
    scheme: CenterScheme,
    members: Vec<Vec<usize>>,
    centers: Vec<Option<CenterData>>,
    radii: Vec<f64>,
}

impl ClassGeometry {
    /// Builds centers for every class that has members; empty classes (possible
    /// in a training fold) get no center and radius 0.
    pub fn build(
        k_train: &DMatrix<f64>,
        labels: &[usize],
        n_classes: usize,
        scheme: CenterScheme,
    ) -> Result<Self> {
        if k_train.nrows() != labels.len() || k_train.ncols() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "kernel matrix {}x{} for {} samples",
                k_train.nrows(),
                k_train.ncols(),
                labels.len()
            )));
        }
        let members = crate::dataset::class_members(labels, n_classes);
        let centers: Vec<Option<CenterData>> = members
            .iter()
            .map(|class| {
                if class.is_empty() {
                    return Ok(None);
                }
                Ok(Some(match scheme {
                    CenterScheme::Average => {
                        CenterData::Average(class_mean_self_similarity(class, k_train))
                    }
                    CenterScheme::Median => {
                        CenterData::Median(median_center(&k_train.select_rows(class).select_columns(class))?)
                    }
                }))
            })
            .collect::<Result<_>>()?;
        let mut geometry = Self {
            scheme,
            members,
            centers,
            radii: vec![0.0; n_classes],
        };
        for j in 0..n_classes {
            geometry.radii[j] = geometry.members[j]
                .iter()
                .map(|&i| geometry.raw_distance(i, j, k_train))
                .fold(0.0, f64::max);
        }
        Ok(geometry)
    }

    fn raw_distance(&self, i: usize, class: usize, k_train: &DMatrix<f64>) -> f64 {
        let members = &self.members[class];
        match &self.centers[class] {
            Some(CenterData::Average(self_term)) => {
                average_center_distance(i, members, k_train, *self_term)
            }
            Some(CenterData::Median(center)) => median_center_distance(i, members, center, k_train),
            None => f64::NAN,
        }
    }

    /// Distance from training sample `i` to the center of `class`.
    pub fn distance(&self, i: usize, class: usize, k_train: &DMatrix<f64>) -> Result<f64> {
        if class >= self.members.len() || self.members[class].is_empty() {
            return Err(Error::InvalidData(format!("class {class} has no members")));
        }
        if i >= k_train.nrows() {
            return Err(Error::DimensionMismatch(format!("sample index {i} out of range")));
        }
        Ok(self.raw_distance(i, class, k_train))
    }

    pub fn scheme(&self) -> CenterScheme {
        self.scheme
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.members[class]
    }

    pub fn n_classes(&self) -> usize {
        self.members.len()
    }

    /// Largest member-to-center distance of each class.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// The median center of `class` (Median scheme only).
    pub fn median_center(&self, class: usize) -> Option<&[f64]> {
        match self.centers.get(class)? {
            Some(CenterData::Median(c)) => Some(c),
            _ => None,
        }
    }
}

/// Largest distance of a class member to its own class center.
pub fn class_radius(class: usize, geometry: &ClassGeometry) -> Result<f64> {
    match geometry.members.get(class) {
        Some(m) if !m.is_empty() => Ok(geometry.radii[class]),
        _ => Err(Error::InvalidData(format!("class {class} has no members"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_point_kernel(kab: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, kab, kab, 1.0])
    }

    #[test]
    fn rbf_examples() {
        let p = KernelParams::rbf(1.0).unwrap();
        assert_eq!(rbf_kernel(&[0.3, 0.4], &[0.3, 0.4], p).unwrap(), 1.0);
        assert_abs_diff_eq!(rbf_kernel(&[0.0, 0.0], &[1.0, 0.0], p).unwrap(), 0.367879, epsilon = 1e-6);
        let p = KernelParams::rbf(2f64.powi(-5)).unwrap();
        // |x - y|^2 = 16 + 16 = 32
        assert_abs_diff_eq!(rbf_kernel(&[0.0, 0.0], &[4.0, 4.0], p).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        assert!(rbf_kernel(&[0.0], &[0.0, 1.0], p).is_err());
        assert!(KernelParams::rbf(0.0).is_err());
    }

    #[test]
    fn kernel_matrix_shape_and_symmetry() {
        let a = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.5, 0.2, 0.9]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 1.0, 0.5]);
        let p = KernelParams::rbf(0.7).unwrap();
        let kaa = kernel_matrix(&a, &a, p).unwrap();
        assert!(kaa.diagonal().iter().all(|&v| v == 1.0));
        assert_eq!(kaa, kaa.transpose());
        let kab = kernel_matrix(&a, &b, p).unwrap();
        assert_eq!(kab, kernel_matrix(&b, &a, p).unwrap().transpose());
        assert_eq!(kab.column(0), kab.column(1));
        assert!(kernel_matrix(&a, &DMatrix::zeros(1, 3), p).is_err());
    }

    #[test]
    fn feature_distance_examples() {
        let p = KernelParams::rbf(1.0).unwrap();
        assert_eq!(feature_space_distance(&[0.2], &[0.2], p).unwrap(), 0.0);
        // sqrt(2 - 0.735758) by hand
        assert_abs_diff_eq!(distance_from_kernel_value(0.367879), 1.124385, epsilon = 1e-6);
        assert!(feature_space_distance(&[0.0], &[1e6], p).unwrap() <= 2f64.sqrt());
    }

    #[test]
    fn average_center_examples() {
        let k = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(distance_to_average_center(0, &[0], &k).unwrap(), 0.0);
        let k = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(distance_to_average_center(0, &[0, 1], &k).unwrap(), 0.0);
        let k = two_point_kernel(0.5);
        assert_abs_diff_eq!(distance_to_average_center(0, &[0, 1], &k).unwrap(), 0.5, epsilon = 1e-15);
        assert!(distance_to_average_center(0, &[], &k).is_err());
    }

    #[test]
    fn median_center_examples() {
        assert_eq!(median_center(&DMatrix::from_element(1, 1, 1.0)).unwrap(), vec![1.0]);
        let odd = DMatrix::from_column_slice(3, 1, &[0.2, 0.8, 0.5]);
        assert_eq!(median_center(&odd).unwrap(), vec![0.5]);
        let even = DMatrix::from_column_slice(2, 1, &[0.2, 0.8]);
        assert_abs_diff_eq!(median_center(&even).unwrap()[0], 0.5, epsilon = 1e-15);
        assert!(median_center(&DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn median_center_even_count_matches_sorted_enumeration() {
        let vals = [0.9, 0.1, 0.4, 0.7, 0.3, 0.6];
        let col = DMatrix::from_column_slice(6, 1, &vals);
        let mut sorted = vals.to_vec();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(median_center(&col).unwrap()[0], 0.5 * (sorted[2] + sorted[3]));
    }

    #[test]
    fn median_distance_examples() {
        let k = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(distance_to_median_center(0, &[0], &[1.0], &k).unwrap(), 0.0);
        // projected row of sample 2 against class {0, 1} is [0.9, 0.1]
        let k = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.9, 0.2, 1.0, 0.1, 0.9, 0.1, 1.0]);
        assert_abs_diff_eq!(
            distance_to_median_center(2, &[0, 1], &[0.5, 0.5], &k).unwrap(),
            0.32f64.sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(distance_to_median_center(2, &[0, 1], &[0.9, 0.1], &k).unwrap(), 0.0);
        assert!(distance_to_median_center(2, &[0, 1], &[0.5], &k).is_err());
    }

    #[test]
    fn radius_examples() {
        let k = DMatrix::from_element(1, 1, 1.0);
        let g = ClassGeometry::build(&k, &[0], 1, CenterScheme::Average).unwrap();
        assert_eq!(class_radius(0, &g).unwrap(), 0.0);

        let k = DMatrix::from_element(3, 3, 1.0);
        for scheme in [CenterScheme::Average, CenterScheme::Median] {
            let g = ClassGeometry::build(&k, &[0, 0, 0], 1, scheme).unwrap();
            assert_eq!(class_radius(0, &g).unwrap(), 0.0);
        }

        let g = ClassGeometry::build(&two_point_kernel(0.5), &[0, 0], 1, CenterScheme::Average).unwrap();
        assert_abs_diff_eq!(class_radius(0, &g).unwrap(), 0.5, epsilon = 1e-15);
        let g = ClassGeometry::build(&two_point_kernel(0.5), &[0, 0], 2, CenterScheme::Average).unwrap();
        assert!(class_radius(1, &g).is_err());
    }

    /// Degree-2 homogeneous polynomial kernel `(x.y)^2` and its explicit
    /// feature map `[x_a * x_b]_{a,b}`.
    fn poly_kernel(x: &[f64], y: &[f64]) -> f64 {
        let d: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        d * d
    }

    fn poly_features(x: &[f64]) -> Vec<f64> {
        x.iter().flat_map(|a| x.iter().map(move |b| a * b)).collect()
    }

    proptest! {
        #[test]
        fn average_center_matches_explicit_feature_map(
            pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 2..6),
            query in 0usize..6,
        ) {
            let l = pts.len();
            let query = query % l;
            let class: Vec<usize> = (0..l).collect();
            let k = DMatrix::from_fn(l, l, |i, j| poly_kernel(&pts[i], &pts[j]));
            let mapped: Vec<Vec<f64>> = pts.iter().map(|p| poly_features(p)).collect();
            let dim = mapped[0].len();
            let center: Vec<f64> = (0..dim)
                .map(|c| mapped.iter().map(|m| m[c]).sum::<f64>() / l as f64)
                .collect();
            let oracle = mapped[query]
                .iter()
                .zip(&center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let got = distance_to_average_center(query, &class, &k).unwrap();
            let scale = 1.0 + k.amax();
            prop_assert!((got * got - oracle * oracle).abs() <= 1e-10 * scale, "{got} vs {oracle}");
        }

        #[test]
        fn distance_symmetric_and_identity(
            x in prop::collection::vec(-3.0f64..3.0, 4),
            y in prop::collection::vec(-3.0f64..3.0, 4),
            gamma in 0.01f64..10.0,
        ) {
            let p = KernelParams::rbf(gamma).unwrap();
            let dxy = feature_space_distance(&x, &y, p).unwrap();
            let dyx = feature_space_distance(&y, &x, p).unwrap();
            prop_assert!((dxy - dyx).abs() <= 1e-12);
            prop_assert!(feature_space_distance(&x, &x, p).unwrap() <= 1e-12);
            prop_assert!(dxy < 2f64.sqrt() + 1e-12);
        }

        #[test]
        fn radius_bounds_member_distances(
            pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 2..12),
            labels in prop::collection::vec(0usize..2, 12),
            gamma in 0.1f64..8.0,
            median in any::<bool>(),
        ) {
            let l = pts.len();
            let labels = &labels[..l];
            let x = DMatrix::from_row_slice(l, 2, &pts.concat());
            let k = kernel_matrix(&x, &x, KernelParams::rbf(gamma).unwrap()).unwrap();
            let scheme = if median { CenterScheme::Median } else { CenterScheme::Average };
            let g = ClassGeometry::build(&k, labels, 2, scheme).unwrap();
            for j in 0..2 {
                for &i in g.members(j) {
                    let d = g.distance(i, j, &k).unwrap();
                    prop_assert!(d >= 0.0);
                    prop_assert!(d <= g.radii()[j]);
                }
            }
        }

        #[test]
        fn median_center_permutation_invariant(
            vals in prop::collection::vec(0.0f64..1.0, 16),
            rot in 0usize..4,
        ) {
            let k = DMatrix::from_row_slice(4, 4, &vals);
            let perm: Vec<usize> = (0..4).map(|i| (i + rot) % 4).collect();
            let permuted = k.select_rows(&perm).select_columns(&perm);
            let c = median_center(&k).unwrap();
            let cp = median_center(&permuted).unwrap();
            for (pos, &orig) in perm.iter().enumerate() {
                prop_assert_eq!(cp[pos], c[orig]);
            }
        }
    }
}
