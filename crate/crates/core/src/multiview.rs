//! The 3n x 3n multiview matrix of pairwise fundamentals, its rank-3 factor
//! construction, and the spectral tools the solver is built on.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{fundamental_global, skew, CameraPose};
use crate::linalg;

/// Default relative threshold for counting singular values.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Relative threshold on the second singular value of the centered camera
/// centers below which a configuration is labeled collinear.
pub const COLLINEARITY_TOL: f64 = 1e-9;

const ASYMMETRY_TOL: f64 = 1e-6;

/// One estimated block `F_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    pub i: usize,
    pub j: usize,
    pub f: Matrix3<f64>,
}

/// Sparse collection of pairwise estimates, the index set of which is Ω.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairwiseEstimateSet {
    pub entries: Vec<PairEstimate>,
}

impl PairwiseEstimateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, i: usize, j: usize, f: Matrix3<f64>) {
        self.entries.push(PairEstimate { i, j, f });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One entry per unordered observed pair of `m`, with `i < j`.
    pub fn from_matrix(m: &MultiviewBlockMatrix) -> Self {
        let mut out = Self::new();
        for (i, j) in m.unordered_pairs() {
            out.insert(i, j, m.block(i, j));
        }
        out
    }
}

/// Dense 3n x 3n block matrix with a symmetric observation mask Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiviewBlockMatrix {
    n: usize,
    data: DMatrix<f64>,
    mask: Vec<bool>,
}

impl MultiviewBlockMatrix {
    pub fn zeros(n: usize) -> Self {
        MultiviewBlockMatrix {
            n,
            data: DMatrix::zeros(3 * n, 3 * n),
            mask: vec![false; n * n],
        }
    }

    /// Wraps dense data with a mask; the mask is symmetrized and its diagonal cleared.
    pub fn from_parts(n: usize, data: DMatrix<f64>, mut mask: Vec<bool>) -> Result<Self> {
        if data.nrows() != 3 * n || data.ncols() != 3 * n || mask.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {0}x{0} data and {1} mask entries, got {2}x{3} and {4}",
                3 * n,
                n * n,
                data.nrows(),
                data.ncols(),
                mask.len()
            )));
        }
        for i in 0..n {
            mask[i * n + i] = false;
            for j in (i + 1)..n {
                let on = mask[i * n + j] || mask[j * n + i];
                mask[i * n + j] = on;
                mask[j * n + i] = on;
            }
        }
        Ok(MultiviewBlockMatrix { n, data, mask })
    }

    /// Exact multiview matrix of fundamentals for `poses`, fully observed.
    pub fn from_poses(poses: &[CameraPose]) -> Self {
        let n = poses.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m.set_block(i, j, &fundamental_global(&poses[i], &poses[j]));
                    m.mask[i * n + j] = true;
                }
            }
        }
        m
    }

    /// Exact multiview matrix of essentials (intrinsics ignored).
    pub fn essentials_from_poses(poses: &[CameraPose]) -> Self {
        let calibrated: Vec<_> = poses.iter().map(|p| p.with_identity_intrinsics()).collect();
        Self::from_poses(&calibrated)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn block(&self, i: usize, j: usize) -> Matrix3<f64> {
        self.data.fixed_view::<3, 3>(3 * i, 3 * j).into_owned()
    }

    pub fn set_block(&mut self, i: usize, j: usize, b: &Matrix3<f64>) {
        self.data.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(b);
    }

    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Removes the unordered pair `{i, j}` from Ω and zeroes both blocks.
    pub fn remove_pair(&mut self, i: usize, j: usize) {
        let n = self.n;
        self.mask[i * n + j] = false;
        self.mask[j * n + i] = false;
        self.set_block(i, j, &Matrix3::zeros());
        self.set_block(j, i, &Matrix3::zeros());
    }

    /// Sets both orientations of a pair and marks it observed.
    pub fn set_pair(&mut self, i: usize, j: usize, f_ij: &Matrix3<f64>) {
        let n = self.n;
        self.set_block(i, j, f_ij);
        self.set_block(j, i, &f_ij.transpose());
        self.mask[i * n + j] = true;
        self.mask[j * n + i] = true;
    }

    /// Ordered pairs in Ω.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n * n)
            .filter(move |&k| self.mask[k])
            .map(move |k| (k / n, k % n))
    }

    /// Unordered pairs in Ω as `(i, j)` with `i < j`.
    pub fn unordered_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs().filter(|&(i, j)| i < j)
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Same data with every off-diagonal pair marked observed.
    pub fn with_full_mask(&self) -> Self {
        let n = self.n;
        let mask = (0..n * n).map(|k| k / n != k % n).collect();
        MultiviewBlockMatrix {
            n,
            data: self.data.clone(),
            mask,
        }
    }

    /// `||M - M^T||_F`.
    pub fn symmetry_residual(&self) -> f64 {
        (&self.data - self.data.transpose()).norm()
    }

    /// Applies `diag(s_1 I, ..., s_n I) M diag(s_1 I, ..., s_n I)`.
    pub fn scaled_by_cameras(&self, scales: &[f64]) -> Result<Self> {
        if scales.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} camera scales for {} cameras",
                scales.len(),
                self.n
            )));
        }
        let mut out = self.clone();
        for r in 0..3 * self.n {
            for c in 0..3 * self.n {
                out.data[(r, c)] *= scales[r / 3] * scales[c / 3];
            }
        }
        Ok(out)
    }

    pub fn rank_profile(&self, tol: f64) -> RankProfile {
        rank_profile(&self.data, tol)
    }
}

/// Builds the measurement matrix from pairwise estimates.
///
/// A pair given in one orientation only gets its transpose mirrored into the
/// other. Both orientations may be given if they agree up to transposition.
pub fn assemble(estimates: &PairwiseEstimateSet, n: usize) -> Result<MultiviewBlockMatrix> {
    let mut m = MultiviewBlockMatrix::zeros(n);
    let mut supplied = vec![false; n * n];
    for e in &estimates.entries {
        for index in [e.i, e.j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, n });
            }
        }
        if e.i == e.j {
            return Err(Error::Precondition(format!(
                "diagonal block ({0}, {0}) cannot be an estimate",
                e.i
            )));
        }
        supplied[e.i * n + e.j] = true;
    }
    for e in &estimates.entries {
        let (i, j) = (e.i, e.j);
        if supplied[j * n + i] {
            if let Some(other) = estimates.entries.iter().find(|o| o.i == j && o.j == i) {
                let mismatch = (other.f - e.f.transpose()).norm();
                if mismatch > ASYMMETRY_TOL * e.f.norm() {
                    return Err(Error::AsymmetricPair { i, j, mismatch });
                }
            }
            // Both present and consistent: each orientation keeps its own values.
            m.set_block(i, j, &e.f);
            m.mask[i * n + j] = true;
        } else {
            m.set_pair(i, j, &e.f);
        }
    }
    Ok(m)
}

/// Factors `U`, `V` (each 3n x 3) with `A = U V^T` and `F = A + A^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl FactorPair {
    pub fn product(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }

    pub fn u_block(&self, i: usize) -> Matrix3<f64> {
        self.u.fixed_view::<3, 3>(3 * i, 0).into_owned()
    }

    pub fn v_block(&self, i: usize) -> Matrix3<f64> {
        self.v.fixed_view::<3, 3>(3 * i, 0).into_owned()
    }
}

/// `U_i = K_i^{-T} R_i^T T_i`, `V_i = K_i^{-T} R_i^T`, with `T_i` the cross
/// matrix of camera center `i` measured from the centroid of all centers.
///
/// `F` does not depend on where the origin sits, but `A` does: centering
/// makes `V^T U = 0` for calibrated cameras and puts the origin on the line
/// of collinear centers, where `rank(A) <= 2`.
pub fn build_factors(poses: &[CameraPose]) -> Result<FactorPair> {
    if poses.len() < 2 {
        return Err(Error::Precondition(format!(
            "factor construction needs at least 2 cameras, got {}",
            poses.len()
        )));
    }
    let n = poses.len();
    let centroid = poses.iter().map(|p| p.center()).sum::<Vector3<f64>>() / n as f64;
    let mut u = DMatrix::zeros(3 * n, 3);
    let mut v = DMatrix::zeros(3 * n, 3);
    for (i, pose) in poses.iter().enumerate() {
        let vi = pose.intrinsics_inverse().transpose() * pose.rotation().transpose();
        let ui = vi * skew(&(pose.center() - centroid));
        u.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&ui);
        v.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&vi);
    }
    Ok(FactorPair { u, v })
}

/// Whether the camera centers lie on a common line (test labeling only).
pub fn is_collinear(centers: &[Vector3<f64>]) -> bool {
    collinearity_ratio(centers) < COLLINEARITY_TOL
}

/// `sigma_2 / sigma_1` of the centered 3 x n center matrix (0 for coincident centers).
pub fn collinearity_ratio(centers: &[Vector3<f64>]) -> f64 {
    if centers.len() < 3 {
        return 0.0;
    }
    let mean = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let m = DMatrix::from_fn(3, centers.len(), |r, c| centers[c][r] - mean[r]);
    let sv = sorted_singular_values(&m);
    if sv[0] == 0.0 {
        0.0
    } else {
        sv[1] / sv[0]
    }
}

/// Thin SVD with singular values in descending order and a deterministic sign:
/// each left singular vector has its largest-magnitude entry positive.
#[derive(Debug, Clone)]
pub struct OrderedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl OrderedSvd {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let (u, s, v_t) = linalg::thin_svd(m);
        let k = s.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let mut u_sorted = DMatrix::zeros(u.nrows(), k);
        let mut v_sorted = DMatrix::zeros(k, v_t.ncols());
        let mut s_sorted = DVector::zeros(k);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = u.column(src).into_owned();
            let mut row = v_t.row(src).into_owned();
            let pivot = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                col.neg_mut();
                row.neg_mut();
            }
            u_sorted.set_column(dst, &col);
            v_sorted.set_row(dst, &row);
            s_sorted[dst] = s[src];
        }
        OrderedSvd {
            u: u_sorted,
            singular_values: s_sorted,
            v_t: v_sorted,
        }
    }

    /// Reconstruction from the leading `r` triplets.
    pub fn truncated(&self, r: usize) -> DMatrix<f64> {
        let r = r.min(self.singular_values.len());
        let us = self.u.columns(0, r) * DMatrix::from_diagonal(&self.singular_values.rows(0, r).into_owned());
        us * self.v_t.rows(0, r)
    }
}

pub fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s = linalg::singular_values(m);
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Best rank-`r` approximation in the Frobenius norm.
pub fn svp(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    assert!(r >= 1, "svp target rank must be at least 1");
    if m.is_empty() {
        return m.clone();
    }
    OrderedSvd::new(m).truncated(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankProfile {
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

impl RankProfile {
    /// `sigma_{k+1} / sigma_k` using 1-based `k`; zero if `sigma_k` is zero.
    pub fn gap_ratio(&self, k: usize) -> f64 {
        let (a, b) = (self.singular_values[k - 1], self.singular_values[k]);
        if a == 0.0 {
            0.0
        } else {
            b / a
        }
    }
}

/// Singular values (descending) and how many reach `tol * sigma_1`.
pub fn rank_profile(m: &DMatrix<f64>, tol: f64) -> RankProfile {
    assert!(tol > 0.0 && tol < 1.0, "rank tolerance must lie in (0, 1)");
    let singular_values = sorted_singular_values(m);
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = if top == 0.0 {
        0
    } else {
        singular_values.iter().filter(|&&s| s >= tol * top).count()
    };
    RankProfile {
        rank,
        singular_values,
    }
}

/// `sigma_3 / sigma_2` of a single 3x3 block (0 when `sigma_2` vanishes).
pub fn rank2_ratio(b: &Matrix3<f64>) -> f64 {
    let mut s: Vec<f64> = b.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    if s[1] == 0.0 {
        0.0
    } else {
        s[2] / s[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rank2Stats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
}

/// Statistics of `sigma_3 / sigma_2` over the observed blocks.
pub fn block_rank2_ratio(m: &MultiviewBlockMatrix) -> Rank2Stats {
    let ratios: Vec<f64> = m.pairs().map(|(i, j)| rank2_ratio(&m.block(i, j))).collect();
    if ratios.is_empty() {
        return Rank2Stats {
            mean: 0.0,
            median: 0.0,
            max: 0.0,
            count: 0,
        };
    }
    Rank2Stats {
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        median: median(&ratios),
        max: ratios.iter().copied().fold(0.0, f64::max),
        count: ratios.len(),
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
