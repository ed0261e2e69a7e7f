//! Downstream evaluation: translation directions from essential matrices,
//! robust location recovery, and the error metrics used to compare methods.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::unskew;
use crate::linalg;
use crate::multiview::median;

/// Relative threshold below which the skew part of `R_i E R_j^T` is treated as zero.
pub const SKEW_TOL: f64 = 1e-10;
/// IRLS floor for robust location recovery.
pub const DELTA_LOC: f64 = 1e-3;
/// Lower bound on pairwise distances, relative to their mean.
pub const D_MIN_FRACTION: f64 = 1e-6;
const MAX_LOCATION_IRLS: usize = 100;
const LOCATION_IRLS_TOL: f64 = 1e-10;

/// Unit directions `gamma_ij` of `t_i - t_j` in the global frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirectionSet {
    pub entries: BTreeMap<(usize, usize), Vector3<f64>>,
}

impl DirectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `gamma` normalized; `(j, i)` is implied as `-gamma`.
    pub fn insert(&mut self, i: usize, j: usize, gamma: Vector3<f64>) {
        let norm = gamma.norm();
        if i < j {
            self.entries.insert((i, j), gamma / norm);
        } else {
            self.entries.insert((j, i), -gamma / norm);
        }
    }

    /// Direction of `t_i - t_j`, if the pair is present in either order.
    pub fn get(&self, i: usize, j: usize) -> Option<Vector3<f64>> {
        if i < j {
            self.entries.get(&(i, j)).copied()
        } else {
            self.entries.get(&(j, i)).map(|g| -g)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Recovered camera centers with `sum t_i = 0` and mean pairwise distance one.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSolution {
    pub t: Vec<Vector3<f64>>,
    pub converged: bool,
    /// Weighted residual after each solve.
    pub residual_history: Vec<f64>,
}

/// Direction of `t_i - t_j` encoded by a global essential matrix.
///
/// The sign is fixed by cheirality when `bearings` are supplied: pairs of
/// rays `K_i^-1 x_i`, `K_j^-1 x_j` in the two camera frames. Without them
/// the returned vector has a positive z component (falling back to y, then x
/// when z vanishes).
pub fn extract_direction(
    e: &Matrix3<f64>,
    r_i: &Matrix3<f64>,
    r_j: &Matrix3<f64>,
    bearings: Option<&[(Vector3<f64>, Vector3<f64>)]>,
) -> Result<Vector3<f64>> {
    let e_norm = e.norm();
    if e_norm == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let m = r_i * e * r_j.transpose();
    let skew_part = (m - m.transpose()) * 0.5;
    if skew_part.norm() < SKEW_TOL * e_norm {
        return Err(Error::VanishingSkewPart);
    }
    let v = unskew(&skew_part).normalize();
    let sign = match bearings {
        Some(pairs) if !pairs.is_empty() => cheirality_sign(&v, r_i, r_j, pairs),
        _ => fallback_sign(&v),
    };
    Ok(v * sign)
}

fn fallback_sign(v: &Vector3<f64>) -> f64 {
    for k in [2, 1, 0] {
        if v[k].abs() > 1e-12 {
            return v[k].signum();
        }
    }
    1.0
}

/// Triangulates each ray pair against baseline `gamma` and counts points
/// in front of both cameras for `+gamma` versus `-gamma`.
fn cheirality_sign(
    gamma: &Vector3<f64>,
    r_i: &Matrix3<f64>,
    r_j: &Matrix3<f64>,
    pairs: &[(Vector3<f64>, Vector3<f64>)],
) -> f64 {
    let mut votes = 0i64;
    for (b_i, b_j) in pairs {
        let ray_i = r_i * b_i;
        let ray_j = r_j * b_j;
        // t_i + a ray_i = t_j + b ray_j  =>  b ray_j - a ray_i = t_i - t_j = gamma.
        let m = Matrix2::new(
            ray_i.dot(&ray_i),
            -ray_i.dot(&ray_j),
            -ray_i.dot(&ray_j),
            ray_j.dot(&ray_j),
        );
        let rhs = Vector2::new(-ray_i.dot(gamma), ray_j.dot(gamma));
        let Some(inv) = m.try_inverse() else { continue };
        let depths = inv * rhs;
        if depths[0] > 0.0 && depths[1] > 0.0 {
            votes += 1;
        } else if depths[0] < 0.0 && depths[1] < 0.0 {
            votes -= 1;
        }
    }
    if votes < 0 {
        -1.0
    } else if votes > 0 {
        1.0
    } else {
        fallback_sign(gamma)
    }
}

fn check_connected(directions: &DirectionSet, n: usize) -> Result<()> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in directions.entries.keys() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        parent[a] = b;
    }
    let root = find(&mut parent, 0);
    if (1..n).all(|k| find(&mut parent, k) == root) {
        Ok(())
    } else {
        Err(Error::DisconnectedGraph)
    }
}

/// Weighted least squares over `(t, d)` with `sum t = 0`, `sum d = m`, and
/// the distances listed in `clamped` held at `d_min`.
fn solve_locations(
    pairs: &[((usize, usize), Vector3<f64>)],
    weights: &[f64],
    n: usize,
    clamped: &[bool],
    d_min: f64,
) -> DVector<f64> {
    let m = pairs.len();
    let vars = 3 * n + m;
    let mut h = DMatrix::zeros(vars, vars);
    for (k, ((i, j), g)) in pairs.iter().enumerate() {
        // Residual rows: t_i - t_j - d_k g.
        let w = weights[k];
        for r in 0..3 {
            let idx = [(3 * i + r, 1.0), (3 * j + r, -1.0), (3 * n + k, -g[r])];
            for a in 0..3 {
                for b in 0..3 {
                    h[(idx[a].0, idx[b].0)] += w * idx[a].1 * idx[b].1;
                }
            }
        }
    }
    let n_clamped = clamped.iter().filter(|c| **c).count();
    let n_cons = 4 + n_clamped;
    let mut kkt = DMatrix::zeros(vars + n_cons, vars + n_cons);
    kkt.view_mut((0, 0), (vars, vars)).copy_from(&h);
    let mut rhs = DVector::zeros(vars + n_cons);
    let mut row = vars;
    for r in 0..3 {
        for i in 0..n {
            kkt[(row, 3 * i + r)] = 1.0;
            kkt[(3 * i + r, row)] = 1.0;
        }
        row += 1;
    }
    for k in 0..m {
        kkt[(row, 3 * n + k)] = 1.0;
        kkt[(3 * n + k, row)] = 1.0;
    }
    rhs[row] = m as f64;
    row += 1;
    for (k, _) in clamped.iter().enumerate().filter(|(_, c)| **c) {
        kkt[(row, 3 * n + k)] = 1.0;
        kkt[(3 * n + k, row)] = 1.0;
        rhs[row] = d_min;
        row += 1;
    }
    let sol = linalg::lstsq(&kkt, &rhs, 1e-13);
    sol.rows(0, vars).into_owned()
}

/// Recovers camera centers from pairwise directions.
///
/// Minimizes `sum w_ij ||(t_i - t_j) - d_ij gamma_ij||^2` over centers and
/// distances `d_ij >= d_min`; with `robust` the weights follow IRLS on the
/// residual norms.
pub fn recover_locations(
    directions: &DirectionSet,
    n: usize,
    robust: bool,
) -> Result<LocationSolution> {
    if n < 3 {
        return Err(Error::Precondition(format!(
            "location recovery needs at least 3 cameras, got {n}"
        )));
    }
    if let Some(&(i, j)) = directions.entries.keys().find(|(i, j)| *i >= n || *j >= n) {
        return Err(Error::IndexOutOfRange { index: i.max(j), n });
    }
    check_connected(directions, n)?;

    let pairs: Vec<((usize, usize), Vector3<f64>)> =
        directions.entries.iter().map(|(k, g)| (*k, *g)).collect();
    let m = pairs.len();
    let mut weights = vec![1.0; m];
    let mut residual_history = Vec::new();
    let mut converged = !robust;
    let mut x = DVector::zeros(3 * n + m);

    let passes = if robust { MAX_LOCATION_IRLS } else { 1 };
    for _ in 0..passes {
        let mut clamped = vec![false; m];
        loop {
            // Sum of distances is fixed to m, so their mean is one.
            x = solve_locations(&pairs, &weights, n, &clamped, D_MIN_FRACTION);
            let mut changed = false;
            for k in 0..m {
                if !clamped[k] && x[3 * n + k] < D_MIN_FRACTION {
                    clamped[k] = true;
                    changed = true;
                }
            }
            if clamped.iter().all(|c| *c) {
                return Err(Error::CollapseDetected);
            }
            if !changed {
                break;
            }
        }
        let residuals: Vec<f64> = pairs
            .iter()
            .enumerate()
            .map(|(k, ((i, j), g))| {
                let ti = x.fixed_rows::<3>(3 * i);
                let tj = x.fixed_rows::<3>(3 * j);
                (ti - tj - g * x[3 * n + k]).norm()
            })
            .collect();
        let total: f64 = residuals.iter().zip(&weights).map(|(r, w)| w * r * r).sum();
        let previous = residual_history.last().copied();
        residual_history.push(total);
        if !robust {
            break;
        }
        if let Some(prev) = previous {
            if (prev - total).abs() <= LOCATION_IRLS_TOL * prev.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        for (w, r) in weights.iter_mut().zip(&residuals) {
            *w = 1.0 / r.max(DELTA_LOC);
        }
    }

    let mut t: Vec<Vector3<f64>> = (0..n).map(|i| x.fixed_rows::<3>(3 * i).into_owned()).collect();
    normalize_gauge(&mut t)?;
    Ok(LocationSolution {
        t,
        converged,
        residual_history,
    })
}

fn mean_pairwise_distance(t: &[Vector3<f64>]) -> f64 {
    let n = t.len();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += (t[i] - t[j]).norm();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn normalize_gauge(t: &mut [Vector3<f64>]) -> Result<()> {
    let centroid = t.iter().sum::<Vector3<f64>>() / t.len() as f64;
    for p in t.iter_mut() {
        *p -= centroid;
    }
    let spread = mean_pairwise_distance(t);
    if !(spread > 0.0) {
        return Err(Error::CollapseDetected);
    }
    for p in t.iter_mut() {
        *p /= spread;
    }
    Ok(())
}

/// `100 * min(||A - B||, ||A + B||)` after scaling both to unit norm.
pub fn essential_error(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let (ua, ub) = (a / na, b / nb);
    Ok(100.0 * (ua - ub).norm().min((ua + ub).norm()))
}

/// Per-camera distances after the best similarity (no reflection) maps
/// `t_est` onto `t_ref`.
pub fn location_error(t_est: &[Vector3<f64>], t_ref: &[Vector3<f64>]) -> Result<Vec<f64>> {
    if t_est.len() != t_ref.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated and {} reference locations",
            t_est.len(),
            t_ref.len()
        )));
    }
    let n = t_est.len();
    if n < 3 {
        return Err(Error::Precondition(format!(
            "alignment needs at least 3 locations, got {n}"
        )));
    }
    let mu_e = t_est.iter().sum::<Vector3<f64>>() / n as f64;
    let mu_r = t_ref.iter().sum::<Vector3<f64>>() / n as f64;
    let var_e: f64 = t_est.iter().map(|p| (p - mu_e).norm_squared()).sum::<f64>() / n as f64;
    let var_r: f64 = t_ref.iter().map(|p| (p - mu_r).norm_squared()).sum::<f64>() / n as f64;
    if var_e.sqrt() < 1e-12 || var_r.sqrt() < 1e-12 {
        return Err(Error::DegenerateAlignment);
    }
    let mut cov = Matrix3::zeros();
    for (e, r) in t_est.iter().zip(t_ref) {
        cov += (r - mu_r) * (e - mu_e).transpose();
    }
    cov /= n as f64;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    let scale = (svd.singular_values.component_mul(&d.diagonal())).sum() / var_e;
    Ok(t_est
        .iter()
        .zip(t_ref)
        .map(|(e, r)| (mu_r + rotation * (e - mu_e) * scale - r).norm())
        .collect())
}

/// Paired comparison of per-trial errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Mean of `(e_other - e_ours) / e_other` over trials with a nonzero baseline.
    pub relative_improvement: f64,
    /// Fraction of trials with `e_ours < e_other`.
    pub improved_fraction: f64,
    /// Trials whose baseline was zero while ours was not.
    pub zero_baseline: Vec<usize>,
}

pub fn compare_methods(errors_ours: &[f64], errors_other: &[f64]) -> Result<Comparison> {
    if errors_ours.len() != errors_other.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} trials against {} baseline trials",
            errors_ours.len(),
            errors_other.len()
        )));
    }
    let trials = errors_ours.len();
    if trials == 0 {
        return Ok(Comparison {
            relative_improvement: 0.0,
            improved_fraction: 0.0,
            zero_baseline: Vec::new(),
        });
    }
    let mut ratio_sum = 0.0;
    let mut ratio_count = 0usize;
    let mut improved = 0usize;
    let mut zero_baseline = Vec::new();
    for (k, (&ours, &other)) in errors_ours.iter().zip(errors_other).enumerate() {
        if ours < other {
            improved += 1;
        }
        if other == 0.0 {
            if ours > 0.0 {
                zero_baseline.push(k);
            } else {
                ratio_count += 1;
            }
            continue;
        }
        ratio_sum += (other - ours) / other;
        ratio_count += 1;
    }
    Ok(Comparison {
        relative_improvement: if ratio_count > 0 { ratio_sum / ratio_count as f64 } else { 0.0 },
        improved_fraction: improved as f64 / trials as f64,
        zero_baseline,
    })
}

/// Summary of one trial's errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub essential_errors: Vec<f64>,
    pub location_errors: Vec<f64>,
    pub median_essential: f64,
    pub mean_essential: f64,
    pub median_location: f64,
    pub mean_location: f64,
}

impl ErrorReport {
    pub fn new(essential_errors: Vec<f64>, location_errors: Vec<f64>) -> Self {
        let mean = |v: &[f64]| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        Self {
            median_essential: median(&essential_errors),
            mean_essential: mean(&essential_errors),
            median_location: median(&location_errors),
            mean_location: mean(&location_errors),
            essential_errors,
            location_errors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{essential_global, CameraPose};
    use nalgebra::Rotation3;

    fn pose(rot: Vector3<f64>, center: Vector3<f64>) -> CameraPose {
        CameraPose::calibrated(*Rotation3::new(rot).matrix(), center).unwrap()
    }

    #[test]
    fn direction_of_unit_baseline() {
        let a = pose(Vector3::zeros(), Vector3::zeros());
        let b = pose(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        let e = essential_global(&a, &b);
        let v = extract_direction(&e, a.rotation(), b.rotation(), None).unwrap();
        assert!((v.abs() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-14);

        // A point in front of both cameras fixes the sign.
        let p = Vector3::new(0.5, 0.2, 4.0);
        let rays = vec![(p - a.center(), p - b.center())];
        let v = extract_direction(&e, a.rotation(), b.rotation(), Some(&rays)).unwrap();
        assert!((v - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-14);

        let v10 = extract_direction(&(e * 10.0), a.rotation(), b.rotation(), Some(&rays)).unwrap();
        assert!((v10 - v).norm() < 1e-14);
    }

    #[test]
    fn fallback_sign_prefers_positive_z() {
        let a = pose(Vector3::new(0.1, 0.2, 0.3), Vector3::new(0.0, 0.0, 1.0));
        let b = pose(Vector3::new(-0.2, 0.1, 0.0), Vector3::new(0.3, 0.1, -1.0));
        let v = extract_direction(&essential_global(&a, &b), a.rotation(), b.rotation(), None)
            .unwrap();
        assert!(v.z > 0.0);
        let w = extract_direction(&essential_global(&b, &a), b.rotation(), a.rotation(), None)
            .unwrap();
        assert!((v - w).norm() < 1e-12);
    }

    #[test]
    fn coincident_centers_have_no_direction() {
        let a = pose(Vector3::new(0.1, 0.0, 0.0), Vector3::new(1.0, 2.0, 3.0));
        let b = pose(Vector3::new(0.0, 0.4, 0.0), Vector3::new(1.0, 2.0, 3.0));
        let sym = Matrix3::new(1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 3.0);
        let e = a.rotation().transpose() * sym * b.rotation();
        assert_eq!(
            extract_direction(&e, a.rotation(), b.rotation(), None),
            Err(Error::VanishingSkewPart)
        );
        assert_eq!(
            extract_direction(&Matrix3::zeros(), a.rotation(), b.rotation(), None),
            Err(Error::ZeroMatrix)
        );
    }

    #[test]
    fn essential_error_examples() {
        let e = Matrix3::new(0.0, -1.0, 2.0, 1.0, 0.0, -3.0, -2.0, 3.0, 0.0);
        assert_eq!(essential_error(&e, &e).unwrap(), 0.0);
        assert!(essential_error(&e, &(e * -3.0)).unwrap() < 1e-12);
        let a = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let b = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!((essential_error(&a, &b).unwrap() - 100.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(essential_error(&a, &Matrix3::zeros()), Err(Error::ZeroMatrix));
    }

    #[test]
    fn alignment_removes_similarity_but_not_reflection() {
        let t_ref = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
            Vector3::new(0.0, 0.0, 3.0),
        ];
        let rot = Rotation3::new(Vector3::new(0.3, -0.7, 1.1));
        let moved: Vec<_> = t_ref
            .iter()
            .map(|p| rot * p * 2.5 + Vector3::new(4.0, -1.0, 0.5))
            .collect();
        assert!(location_error(&moved, &t_ref).unwrap().iter().all(|e| *e < 1e-10));

        let mirrored: Vec<_> = t_ref.iter().map(|p| Vector3::new(p.x, p.y, -p.z)).collect();
        let errs = location_error(&mirrored, &t_ref).unwrap();
        assert!(errs.iter().cloned().fold(0.0, f64::max) > 1e-3);

        let single = vec![Vector3::new(1.0, 1.0, 1.0); 4];
        assert_eq!(location_error(&single, &t_ref), Err(Error::DegenerateAlignment));
    }

    #[test]
    fn displaced_camera_error_is_local() {
        // Sphere points plus one camera at their centroid: displacing the
        // central camera exerts no moment, so only the translation leaks.
        let n = 20;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut t_ref: Vec<_> = (0..n)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                Vector3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        t_ref[3] = Vector3::zeros();
        let disp = 0.01;
        let mut t_est = t_ref.clone();
        t_est[3] += Vector3::new(disp, 0.0, 0.0);
        let errs = location_error(&t_est, &t_ref).unwrap();
        assert!((errs[3] - disp).abs() <= 2.0 * disp / n as f64);
        for (k, e) in errs.iter().enumerate() {
            if k != 3 {
                assert!(*e <= 2.0 * disp / n as f64);
            }
        }
    }

    #[test]
    fn compare_methods_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(
            compare_methods(&a, &a).unwrap(),
            Comparison {
                relative_improvement: 0.0,
                improved_fraction: 0.0,
                zero_baseline: vec![]
            }
        );
        let half: Vec<f64> = a.iter().map(|x| x / 2.0).collect();
        let c = compare_methods(&half, &a).unwrap();
        assert!((c.relative_improvement - 0.5).abs() < 1e-15);
        assert_eq!(c.improved_fraction, 1.0);

        let c = compare_methods(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!(c.zero_baseline, vec![0]);
        assert!((c.relative_improvement - 0.5).abs() < 1e-15);
        assert!(compare_methods(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn exact_directions(t: &[Vector3<f64>], pairs: &[(usize, usize)]) -> DirectionSet {
        let mut d = DirectionSet::new();
        for &(i, j) in pairs {
            d.insert(i, j, t[i] - t[j]);
        }
        d
    }

    #[test]
    fn exact_directions_recover_four_cameras() {
        let t = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(2.0, 0.1, 0.0),
            Vector3::new(0.3, 1.5, -0.2),
            Vector3::new(-0.4, 0.2, 1.8),
        ];
        let pairs: Vec<_> = (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j))).collect();
        for robust in [false, true] {
            let sol = recover_locations(&exact_directions(&t, &pairs), 4, robust).unwrap();
            let errs = location_error(&sol.t, &t).unwrap();
            assert!(errs.iter().cloned().fold(0.0, f64::max) < 1e-6);
            assert!(sol.residual_history.last().unwrap() < &1e-10);
            let centroid: Vector3<f64> = sol.t.iter().sum();
            assert!(centroid.norm() < 1e-12);
            assert!((mean_pairwise_distance(&sol.t) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_cameras_stay_collinear() {
        let t = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(3.0, 3.0, 0.0),
        ];
        let sol = recover_locations(&exact_directions(&t, &[(0, 1), (1, 2), (0, 2)]), 3, false)
            .unwrap();
        assert!(sol.residual_history[0] < 1e-20);
        let u = (sol.t[1] - sol.t[0]).normalize();
        let w = (sol.t[2] - sol.t[0]).normalize();
        // Collinear directions fix the line but not the spacing along it.
        assert!(u.cross(&w).norm() < 1e-10);
    }

    #[test]
    fn location_recovery_rejects_bad_graphs() {
        let t: Vec<_> = (0..4).map(|k| Vector3::new(k as f64, (k * k) as f64, 0.0)).collect();
        let d = exact_directions(&t, &[(0, 1), (2, 3)]);
        assert_eq!(recover_locations(&d, 4, false), Err(Error::DisconnectedGraph));
        assert!(matches!(recover_locations(&d, 2, false), Err(Error::Precondition(_))));
    }
}
