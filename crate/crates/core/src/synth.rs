//! Seeded synthetic scenes, measurement corruption, and a normalized
//! eight-point estimator.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{depth, look_at, project, CameraPose};
use crate::multiview::{is_collinear, svp, MultiviewBlockMatrix, OrderedSvd};
use crate::solver::ScaleMatrix;

const MAX_SCENE_ATTEMPTS: usize = 100;
const CAMERA_RADIUS: f64 = 5.0;
const MIN_VISIBLE_DEPTH: f64 = 0.1;

/// RNG stream ids derived from one seed.
const STREAM_SCENE: u64 = 0;
const STREAM_CORRUPT: u64 = 1;
const STREAM_OBSERVE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Centers spread over a sphere around the scene.
    Sphere,
    /// Centers on a slightly wavy circle around the scene.
    Ring,
    /// Centers on a common line.
    Collinear,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Layout::Sphere),
            "ring" => Ok(Layout::Ring),
            "collinear" => Ok(Layout::Collinear),
            other => Err(Error::InvalidConfig {
                field: "layout".into(),
                message: format!("unknown layout `{other}` (expected sphere, ring, or collinear)"),
            }),
        }
    }
}

impl Layout {
    pub fn as_str(&self) -> &'static str {
        match self {
            Layout::Sphere => "sphere",
            Layout::Ring => "ring",
            Layout::Collinear => "collinear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub n_cameras: usize,
    pub n_points: usize,
    pub layout: Layout,
    /// Relative magnitude of entrywise block noise, or image-point noise in
    /// normalized units when correspondences are re-estimated.
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    pub missing_fraction: f64,
    /// Log-uniform range of the injected per-pair scale.
    pub scale_jitter: (f64, f64),
    pub seed: u64,
    /// Rescale every surviving block to unit Frobenius norm.
    pub unit_normalize: bool,
    /// Draw per-camera intrinsics instead of using the identity.
    pub random_intrinsics: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_cameras: 10,
            n_points: 50,
            layout: Layout::Sphere,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            missing_fraction: 0.0,
            scale_jitter: (0.2, 5.0),
            seed: 0,
            unit_normalize: true,
            random_intrinsics: false,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::InvalidConfig {
                field: field.into(),
                message,
            })
        };
        if self.n_cameras < 2 {
            return bad("n_cameras", format!("need at least 2 cameras, got {}", self.n_cameras));
        }
        for (field, value) in [
            ("outlier_fraction", self.outlier_fraction),
            ("missing_fraction", self.missing_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return bad(field, format!("must lie in [0, 1], got {value}"));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise_sigma", format!("must be a finite value >= 0, got {}", self.noise_sigma));
        }
        let (lo, hi) = self.scale_jitter;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("scale_jitter", format!("need 0 < low <= high, got ({lo}, {hi})"));
        }
        Ok(())
    }

    pub(crate) fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub poses: Vec<CameraPose>,
    pub points: Vec<Vector3<f64>>,
}

impl Scene {
    pub fn centers(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| *p.center()).collect()
    }

    pub fn is_collinear(&self) -> bool {
        is_collinear(&self.centers())
    }

    /// Projections of every point into camera `i`.
    pub fn observations(&self, i: usize) -> Result<Vec<Vector3<f64>>> {
        self.points.iter().map(|p| project(&self.poses[i], p)).collect()
    }
}

fn unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

fn point_in_ball(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            return v;
        }
    }
}

fn random_intrinsics(rng: &mut impl Rng) -> Matrix3<f64> {
    let f = rng.random_range(400.0..900.0);
    Matrix3::new(
        f,
        rng.random_range(-1.0..1.0),
        rng.random_range(300.0..340.0),
        0.0,
        f * rng.random_range(0.95..1.05),
        rng.random_range(220.0..260.0),
        0.0,
        0.0,
        1.0,
    )
}

fn draw_centers(config: &SceneConfig, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
    let n = config.n_cameras;
    match config.layout {
        Layout::Sphere => (0..n).map(|_| unit_vector(rng) * CAMERA_RADIUS).collect(),
        Layout::Ring => {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (0..n)
                .map(|k| {
                    let theta = phase
                        + std::f64::consts::TAU * (k as f64 + rng.random_range(-0.3..0.3)) / n as f64;
                    Vector3::new(
                        CAMERA_RADIUS * theta.cos(),
                        rng.random_range(-0.5..0.5),
                        CAMERA_RADIUS * theta.sin(),
                    )
                })
                .collect()
        }
        Layout::Collinear => {
            let dir = unit_vector(rng);
            let mut offset = unit_vector(rng);
            offset -= dir * dir.dot(&offset);
            let offset = offset.normalize() * CAMERA_RADIUS;
            (0..n)
                .map(|_| offset + dir * rng.random_range(-4.0..4.0))
                .collect()
        }
    }
}

/// Draws cameras around a unit ball of points, all looking at its center.
///
/// Sphere and ring layouts are redrawn until non-collinear; every point has
/// positive depth in every camera.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let mut rng = config.rng(STREAM_SCENE);
    let points: Vec<Vector3<f64>> = (0..config.n_points).map(|_| point_in_ball(&mut rng)).collect();
    for _ in 0..MAX_SCENE_ATTEMPTS {
        let centers = draw_centers(config, &mut rng);
        if config.layout != Layout::Collinear && config.n_cameras >= 3 && is_collinear(&centers) {
            continue;
        }
        let mut poses = Vec::with_capacity(centers.len());
        for c in &centers {
            let target = Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2));
            let r = look_at(c, &target, &unit_vector(&mut rng));
            let k = if config.random_intrinsics {
                random_intrinsics(&mut rng)
            } else {
                Matrix3::identity()
            };
            poses.push(CameraPose::new(r, *c, k)?);
        }
        let visible = poses
            .iter()
            .all(|pose| points.iter().all(|p| depth(pose, p) > MIN_VISIBLE_DEPTH));
        if visible {
            return Ok(Scene { poses, points });
        }
    }
    Err(Error::GeometryRetryExhausted {
        attempts: MAX_SCENE_ATTEMPTS,
    })
}

/// Pairs dropped and replaced during corruption, plus the scale relating
/// each surviving block to the truth (`F_hat_ij = mu_ij F_ij` without noise).
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionReport {
    pub outlier_pairs: Vec<(usize, usize)>,
    pub missing_pairs: Vec<(usize, usize)>,
    pub true_scales: ScaleMatrix,
}

fn gaussian_block(rng: &mut impl Rng) -> Matrix3<f64> {
    Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random rank-2 block with unit Frobenius norm.
pub fn random_rank2_block(rng: &mut impl Rng) -> Matrix3<f64> {
    let g = gaussian_block(rng);
    let m = DMatrix::from_column_slice(3, 3, g.as_slice());
    let r2 = svp(&m, 2);
    let b = Matrix3::from_column_slice(r2.as_slice());
    b / b.norm()
}

/// Scales, perturbs, drops, and replaces blocks of an exact multiview matrix.
///
/// Pairs are handled as unordered pairs `i < j`; the `(j, i)` block always
/// mirrors the transpose.
pub fn corrupt(
    f_true: &MultiviewBlockMatrix,
    config: &SceneConfig,
) -> Result<(MultiviewBlockMatrix, CorruptionReport)> {
    config.validate()?;
    let mut rng = config.rng(STREAM_CORRUPT);
    let n = f_true.n();
    let pairs: Vec<(usize, usize)> = f_true.unordered_pairs().collect();
    let m = pairs.len();
    let n_missing = (config.missing_fraction * m as f64).round() as usize;
    let n_outlier = ((config.outlier_fraction * m as f64).round() as usize).min(m - n_missing);

    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let missing: Vec<(usize, usize)> = {
        let mut v: Vec<_> = order[..n_missing].iter().map(|&k| pairs[k]).collect();
        v.sort();
        v
    };
    let outliers: Vec<(usize, usize)> = {
        let mut v: Vec<_> = order[n_missing..n_missing + n_outlier]
            .iter()
            .map(|&k| pairs[k])
            .collect();
        v.sort();
        v
    };

    let (lo, hi) = config.scale_jitter;
    let (log_lo, log_hi) = (lo.ln(), hi.ln());
    let mut f_hat = MultiviewBlockMatrix::zeros(n);
    let mut true_scales = ScaleMatrix::zeros(n);
    for &(i, j) in &pairs {
        // Draws happen for every pair so the stream does not depend on the split.
        let u: f64 = rng.random();
        let lambda = (log_lo + (log_hi - log_lo) * u).exp();
        let noise = gaussian_block(&mut rng);
        let outlier = random_rank2_block(&mut rng);
        if missing.binary_search(&(i, j)).is_ok() {
            continue;
        }
        let truth = f_true.block(i, j);
        let scaled = truth * lambda;
        let block = if outlier_pairs_contains(&outliers, i, j) {
            let magnitude = if config.unit_normalize { 1.0 } else { scaled.norm() };
            outlier * magnitude
        } else {
            let noisy = scaled + noise * (config.noise_sigma * scaled.norm() / 3.0);
            let norm = noisy.norm();
            let (block, mu) = if config.unit_normalize && norm > 0.0 {
                (noisy / norm, lambda / norm)
            } else {
                (noisy, lambda)
            };
            true_scales.set(i, j, mu);
            block
        };
        f_hat.set_pair(i, j, &block);
    }
    Ok((
        f_hat,
        CorruptionReport {
            outlier_pairs: outliers,
            missing_pairs: missing,
            true_scales,
        },
    ))
}

fn outlier_pairs_contains(outliers: &[(usize, usize)], i: usize, j: usize) -> bool {
    outliers.binary_search(&(i, j)).is_ok()
}

/// Noisy image observations of every scene point in every camera.
///
/// Noise is added to the inhomogeneous coordinates of each projection with
/// standard deviation `config.noise_sigma`.
pub fn observe(scene: &Scene, config: &SceneConfig) -> Result<Vec<Vec<Vector3<f64>>>> {
    let mut rng = config.rng(STREAM_OBSERVE);
    (0..scene.poses.len())
        .map(|i| {
            let clean = scene.observations(i)?;
            Ok(clean
                .into_iter()
                .map(|p| {
                    let dx: f64 = rng.sample(StandardNormal);
                    let dy: f64 = rng.sample(StandardNormal);
                    Vector3::new(p.x + config.noise_sigma * dx, p.y + config.noise_sigma * dy, 1.0)
                })
                .collect())
        })
        .collect()
}

/// Per-image similarity taking the points' centroid to the origin and the
/// largest remaining coordinate magnitude to 1.
///
/// Returns the normalized points and the 3x3 transform `T` with
/// `normalized = T * original`. A fundamental `F_norm` estimated between
/// normalized images de-normalizes as `T_a^T F_norm T_b`.
pub fn normalize_image_frame(
    images: &[Vec<Vector3<f64>>],
) -> Result<Vec<(Vec<Vector3<f64>>, Matrix3<f64>)>> {
    images
        .iter()
        .enumerate()
        .map(|(k, points)| {
            if points.is_empty() {
                return Err(Error::Precondition(format!("image {k} has no points")));
            }
            let inhom: Vec<(f64, f64)> = points.iter().map(|p| (p.x / p.z, p.y / p.z)).collect();
            let count = inhom.len() as f64;
            let cx = inhom.iter().map(|p| p.0).sum::<f64>() / count;
            let cy = inhom.iter().map(|p| p.1).sum::<f64>() / count;
            let extent = inhom
                .iter()
                .map(|p| (p.0 - cx).abs().max((p.1 - cy).abs()))
                .fold(0.0, f64::max);
            let s = if extent > 0.0 { 1.0 / extent } else { 1.0 };
            let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
            let normalized = inhom
                .iter()
                .map(|&(x, y)| Vector3::new(s * (x - cx), s * (y - cy), 1.0))
                .collect();
            Ok((normalized, t))
        })
        .collect()
}

/// Normalized eight-point estimate of `F` with `a^T F b = 0` for each
/// correspondence `(a, b)`, rank 2 and unit Frobenius norm.
pub fn eight_point(correspondences: &[(Vector3<f64>, Vector3<f64>)]) -> Result<Matrix3<f64>> {
    if correspondences.len() < 8 {
        return Err(Error::DegenerateConfiguration(format!(
            "eight-point needs at least 8 correspondences, got {}",
            correspondences.len()
        )));
    }
    let (left, right): (Vec<_>, Vec<_>) = correspondences.iter().cloned().unzip();
    let normalized = normalize_image_frame(&[left, right])?;
    let (pa, ta) = &normalized[0];
    let (pb, tb) = &normalized[1];

    // One extra zero row keeps the full right singular basis for exactly 8 rows.
    let rows = correspondences.len().max(9);
    let mut design = DMatrix::zeros(rows, 9);
    for (k, (a, b)) in pa.iter().zip(pb).enumerate() {
        for r in 0..3 {
            for c in 0..3 {
                design[(k, 3 * r + c)] = a[r] * b[c];
            }
        }
    }
    let svd = OrderedSvd::new(&design);
    let s = &svd.singular_values;
    if s[0] == 0.0 || s[7] < 1e-10 * s[0] {
        return Err(Error::DegenerateConfiguration(
            "design matrix has rank below 8".into(),
        ));
    }
    let null = svd.v_t.row(8);
    let f_norm = Matrix3::from_fn(|r, c| null[3 * r + c]);
    let f_norm = enforce_rank2(&f_norm);
    let f = ta.transpose() * f_norm * tb;
    Ok(canonical_sign(&(f / f.norm())))
}

fn enforce_rank2(f: &Matrix3<f64>) -> Matrix3<f64> {
    let m = DMatrix::from_column_slice(3, 3, f.as_slice());
    Matrix3::from_column_slice(svp(&m, 2).as_slice())
}

/// Flips `m` so its largest-magnitude entry is positive.
pub fn canonical_sign(m: &Matrix3<f64>) -> Matrix3<f64> {
    let pivot = m.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
    if pivot < 0.0 {
        -m
    } else {
        *m
    }
}

/// Eight-point re-estimation of every pair from noisy observations,
/// replacing the blocks of `f_hat` that are in Ω.
pub fn reestimate_pairs(
    scene: &Scene,
    config: &SceneConfig,
    f_hat: &MultiviewBlockMatrix,
) -> Result<MultiviewBlockMatrix> {
    let obs = observe(scene, config)?;
    let mut out = f_hat.clone();
    for (i, j) in f_hat.unordered_pairs().collect::<Vec<_>>() {
        let corr: Vec<_> = obs[i].iter().cloned().zip(obs[j].iter().cloned()).collect();
        let f = eight_point(&corr)?;
        out.set_pair(i, j, &f);
    }
    Ok(out)
}
