//! IRLS-ADMM recovery of a consistent multiview matrix `F = A + A^T` with
//! `rank(A) = 3` from scale-ambiguous, partial, and corrupted blocks.
//!
//! The outer IRLS loop turns the mixed L1/Frobenius objective into a
//! sequence of weighted least-squares problems. Each of those is solved by
//! ADMM on a split copy `B` of `A` that carries the rank constraint:
//!
//! ```text
//! A   <- closed-form minimizer given (Lambda, G = B + Gamma)
//! Lam <- per-pair least-squares scale given A_s = A + A^T
//! B   <- SVP(A - Gamma, 3)
//! Gam <- Gamma + (B - A)
//! ```

mod steps;

pub use steps::{
    augmented_lagrangian, block_residual, cost, update_a, update_b, update_gamma, update_lambda,
    update_weights, AUpdate, LambdaUpdate, DEGENERATE_BLOCK_NORM, FACTOR_RANK,
};

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraPose;
use crate::linalg;
use crate::multiview::{build_factors, MultiviewBlockMatrix};

/// Symmetric per-pair scale factors with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMatrix {
    lambda: DMatrix<f64>,
}

impl ScaleMatrix {
    pub fn zeros(n: usize) -> Self {
        ScaleMatrix {
            lambda: DMatrix::zeros(n, n),
        }
    }

    /// Ones on Ω, zero elsewhere.
    pub fn ones_on(mask_source: &MultiviewBlockMatrix) -> Self {
        let mut s = Self::zeros(mask_source.n());
        for (i, j) in mask_source.unordered_pairs() {
            s.set(i, j, 1.0);
        }
        s
    }

    pub fn n(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lambda[(i, j)]
    }

    /// Sets `lambda_ij = lambda_ji`; diagonal writes are ignored.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        if i != j {
            self.lambda[(i, j)] = value;
            self.lambda[(j, i)] = value;
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    /// 3n x 3n matrix with each scale replicated over its block.
    pub fn to_dense(&self) -> DMatrix<f64> {
        replicate(&self.lambda)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ScaleMatrix {
            lambda: &self.lambda * factor,
        }
    }
}

/// IRLS weights, one per ordered pair, zero outside Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn zeros(n: usize) -> Self {
        WeightMatrix {
            w: DMatrix::zeros(n, n),
        }
    }

    /// Unit weights on Ω.
    pub fn ones_on(mask_source: &MultiviewBlockMatrix) -> Self {
        let mut w = Self::zeros(mask_source.n());
        for (i, j) in mask_source.pairs() {
            w.set(i, j, 1.0);
        }
        w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.w[(i, j)] = value;
    }

    /// `sum_ij w_ij` over ordered pairs.
    pub fn total(&self) -> f64 {
        self.w.sum()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        replicate(&self.w)
    }
}

fn replicate(small: &DMatrix<f64>) -> DMatrix<f64> {
    let n = small.nrows();
    DMatrix::from_fn(3 * n, 3 * n, |r, c| small[(r / 3, c / 3)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// IRLS floor on blockwise residual norms.
    pub delta: f64,
    pub max_irls: usize,
    /// Inner ADMM iteration cap per IRLS pass.
    pub max_admm: usize,
    /// Relative cost change that ends the IRLS loop.
    pub irls_tol: f64,
    /// `||B - A||_F / max(||A||_F, 1)` that ends an ADMM pass.
    pub admm_tol: f64,
    pub rank: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            delta: 1e-3,
            max_irls: 30,
            max_admm: 1000,
            irls_tol: 1e-8,
            admm_tol: 1e-9,
            rank: FACTOR_RANK,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::InvalidConfig {
                field: field.into(),
                message: message.into(),
            })
        };
        if !(self.delta > 0.0) {
            return bad("delta", "must be positive");
        }
        if self.max_irls < 1 {
            return bad("max_irls", "must be at least 1");
        }
        if self.max_admm < 1 {
            return bad("max_admm", "must be at least 1");
        }
        if !(self.irls_tol > 0.0) {
            return bad("irls_tol", "must be positive");
        }
        if !(self.admm_tol > 0.0) {
            return bad("admm_tol", "must be positive");
        }
        if self.rank != FACTOR_RANK {
            return bad("rank", "the factor rank is fixed at 3");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIter,
}

impl SolverStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIter => "max_iter",
        }
    }
}

/// Iterate bundle owned by one solve call.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub scales: ScaleMatrix,
    pub weights: WeightMatrix,
    pub tau: f64,
    pub irls_iterations: usize,
    /// ADMM iterations used by each IRLS pass.
    pub admm_iterations: Vec<usize>,
    /// Robust cost after each IRLS pass.
    pub cost_history: Vec<f64>,
}

/// Starting point for the solver.
#[derive(Debug, Clone)]
pub enum Initialization {
    /// Rank-3 spectral split of the measurement matrix, unit scales.
    Spectral,
    /// `A = U V^T` from camera poses, scales fit by least squares.
    Poses(Vec<CameraPose>),
    /// Block-wise completion of the measurement matrix with outlier trimming;
    /// see [`completion_factor`].
    Completion,
    /// Caller-supplied `(A, Lambda)`.
    Explicit(DMatrix<f64>, ScaleMatrix),
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    /// `A + A^T` with every off-diagonal pair filled in.
    pub f: MultiviewBlockMatrix,
    pub a: DMatrix<f64>,
    pub scales: ScaleMatrix,
    pub status: SolverStatus,
    pub state: SolverState,
    /// Increases of the IRLS cost beyond the slack, as `(pass, previous, current)`.
    pub monotonicity_violations: Vec<(usize, f64, f64)>,
}

impl SolveOutput {
    pub fn cost_history(&self) -> &[f64] {
        &self.state.cost_history
    }

    pub fn final_cost(&self) -> f64 {
        self.state.cost_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Slack on cost increases between IRLS passes before they are logged.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// Spectral rank-3 `A` whose symmetric part `A + A^T` is the signed rank-6
/// truncation of the symmetric part of `m`.
///
/// Writing that truncation as `X X^T - Y Y^T`, with `X` holding the three
/// largest positive eigenpairs and `Y` the three most negative (columns
/// scaled by the square roots of the eigenvalue magnitudes), the factor is
/// `A = 1/2 (X + Y)(X - Y)^T`.
pub fn spectral_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (eigenvalues, eigenvectors) = linalg::symmetric_eigen(m);
    let dim = m.nrows();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let k = FACTOR_RANK.min(dim / 2);
    let mut x = DMatrix::zeros(dim, k);
    let mut y = DMatrix::zeros(dim, k);
    for idx in 0..k {
        let hi = order[idx];
        let lo = order[dim - 1 - idx];
        let s_pos = eigenvalues[hi].max(0.0).sqrt();
        let s_neg = (-eigenvalues[lo]).max(0.0).sqrt();
        x.set_column(idx, &(eigenvectors.column(hi) * s_pos));
        y.set_column(idx, &(eigenvectors.column(lo) * s_neg));
    }
    (&x + &y) * (&x - &y).transpose() * 0.5
}

/// Iteration cap for [`completion_factor`].
pub const COMPLETION_MAX_ITERS: usize = 5000;
/// Blocks whose residual exceeds this multiple of the median are trimmed.
pub const TRIM_FACTOR: f64 = 3.0;
/// Residuals below this are never trimmed.
pub const TRIM_FLOOR: f64 = 1e-2;

/// Distance between unit-normalized blocks, minimized over sign.
fn aligned_distance(a: &nalgebra::Matrix3<f64>, b: &nalgebra::Matrix3<f64>) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 0.0 } else { 1.0 };
    }
    let (ua, ub) = (a / na, b / nb);
    (ua - ub).norm().min((ua + ub).norm())
}

/// Fixed-point completion: alternate the rank-6 spectral projection with
/// re-imposing each observed block, rescaled to the norm (and sign) that the
/// projection gave it. With `trim`, blocks far from the projection keep the
/// projected value instead.
fn completion_stage(
    f_hat: &MultiviewBlockMatrix,
    mut y: DMatrix<f64>,
    trim: bool,
) -> DMatrix<f64> {
    let n = f_hat.n();
    let target = f_hat.data().norm();
    for _ in 0..COMPLETION_MAX_ITERS {
        let a = spectral_factor(&y);
        let est = &a + a.transpose();
        let residuals: Vec<((usize, usize), f64)> = f_hat
            .unordered_pairs()
            .map(|(i, j)| {
                let e = est.fixed_view::<3, 3>(3 * i, 3 * j).into_owned();
                ((i, j), aligned_distance(&f_hat.block(i, j), &e))
            })
            .collect();
        let values: Vec<f64> = residuals.iter().map(|r| r.1).collect();
        let threshold = (TRIM_FACTOR * crate::multiview::median(&values)).max(TRIM_FLOOR);
        let mut next = est.clone();
        for i in 0..n {
            next.view_mut((3 * i, 3 * i), (3, 3)).fill(0.0);
        }
        for ((i, j), r) in residuals {
            if trim && r > threshold {
                continue;
            }
            let observed = f_hat.block(i, j);
            let e = est.fixed_view::<3, 3>(3 * i, 3 * j).into_owned();
            let c = observed.dot(&e).signum() * e.norm() / observed.norm();
            let block = observed * c;
            next.view_mut((3 * i, 3 * j), (3, 3)).copy_from(&block);
            next.view_mut((3 * j, 3 * i), (3, 3)).copy_from(&block.transpose());
        }
        let norm = next.norm();
        if !(norm > 0.0) || target == 0.0 {
            return next;
        }
        next *= target / norm;
        let change = (&next - &y).norm() / target;
        y = next;
        if change < 1e-13 {
            break;
        }
    }
    y
}

/// Rank-3 factor from a completed measurement matrix.
///
/// First completes without trimming. If that reproduces every observed
/// block to within [`TRIM_FLOOR`] the data are treated as consistent and
/// used as is; otherwise the completion is restarted from the measurements
/// with trimming of blocks beyond `TRIM_FACTOR` times the median residual.
/// Blocks are renormalized rather than fit by least squares because the
/// latter lets the fill shrink towards zero.
pub fn completion_factor(f_hat: &MultiviewBlockMatrix) -> DMatrix<f64> {
    let y = completion_stage(f_hat, f_hat.data().clone(), false);
    let a = spectral_factor(&y);
    let est = &a + a.transpose();
    let fits = f_hat.unordered_pairs().all(|(i, j)| {
        let e = est.fixed_view::<3, 3>(3 * i, 3 * j).into_owned();
        aligned_distance(&f_hat.block(i, j), &e) < TRIM_FLOOR
    });
    if fits {
        return a;
    }
    debug!("measurements inconsistent, completing with trimming");
    spectral_factor(&completion_stage(f_hat, f_hat.data().clone(), true))
}

/// Per-camera gauge balancing.
///
/// `A -> D A D` with `D = diag(d_i I_3)` and `lambda_ij -> lambda_ij / (d_i d_j)`
/// leaves the rank, the skew diagonal blocks, and the data term unchanged.
/// Returns `d` minimizing `sum (log d_i + log d_j - log |lambda_ij|)^2` over
/// observed pairs, so that the balanced scales sit near one.
pub fn camera_gauge(f_hat: &MultiviewBlockMatrix, scales: &ScaleMatrix, weights: &WeightMatrix) -> Vec<f64> {
    let n = f_hat.n();
    let mut q = DMatrix::zeros(n, n);
    let mut rhs = nalgebra::DVector::zeros(n);
    for (i, j) in f_hat.unordered_pairs() {
        let l = scales.get(i, j).abs();
        if !(l > 0.0 && l.is_finite()) {
            continue;
        }
        let t = l.ln();
        let w = weights.get(i, j) + weights.get(j, i);
        q[(i, i)] += w;
        q[(j, j)] += w;
        q[(i, j)] += w;
        q[(j, i)] += w;
        rhs[i] += w * t;
        rhs[j] += w * t;
    }
    let x = linalg::lstsq(&q, &rhs, 1e-10);
    x.iter().map(|v| v.exp()).collect()
}

fn apply_camera_gauge(d: &[f64], m: &mut DMatrix<f64>) {
    let n = d.len();
    for i in 0..n {
        for j in 0..n {
            let f = d[i] * d[j];
            m.view_mut((3 * i, 3 * j), (3, 3)).scale_mut(f);
        }
    }
}

fn unapply_scales(d: &[f64], scales: &ScaleMatrix) -> ScaleMatrix {
    let n = d.len();
    let mut out = scales.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            out.set(i, j, scales.get(i, j) / (d[i] * d[j]));
        }
    }
    out
}

fn initial_point(
    f_hat: &MultiviewBlockMatrix,
    init: &Initialization,
) -> Result<(DMatrix<f64>, ScaleMatrix)> {
    let n = f_hat.n();
    let dim = 3 * n;
    match init {
        Initialization::Spectral => Ok((spectral_factor(f_hat.data()), ScaleMatrix::ones_on(f_hat))),
        Initialization::Completion => {
            let a = completion_factor(f_hat);
            let scales = update_lambda(f_hat, &(&a + a.transpose()), &ScaleMatrix::ones_on(f_hat)).scales;
            Ok((a, scales))
        }
        Initialization::Poses(poses) => {
            if poses.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} warm-start poses for {} cameras",
                    poses.len(),
                    n
                )));
            }
            let mut a = build_factors(poses)?.product();
            // Bring A to the magnitude of the data so the scales start near one.
            let a_norm = (&a + a.transpose()).norm();
            if a_norm > 0.0 {
                a *= f_hat.data().norm() / a_norm;
            }
            let a_sym = &a + a.transpose();
            let scales = update_lambda(f_hat, &a_sym, &ScaleMatrix::ones_on(f_hat)).scales;
            Ok((a, scales))
        }
        Initialization::Explicit(a, scales) => {
            if a.nrows() != dim || a.ncols() != dim || scales.n() != n {
                return Err(Error::DimensionMismatch(format!(
                    "initial A is {}x{} and scales are {}x{} for {} cameras",
                    a.nrows(),
                    a.ncols(),
                    scales.n(),
                    scales.n(),
                    n
                )));
            }
            Ok((a.clone(), scales.clone()))
        }
    }
}

/// Runs the IRLS-ADMM solver.
///
/// Non-convergence is reported through [`SolveOutput::status`]; the last
/// iterate is always returned.
pub fn solve(
    f_hat: &MultiviewBlockMatrix,
    config: &SolverConfig,
    init: &Initialization,
) -> Result<SolveOutput> {
    config.validate()?;
    let n = f_hat.n();
    if n < 2 {
        return Err(Error::DimensionMismatch(format!(
            "need at least 2 cameras, got {n}"
        )));
    }
    let (mut a, mut scales) = initial_point(f_hat, init)?;
    let f_norm = f_hat.data().norm();
    let cost_floor = 1e-14 * f_norm.max(1.0);

    let mut weights = WeightMatrix::ones_on(f_hat);
    let mut cost_history = Vec::with_capacity(config.max_irls);
    let mut admm_iterations = Vec::with_capacity(config.max_irls);
    let mut violations = Vec::new();
    let mut status = SolverStatus::MaxIter;
    let mut b = a.clone();
    let mut gamma = DMatrix::zeros(3 * n, 3 * n);
    let mut tau = weights.total();
    let mut previous_cost = cost(f_hat, &a, &scales);

    for pass in 0..config.max_irls {
        tau = weights.total();
        if tau <= 0.0 {
            // Nothing observed: the penalty-only problem is already solved.
            cost_history.push(0.0);
            admm_iterations.push(0);
            status = SolverStatus::Converged;
            break;
        }
        // The data term is invariant under (A s, Lambda / s) but the penalty is
        // not. Blocks whose scale exceeds sqrt(tau / 4 w) can escape the rank
        // constraint through ever-growing scales, so each pass starts from the
        // gauge with median |lambda| = 1, and every ADMM step rebalances the
        // scales per camera.
        let magnitudes: Vec<f64> = f_hat
            .unordered_pairs()
            .map(|(i, j)| scales.get(i, j).abs())
            .filter(|l| *l > 0.0)
            .collect();
        if !magnitudes.is_empty() {
            let s = crate::multiview::median(&magnitudes);
            if s.is_finite() && s > 0.0 {
                a *= s;
                scales = scales.scaled(1.0 / s);
            }
        }
        gamma.fill(0.0);
        b.copy_from(&a);
        let mut inner = 0;
        for k in 0..config.max_admm {
            inner = k + 1;
            let g = &b + &gamma;
            let upd = update_a(f_hat, &scales, &g, &weights, tau);
            a = upd.a;
            let lam = update_lambda(f_hat, &upd.a_sym, &scales);
            if !lam.degenerate.is_empty() {
                debug!("pass {pass} iter {k}: {} degenerate blocks", lam.degenerate.len());
            }
            scales = lam.scales;
            let b_next = update_b(&a, &gamma);
            let scale = a.norm().max(1.0);
            let dual = (&b_next - &b).norm() / scale;
            b = b_next;
            gamma = update_gamma(&gamma, &a, &b);
            let d = camera_gauge(f_hat, &scales, &weights);
            apply_camera_gauge(&d, &mut a);
            apply_camera_gauge(&d, &mut b);
            apply_camera_gauge(&d, &mut gamma);
            scales = unapply_scales(&d, &scales);
            let primal = (&b - &a).norm() / scale;
            if primal < config.admm_tol && dual < config.admm_tol {
                break;
            }
        }
        admm_iterations.push(inner);
        let current = cost(f_hat, &a, &scales);
        cost_history.push(current);
        if current > previous_cost + MONOTONE_SLACK {
            warn!(
                "IRLS cost increased at pass {pass}: {previous_cost:.6e} -> {current:.6e}"
            );
            violations.push((pass, previous_cost, current));
        }
        debug!("IRLS pass {pass}: cost {current:.6e}, {inner} ADMM iterations");

        let change = (previous_cost - current).abs() / previous_cost.max(f64::MIN_POSITIVE);
        previous_cost = current;
        if current <= cost_floor || change < config.irls_tol {
            status = SolverStatus::Converged;
            break;
        }
        weights = update_weights(f_hat, &a, &scales, config.delta);
    }

    // Canonical gauge: ||A||_F = ||F_hat||_F / 2, scales compensate.
    let a_norm = a.norm();
    if a_norm > 0.0 && f_norm > 0.0 {
        let s = 0.5 * f_norm / a_norm;
        a *= s;
        b *= s;
        gamma *= s;
        scales = scales.scaled(1.0 / s);
    }

    let f_data = &a + a.transpose();
    let mut f = MultiviewBlockMatrix::from_parts(n, f_data, vec![true; n * n])?;
    for i in 0..n {
        f.set_block(i, i, &nalgebra::Matrix3::zeros());
    }

    let state = SolverState {
        a: a.clone(),
        b,
        gamma,
        scales: scales.clone(),
        weights,
        tau,
        irls_iterations: cost_history.len(),
        admm_iterations,
        cost_history,
    };
    Ok(SolveOutput {
        f,
        a,
        scales,
        status,
        state,
        monotonicity_violations: violations,
    })
}
