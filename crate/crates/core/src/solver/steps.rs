//! Individual IRLS and ADMM steps. Each is an exact minimizer (or ascent
//! step) of its own subproblem; [`super::solve`] sequences them.

use nalgebra::{DMatrix, Matrix3};

use super::{ScaleMatrix, WeightMatrix};
use crate::multiview::{svp, MultiviewBlockMatrix};

/// Blocks of `A_s` with Frobenius norm below this keep their previous scale.
pub const DEGENERATE_BLOCK_NORM: f64 = 1e-14;

/// Rank of the solver variable `A`.
pub const FACTOR_RANK: usize = 3;

fn block(m: &DMatrix<f64>, i: usize, j: usize) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(3 * i, 3 * j).into_owned()
}

/// `F_hat_ij - lambda_ij (A_ij + A_ji^T)` for one block.
pub fn block_residual(
    f_hat: &MultiviewBlockMatrix,
    a: &DMatrix<f64>,
    scales: &ScaleMatrix,
    i: usize,
    j: usize,
) -> Matrix3<f64> {
    let sym = block(a, i, j) + block(a, j, i).transpose();
    f_hat.block(i, j) - sym * scales.get(i, j)
}

/// Robust objective: half the sum over observed ordered pairs of unsquared
/// blockwise Frobenius residuals.
pub fn cost(f_hat: &MultiviewBlockMatrix, a: &DMatrix<f64>, scales: &ScaleMatrix) -> f64 {
    0.5 * f_hat
        .pairs()
        .map(|(i, j)| block_residual(f_hat, a, scales, i, j).norm())
        .sum::<f64>()
}

/// IRLS weights `1 / max(delta, ||residual_ij||)` on Ω, zero elsewhere.
pub fn update_weights(
    f_hat: &MultiviewBlockMatrix,
    a: &DMatrix<f64>,
    scales: &ScaleMatrix,
    delta: f64,
) -> WeightMatrix {
    assert!(delta > 0.0, "IRLS floor must be positive");
    let mut w = WeightMatrix::zeros(f_hat.n());
    for (i, j) in f_hat.pairs() {
        let r = block_residual(f_hat, a, scales, i, j).norm();
        w.set(i, j, 1.0 / delta.max(r));
    }
    w
}

/// Output of the `A` step: the new `A` and its symmetric part `A + A^T`.
#[derive(Debug, Clone)]
pub struct AUpdate {
    pub a: DMatrix<f64>,
    pub a_sym: DMatrix<f64>,
}

/// Closed-form minimizer over `A` of the weighted data term plus the ADMM
/// penalty `tau/2 ||A - G||^2`, subject to skew-symmetric diagonal blocks.
///
/// The antisymmetric part of `A` copies that of `G`; the symmetric part is
/// an entrywise ratio with its diagonal blocks forced to zero.
pub fn update_a(
    f_hat: &MultiviewBlockMatrix,
    scales: &ScaleMatrix,
    g: &DMatrix<f64>,
    weights: &WeightMatrix,
    tau: f64,
) -> AUpdate {
    assert!(tau > 0.0, "ADMM penalty must be positive");
    let n = f_hat.n();
    let dim = 3 * n;
    let g_t = g.transpose();
    let quarter_tau = 0.25 * tau;
    let f = f_hat.data();
    let mut a_sym = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        for r in 0..dim {
            let (bi, bj) = (r / 3, c / 3);
            if bi == bj {
                continue;
            }
            let w = weights.get(bi, bj);
            let lambda = scales.get(bi, bj);
            let g_sym = g[(r, c)] + g_t[(r, c)];
            a_sym[(r, c)] =
                (w * lambda * f[(r, c)] + quarter_tau * g_sym) / (w * lambda * lambda + quarter_tau);
        }
    }
    let g_anti = g - &g_t;
    let a = (&a_sym + g_anti) * 0.5;
    AUpdate { a, a_sym }
}

/// Result of the scale step.
#[derive(Debug, Clone)]
pub struct LambdaUpdate {
    pub scales: ScaleMatrix,
    /// Pairs whose block of `A_s` vanished; their previous scale was kept.
    pub degenerate: Vec<(usize, usize)>,
}

/// Per-pair least-squares scale `tr(F_hat_ij^T S_ij) / ||S_ij||^2` with
/// `S = A_s`. The block weight is constant, so it cancels.
pub fn update_lambda(
    f_hat: &MultiviewBlockMatrix,
    a_sym: &DMatrix<f64>,
    previous: &ScaleMatrix,
) -> LambdaUpdate {
    let n = f_hat.n();
    let mut scales = ScaleMatrix::zeros(n);
    let mut degenerate = Vec::new();
    for (i, j) in f_hat.unordered_pairs() {
        let s = block(a_sym, i, j);
        let denom = s.norm_squared();
        let lambda = if s.norm() < DEGENERATE_BLOCK_NORM {
            degenerate.push((i, j));
            previous.get(i, j)
        } else {
            f_hat.block(i, j).dot(&s) / denom
        };
        scales.set(i, j, lambda);
    }
    LambdaUpdate { scales, degenerate }
}

/// Projection of `A - Gamma` onto matrices of rank at most 3.
pub fn update_b(a: &DMatrix<f64>, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    svp(&(a - gamma), FACTOR_RANK)
}

/// Dual ascent `Gamma + (B - A)`.
pub fn update_gamma(gamma: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    gamma + (b - a)
}

/// Value of the augmented Lagrangian
/// `1/2 ||F_hat - Lambda (A + A^T)||_W^2 + tau/2 ||B - A + Gamma||^2`.
pub fn augmented_lagrangian(
    f_hat: &MultiviewBlockMatrix,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    scales: &ScaleMatrix,
    weights: &WeightMatrix,
    tau: f64,
) -> f64 {
    let data: f64 = f_hat
        .pairs()
        .map(|(i, j)| weights.get(i, j) * block_residual(f_hat, a, scales, i, j).norm_squared())
        .sum();
    0.5 * data + 0.5 * tau * (b - a + gamma).norm_squared()
}
