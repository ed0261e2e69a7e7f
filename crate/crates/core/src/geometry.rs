//! Camera parameterization and the global-frame epipolar relations.
//!
//! A camera is described by a rotation `R` whose columns are the camera axes
//! expressed in the world frame, a center `t`, and an intrinsic matrix `K`.
//! A world point `P` maps to the camera frame as `R^T (P - t)`, so the camera
//! matrix is `K R^T [I, -t]`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Rotations farther than this from orthonormal are rejected.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

const MIN_DEPTH: f64 = 1e-12;
const EXACT_ROTATION_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    center: Vector3<f64>,
    intrinsics: Matrix3<f64>,
}

impl CameraPose {
    /// Builds a pose, projecting `rotation` onto SO(3) when it is within
    /// [`ROTATION_TOLERANCE`] of orthonormal.
    pub fn new(
        rotation: Matrix3<f64>,
        center: Vector3<f64>,
        intrinsics: Matrix3<f64>,
    ) -> Result<Self> {
        let rotation = orthonormalize(&rotation)?;
        validate_intrinsics(&intrinsics)?;
        Ok(CameraPose {
            rotation,
            center,
            intrinsics,
        })
    }

    /// Pose with identity intrinsics.
    pub fn calibrated(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        Self::new(rotation, center, Matrix3::identity())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn intrinsics_inverse(&self) -> Matrix3<f64> {
        // Validated upper-triangular with a positive diagonal.
        self.intrinsics
            .try_inverse()
            .expect("validated intrinsics are invertible")
    }

    /// Same camera with the center replaced.
    pub fn with_center(&self, center: Vector3<f64>) -> Self {
        CameraPose {
            center,
            ..self.clone()
        }
    }

    /// Same camera with identity intrinsics.
    pub fn with_identity_intrinsics(&self) -> Self {
        CameraPose {
            intrinsics: Matrix3::identity(),
            ..self.clone()
        }
    }
}

fn orthonormalize(rotation: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if !rotation.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidRotation {
            deviation: f64::INFINITY,
        });
    }
    let deviation = (rotation.transpose() * rotation - Matrix3::identity()).norm();
    if deviation > ROTATION_TOLERANCE || rotation.determinant() <= 0.0 {
        return Err(Error::InvalidRotation { deviation });
    }
    if deviation <= EXACT_ROTATION_TOLERANCE {
        // Already orthonormal to rounding; keep the bits so files round-trip.
        return Ok(*rotation);
    }
    let svd = rotation.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    Ok(u * v_t)
}

fn validate_intrinsics(k: &Matrix3<f64>) -> Result<()> {
    if !k.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidIntrinsics("non-finite entry".into()));
    }
    if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
        return Err(Error::InvalidIntrinsics(
            "entries below the diagonal must be zero".into(),
        ));
    }
    if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
        return Err(Error::InvalidIntrinsics(
            "focal lengths must be positive".into(),
        ));
    }
    if k[(2, 2)] != 1.0 {
        return Err(Error::InvalidIntrinsics("K[2][2] must equal 1".into()));
    }
    Ok(())
}

/// Rotation and translation of camera `b` relative to camera `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RelativePose {
    /// The same relation seen from the other camera.
    pub fn inverse(&self) -> RelativePose {
        RelativePose {
            rotation: self.rotation.transpose(),
            translation: -(self.rotation.transpose() * self.translation),
        }
    }
}

/// Cross-product matrix: `skew(v) * w == v.cross(w)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] applied to the skew-symmetric part of `m`.
pub fn unskew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn relative_pose(a: &CameraPose, b: &CameraPose) -> RelativePose {
    let ra_t = a.rotation.transpose();
    RelativePose {
        rotation: ra_t * b.rotation,
        translation: ra_t * (a.center - b.center),
    }
}

/// Essential matrix between `a` and `b` written in global quantities:
/// `R_a^T (T_a - T_b) R_b` with `T = skew(t)`.
pub fn essential_global(a: &CameraPose, b: &CameraPose) -> Matrix3<f64> {
    a.rotation.transpose() * skew(&(a.center - b.center)) * b.rotation
}

/// Fundamental matrix `K_a^{-T} E_ab K_b^{-1}`, satisfying `p_a^T F p_b = 0`.
pub fn fundamental_global(a: &CameraPose, b: &CameraPose) -> Matrix3<f64> {
    a.intrinsics_inverse().transpose() * essential_global(a, b) * b.intrinsics_inverse()
}

/// Projects a world point to homogeneous image coordinates `(x, y, 1)`.
pub fn project(pose: &CameraPose, point: &Vector3<f64>) -> Result<Vector3<f64>> {
    let cam = pose.intrinsics * pose.rotation.transpose() * (point - pose.center);
    project_camera_frame(&cam)
}

/// Depth of `point` along the optical axis of `pose`.
pub fn depth(pose: &CameraPose, point: &Vector3<f64>) -> f64 {
    pose.rotation.column(2).dot(&(point - pose.center))
}

pub(crate) fn project_camera_frame(cam: &Vector3<f64>) -> Result<Vector3<f64>> {
    if cam.z.abs() < MIN_DEPTH {
        return Err(Error::ZeroDepth { depth: cam.z });
    }
    Ok(cam / cam.z)
}

/// Rotation whose third column (optical axis) points from `eye` to `target`.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>, up_hint: &Vector3<f64>) -> Matrix3<f64> {
    let z = (target - eye).normalize();
    let mut x = up_hint.cross(&z);
    if x.norm() < 1e-8 {
        let alt = if z.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        x = alt.cross(&z);
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}
