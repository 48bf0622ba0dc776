//! Quaternion and rotation algebra.
//!
//! Quaternions are stored scalar-last, `q = [ρ; w]`, and follow the
//! composition rule `A(q ⊗ p) = A(q) A(p)` where `A(q)` is the passive
//! (reference-to-body) attitude matrix. The attitude error of an estimate
//! `q̂` is the rotation vector `α` with `q = δq(α) ⊗ q̂`, so for small errors
//! `A(q) ≈ (I − [α×]) A(q̂)`.

use nalgebra::{Matrix3, Matrix4x3, Matrix6, Vector3, Vector4};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4x3 = Matrix4x3<f64>;
pub type Mat6 = Matrix6<f64>;

/// Norm deviation accepted by [`UnitQuaternion::try_from_coords`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Below this angle the rotation-vector maps switch to their Taylor series.
const SMALL_ROTATION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AttitudeError {
    #[error("quaternion norm {norm} deviates from 1 by more than {UNIT_NORM_TOLERANCE}")]
    NotUnit { norm: f64 },
    #[error("quaternion has a zero or non-finite norm")]
    Degenerate,
}

/// Unit quaternion, scalar last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    coords: Vector4<f64>,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self {
            coords: Vector4::new(0.0, 0.0, 0.0, 1.0),
        }
    }

    /// Normalizes an arbitrary nonzero 4-vector `(x, y, z, w)`.
    pub fn new_normalize(coords: Vector4<f64>) -> Result<Self, AttitudeError> {
        let norm = coords.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(AttitudeError::Degenerate);
        }
        Ok(Self {
            coords: coords / norm,
        })
    }

    /// Accepts a 4-vector that is already unit norm (within
    /// [`UNIT_NORM_TOLERANCE`]) and renormalizes it to machine precision.
    pub fn try_from_coords(coords: Vector4<f64>) -> Result<Self, AttitudeError> {
        let norm = coords.norm();
        if !norm.is_finite() {
            return Err(AttitudeError::Degenerate);
        }
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(AttitudeError::NotUnit { norm });
        }
        Self::new_normalize(coords)
    }

    /// Exact map from a rotation vector to its quaternion,
    /// `[sin(θ/2) θ̂; cos(θ/2)]`.
    pub fn from_rotation_vector(theta: &Vec3) -> Self {
        let angle = theta.norm();
        let (sin_half_over_angle, cos_half) = if angle < SMALL_ROTATION {
            (0.5 - angle * angle / 48.0, 1.0 - angle * angle / 8.0)
        } else {
            ((0.5 * angle).sin() / angle, (0.5 * angle).cos())
        };
        let v = theta * sin_half_over_angle;
        // The series branch is unit only to O(θ⁴); normalize both branches.
        Self::new_normalize(Vector4::new(v.x, v.y, v.z, cos_half))
            .expect("rotation quaternion has unit norm")
    }

    /// Rotation vector of this quaternion, taking the short way round.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = self.sign_aligned();
        let v = q.vector();
        let s = v.norm();
        if s < SMALL_ROTATION {
            // atan2(s, w)/s → 1/w as s → 0
            return v * (2.0 / q.scalar());
        }
        v * (2.0 * s.atan2(q.scalar()) / s)
    }

    pub fn coords(&self) -> &Vector4<f64> {
        &self.coords
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.coords.x, self.coords.y, self.coords.z)
    }

    pub fn scalar(&self) -> f64 {
        self.coords.w
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    /// `q ⊗ p`, ordered so that `A(q ⊗ p) = A(q) A(p)`.
    pub fn compose(&self, other: &Self) -> Self {
        let (qv, qw) = (self.vector(), self.scalar());
        let (pv, pw) = (other.vector(), other.scalar());
        let v = pv * qw + qv * pw - qv.cross(&pv);
        let w = qw * pw - qv.dot(&pv);
        Self::new_normalize(Vector4::new(v.x, v.y, v.z, w)).expect("product of unit quaternions")
    }

    pub fn inverse(&self) -> Self {
        Self {
            coords: Vector4::new(
                -self.coords.x,
                -self.coords.y,
                -self.coords.z,
                self.coords.w,
            ),
        }
    }

    /// The other representative of the same attitude.
    pub fn negated(&self) -> Self {
        Self {
            coords: -self.coords,
        }
    }

    /// Representative with a non-negative scalar part.
    pub fn sign_aligned(&self) -> Self {
        if self.coords.w < 0.0 {
            self.negated()
        } else {
            *self
        }
    }

    /// Rotation angle between two attitudes, `2‖vec(q ⊗ p⁻¹)‖` (double-cover safe).
    pub fn angle_to(&self, other: &Self) -> f64 {
        2.0 * self.compose(&other.inverse()).vector().norm()
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

/// Skew-symmetric matrix with `[v×] u = v × u`.
pub fn cross_matrix(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Quaternion kinematics matrix `Ξ(q) = [w I + [ρ×]; −ρᵀ]`.
///
/// Satisfies `Ξᵀ(q) Ξ(q) = I₃` and `Ξᵀ(q) q = 0` for unit `q`, and maps a
/// small rotation vector `α` to the quaternion increment `½ Ξ(q) α`.
pub fn xi(q: &UnitQuaternion) -> Mat4x3 {
    let rho = q.vector();
    let w = q.scalar();
    let top = Mat3::identity() * w + cross_matrix(&rho);
    let mut out = Mat4x3::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&top);
    out.fixed_view_mut::<1, 3>(3, 0)
        .copy_from(&(-rho.transpose()));
    out
}

/// Passive attitude matrix, mapping reference-frame vectors into the body frame.
pub fn attitude_matrix(q: &UnitQuaternion) -> Mat3 {
    let rho = q.vector();
    let w = q.scalar();
    Mat3::identity() * (w * w - rho.norm_squared()) - cross_matrix(&rho) * (2.0 * w)
        + rho * rho.transpose() * 2.0
}

/// First-order attitude matrix of a small rotation vector, `I − [α×]`.
pub fn small_angle_dcm(alpha: &Vec3) -> Mat3 {
    Mat3::identity() - cross_matrix(alpha)
}

/// Multiplicative attitude correction `q̂⁺ = q̂⁻ + ½ Ξ(q̂⁻) â`, renormalized.
pub fn quat_correct(q_minus: &UnitQuaternion, alpha_hat: &Vec3) -> UnitQuaternion {
    if *alpha_hat == Vec3::zeros() {
        return *q_minus;
    }
    let raw = q_minus.coords() + xi(q_minus) * alpha_hat * 0.5;
    UnitQuaternion::new_normalize(raw).expect("corrected quaternion has norm ≥ 1")
}

/// Reset map `M = Ξᵀ(q̂⁺) Ξ(q̂⁻)` taking the attitude error referenced to `q̂⁻`
/// to the one referenced to `q̂⁺`.
pub fn reset_map(q_minus: &UnitQuaternion, q_plus: &UnitQuaternion) -> Mat3 {
    xi(q_plus).transpose() * xi(q_minus)
}
