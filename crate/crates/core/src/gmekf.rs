//! Geometric multiplicative EKF measurement update.
//!
//! The gyro bias error is kept in the frame of the true attitude,
//! `db = b − A(α) b̂`, so a correction `[â; d̂b]` moves the bias estimate to
//! `b̂⁺ = b̂⁻ + [b̂⁻×] â + d̂b` rather than simply adding `d̂b`. After the
//! global quaternion and bias absorb the correction, the local error
//! estimate is reset to zero and the covariance is carried through the
//! linearized reset map
//!
//! ```text
//! M̄ = ⎡ M                        0 ⎤      M = Ξᵀ(q̂⁺) Ξ(q̂⁻)
//!     ⎣ [b̂⁻×] − [b̂⁺×] M          I ⎦
//! ```
//!
//! giving `P⁺⁺ = M̄ P⁺ M̄ᵀ`.

use nalgebra::DVector;

use crate::attitude::UnitQuaternion;
use crate::attitude::{cross_matrix, quat_correct, reset_map, small_angle_dcm, Mat3, Mat6, Vec3};
use crate::filter::{
    error_update, joseph_update, kalman_gain, measurement_matrix, predicted_measurement,
    symmetrize, Covariance6, ErrorEstimate, FilterError, FilterState, MeasurementSet,
};

/// Attitude corrections above this (rad) leave the small-angle regime the
/// bias update is built on; they are flagged but still applied.
pub const SMALL_ANGLE_WARNING: f64 = 0.35;

/// Covariance treatment after the error estimate is reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceReset {
    /// Full geometric modification `P⁺⁺ = M̄ P⁺ M̄ᵀ`.
    #[default]
    Geometric,
    /// Attitude rotation only, `M̄ = diag(M, I₃)`.
    AttitudeOnly,
    /// Keep `P⁺` unchanged.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateWarning {
    /// `‖â‖` exceeded [`SMALL_ANGLE_WARNING`].
    LargeAttitudeCorrection { angle: f64 },
}

/// Quantities used by the reset step.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetReport {
    pub m: Mat3,
    pub m_bar: Mat6,
    pub b_minus: Vec3,
    pub b_plus: Vec3,
    /// Pre-reset error estimate; zero when the report comes straight from
    /// [`reset_covariance`].
    pub alpha_hat: Vec3,
    pub db_hat: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult {
    pub state_plus: FilterState,
    pub p_plus_plus: Covariance6,
    pub report: ResetReport,
    pub innovation: DVector<f64>,
    pub warnings: Vec<UpdateWarning>,
}

impl UpdateResult {
    /// The local error estimate after the reset, always zero.
    pub fn error_after_reset(&self) -> ErrorEstimate {
        ErrorEstimate::default()
    }
}

/// `b̂⁺ = b̂⁻ + [b̂⁻×] â + d̂b`.
pub fn bias_update(b_minus: &Vec3, alpha_hat: &Vec3, db_hat: &Vec3) -> Vec3 {
    b_minus + cross_matrix(b_minus) * alpha_hat + db_hat
}

/// First-order true bias `(I − [α×]) b̂ + db`; the same for every reference.
pub fn true_bias_reconstruct(alpha: &Vec3, b_hat: &Vec3, db: &Vec3) -> Vec3 {
    small_angle_dcm(alpha) * b_hat + db
}

/// Reset Jacobian `M̄` for the geometric error definition.
pub fn reset_jacobian(
    q_minus: &UnitQuaternion,
    q_plus: &UnitQuaternion,
    b_minus: &Vec3,
    b_plus: &Vec3,
) -> (Mat3, Mat6) {
    let m = reset_map(q_minus, q_plus);
    let mut m_bar = Mat6::identity();
    m_bar.fixed_view_mut::<3, 3>(0, 0).copy_from(&m);
    m_bar
        .fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(cross_matrix(b_minus) - cross_matrix(b_plus) * m));
    (m, m_bar)
}

/// Covariance modification after the reset, `P⁺⁺ = M̄ P⁺ M̄ᵀ`.
pub fn reset_covariance(
    p_plus: &Covariance6,
    q_minus: &UnitQuaternion,
    q_plus: &UnitQuaternion,
    b_minus: &Vec3,
    b_plus: &Vec3,
) -> (Covariance6, ResetReport) {
    let (m, m_bar) = reset_jacobian(q_minus, q_plus, b_minus, b_plus);
    let p = symmetrize(&(m_bar * p_plus * m_bar.transpose()));
    (
        p,
        ResetReport {
            m,
            m_bar,
            b_minus: *b_minus,
            b_plus: *b_plus,
            alpha_hat: Vec3::zeros(),
            db_hat: Vec3::zeros(),
        },
    )
}

/// Applies the requested reset treatment; shared with the classical MEKF.
pub(crate) fn apply_reset(
    mode: CovarianceReset,
    p_plus: &Covariance6,
    q_minus: &UnitQuaternion,
    q_plus: &UnitQuaternion,
    b_minus: &Vec3,
    b_plus: &Vec3,
) -> (Covariance6, ResetReport) {
    match mode {
        CovarianceReset::Geometric => reset_covariance(p_plus, q_minus, q_plus, b_minus, b_plus),
        CovarianceReset::AttitudeOnly => {
            let m = reset_map(q_minus, q_plus);
            let mut m_bar = Mat6::identity();
            m_bar.fixed_view_mut::<3, 3>(0, 0).copy_from(&m);
            let p = symmetrize(&(m_bar * p_plus * m_bar.transpose()));
            (p, report(m, m_bar, b_minus, b_plus))
        }
        CovarianceReset::Skip => (
            *p_plus,
            report(Mat3::identity(), Mat6::identity(), b_minus, b_plus),
        ),
    }
}

fn report(m: Mat3, m_bar: Mat6, b_minus: &Vec3, b_plus: &Vec3) -> ResetReport {
    ResetReport {
        m,
        m_bar,
        b_minus: *b_minus,
        b_plus: *b_plus,
        alpha_hat: Vec3::zeros(),
        db_hat: Vec3::zeros(),
    }
}

pub(crate) fn small_angle_warnings(alpha_hat: &Vec3) -> Vec<UpdateWarning> {
    let angle = alpha_hat.norm();
    if angle > SMALL_ANGLE_WARNING {
        vec![UpdateWarning::LargeAttitudeCorrection { angle }]
    } else {
        Vec::new()
    }
}

/// GMEKF measurement update with the full covariance modification.
pub fn gmekf_measurement_update(
    state_minus: &FilterState,
    p_minus: &Covariance6,
    meas: &MeasurementSet,
) -> Result<UpdateResult, FilterError> {
    gmekf_measurement_update_with(state_minus, p_minus, meas, CovarianceReset::Geometric)
}

/// GMEKF measurement update with an explicit post-reset covariance treatment.
///
/// Order: gain, Joseph covariance, error estimate, quaternion correction,
/// geometric bias update, reset, covariance modification.
pub fn gmekf_measurement_update_with(
    state_minus: &FilterState,
    p_minus: &Covariance6,
    meas: &MeasurementSet,
    reset: CovarianceReset,
) -> Result<UpdateResult, FilterError> {
    let q_minus = state_minus.q_hat;
    let b_minus = state_minus.b_hat;

    let h = measurement_matrix(&q_minus, meas.refs())?;
    let k = kalman_gain(p_minus, &h, meas.noise())?;
    let p_plus = joseph_update(p_minus, &k, &h, meas.noise())?;

    let y_obs = meas.stacked_obs();
    let y_pred = predicted_measurement(&q_minus, meas.refs())?;
    let dx = error_update(&k, &y_obs, &y_pred)?;

    let q_plus = quat_correct(&q_minus, &dx.alpha_hat);
    let b_plus = bias_update(&b_minus, &dx.alpha_hat, &dx.db_hat);

    let (p_plus_plus, mut report) =
        apply_reset(reset, &p_plus, &q_minus, &q_plus, &b_minus, &b_plus);
    report.alpha_hat = dx.alpha_hat;
    report.db_hat = dx.db_hat;

    Ok(UpdateResult {
        state_plus: FilterState {
            q_hat: q_plus,
            b_hat: b_plus,
        },
        p_plus_plus,
        report,
        innovation: y_obs - y_pred,
        warnings: small_angle_warnings(&dx.alpha_hat),
    })
}
