//! Covariance-projection GEKF over the seven-component state `[q; b]`.
//!
//! This path never forms the GMEKF update. It builds the 7×6 sensitivity
//! `C` of the global state to the error state, the quaternion-space
//! measurement matrix `H̃`, and projects the gain back through `C`:
//! `[q̂⁺; b̂⁺] = [q̂⁻; b̂⁻] + C K̄ (ỹ − h(x̂⁻))`. Only the covariance
//! modification is shared with [`crate::gmekf`].

use nalgebra::{Dyn, OMatrix, SMatrix, Vector4, U7};

use crate::attitude::{attitude_matrix, cross_matrix, xi, Mat3, UnitQuaternion, Vec3};
use crate::filter::{
    joseph_update, kalman_gain, predicted_measurement, Covariance6, FilterError, FilterState,
    MeasurementSet,
};
use crate::gmekf::{reset_covariance, small_angle_warnings, UpdateResult};

/// `C = [[½ Ξ(q̂⁻), 0₄ₓ₃], [[b̂⁻×], I₃]]`.
pub type SensitivityC = SMatrix<f64, 7, 6>;

/// `3n × 7` quaternion-space measurement matrix.
pub type HTilde = OMatrix<f64, Dyn, U7>;

pub fn sensitivity_c(q_minus: &UnitQuaternion, b_minus: &Vec3) -> SensitivityC {
    let mut c = SensitivityC::zeros();
    c.fixed_view_mut::<4, 3>(0, 0)
        .copy_from(&(xi(q_minus) * 0.5));
    c.fixed_view_mut::<3, 3>(4, 0)
        .copy_from(&cross_matrix(b_minus));
    c.fixed_view_mut::<3, 3>(4, 3).copy_from(&Mat3::identity());
    c
}

/// Block rows `[2 [A(q̂⁻) rᵢ ×] Ξᵀ(q̂⁻) | 0₃ₓ₃]`.
pub fn htilde(q_minus: &UnitQuaternion, refs: &[Vec3]) -> Result<HTilde, FilterError> {
    if refs.is_empty() {
        return Err(FilterError::EmptyMeasurementSet);
    }
    let a = attitude_matrix(q_minus);
    let xi_t = xi(q_minus).transpose();
    let mut h = HTilde::zeros(3 * refs.len());
    for (i, r) in refs.iter().enumerate() {
        let block = cross_matrix(&(a * r)) * xi_t * 2.0;
        h.fixed_view_mut::<3, 4>(3 * i, 0).copy_from(&block);
    }
    Ok(h)
}

/// `H̄ = H̃ C`.
pub fn hbar(
    q_minus: &UnitQuaternion,
    b_minus: &Vec3,
    refs: &[Vec3],
) -> Result<nalgebra::MatrixXx6<f64>, FilterError> {
    Ok(htilde(q_minus, refs)? * sensitivity_c(q_minus, b_minus))
}

/// GEKF measurement update: additive seven-state correction through `C`,
/// quaternion renormalization, Joseph covariance with `H̄`, then the reset
/// covariance projection built from this update's own `(q̂⁻, q̂⁺, b̂⁻, b̂⁺)`.
pub fn gekf_measurement_update(
    state_minus: &FilterState,
    p_minus: &Covariance6,
    meas: &MeasurementSet,
) -> Result<UpdateResult, FilterError> {
    let q_minus = state_minus.q_hat;
    let b_minus = state_minus.b_hat;

    let h_bar = hbar(&q_minus, &b_minus, meas.refs())?;
    let k_bar = kalman_gain(p_minus, &h_bar, meas.noise())?;
    let p_plus = joseph_update(p_minus, &k_bar, &h_bar, meas.noise())?;

    let innovation = meas.stacked_obs() - predicted_measurement(&q_minus, meas.refs())?;
    let dx = &k_bar * &innovation;
    let delta = sensitivity_c(&q_minus, &b_minus) * dx.fixed_rows::<6>(0);

    let q_raw = q_minus.coords() + Vector4::new(delta[0], delta[1], delta[2], delta[3]);
    let q_plus = if delta.fixed_rows::<4>(0).iter().all(|&d| d == 0.0) {
        q_minus
    } else {
        UnitQuaternion::new_normalize(q_raw).expect("updated quaternion has norm ≥ 1")
    };
    let b_plus = b_minus + Vec3::new(delta[4], delta[5], delta[6]);

    let (p_plus_plus, mut report) = reset_covariance(&p_plus, &q_minus, &q_plus, &b_minus, &b_plus);
    let alpha_hat: Vec3 = dx.fixed_rows::<3>(0).into_owned();
    report.alpha_hat = alpha_hat;
    report.db_hat = dx.fixed_rows::<3>(3).into_owned();

    Ok(UpdateResult {
        state_plus: FilterState {
            q_hat: q_plus,
            b_hat: b_plus,
        },
        p_plus_plus,
        report,
        innovation,
        warnings: small_angle_warnings(&alpha_hat),
    })
}
