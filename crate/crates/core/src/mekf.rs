//! Classical MEKF measurement update, the baseline the geometric filters
//! are compared against. The bias error is additive, `δb = b − b̂`.

use crate::attitude::quat_correct;
use crate::filter::{
    error_update, joseph_update, kalman_gain, measurement_matrix, predicted_measurement,
    Covariance6, FilterError, FilterState, MeasurementSet,
};
use crate::gmekf::{apply_reset, small_angle_warnings, CovarianceReset, UpdateResult};

/// Classical update. `attitude_reset` rotates the attitude covariance block
/// through the reset map after the quaternion correction.
pub fn mekf_measurement_update(
    state_minus: &FilterState,
    p_minus: &Covariance6,
    meas: &MeasurementSet,
    attitude_reset: bool,
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
    let b_plus = b_minus + dx.db_hat;

    let mode = if attitude_reset {
        CovarianceReset::AttitudeOnly
    } else {
        CovarianceReset::Skip
    };
    let (p_plus_plus, mut report) =
        apply_reset(mode, &p_plus, &q_minus, &q_plus, &b_minus, &b_plus);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attitude::{attitude_matrix, Vec3};
    use crate::gmekf::gmekf_measurement_update_with;
    use crate::testutil::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_bias_gmekf_reduces_to_mekf() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..200 {
            let state = FilterState {
                q_hat: random_quat(&mut rng),
                b_hat: Vec3::zeros(),
            };
            let refs = random_refs(&mut rng, 2);
            let truth = quat_correct(&state.q_hat, &random_vec(&mut rng, 1e-2));
            let a = attitude_matrix(&truth);
            let meas = MeasurementSet::new(
                refs.clone(),
                refs.iter().map(|r| a * r).collect(),
                &[1e-3; 2],
            )
            .unwrap();
            // No bias uncertainty, so d̂b = 0 and b̂⁺ stays zero.
            let mut p = random_spd6(&mut rng, 1e-4);
            p.fixed_view_mut::<6, 3>(0, 3).fill(0.0);
            p.fixed_view_mut::<3, 6>(3, 0).fill(0.0);

            let m = mekf_measurement_update(&state, &p, &meas, true).unwrap();
            let g = gmekf_measurement_update_with(&state, &p, &meas, CovarianceReset::Geometric)
                .unwrap();
            assert_eq!(m.state_plus.q_hat, g.state_plus.q_hat);
            assert!((m.state_plus.b_hat - g.state_plus.b_hat).amax() < 1e-12);
            assert_eq!(g.state_plus.b_hat, Vec3::zeros());
            assert!((m.p_plus_plus - g.p_plus_plus).amax() < 1e-12 * m.p_plus_plus.amax());
        }
    }

    #[test]
    fn bias_correction_alone_separates_gmekf_from_mekf() {
        // With b̂⁻ = 0 but d̂b ≠ 0 the geometric reset still couples through
        // −[b̂⁺×] M, so the covariances differ by O(‖d̂b‖).
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let state = FilterState {
            q_hat: random_quat(&mut rng),
            b_hat: Vec3::zeros(),
        };
        let refs = random_refs(&mut rng, 2);
        let truth = quat_correct(&state.q_hat, &random_vec(&mut rng, 1e-2));
        let a = attitude_matrix(&truth);
        let meas = MeasurementSet::new(
            refs.clone(),
            refs.iter().map(|r| a * r).collect(),
            &[1e-3; 2],
        )
        .unwrap();
        let p = random_spd6(&mut rng, 1e-4);
        let m = mekf_measurement_update(&state, &p, &meas, true).unwrap();
        let g =
            gmekf_measurement_update_with(&state, &p, &meas, CovarianceReset::Geometric).unwrap();
        assert_eq!(m.state_plus.b_hat, g.state_plus.b_hat);
        let db = g.state_plus.b_hat.norm();
        assert!(db > 0.0);
        let diff = (m.p_plus_plus - g.p_plus_plus).norm();
        assert!(diff > 0.0 && diff < 10.0 * db * p.norm());
    }

    #[test]
    fn bias_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let state = FilterState {
            q_hat: random_quat(&mut rng),
            b_hat: random_vec(&mut rng, 0.05),
        };
        let refs = random_refs(&mut rng, 2);
        let truth = quat_correct(&state.q_hat, &random_vec(&mut rng, 1e-2));
        let a = attitude_matrix(&truth);
        let meas = MeasurementSet::new(
            refs.clone(),
            refs.iter().map(|r| a * r).collect(),
            &[1e-3; 2],
        )
        .unwrap();
        let p = random_spd6(&mut rng, 1e-4);
        let out = mekf_measurement_update(&state, &p, &meas, false).unwrap();
        assert_eq!(out.state_plus.b_hat, state.b_hat + out.report.db_hat);
        assert_eq!(out.report.m_bar, crate::attitude::Mat6::identity());
    }
}
