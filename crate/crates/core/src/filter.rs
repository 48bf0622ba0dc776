//! Measurement-update and propagation machinery shared by every filter.
//!
//! The error state is the 6-vector `[α; δb]`: the small attitude error
//! rotation vector followed by a bias error whose exact definition depends
//! on the [`ErrorModel`].

use nalgebra::{DMatrix, DVector, Matrix6xX, MatrixXx6, U6};
use thiserror::Error;

use crate::attitude::{
    attitude_matrix, cross_matrix, small_angle_dcm, Mat3, Mat6, UnitQuaternion, Vec3,
};

/// 6×6 error-state covariance: attitude block first, bias block second.
pub type Covariance6 = Mat6;

/// Relative pivot floor for the innovation-covariance factorization.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("measurement set is empty")]
    EmptyMeasurementSet,
    #[error("reference vector {index} has norm {norm}, expected 1")]
    NonUnitReference { index: usize, norm: f64 },
    #[error("{what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("measurement noise for sensor {index} must be positive and finite, got {sigma}")]
    InvalidNoise { index: usize, sigma: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error(
        "innovation covariance is not positive definite: smallest pivot {min_pivot:e} \
         against trace {trace:e} (pivot ratio {condition:e})"
    )]
    SingularInnovation {
        min_pivot: f64,
        trace: f64,
        condition: f64,
    },
}

/// Global estimate: attitude quaternion and gyro bias (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub q_hat: UnitQuaternion,
    pub b_hat: Vec3,
}

/// Local Kalman state `[â; d̂b]`. Zero after every reset.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorEstimate {
    pub alpha_hat: Vec3,
    pub db_hat: Vec3,
}

/// One gyro sample held constant over `dt` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroSample {
    pub omega_meas: Vec3,
    pub dt: f64,
}

/// Gyro and vector-sensor noise model.
///
/// `sigma_v` is the angle random walk (rad/s^½), `sigma_u` the bias random
/// walk (rad/s^{3/2}) and `sigma_meas` one standard deviation (rad) per
/// reference vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    pub sigma_v: f64,
    pub sigma_u: f64,
    pub sigma_meas: Vec<f64>,
}

/// How the bias component of the error state is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorModel {
    /// `δb = b − b̂`.
    Classical,
    /// Common-frame error `db = b − A(α) b̂`.
    Geometric,
}

/// Reference directions, their body-frame observations and the stacked
/// measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    refs: Vec<Vec3>,
    obs: Vec<Vec3>,
    noise: DMatrix<f64>,
}

impl MeasurementSet {
    /// Builds a set with block-diagonal noise `σᵢ² I₃`.
    pub fn new(refs: Vec<Vec3>, obs: Vec<Vec3>, sigmas: &[f64]) -> Result<Self, FilterError> {
        if sigmas.len() != refs.len() {
            return Err(FilterError::ShapeMismatch {
                what: "noise sigmas",
                expected: refs.len(),
                got: sigmas.len(),
            });
        }
        if let Some((index, &sigma)) = sigmas
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s > 0.0))
        {
            return Err(FilterError::InvalidNoise { index, sigma });
        }
        let n = refs.len();
        let mut noise = DMatrix::zeros(3 * n, 3 * n);
        for (i, s) in sigmas.iter().enumerate() {
            noise.view_mut((3 * i, 3 * i), (3, 3)).fill_diagonal(s * s);
        }
        Self::with_noise(refs, obs, noise)
    }

    /// Builds a set with a caller-supplied `3n × 3n` noise covariance.
    pub fn with_noise(
        refs: Vec<Vec3>,
        obs: Vec<Vec3>,
        noise: DMatrix<f64>,
    ) -> Result<Self, FilterError> {
        check_refs(&refs)?;
        if obs.len() != refs.len() {
            return Err(FilterError::ShapeMismatch {
                what: "observations",
                expected: refs.len(),
                got: obs.len(),
            });
        }
        if noise.nrows() != 3 * refs.len() || noise.ncols() != 3 * refs.len() {
            return Err(FilterError::ShapeMismatch {
                what: "noise covariance dimension",
                expected: 3 * refs.len(),
                got: noise.nrows(),
            });
        }
        Ok(Self { refs, obs, noise })
    }

    pub fn refs(&self) -> &[Vec3] {
        &self.refs
    }

    pub fn obs(&self) -> &[Vec3] {
        &self.obs
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    /// Stacked observations `ỹ`.
    pub fn stacked_obs(&self) -> DVector<f64> {
        stack(&self.obs)
    }
}

fn check_refs(refs: &[Vec3]) -> Result<(), FilterError> {
    if refs.is_empty() {
        return Err(FilterError::EmptyMeasurementSet);
    }
    for (index, r) in refs.iter().enumerate() {
        let norm = r.norm();
        let unit = (norm - 1.0).abs() <= 1e-9;
        if !unit {
            return Err(FilterError::NonUnitReference { index, norm });
        }
    }
    Ok(())
}

fn stack(vs: &[Vec3]) -> DVector<f64> {
    DVector::from_iterator(3 * vs.len(), vs.iter().flat_map(|v| v.iter().copied()))
}

/// Sensitivity `H` with block rows `[[A(q̂⁻) rᵢ ×] | 0₃ₓ₃]`.
pub fn measurement_matrix(
    q_minus: &UnitQuaternion,
    refs: &[Vec3],
) -> Result<MatrixXx6<f64>, FilterError> {
    check_refs(refs)?;
    let a = attitude_matrix(q_minus);
    let mut h = MatrixXx6::zeros(3 * refs.len());
    for (i, r) in refs.iter().enumerate() {
        h.fixed_view_mut::<3, 3>(3 * i, 0)
            .copy_from(&cross_matrix(&(a * r)));
    }
    Ok(h)
}

/// Stacked predictions `A(q̂⁻) rᵢ`.
pub fn predicted_measurement(
    q_minus: &UnitQuaternion,
    refs: &[Vec3],
) -> Result<DVector<f64>, FilterError> {
    check_refs(refs)?;
    let a = attitude_matrix(q_minus);
    let predicted: Vec<Vec3> = refs.iter().map(|r| a * r).collect();
    Ok(stack(&predicted))
}

/// Kalman gain `K = P Hᵀ (H P Hᵀ + R)⁻¹`, solved through a Cholesky
/// factorization of the innovation covariance.
pub fn kalman_gain(
    p_minus: &Covariance6,
    h: &MatrixXx6<f64>,
    r: &DMatrix<f64>,
) -> Result<Matrix6xX<f64>, FilterError> {
    let m = h.nrows();
    if r.nrows() != m || r.ncols() != m {
        return Err(FilterError::ShapeMismatch {
            what: "noise covariance dimension",
            expected: m,
            got: r.nrows(),
        });
    }
    let hp: MatrixXx6<f64> = h * p_minus;
    let mut s: DMatrix<f64> = &hp * h.transpose() + r;
    s = (&s + s.transpose()) * 0.5;
    let trace = s.trace();

    let chol = match s.clone().cholesky() {
        Some(chol) => chol,
        None => {
            let min_pivot = s.diagonal().min();
            return Err(FilterError::SingularInnovation {
                min_pivot,
                trace,
                condition: f64::INFINITY,
            });
        }
    };
    let pivots = chol.l_dirty().diagonal().map(|d| d * d);
    let (min_pivot, max_pivot) = (pivots.min(), pivots.max());
    let well_conditioned = min_pivot >= PIVOT_TOLERANCE * trace;
    if !well_conditioned {
        return Err(FilterError::SingularInnovation {
            min_pivot,
            trace,
            condition: max_pivot / min_pivot,
        });
    }
    // S Kᵀ = H P, since S and P are symmetric.
    let kt = chol.solve(&DMatrix::from_iterator(m, 6, hp.iter().copied()));
    Ok(Matrix6xX::from_iterator(m, kt.transpose().iter().copied()))
}

/// Joseph-form covariance update `(I − KH) P (I − KH)ᵀ + K R Kᵀ`, symmetrized.
pub fn joseph_update(
    p_minus: &Covariance6,
    k: &Matrix6xX<f64>,
    h: &MatrixXx6<f64>,
    r: &DMatrix<f64>,
) -> Result<Covariance6, FilterError> {
    let m = h.nrows();
    if k.ncols() != m {
        return Err(FilterError::ShapeMismatch {
            what: "gain columns",
            expected: m,
            got: k.ncols(),
        });
    }
    if r.nrows() != m || r.ncols() != m {
        return Err(FilterError::ShapeMismatch {
            what: "noise covariance dimension",
            expected: m,
            got: r.nrows(),
        });
    }
    let i_kh: Mat6 = Mat6::identity() - k * h;
    let krk: Mat6 = k * r * k.transpose();
    Ok(symmetrize(&(i_kh * p_minus * i_kh.transpose() + krk)))
}

/// Error-state estimate `Δx̂ = K (ỹ − h(x̂⁻))`.
pub fn error_update(
    k: &Matrix6xX<f64>,
    y_obs: &DVector<f64>,
    y_pred: &DVector<f64>,
) -> Result<ErrorEstimate, FilterError> {
    if y_obs.len() != y_pred.len() || y_obs.len() != k.ncols() {
        return Err(FilterError::ShapeMismatch {
            what: "innovation length",
            expected: k.ncols(),
            got: y_obs.len().max(y_pred.len()),
        });
    }
    let dx = k * (y_obs - y_pred);
    Ok(ErrorEstimate {
        alpha_hat: dx.fixed_rows::<3>(0).into_owned(),
        db_hat: dx.fixed_rows::<3>(3).into_owned(),
    })
}

pub fn symmetrize(p: &Mat6) -> Mat6 {
    (p + p.transpose()) * 0.5
}

impl ErrorModel {
    /// Continuous-time error dynamics `F` about the current estimate.
    ///
    /// Classical: `α̇ = −[ω̂×]α − δb`, `δḃ = 0`, with `ω̂ = ω̃ − b̂`.
    ///
    /// Geometric: substituting `b − b̂ ≈ db + [b̂×]α` into the classical
    /// attitude dynamics gives `α̇ = −[ω̃×]α − db`; differentiating
    /// `db = b − (I − [α×]) b̂` with `b̂` held constant gives
    /// `ḋb = [b̂×] α̇ = [b̂×][ω̃×] α + [b̂×] db` (noise-free part).
    pub fn dynamics(self, omega_meas: &Vec3, b_hat: &Vec3) -> Mat6 {
        let mut f = Mat6::zeros();
        f.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(-Mat3::identity()));
        match self {
            ErrorModel::Classical => {
                let omega_hat = omega_meas - b_hat;
                f.fixed_view_mut::<3, 3>(0, 0)
                    .copy_from(&(-cross_matrix(&omega_hat)));
            }
            ErrorModel::Geometric => {
                let w = cross_matrix(omega_meas);
                let b = cross_matrix(b_hat);
                f.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-w));
                f.fixed_view_mut::<3, 3>(3, 0).copy_from(&(b * w));
                f.fixed_view_mut::<3, 3>(3, 3).copy_from(&b);
            }
        }
        f
    }

    /// Map from `[η_v; η_u]` (angle and bias random walk) into the error rates.
    pub fn noise_input(self, b_hat: &Vec3) -> Mat6 {
        let mut g = Mat6::identity();
        g.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(-Mat3::identity()));
        if self == ErrorModel::Geometric {
            g.fixed_view_mut::<3, 3>(3, 0)
                .copy_from(&cross_matrix(b_hat));
        }
        g
    }

    /// Bias error of an estimate against the true bias, given the attitude
    /// error `alpha`. The geometric form uses the first-order attitude matrix.
    pub fn bias_error(self, alpha: &Vec3, b_true: &Vec3, b_hat: &Vec3) -> Vec3 {
        match self {
            ErrorModel::Classical => b_true - b_hat,
            ErrorModel::Geometric => b_true - small_angle_dcm(alpha) * b_hat,
        }
    }
}

/// Second-order series `I + F dt + (F dt)²/2`.
pub fn transition_matrix(f: &Mat6, dt: f64) -> Mat6 {
    let fdt = f * dt;
    Mat6::identity() + fdt + fdt * fdt * 0.5
}

/// Discrete process noise by trapezoidal integration of `G Q_c Gᵀ` through `Φ`.
pub fn discrete_process_noise(phi: &Mat6, g: &Mat6, noise: &NoiseParams, dt: f64) -> Mat6 {
    let mut qn = Mat6::zeros();
    qn.fixed_view_mut::<3, 3>(0, 0)
        .fill_diagonal(noise.sigma_v * noise.sigma_v);
    qn.fixed_view_mut::<3, 3>(3, 3)
        .fill_diagonal(noise.sigma_u * noise.sigma_u);
    let qc = g * qn * g.transpose();
    symmetrize(&((phi * qc * phi.transpose() + qc) * (0.5 * dt)))
}

/// Attitude error rotation vector `α` with `q_true = δq(α) ⊗ q̂`.
pub fn attitude_error(q_true: &UnitQuaternion, q_hat: &UnitQuaternion) -> Vec3 {
    q_true.compose(&q_hat.inverse()).to_rotation_vector()
}

/// Time update over one gyro sample.
///
/// The quaternion is advanced exactly at the constant estimated rate
/// `ω̂ = ω̃ − b̂`; the bias estimate is unchanged; the covariance follows
/// `Φ P Φᵀ + Q_d` with `F` chosen by `model`.
pub fn propagate(
    state: &FilterState,
    p: &Covariance6,
    gyro: &GyroSample,
    noise: &NoiseParams,
    model: ErrorModel,
) -> Result<(FilterState, Covariance6), FilterError> {
    if !(gyro.dt.is_finite() && gyro.dt > 0.0) {
        return Err(FilterError::InvalidTimeStep(gyro.dt));
    }
    let omega_hat = gyro.omega_meas - state.b_hat;
    let q_next = UnitQuaternion::from_rotation_vector(&(omega_hat * gyro.dt)).compose(&state.q_hat);

    let f = model.dynamics(&gyro.omega_meas, &state.b_hat);
    let phi = transition_matrix(&f, gyro.dt);
    let g = model.noise_input(&state.b_hat);
    let qd = discrete_process_noise(&phi, &g, noise, gyro.dt);
    let p_next = symmetrize(&(phi * p * phi.transpose() + qd));

    Ok((
        FilterState {
            q_hat: q_next,
            b_hat: state.b_hat,
        },
        p_next,
    ))
}

/// Normalized estimation error squared `eᵀ P⁻¹ e`.
///
/// Returns `None` if `P` is not positive definite.
pub fn nees(error: &nalgebra::Vector6<f64>, p: &Covariance6) -> Option<f64> {
    let chol = nalgebra::Cholesky::<f64, U6>::new(*p)?;
    Some(error.dot(&chol.solve(error)))
}
