//! Truth model and sensor simulation.
//!
//! # Random numbers
//!
//! Every scenario draws from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Each noise source owns a separate ChaCha stream
//! selected with `set_stream`, so adding draws to one source never shifts
//! another:
//!
//! | stream | source                      |
//! |--------|-----------------------------|
//! | 0      | initial estimate errors     |
//! | 1      | gyro white noise            |
//! | 2      | bias random walk            |
//! | 3      | vector observation noise    |
//!
//! Gaussian samples use `rand_distr::StandardNormal`.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::attitude::{attitude_matrix, Mat6, UnitQuaternion, Vec3};
use crate::filter::{FilterError, FilterState, GyroSample, MeasurementSet, NoiseParams};

pub const STREAM_INITIAL_ERROR: u64 = 0;
pub const STREAM_GYRO: u64 = 1;
pub const STREAM_BIAS: u64 = 2;
pub const STREAM_VECTOR: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} ({numerator} s) is not an integer multiple of {denominator} s")]
    NonIntegerRatio {
        name: &'static str,
        numerator: f64,
        denominator: f64,
    },
    #[error("scenario needs at least one reference vector")]
    NoReferences,
    #[error("reference vector {0} is zero or non-finite")]
    BadReference(usize),
    #[error("{refs} reference vectors but {sigmas} measurement sigmas")]
    SigmaCount { refs: usize, sigmas: usize },
    #[error("noise parameter {name} must be non-negative, got {value}")]
    NegativeNoise { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub q_true: UnitQuaternion,
    pub b_true: Vec3,
    pub t: f64,
}

/// True body rate as a function of time (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub enum RateProfile {
    Constant(Vec3),
    /// `offset + amplitude ⊙ sin(2π frequency t)` per axis.
    Sinusoidal {
        offset: Vec3,
        amplitude: Vec3,
        frequency_hz: Vec3,
    },
}

impl RateProfile {
    pub fn rate(&self, t: f64) -> Vec3 {
        match self {
            RateProfile::Constant(w) => *w,
            RateProfile::Sinusoidal {
                offset,
                amplitude,
                frequency_hz,
            } => Vec3::from_fn(|i, _| {
                offset[i] + amplitude[i] * (2.0 * std::f64::consts::PI * frequency_hz[i] * t).sin()
            }),
        }
    }
}

/// Initial estimate error, in the classical sense `q = δq(α) ⊗ q̂`,
/// `b̂ = b − δb`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialError {
    Fixed {
        attitude: Vec3,
        bias: Vec3,
    },
    /// Drawn from the initial covariance.
    Sampled,
}

/// Scenario description. All quantities in SI units and radians.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub gyro_dt: f64,
    pub meas_dt: f64,
    pub rate: RateProfile,
    pub initial_attitude: UnitQuaternion,
    pub initial_bias: Vec3,
    pub noise: NoiseParams,
    pub refs: Vec<Vec3>,
    pub initial_error: InitialError,
    /// One-sigma initial attitude uncertainty per axis (rad).
    pub initial_sigma_attitude: Vec3,
    /// One-sigma initial bias uncertainty per axis (rad/s).
    pub initial_sigma_bias: Vec3,
    pub seed: u64,
}

impl ScenarioConfig {
    /// One hour at 10 Hz gyro / 1 Hz vector rate, two orthogonal references,
    /// star-tracker class vector noise.
    pub fn desk_default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        let deg_per_hour = deg / 3600.0;
        Self {
            duration: 3600.0,
            gyro_dt: 0.1,
            meas_dt: 1.0,
            rate: RateProfile::Sinusoidal {
                offset: Vec3::zeros(),
                amplitude: Vec3::new(0.1, 0.05, 0.08) * deg,
                frequency_hz: Vec3::new(0.01, 0.007, 0.013),
            },
            initial_attitude: UnitQuaternion::identity(),
            initial_bias: Vec3::repeat(0.1 * deg_per_hour),
            noise: NoiseParams {
                sigma_v: 1e-5,
                sigma_u: 1e-8,
                sigma_meas: vec![0.001 * deg; 2],
            },
            refs: vec![Vec3::x(), Vec3::y()],
            initial_error: InitialError::Sampled,
            initial_sigma_attitude: Vec3::repeat(0.05 * deg),
            initial_sigma_bias: Vec3::repeat(0.2 * deg_per_hour),
            seed: 1,
        }
    }

    /// Number of gyro steps and gyro steps per measurement.
    pub fn validate(&self) -> Result<(usize, usize), SimError> {
        for (name, value) in [
            ("duration", self.duration),
            ("gyro dt", self.gyro_dt),
            ("measurement dt", self.meas_dt),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimError::NonPositive { name, value });
            }
        }
        let steps = integer_ratio("duration", self.duration, self.gyro_dt)?;
        let ratio = integer_ratio("measurement dt", self.meas_dt, self.gyro_dt)?;
        if self.refs.is_empty() {
            return Err(SimError::NoReferences);
        }
        if let Some(i) = self
            .refs
            .iter()
            .position(|r| !(r.iter().all(|x| x.is_finite()) && r.norm() > 0.0))
        {
            return Err(SimError::BadReference(i));
        }
        if self.noise.sigma_meas.len() != self.refs.len() {
            return Err(SimError::SigmaCount {
                refs: self.refs.len(),
                sigmas: self.noise.sigma_meas.len(),
            });
        }
        let noise_terms = [
            ("sigma_v", self.noise.sigma_v),
            ("sigma_u", self.noise.sigma_u),
        ]
        .into_iter()
        .chain(self.noise.sigma_meas.iter().map(|&s| ("sigma_meas", s)))
        .chain(
            self.initial_sigma_attitude
                .iter()
                .map(|&s| ("initial attitude sigma", s)),
        )
        .chain(
            self.initial_sigma_bias
                .iter()
                .map(|&s| ("initial bias sigma", s)),
        );
        for (name, value) in noise_terms {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SimError::NegativeNoise { name, value });
            }
        }
        Ok((steps, ratio))
    }

    /// Initial covariance, diagonal in the configured sigmas.
    pub fn initial_covariance(&self) -> Mat6 {
        let mut diag = nalgebra::Vector6::zeros();
        for i in 0..3 {
            diag[i] = self.initial_sigma_attitude[i].powi(2);
            diag[3 + i] = self.initial_sigma_bias[i].powi(2);
        }
        Mat6::from_diagonal(&diag)
    }
}

fn integer_ratio(name: &'static str, numerator: f64, denominator: f64) -> Result<usize, SimError> {
    let ratio = numerator / denominator;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio {
        return Err(SimError::NonIntegerRatio {
            name,
            numerator,
            denominator,
        });
    }
    Ok(rounded as usize)
}

/// Observations taken after gyro step `step`, i.e. at `truth[step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEpoch {
    pub step: usize,
    pub obs: Vec<Vec3>,
}

/// A generated scenario. `truth[k]` is the state at `t = k·dt`;
/// `gyro[k]` drives the step from `truth[k]` to `truth[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: Vec<TruthState>,
    pub gyro: Vec<GyroSample>,
    pub epochs: Vec<MeasurementEpoch>,
    pub refs: Vec<Vec3>,
    pub sigma_meas: Vec<f64>,
    pub initial_estimate: FilterState,
    pub initial_covariance: Mat6,
}

impl Scenario {
    pub fn measurement_set(
        &self,
        epoch: &MeasurementEpoch,
        sigma_meas: &[f64],
    ) -> Result<MeasurementSet, FilterError> {
        MeasurementSet::new(self.refs.clone(), epoch.obs.clone(), sigma_meas)
    }
}

pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::from_fn(|_, _| rng.sample(StandardNormal))
}

/// Advances the truth by the exact rotation `ω dt` and a bias random-walk step.
pub fn step_truth(
    s: &TruthState,
    omega_true: &Vec3,
    dt: f64,
    noise: &NoiseParams,
    rng: &mut ChaCha8Rng,
) -> TruthState {
    debug_assert!(dt > 0.0);
    let q_true = UnitQuaternion::from_rotation_vector(&(omega_true * dt)).compose(&s.q_true);
    let b_true = if noise.sigma_u > 0.0 {
        s.b_true + normal3(rng) * (noise.sigma_u * dt.sqrt())
    } else {
        s.b_true
    };
    TruthState {
        q_true,
        b_true,
        t: s.t + dt,
    }
}

/// `ω̃ = ω + b + σ_v/√dt · w`.
pub fn gyro_measure(
    omega_true: &Vec3,
    b_true: &Vec3,
    dt: f64,
    noise: &NoiseParams,
    rng: &mut ChaCha8Rng,
) -> GyroSample {
    let mut omega_meas = omega_true + b_true;
    if noise.sigma_v > 0.0 {
        omega_meas += normal3(rng) * (noise.sigma_v / dt.sqrt());
    }
    GyroSample { omega_meas, dt }
}

/// `ỹᵢ = A(q) rᵢ + σᵢ wᵢ`, without renormalization.
pub fn vector_measure(
    q_true: &UnitQuaternion,
    refs: &[Vec3],
    sigma_meas: &[f64],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec3> {
    let a = attitude_matrix(q_true);
    refs.iter()
        .zip(sigma_meas)
        .map(|(r, &sigma)| {
            let clean = a * r;
            if sigma > 0.0 {
                clean + normal3(rng) * sigma
            } else {
                clean
            }
        })
        .collect()
}

/// Generates the full truth trajectory, sensor streams and initial estimate.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario, SimError> {
    let (steps, ratio) = cfg.validate()?;
    let refs: Vec<Vec3> = cfg.refs.iter().map(|r| r.normalize()).collect();

    let mut init_rng = rng_stream(cfg.seed, STREAM_INITIAL_ERROR);
    let mut gyro_rng = rng_stream(cfg.seed, STREAM_GYRO);
    let mut bias_rng = rng_stream(cfg.seed, STREAM_BIAS);
    let mut vector_rng = rng_stream(cfg.seed, STREAM_VECTOR);

    let mut truth = Vec::with_capacity(steps + 1);
    let mut gyro = Vec::with_capacity(steps);
    let mut epochs = Vec::with_capacity(steps / ratio);

    let mut current = TruthState {
        q_true: cfg.initial_attitude,
        b_true: cfg.initial_bias,
        t: 0.0,
    };
    truth.push(current);
    for k in 0..steps {
        let t = k as f64 * cfg.gyro_dt;
        let omega = cfg.rate.rate(t);
        gyro.push(gyro_measure(
            &omega,
            &current.b_true,
            cfg.gyro_dt,
            &cfg.noise,
            &mut gyro_rng,
        ));
        current = step_truth(&current, &omega, cfg.gyro_dt, &cfg.noise, &mut bias_rng);
        // Pin time to the grid so long runs do not accumulate drift.
        current.t = (k + 1) as f64 * cfg.gyro_dt;
        truth.push(current);
        if (k + 1) % ratio == 0 {
            epochs.push(MeasurementEpoch {
                step: k + 1,
                obs: vector_measure(
                    &current.q_true,
                    &refs,
                    &cfg.noise.sigma_meas,
                    &mut vector_rng,
                ),
            });
        }
    }

    let (alpha0, dbias0) = match &cfg.initial_error {
        InitialError::Fixed { attitude, bias } => (*attitude, *bias),
        InitialError::Sampled => {
            let a = normal3(&mut init_rng).component_mul(&cfg.initial_sigma_attitude);
            let b = normal3(&mut init_rng).component_mul(&cfg.initial_sigma_bias);
            (a, b)
        }
    };
    let start = truth[0];
    let initial_estimate = FilterState {
        q_hat: UnitQuaternion::from_rotation_vector(&(-alpha0)).compose(&start.q_true),
        b_hat: start.b_true - dbias0,
    };

    Ok(Scenario {
        truth,
        gyro,
        epochs,
        refs,
        sigma_meas: cfg.noise.sigma_meas.clone(),
        initial_estimate,
        initial_covariance: cfg.initial_covariance(),
    })
}
