#![allow(dead_code)]

use std::path::PathBuf;

use gmekf::attitude::{attitude_matrix, quat_correct, Mat6, UnitQuaternion, Vec3};
use gmekf::filter::MeasurementSet;
use nalgebra::{Matrix6, Vector4};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

pub fn random_quat(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    loop {
        let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 {
            return UnitQuaternion::new_normalize(v).unwrap();
        }
    }
}

/// Uniform in the ball of radius `radius`.
pub fn random_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            return v * radius;
        }
    }
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = random_ball(rng, 1.0);
        if v.norm() > 0.1 {
            return v.normalize();
        }
    }
}

/// SPD with eigenvalues spread over `[0.1, 1] · scale²` and a random basis.
pub fn random_spd6(rng: &mut ChaCha8Rng, scale: f64) -> Mat6 {
    let a = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let q = a.qr().q();
    let d = Matrix6::from_diagonal(&nalgebra::Vector6::from_fn(|_, _| {
        rng.random_range(0.1..1.0) * scale * scale
    }));
    let p = q * d * q.transpose();
    (p + p.transpose()) * 0.5
}

/// Measurement set with 1 to 4 random references observed from a truth
/// near `q_hat`, with additive noise of `sigma`.
pub fn random_measurement(
    rng: &mut ChaCha8Rng,
    q_hat: &UnitQuaternion,
    sigma: f64,
) -> MeasurementSet {
    let n = rng.random_range(1..=4);
    let refs: Vec<Vec3> = (0..n).map(|_| random_unit(rng)).collect();
    let truth = quat_correct(q_hat, &random_ball(rng, 1e-2));
    let a = attitude_matrix(&truth);
    let obs = refs
        .iter()
        .map(|r| a * r + random_ball(rng, sigma))
        .collect();
    MeasurementSet::new(refs, obs, &vec![sigma; n]).unwrap()
}
