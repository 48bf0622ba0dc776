//! Random draws shared by the unit tests.

use nalgebra::{DMatrix, Vector4};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::attitude::{Mat6, UnitQuaternion, Vec3};

pub fn random_quat(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    loop {
        let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 {
            return UnitQuaternion::new_normalize(v).unwrap();
        }
    }
}

pub fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    if scale == 0.0 {
        return Vec3::zeros();
    }
    Vec3::from_fn(|_, _| rng.random_range(-scale..scale))
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = random_vec(rng, 1.0);
        if v.norm() > 0.1 {
            return v.normalize();
        }
    }
}

pub fn random_refs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| random_unit(rng)).collect()
}

/// `L Lᵀ + εI` with entries of `L` uniform in `±scale^½`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let s = scale.sqrt();
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-s..s));
    &l * l.transpose() + DMatrix::identity(n, n) * (0.1 * scale)
}

pub fn random_spd6(rng: &mut ChaCha8Rng, scale: f64) -> Mat6 {
    let m = random_spd(rng, 6, scale);
    Mat6::from_iterator(m.iter().copied())
}

pub fn assert_symmetric_psd(p: &Mat6) {
    assert!(
        (p - p.transpose()).norm() <= 1e-12 * p.norm(),
        "asymmetric: {p}"
    );
    let min_eig = p.symmetric_eigenvalues().min();
    assert!(
        min_eig >= -1e-10 * p.trace(),
        "indefinite: λmin = {min_eig}"
    );
}
