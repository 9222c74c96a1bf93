//! Small SO(3) helpers used by the rod integrator.

use nalgebra::{Matrix3, Vector3};

/// Skew-symmetric matrix with `hat(v) * w == v.cross(&w)`.
#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Pulls a near-orthogonal matrix back onto SO(3) with two Björck
/// iterations `R <- R (3I - RᵀR) / 2`, which converge to the polar factor.
#[inline]
pub fn reproject(r: &Matrix3<f64>) -> Matrix3<f64> {
    let mut q = *r;
    for _ in 0..2 {
        let gram = q.transpose() * q;
        q = q * (Matrix3::identity() * 3.0 - gram) * 0.5;
    }
    q
}

/// `max |(RᵀR - I)_ij|`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Rotation by `angle` about unit `axis` (Rodrigues).
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = hat(axis);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}
