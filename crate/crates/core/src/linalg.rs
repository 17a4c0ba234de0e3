//! Small fixed-size helpers used inside grid sweeps.

use crate::scalar::Scalar;
use nalgebra::{Matrix3, Vector3};

/// Inverse through the adjugate. Returns `None` when `|det|` does not exceed
/// `threshold`.
pub fn inverse_adjugate<T: Scalar>(m: &Matrix3<T>, threshold: T) -> Option<Matrix3<T>> {
    let c0 = m.column(1).cross(&m.column(2));
    let c1 = m.column(2).cross(&m.column(0));
    let c2 = m.column(0).cross(&m.column(1));
    let det = m.column(0).dot(&c0);
    if !(det.abs() > threshold) {
        return None;
    }
    let inv_det = T::one() / det;
    Some(Matrix3::from_rows(&[
        c0.transpose() * inv_det,
        c1.transpose() * inv_det,
        c2.transpose() * inv_det,
    ]))
}

/// Determinant divided by the product of the row norms; lies in `[-1, 1]`.
pub fn normalized_det<T: Scalar>(m: &Matrix3<T>) -> T {
    let scale = m.row(0).norm() * m.row(1).norm() * m.row(2).norm();
    if scale == T::zero() {
        return T::zero();
    }
    m.determinant() / scale
}

/// Largest singular value.
pub fn spectral_norm<T: Scalar>(m: &Matrix3<T>) -> T {
    m.singular_values().max()
}

/// Ratio of extreme singular values (`∞` for a singular matrix).
pub fn condition_number<T: Scalar>(m: &Matrix3<T>) -> T {
    let sv = m.singular_values();
    let min = sv.min();
    if min == T::zero() {
        return T::max_value().unwrap_or_else(T::one);
    }
    sv.max() / min
}

/// Signed volume `det[a, b, c]`.
#[inline]
pub fn triple<T: Scalar>(a: &Vector3<T>, b: &Vector3<T>, c: &Vector3<T>) -> T {
    a.dot(&b.cross(c))
}
