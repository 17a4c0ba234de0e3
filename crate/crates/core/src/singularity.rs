//! Type I and type II singularities of a leg.

use crate::jacobians::{build_jacobians, JacobianError};
use crate::linalg::{normalized_det, triple};
use crate::model::{LegGeometry, LegState};
use crate::scalar::Scalar;
use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

/// Default threshold on scale-normalised quantities.
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SingularityError {
    #[error("coplanarity test requires coincident spherical centres (e_y = f_y = 0, e_b = f_b); got e_y = {e_y}, f_y = {f_y}")]
    NotCoincident { e_y: f64, f_y: f64 },
}

/// `((p − d)·u1, (e − g)·u2, (f − h)·u3)`, the diagonal of `K`.
pub fn check_type1<T: Scalar>(state: &LegState<T>, geom: &LegGeometry<T>) -> [T; 3] {
    let x = geom.frame.x;
    let u1 = x.cross(&(state.d - geom.a));
    let u2 = x.cross(&(state.g - geom.b()));
    let u3 = x.cross(&(state.h - geom.c()));
    [
        (state.p - state.d).dot(&u1),
        (state.e - state.g).dot(&u2),
        (state.f - state.h).dot(&u3),
    ]
}

/// Rows `x_f × Qz_f`, `Qe_b × (e − g)` and `Qf_b × (f − h)`.
pub fn reduced_jacobian<T: Scalar>(state: &LegState<T>, geom: &LegGeometry<T>) -> Matrix3<T> {
    let qe = state.q * geom.e_b;
    let qf = state.q * geom.f_b;
    Matrix3::from_rows(&[
        geom.frame.x.cross(&state.qz()).transpose(),
        qe.cross(&(state.e - state.g)).transpose(),
        qf.cross(&(state.f - state.h)).transpose(),
    ])
}

/// `det[e − g, e − h, Q·e_b]`; vanishes exactly at type II singularities when
/// `E` and `F` coincide.
pub fn check_coplanarity<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
) -> Result<T, SingularityError> {
    if geom.e_b.y != T::zero() || geom.f_b.y != T::zero() || geom.e_b != geom.f_b {
        return Err(SingularityError::NotCoincident {
            e_y: geom.e_b.y.as_f64(),
            f_y: geom.f_b.y.as_f64(),
        });
    }
    let qe = state.q * geom.e_b;
    Ok(triple(&(state.e - state.g), &(state.e - state.h), &qe))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeOneReport {
    pub flags: [bool; 3],
    /// Raw diagonal entries of `K`.
    pub margins: [f64; 3],
    /// Margins divided by the norms of the two vectors in each product.
    pub normalized: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeTwoReport {
    pub flag: bool,
    pub det_j: f64,
    pub det_j_normalized: f64,
    pub det_j_reduced: f64,
    pub det_j_reduced_normalized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularityReport {
    pub type1: TypeOneReport,
    /// `None` when `J` cannot be formed because `J_p` is singular.
    pub type2: Option<TypeTwoReport>,
    pub coplanarity_volume: Option<f64>,
}

impl SingularityReport {
    pub fn any(&self) -> bool {
        self.type1.flags.iter().any(|&f| f) || self.type2.map_or(true, |t| t.flag)
    }
}

/// Classifies a state against the threshold `eps_rel` applied to normalised
/// margins and determinants.
pub fn classify<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
    eps_rel: T,
) -> SingularityReport {
    let x = geom.frame.x;
    let margins = check_type1(state, geom);
    let pairs = [
        (state.p - state.d, x.cross(&(state.d - geom.a))),
        (state.e - state.g, x.cross(&(state.g - geom.b()))),
        (state.f - state.h, x.cross(&(state.h - geom.c()))),
    ];
    let mut normalized = [0.0; 3];
    let mut flags = [false; 3];
    for i in 0..3 {
        let scale = pairs[i].0.norm() * pairs[i].1.norm();
        let n = if scale > T::zero() {
            margins[i] / scale
        } else {
            T::zero()
        };
        normalized[i] = n.as_f64();
        flags[i] = n.abs() < eps_rel;
    }
    let type1 = TypeOneReport {
        flags,
        margins: margins.map(|m| m.as_f64()),
        normalized,
    };

    let reduced = reduced_jacobian(state, geom);
    let reduced_norm = normalized_det(&reduced);
    let type2 = match build_jacobians(state, geom) {
        Ok(pair) => {
            let det_norm = normalized_det(&pair.j);
            Some(TypeTwoReport {
                flag: det_norm.abs() < eps_rel,
                det_j: pair.j.determinant().as_f64(),
                det_j_normalized: det_norm.as_f64(),
                det_j_reduced: reduced.determinant().as_f64(),
                det_j_reduced_normalized: reduced_norm.as_f64(),
            })
        }
        Err(JacobianError::TypeOne { .. } | JacobianError::TypeTwo { .. }) => None,
    };
    SingularityReport {
        type1,
        type2,
        coplanarity_volume: check_coplanarity(state, geom).ok().map(|v| v.as_f64()),
    }
}

/// Unit vectors of the three rotation axes blocked when the actuators are
/// locked; rows of [`reduced_jacobian`] normalised.
pub fn blocked_axes<T: Scalar>(state: &LegState<T>, geom: &LegGeometry<T>) -> [Vector3<T>; 3] {
    let m = reduced_jacobian(state, geom);
    [0, 1, 2].map(|i| {
        let r: Vector3<T> = m.row(i).transpose();
        let n = r.norm();
        if n > T::zero() {
            r / n
        } else {
            r
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobians::build_jacobians;
    use crate::kinematics::{disk_centre, solve_branch};
    use crate::model::Branch;

    fn reference() -> LegGeometry<f64> {
        LegGeometry::reference_design()
    }

    fn state_at(g: &LegGeometry<f64>, p: Vector3<f64>) -> LegState<f64> {
        solve_branch(&p, g, Branch::from_index(0).unwrap()).unwrap()
    }

    #[test]
    fn type1_margins_are_k_diagonal() {
        let g = reference();
        let s = state_at(&g, Vector3::new(0.05, 0.3, 0.02));
        let k = build_jacobians(&s, &g).unwrap().k;
        assert_eq!(check_type1(&s, &g), [k[(0, 0)], k[(1, 1)], k[(2, 2)]]);
    }

    #[test]
    fn disk_centre_is_regular() {
        let g = reference();
        let s = state_at(&g, disk_centre(&g));
        let report = classify(&s, &g, DEFAULT_EPS);
        assert!(!report.any(), "{report:?}");
        assert!(report.coplanarity_volume.unwrap().abs() > 1e-6);
    }

    #[test]
    fn boundary_point_is_type_one() {
        let g = reference();
        // Outer equator of the tube: p − d is radial, hence parallel to d − a.
        let s = state_at(&g, Vector3::new(0.0, g.l1 + g.d_p, 0.0));
        let report = classify(&s, &g, DEFAULT_EPS);
        assert!(report.type1.flags[0], "{report:?}");
    }

    #[test]
    fn coplanarity_requires_coincident_centres() {
        let mut g = reference();
        g.e_b.y = 0.01;
        g.f_b.y = -0.01;
        let s = state_at(&g, disk_centre(&g));
        assert!(check_coplanarity(&s, &g).is_err());
    }

    #[test]
    fn collinear_points_give_zero_volume() {
        let g = reference();
        let mut s = state_at(&g, disk_centre(&g));
        s.h = s.g;
        assert!(check_coplanarity(&s, &g).unwrap().abs() < 1e-16);
    }

    #[test]
    fn type1_when_dp_meets_axis() {
        let g = reference();
        let mut s = state_at(&g, disk_centre(&g));
        // p − d lying in the plane spanned by x_f and d − a.
        s.p = s.d + (g.frame.x * 0.2 - (s.d - g.a) * 0.5).normalize() * g.d_p;
        assert!(check_type1(&s, &g)[0].abs() < 1e-12);
    }
}
