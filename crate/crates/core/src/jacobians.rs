//! Twist algebra and the velocity relation `J·ṗ = K·θ̇` of a leg.

use crate::linalg::inverse_adjugate;
use crate::model::{LegGeometry, LegState};
use crate::scalar::Scalar;
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Instantaneous screw: angular velocity and the linear velocity of the
/// body point currently at `ref_point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist<T: Scalar> {
    pub omega: Vector3<T>,
    pub v_ref: Vector3<T>,
    pub ref_point: Vector3<T>,
}

impl<T: Scalar> Twist<T> {
    /// Pure rotation with angular velocity `omega` about a line through `point`.
    pub fn rotation(point: &Vector3<T>, omega: &Vector3<T>) -> Self {
        Self {
            omega: *omega,
            v_ref: Vector3::zeros(),
            ref_point: *point,
        }
    }

    /// Zero-pitch twist of line `k − j` with amplitude `‖k − j‖`.
    pub fn zero_pitch(j: &Vector3<T>, k: &Vector3<T>) -> Self {
        Self::rotation(j, &(k - j))
    }

    /// The same twist described at another reference point.
    pub fn at(&self, point: &Vector3<T>) -> Self {
        Self {
            omega: self.omega,
            v_ref: self.v_ref + self.omega.cross(&(point - self.ref_point)),
            ref_point: *point,
        }
    }

    /// Velocity of the body point located at `point`.
    pub fn velocity_at(&self, point: &Vector3<T>) -> Vector3<T> {
        self.at(point).v_ref
    }
}

impl<T: Scalar> std::ops::Add for Twist<T> {
    type Output = Twist<T>;

    fn add(self, rhs: Self) -> Self {
        let rhs = rhs.at(&self.ref_point);
        Twist {
            omega: self.omega + rhs.omega,
            v_ref: self.v_ref + rhs.v_ref,
            ref_point: self.ref_point,
        }
    }
}

/// `ω1ᵀ·v2 + ω2ᵀ·v1`, with `t2` re-expressed at the reference point of `t1`.
pub fn reciprocal_product<T: Scalar>(t1: &Twist<T>, t2: &Twist<T>) -> T {
    let t2 = t2.at(&t1.ref_point);
    t1.omega.dot(&t2.v_ref) + t2.omega.dot(&t1.v_ref)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JacobianError {
    #[error(
        "J_p is singular (det {det:.3e}): x_f, p − a and p − d are coplanar (type I singularity)"
    )]
    TypeOne { det: f64 },
    #[error("J is singular (normalised det {det:.3e}): type II singularity")]
    TypeTwo { det: f64 },
}

/// Matrices of the velocity relation of one leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianPair<T: Scalar> {
    pub j: Matrix3<T>,
    pub k: Matrix3<T>,
    /// Maps `θ̇s = [θ̇1, θ̇s2, θ̇s3]` to the angular velocity of the body.
    pub j_omega: Matrix3<T>,
    /// Maps `θ̇s` to `ṗ`.
    pub j_p: Matrix3<T>,
    pub u1: Vector3<T>,
    pub u2: Vector3<T>,
    pub u3: Vector3<T>,
}

impl<T: Scalar> JacobianPair<T> {
    /// `J⁻¹·K`, the map from actuated rates to `ṗ`. Its columns are the
    /// end-effector velocities produced by each actuator alone.
    pub fn velocity_map(&self, normalized_eps: T) -> Result<Matrix3<T>, JacobianError> {
        let det = crate::linalg::normalized_det(&self.j);
        if !(det.abs() > normalized_eps) {
            return Err(JacobianError::TypeTwo { det: det.as_f64() });
        }
        let inv =
            inverse_adjugate(&self.j, T::zero()).ok_or(JacobianError::TypeTwo { det: 0.0 })?;
        Ok(inv * self.k)
    }

    pub fn det_k(&self) -> T {
        self.k[(0, 0)] * self.k[(1, 1)] * self.k[(2, 2)]
    }
}

/// `|det J_p|` threshold relative to the cube of the leg length scale.
fn jp_threshold<T: Scalar>(geom: &LegGeometry<T>) -> T {
    let s = geom.length_scale();
    T::lit(T::SINGULAR_EPS) * s * s * s
}

/// Builds `J`, `K`, `J_ω`, `J_p` for a resolved leg state.
pub fn build_jacobians<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
) -> Result<JacobianPair<T>, JacobianError> {
    let x = geom.frame.x;
    let qz = state.qz();
    let pd = state.p - state.d;
    let eg = state.e - state.g;
    let fh = state.f - state.h;

    let j_omega = Matrix3::from_columns(&[x, x, qz]);
    let j_p = Matrix3::from_columns(&[x.cross(&(state.p - geom.a)), x.cross(&pd), qz.cross(&pd)]);
    let jp_inv = inverse_adjugate(&j_p, jp_threshold(geom)).ok_or(JacobianError::TypeOne {
        det: j_p.determinant().as_f64(),
    })?;
    let omega_map = j_omega * jp_inv;

    let qe = state.e - state.d;
    let qf = state.f - state.d;
    let row2 = qe.cross(&eg).transpose() * omega_map;
    let row3 = qf.cross(&fh).transpose() * omega_map;
    let j = Matrix3::from_rows(&[pd.transpose(), row2, row3]);

    let u1 = x.cross(&(state.d - geom.a));
    let u2 = x.cross(&(state.g - geom.b()));
    let u3 = x.cross(&(state.h - geom.c()));
    let zero = T::zero();
    let k = Matrix3::new(
        pd.dot(&u1),
        zero,
        zero,
        -eg.dot(&u1),
        eg.dot(&u2),
        zero,
        -fh.dot(&u1),
        zero,
        fh.dot(&u3),
    );
    Ok(JacobianPair {
        j,
        k,
        j_omega,
        j_p,
        u1,
        u2,
        u3,
    })
}

/// `ṗ = J⁻¹·K·θ̇`.
pub fn end_effector_velocity<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
    theta_dot: &Vector3<T>,
) -> Result<Vector3<T>, JacobianError> {
    let pair = build_jacobians(state, geom)?;
    Ok(pair.velocity_map(T::lit(T::SINGULAR_EPS))? * theta_dot)
}

/// `ω = J_ω·J_p⁻¹·ṗ`.
pub fn angular_velocity<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
    p_dot: &Vector3<T>,
) -> Result<Vector3<T>, JacobianError> {
    let pair = build_jacobians(state, geom)?;
    let inv = inverse_adjugate(&pair.j_p, jp_threshold(geom)).ok_or(JacobianError::TypeOne {
        det: pair.j_p.determinant().as_f64(),
    })?;
    Ok(pair.j_omega * inv * p_dot)
}
