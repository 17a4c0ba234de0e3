//! Static force transmission, the 2g torque requirement and encoder
//! resolution.

use crate::jacobians::{build_jacobians, JacobianError};
use crate::kinematics::{check_interior, solve_branch, BranchSelect};
use crate::model::{Branch, LegGeometry, LegState};
use crate::scalar::Scalar;
use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

/// Point-mass load carried by the end-effector of a leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadModel<T: Scalar> {
    /// kg
    pub mass: T,
    /// m/s²
    pub g: T,
    /// Required acceleration in units of `g`.
    pub accel_factor: T,
    /// N·m, per actuator
    pub tau_max: T,
    /// rad, bound on every actuated angle
    pub theta_max: T,
    /// Unit vector perpendicular to the actuated axis.
    pub gravity_dir: Vector3<T>,
}

impl<T: Scalar> LoadModel<T> {
    /// 0.5 kg, 2g, 10 N·m, 135°, gravity along `−z` of the canonical leg frame.
    pub fn reference() -> Self {
        Self {
            mass: T::lit(0.5),
            g: T::lit(crate::GRAVITY),
            accel_factor: T::lit(2.0),
            tau_max: T::lit(10.0),
            theta_max: T::lit(135f64.to_radians()),
            gravity_dir: -Vector3::z(),
        }
    }

    pub fn weight(&self) -> T {
        self.mass * self.g
    }

    pub fn force_set(&self, axis: &Vector3<T>) -> ForceSet<T> {
        ForceSet {
            gravity: self.weight(),
            inertial: self.accel_factor * self.weight(),
            axis: axis.normalize(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> LoadModel<U> {
        let c = |v: T| U::lit(v.as_f64());
        LoadModel {
            mass: c(self.mass),
            g: c(self.g),
            accel_factor: c(self.accel_factor),
            tau_max: c(self.tau_max),
            theta_max: c(self.theta_max),
            gravity_dir: self.gravity_dir.map(c),
        }
    }
}

/// `F = F_g + r·B³`: every gravity vector of magnitude `gravity` perpendicular
/// to `axis`, plus any force of magnitude at most `inertial`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSet<T: Scalar> {
    pub gravity: T,
    pub inertial: T,
    pub axis: Vector3<T>,
}

impl<T: Scalar> ForceSet<T> {
    /// Distance from `f` to the gravity circle is at most `inertial`.
    pub fn contains(&self, f: &Vector3<T>) -> bool {
        let axial = f.dot(&self.axis);
        let radial = (f - self.axis * axial).norm();
        let d = (radial - self.gravity).hypot(axial);
        d <= self.inertial
    }

    /// Largest `|f|` for a force along the axis: `√(r² − (mg)²)`.
    pub fn max_pure_axial(&self) -> T {
        let s = self.inertial * self.inertial - self.gravity * self.gravity;
        if s > T::zero() {
            s.sqrt()
        } else {
            T::zero()
        }
    }

    /// Largest axial component over all forces of the set: `r`.
    pub fn max_axial_component(&self) -> T {
        self.inertial
    }
}

/// `τ = (J⁻¹K)ᵀ·f`
pub fn torque_for_force<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
    f: &Vector3<T>,
) -> Result<Vector3<T>, JacobianError> {
    Ok(velocity_map(state, geom)?.transpose() * f)
}

fn velocity_map<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
) -> Result<Matrix3<T>, JacobianError> {
    build_jacobians(state, geom)?.velocity_map(T::lit(T::SINGULAR_EPS))
}

/// Supremum of `|τ_i|` over the force set, for each actuator.
pub fn tau_ext_breakdown_from_map<T: Scalar>(
    w: &Matrix3<T>,
    axis: &Vector3<T>,
    load: &LoadModel<T>,
) -> [T; 3] {
    let mg = load.weight();
    let r = load.accel_factor * mg;
    [0, 1, 2].map(|i| {
        let col: Vector3<T> = w.column(i).into();
        let axial = col.dot(axis);
        let perp = (col.norm_squared() - axial * axial).max(T::zero()).sqrt();
        mg * perp + r * col.norm()
    })
}

pub fn tau_ext_breakdown<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
    load: &LoadModel<T>,
) -> Result<[T; 3], JacobianError> {
    let w = velocity_map(state, geom)?;
    Ok(tau_ext_breakdown_from_map(&w, &geom.frame.x, load))
}

/// Largest actuator torque needed to produce every force of the set.
pub fn tau_ext<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
    load: &LoadModel<T>,
) -> Result<T, JacobianError> {
    let t = tau_ext_breakdown(state, geom, load)?;
    Ok(t[0].max(t[1]).max(t[2]))
}

/// Torque, angle-limit and solvability check of a resolved state.
pub fn feasible_2g<T: Scalar>(
    state: &LegState<T>,
    geom: &LegGeometry<T>,
    load: &LoadModel<T>,
) -> bool {
    if state.angles.max_actuated() > load.theta_max {
        return false;
    }
    if !(state.max_residual(geom) <= T::lit(1e-6) * geom.length_scale()) {
        return false;
    }
    matches!(tau_ext(state, geom, load), Ok(t) if t <= load.tau_max)
}

/// Solves the inverse kinematics at `p` and tests [`feasible_2g`] on the
/// selected branches; `All` succeeds if any branch does.
pub fn feasible_2g_at<T: Scalar>(
    p: &Vector3<T>,
    geom: &LegGeometry<T>,
    load: &LoadModel<T>,
    select: BranchSelect,
) -> bool {
    if check_interior(p, geom).is_err() {
        return false;
    }
    let test = |b: Branch| matches!(solve_branch(p, geom, b), Ok(s) if feasible_2g(&s, geom, load));
    match select {
        BranchSelect::One(b) => test(b),
        BranchSelect::All => Branch::all().any(test),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolutionEstimate {
    /// Angular resolution of one actuated joint (rad).
    pub delta_theta: f64,
    /// `max ‖J⁻¹K‖₂·Δθ·√3` (m).
    pub norm_bound: f64,
    /// `max_i ‖J⁻¹K·e_i‖·Δθ`: one count on a single joint (m).
    pub single_joint: f64,
    /// Largest coordinate of `J⁻¹K·Δθ·e_i` (m).
    pub per_axis: f64,
    pub points_used: usize,
    pub points_skipped: usize,
}

/// Resolution of one actuated joint driven through a belt of ratio `ratio`
/// by an encoder with `bits` bits.
pub fn joint_resolution(bits: u32, ratio: f64) -> f64 {
    std::f64::consts::TAU / 2f64.powi(bits as i32) / ratio
}

/// Worst-case end-effector displacement caused by one encoder count over the
/// given states. States where `J` is singular are skipped.
pub fn resolution_estimate<T: Scalar>(
    geom: &LegGeometry<T>,
    bits: u32,
    ratio: f64,
    states: &[LegState<T>],
) -> ResolutionEstimate {
    let dt = joint_resolution(bits, ratio);
    let mut est = ResolutionEstimate {
        delta_theta: dt,
        norm_bound: 0.0,
        single_joint: 0.0,
        per_axis: 0.0,
        points_used: 0,
        points_skipped: 0,
    };
    for s in states {
        let Ok(w) = velocity_map(s, geom) else {
            est.points_skipped += 1;
            continue;
        };
        let w = w.map(|v| v.as_f64());
        est.points_used += 1;
        est.norm_bound = est
            .norm_bound
            .max(crate::linalg::spectral_norm(&w) * dt * 3f64.sqrt());
        for i in 0..3 {
            let col = w.column(i);
            est.single_joint = est.single_joint.max(col.norm() * dt);
            est.per_axis = est.per_axis.max(col.amax() * dt);
        }
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::disk_centre;

    fn setup() -> (LegGeometry<f64>, LegState<f64>, LoadModel<f64>) {
        let g = LegGeometry::reference_design();
        let s = solve_branch(
            &Vector3::new(0.04, 0.31, 0.05),
            &g,
            Branch::from_index(0).unwrap(),
        )
        .unwrap();
        (g, s, LoadModel::reference())
    }

    #[test]
    fn zero_force_needs_zero_torque() {
        let (g, s, _) = setup();
        assert_eq!(
            torque_for_force(&s, &g, &Vector3::zeros()).unwrap(),
            Vector3::zeros()
        );
    }

    #[test]
    fn massless_load_needs_no_torque() {
        let (g, s, mut load) = setup();
        load.mass = 0.0;
        assert_eq!(tau_ext(&s, &g, &load).unwrap(), 0.0);
    }

    #[test]
    fn torque_matches_dense_solve() {
        let (g, s, _) = setup();
        let pair = build_jacobians(&s, &g).unwrap();
        let f = Vector3::new(1.0, -2.0, 0.5);
        let w = pair.k.transpose() * pair.j.transpose().lu().solve(&f).unwrap();
        let t = torque_for_force(&s, &g, &f).unwrap();
        assert!((t - w).norm() < 1e-10 * w.norm());
    }

    #[test]
    fn force_set_membership() {
        let set = LoadModel::<f64>::reference().force_set(&Vector3::x());
        let mg = set.gravity;
        assert!(set.contains(&Vector3::new(2.0 * mg, mg, 0.0)));
        assert!(set.contains(&Vector3::new(3f64.sqrt() * mg * 0.999, 0.0, 0.0)));
        assert!(!set.contains(&Vector3::new(3f64.sqrt() * mg * 1.001, 0.0, 0.0)));
        assert!((set.max_pure_axial() - 3f64.sqrt() * mg).abs() < 1e-12);
    }

    #[test]
    fn angle_limit_is_enforced() {
        let (g, mut s, load) = setup();
        s.angles.theta[1] = 140f64.to_radians();
        assert!(!feasible_2g(&s, &g, &load));
    }

    #[test]
    fn resolution_scales_with_ratio() {
        let g = LegGeometry::<f64>::reference_design();
        let s = solve_branch(&disk_centre(&g), &g, Branch::from_index(0).unwrap()).unwrap();
        let a = resolution_estimate(&g, 20, 1.0, &[s]);
        let b = resolution_estimate(&g, 20, 72.0 / 34.0, &[s]);
        assert!((b.norm_bound / a.norm_bound - 34.0 / 72.0).abs() < 1e-12);
        assert!(resolution_estimate(&g, 60, 1.0, &[s]).norm_bound < 1e-15);
    }
}
