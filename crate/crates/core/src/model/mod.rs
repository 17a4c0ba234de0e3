//! Geometric description of a leg and of the assembled robot, together with
//! the configuration records produced by the kinematic solvers.
//!
//! Each leg owns an orthonormal frame `(x, y, z)` anchored at the reference
//! point `A` of the RU chain. `x` is the common axis of the three actuated
//! joints. Actuated angles are measured from `y` towards `z`, so a proximal
//! link at angle `θ` points along `cos θ · y + sin θ · z`. The RUS joints sit
//! on the same axis at `B = A + l6·x` and `C = A − l7·x`.

mod config;

pub use config::{
    load_robot, ConfigError, LegSection, LimitsSection, Mounting, RobotConfig, RobotSection,
};

use crate::scalar::Scalar;
use nalgebra::{Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};
use std::fmt;
use thiserror::Error;

/// Orthonormal right-handed frame of a leg. `x` is the actuated axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegFrame<T: Scalar> {
    pub x: Vector3<T>,
    pub y: Vector3<T>,
    pub z: Vector3<T>,
}

impl<T: Scalar> LegFrame<T> {
    /// Frame aligned with the coordinate axes.
    pub fn canonical() -> Self {
        Self {
            x: Vector3::x(),
            y: Vector3::y(),
            z: Vector3::z(),
        }
    }

    /// Builds a frame from the actuated axis only. The zero direction is the
    /// projection of the global `y` axis (or `z` when `y` is nearly parallel
    /// to the axis).
    pub fn from_axis(axis: &Unit<Vector3<T>>) -> Self {
        let x = axis.into_inner();
        let mut reference = Vector3::y();
        if x.dot(&reference).abs() > T::lit(0.9) {
            reference = Vector3::z();
        }
        Self::with_zero_direction(axis, &reference)
    }

    /// Builds a frame whose `y` axis is the component of `zero_dir`
    /// orthogonal to `axis`.
    pub fn with_zero_direction(axis: &Unit<Vector3<T>>, zero_dir: &Vector3<T>) -> Self {
        let x = axis.into_inner();
        let y = (zero_dir - x * x.dot(zero_dir)).normalize();
        let z = x.cross(&y);
        Self { x, y, z }
    }

    /// Unit radial direction at actuated angle `theta`.
    #[inline]
    pub fn radial(&self, theta: T) -> Vector3<T> {
        let (s, c) = theta.sin_cos();
        self.y * c + self.z * s
    }

    /// Coordinates of `v` in this frame.
    #[inline]
    pub fn to_local(&self, v: &Vector3<T>) -> Vector3<T> {
        Vector3::new(self.x.dot(v), self.y.dot(v), self.z.dot(v))
    }

    /// World vector from frame coordinates.
    #[inline]
    pub fn to_world(&self, v: &Vector3<T>) -> Vector3<T> {
        self.x * v.x + self.y * v.y + self.z * v.z
    }

    /// Rotation whose columns are the frame axes.
    pub fn matrix(&self) -> Matrix3<T> {
        Matrix3::from_columns(&[self.x, self.y, self.z])
    }

    pub fn cast<U: Scalar>(&self) -> LegFrame<U> {
        LegFrame {
            x: cast_vec(&self.x),
            y: cast_vec(&self.y),
            z: cast_vec(&self.z),
        }
    }
}

pub(crate) fn cast_vec<T: Scalar, U: Scalar>(v: &Vector3<T>) -> Vector3<U> {
    v.map(|c| U::lit(c.as_f64()))
}

/// End point of an actuated proximal link: `a + l·(cos θ·ŷ + sin θ·ẑ)` in
/// the frame whose `x̂` is `axis`.
pub fn proximal_point<T: Scalar>(
    a: &Vector3<T>,
    l: T,
    theta: T,
    axis: &Unit<Vector3<T>>,
) -> Vector3<T> {
    a + LegFrame::from_axis(axis).radial(theta) * l
}

/// `Q = R_x(θ1)·R_x(θs2)·R_z(θs3 − π/2)`, written out explicitly.
pub fn rotation_from_angles<T: Scalar>(theta1: T, theta_s2: T, theta_s3: T) -> Matrix3<T> {
    let (s12, c12) = (theta1 + theta_s2).sin_cos();
    let (s3, c3) = theta_s3.sin_cos();
    let zero = T::zero();
    Matrix3::new(
        s3,
        c3,
        zero,
        -c12 * c3,
        c12 * s3,
        -s12,
        -s12 * c3,
        s12 * s3,
        c12,
    )
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("{field} must be strictly positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("{field} breaks leg symmetry: expected {expected}, got {value}")]
    Asymmetric {
        field: &'static str,
        expected: f64,
        value: f64,
    },
    #[error("actuated axis is not a unit vector (norm {0})")]
    AxisNotUnit(f64),
    #[error("{0} must be finite")]
    NotFinite(&'static str),
}

/// Link lengths and body-frame anchors of one RU/2-RUS leg.
///
/// `p_b = [d_p, 0, 0]` is implied by `d_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegGeometry<T: Scalar> {
    pub l1: T,
    pub l2: T,
    pub l3: T,
    pub l4: T,
    pub l5: T,
    pub l6: T,
    pub l7: T,
    pub d_p: T,
    pub e_b: Vector3<T>,
    pub f_b: Vector3<T>,
    /// Position of the reference point `A` on the actuated axis.
    pub a: Vector3<T>,
    pub frame: LegFrame<T>,
    pub symmetric: bool,
}

impl<T: Scalar> LegGeometry<T> {
    /// Symmetric leg in the canonical frame with `A` at the origin:
    /// `l3 = l2`, `l5 = l4`, `l7 = l6`, `f_b = [e_x, −e_y, e_z]`.
    pub fn symmetric(l1: T, l2: T, l4: T, l6: T, d_p: T, e_b: Vector3<T>) -> Self {
        Self {
            l1,
            l2,
            l3: l2,
            l4,
            l5: l4,
            l6,
            l7: l6,
            d_p,
            e_b,
            f_b: Vector3::new(e_b.x, -e_b.y, e_b.z),
            a: Vector3::zeros(),
            frame: LegFrame::canonical(),
            symmetric: true,
        }
    }

    /// Optimal leg design: `l1 = d_p = 0.35`, `l2 = 0.139`, `l4 = 0.350`,
    /// `l6 = 0.130`, `e_b = [0.097, 0, 0]`.
    pub fn reference_design() -> Self {
        Self::symmetric(
            T::lit(0.35),
            T::lit(0.139),
            T::lit(0.350),
            T::lit(0.130),
            T::lit(0.35),
            Vector3::new(T::lit(0.097), T::zero(), T::zero()),
        )
    }

    /// Same leg, re-placed at `a` with the given frame.
    pub fn placed(mut self, a: Vector3<T>, frame: LegFrame<T>) -> Self {
        self.a = a;
        self.frame = frame;
        self
    }

    #[inline]
    pub fn axis_dir(&self) -> Vector3<T> {
        self.frame.x
    }

    /// Position of the actuated joint of the first RUS chain.
    #[inline]
    pub fn b(&self) -> Vector3<T> {
        self.a + self.frame.x * self.l6
    }

    /// Position of the actuated joint of the second RUS chain.
    #[inline]
    pub fn c(&self) -> Vector3<T> {
        self.a - self.frame.x * self.l7
    }

    #[inline]
    pub fn p_b(&self) -> Vector3<T> {
        Vector3::new(self.d_p, T::zero(), T::zero())
    }

    /// `D(θ1)`
    #[inline]
    pub fn d_at(&self, theta1: T) -> Vector3<T> {
        self.a + self.frame.radial(theta1) * self.l1
    }

    /// `G(θ2)`
    #[inline]
    pub fn g_at(&self, theta2: T) -> Vector3<T> {
        self.b() + self.frame.radial(theta2) * self.l2
    }

    /// `H(θ3)`
    #[inline]
    pub fn h_at(&self, theta3: T) -> Vector3<T> {
        self.c() + self.frame.radial(theta3) * self.l3
    }

    /// Distance from `p` to the circle described by `D`, i.e. the distance
    /// to the centre line of the workspace torus.
    pub fn tube_distance(&self, p: &Vector3<T>) -> T {
        let w = p - self.a;
        let axial = self.frame.x.dot(&w);
        let radial = (w - self.frame.x * axial).norm();
        (radial - self.l1).hypot(axial)
    }

    /// Largest distance between the end-effector and the actuated axis
    /// reference point; used to normalise tolerances.
    pub fn length_scale(&self) -> T {
        self.l1 + self.d_p
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let lengths = [
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
            ("l4", self.l4),
            ("l5", self.l5),
            ("l6", self.l6),
            ("l7", self.l7),
            ("d_p", self.d_p),
        ];
        for (field, value) in lengths {
            if !value.is_finite() {
                return Err(GeometryError::NotFinite(field));
            }
            if value <= T::zero() {
                return Err(GeometryError::NonPositive {
                    field,
                    value: value.as_f64(),
                });
            }
        }
        if !self
            .e_b
            .iter()
            .chain(self.f_b.iter())
            .all(|v| v.is_finite())
        {
            return Err(GeometryError::NotFinite("e_b/f_b"));
        }
        let n = self.frame.x.norm();
        if (n - T::one()).abs() > T::lit(1e-12).max(T::default_epsilon() * T::lit(8.0)) {
            return Err(GeometryError::AxisNotUnit(n.as_f64()));
        }
        if self.symmetric {
            let pairs = [
                ("l3", self.l2, self.l3),
                ("l5", self.l4, self.l5),
                ("l7", self.l6, self.l7),
                ("f_x", self.e_b.x, self.f_b.x),
                ("f_y", -self.e_b.y, self.f_b.y),
                ("f_z", self.e_b.z, self.f_b.z),
            ];
            for (field, expected, value) in pairs {
                if expected != value {
                    return Err(GeometryError::Asymmetric {
                        field,
                        expected: expected.as_f64(),
                        value: value.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> LegGeometry<U> {
        let c = |v: T| U::lit(v.as_f64());
        LegGeometry {
            l1: c(self.l1),
            l2: c(self.l2),
            l3: c(self.l3),
            l4: c(self.l4),
            l5: c(self.l5),
            l6: c(self.l6),
            l7: c(self.l7),
            d_p: c(self.d_p),
            e_b: cast_vec(&self.e_b),
            f_b: cast_vec(&self.f_b),
            a: cast_vec(&self.a),
            frame: self.frame.cast(),
            symmetric: self.symmetric,
        }
    }
}

/// Three identical legs arranged with 120° symmetry about the vertical axis
/// through the robot centre, and the end-effector platform triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotGeometry<T: Scalar> {
    /// Legs expressed in world coordinates.
    pub legs: [LegGeometry<T>; 3],
    /// Pose of each leg frame (origin `A`) in the world frame.
    pub leg_frames: [Isometry3<T>; 3],
    /// Platform attachment points relative to the platform centre.
    pub platform_attach: [Vector3<T>; 3],
    /// Distance between the reference points of two legs.
    pub leg_spacing: T,
    pub platform_side: T,
    pub mounting: Mounting,
}

impl<T: Scalar> RobotGeometry<T> {
    /// Places three copies of `leg` on a circle of radius `spacing/√3`.
    ///
    /// Leg `i` sits at azimuth `90° + 120°·i`, its actuated axis is tangent to
    /// the placement circle and its zero direction points away from the robot
    /// centre. The platform vertex for leg `i` lies on the same azimuth.
    pub fn assemble(
        leg: &LegGeometry<T>,
        leg_spacing: T,
        platform_side: T,
        mounting: Mounting,
    ) -> Self {
        let three = T::lit(3.0);
        let placement_radius = leg_spacing / three.sqrt();
        let platform_radius = platform_side / three.sqrt();
        let up: Vector3<T> = match mounting {
            Mounting::Floor => Vector3::z(),
            Mounting::Ceiling => -Vector3::z(),
        };
        let mut legs = [*leg; 3];
        let mut frames = [Isometry3::identity(); 3];
        let mut attach = [Vector3::zeros(); 3];
        for i in 0..3 {
            let azimuth = T::frac_pi_2() + T::two_pi() * T::lit(i as f64) / three;
            let (s, c) = azimuth.sin_cos();
            let radial = Vector3::new(c, s, T::zero());
            let tangent = Vector3::new(-s, c, T::zero());
            let a = radial * placement_radius;
            // y outward, z away from the base, x completes the right-handed frame.
            let x = match mounting {
                Mounting::Floor => -tangent,
                Mounting::Ceiling => tangent,
            };
            let frame = LegFrame {
                x,
                y: radial,
                z: up,
            };
            debug_assert!((x.cross(&radial) - up).norm() < T::lit(1e-6));
            legs[i] = leg.placed(a, frame);
            let rot = UnitQuaternion::from_matrix(&frame.matrix());
            frames[i] = Isometry3::from_parts(Translation3::from(a), rot);
            attach[i] = radial * platform_radius;
        }
        Self {
            legs,
            leg_frames: frames,
            platform_attach: attach,
            leg_spacing,
            platform_side,
            mounting,
        }
    }

    /// Unit vector pointing away from the base.
    pub fn up(&self) -> Vector3<T> {
        match self.mounting {
            Mounting::Floor => Vector3::z(),
            Mounting::Ceiling => -Vector3::z(),
        }
    }

    /// World positions of the nine actuated joints (A, B, C of each leg).
    pub fn actuated_joint_positions(&self) -> [Vector3<T>; 9] {
        let mut out = [Vector3::zeros(); 9];
        for (i, leg) in self.legs.iter().enumerate() {
            out[3 * i] = leg.a;
            out[3 * i + 1] = leg.b();
            out[3 * i + 2] = leg.c();
        }
        out
    }
}

/// Half-angle root selector of one joint equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// One of the 16 assembly modes of a leg.
///
/// The selectors are ordered `(θ1, θs3, θ2, θ3)`; the branch index is the
/// binary number formed by them with `θ1` as the most significant bit and
/// `Plus = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Branch {
    pub theta1: Sign,
    pub theta_s3: Sign,
    pub theta2: Sign,
    pub theta3: Sign,
}

impl Branch {
    pub const COUNT: usize = 16;

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::COUNT).then(|| Self {
            theta1: Sign::from_index((index >> 3) & 1),
            theta_s3: Sign::from_index((index >> 2) & 1),
            theta2: Sign::from_index((index >> 1) & 1),
            theta3: Sign::from_index(index & 1),
        })
    }

    pub fn index(&self) -> usize {
        (self.theta1.index() << 3)
            | (self.theta_s3.index() << 2)
            | (self.theta2.index() << 1)
            | self.theta3.index()
    }

    pub fn all() -> impl Iterator<Item = Branch> {
        (0..Self::COUNT).filter_map(Self::from_index)
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |x: Sign| if x == Sign::Plus { '+' } else { '-' };
        write!(
            f,
            "{}{}{}{}",
            s(self.theta1),
            s(self.theta_s3),
            s(self.theta2),
            s(self.theta3)
        )
    }
}

/// Actuated angles `θ1, θ2, θ3` and the two passive angles of the U joint.
///
/// All angles are reduced to `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAngles<T: Scalar> {
    pub theta: [T; 3],
    pub theta_s2: T,
    pub theta_s3: T,
}

impl<T: Scalar> JointAngles<T> {
    pub fn max_actuated(&self) -> T {
        self.theta[0].max(self.theta[1]).max(self.theta[2])
    }
}

/// Reduces an angle into `(−π, π]`, measured from `y` toward `z`.
pub fn wrap_actuated<T: Scalar>(theta: T) -> T {
    wrap_passive(theta)
}

/// Reduces an angle into `[0, 2π)`.
pub fn wrap_positive<T: Scalar>(theta: T) -> T {
    let two_pi = T::two_pi();
    let mut t = theta % two_pi;
    if t < T::zero() {
        t += two_pi;
    }
    if t >= two_pi {
        t -= two_pi;
    }
    t
}

/// Reduces an angle into `(−π, π]`.
pub fn wrap_passive<T: Scalar>(theta: T) -> T {
    let t = wrap_positive(theta);
    if t > T::pi() {
        t - T::two_pi()
    } else {
        t
    }
}

/// Fully resolved configuration of one leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegState<T: Scalar> {
    pub p: Vector3<T>,
    pub d: Vector3<T>,
    pub e: Vector3<T>,
    pub f: Vector3<T>,
    pub g: Vector3<T>,
    pub h: Vector3<T>,
    /// Orientation of the end-effector body.
    pub q: Matrix3<T>,
    pub angles: JointAngles<T>,
    pub branch: Branch,
}

impl<T: Scalar> LegState<T> {
    /// Largest violation of the closure constraints of the leg.
    pub fn max_residual(&self, geom: &LegGeometry<T>) -> T {
        let r = [
            ((self.p - self.d).norm() - geom.d_p).abs(),
            ((self.e - self.g).norm() - geom.l4).abs(),
            ((self.f - self.h).norm() - geom.l5).abs(),
            (self.d + self.q * geom.p_b() - self.p).norm(),
            (self.d + self.q * geom.e_b - self.e).norm(),
            (self.d + self.q * geom.f_b - self.f).norm(),
        ];
        r.into_iter().fold(T::zero(), |m, v| m.max(v))
    }

    /// `Q·z`, the second axis of the U joint at `D`.
    #[inline]
    pub fn qz(&self) -> Vector3<T> {
        self.q.column(2).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn proximal_point_reference_cases() {
        let axis = Vector3::x_axis();
        let o = Vector3::zeros();
        assert_relative_eq!(
            proximal_point(&o, 0.35, 0.0, &axis),
            Vector3::new(0.0, 0.35, 0.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            proximal_point(&o, 0.35, FRAC_PI_2, &axis),
            Vector3::new(0.0, 0.0, 0.35),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            proximal_point(&Vector3::new(0.1, 0.0, 0.0), 0.139, PI, &axis),
            Vector3::new(0.1, -0.139, 0.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rotation_maps_p_b_at_zero_tilt() {
        let q = rotation_from_angles(0.0, 0.0, FRAC_PI_2);
        assert_relative_eq!(
            q.row(0).into_owned(),
            nalgebra::RowVector3::new(1.0, 0.0, 0.0),
            epsilon = 1e-15
        );
        let p_b = Vector3::new(0.35, 0.0, 0.0);
        assert_relative_eq!(q * p_b, p_b, epsilon = 1e-15);
    }

    #[test]
    fn rotation_matches_composed_elementary_rotations() {
        for &(t1, s2, s3) in &[(0.3, -1.2, 2.0), (2.9, 0.4, -0.7), (-1.0, 3.0, 0.1)] {
            let composed = Rotation3::from_axis_angle(&Vector3::x_axis(), t1)
                * Rotation3::from_axis_angle(&Vector3::x_axis(), s2)
                * Rotation3::from_axis_angle(&Vector3::z_axis(), s3 - FRAC_PI_2);
            let q = rotation_from_angles(t1, s2, s3);
            assert_relative_eq!(q, *composed.matrix(), epsilon = 1e-14);
            assert_relative_eq!(q.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn branch_index_round_trip_and_order() {
        let all: Vec<_> = Branch::all().collect();
        assert_eq!(all.len(), 16);
        for (i, b) in all.iter().enumerate() {
            assert_eq!(b.index(), i);
        }
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(all[0].to_string(), "++++");
        assert_eq!(all[9].to_string(), "-++-");
    }

    #[test]
    fn symmetric_validation_names_field() {
        let mut leg = LegGeometry::<f64>::reference_design();
        assert!(leg.validate().is_ok());
        leg.l3 = 0.14;
        match leg.validate() {
            Err(GeometryError::Asymmetric { field, .. }) => assert_eq!(field, "l3"),
            other => panic!("unexpected {other:?}"),
        }
        let mut leg = LegGeometry::<f64>::reference_design();
        leg.l4 = 0.0;
        assert!(matches!(
            leg.validate(),
            Err(GeometryError::NonPositive { field: "l4", .. })
        ));
    }

    #[test]
    fn assembled_robot_is_threefold_symmetric() {
        let leg = LegGeometry::<f64>::reference_design();
        let robot = RobotGeometry::assemble(&leg, 0.143, 0.173, Mounting::Floor);
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 2.0 * PI / 3.0);
        for i in 0..3 {
            let j = (i + 1) % 3;
            assert_relative_eq!(rot * robot.legs[i].a, robot.legs[j].a, epsilon = 1e-12);
            assert_relative_eq!(
                rot * robot.legs[i].frame.x,
                robot.legs[j].frame.x,
                epsilon = 1e-12
            );
            assert_relative_eq!(
                (robot.legs[i].a - robot.legs[j].a).norm(),
                0.143,
                epsilon = 1e-12
            );
            let side = (robot.platform_attach[i] - robot.platform_attach[j]).norm();
            assert_relative_eq!(side, 0.173, epsilon = 1e-9);
        }
    }

    #[test]
    fn wrapping_ranges() {
        assert_relative_eq!(wrap_positive(-0.5_f64), 2.0 * PI - 0.5);
        assert_relative_eq!(wrap_positive(7.0_f64), 7.0 - 2.0 * PI);
        assert!(wrap_positive(-1e-300_f64) < 2.0 * PI);
        assert_relative_eq!(wrap_actuated(-0.5_f64), -0.5);
        assert_relative_eq!(wrap_actuated(5.0_f64), 5.0 - 2.0 * PI);
        assert_relative_eq!(wrap_passive(4.0_f64), 4.0 - 2.0 * PI);
        assert_relative_eq!(wrap_passive(PI), PI);
    }
}
