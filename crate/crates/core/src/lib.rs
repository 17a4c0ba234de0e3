//! Kinematic analysis and design optimisation of RU/2-RUS parallel robot
//! legs with collinear actuated joints, and of the three-legged robot built
//! from them.
//!
//! The numeric core is generic over the [`Scalar`] type (`f32` or `f64`).
//! The `*F64` aliases below name the double-precision instantiations used by
//! the command-line tool.

pub mod jacobians;
pub mod kinematics;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod scalar;
pub mod singularity;
pub mod statics;
pub mod workspace;

pub use scalar::Scalar;

pub type LegGeometryF64 = model::LegGeometry<f64>;
pub type LegGeometryF32 = model::LegGeometry<f32>;
pub type RobotGeometryF64 = model::RobotGeometry<f64>;
pub type LegStateF64 = model::LegState<f64>;
pub type JacobianPairF64 = jacobians::JacobianPair<f64>;
pub type LoadModelF64 = statics::LoadModel<f64>;
pub type ForceSetF64 = statics::ForceSet<f64>;

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;
