//! Closed-form inverse kinematics of the RU and RUS chains and a Newton
//! forward-kinematics solver.
//!
//! Every joint equation has the form `A·cos θ + B·sin θ = C` and is solved
//! with the tangent half-angle substitution `t = tan(θ/2)`, which turns it
//! into `(C + A)·t² − 2B·t + (C − A) = 0`.

use crate::linalg::{inverse_adjugate, normalized_det};
use crate::model::{
    rotation_from_angles, wrap_actuated, wrap_passive, Branch, JointAngles, LegGeometry, LegState,
    Sign,
};
use crate::scalar::Scalar;
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chain {
    /// RUS chain actuated at `B`.
    First,
    /// RUS chain actuated at `C`.
    Second,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IkError {
    #[error(
        "point lies outside the workspace torus (tube distance exceeds d_p by {excess:.3e} m)"
    )]
    OutsideTorus { excess: f64 },
    #[error("point is on the torus boundary within {margin:.1e} m (type I singularity)")]
    OnBoundary { margin: f64 },
    #[error("point lies on the actuated axis; the RU equation degenerates")]
    OnAxis,
    #[error("end-effector direction is parallel to the actuated axis (type I singularity)")]
    PassiveDegenerate,
    #[error("{chain:?} RUS chain cannot reach its spherical joint")]
    RusUnreachable { chain: Chain },
    #[error("no branch satisfies the collision bound on the actuated angles")]
    NoFeasibleBranch,
}

/// Roots of `A·cos θ + B·sin θ = C`, ordered so that the first root is the
/// `Plus` branch (`A·sin θ − B·cos θ ≥ 0`).
///
/// Returns `None` when no real root exists. Normalised discriminants in
/// `(−DISC_CLAMP, 0]` are clamped to a double root.
pub fn solve_trig<T: Scalar>(a: T, b: T, c: T) -> Option<[T; 2]> {
    let norm2 = a * a + b * b;
    if norm2 == T::zero() {
        return None;
    }
    let mut disc = (norm2 - c * c) / norm2;
    if disc < T::zero() {
        if disc > -T::lit(T::DISC_CLAMP) {
            disc = T::zero();
        } else {
            return None;
        }
    }
    // (C + A) t² − 2B t + (C − A) = 0, discriminant 4(A² + B² − C²).
    let qa = c + a;
    let qb = -(b + b);
    let qc = c - a;
    let root = (disc * norm2).sqrt() * T::lit(2.0);
    let sign = if qb >= T::zero() { T::one() } else { -T::one() };
    let q = -(qb + sign * root) / T::lit(2.0);
    let (t1, t2) = if q == T::zero() {
        // qb = 0 and a double root: either t = 0 or the degenerate θ = π.
        if qc == T::zero() {
            (T::zero(), T::zero())
        } else {
            let inf = T::one() / T::zero();
            (inf, inf)
        }
    } else {
        // qa = 0 yields t1 = ±∞, i.e. θ = π, which 2·atan handles.
        (q / qa, qc / q)
    };
    let th1 = T::lit(2.0) * t1.atan();
    let th2 = T::lit(2.0) * t2.atan();
    let label = |th: T| {
        let (s, co) = th.sin_cos();
        a * s - b * co
    };
    if label(th1) >= label(th2) {
        Some([th1, th2])
    } else {
        Some([th2, th1])
    }
}

/// Angles placing a link of length `l` pivoting about the leg axis at
/// `centre` so that its tip lies at distance `reach` from `target`.
fn circle_sphere<T: Scalar>(
    geom: &LegGeometry<T>,
    centre: &Vector3<T>,
    l: T,
    target: &Vector3<T>,
    reach: T,
) -> Result<Option<[T; 2]>, ()> {
    let w = target - centre;
    let a = T::lit(2.0) * l * geom.frame.y.dot(&w);
    let b = T::lit(2.0) * l * geom.frame.z.dot(&w);
    let c = w.norm_squared() + l * l - reach * reach;
    if a == T::zero() && b == T::zero() {
        return Err(());
    }
    Ok(solve_trig(a, b, c))
}

/// Both roots of the RU constraint `‖p − d(θ1)‖ = d_p`, `Plus` first.
pub fn solve_theta1<T: Scalar>(p: &Vector3<T>, geom: &LegGeometry<T>) -> Result<[T; 2], IkError> {
    match circle_sphere(geom, &geom.a, geom.l1, p, geom.d_p) {
        Err(()) => Err(IkError::OnAxis),
        Ok(None) => Err(IkError::OutsideTorus {
            excess: (geom.tube_distance(p) - geom.d_p).as_f64(),
        }),
        Ok(Some(r)) => Ok(r.map(wrap_actuated)),
    }
}

/// Passive U-joint angles for one root of `θs3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassiveSolution<T: Scalar> {
    pub theta_s2: T,
    pub theta_s3: T,
    /// Orientation of the end-effector body in world coordinates.
    pub q: Matrix3<T>,
}

/// Solves `Q·p_b = p − d` for `θs2` and the two roots of `θs3`.
///
/// The first entry is the `Plus` root (`cos θs3 ≥ 0`).
pub fn solve_passive<T: Scalar>(
    p: &Vector3<T>,
    theta1: T,
    geom: &LegGeometry<T>,
) -> Result<[PassiveSolution<T>; 2], IkError> {
    let d = geom.d_at(theta1);
    solve_passive_direction(&geom.frame.to_local(&(p - d)), geom.d_p, theta1, geom)
}

fn solve_passive_direction<T: Scalar>(
    local: &Vector3<T>,
    length: T,
    theta1: T,
    geom: &LegGeometry<T>,
) -> Result<[PassiveSolution<T>; 2], IkError> {
    let u = local / length;
    // First row of Q·p_b: sin θs3 = u_x, written as −sin θs3 = −u_x so that
    // the Plus root carries cos θs3 ≥ 0.
    let roots = solve_trig(T::zero(), -T::one(), -u.x).ok_or(IkError::PassiveDegenerate)?;
    let frame = geom.frame.matrix();
    let mut out = [PassiveSolution {
        theta_s2: T::zero(),
        theta_s3: T::zero(),
        q: Matrix3::identity(),
    }; 2];
    for (slot, theta_s3) in out.iter_mut().zip(roots) {
        let c3 = theta_s3.cos();
        if c3.abs() <= T::lit(T::DISC_CLAMP).sqrt() {
            return Err(IkError::PassiveDegenerate);
        }
        // Rows two and three: −cos(θ1+θs2)·c3 = u_y, −sin(θ1+θs2)·c3 = u_z.
        let sum = (-u.z / c3).atan2(-u.y / c3);
        let theta_s2 = wrap_passive(sum - theta1);
        let theta_s3 = wrap_passive(theta_s3);
        *slot = PassiveSolution {
            theta_s2,
            theta_s3,
            q: frame * rotation_from_angles(theta1, theta_s2, theta_s3),
        };
    }
    Ok(out)
}

/// Roots of the two RUS constraints for a given body pose, `Plus` first.
pub fn solve_rus<T: Scalar>(
    e: &Vector3<T>,
    f: &Vector3<T>,
    geom: &LegGeometry<T>,
) -> Result<([T; 2], [T; 2]), IkError> {
    let solve = |centre: Vector3<T>, l: T, target: &Vector3<T>, reach: T, chain: Chain| {
        match circle_sphere(geom, &centre, l, target, reach) {
            Ok(Some(r)) => Ok(r.map(wrap_actuated)),
            _ => Err(IkError::RusUnreachable { chain }),
        }
    };
    let theta2 = solve(geom.b(), geom.l2, e, geom.l4, Chain::First)?;
    let theta3 = solve(geom.c(), geom.l3, f, geom.l5, Chain::Second)?;
    Ok((theta2, theta3))
}

/// Solves one assembly mode without checking torus interiority or joint
/// limits.
pub fn solve_branch<T: Scalar>(
    p: &Vector3<T>,
    geom: &LegGeometry<T>,
    branch: Branch,
) -> Result<LegState<T>, IkError> {
    let theta1 = solve_theta1(p, geom)?[branch.theta1.index()];
    let passive = solve_passive(p, theta1, geom)?[branch.theta_s3.index()];
    complete_state(p, theta1, &passive, geom, branch)
}

fn complete_state<T: Scalar>(
    p: &Vector3<T>,
    theta1: T,
    passive: &PassiveSolution<T>,
    geom: &LegGeometry<T>,
    branch: Branch,
) -> Result<LegState<T>, IkError> {
    let d = geom.d_at(theta1);
    let e = d + passive.q * geom.e_b;
    let f = d + passive.q * geom.f_b;
    let (t2, t3) = solve_rus(&e, &f, geom)?;
    let theta2 = t2[branch.theta2.index()];
    let theta3 = t3[branch.theta3.index()];
    Ok(LegState {
        p: *p,
        d,
        e,
        f,
        g: geom.g_at(theta2),
        h: geom.h_at(theta3),
        q: passive.q,
        angles: JointAngles {
            theta: [theta1, theta2, theta3],
            theta_s2: passive.theta_s2,
            theta_s3: passive.theta_s3,
        },
        branch,
    })
}

/// Which assembly modes to solve for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchSelect {
    One(Branch),
    All,
}

/// Inverse kinematic solutions of one leg at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution<T: Scalar> {
    /// Feasible states in branch order.
    pub states: Vec<LegState<T>>,
    /// Branches that solved but exceed the collision bound.
    pub collisions: Vec<LegState<T>>,
    pub requested: BranchSelect,
}

/// Actuated angles above this bound make the leg collide with the base.
pub fn collision_bound<T: Scalar>() -> T {
    T::lit(1.5) * T::pi()
}

/// Strict interior test preceding the trigonometric solvers.
pub fn check_interior<T: Scalar>(p: &Vector3<T>, geom: &LegGeometry<T>) -> Result<(), IkError> {
    let margin = T::lit(T::INTERIOR_MARGIN);
    let dist = geom.tube_distance(p);
    if dist > geom.d_p {
        return Err(IkError::OutsideTorus {
            excess: (dist - geom.d_p).as_f64(),
        });
    }
    if dist > geom.d_p - margin {
        return Err(IkError::OnBoundary {
            margin: margin.as_f64(),
        });
    }
    Ok(())
}

/// Inverse kinematics of a leg for an interior end-effector position.
pub fn inverse_kinematics<T: Scalar>(
    p: &Vector3<T>,
    geom: &LegGeometry<T>,
    select: BranchSelect,
) -> Result<IkSolution<T>, IkError> {
    check_interior(p, geom)?;
    let branches: Vec<Branch> = match select {
        BranchSelect::One(b) => vec![b],
        BranchSelect::All => Branch::all().collect(),
    };
    let roots1 = solve_theta1(p, geom)?;
    let mut states = Vec::new();
    let mut collisions = Vec::new();
    let mut first_err = None;
    for branch in branches {
        let theta1 = roots1[branch.theta1.index()];
        let result = solve_passive(p, theta1, geom)
            .and_then(|ps| complete_state(p, theta1, &ps[branch.theta_s3.index()], geom, branch));
        match result {
            Ok(state) if state.angles.max_actuated() > collision_bound() => collisions.push(state),
            Ok(state) => states.push(state),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if states.is_empty() {
        return Err(match first_err {
            Some(e) if collisions.is_empty() => e,
            _ => IkError::NoFeasibleBranch,
        });
    }
    Ok(IkSolution {
        states,
        collisions,
        requested: select,
    })
}

/// Centre of the workspace disk in the reference half-plane: `A + l1·y`.
pub fn disk_centre<T: Scalar>(geom: &LegGeometry<T>) -> Vector3<T> {
    geom.a + geom.frame.y * geom.l1
}

/// Assembly mode used for maps and optimisation: among the branches whose
/// actuated angles all stay within `theta_max` at the disk centre, the one
/// with the smallest largest `|θ|`, lowest index on ties. Falls back to the
/// first solvable branch.
pub fn default_branch<T: Scalar>(geom: &LegGeometry<T>, theta_max: T) -> Branch {
    let centre = disk_centre(geom);
    let mut best: Option<(T, Branch)> = None;
    let mut fallback = None;
    for branch in Branch::all() {
        if let Ok(state) = solve_branch(&centre, geom, branch) {
            fallback.get_or_insert(branch);
            if state.angles.max_actuated() > theta_max {
                continue;
            }
            let spread = state
                .angles
                .theta
                .iter()
                .fold(T::zero(), |m, t| m.max(t.abs()));
            if best.is_none_or(|(s, _)| spread < s - T::lit(T::INTERIOR_MARGIN)) {
                best = Some((spread, branch));
            }
        }
    }
    best.map(|(_, b)| b)
        .or(fallback)
        .unwrap_or(Branch::from_index(0).expect("index 0 is valid"))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FkError {
    #[error("Newton iteration did not converge (last residual {residual:.3e} m)")]
    NoConvergence { residual: f64 },
    #[error(
        "residual Jacobian is singular (normalised det {det:.3e}); close to a type II singularity"
    )]
    TypeTwo { det: f64 },
    #[error("converged onto a type I singularity (normalised margin {margin:.3e})")]
    TypeOne { margin: f64 },
    #[error(transparent)]
    Passive(#[from] IkError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkSolution<T: Scalar> {
    pub state: LegState<T>,
    pub iterations: usize,
    pub residual: T,
}

/// Settings of the Newton forward-kinematics solver.
#[derive(Debug, Clone, Copy)]
pub struct FkOptions<T: Scalar> {
    pub max_iterations: usize,
    /// Convergence bound on the constraint residuals (m).
    pub tolerance: T,
    /// Central-difference step of the residual Jacobian (m).
    pub step: T,
    /// Normalised determinant below which the residual Jacobian is singular.
    pub singular_eps: T,
}

impl<T: Scalar> Default for FkOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: T::lit(T::INTERIOR_MARGIN) * T::lit(1e-4),
            step: T::lit(T::INTERIOR_MARGIN) * T::lit(1e2),
            singular_eps: T::lit(1e-10),
        }
    }
}

/// Length residuals of the three closure constraints at trial point `p`.
fn closure_residual<T: Scalar>(
    p: &Vector3<T>,
    theta: &[T; 3],
    passive_sign: Sign,
    geom: &LegGeometry<T>,
) -> Result<(Vector3<T>, PassiveSolution<T>), IkError> {
    let d = geom.d_at(theta[0]);
    let v = p - d;
    let len = v.norm();
    let passive = solve_passive_direction(&geom.frame.to_local(&v), len, theta[0], geom)?
        [passive_sign.index()];
    let e = d + passive.q * geom.e_b;
    let f = d + passive.q * geom.f_b;
    let r = Vector3::new(
        len - geom.d_p,
        (e - geom.g_at(theta[1])).norm() - geom.l4,
        (f - geom.h_at(theta[2])).norm() - geom.l5,
    );
    Ok((r, passive))
}

/// Forward kinematics by Newton iteration from the initial guess `p0`.
///
/// `passive_sign` selects the U-joint root used to orient the end-effector
/// body while iterating.
pub fn forward_kinematics<T: Scalar>(
    theta: &[T; 3],
    geom: &LegGeometry<T>,
    p0: &Vector3<T>,
    passive_sign: Sign,
    opts: &FkOptions<T>,
) -> Result<FkSolution<T>, FkError> {
    let mut p = *p0;
    let mut iterations = 0;
    loop {
        let (r, passive) = closure_residual(&p, theta, passive_sign, geom)?;
        let residual = r.amax();
        if residual <= opts.tolerance {
            return finish(p, theta, &passive, geom, iterations, residual, opts);
        }
        if iterations == opts.max_iterations {
            return Err(FkError::NoConvergence {
                residual: residual.as_f64(),
            });
        }
        let mut jac = Matrix3::zeros();
        for k in 0..3 {
            let mut dp = Vector3::zeros();
            dp[k] = opts.step;
            let (rp, _) = closure_residual(&(p + dp), theta, passive_sign, geom)?;
            let (rm, _) = closure_residual(&(p - dp), theta, passive_sign, geom)?;
            jac.set_column(k, &((rp - rm) / (opts.step + opts.step)));
        }
        let det = normalized_det(&jac);
        if det.abs() < opts.singular_eps {
            return Err(FkError::TypeTwo { det: det.as_f64() });
        }
        let inv = inverse_adjugate(&jac, T::zero()).ok_or(FkError::TypeTwo { det: 0.0 })?;
        p -= inv * r;
        iterations += 1;
    }
}

fn finish<T: Scalar>(
    p: Vector3<T>,
    theta: &[T; 3],
    passive: &PassiveSolution<T>,
    geom: &LegGeometry<T>,
    iterations: usize,
    residual: T,
    opts: &FkOptions<T>,
) -> Result<FkSolution<T>, FkError> {
    let d = geom.d_at(theta[0]);
    let e = d + passive.q * geom.e_b;
    let f = d + passive.q * geom.f_b;
    let g = geom.g_at(theta[1]);
    let h = geom.h_at(theta[2]);
    let x = geom.frame.x;
    // Type I margins: the diagonal of K, normalised.
    let margins = [
        cosine(&(p - d), &x.cross(&(d - geom.a))),
        cosine(&(e - g), &x.cross(&(g - geom.b()))),
        cosine(&(f - h), &x.cross(&(h - geom.c()))),
    ];
    let worst = margins.iter().fold(T::one(), |m, v| m.min(v.abs()));
    if worst < opts.singular_eps.sqrt() {
        return Err(FkError::TypeOne {
            margin: worst.as_f64(),
        });
    }
    // Branch labels of the recovered configuration.
    let label = |centre: Vector3<T>, angle: T, target: &Vector3<T>| {
        let w = target - centre;
        let (s, c) = angle.sin_cos();
        if geom.frame.y.dot(&w) * s - geom.frame.z.dot(&w) * c >= T::zero() {
            Sign::Plus
        } else {
            Sign::Minus
        }
    };
    let branch = Branch {
        theta1: label(geom.a, theta[0], &p),
        theta_s3: if passive.theta_s3.cos() >= T::zero() {
            Sign::Plus
        } else {
            Sign::Minus
        },
        theta2: label(geom.b(), theta[1], &e),
        theta3: label(geom.c(), theta[2], &f),
    };
    Ok(FkSolution {
        state: LegState {
            p,
            d,
            e,
            f,
            g,
            h,
            q: passive.q,
            angles: JointAngles {
                theta: theta.map(wrap_actuated),
                theta_s2: passive.theta_s2,
                theta_s3: passive.theta_s3,
            },
            branch,
        },
        iterations,
        residual,
    })
}

fn cosine<T: Scalar>(a: &Vector3<T>, b: &Vector3<T>) -> T {
    let n = a.norm() * b.norm();
    if n == T::zero() {
        T::zero()
    } else {
        a.dot(b) / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::proximal_point;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn leg() -> LegGeometry<f64> {
        LegGeometry::reference_design()
    }

    #[test]
    fn trig_roots_satisfy_equation() {
        for &(a, b, c) in &[
            (1.0_f64, 2.0, 0.5),
            (-3.0, 0.1, 1.0),
            (0.0, 1.0, 0.3),
            (2.0, 0.0, -2.0 + 1e-9),
        ] {
            let roots = solve_trig(a, b, c).unwrap();
            for th in roots {
                assert!(
                    (a * th.cos() + b * th.sin() - c).abs() < 1e-9,
                    "{a} {b} {c} {th}"
                );
            }
            let lab = |t: f64| a * t.sin() - b * t.cos();
            assert!(lab(roots[0]) >= lab(roots[1]));
        }
        assert!(solve_trig(1.0_f64, 1.0, 2.0).is_none());
    }

    #[test]
    fn trig_handles_vanishing_leading_coefficient() {
        // C + A = 0: one root is exactly π.
        let roots = solve_trig(1.0_f64, 0.5, -1.0).unwrap();
        assert!(roots.iter().any(|t| (t.abs() - PI).abs() < 1e-12));
        for th in roots {
            assert!((th.cos() + 0.5 * th.sin() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn theta1_zero_on_constructed_point() {
        let g = leg();
        let p = Vector3::new(0.0, 0.35, 0.35);
        let roots = solve_theta1(&p, &g).unwrap();
        assert!(roots
            .iter()
            .any(|t| t.abs() < 1e-12 || (t - 2.0 * PI).abs() < 1e-12));
        for t in roots {
            let d = proximal_point(&g.a, g.l1, t, &Vector3::x_axis());
            assert!(((p - d).norm_squared() - g.d_p * g.d_p).abs() < 1e-10);
        }
    }

    #[test]
    fn theta1_outside_torus() {
        let g = leg();
        assert!(matches!(
            solve_theta1(&Vector3::new(0.0, 0.71, 0.05), &g),
            Err(IkError::OutsideTorus { .. })
        ));
        assert!(matches!(
            solve_theta1(&Vector3::new(0.2, 0.0, 0.0), &g),
            Err(IkError::OnAxis)
        ));
    }

    #[test]
    fn passive_singular_when_aligned_with_axis() {
        let g = leg();
        // p − d along x: θs3 = π/2, which is a type I configuration.
        let theta1 = 0.4;
        let p = g.d_at(theta1) + Vector3::new(g.d_p, 0.0, 0.0);
        assert_eq!(
            solve_passive(&p, theta1, &g),
            Err(IkError::PassiveDegenerate)
        );
    }

    #[test]
    fn passive_zero_root_along_negative_y() {
        let g = leg();
        let p = g.d_at(0.0) + Vector3::new(0.0, -g.d_p, 0.0);
        let sols = solve_passive(&p, 0.0, &g).unwrap();
        let plus = sols[0];
        assert_relative_eq!(plus.theta_s3, 0.0, epsilon = 1e-12);
        assert_relative_eq!(plus.q.row(1)[0], -1.0, epsilon = 1e-12);
        for s in sols {
            assert!((s.q * g.p_b() - (p - g.d_at(0.0))).norm() < 1e-12);
        }
    }

    #[test]
    fn stretched_rus_chain_gives_double_root() {
        let g = leg();
        // E in the plane of B's circle, at distance l2 + l4 from B.
        let e = g.b() + Vector3::new(0.0, 0.3, 0.4).normalize() * (g.l2 + g.l4);
        let (t2, _) = solve_rus(&e, &Vector3::new(0.0, 0.2, 0.1), &g).unwrap();
        assert_relative_eq!(t2[0], t2[1], epsilon = 1e-5);
        let far = g.b() + Vector3::new(0.0, 0.0, 1.0) * (g.l2 + g.l4 + 1e-3);
        assert_eq!(
            solve_rus(&far, &far, &g).unwrap_err(),
            IkError::RusUnreachable {
                chain: Chain::First
            }
        );
    }

    #[test]
    fn all_branches_are_distinct_and_closed() {
        let g = LegGeometry::<f64>::symmetric(
            0.35,
            0.139,
            0.35,
            0.13,
            0.35,
            Vector3::new(0.097, 0.02, 0.01),
        );
        let p = Vector3::new(0.05, 0.3, 0.25);
        let sol = inverse_kinematics(&p, &g, BranchSelect::All).unwrap();
        let all: Vec<_> = sol.states.iter().chain(sol.collisions.iter()).collect();
        assert_eq!(all.len(), 16);
        for (i, a) in all.iter().enumerate() {
            assert!(a.max_residual(&g) < 1e-12);
            for b in &all[i + 1..] {
                let diff = (0..3)
                    .map(|k| (a.angles.theta[k] - b.angles.theta[k]).abs())
                    .sum::<f64>()
                    + (a.angles.theta_s3 - b.angles.theta_s3).abs()
                    + (a.angles.theta_s2 - b.angles.theta_s2).abs();
                assert!(diff > 1e-6);
            }
        }
    }

    #[test]
    fn default_branch_of_reference_design() {
        let g = leg();
        let b = default_branch(&g, 135f64.to_radians());
        assert_eq!(b.index(), 3);
        let s = solve_branch(&disk_centre(&g), &g, b).unwrap();
        assert_relative_eq!(s.angles.theta[0], PI / 3.0, epsilon = 1e-12);
        assert!(s.angles.theta[1] < 0.0 && s.angles.theta[2] < 0.0);
        assert!(s.angles.max_actuated() <= 135f64.to_radians());
    }

    #[test]
    fn outside_and_boundary_points_are_rejected() {
        let g = leg();
        let sel = BranchSelect::All;
        assert!(matches!(
            inverse_kinematics(&Vector3::new(0.0, 2.0, 0.0), &g, sel),
            Err(IkError::OutsideTorus { .. })
        ));
        assert!(matches!(
            inverse_kinematics(&Vector3::new(0.0, 0.7, 0.0), &g, sel),
            Err(IkError::OnBoundary { .. })
        ));
    }

    #[test]
    fn fk_fixed_point_takes_no_iterations() {
        let g = leg();
        let p = Vector3::new(0.02, 0.3, 0.1);
        let s = solve_branch(&p, &g, Branch::from_index(0).unwrap()).unwrap();
        let fk =
            forward_kinematics(&s.angles.theta, &g, &p, Sign::Plus, &FkOptions::default()).unwrap();
        assert_eq!(fk.iterations, 0);
        assert_eq!(fk.state.branch, s.branch);
    }

    #[test]
    fn fk_recovers_point_from_perturbed_guess() {
        let g = leg();
        let p = Vector3::new(-0.05, 0.4, 0.12);
        let s = solve_branch(&p, &g, Branch::from_index(0).unwrap()).unwrap();
        let guess = p + Vector3::new(1e-3, -0.6e-3, 0.8e-3);
        let fk = forward_kinematics(
            &s.angles.theta,
            &g,
            &guess,
            Sign::Plus,
            &FkOptions::default(),
        )
        .unwrap();
        assert!((fk.state.p - p).norm() < 1e-9);
        assert!(fk.iterations > 0 && fk.iterations < 10);
    }

    #[test]
    fn fk_at_type_one_boundary_is_reported() {
        let g = leg();
        // Outer equator of the torus: θ1 is a double root.
        let p = Vector3::new(0.0, 0.7, 0.0);
        let s = solve_branch(&p, &g, Branch::from_index(0).unwrap()).unwrap();
        let err = forward_kinematics(&s.angles.theta, &g, &p, Sign::Plus, &FkOptions::default())
            .unwrap_err();
        assert!(
            matches!(err, FkError::TypeOne { .. } | FkError::TypeTwo { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn frame_quarter_turn_matches_proximal_point() {
        let g = leg();
        assert_relative_eq!(
            g.d_at(FRAC_PI_2),
            Vector3::new(0.0, 0.0, 0.35),
            epsilon = 1e-15
        );
    }
}
