//! Workspace membership, half-plane field maps and the constant orientation
//! workspace of the assembled robot.

use crate::jacobians::build_jacobians;
use crate::kinematics::{check_interior, solve_branch, BranchSelect};
use crate::linalg::normalized_det;
use crate::model::{Branch, LegGeometry, RobotGeometry};
use crate::scalar::Scalar;
use crate::statics::{feasible_2g_at, tau_ext_breakdown_from_map, LoadModel};
use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use std::io::{self, Write};
use thiserror::Error;

/// `√((ρ − l1)² + ξ²) ≤ d_p`, with `ρ` the distance to the actuated axis and
/// `ξ` the axial coordinate relative to `A`.
pub fn torus_contains<T: Scalar>(p: &Vector3<T>, geom: &LegGeometry<T>) -> bool {
    geom.tube_distance(p) <= geom.d_p
}

/// Rectangle of the half-plane, in axial (`x`) and radial (`y`) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    /// Bounding box of the torus section: `[−d_p, d_p] × [0, l1 + d_p]`.
    pub fn for_leg<T: Scalar>(geom: &LegGeometry<T>) -> Self {
        let dp = geom.d_p.as_f64();
        Self {
            x_min: -dp,
            x_max: dp,
            y_min: 0.0,
            y_max: geom.l1.as_f64() + dp,
        }
    }

    /// Number of grid lines along one side, including both ends when they
    /// fall on the grid.
    fn count(min: f64, max: f64, step: f64) -> usize {
        ((max - min) / step + 1e-9).floor() as usize + 1
    }
}

/// Values computed at one reachable cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellFields {
    /// `det J` divided by the product of its row norms.
    pub det_j: f64,
    /// `det K` divided by the product of its row norms.
    pub det_k: f64,
    /// `None` when `J` is singular.
    pub tau_ext: Option<f64>,
    /// rad
    pub max_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub x: f64,
    pub y: f64,
    /// `None` for unreachable cells.
    pub fields: Option<CellFields>,
}

impl Cell {
    pub fn reachable(&self) -> bool {
        self.fields.is_some()
    }
}

/// Fields sampled on the half-plane through the actuated axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkspaceMap {
    pub window: Window,
    pub step: f64,
    /// Angle of the half-plane about the actuated axis, from `y_f` toward `z_f`.
    pub plane_angle: f64,
    pub nx: usize,
    pub ny: usize,
    pub branch: String,
    /// Row-major in `y`, then `x`: index `iy·nx + ix`.
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkspaceError {
    #[error("grid step must be strictly positive, got {0}")]
    Step(f64),
    #[error("convex hull is degenerate: the joint positions are collinear or coincident")]
    DegenerateHull,
}

/// World position of half-plane coordinates `(x, y)`.
pub fn halfplane_point<T: Scalar>(
    geom: &LegGeometry<T>,
    x: f64,
    y: f64,
    plane_angle: f64,
) -> Vector3<T> {
    let (s, c) = T::lit(plane_angle).sin_cos();
    let radial = geom.frame.y * c + geom.frame.z * s;
    geom.a + geom.frame.x * T::lit(x) + radial * T::lit(y)
}

/// Evaluates one point with a fixed branch. Returns `None` when the point is
/// not strictly inside the torus or the branch has no real solution.
pub fn evaluate_point<T: Scalar>(
    p: &Vector3<T>,
    geom: &LegGeometry<T>,
    load: &LoadModel<T>,
    branch: Branch,
) -> Option<CellFields> {
    check_interior(p, geom).ok()?;
    let state = solve_branch(p, geom, branch).ok()?;
    let (det_j, det_k, tau) = match build_jacobians(&state, geom) {
        Ok(pair) => {
            let tau = pair
                .velocity_map(T::lit(T::SINGULAR_EPS))
                .ok()
                .map(|w| max3(tau_ext_breakdown_from_map(&w, &geom.frame.x, load)).as_f64());
            (
                normalized_det(&pair.j).as_f64(),
                normalized_det(&pair.k).as_f64(),
                tau,
            )
        }
        Err(_) => (0.0, normalized_det(&k_only(&state, geom)).as_f64(), None),
    };
    Some(CellFields {
        det_j,
        det_k,
        tau_ext: tau,
        max_theta: state.angles.max_actuated().as_f64(),
    })
}

fn max3<T: Scalar>(v: [T; 3]) -> T {
    v[0].max(v[1]).max(v[2])
}

fn k_only<T: Scalar>(state: &crate::model::LegState<T>, geom: &LegGeometry<T>) -> Matrix3<T> {
    let d = crate::singularity::check_type1(state, geom);
    Matrix3::from_diagonal(&Vector3::new(d[0], d[1], d[2]))
}

/// Samples reachability, `det J`, `det K`, `τ_ext` and `max θ` on a grid of
/// the half-plane at `plane_angle`, using one branch for every cell.
pub fn map_halfplane<T: Scalar>(
    geom: &LegGeometry<T>,
    load: &LoadModel<T>,
    window: Window,
    step: f64,
    plane_angle: f64,
    branch: Branch,
) -> Result<WorkspaceMap, WorkspaceError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(WorkspaceError::Step(step));
    }
    let nx = Window::count(window.x_min, window.x_max, step);
    let ny = Window::count(window.y_min, window.y_max, step);
    let cells = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let x = window.x_min + (k % nx) as f64 * step;
            let y = window.y_min + (k / nx) as f64 * step;
            let p = halfplane_point(geom, x, y, plane_angle);
            Cell {
                x,
                y,
                fields: evaluate_point(&p, geom, load, branch),
            }
        })
        .collect();
    Ok(WorkspaceMap {
        window,
        step,
        plane_angle,
        nx,
        ny,
        branch: branch.to_string(),
        cells,
    })
}

impl WorkspaceMap {
    pub const CSV_HEADER: &'static str = "x,y,reachable,detJ,detK,tau_ext,max_theta_deg";

    pub fn cell(&self, ix: usize, iy: usize) -> &Cell {
        &self.cells[iy * self.nx + ix]
    }

    /// One row per cell; unreachable cells leave the field columns empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            match &c.fields {
                Some(f) => {
                    let tau = f.tau_ext.map(|t| t.to_string()).unwrap_or_default();
                    writeln!(
                        w,
                        "{},{},1,{},{},{},{}",
                        c.x,
                        c.y,
                        f.det_j,
                        f.det_k,
                        tau,
                        f.max_theta.to_degrees()
                    )?
                }
                None => writeln!(w, "{},{},0,,,,", c.x, c.y)?,
            }
        }
        Ok(())
    }

    pub fn reachable_count(&self) -> usize {
        self.cells.iter().filter(|c| c.reachable()).count()
    }

    /// Cells with `τ_ext ≤ tau_max` and `max θ ≤ theta_max`.
    pub fn feasible_count(&self, tau_max: f64, theta_max: f64) -> usize {
        self.cells
            .iter()
            .filter_map(|c| c.fields)
            .filter(|f| f.max_theta <= theta_max && f.tau_ext.is_some_and(|t| t <= tau_max))
            .count()
    }
}

/// Area of the convex hull of planar points (Andrew's monotone chain).
pub fn hull_area(points: &[Vector2<f64>]) -> Result<f64, WorkspaceError> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(WorkspaceError::DegenerateHull);
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    let n = hull.len();
    let area = (0..n)
        .map(|i| hull[i].perp(&hull[(i + 1) % n]))
        .sum::<f64>()
        / 2.0;
    let scale = pts
        .iter()
        .map(|p| (p - pts[0]).norm_squared())
        .fold(0.0, f64::max);
    if n < 3 || area.abs() <= 1e-12 * scale {
        return Err(WorkspaceError::DegenerateHull);
    }
    Ok(area.abs())
}

/// Area of the convex hull of the nine actuated joint positions projected on
/// the horizontal plane.
pub fn footprint_area<T: Scalar>(robot: &RobotGeometry<T>) -> Result<f64, WorkspaceError> {
    let pts: Vec<Vector2<f64>> = robot
        .actuated_joint_positions()
        .iter()
        .map(|p| Vector2::new(p.x.as_f64(), p.y.as_f64()))
        .collect();
    hull_area(&pts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feasibility<T: Scalar> {
    /// Inside every leg torus.
    Kinematic,
    /// Every leg passes the 2g torque and angle-limit test on the selected
    /// branches.
    TwoG(LoadModel<T>, BranchSelect),
}

/// Constant orientation workspace on a voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CowResult {
    pub voxel: f64,
    /// Integer coordinates of the first voxel centre (multiples of `voxel`).
    pub origin: [i64; 3],
    pub dims: [usize; 3],
    /// Index `(k·ny + j)·nx + i`.
    pub occupancy: Vec<bool>,
    pub volume: f64,
    pub projected_area: f64,
    pub footprint_area: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CowSummary {
    pub voxel: f64,
    pub feasible_voxels: usize,
    pub volume: f64,
    pub projected_area: f64,
    pub footprint_area: f64,
    pub ratio: f64,
    /// Height of the platform attachment points above the leg end-effectors.
    pub platform_offset: f64,
}

impl CowResult {
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(
            (self.origin[0] + i as i64) as f64 * self.voxel,
            (self.origin[1] + j as i64) as f64 * self.voxel,
            (self.origin[2] + k as i64) as f64 * self.voxel,
        )
    }

    pub fn feasible_count(&self) -> usize {
        self.occupancy.iter().filter(|&&b| b).count()
    }

    pub fn summary(&self) -> CowSummary {
        CowSummary {
            voxel: self.voxel,
            feasible_voxels: self.feasible_count(),
            volume: self.volume,
            projected_area: self.projected_area,
            footprint_area: self.footprint_area,
            ratio: self.ratio,
            platform_offset: 0.0,
        }
    }

    /// Voxel file `x,y,z,feasible`. With `all = false` only feasible voxels
    /// are written.
    pub fn write_csv<W: Write>(&self, mut w: W, all: bool) -> io::Result<()> {
        writeln!(w, "x,y,z,feasible")?;
        let [nx, ny, nz] = self.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let f = self.occupancy[(k * ny + j) * nx + i];
                    if f || all {
                        let p = self.position(i, j, k);
                        writeln!(w, "{},{},{},{}", p.x, p.y, p.z, u8::from(f))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Axis-aligned bounds of a leg torus.
fn torus_bounds<T: Scalar>(geom: &LegGeometry<T>) -> ([f64; 3], [f64; 3]) {
    let a = geom.a.map(|v| v.as_f64());
    let x = geom.frame.x.map(|v| v.as_f64());
    let (l1, dp) = (geom.l1.as_f64(), geom.d_p.as_f64());
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for e in 0..3 {
        let r = l1 * (1.0 - x[e] * x[e]).max(0.0).sqrt() + dp;
        lo[e] = a[e] - r;
        hi[e] = a[e] + r;
    }
    (lo, hi)
}

/// Positions `p` of the platform centre such that `p + R·r_i` satisfies the
/// feasibility test of every leg `i`; only the half-space above the base is
/// kept.
pub fn cow<T: Scalar>(
    robot: &RobotGeometry<T>,
    orientation: &Matrix3<T>,
    voxel: f64,
    feasibility: Feasibility<T>,
) -> Result<CowResult, WorkspaceError> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(WorkspaceError::Step(voxel));
    }
    let offsets: [Vector3<T>; 3] = [0, 1, 2].map(|i| orientation * robot.platform_attach[i]);
    let mut lo = [f64::NEG_INFINITY; 3];
    let mut hi = [f64::INFINITY; 3];
    for (leg, off) in robot.legs.iter().zip(&offsets) {
        let (l, h) = torus_bounds(leg);
        for e in 0..3 {
            let o = off[e].as_f64();
            lo[e] = lo[e].max(l[e] - o);
            hi[e] = hi[e].min(h[e] - o);
        }
    }
    let up = robot.up().map(|v| v.as_f64());
    for e in 0..3 {
        if up[e] > 0.5 {
            lo[e] = lo[e].max(0.0);
        } else if up[e] < -0.5 {
            hi[e] = hi[e].min(0.0);
        }
    }
    let mut origin = [0i64; 3];
    let mut dims = [0usize; 3];
    for e in 0..3 {
        origin[e] = (lo[e] / voxel).ceil() as i64;
        let last = (hi[e] / voxel).floor() as i64;
        dims[e] = (last - origin[e] + 1).max(0) as usize;
    }
    let [nx, ny, nz] = dims;
    let test = |p: &Vector3<T>| -> bool {
        robot.legs.iter().zip(&offsets).all(|(leg, off)| {
            let q = p + off;
            match &feasibility {
                Feasibility::Kinematic => torus_contains(&q, leg),
                Feasibility::TwoG(load, select) => feasible_2g_at(&q, leg, load, *select),
            }
        })
    };
    let occupancy: Vec<bool> = (0..nx * ny * nz)
        .into_par_iter()
        .map(|idx| {
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / (nx * ny);
            let p = Vector3::new(
                T::lit((origin[0] + i as i64) as f64 * voxel),
                T::lit((origin[1] + j as i64) as f64 * voxel),
                T::lit((origin[2] + k as i64) as f64 * voxel),
            );
            test(&p)
        })
        .collect();

    let count = occupancy.iter().filter(|&&b| b).count();
    let mut columns = vec![false; nx * ny];
    for (idx, &f) in occupancy.iter().enumerate() {
        if f {
            columns[idx % (nx * ny)] = true;
        }
    }
    let column_count = columns.iter().filter(|&&b| b).count();
    let volume = count as f64 * voxel.powi(3);
    let projected_area = column_count as f64 * voxel * voxel;
    let footprint = footprint_area(robot)?;
    Ok(CowResult {
        voxel,
        origin,
        dims,
        occupancy,
        volume,
        projected_area,
        footprint_area: footprint,
        ratio: projected_area / footprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mounting;

    #[test]
    fn torus_membership() {
        let g = LegGeometry::<f64>::reference_design();
        assert!(torus_contains(&Vector3::new(0.0, g.l1 + g.d_p, 0.0), &g));
        assert!(torus_contains(&g.a, &g));
        let mut thin = g;
        thin.l1 = 0.4;
        assert!(!torus_contains(&thin.a, &thin));
        assert!(!torus_contains(&Vector3::new(0.0, 2.0, 0.0), &g));
    }

    #[test]
    fn right_triangle_hull() {
        let pts = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
        ];
        assert!((hull_area(&pts).unwrap() - 0.5).abs() < 1e-15);
        let mut dup = pts.to_vec();
        dup.extend_from_slice(&pts);
        dup.push(Vector2::new(0.2, 0.2));
        assert_eq!(hull_area(&dup).unwrap(), hull_area(&pts).unwrap());
    }

    #[test]
    fn collinear_hull_is_rejected() {
        let pts = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(2.0, 2.0),
        ];
        assert_eq!(hull_area(&pts), Err(WorkspaceError::DegenerateHull));
    }

    #[test]
    fn map_rejects_bad_step() {
        let g = LegGeometry::<f64>::reference_design();
        let load = LoadModel::reference();
        let b = Branch::from_index(0).unwrap();
        assert!(map_halfplane(&g, &load, Window::for_leg(&g), 0.0, 0.0, b).is_err());
    }

    #[test]
    fn map_rows_follow_grid() {
        let g = LegGeometry::<f64>::reference_design();
        let load = LoadModel::reference();
        let b = Branch::from_index(0).unwrap();
        let m = map_halfplane(&g, &load, Window::for_leg(&g), 0.05, 0.0, b).unwrap();
        assert_eq!(m.nx, 15);
        assert_eq!(m.ny, 15);
        assert_eq!(m.cell(3, 2).x, -0.35 + 3.0 * 0.05);
        assert!(m.cell(7, 7).reachable());
        assert!(!m.cell(0, 0).reachable());
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 15 * 15);
        assert!(text.lines().nth(1).unwrap().ends_with(",0,,,,"));
    }

    #[test]
    fn point_platform_cow_is_torus_intersection() {
        let leg = LegGeometry::<f64>::reference_design();
        let robot = RobotGeometry::assemble(&leg, 0.143, 0.0, Mounting::Floor);
        let res = cow(&robot, &Matrix3::identity(), 0.05, Feasibility::Kinematic).unwrap();
        for k in 0..res.dims[2] {
            for j in 0..res.dims[1] {
                for i in 0..res.dims[0] {
                    let p = res.position(i, j, k);
                    let inside = robot.legs.iter().all(|l| torus_contains(&p, l));
                    assert_eq!(
                        res.occupancy[(k * res.dims[1] + j) * res.dims[0] + i],
                        inside
                    );
                }
            }
        }
        assert!(res.feasible_count() > 0);
    }
}
