//! Grid search over `(l2, l4, e_x)` maximising the planar workspace in which
//! the end-effector can accelerate at 2g in every direction.

use crate::jacobians::build_jacobians;
use crate::kinematics::{check_interior, default_branch, solve_passive, solve_rus, solve_theta1};
use crate::model::{Branch, JointAngles, LegGeometry, LegState, Sign};
use crate::scalar::Scalar;
use crate::statics::{tau_ext_breakdown_from_map, LoadModel};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use thiserror::Error;

/// Inclusive bounds of one design variable (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

/// Which inverse-kinematic branches a cell may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchPolicy {
    /// The branch returned by [`default_branch`] for every cell.
    Fixed,
    /// Any branch; a cell counts if at least one branch passes.
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSpace {
    pub l2: Bounds,
    pub l4: Bounds,
    pub e_x: Bounds,
    pub coarse_step: f64,
    pub fine_step: f64,
    pub l1: f64,
    pub l6: f64,
    pub d_p: f64,
    pub e_y: f64,
    pub e_z: f64,
    #[serde(skip)]
    pub load: LoadModel<f64>,
    pub mass: f64,
    pub tau_max: f64,
    pub theta_max_deg: f64,
    /// Planar grid step used during the coarse pass (m).
    pub coarse_eval_step: f64,
    /// Planar grid step used during the fine pass (m).
    pub fine_eval_step: f64,
    pub branch_policy: BranchPolicy,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("invalid design space: {0}")]
    Space(String),
    #[error("no valid candidate in the design space ({evaluated} evaluated)")]
    NoValidCandidate { evaluated: usize },
}

impl DesignSpace {
    /// Variables in `[0.01, 0.35]` m with 1 cm / 1 mm steps, `l1 = d_p = 0.35`,
    /// `l6 = 0.130`, 0.5 kg, 10 N·m, 135°, evaluated at 5 mm / 2 mm on the
    /// default branch.
    pub fn reference() -> Self {
        let b = Bounds {
            min: 0.01,
            max: 0.35,
        };
        let load = LoadModel::reference();
        Self {
            l2: b,
            l4: b,
            e_x: b,
            coarse_step: 0.01,
            fine_step: 0.001,
            l1: 0.35,
            l6: 0.130,
            d_p: 0.35,
            e_y: 0.0,
            e_z: 0.0,
            mass: load.mass,
            tau_max: load.tau_max,
            theta_max_deg: 135.0,
            load,
            coarse_eval_step: 0.005,
            fine_eval_step: 0.002,
            branch_policy: BranchPolicy::Fixed,
        }
    }

    /// Re-derives `load` from `mass`, `tau_max` and `theta_max_deg`.
    pub fn sync_load(&mut self) {
        self.load.mass = self.mass;
        self.load.tau_max = self.tau_max;
        self.load.theta_max = self.theta_max_deg.to_radians();
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let err = |m: String| Err(OptimizerError::Space(m));
        for (name, b) in [("l2", self.l2), ("l4", self.l4), ("e_x", self.e_x)] {
            if !(b.min > 0.0 && b.min <= b.max && b.max.is_finite()) {
                return err(format!("{name} bounds must satisfy 0 < min <= max"));
            }
        }
        for (name, b) in [("l2", self.l2), ("l4", self.l4)] {
            if b.max > 0.35 + 1e-12 {
                return err(format!("{name} exceeds the 0.35 m link length limit"));
            }
        }
        if !(self.fine_step > 0.0 && self.fine_step <= self.coarse_step) {
            return err("steps must satisfy 0 < fine_step <= coarse_step".into());
        }
        if !(self.coarse_eval_step > 0.0 && self.fine_eval_step > 0.0) {
            return err("evaluation steps must be strictly positive".into());
        }
        for (name, v) in [
            ("l1", self.l1),
            ("l6", self.l6),
            ("d_p", self.d_p),
            ("mass", self.mass),
            ("tau_max", self.tau_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(format!("{name} must be strictly positive"));
            }
        }
        Ok(())
    }

    /// Symmetric leg for a candidate.
    pub fn leg(&self, l2: f64, l4: f64, e_x: f64) -> LegGeometry<f64> {
        LegGeometry::symmetric(
            self.l1,
            l2,
            l4,
            self.l6,
            self.d_p,
            Vector3::new(e_x, self.e_y, self.e_z),
        )
    }
}

/// Reason a candidate is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rejection {
    /// Some cell reached by the RU chain within the angle limit cannot be
    /// reached by the RUS chains within the limit.
    RusLimitsRu,
    /// The leg geometry is invalid.
    Geometry,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RusLimitsRu => "rus-limits-ru",
            Self::Geometry => "geometry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignCandidate {
    pub l2: f64,
    pub l4: f64,
    pub e_x: f64,
    pub valid: bool,
    /// Number of 2g-feasible cells; `None` for invalid candidates.
    pub objective: Option<u64>,
    /// Feasible area (m²).
    pub area: Option<f64>,
    pub reason: Option<Rejection>,
    /// Planar grid step used for this evaluation.
    pub eval_step: f64,
}

impl DesignCandidate {
    fn key(&self) -> (f64, f64, f64) {
        (self.l2, self.l4, self.e_x)
    }
}

/// Valid candidates by decreasing objective, ties broken by the
/// lexicographically smallest `(l2, l4, e_x)`; invalid candidates last.
pub fn rank_order(a: &DesignCandidate, b: &DesignCandidate) -> Ordering {
    let lex = |a: &DesignCandidate, b: &DesignCandidate| {
        let (x, y) = (a.key(), b.key());
        x.0.total_cmp(&y.0)
            .then(x.1.total_cmp(&y.1))
            .then(x.2.total_cmp(&y.2))
    };
    match (a.objective, b.objective) {
        (Some(x), Some(y)) => y.cmp(&x).then_with(|| lex(a, b)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => lex(a, b),
    }
}

/// Cells `(x, y) = (i·step, j·step)` of the half-plane `z = 0, y ≥ 0` that
/// lie strictly inside the workspace disk of the leg.
pub fn disk_cells(geom: &LegGeometry<f64>, step: f64) -> Vec<Vector3<f64>> {
    let reach = geom.l1 + geom.d_p;
    let ni = (geom.d_p / step).floor() as i64;
    let nj = (reach / step).floor() as i64;
    let mut out = Vec::new();
    for j in 0..=nj {
        for i in -ni..=ni {
            let p = geom.a + geom.frame.x * (i as f64 * step) + geom.frame.y * (j as f64 * step);
            if check_interior(&p, geom).is_ok() {
                out.push(p);
            }
        }
    }
    out
}

/// Outcome of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellOutcome {
    /// The RU chain cannot reach the cell within the angle limit.
    Unreached,
    /// The RU chain reaches the cell but no RUS solution respects the limit.
    RusLimited,
    /// Reachable by the whole leg within the limit.
    Reached { feasible_2g: bool },
}

fn state_of(
    p: &Vector3<f64>,
    geom: &LegGeometry<f64>,
    t1: f64,
    passive: &crate::kinematics::PassiveSolution<f64>,
    t2: f64,
    t3: f64,
    branch: Branch,
) -> LegState<f64> {
    let d = geom.d_at(t1);
    LegState {
        p: *p,
        d,
        e: d + passive.q * geom.e_b,
        f: d + passive.q * geom.f_b,
        g: geom.g_at(t2),
        h: geom.h_at(t3),
        q: passive.q,
        angles: JointAngles {
            theta: [t1, t2, t3],
            theta_s2: passive.theta_s2,
            theta_s3: passive.theta_s3,
        },
        branch,
    }
}

fn torque_ok(state: &LegState<f64>, geom: &LegGeometry<f64>, load: &LoadModel<f64>) -> bool {
    let Ok(pair) = build_jacobians(state, geom) else {
        return false;
    };
    let Ok(w) = pair.velocity_map(<f64 as Scalar>::SINGULAR_EPS) else {
        return false;
    };
    let t = tau_ext_breakdown_from_map(&w, &geom.frame.x, load);
    t[0].max(t[1]).max(t[2]) <= load.tau_max
}

fn evaluate_cell(
    p: &Vector3<f64>,
    geom: &LegGeometry<f64>,
    load: &LoadModel<f64>,
    allowed: &[Branch],
    need_torque: bool,
) -> CellOutcome {
    let lim = load.theta_max;
    let Ok(roots1) = solve_theta1(p, geom) else {
        return CellOutcome::Unreached;
    };
    let mut ru_reached = false;
    let mut rus_reached = false;
    for s1 in [Sign::Plus, Sign::Minus] {
        if !allowed.iter().any(|b| b.theta1 == s1) {
            continue;
        }
        let t1 = roots1[s1.index()];
        if t1 > lim {
            continue;
        }
        let Ok(passives) = solve_passive(p, t1, geom) else {
            continue;
        };
        ru_reached = true;
        for s3 in [Sign::Plus, Sign::Minus] {
            if !allowed.iter().any(|b| b.theta1 == s1 && b.theta_s3 == s3) {
                continue;
            }
            let passive = &passives[s3.index()];
            let d = geom.d_at(t1);
            let e = d + passive.q * geom.e_b;
            let f = d + passive.q * geom.f_b;
            let Ok((r2, r3)) = solve_rus(&e, &f, geom) else {
                continue;
            };
            for s2 in [Sign::Plus, Sign::Minus] {
                for s4 in [Sign::Plus, Sign::Minus] {
                    let branch = Branch {
                        theta1: s1,
                        theta_s3: s3,
                        theta2: s2,
                        theta3: s4,
                    };
                    if !allowed.contains(&branch) {
                        continue;
                    }
                    let (t2, t3) = (r2[s2.index()], r3[s4.index()]);
                    if t2 > lim || t3 > lim {
                        continue;
                    }
                    rus_reached = true;
                    if !need_torque {
                        return CellOutcome::Reached { feasible_2g: false };
                    }
                    let state = state_of(p, geom, t1, passive, t2, t3, branch);
                    if torque_ok(&state, geom, load) {
                        return CellOutcome::Reached { feasible_2g: true };
                    }
                }
            }
        }
    }
    match (ru_reached, rus_reached) {
        (false, _) => CellOutcome::Unreached,
        (true, false) => CellOutcome::RusLimited,
        (true, true) => CellOutcome::Reached { feasible_2g: false },
    }
}

/// Branches a cell may use under `policy`.
pub fn allowed_branches(
    geom: &LegGeometry<f64>,
    load: &LoadModel<f64>,
    policy: BranchPolicy,
) -> Vec<Branch> {
    match policy {
        BranchPolicy::Any => Branch::all().collect(),
        BranchPolicy::Fixed => vec![default_branch(geom, load.theta_max)],
    }
}

/// Validity and objective of one candidate at the given planar grid step.
pub fn evaluate_candidate(
    l2: f64,
    l4: f64,
    e_x: f64,
    space: &DesignSpace,
    eval_step: f64,
) -> DesignCandidate {
    let geom = space.leg(l2, l4, e_x);
    let mut cand = DesignCandidate {
        l2,
        l4,
        e_x,
        valid: false,
        objective: None,
        area: None,
        reason: None,
        eval_step,
    };
    if geom.validate().is_err() {
        cand.reason = Some(Rejection::Geometry);
        return cand;
    }
    let allowed = allowed_branches(&geom, &space.load, space.branch_policy);
    let cells = disk_cells(&geom, eval_step);
    // Reachability first: cheap and usually decisive.
    for p in &cells {
        if evaluate_cell(p, &geom, &space.load, &allowed, false) == CellOutcome::RusLimited {
            cand.reason = Some(Rejection::RusLimitsRu);
            return cand;
        }
    }
    let count = cells
        .iter()
        .filter(|p| {
            evaluate_cell(p, &geom, &space.load, &allowed, true)
                == CellOutcome::Reached { feasible_2g: true }
        })
        .count() as u64;
    cand.valid = true;
    cand.objective = Some(count);
    cand.area = Some(count as f64 * eval_step * eval_step);
    cand
}

/// Grid values `min + k·step` up to `max`, rounded to the micrometre.
pub fn grid_values(b: Bounds, step: f64) -> Vec<f64> {
    let n = ((b.max - b.min) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| ((b.min + k as f64 * step) * 1e6).round() / 1e6)
        .collect()
}

fn neighbourhood(b: Bounds, centre: f64, radius: f64) -> Bounds {
    Bounds {
        min: (centre - radius).max(b.min),
        max: (centre + radius).min(b.max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassReport {
    pub step: f64,
    pub eval_step: f64,
    pub evaluated: usize,
    pub valid: usize,
    /// Ranked candidates: best first.
    pub candidates: Vec<DesignCandidate>,
}

impl PassReport {
    pub fn winner(&self) -> Option<&DesignCandidate> {
        self.candidates.first().filter(|c| c.valid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub coarse: PassReport,
    pub fine: PassReport,
}

impl SearchReport {
    pub fn winner(&self) -> &DesignCandidate {
        self.fine
            .winner()
            .expect("search reports always hold a valid fine winner")
    }
}

fn run_pass(
    space: &DesignSpace,
    l2: Bounds,
    l4: Bounds,
    e_x: Bounds,
    step: f64,
    eval_step: f64,
) -> PassReport {
    let (a, b, c) = (
        grid_values(l2, step),
        grid_values(l4, step),
        grid_values(e_x, step),
    );
    let mut params = Vec::with_capacity(a.len() * b.len() * c.len());
    for &x in &a {
        for &y in &b {
            for &z in &c {
                params.push((x, y, z));
            }
        }
    }
    let mut candidates: Vec<DesignCandidate> = params
        .par_iter()
        .map(|&(x, y, z)| evaluate_candidate(x, y, z, space, eval_step))
        .collect();
    candidates.sort_by(rank_order);
    PassReport {
        step,
        eval_step,
        evaluated: candidates.len(),
        valid: candidates.iter().filter(|c| c.valid).count(),
        candidates,
    }
}

/// Coarse pass over the whole box, then a fine pass over ±1 coarse step
/// around the coarse winner.
pub fn grid_search(space: &DesignSpace) -> Result<SearchReport, OptimizerError> {
    space.validate()?;
    let coarse = run_pass(
        space,
        space.l2,
        space.l4,
        space.e_x,
        space.coarse_step,
        space.coarse_eval_step,
    );
    let Some(best) = coarse.winner().copied() else {
        return Err(OptimizerError::NoValidCandidate {
            evaluated: coarse.evaluated,
        });
    };
    let r = space.coarse_step;
    let fine = run_pass(
        space,
        neighbourhood(space.l2, best.l2, r),
        neighbourhood(space.l4, best.l4, r),
        neighbourhood(space.e_x, best.e_x, r),
        space.fine_step,
        space.fine_eval_step,
    );
    if fine.winner().is_none() {
        return Err(OptimizerError::NoValidCandidate {
            evaluated: coarse.evaluated + fine.evaluated,
        });
    }
    Ok(SearchReport { coarse, fine })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_space() -> DesignSpace {
        let mut s = DesignSpace::reference();
        s.l2 = Bounds {
            min: 0.12,
            max: 0.16,
        };
        s.l4 = Bounds {
            min: 0.33,
            max: 0.35,
        };
        s.e_x = Bounds {
            min: 0.08,
            max: 0.11,
        };
        s.coarse_eval_step = 0.02;
        s.fine_eval_step = 0.02;
        s
    }

    #[test]
    fn grid_values_are_exact() {
        let v = grid_values(
            Bounds {
                min: 0.01,
                max: 0.35,
            },
            0.01,
        );
        assert_eq!(v.len(), 35);
        assert_eq!(v[13], 0.14);
        assert_eq!(*v.last().unwrap(), 0.35);
    }

    #[test]
    fn short_distal_link_is_rejected() {
        let s = small_space();
        let c = evaluate_candidate(0.139, 0.05, 0.097, &s, 0.02);
        assert!(!c.valid);
        assert_eq!(c.reason, Some(Rejection::RusLimitsRu));
        assert_eq!(c.objective, None);
    }

    #[test]
    fn ties_break_lexicographically() {
        let mk = |l2: f64, obj: Option<u64>| DesignCandidate {
            l2,
            l4: 0.3,
            e_x: 0.1,
            valid: obj.is_some(),
            objective: obj,
            area: None,
            reason: None,
            eval_step: 0.01,
        };
        let mut v = vec![
            mk(0.2, Some(5)),
            mk(0.1, Some(5)),
            mk(0.05, None),
            mk(0.3, Some(7)),
        ];
        v.sort_by(rank_order);
        assert_eq!(
            v.iter().map(|c| c.l2).collect::<Vec<_>>(),
            vec![0.3, 0.1, 0.2, 0.05]
        );
    }

    #[test]
    fn relaxing_torque_never_hurts() {
        let s = small_space();
        let mut relaxed = s.clone();
        relaxed.tau_max = 20.0;
        relaxed.sync_load();
        let a = evaluate_candidate(0.14, 0.35, 0.1, &s, 0.02);
        let b = evaluate_candidate(0.14, 0.35, 0.1, &relaxed, 0.02);
        assert!(b.objective.unwrap_or(0) >= a.objective.unwrap_or(0));
    }

    #[test]
    fn fine_pass_does_not_lose_ground() {
        let mut s = small_space();
        s.coarse_step = 0.02;
        s.fine_step = 0.01;
        let r = grid_search(&s).unwrap();
        let coarse = r.coarse.winner().unwrap();
        assert!(r.winner().objective >= coarse.objective);
        assert!(r
            .fine
            .candidates
            .iter()
            .all(|c| !c.valid || c.objective.is_some()));
    }

    #[test]
    fn disk_cells_are_interior() {
        let g = DesignSpace::reference().leg(0.14, 0.35, 0.1);
        let cells = disk_cells(&g, 0.01);
        assert!(cells.iter().all(|p| g.tube_distance(p) < g.d_p));
        // Disk of radius 0.35 at 1 cm: roughly π·35² cells.
        assert!((cells.len() as f64 - std::f64::consts::PI * 35.0 * 35.0).abs() < 150.0);
    }
}
