use crate::manifest::{now, sha256_hex, RunManifest};
use crate::space::SpaceFile;
use crate::{Cli, Command, CowMode, Field};
use nalgebra::{Matrix3, Vector3};
use parakin::jacobians::build_jacobians;
use parakin::kinematics::{
    default_branch, disk_centre, forward_kinematics, inverse_kinematics, solve_branch,
    BranchSelect, FkOptions,
};
use parakin::linalg::{condition_number, normalized_det};
use parakin::model::{Branch, LegGeometry, LegState, RobotConfig, Sign};
use parakin::optimizer::{disk_cells, grid_search, DesignCandidate, DesignSpace};
use parakin::singularity::classify;
use parakin::statics::{feasible_2g, resolution_estimate, tau_ext_breakdown, LoadModel};
use parakin::workspace::{cow, map_halfplane, Feasibility, Window, WorkspaceMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Domain(_) | Self::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

struct Context {
    cfg: RobotConfig,
    config_path: PathBuf,
    config_hash: String,
    out: PathBuf,
    outputs: Vec<String>,
}

impl Context {
    fn leg(&self) -> LegGeometry<f64> {
        self.cfg.leg_geometry().expect("validated on load")
    }

    fn load(&self) -> LoadModel<f64> {
        let mut l = LoadModel::reference();
        l.mass = self.cfg.limits.mass_kg;
        l.tau_max = self.cfg.limits.tau_max_nm;
        l.theta_max = self.cfg.theta_max_rad();
        l
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<fs::File>, CliError> {
        let path = self.out.join(name);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn write_json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let path = self.out.join(name);
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).expect("json values serialise");
        writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let started = now();
    let config_path = cli
        .common
        .config
        .clone()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let text = fs::read_to_string(&config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let cfg = RobotConfig::parse(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    fs::create_dir_all(&cli.common.out).map_err(io_err(&cli.common.out))?;
    let mut ctx = Context {
        cfg,
        config_path,
        config_hash: sha256_hex(text.as_bytes()),
        out: cli.common.out.clone(),
        outputs: Vec::new(),
    };
    let (name, params) = match &cli.command {
        Command::Ik { point, branch } => ("ik", ik(&mut ctx, point, branch)?),
        Command::Fk {
            theta,
            guess,
            passive,
        } => ("fk", fk(&mut ctx, theta, guess.as_ref(), *passive)?),
        Command::Jac { point, branch } => ("jac", jac(&mut ctx, point, branch.as_deref())?),
        Command::Singular { point, branch, eps } => (
            "singular",
            singular(&mut ctx, point, branch.as_deref(), *eps)?,
        ),
        Command::Tau { point, branch } => ("tau", tau(&mut ctx, point, branch.as_deref())?),
        Command::Resolution {
            bits,
            ratio,
            step,
            samples,
        } => (
            "resolution",
            resolution(&mut ctx, *bits, *ratio, *step, *samples, cli.common.seed)?,
        ),
        Command::Map {
            field,
            step,
            branch,
        } => ("map", map(&mut ctx, *field, *step, branch.as_deref())?),
        Command::Cow {
            voxel,
            mode,
            all_voxels,
        } => ("cow", run_cow(&mut ctx, *voxel, *mode, *all_voxels)?),
        Command::Optimize { space } => ("optimize", optimize(&mut ctx, space.as_deref())?),
    };
    let mut outputs = ctx.outputs.clone();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        tool: "parakin",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name.into(),
        config_path: ctx.config_path.display().to_string(),
        config_sha256: ctx.config_hash.clone(),
        parameters: json!({
            "command": params,
            "threads": cli.common.threads,
            "seed": cli.common.seed,
        }),
        started_at: started,
        finished_at: now(),
        outputs,
    };
    let value = serde_json::to_value(&manifest).expect("manifest serialises");
    ctx.write_json("manifest.json", &value)
}

fn parse_branch(s: &str) -> Result<Branch, CliError> {
    let bad = || {
        CliError::Usage(format!(
            "--branch expects an index 0..15 or `all`, got `{s}`"
        ))
    };
    let i: usize = s.parse().map_err(|_| bad())?;
    Branch::from_index(i).ok_or_else(bad)
}

fn pick_branch(
    ctx: &Context,
    geom: &LegGeometry<f64>,
    s: Option<&str>,
) -> Result<Branch, CliError> {
    match s {
        Some(s) => parse_branch(s),
        None => Ok(default_branch(geom, ctx.cfg.theta_max_rad())),
    }
}

fn vec_json(v: &Vector3<f64>) -> Value {
    json!([v.x, v.y, v.z])
}

fn mat_json(m: &Matrix3<f64>) -> Value {
    json!([
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    ])
}

fn angle_json(rad: f64) -> Value {
    json!({ "rad": rad, "deg": rad.to_degrees() })
}

fn state_json(s: &LegState<f64>) -> Value {
    json!({
        "branch_index": s.branch.index(),
        "branch": s.branch.to_string(),
        "theta": s.angles.theta.map(angle_json),
        "theta_s2": angle_json(s.angles.theta_s2),
        "theta_s3": angle_json(s.angles.theta_s3),
        "max_theta": angle_json(s.angles.max_actuated()),
        "p": vec_json(&s.p),
        "d": vec_json(&s.d),
        "e": vec_json(&s.e),
        "f": vec_json(&s.f),
        "g": vec_json(&s.g),
        "h": vec_json(&s.h),
        "q": mat_json(&s.q),
    })
}

fn emit(ctx: &mut Context, name: &str, value: &Value) -> Result<(), CliError> {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json values serialise")
    );
    ctx.write_json(name, value)
}

fn solve_at(
    geom: &LegGeometry<f64>,
    p: &Vector3<f64>,
    branch: Branch,
) -> Result<LegState<f64>, CliError> {
    let sol = inverse_kinematics(p, geom, BranchSelect::One(branch))
        .map_err(|e| CliError::Domain(format!("unreachable: {e}")))?;
    Ok(sol.states[0])
}

fn ik(ctx: &mut Context, point: &[f64; 3], branch: &str) -> Result<Value, CliError> {
    let geom = ctx.leg();
    let select = if branch == "all" {
        BranchSelect::All
    } else {
        BranchSelect::One(parse_branch(branch)?)
    };
    let p = Vector3::from(*point);
    let sol = inverse_kinematics(&p, &geom, select)
        .map_err(|e| CliError::Domain(format!("unreachable: {e}")))?;
    let out = json!({
        "point": point,
        "solutions": sol.states.iter().map(state_json).collect::<Vec<_>>(),
        "collisions": sol.collisions.iter().map(state_json).collect::<Vec<_>>(),
    });
    emit(ctx, "ik.json", &out)?;
    Ok(json!({ "point": point, "branch": branch }))
}

fn fk(
    ctx: &mut Context,
    theta: &[f64; 3],
    guess: Option<&[f64; 3]>,
    passive: usize,
) -> Result<Value, CliError> {
    let geom = ctx.leg();
    let p0 = guess
        .map(|g| Vector3::from(*g))
        .unwrap_or_else(|| disk_centre(&geom));
    let sign = match passive {
        0 => Sign::Plus,
        1 => Sign::Minus,
        _ => return Err(CliError::Usage("--passive must be 0 or 1".into())),
    };
    let sol = forward_kinematics(theta, &geom, &p0, sign, &FkOptions::default())
        .map_err(|e| CliError::Domain(e.to_string()))?;
    let out = json!({
        "theta": theta.map(angle_json),
        "guess": vec_json(&p0),
        "iterations": sol.iterations,
        "residual": sol.residual,
        "state": state_json(&sol.state),
    });
    emit(ctx, "fk.json", &out)?;
    Ok(json!({ "theta": theta, "guess": vec_json(&p0), "passive": passive }))
}

fn jac(ctx: &mut Context, point: &[f64; 3], branch: Option<&str>) -> Result<Value, CliError> {
    let geom = ctx.leg();
    let b = pick_branch(ctx, &geom, branch)?;
    let s = solve_at(&geom, &Vector3::from(*point), b)?;
    let pair = build_jacobians(&s, &geom).map_err(|e| CliError::Domain(e.to_string()))?;
    let out = json!({
        "point": point,
        "branch": b.to_string(),
        "J": mat_json(&pair.j),
        "K": mat_json(&pair.k),
        "det_J": pair.j.determinant(),
        "det_J_normalized": normalized_det(&pair.j),
        "det_K": pair.det_k(),
        "cond_J": condition_number(&pair.j),
    });
    emit(ctx, "jac.json", &out)?;
    Ok(json!({ "point": point, "branch": b.index() }))
}

fn singular(
    ctx: &mut Context,
    point: &[f64; 3],
    branch: Option<&str>,
    eps: f64,
) -> Result<Value, CliError> {
    let geom = ctx.leg();
    let b = pick_branch(ctx, &geom, branch)?;
    let s = solve_at(&geom, &Vector3::from(*point), b)?;
    let report = classify(&s, &geom, eps);
    let out = json!({
        "point": point,
        "branch": b.to_string(),
        "report": serde_json::to_value(report).expect("report serialises"),
    });
    emit(ctx, "singular.json", &out)?;
    Ok(json!({ "point": point, "branch": b.index(), "eps": eps }))
}

fn tau(ctx: &mut Context, point: &[f64; 3], branch: Option<&str>) -> Result<Value, CliError> {
    let geom = ctx.leg();
    let load = ctx.load();
    let b = pick_branch(ctx, &geom, branch)?;
    let s = solve_at(&geom, &Vector3::from(*point), b)?;
    let t = tau_ext_breakdown(&s, &geom, &load).map_err(|e| CliError::Domain(e.to_string()))?;
    let out = json!({
        "point": point,
        "branch": b.to_string(),
        "tau_ext": t[0].max(t[1]).max(t[2]),
        "per_actuator": t,
        "tau_max": load.tau_max,
        "feasible_2g": feasible_2g(&s, &geom, &load),
    });
    emit(ctx, "tau.json", &out)?;
    Ok(json!({ "point": point, "branch": b.index() }))
}

fn resolution(
    ctx: &mut Context,
    bits: u32,
    ratio: f64,
    step: f64,
    samples: usize,
    seed: u64,
) -> Result<Value, CliError> {
    if !(step > 0.0) || !(ratio > 0.0) {
        return Err(CliError::Usage(
            "--step and --ratio must be strictly positive".into(),
        ));
    }
    let geom = ctx.leg();
    let load = ctx.load();
    let b = default_branch(&geom, load.theta_max);
    let mut points = disk_cells(&geom, step);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let r = geom.d_p * rng.random::<f64>().sqrt();
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        points.push(disk_centre(&geom) + Vector3::new(r * phi.cos(), r * phi.sin(), 0.0));
    }
    let states: Vec<LegState<f64>> = points
        .iter()
        .filter_map(|p| solve_branch(p, &geom, b).ok())
        .filter(|s| s.angles.max_actuated() <= load.theta_max)
        .collect();
    let feasible: Vec<LegState<f64>> = states
        .iter()
        .copied()
        .filter(|s| feasible_2g(s, &geom, &load))
        .collect();
    let limited = resolution_estimate(&geom, bits, ratio, &states);
    let within = resolution_estimate(&geom, bits, ratio, &feasible);
    let out = json!({
        "bits": bits,
        "ratio": ratio,
        "branch": b.to_string(),
        "angle_limited_region": serde_json::to_value(limited).expect("serialises"),
        "feasible_2g_region": serde_json::to_value(within).expect("serialises"),
    });
    emit(ctx, "resolution.json", &out)?;
    Ok(json!({ "bits": bits, "ratio": ratio, "step": step, "samples": samples }))
}

fn field_summary(m: &WorkspaceMap, field: Field, load: &LoadModel<f64>) -> Value {
    let values: Vec<f64> = m
        .cells
        .iter()
        .filter_map(|c| c.fields)
        .filter_map(|f| match field {
            Field::Reach => Some(1.0),
            Field::DetJ => Some(f.det_j),
            Field::DetK => Some(f.det_k),
            Field::TauExt => f.tau_ext,
        })
        .collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sign_changes = 0usize;
    if field == Field::DetJ || field == Field::DetK {
        for iy in 0..m.ny {
            for ix in 1..m.nx {
                if let (Some(a), Some(b)) = (m.cell(ix - 1, iy).fields, m.cell(ix, iy).fields) {
                    let (a, b) = if field == Field::DetJ {
                        (a.det_j, b.det_j)
                    } else {
                        (a.det_k, b.det_k)
                    };
                    if a * b < 0.0 {
                        sign_changes += 1;
                    }
                }
            }
        }
    }
    json!({
        "field": format!("{field:?}"),
        "cells": m.cells.len(),
        "reachable": m.reachable_count(),
        "feasible_2g": m.feasible_count(load.tau_max, load.theta_max),
        "min": if values.is_empty() { Value::Null } else { json!(min) },
        "max": if values.is_empty() { Value::Null } else { json!(max) },
        "sign_changes_along_x": sign_changes,
    })
}

fn map(
    ctx: &mut Context,
    field: Field,
    step: f64,
    branch: Option<&str>,
) -> Result<Value, CliError> {
    let geom = ctx.leg();
    let load = ctx.load();
    let b = pick_branch(ctx, &geom, branch)?;
    let m = map_halfplane(&geom, &load, Window::for_leg(&geom), step, 0.0, b)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let path = ctx.out.join("map.csv");
    let mut w = ctx.create("map.csv")?;
    m.write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    let summary = json!({
        "branch": b.to_string(),
        "step": step,
        "nx": m.nx,
        "ny": m.ny,
        "summary": field_summary(&m, field, &load),
    });
    emit(ctx, "map_summary.json", &summary)?;
    Ok(json!({ "field": format!("{field:?}"), "step": step, "branch": b.index() }))
}

fn run_cow(
    ctx: &mut Context,
    voxel: f64,
    mode: CowMode,
    all_voxels: bool,
) -> Result<Value, CliError> {
    let robot = ctx
        .cfg
        .robot_geometry()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let feas = match mode {
        CowMode::Kinematic => Feasibility::Kinematic,
        CowMode::TwoG => {
            let load = ctx.load();
            let b = default_branch(&robot.legs[0], load.theta_max);
            Feasibility::TwoG(load, BranchSelect::One(b))
        }
    };
    let res = cow(&robot, &Matrix3::identity(), voxel, feas).map_err(|e| match e {
        parakin::workspace::WorkspaceError::Step(_) => CliError::Usage(e.to_string()),
        _ => CliError::Domain(e.to_string()),
    })?;
    let path = ctx.out.join("cow_voxels.csv");
    let mut w = ctx.create("cow_voxels.csv")?;
    res.write_csv(&mut w, all_voxels)
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    let summary = serde_json::to_value(res.summary()).expect("summary serialises");
    emit(ctx, "cow_summary.json", &summary)?;
    Ok(
        json!({ "voxel": voxel, "mode": format!("{mode:?}"), "all_voxels": all_voxels, "orientation": "identity" }),
    )
}

fn candidate_row(c: &DesignCandidate) -> String {
    format!(
        "{},{},{},{},{},{}",
        c.l2,
        c.l4,
        c.e_x,
        u8::from(c.valid),
        c.objective.map(|o| o.to_string()).unwrap_or_default(),
        c.reason.map(|r| r.as_str()).unwrap_or("")
    )
}

fn optimize(ctx: &mut Context, space: Option<&Path>) -> Result<Value, CliError> {
    let file = match space {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            SpaceFile::parse(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => SpaceFile::default(),
    };
    let space: DesignSpace = file.into_space(&ctx.cfg).map_err(CliError::Config)?;
    let report = grid_search(&space).map_err(|e| CliError::Domain(e.to_string()))?;
    let path = ctx.out.join("candidates.csv");
    let mut w = ctx.create("candidates.csv")?;
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(w, "pass,l2,l4,e_x,valid,objective,reason")?;
        for (pass, r) in [("coarse", &report.coarse), ("fine", &report.fine)] {
            for c in &r.candidates {
                writeln!(w, "{pass},{}", candidate_row(c))?;
            }
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(&path))?;
    let pass = |r: &parakin::optimizer::PassReport| {
        json!({
            "step": r.step,
            "eval_step": r.eval_step,
            "evaluated": r.evaluated,
            "valid": r.valid,
            "winner": r.winner(),
        })
    };
    let summary = json!({
        "space": serde_json::to_value(&space).expect("space serialises"),
        "coarse": pass(&report.coarse),
        "fine": pass(&report.fine),
        "winner": report.winner(),
    });
    emit(ctx, "optimize_summary.json", &summary)?;
    Ok(serde_json::to_value(&space).expect("space serialises"))
}
