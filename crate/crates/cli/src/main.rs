mod commands;
mod manifest;
mod space;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Kinematics, singularities, statics and design optimisation of RU/2-RUS
/// robot legs.
#[derive(Debug, Parser)]
#[command(name = "parakin", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Robot description (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for map, cow and optimize.
    #[arg(long, global = true, env = "PARAKIN_THREADS")]
    pub threads: Option<usize>,
    /// Seed for sampled estimates.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Field {
    Reach,
    #[value(name = "detJ")]
    DetJ,
    #[value(name = "detK")]
    DetK,
    #[value(name = "tau_ext")]
    TauExt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CowMode {
    Kinematic,
    #[value(name = "2g")]
    TwoG,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inverse kinematics of one leg at a point of its frame.
    Ik {
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        point: [f64; 3],
        /// Branch index 0..15 or `all`.
        #[arg(long, default_value = "all")]
        branch: String,
    },
    /// Forward kinematics from actuated angles (rad).
    Fk {
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        theta: [f64; 3],
        /// Initial end-effector guess; defaults to the disk centre.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        guess: Option<[f64; 3]>,
        /// Root of the passive joint angle (0 = plus, 1 = minus).
        #[arg(long, default_value_t = 0)]
        passive: usize,
    },
    /// Jacobian matrices J and K.
    Jac {
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        point: [f64; 3],
        #[arg(long)]
        branch: Option<String>,
    },
    /// Singularity classification.
    Singular {
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        point: [f64; 3],
        #[arg(long)]
        branch: Option<String>,
        /// Threshold on normalised margins and determinants.
        #[arg(long, default_value_t = parakin::singularity::DEFAULT_EPS)]
        eps: f64,
    },
    /// Torque needed for 2g accelerations in every direction.
    Tau {
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        point: [f64; 3],
        #[arg(long)]
        branch: Option<String>,
    },
    /// End-effector resolution from encoder resolution.
    Resolution {
        #[arg(long, default_value_t = 20)]
        bits: u32,
        #[arg(long, default_value_t = 72.0 / 34.0)]
        ratio: f64,
        /// Planar grid step of the sampled region (m).
        #[arg(long, default_value_t = 0.005)]
        step: f64,
        /// Additional random points sampled in the disk.
        #[arg(long, default_value_t = 0)]
        samples: usize,
    },
    /// Field map on the half-plane through the actuated axis.
    Map {
        #[arg(long, value_enum, default_value = "reach")]
        field: Field,
        #[arg(long, default_value_t = 0.002)]
        step: f64,
        #[arg(long)]
        branch: Option<String>,
    },
    /// Constant orientation workspace of the assembled robot.
    Cow {
        #[arg(long, default_value_t = 0.005)]
        voxel: f64,
        #[arg(long, value_enum, default_value = "kinematic")]
        mode: CowMode,
        /// Write infeasible voxels too.
        #[arg(long)]
        all_voxels: bool,
    },
    /// Grid search over l2, l4 and e_x.
    Optimize {
        /// Design space description (TOML); defaults apply when omitted.
        #[arg(long)]
        space: Option<PathBuf>,
    },
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got `{s}`"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse::<f64>()
            .map_err(|_| format!("`{p}` is not a number"))?;
        if !o.is_finite() {
            return Err(format!("`{p}` is not finite"));
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn vectors_parse() {
        assert_eq!(parse_vec3("0, -0.5,1e-3").unwrap(), [0.0, -0.5, 1e-3]);
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_vec3("1,x,2").is_err());
        assert!(parse_vec3("1,inf,2").is_err());
    }
}
