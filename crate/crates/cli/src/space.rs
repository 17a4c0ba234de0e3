//! Design space file for `optimize`.
//!
//! ```toml
//! l2 = [0.01, 0.35]
//! l4 = [0.01, 0.35]
//! e_x = [0.01, 0.35]
//! coarse_step = 0.01
//! fine_step = 0.001
//! coarse_eval_step = 0.005
//! fine_eval_step = 0.002
//! branch_policy = "fixed"
//! ```
//!
//! Every key is optional. `l1`, `l6`, `d_p`, `e_y`, `e_z` and the limits come
//! from the robot description.

use parakin::model::RobotConfig;
use parakin::optimizer::{Bounds, BranchPolicy, DesignSpace};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub l2: Option<[f64; 2]>,
    pub l4: Option<[f64; 2]>,
    pub e_x: Option<[f64; 2]>,
    pub coarse_step: Option<f64>,
    pub fine_step: Option<f64>,
    pub coarse_eval_step: Option<f64>,
    pub fine_eval_step: Option<f64>,
    pub branch_policy: Option<String>,
}

impl SpaceFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn into_space(self, cfg: &RobotConfig) -> Result<DesignSpace, String> {
        let mut s = DesignSpace::reference();
        let bounds = |v: [f64; 2]| Bounds {
            min: v[0],
            max: v[1],
        };
        if let Some(v) = self.l2 {
            s.l2 = bounds(v);
        }
        if let Some(v) = self.l4 {
            s.l4 = bounds(v);
        }
        if let Some(v) = self.e_x {
            s.e_x = bounds(v);
        }
        s.coarse_step = self.coarse_step.unwrap_or(s.coarse_step);
        s.fine_step = self.fine_step.unwrap_or(s.fine_step);
        s.coarse_eval_step = self.coarse_eval_step.unwrap_or(s.coarse_eval_step);
        s.fine_eval_step = self.fine_eval_step.unwrap_or(s.fine_eval_step);
        if let Some(p) = self.branch_policy {
            s.branch_policy = match p.as_str() {
                "any" => BranchPolicy::Any,
                "fixed" => BranchPolicy::Fixed,
                other => {
                    return Err(format!(
                        "branch_policy: unknown value `{other}` (expected any or fixed)"
                    ))
                }
            };
        }
        s.l1 = cfg.leg.l1;
        s.l6 = cfg.leg.l6;
        s.d_p = cfg.leg.d_p;
        s.e_y = cfg.leg.e_y;
        s.e_z = cfg.leg.e_z;
        s.mass = cfg.limits.mass_kg;
        s.tau_max = cfg.limits.tau_max_nm;
        s.theta_max_deg = cfg.limits.theta_max_deg;
        s.sync_load();
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}
