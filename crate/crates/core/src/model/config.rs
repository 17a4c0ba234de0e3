//! Robot description file.
//!
//! ```toml
//! [leg]
//! l1 = 0.35
//! l2 = 0.139
//! l4 = 0.350
//! l6 = 0.130
//! d_p = 0.35
//! e_x = 0.097
//! e_y = 0.0
//! e_z = 0.0
//! symmetric = true
//!
//! [robot]
//! leg_spacing = 0.143
//! platform_side = 0.173
//! mounting = "floor"
//!
//! [limits]
//! tau_max_nm = 10.0
//! theta_max_deg = 135.0
//! mass_kg = 0.5
//! ```
//!
//! Lengths are in metres. Keys ending in `_deg` are in degrees and converted
//! on load. With `symmetric = true` the mirrored keys (`l3`, `l5`, `l7`,
//! `f_x`, `f_y`, `f_z`) may be omitted; when present they must match.

use super::{GeometryError, LegFrame, LegGeometry, RobotGeometry};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed robot description: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

impl ConfigError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Field {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Dotted path of the offending field, when known.
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::Field { path, .. } => Some(path),
            Self::Syntax(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mounting {
    #[default]
    Floor,
    Ceiling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegSection {
    pub l1: f64,
    pub l2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l3: Option<f64>,
    pub l4: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l5: Option<f64>,
    pub l6: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l7: Option<f64>,
    pub d_p: f64,
    pub e_x: f64,
    #[serde(default)]
    pub e_y: f64,
    #[serde(default)]
    pub e_z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_z: Option<f64>,
    #[serde(default = "yes")]
    pub symmetric: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSection {
    pub leg_spacing: f64,
    pub platform_side: f64,
    #[serde(default)]
    pub mounting: Mounting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    pub tau_max_nm: f64,
    pub theta_max_deg: f64,
    pub mass_kg: f64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        Self {
            tau_max_nm: 10.0,
            theta_max_deg: 135.0,
            mass_kg: 0.5,
        }
    }
}

/// Parsed and validated robot description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub leg: LegSection,
    pub robot: RobotSection,
    #[serde(default)]
    pub limits: LimitsSection,
}

impl RobotConfig {
    /// Description of the optimal design with the reference assembly.
    pub fn reference() -> Self {
        Self {
            leg: LegSection {
                l1: 0.35,
                l2: 0.139,
                l3: None,
                l4: 0.350,
                l5: None,
                l6: 0.130,
                l7: None,
                d_p: 0.35,
                e_x: 0.097,
                e_y: 0.0,
                e_z: 0.0,
                f_x: None,
                f_y: None,
                f_z: None,
                symmetric: true,
            },
            robot: RobotSection {
                leg_spacing: 0.143,
                platform_side: 0.173,
                mounting: Mounting::Floor,
            },
            limits: LimitsSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RobotConfig =
            toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.leg_geometry()?;
        let r = &self.robot;
        if !(r.leg_spacing > 0.0 && r.leg_spacing.is_finite()) {
            return Err(ConfigError::field(
                "robot.leg_spacing",
                "must be strictly positive",
            ));
        }
        if !(r.platform_side >= 0.0 && r.platform_side.is_finite()) {
            return Err(ConfigError::field(
                "robot.platform_side",
                "must be non-negative",
            ));
        }
        let l = &self.limits;
        if !(l.tau_max_nm > 0.0 && l.tau_max_nm.is_finite()) {
            return Err(ConfigError::field(
                "limits.tau_max_nm",
                "must be strictly positive",
            ));
        }
        if !(l.theta_max_deg > 0.0 && l.theta_max_deg <= 360.0) {
            return Err(ConfigError::field(
                "limits.theta_max_deg",
                "must lie in (0, 360]",
            ));
        }
        if !(l.mass_kg > 0.0 && l.mass_kg.is_finite()) {
            return Err(ConfigError::field(
                "limits.mass_kg",
                "must be strictly positive",
            ));
        }
        Ok(())
    }

    /// Leg geometry in the canonical leg frame.
    pub fn leg_geometry(&self) -> Result<LegGeometry<f64>, ConfigError> {
        let s = &self.leg;
        let mirrored = |name: &str, given: Option<f64>, twin: f64| -> Result<f64, ConfigError> {
            match (s.symmetric, given) {
                (_, Some(v)) => Ok(v),
                (true, None) => Ok(twin),
                (false, None) => Err(ConfigError::field(
                    format!("leg.{name}"),
                    "required when symmetric = false",
                )),
            }
        };
        let geom = LegGeometry {
            l1: s.l1,
            l2: s.l2,
            l3: mirrored("l3", s.l3, s.l2)?,
            l4: s.l4,
            l5: mirrored("l5", s.l5, s.l4)?,
            l6: s.l6,
            l7: mirrored("l7", s.l7, s.l6)?,
            d_p: s.d_p,
            e_b: Vector3::new(s.e_x, s.e_y, s.e_z),
            f_b: Vector3::new(
                mirrored("f_x", s.f_x, s.e_x)?,
                mirrored("f_y", s.f_y, -s.e_y)?,
                mirrored("f_z", s.f_z, s.e_z)?,
            ),
            a: Vector3::zeros(),
            frame: LegFrame::canonical(),
            symmetric: s.symmetric,
        };
        geom.validate().map_err(|e| match e {
            GeometryError::NonPositive { field, .. }
            | GeometryError::Asymmetric { field, .. }
            | GeometryError::NotFinite(field) => {
                ConfigError::field(format!("leg.{field}"), e.to_string())
            }
            GeometryError::AxisNotUnit(_) => ConfigError::field("leg", e.to_string()),
        })?;
        Ok(geom)
    }

    pub fn robot_geometry(&self) -> Result<RobotGeometry<f64>, ConfigError> {
        let leg = self.leg_geometry()?;
        Ok(RobotGeometry::assemble(
            &leg,
            self.robot.leg_spacing,
            self.robot.platform_side,
            self.robot.mounting,
        ))
    }

    pub fn theta_max_rad(&self) -> f64 {
        self.limits.theta_max_deg.to_radians()
    }
}

/// Parses a robot description and assembles the robot.
pub fn load_robot(text: &str) -> Result<RobotGeometry<f64>, ConfigError> {
    RobotConfig::parse(text)?.robot_geometry()
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = r#"
[leg]
l1 = 0.35
l2 = 0.139
l3 = 0.139
l4 = 0.350
l5 = 0.350
l6 = 0.130
l7 = 0.130
d_p = 0.35
e_x = 0.097
e_y = 0.0
e_z = 0.0
symmetric = true

[robot]
leg_spacing = 0.143
platform_side = 0.173
mounting = "floor"

[limits]
tau_max_nm = 10.0
theta_max_deg = 135.0
mass_kg = 0.5
"#;

    #[test]
    fn loads_reference_description() {
        let robot = load_robot(REFERENCE).unwrap();
        assert_eq!(robot.legs[0].l2, 0.139);
        assert_eq!(robot.legs[2].f_b.x, 0.097);
        assert_eq!(robot.leg_spacing, 0.143);
        assert_eq!(robot.platform_side, 0.173);
    }

    #[test]
    fn asymmetric_value_is_reported_by_path() {
        let text = REFERENCE.replace("l3 = 0.139", "l3 = 0.140");
        let err = RobotConfig::parse(&text).unwrap_err();
        assert_eq!(err.path(), Some("leg.l3"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = REFERENCE.replace("[robot]", "[robot]\ncolour = \"red\"");
        assert!(matches!(
            RobotConfig::parse(&text),
            Err(ConfigError::Syntax(_))
        ));
        let text = format!("{REFERENCE}\n[extra]\nx = 1\n");
        assert!(RobotConfig::parse(&text).is_err());
    }

    #[test]
    fn non_positive_length_is_rejected() {
        let text = REFERENCE.replace("l1 = 0.35", "l1 = -0.35");
        assert_eq!(
            RobotConfig::parse(&text).unwrap_err().path(),
            Some("leg.l1")
        );
    }

    #[test]
    fn asymmetric_leg_requires_all_fields() {
        let text = REFERENCE
            .replace("symmetric = true", "symmetric = false")
            .replace("l7 = 0.130\n", "");
        assert_eq!(
            RobotConfig::parse(&text).unwrap_err().path(),
            Some("leg.l7")
        );
    }

    #[test]
    fn serialisation_round_trip_is_idempotent() {
        let cfg = RobotConfig::parse(REFERENCE).unwrap();
        let again = RobotConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_toml(), again.to_toml());
        let reference = RobotConfig::reference();
        assert_eq!(
            reference.robot_geometry().unwrap(),
            cfg.robot_geometry().unwrap()
        );
    }
}
