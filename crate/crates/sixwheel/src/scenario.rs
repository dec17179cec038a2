//! Scenario files: everything a closed-loop run needs, in one JSON document.
//!
//! A scenario names the reference path, run length, sensor noise, GPS
//! dropout windows, obstacles, and terrain slope, plus optional overrides
//! for the controller, obstacle guard, and balance subsystems. Validation
//! errors name the offending field.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::BalanceConfig;
use crate::fuzzy::ControllerConfig;
use crate::geo::{PathSpec, ReferencePath};
use crate::guard::GuardConfig;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ScenarioError(pub String);

/// Initial pose override; without one the run starts on the first waypoint
/// facing along the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

/// Circular obstacle, optionally present only during a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    /// [t_on, t_off] in seconds, inclusive; absent means always present.
    #[serde(default)]
    pub active: Option<[f64; 2]>,
}

impl ObstacleSpec {
    pub fn is_active(&self, t: f64) -> bool {
        match self.active {
            Some([on, off]) => t >= on && t <= off,
            None => true,
        }
    }
}

fn default_dt() -> f64 {
    0.05
}

fn default_sigma_gps() -> f64 {
    0.01
}

fn default_sigma_heading() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub duration_s: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    pub path: PathSpec,
    #[serde(default)]
    pub start: Option<StartPose>,
    /// GPS position noise, meters, per axis.
    #[serde(default = "default_sigma_gps")]
    pub sigma_gps: f64,
    /// GPS heading noise, degrees.
    #[serde(default = "default_sigma_heading")]
    pub sigma_heading: f64,
    /// [t0, t1] windows (seconds, inclusive) with no GPS fix.
    #[serde(default)]
    pub gps_dropouts: Vec<[f64; 2]>,
    /// Enables the lane camera (vision offsets as GPS fallback).
    #[serde(default)]
    pub camera: bool,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    /// Piecewise-linear terrain pitch: [x_meters, pitch_degrees] knots with
    /// strictly increasing x. Empty means flat ground.
    #[serde(default)]
    pub slope_profile: Vec<[f64; 2]>,
    #[serde(default)]
    pub controller: Option<ControllerConfig>,
    #[serde(default)]
    pub guard: Option<GuardConfig>,
    #[serde(default)]
    pub balance: Option<BalanceConfig>,
}

impl Scenario {
    pub fn from_json_str(json: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario =
            serde_json::from_str(json).map_err(|e| ScenarioError(format!("scenario: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError(format!("scenario {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError(msg));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return fail(format!("scenario.duration_s: must be positive, got {}", self.duration_s));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return fail(format!("scenario.dt: must be positive, got {}", self.dt));
        }
        if !(self.sigma_gps.is_finite() && self.sigma_gps >= 0.0) {
            return fail(format!("scenario.sigma_gps: must be >= 0, got {}", self.sigma_gps));
        }
        if !(self.sigma_heading.is_finite() && self.sigma_heading >= 0.0) {
            return fail(format!(
                "scenario.sigma_heading: must be >= 0, got {}",
                self.sigma_heading
            ));
        }
        for (i, w) in self.gps_dropouts.iter().enumerate() {
            if !(w[0].is_finite() && w[1].is_finite() && w[0] <= w[1]) {
                return fail(format!(
                    "scenario.gps_dropouts[{i}]: window must satisfy t0 <= t1, got {w:?}"
                ));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius.is_finite() && o.radius > 0.0) {
                return fail(format!(
                    "scenario.obstacles[{i}].radius: must be positive, got {}",
                    o.radius
                ));
            }
            if let Some([on, off]) = o.active {
                if !(on.is_finite() && off.is_finite() && on <= off) {
                    return fail(format!(
                        "scenario.obstacles[{i}].active: window must satisfy t0 <= t1"
                    ));
                }
            }
        }
        if self.slope_profile.len() == 1 {
            return fail("scenario.slope_profile: needs at least two knots".into());
        }
        for pair in self.slope_profile.windows(2) {
            if !(pair[0][0] < pair[1][0]) {
                return fail(format!(
                    "scenario.slope_profile: x must be strictly increasing, got {} then {}",
                    pair[0][0], pair[1][0]
                ));
            }
        }
        self.build_path()?;
        if let Some(c) = &self.controller {
            crate::fuzzy::FuzzyController::new(*c)
                .map_err(|e| ScenarioError(format!("scenario.controller: {e}")))?;
        }
        Ok(())
    }

    pub fn build_path(&self) -> Result<ReferencePath, ScenarioError> {
        ReferencePath::from_spec(&self.path).map_err(|e| ScenarioError(format!("scenario.{e}")))
    }

    /// Start pose: explicit override, or the first waypoint facing along
    /// the path.
    pub fn start_pose(&self) -> Result<crate::geo::Pose2D, ScenarioError> {
        if let Some(s) = self.start {
            return Ok(crate::geo::Pose2D::new(s.x, s.y, s.heading));
        }
        let path = self.build_path()?;
        let p0 = path.points()[0];
        Ok(crate::geo::Pose2D::new(p0.x, p0.y, p0.heading))
    }
}
