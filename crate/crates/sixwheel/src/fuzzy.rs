//! Mamdani fuzzy steering: two offset inputs, two wheel-speed outputs.
//!
//! Lateral and heading offsets are normalized, fuzzified into three sets
//! each (left / moderate / right), pushed through a fixed 3x3 rule table per
//! wheel with max-min inference, and defuzzified over a three-set speed
//! variable expressed in percent of the maximum wheel speed. The two rule
//! tables are mirror images, so swapping the signs of both inputs swaps the
//! wheel outputs exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FuzzyError {
    #[error("invalid membership: {0}")]
    InvalidMembership(String),
    #[error("all output memberships are zero")]
    ZeroMembership,
}

/// Three fuzzy sets over one variable, described by five breakpoints
/// `l0 <= l1 < l2 < l3 <= l4`.
///
/// Set 0 is full left of `l1`, set 1 peaks at `l2`, set 2 is full right of
/// `l3`; adjacent sets overlap linearly so grades always sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipTriple {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
}

impl MembershipTriple {
    pub fn new(l0: f64, l1: f64, l2: f64, l3: f64, l4: f64) -> Result<Self, FuzzyError> {
        let m = MembershipTriple { l0, l1, l2, l3, l4 };
        m.validate()?;
        Ok(m)
    }

    /// Shoulder form: the outer breakpoints sit on the inner ones.
    pub fn shouldered(l1: f64, l2: f64, l3: f64) -> Result<Self, FuzzyError> {
        Self::new(l1, l1, l2, l3, l3)
    }

    pub fn validate(&self) -> Result<(), FuzzyError> {
        let ok = self.l0 <= self.l1 && self.l1 < self.l2 && self.l2 < self.l3 && self.l3 <= self.l4;
        if ok && [self.l0, self.l1, self.l2, self.l3, self.l4].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(FuzzyError::InvalidMembership(format!(
                "breakpoints must satisfy l0 <= l1 < l2 < l3 <= l4, got {:?}",
                self
            )))
        }
    }
}

/// Grades a value against the three sets. The grades are in [0, 1] and sum
/// to exactly 1: inside each overlap the second grade is computed as one
/// minus the first.
pub fn fuzzify(v: f64, m: &MembershipTriple) -> [f64; 3] {
    debug_assert!(v.is_finite(), "fuzzify input must be finite");
    if v <= m.l1 {
        [1.0, 0.0, 0.0]
    } else if v < m.l2 {
        let mu0 = (m.l2 - v) / (m.l2 - m.l1);
        [mu0, 1.0 - mu0, 0.0]
    } else if v == m.l2 {
        [0.0, 1.0, 0.0]
    } else if v < m.l3 {
        let mu2 = (v - m.l2) / (m.l3 - m.l2);
        [0.0, 1.0 - mu2, mu2]
    } else {
        [0.0, 0.0, 1.0]
    }
}

/// Output speed level a rule fires at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleLevel {
    Low,
    Mid,
    High,
}

use RuleLevel::{High, Low, Mid};

/// Rule tables indexed `[heading_set][lateral_set]` with set order
/// {left, moderate, right} on both axes. Pointing or sitting to one side
/// speeds up that side's wheel, steering back toward the path.
pub const LEFT_WHEEL_RULES: [[RuleLevel; 3]; 3] =
    [[High, High, Mid], [High, Mid, Low], [Mid, Low, Low]];
pub const RIGHT_WHEEL_RULES: [[RuleLevel; 3]; 3] =
    [[Low, Low, Mid], [Low, Mid, High], [Mid, High, High]];

/// Max-min inference: each rule fires at the min of its two input grades,
/// and each output level takes the max over the rules that name it.
pub fn infer(
    mu_heading: &[f64; 3],
    mu_lateral: &[f64; 3],
    rules: &[[RuleLevel; 3]; 3],
) -> [f64; 3] {
    let mut out = [0.0f64; 3];
    for (i, &mh) in mu_heading.iter().enumerate() {
        for (j, &ml) in mu_lateral.iter().enumerate() {
            let fire = mh.min(ml);
            let slot = match rules[i][j] {
                Low => 0,
                Mid => 1,
                High => 2,
            };
            if fire > out[slot] {
                out[slot] = fire;
            }
        }
    }
    out
}

/// Center-of-gravity defuzzification over clipped triangular output sets.
///
/// Each output set clipped at grade mu contributes the area of its triangle
/// minus the clipped-off top, `base/2 * (1 - (1 - mu)^2)`, centered at its
/// peak. Errors when every grade is zero.
pub fn defuzz(mu: &[f64; 3], v: &MembershipTriple) -> Result<f64, FuzzyError> {
    let clipped = |mu: f64| 1.0 - (1.0 - mu) * (1.0 - mu);
    let a = (v.l2 - v.l1) / 2.0 * clipped(mu[0]);
    let b = (v.l3 - v.l1) / 2.0 * clipped(mu[1]);
    let c = (v.l3 - v.l2) / 2.0 * clipped(mu[2]);
    let denom = a + b + c;
    if denom == 0.0 {
        return Err(FuzzyError::ZeroMembership);
    }
    Ok((a * v.l1 + b * v.l2 + c * v.l3) / denom)
}

/// Everything the steering controller needs. Offsets saturate at `x_sat`
/// meters and `theta_sat` degrees; the speed variable is in percent, so
/// wheel commands scale by `v_max / 100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub x_membership: MembershipTriple,
    pub theta_membership: MembershipTriple,
    pub v_membership: MembershipTriple,
    pub x_sat: f64,
    pub theta_sat: f64,
    pub v_max: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            x_membership: MembershipTriple { l0: -10.0, l1: -10.0, l2: 0.0, l3: 10.0, l4: 10.0 },
            theta_membership: MembershipTriple { l0: -1.0, l1: -1.0, l2: 0.0, l3: 1.0, l4: 1.0 },
            v_membership: MembershipTriple { l0: 0.0, l1: 0.0, l2: 50.0, l3: 100.0, l4: 100.0 },
            x_sat: 1.0,
            theta_sat: 30.0,
            v_max: 1.2,
        }
    }
}

impl ControllerConfig {
    /// Replaces the tunable inner breakpoints of the two input variables
    /// (the quantities the self-tuning stage adjusts).
    pub fn with_tuned_breakpoints(
        mut self,
        x_l1: f64,
        x_l3: f64,
        theta_l1: f64,
        theta_l3: f64,
    ) -> Result<Self, FuzzyError> {
        self.x_membership = MembershipTriple::shouldered(x_l1, self.x_membership.l2, x_l3)?;
        self.theta_membership =
            MembershipTriple::shouldered(theta_l1, self.theta_membership.l2, theta_l3)?;
        Ok(self)
    }
}

/// The steering controller: offsets in, wheel speeds out.
#[derive(Debug, Clone)]
pub struct FuzzyController {
    config: ControllerConfig,
}

impl FuzzyController {
    pub fn new(config: ControllerConfig) -> Result<Self, FuzzyError> {
        config.x_membership.validate()?;
        config.theta_membership.validate()?;
        config.v_membership.validate()?;
        if !(config.x_sat > 0.0 && config.theta_sat > 0.0 && config.v_max > 0.0) {
            return Err(FuzzyError::InvalidMembership(
                "saturations and v_max must be positive".into(),
            ));
        }
        Ok(FuzzyController { config })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// One control cycle: lateral offset in meters, heading offset in
    /// degrees, both positive-right. Returns (left, right) wheel speeds in
    /// meters per second.
    pub fn control_step(&self, lateral: f64, heading: f64) -> (f64, f64) {
        let c = &self.config;
        let x_n = (lateral / c.x_sat).clamp(-1.0, 1.0) * 10.0;
        let theta_n = (heading / c.theta_sat).clamp(-1.0, 1.0);
        let mu_x = fuzzify(x_n, &c.x_membership);
        let mu_t = fuzzify(theta_n, &c.theta_membership);
        let left = infer(&mu_t, &mu_x, &LEFT_WHEEL_RULES);
        let right = infer(&mu_t, &mu_x, &RIGHT_WHEEL_RULES);
        let crisp_l = defuzz(&left, &c.v_membership)
            .expect("input partitions always activate at least one rule");
        let crisp_r = defuzz(&right, &c.v_membership)
            .expect("input partitions always activate at least one rule");
        (crisp_l / 100.0 * c.v_max, crisp_r / 100.0 * c.v_max)
    }
}
