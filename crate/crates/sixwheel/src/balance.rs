//! Pitch estimation and rocker-arm balancing, plus the scalar smoother used
//! on wheel commands.
//!
//! The estimator is a small linear Kalman filter kept dimension-generic so
//! the same code serves the pitch model and any future state layout; the
//! balance law on top is a deadbanded proportional controller driving the
//! rocker arm against the estimated body pitch.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

/// Linear Kalman filter over dynamically sized state.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    f: DMatrix<f64>,
    g: Option<DMatrix<f64>>,
    q: DMatrix<f64>,
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl KalmanFilter {
    pub fn new(
        f: DMatrix<f64>,
        g: Option<DMatrix<f64>>,
        q: DMatrix<f64>,
        h: DMatrix<f64>,
        r: DMatrix<f64>,
        x0: DVector<f64>,
        p0: DMatrix<f64>,
    ) -> Result<Self, BalanceError> {
        let n = x0.len();
        let m = h.nrows();
        let checks = [
            (f.nrows() == n && f.ncols() == n, "F must be n x n"),
            (q.nrows() == n && q.ncols() == n, "Q must be n x n"),
            (h.ncols() == n, "H must have n columns"),
            (r.nrows() == m && r.ncols() == m, "R must be m x m"),
            (p0.nrows() == n && p0.ncols() == n, "P0 must be n x n"),
            (g.as_ref().map_or(true, |g| g.nrows() == n), "G must have n rows"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(BalanceError::DimensionMismatch(msg.into()));
            }
        }
        Ok(KalmanFilter { f, g, q, h, r, x: x0, p: p0 })
    }

    /// Time update: x <- Fx (+ Gu), P <- FPF' + Q.
    pub fn predict(&mut self, u: Option<&DVector<f64>>) -> Result<(), BalanceError> {
        self.x = &self.f * &self.x;
        if let Some(u) = u {
            let g = self.g.as_ref().ok_or_else(|| {
                BalanceError::DimensionMismatch("input given but no input matrix".into())
            })?;
            if g.ncols() != u.len() {
                return Err(BalanceError::DimensionMismatch(format!(
                    "input has {} elements, G has {} columns",
                    u.len(),
                    g.ncols()
                )));
            }
            self.x += g * u;
        }
        self.p = &self.f * &self.p * self.f.transpose() + &self.q;
        Ok(())
    }

    /// Measurement update with the standard gain form; the posterior
    /// covariance is re-symmetrized to keep round-off from accumulating.
    pub fn correct(&mut self, z: &DVector<f64>) -> Result<(), BalanceError> {
        if z.len() != self.h.nrows() {
            return Err(BalanceError::DimensionMismatch(format!(
                "measurement has {} elements, H has {} rows",
                z.len(),
                self.h.nrows()
            )));
        }
        let s = &self.h * &self.p * self.h.transpose() + &self.r;
        let s_inv = s.try_inverse().ok_or(BalanceError::SingularInnovation)?;
        let k = &self.p * self.h.transpose() * s_inv;
        let innovation = z - &self.h * &self.x;
        self.x += &k * innovation;
        let identity = DMatrix::identity(self.x.len(), self.x.len());
        let p = (identity - &k * &self.h) * &self.p;
        self.p = (&p + p.transpose()) * 0.5;
        Ok(())
    }
}

/// Rocker balancing settings. All angles in degrees; `q_*` and `r_meas`
/// parameterize the pitch estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub q_pitch: f64,
    pub q_rate: f64,
    pub r_meas: f64,
    /// Standard deviation of the simulated pitch measurement.
    pub sigma_pitch: f64,
    pub gain: f64,
    pub deadband_deg: f64,
    pub max_rate_deg: f64,
    pub arm_limit_deg: f64,
    pub enabled: bool,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            q_pitch: 1e-4,
            q_rate: 1e-3,
            r_meas: 0.25,
            sigma_pitch: 0.5,
            gain: 1.0,
            deadband_deg: 0.2,
            max_rate_deg: 30.0,
            arm_limit_deg: 20.0,
            enabled: true,
        }
    }
}

/// Estimates body pitch from noisy measurements and counters it with the
/// rocker arm.
///
/// State is [pitch, pitch_rate] under a constant-rate model. Each tick runs
/// predict + correct, then moves the arm by the deadbanded proportional
/// command, rate-limited and clamped to the arm's travel. With balancing
/// disabled the estimator still runs but the arm stays where it is.
#[derive(Debug, Clone)]
pub struct PitchBalancer {
    kf: KalmanFilter,
    config: BalanceConfig,
    dt: f64,
    arm_deg: f64,
}

impl PitchBalancer {
    pub fn new(config: BalanceConfig, dt: f64) -> Self {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![config.q_pitch, config.q_rate]));
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let r = DMatrix::from_element(1, 1, config.r_meas);
        let kf = KalmanFilter::new(
            f,
            None,
            q,
            h,
            r,
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        )
        .expect("pitch model dimensions are consistent");
        PitchBalancer { kf, config, dt, arm_deg: 0.0 }
    }

    pub fn arm_deg(&self) -> f64 {
        self.arm_deg
    }

    pub fn pitch_estimate(&self) -> f64 {
        self.kf.x[0]
    }

    /// Consumes one pitch measurement (degrees) and returns
    /// (estimate, arm angle) after the arm update.
    pub fn tick(&mut self, measured_pitch_deg: f64) -> (f64, f64) {
        self.kf.predict(None).expect("pitch model dimensions are consistent");
        self.kf
            .correct(&DVector::from_element(1, measured_pitch_deg))
            .expect("scalar innovation with positive variance");
        let est = self.kf.x[0];
        if self.config.enabled {
            let command = if est.abs() > self.config.deadband_deg {
                -self.config.gain * est
            } else {
                0.0
            };
            let max_step = self.config.max_rate_deg * self.dt;
            let limit = self.config.arm_limit_deg;
            self.arm_deg = (self.arm_deg + command.clamp(-max_step, max_step)).clamp(-limit, limit);
        }
        (est, self.arm_deg)
    }
}

/// One-dimensional constant-state Kalman smoother for wheel commands.
///
/// With the default settings the steady-state gain is about 0.92, so the
/// output tracks the raw command closely while shaving off sharp steps;
/// `r -> 0` turns it into a passthrough.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandSmoother {
    pub q: f64,
    pub r: f64,
    x: f64,
    p: f64,
}

impl Default for CommandSmoother {
    fn default() -> Self {
        Self::new(1.0, 0.1)
    }
}

impl CommandSmoother {
    pub fn new(q: f64, r: f64) -> Self {
        CommandSmoother { q, r, x: 0.0, p: 1e6 }
    }

    pub fn smooth(&mut self, raw: f64) -> f64 {
        self.p += self.q;
        let k = self.p / (self.p + self.r);
        self.x += k * (raw - self.x);
        self.p *= 1.0 - k;
        self.x
    }
}
