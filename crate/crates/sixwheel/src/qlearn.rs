//! Tabular Q-learning that tunes the steering controller's membership
//! breakpoints online.
//!
//! State is the discretized offset pair, actions nudge the four tunable
//! breakpoints (or do nothing), and the reward is a bang-bang signal on
//! whether the sensed lateral error shrank this tick. Learning runs inside
//! the regular simulation loop: the tuner owns its own random stream, so a
//! greedy run leaves the simulated world's randomness untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::ControllerConfig;
use crate::scenario::Scenario;
use crate::sim::{SimConfig, SimError, SimWorld};

#[derive(Debug, Error)]
pub enum QError {
    #[error("invalid tuner config: {0}")]
    Config(String),
    #[error("invalid tuned parameters: {0}")]
    Params(String),
}

pub const N_ACTIONS: usize = 9;

/// Closest a tunable lateral breakpoint may approach the fixed center.
pub const X_BREAK_MIN: f64 = 0.1;
/// Closest a tunable heading breakpoint may approach the fixed center.
pub const THETA_BREAK_MIN: f64 = 0.01;

/// Offset stream the tuner's own randomness uses relative to the scenario
/// seed, keeping it disjoint from the world's stream.
const TUNER_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Learning settings. `x_sat`/`theta_sat` normalize offsets for state
/// discretization. The lateral default is deliberately much tighter than the
/// controller's saturation: reward only fires when |offset| moves more than
/// the deadband in one tick, and on a settling run that happens in roughly
/// the 0.03..0.15 m band, so the bins need their resolution there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub n_lat_bins: usize,
    pub n_head_bins: usize,
    /// Breakpoint step per action, lateral variable.
    pub delta_x: f64,
    /// Breakpoint step per action, heading variable.
    pub delta_theta: f64,
    pub reward_gain: f64,
    pub x_sat: f64,
    pub theta_sat: f64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            alpha: 0.3,
            gamma: 0.9,
            epsilon: 0.2,
            epsilon_decay: 0.99,
            n_lat_bins: 5,
            n_head_bins: 5,
            delta_x: 0.5,
            delta_theta: 0.05,
            reward_gain: 1.0,
            x_sat: 0.15,
            theta_sat: 30.0,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<(), QError> {
        let checks = [
            (self.alpha > 0.0 && self.alpha <= 1.0, "alpha must be in (0, 1]"),
            (self.gamma >= 0.0 && self.gamma < 1.0, "gamma must be in [0, 1)"),
            ((0.0..=1.0).contains(&self.epsilon), "epsilon must be in [0, 1]"),
            (
                self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0,
                "epsilon_decay must be in (0, 1]",
            ),
            (self.n_lat_bins >= 1 && self.n_head_bins >= 1, "bin counts must be at least 1"),
            (self.delta_x > 0.0 && self.delta_theta > 0.0, "deltas must be positive"),
            (self.reward_gain > 0.0, "reward_gain must be positive"),
            (self.x_sat > 0.0 && self.theta_sat > 0.0, "saturations must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(QError::Config(msg.into()));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_lat_bins * self.n_head_bins
    }
}

/// Maps an offset pair to a state index by binning the normalized
/// magnitudes of both offsets.
pub fn discretize(lateral: f64, heading: f64, cfg: &TunerConfig) -> usize {
    let bin = |value: f64, sat: f64, n: usize| -> usize {
        let norm = (value.abs() / sat).clamp(0.0, 1.0);
        ((norm * n as f64).floor() as usize).min(n - 1)
    };
    bin(lateral, cfg.x_sat, cfg.n_lat_bins) * cfg.n_head_bins
        + bin(heading, cfg.theta_sat, cfg.n_head_bins)
}

/// The four breakpoints the tuner adjusts: the inner corners of the lateral
/// and heading input memberships (centers stay pinned at zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    pub x_l1: f64,
    pub x_l3: f64,
    pub theta_l1: f64,
    pub theta_l3: f64,
}

impl TunedParams {
    pub fn from_controller(base: &ControllerConfig) -> Self {
        TunedParams {
            x_l1: base.x_membership.l1,
            x_l3: base.x_membership.l3,
            theta_l1: base.theta_membership.l1,
            theta_l3: base.theta_membership.l3,
        }
    }

    /// Applies one action (0 is a no-op), then clamps every breakpoint away
    /// from the pinned center so the memberships stay well formed.
    pub fn apply_action(&mut self, action: usize, cfg: &TunerConfig) {
        debug_assert!(action < N_ACTIONS, "action {action} out of range");
        match action {
            0 => {}
            1 => self.x_l1 += cfg.delta_x,
            2 => self.x_l1 -= cfg.delta_x,
            3 => self.x_l3 += cfg.delta_x,
            4 => self.x_l3 -= cfg.delta_x,
            5 => self.theta_l1 += cfg.delta_theta,
            6 => self.theta_l1 -= cfg.delta_theta,
            7 => self.theta_l3 += cfg.delta_theta,
            _ => self.theta_l3 -= cfg.delta_theta,
        }
        self.x_l1 = self.x_l1.min(-X_BREAK_MIN);
        self.x_l3 = self.x_l3.max(X_BREAK_MIN);
        self.theta_l1 = self.theta_l1.min(-THETA_BREAK_MIN);
        self.theta_l3 = self.theta_l3.max(THETA_BREAK_MIN);
    }
}

/// Serialized training state: learned parameters, the Q table, and the
/// settings that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QFile {
    pub params: TunedParams,
    pub q: Vec<Vec<f64>>,
    pub config: TunerConfig,
}

/// The learner. One instance persists across episodes; each episode runs a
/// fresh world seeded from the base seed plus the episode index.
pub struct QTuner {
    cfg: TunerConfig,
    base: ControllerConfig,
    params: TunedParams,
    q: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    epsilon: f64,
}

impl QTuner {
    pub fn new(cfg: TunerConfig, base: ControllerConfig, seed: u64) -> Result<Self, QError> {
        cfg.validate()?;
        Ok(QTuner {
            base,
            params: TunedParams::from_controller(&base),
            q: vec![vec![0.0; N_ACTIONS]; cfg.n_states()],
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(TUNER_SEED_OFFSET)),
            epsilon: cfg.epsilon,
            cfg,
        })
    }

    /// Restores a previously saved training state.
    pub fn from_snapshot(file: QFile, base: ControllerConfig, seed: u64) -> Result<Self, QError> {
        file.config.validate()?;
        if file.q.len() != file.config.n_states()
            || file.q.iter().any(|row| row.len() != N_ACTIONS)
        {
            return Err(QError::Params(format!(
                "q table must be {} x {}",
                file.config.n_states(),
                N_ACTIONS
            )));
        }
        let mut tuner = Self::new(file.config, base, seed)?;
        tuner.params = file.params;
        tuner.q = file.q;
        Ok(tuner)
    }

    pub fn snapshot(&self) -> QFile {
        QFile { params: self.params, q: self.q.clone(), config: self.cfg }
    }

    pub fn params(&self) -> TunedParams {
        self.params
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Controller configuration with the current tuned breakpoints.
    pub fn tuned_controller(&self) -> Result<ControllerConfig, QError> {
        self.base
            .with_tuned_breakpoints(
                self.params.x_l1,
                self.params.x_l3,
                self.params.theta_l1,
                self.params.theta_l3,
            )
            .map_err(|e| QError::Params(e.to_string()))
    }

    /// Epsilon-greedy selection. A zero epsilon draws nothing from the
    /// random stream; greedy ties resolve to the lowest action index.
    fn select_action(&mut self, state: usize) -> usize {
        if self.epsilon > 0.0 && self.rng.gen::<f64>() < self.epsilon {
            return self.rng.gen_range(0..N_ACTIONS);
        }
        greedy_action(&self.q[state])
    }

    /// Reward on the change in sensed lateral magnitude, with a deadband so
    /// noise-level wiggle earns nothing.
    fn reward(&self, prev_lat: f64, new_lat: f64) -> f64 {
        let change = prev_lat.abs() - new_lat.abs();
        if change > 1e-3 {
            self.cfg.reward_gain
        } else if change < -1e-3 {
            -self.cfg.reward_gain
        } else {
            0.0
        }
    }

    /// One tabular update toward `r + gamma * max Q(s2, ·)`.
    pub fn q_update(&mut self, s: usize, a: usize, r: f64, s2: usize) {
        let future = self.q[s2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let q = &mut self.q[s][a];
        *q += self.cfg.alpha * (r + self.cfg.gamma * future - *q);
        debug_assert!(
            q.abs() <= self.cfg.reward_gain / (1.0 - self.cfg.gamma) + 1e-9,
            "q value escaped its bound"
        );
    }

    /// Runs one training episode on a fresh world and returns its integral
    /// of squared lateral error.
    ///
    /// The world is seeded with the scenario seed plus the episode index.
    /// With epsilon zero and an all-zero table the greedy action is always
    /// the no-op, and the episode replays the plain closed-loop run
    /// exactly.
    pub fn train_episode(
        &mut self,
        scenario: &Scenario,
        episode: u64,
    ) -> Result<f64, SimError> {
        let mut sc = scenario.clone();
        sc.seed = scenario.seed.wrapping_add(episode);
        let mut cfg = SimConfig::for_scenario(&sc);
        cfg.controller = self.base;
        let mut world = SimWorld::new(&sc, cfg)?;
        if self.params != TunedParams::from_controller(&self.base) {
            let tuned =
                self.tuned_controller().map_err(|e| SimError::Invalid(e.to_string()))?;
            world.set_controller_config(tuned)?;
        }
        let init = world.true_offsets();
        let mut prev = (init.lateral, init.heading);
        for _ in 0..world.ticks_total() {
            let s = discretize(prev.0, prev.1, &self.cfg);
            let a = self.select_action(s);
            if a != 0 {
                self.params.apply_action(a, &self.cfg);
                let tuned =
                    self.tuned_controller().map_err(|e| SimError::Invalid(e.to_string()))?;
                world.set_controller_config(tuned)?;
            }
            let row = world.tick()?;
            let r = self.reward(prev.0, row.lat_off);
            let s2 = discretize(row.lat_off, row.head_off, &self.cfg);
            self.q_update(s, a, r, s2);
            prev = (row.lat_off, row.head_off);
        }
        self.epsilon *= self.cfg.epsilon_decay;
        Ok(world.into_log().ise)
    }
}

/// Index of the largest value; ties go to the first.
fn greedy_action(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
