//! Closed-loop simulator: sensor models, differential-drive kinematics, and
//! the per-tick control pipeline, with a CSV run log.
//!
//! Each tick runs sense -> arbitrate -> steer -> govern -> smooth -> move ->
//! balance. All randomness (GPS noise, camera pixel noise, pitch measurement
//! noise) comes from one seeded stream drawn in that fixed order, so a
//! scenario plus a seed reproduces a run byte for byte.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::{BalanceConfig, CommandSmoother, PitchBalancer};
use crate::fuzzy::{ControllerConfig, FuzzyController};
use crate::geo::{
    offsets_from_path, OffsetPair, OffsetSource, Pose2D, ReferencePath, SourceArbiter,
};
use crate::guard::{dbscan, nearest_obstacle_distance, scan_to_points, GuardConfig, SpeedGovernor};
use crate::image::GrayImage;
use crate::scenario::{ObstacleSpec, Scenario};
use crate::vision::{lane_estimate, CannyParams, HoughParams, LaneGeometry};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation setup: {0}")]
    Invalid(String),
    #[error("no offset source available on the first tick")]
    NoSourceAtStart,
}

/// Platform geometry and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    /// Distance between the left and right drive wheels, meters.
    pub track_width: f64,
    /// Wheel speed ceiling, meters per second.
    pub v_max: f64,
    pub load_mass_kg: f64,
}

/// Heaviest payload the platform is rated for.
pub const MAX_LOAD_KG: f64 = 8.0;

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig { track_width: 0.5, v_max: 1.2, load_mass_kg: 5.0 }
    }
}

/// Synthetic forward camera: pinhole at `cam_height` above the ground,
/// optical axis level with it. A frame is rendered every `every` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub img_w: usize,
    pub img_h: usize,
    pub focal_px: f64,
    pub cam_height: f64,
    /// Distance between the two lane boundary centerlines, meters.
    pub lane_width: f64,
    /// Painted stripe width on the ground, meters.
    pub paint_width: f64,
    /// Camera period in ticks.
    pub every: u64,
    /// Additive pixel noise standard deviation.
    pub sigma_noise: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            img_w: 200,
            img_h: 120,
            focal_px: 300.0,
            cam_height: 1.0,
            lane_width: 3.0,
            paint_width: 0.12,
            every: 5,
            sigma_noise: 5.0,
        }
    }
}

impl CameraConfig {
    /// Calibration matching this camera: bottom-row ground resolution.
    pub fn lane_geometry(&self) -> LaneGeometry {
        let cy = self.img_h as f64 / 2.0;
        let bottom = (self.img_h - 1) as f64;
        LaneGeometry {
            focal_px: self.focal_px,
            meters_per_pixel: self.cam_height / (bottom - cy),
        }
    }
}

/// Planar range scanner model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub n_beams: usize,
    pub fov_deg: f64,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig { n_beams: 181, fov_deg: 180.0, max_range: 10.0 }
    }
}

/// Full simulator configuration. `for_scenario` applies a scenario's
/// subsystem overrides on top of the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub robot: RobotConfig,
    pub controller: ControllerConfig,
    pub guard: GuardConfig,
    pub balance: BalanceConfig,
    pub camera: CameraConfig,
    pub lidar: LidarConfig,
    pub canny: CannyParams,
    pub hough: HoughParams,
    pub smoother_q: f64,
    pub smoother_r: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            robot: RobotConfig::default(),
            controller: ControllerConfig::default(),
            guard: GuardConfig::default(),
            balance: BalanceConfig::default(),
            camera: CameraConfig::default(),
            lidar: LidarConfig::default(),
            canny: CannyParams::default(),
            // Finer bins than the standalone defaults, and a threshold low
            // enough to keep a boundary that is clipped by the image edge.
            hough: HoughParams { rho_res: 0.5, theta_res: 0.5, vote_threshold: 24 },
            smoother_q: 1.0,
            smoother_r: 0.1,
        }
    }
}

impl SimConfig {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let mut cfg = SimConfig::default();
        if let Some(c) = scenario.controller {
            cfg.controller = c;
        }
        if let Some(g) = scenario.guard {
            cfg.guard = g;
        }
        if let Some(b) = scenario.balance {
            cfg.balance = b;
        }
        cfg
    }
}

/// Advances a differential-drive pose by one step of constant wheel speeds.
///
/// Uses the exact circular-arc solution when the yaw rate is nonzero, so a
/// step is independent of how finely it is subdivided.
pub fn step_kinematics(pose: &Pose2D, vl: f64, vr: f64, track_width: f64, dt: f64) -> Pose2D {
    let v = (vl + vr) / 2.0;
    let omega = (vr - vl) / track_width; // rad/s
    let h = pose.heading.to_radians();
    let (x, y) = if omega.abs() > 1e-9 {
        let h2 = h + omega * dt;
        (
            pose.x + v / omega * (h2.sin() - h.sin()),
            pose.y + v / omega * (h.cos() - h2.cos()),
        )
    } else {
        (pose.x + v * h.cos() * dt, pose.y + v * h.sin() * dt)
    };
    Pose2D::new(x, y, pose.heading + (omega * dt).to_degrees())
}

/// Piecewise-linear terrain pitch over x, clamped beyond the end knots.
#[derive(Debug, Clone, Default)]
pub struct SlopeProfile {
    knots: Vec<[f64; 2]>,
}

impl SlopeProfile {
    /// Knots must be sorted by strictly increasing x (scenario validation
    /// guarantees this).
    pub fn new(knots: Vec<[f64; 2]>) -> Self {
        SlopeProfile { knots }
    }

    pub fn pitch_at(&self, x: f64) -> f64 {
        let k = &self.knots;
        if k.is_empty() {
            return 0.0;
        }
        if x <= k[0][0] {
            return k[0][1];
        }
        if x >= k[k.len() - 1][0] {
            return k[k.len() - 1][1];
        }
        let i = k.partition_point(|knot| knot[0] <= x);
        let (a, b) = (k[i - 1], k[i]);
        a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
    }
}

/// Renders the camera view of a straight lane for a robot displaced
/// `lateral` meters right of the lane center and pointing `heading_off_deg`
/// degrees right of the lane direction.
///
/// The column axis points to the robot's left, which is what makes both
/// vision offsets come out positive-to-the-right. Boundaries are painted as
/// constant ground-width stripes, so every stripe edge is a ground line
/// through the true vanishing point at
/// (cx + focal * tan(heading_off), cy).
pub fn render_lane_camera(
    cam: &CameraConfig,
    lateral: f64,
    heading_off_deg: f64,
    rng: &mut ChaCha8Rng,
) -> GrayImage {
    let (w, h) = (cam.img_w, cam.img_h);
    let cx = w as f64 / 2.0;
    let cy = h as f64 / 2.0;
    let psi = heading_off_deg.to_radians();
    let (sin_p, cos_p) = psi.sin_cos();
    let tan_p = sin_p / cos_p;
    let mut img = GrayImage::new(w, h);
    for v in 0..h {
        let shade = if (v as f64) < cy { 60.0 } else { 30.0 };
        for x in 0..w {
            img.set(x, v, shade);
        }
    }
    let edges = [
        lateral + cam.lane_width / 2.0 - cam.paint_width / 2.0,
        lateral + cam.lane_width / 2.0 + cam.paint_width / 2.0,
        lateral - cam.lane_width / 2.0 - cam.paint_width / 2.0,
        lateral - cam.lane_width / 2.0 + cam.paint_width / 2.0,
    ];
    for v in 0..h {
        let dv = v as f64 - cy;
        if dv <= 0.0 {
            continue;
        }
        let inv_depth = dv / (cam.focal_px * cam.cam_height);
        let u_at = |offset: f64| cx + cam.focal_px * (tan_p + offset * inv_depth / cos_p);
        for pair in edges.chunks(2) {
            let (a, b) = (u_at(pair[0]), u_at(pair[1]));
            let (lo, hi) = (a.min(b), a.max(b));
            let start = (lo.ceil() as isize).max(0);
            let end = ((hi.ceil() as isize) - 1).min(w as isize - 1);
            for c in start..=end {
                img.set(c as usize, v, 255.0);
            }
        }
    }
    if cam.sigma_noise > 0.0 {
        let noise = Normal::new(0.0, cam.sigma_noise).expect("positive sigma");
        for p in img.data.iter_mut() {
            *p = (*p + noise.sample(rng)).clamp(0.0, 255.0);
        }
    }
    img
}

/// Where the lane boundaries converge in a frame rendered with the given
/// heading offset, independent of the detection pipeline.
pub fn analytic_vanishing_point(cam: &CameraConfig, heading_off_deg: f64) -> (f64, f64) {
    let cx = cam.img_w as f64 / 2.0;
    let cy = cam.img_h as f64 / 2.0;
    (cx + cam.focal_px * heading_off_deg.to_radians().tan(), cy)
}

/// One logged tick: pose at the tick start, the offsets steered by, the
/// wheel speeds applied, and the balance state after the tick.
#[derive(Debug, Clone, Copy)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub lat_off: f64,
    pub head_off: f64,
    pub src: OffsetSource,
    pub vl: f64,
    pub vr: f64,
    pub gov: f64,
    pub obst: Option<f64>,
    pub pitch: f64,
    pub pitch_est: f64,
    pub arm: f64,
}

/// Complete run record with the integral of squared lateral error.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub dt: f64,
    pub ise: f64,
}

impl RunLog {
    pub const CSV_HEADER: &'static str =
        "t,x,y,heading,lat_off,head_off,src,vl,vr,gov,obst,pitch,pitch_est,arm";

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for (k, r) in self.rows.iter().enumerate() {
            let t = k as f64 * self.dt;
            let obst = r.obst.map(|d| format!("{d:.6}")).unwrap_or_default();
            writeln!(
                w,
                "{t:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{obst},{:.6},{:.6},{:.6}",
                r.x,
                r.y,
                r.heading,
                r.lat_off,
                r.head_off,
                r.src,
                r.vl,
                r.vr,
                r.gov,
                r.pitch,
                r.pitch_est,
                r.arm,
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// The closed-loop world. Construct from a scenario, then drive with
/// [`SimWorld::tick`] or [`SimWorld::run`].
pub struct SimWorld {
    cfg: SimConfig,
    path: ReferencePath,
    dt: f64,
    ticks_total: u64,
    sigma_gps: f64,
    sigma_heading: f64,
    dropouts: Vec<[f64; 2]>,
    camera_enabled: bool,
    obstacles: Vec<ObstacleSpec>,
    slope: SlopeProfile,
    pose: Pose2D,
    tick_index: u64,
    rng: ChaCha8Rng,
    controller: FuzzyController,
    arbiter: SourceArbiter,
    governor: SpeedGovernor,
    balancer: PitchBalancer,
    smoother_l: CommandSmoother,
    smoother_r: CommandSmoother,
    held_vision: Option<OffsetPair>,
    last_pair: Option<OffsetPair>,
    rows: Vec<LogRow>,
    ise: f64,
}

impl SimWorld {
    pub fn new(scenario: &Scenario, cfg: SimConfig) -> Result<Self, SimError> {
        scenario.validate().map_err(|e| SimError::Invalid(e.to_string()))?;
        let fail = |msg: String| Err(SimError::Invalid(msg));
        if cfg.robot.load_mass_kg > MAX_LOAD_KG {
            return fail(format!(
                "robot.load_mass_kg: {} exceeds the {} kg payload limit",
                cfg.robot.load_mass_kg, MAX_LOAD_KG
            ));
        }
        if !(cfg.robot.track_width > 0.0 && cfg.robot.v_max > 0.0) {
            return fail("robot: track_width and v_max must be positive".into());
        }
        if cfg.lidar.n_beams < 2 {
            return fail(format!("lidar.n_beams: need at least 2, got {}", cfg.lidar.n_beams));
        }
        if !(cfg.guard.cruise > 0.0) {
            return fail(format!("guard.cruise: must be positive, got {}", cfg.guard.cruise));
        }
        let controller = FuzzyController::new(cfg.controller)
            .map_err(|e| SimError::Invalid(format!("controller: {e}")))?;
        let path = scenario.build_path().map_err(|e| SimError::Invalid(e.to_string()))?;
        let pose = scenario.start_pose().map_err(|e| SimError::Invalid(e.to_string()))?;
        let dt = scenario.dt;
        Ok(SimWorld {
            path,
            dt,
            ticks_total: (scenario.duration_s / dt).round().max(1.0) as u64,
            sigma_gps: scenario.sigma_gps,
            sigma_heading: scenario.sigma_heading,
            dropouts: scenario.gps_dropouts.clone(),
            camera_enabled: scenario.camera,
            obstacles: scenario.obstacles.clone(),
            slope: SlopeProfile::new(scenario.slope_profile.clone()),
            pose,
            tick_index: 0,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            controller,
            arbiter: SourceArbiter::new(),
            governor: SpeedGovernor::new(cfg.guard),
            balancer: PitchBalancer::new(cfg.balance, dt),
            smoother_l: CommandSmoother::new(cfg.smoother_q, cfg.smoother_r),
            smoother_r: CommandSmoother::new(cfg.smoother_q, cfg.smoother_r),
            held_vision: None,
            last_pair: None,
            rows: Vec::with_capacity((scenario.duration_s / dt).round() as usize),
            ise: 0.0,
            cfg,
        })
    }

    pub fn ticks_total(&self) -> u64 {
        self.ticks_total
    }

    pub fn tick_index(&self) -> u64 {
        self.tick_index
    }

    pub fn pose(&self) -> Pose2D {
        self.pose
    }

    pub fn path(&self) -> &ReferencePath {
        &self.path
    }

    /// Noise-free offsets of the true pose; what a perfect sensor would see.
    pub fn true_offsets(&self) -> OffsetPair {
        offsets_from_path(&self.path, &self.pose)
    }

    /// Swaps in a new steering controller mid-run, e.g. when an online
    /// tuner adjusts its memberships.
    pub fn set_controller_config(&mut self, config: ControllerConfig) -> Result<(), SimError> {
        self.controller = FuzzyController::new(config)
            .map_err(|e| SimError::Invalid(format!("controller: {e}")))?;
        Ok(())
    }

    fn in_dropout(&self, t: f64) -> bool {
        self.dropouts.iter().any(|w| t >= w[0] && t <= w[1])
    }

    fn sense_gps(&mut self, t: f64) -> Option<Pose2D> {
        if self.in_dropout(t) {
            return None;
        }
        let mut x = self.pose.x;
        let mut y = self.pose.y;
        let mut heading = self.pose.heading;
        if self.sigma_gps > 0.0 {
            let n = Normal::new(0.0, self.sigma_gps).expect("positive sigma");
            x += n.sample(&mut self.rng);
            y += n.sample(&mut self.rng);
        }
        if self.sigma_heading > 0.0 {
            let n = Normal::new(0.0, self.sigma_heading).expect("positive sigma");
            heading += n.sample(&mut self.rng);
        }
        Some(Pose2D::new(x, y, heading))
    }

    fn sense_lidar(&self, t: f64) -> Vec<(f64, f64)> {
        let lidar = &self.cfg.lidar;
        let active: Vec<&ObstacleSpec> =
            self.obstacles.iter().filter(|o| o.is_active(t)).collect();
        let mut scan = Vec::with_capacity(lidar.n_beams);
        for i in 0..lidar.n_beams {
            let bearing = -lidar.fov_deg / 2.0
                + i as f64 * lidar.fov_deg / (lidar.n_beams - 1) as f64;
            let (sin_w, cos_w) = (self.pose.heading + bearing).to_radians().sin_cos();
            let mut best = lidar.max_range;
            for o in &active {
                let ox = o.x - self.pose.x;
                let oy = o.y - self.pose.y;
                let along = ox * cos_w + oy * sin_w;
                let disc = along * along - (ox * ox + oy * oy - o.radius * o.radius);
                if disc < 0.0 {
                    continue;
                }
                let sq = disc.sqrt();
                let hit = if along - sq > 1e-12 {
                    along - sq
                } else if along + sq > 1e-12 {
                    along + sq
                } else {
                    continue;
                };
                if hit < best {
                    best = hit;
                }
            }
            scan.push((bearing, best));
        }
        scan
    }

    fn sense_camera(&mut self) -> Option<OffsetPair> {
        let true_off = self.true_offsets();
        let img = render_lane_camera(
            &self.cfg.camera,
            true_off.lateral,
            true_off.heading,
            &mut self.rng,
        );
        let geom = self.cfg.camera.lane_geometry();
        match lane_estimate(&img, &self.cfg.canny, &self.cfg.hough, &geom) {
            Ok(est) => Some(OffsetPair {
                lateral: est.lateral,
                heading: est.heading,
                source: OffsetSource::Vision,
            }),
            Err(e) => {
                log::debug!("camera frame yielded no lane estimate: {e}");
                None
            }
        }
    }

    /// Advances the world one tick and returns the logged row.
    pub fn tick(&mut self) -> Result<LogRow, SimError> {
        let t = self.tick_index as f64 * self.dt;
        // Sense.
        let gps_pair = self.sense_gps(t).map(|p| offsets_from_path(&self.path, &p));
        let obst = {
            let scan = self.sense_lidar(t);
            let points = scan_to_points(&scan, self.cfg.lidar.max_range);
            let labels = dbscan(&points, self.cfg.guard.eps, self.cfg.guard.min_pts);
            nearest_obstacle_distance(&points, &labels)
        };
        if self.camera_enabled && self.tick_index % self.cfg.camera.every == 0 {
            self.held_vision = self.sense_camera();
        }
        // Arbitrate; on a total outage keep steering by the last offsets.
        let pair = match self.arbiter.select(gps_pair, self.held_vision) {
            Ok(p) => {
                self.last_pair = Some(p);
                p
            }
            Err(_) => self.last_pair.ok_or(SimError::NoSourceAtStart)?,
        };
        // Steer, govern, smooth.
        let (raw_l, raw_r) = self.controller.control_step(pair.lateral, pair.heading);
        let governed = self.governor.govern(obst, self.dt);
        let scale = governed / self.cfg.guard.cruise;
        let vl = self.smoother_l.smooth(raw_l * scale);
        let vr = self.smoother_r.smooth(raw_r * scale);
        // Move.
        let logged_pose = self.pose;
        self.pose = step_kinematics(&self.pose, vl, vr, self.cfg.robot.track_width, self.dt);
        // Balance against the terrain under the new position.
        let terrain = self.slope.pitch_at(self.pose.x);
        let mut measured = terrain + self.balancer.arm_deg();
        if self.cfg.balance.sigma_pitch > 0.0 {
            let n = Normal::new(0.0, self.cfg.balance.sigma_pitch).expect("positive sigma");
            measured += n.sample(&mut self.rng);
        }
        let (pitch_est, arm) = self.balancer.tick(measured);
        let row = LogRow {
            t,
            x: logged_pose.x,
            y: logged_pose.y,
            heading: logged_pose.heading,
            lat_off: pair.lateral,
            head_off: pair.heading,
            src: pair.source,
            vl,
            vr,
            gov: governed,
            obst,
            pitch: terrain + arm,
            pitch_est,
            arm,
        };
        self.ise += pair.lateral * pair.lateral * self.dt;
        self.rows.push(row);
        self.tick_index += 1;
        Ok(row)
    }

    /// Runs every remaining tick.
    pub fn run(&mut self) -> Result<(), SimError> {
        while self.tick_index < self.ticks_total {
            self.tick()?;
        }
        Ok(())
    }

    pub fn into_log(self) -> RunLog {
        RunLog { rows: self.rows, dt: self.dt, ise: self.ise }
    }
}

/// Builds the world from the scenario (with its subsystem overrides) and
/// runs it to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<RunLog, SimError> {
    let cfg = SimConfig::for_scenario(scenario);
    let mut world = SimWorld::new(scenario, cfg)?;
    world.run()?;
    Ok(world.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angles::wrap_deg;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn straight_motion_integrates_exactly() {
        let p = step_kinematics(&Pose2D::new(1.0, 2.0, 90.0), 1.0, 1.0, 0.5, 0.1);
        assert_relative_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 2.1, epsilon = 1e-12);
        assert_relative_eq!(p.heading, 90.0, epsilon = 1e-12);
    }

    #[test]
    fn single_wheel_drive_pivots_about_the_stopped_wheel() {
        // vl=0, vr=1, track 0.5: yaw rate 2 rad/s, turning left on a circle
        // of radius 0.25 centered on the left wheel at (0, 0.25).
        let start = Pose2D::new(0.0, 0.0, 0.0);
        let dt = 0.6;
        let p = step_kinematics(&start, 0.0, 1.0, 0.5, dt);
        let theta = 2.0 * dt;
        assert_relative_eq!(p.x, 0.25 * theta.sin(), epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.25 * (1.0 - theta.cos()), epsilon = 1e-12);
        assert_relative_eq!(p.heading, theta.to_degrees(), epsilon = 1e-12);
        // Fine integration lands on the same closed-form point.
        let mut q = start;
        for _ in 0..12_000 {
            q = step_kinematics(&q, 0.0, 1.0, 0.5, 0.6 / 12_000.0);
        }
        assert_relative_eq!(q.x, p.x, epsilon = 1e-10);
        assert_relative_eq!(q.y, p.y, epsilon = 1e-10);
    }

    #[test]
    fn constant_curvature_closes_the_circle() {
        let (vl, vr, track) = (0.4, 0.8, 0.5);
        let omega: f64 = (vr - vl) / track;
        let steps = 1571;
        let dt = 2.0 * std::f64::consts::PI / omega / steps as f64;
        let mut p = Pose2D::new(3.0, -2.0, 37.0);
        for _ in 0..steps {
            p = step_kinematics(&p, vl, vr, track, dt);
        }
        assert_relative_eq!(p.x, 3.0, epsilon = 1e-9);
        assert_relative_eq!(p.y, -2.0, epsilon = 1e-9);
        assert!(wrap_deg(p.heading - 37.0).abs() < 1e-9);
    }

    #[test]
    fn slope_profile_interpolates_and_clamps() {
        let s = SlopeProfile::new(vec![[0.0, 0.0], [5.0, 0.0], [15.0, 12.0], [40.0, 12.0]]);
        assert_relative_eq!(s.pitch_at(-1.0), 0.0);
        assert_relative_eq!(s.pitch_at(10.0), 6.0, epsilon = 1e-12);
        assert_relative_eq!(s.pitch_at(50.0), 12.0);
        assert_relative_eq!(SlopeProfile::default().pitch_at(3.0), 0.0);
    }

    #[test]
    fn clean_render_recovers_the_lane() {
        let cam = CameraConfig { sigma_noise: 0.0, ..CameraConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = render_lane_camera(&cam, 0.0, 0.0, &mut rng);
        let cfg = SimConfig::default();
        let est = lane_estimate(&img, &cfg.canny, &cfg.hough, &cam.lane_geometry()).unwrap();
        let (vp_u, vp_v) = analytic_vanishing_point(&cam, 0.0);
        assert!((est.vp_u - vp_u).abs() < 1.5, "vp_u {} vs {}", est.vp_u, vp_u);
        assert!((est.vp_v - vp_v).abs() < 1.5, "vp_v {} vs {}", est.vp_v, vp_v);
        assert!(est.lateral.abs() < 0.05, "lateral {}", est.lateral);
        assert!(est.heading.abs() < 0.3, "heading {}", est.heading);
    }

    fn straight_scenario(json_extra: &str) -> Scenario {
        let json = format!(
            r#"{{
                "duration_s": 20.0,
                "path": {{"points": [[0, 0], [40, 0]]}},
                "start": {{"x": 0.0, "y": -0.5, "heading": 0.0}},
                "sigma_gps": 0.0,
                "sigma_heading": 0.0
                {json_extra}
            }}"#
        );
        Scenario::from_json_str(&json).unwrap()
    }

    #[test]
    fn straight_run_converges_to_the_path() {
        let log = run_scenario(&straight_scenario("")).unwrap();
        let last = log.rows.last().unwrap();
        assert!(last.lat_off.abs() < 0.1, "final lateral {}", last.lat_off);
        assert!(log.rows.iter().all(|r| r.lat_off.is_finite() && r.vl.is_finite()));
        assert!(log.ise > 0.0);
    }

    #[test]
    fn same_scenario_same_bytes() {
        let mut scenario = straight_scenario(r#", "seed": 7"#);
        scenario.sigma_gps = 0.01;
        scenario.sigma_heading = 0.5;
        let a = run_scenario(&scenario).unwrap().to_csv_string();
        let b = run_scenario(&scenario).unwrap().to_csv_string();
        assert_eq!(a, b);
    }

    #[test]
    fn gps_outage_falls_back_to_vision_and_recovers_with_hysteresis() {
        let scenario = straight_scenario(
            r#", "camera": true, "gps_dropouts": [[5.0, 10.0]], "seed": 3"#,
        );
        let log = run_scenario(&scenario).unwrap();
        let src_at = |t: f64| {
            let k = (t / scenario.dt).round() as usize;
            log.rows[k].src
        };
        assert_eq!(src_at(4.0), OffsetSource::Gps);
        assert_eq!(src_at(7.0), OffsetSource::Vision);
        // First fix after the window arrives at t=10.05; the arbiter holds
        // vision for two more ticks and returns to GPS on the third.
        assert_eq!(src_at(10.05), OffsetSource::Vision);
        assert_eq!(src_at(10.10), OffsetSource::Vision);
        assert_eq!(src_at(10.15), OffsetSource::Gps);
        assert_eq!(src_at(15.0), OffsetSource::Gps);
    }

    #[test]
    fn total_outage_on_the_first_tick_is_an_error() {
        let scenario = straight_scenario(r#", "gps_dropouts": [[0.0, 5.0]]"#);
        let cfg = SimConfig::for_scenario(&scenario);
        let mut world = SimWorld::new(&scenario, cfg).unwrap();
        assert!(matches!(world.tick(), Err(SimError::NoSourceAtStart)));
    }

    #[test]
    fn overweight_payload_is_rejected() {
        let scenario = straight_scenario("");
        let mut cfg = SimConfig::for_scenario(&scenario);
        cfg.robot.load_mass_kg = 9.0;
        let err = SimWorld::new(&scenario, cfg).err().expect("expected a payload error");
        assert!(err.to_string().contains("load_mass_kg"), "{err}");
    }

    proptest! {
        #[test]
        fn one_step_equals_two_half_steps(
            vl in 0.0f64..1.5,
            vr in 0.0f64..1.5,
            heading in -180.0f64..180.0,
            dt in 0.01f64..0.2,
        ) {
            let start = Pose2D::new(0.3, -0.8, heading);
            let full = step_kinematics(&start, vl, vr, 0.5, dt);
            let half = step_kinematics(&start, vl, vr, 0.5, dt / 2.0);
            let half2 = step_kinematics(&half, vl, vr, 0.5, dt / 2.0);
            prop_assert!((full.x - half2.x).abs() < 1e-9);
            prop_assert!((full.y - half2.y).abs() < 1e-9);
            prop_assert!(wrap_deg(full.heading - half2.heading).abs() < 1e-9);
        }
    }
}
