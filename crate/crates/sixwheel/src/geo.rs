//! Reference paths and path-relative error geometry.
//!
//! The controller consumes two scalar errors: the lateral offset (meters,
//! positive when the robot sits to the RIGHT of the travel direction) and the
//! heading offset (degrees, positive when the robot points to the right of
//! the path heading). Both come from projecting the robot pose onto the
//! nearest path segment; poses may originate from GPS fixes projected into
//! the local tangent plane or from the lane-vision pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angles::wrap_deg;

/// Mean Earth radius in meters used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Ticks a source must be continuously available before the arbiter switches
/// back to it.
pub const HYSTERESIS_TICKS: u32 = 3;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("geodetic fix is not valid")]
    InvalidFix,
    #[error("no offset source available this tick")]
    NoSource,
    #[error("invalid reference path: {0}")]
    InvalidPath(String),
}

/// Planar pose in the local frame; heading in degrees, wrapped to (-180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose2D { x, y, heading: wrap_deg(heading) }
    }
}

/// Raw geodetic fix in degrees. `valid` is false when the receiver reported
/// no solution; invalid fixes must not be projected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticFix {
    pub lat: f64,
    pub lon: f64,
    pub valid: bool,
}

impl GeodeticFix {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeodeticFix { lat, lon, valid: true }
    }

    fn in_range(&self) -> bool {
        self.lat.abs() <= 90.0 && self.lon.abs() <= 180.0
    }
}

/// Projects a fix into the local tangent plane anchored at `origin` using an
/// equirectangular approximation (x east, y north, meters).
///
/// Valid for offsets well under a degree of latitude/longitude; the caller
/// keeps fixes within that neighborhood of the origin.
pub fn latlon_to_local(origin: &GeodeticFix, fix: &GeodeticFix) -> Result<(f64, f64), GeoError> {
    if !origin.valid || !fix.valid || !origin.in_range() || !fix.in_range() {
        return Err(GeoError::InvalidFix);
    }
    let deg = std::f64::consts::PI / 180.0;
    let x = EARTH_RADIUS_M * (fix.lon - origin.lon) * deg * (origin.lat * deg).cos();
    let y = EARTH_RADIUS_M * (fix.lat - origin.lat) * deg;
    Ok((x, y))
}

/// A waypoint with the direction of its outgoing segment (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Polyline reference path. Headings are recomputed from the geometry on
/// construction; the last point of an open path carries its incoming
/// direction, and closed paths wrap last -> first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    points: Vec<PathPoint>,
    closed: bool,
}

/// On-disk JSON form of a path: either local Cartesian points or geodetic
/// points plus an origin (projected on load, headings recomputed).
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    #[serde(default)]
    pub closed: bool,
    #[serde(default)]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub origin: Option<[f64; 2]>,
    #[serde(default)]
    pub points_geodetic: Option<Vec<[f64; 2]>>,
}

impl ReferencePath {
    /// Builds a path from local Cartesian waypoints.
    pub fn from_points(points: &[[f64; 2]], closed: bool) -> Result<Self, GeoError> {
        if points.len() < 2 {
            return Err(GeoError::InvalidPath(format!(
                "path.points: need at least 2 points, got {}",
                points.len()
            )));
        }
        let n = points.len();
        let pair_count = if closed { n } else { n - 1 };
        for i in 0..pair_count {
            let a = points[i];
            let b = points[(i + 1) % n];
            let d = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if d <= 1e-9 {
                return Err(GeoError::InvalidPath(format!(
                    "path.points: consecutive points {} and {} coincide",
                    i,
                    (i + 1) % n
                )));
            }
        }
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            let heading = if closed || i + 1 < n {
                let a = points[i];
                let b = points[(i + 1) % n];
                (b[1] - a[1]).atan2(b[0] - a[0]).to_degrees()
            } else {
                // Open path: the final point keeps the incoming direction.
                let a = points[i - 1];
                let b = points[i];
                (b[1] - a[1]).atan2(b[0] - a[0]).to_degrees()
            };
            points_push(&mut pts, points[i], wrap_deg(heading));
        }
        Ok(ReferencePath { points: pts, closed })
    }

    /// Builds a path from a parsed JSON spec (local or geodetic form).
    pub fn from_spec(spec: &PathSpec) -> Result<Self, GeoError> {
        match (&spec.points, &spec.points_geodetic) {
            (Some(points), None) => Self::from_points(points, spec.closed),
            (None, Some(geo_points)) => {
                let origin = spec.origin.ok_or_else(|| {
                    GeoError::InvalidPath("path.origin: required with points_geodetic".into())
                })?;
                let origin = GeodeticFix::new(origin[0], origin[1]);
                let mut local = Vec::with_capacity(geo_points.len());
                for (i, p) in geo_points.iter().enumerate() {
                    let fix = GeodeticFix::new(p[0], p[1]);
                    if (fix.lat - origin.lat).abs() >= 1.0 || (fix.lon - origin.lon).abs() >= 1.0 {
                        return Err(GeoError::InvalidPath(format!(
                            "path.points_geodetic[{i}]: more than 1 degree from origin"
                        )));
                    }
                    local.push(latlon_to_local(&origin, &fix).map_err(|_| {
                        GeoError::InvalidPath(format!("path.points_geodetic[{i}]: invalid fix"))
                    })?);
                }
                let local: Vec<[f64; 2]> = local.iter().map(|&(x, y)| [x, y]).collect();
                Self::from_points(&local, spec.closed)
            }
            (Some(_), Some(_)) => Err(GeoError::InvalidPath(
                "path: points and points_geodetic are mutually exclusive".into(),
            )),
            (None, None) => Err(GeoError::InvalidPath(
                "path: one of points or points_geodetic is required".into(),
            )),
        }
    }

    /// Parses the JSON file format.
    pub fn from_json_str(json: &str) -> Result<Self, GeoError> {
        let spec: PathSpec = serde_json::from_str(json)
            .map_err(|e| GeoError::InvalidPath(format!("path: {e}")))?;
        Self::from_spec(&spec)
    }

    pub fn points(&self) -> &[PathPoint] {
        &self.points
    }

    pub fn closed(&self) -> bool {
        self.closed
    }
}

fn points_push(pts: &mut Vec<PathPoint>, p: [f64; 2], heading: f64) {
    pts.push(PathPoint { x: p[0], y: p[1], heading });
}

/// Which sensor produced an offset pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffsetSource {
    Gps,
    Vision,
}

impl std::fmt::Display for OffsetSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OffsetSource::Gps => write!(f, "GPS"),
            OffsetSource::Vision => write!(f, "VISION"),
        }
    }
}

/// Path-relative error pair fed to the steering controller.
///
/// `lateral` in meters, positive right of the travel direction; `heading` in
/// degrees, positive when the robot points right of the path heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetPair {
    pub lateral: f64,
    pub heading: f64,
    pub source: OffsetSource,
}

fn dist_sq(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    (ax - bx).powi(2) + (ay - by).powi(2)
}

/// Squared distance from `p` to the segment `a`-`b`, and the clamped
/// projection parameter t in [0, 1].
fn point_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let cx = a.0 + t * dx;
    let cy = a.1 + t * dy;
    (dist_sq(p.0, p.1, cx, cy), t)
}

/// Finds the nearest waypoint `A` and the neighbor `B` whose segment lies
/// closest to the pose.
///
/// `A` is the globally nearest waypoint (lowest index on ties). `B` is the
/// predecessor or successor of `A` — wrapping on closed paths — whose
/// segment with `A` has the smaller point-to-segment distance; ties go to
/// the successor. Open-path endpoints have only one neighbor.
pub fn nearest_segment(path: &ReferencePath, pose: &Pose2D) -> (usize, usize) {
    let pts = path.points();
    let n = pts.len();
    let mut a = 0;
    let mut best = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        let d = dist_sq(pose.x, pose.y, p.x, p.y);
        if d < best {
            best = d;
            a = i;
        }
    }
    let succ = if a + 1 < n {
        Some(a + 1)
    } else if path.closed() {
        Some(0)
    } else {
        None
    };
    let pred = if a > 0 {
        Some(a - 1)
    } else if path.closed() {
        Some(n - 1)
    } else {
        None
    };
    let seg_dist = |i: usize| {
        point_segment(
            (pose.x, pose.y),
            (pts[a].x, pts[a].y),
            (pts[i].x, pts[i].y),
        )
        .0
    };
    let b = match (pred, succ) {
        (Some(p), Some(s)) => {
            if seg_dist(s) <= seg_dist(p) {
                s
            } else {
                p
            }
        }
        (Some(p), None) => p,
        (None, Some(s)) => s,
        (None, None) => unreachable!("paths have at least 2 points"),
    };
    (a, b)
}

/// Computes the lateral and heading offsets of a pose relative to the path.
///
/// The pose is projected onto the segment between the nearest waypoint and
/// its best neighbor (projection clamped to the segment). Lateral sign is
/// positive to the right of the travel direction; the heading offset
/// compares against the stored heading at the nearest waypoint and is
/// positive when the robot points right of it.
pub fn offsets_from_path(path: &ReferencePath, pose: &Pose2D) -> OffsetPair {
    let pts = path.points();
    let n = pts.len();
    let (a, b) = nearest_segment(path, pose);
    // Orient the segment along the direction of travel.
    let b_is_successor = b == (a + 1) % n;
    let (s, e) = if b_is_successor { (a, b) } else { (b, a) };
    let (sx, sy) = (pts[s].x, pts[s].y);
    let (ex, ey) = (pts[e].x, pts[e].y);
    let (d2, t) = point_segment((pose.x, pose.y), (sx, sy), (ex, ey));
    let _ = t;
    let magnitude = d2.sqrt();
    let cross = (ex - sx) * (pose.y - sy) - (ey - sy) * (pose.x - sx);
    let lateral = if cross > 0.0 { -magnitude } else { magnitude };
    let heading = wrap_deg(pts[a].heading - pose.heading);
    OffsetPair { lateral, heading, source: OffsetSource::Gps }
}

/// Latched GPS-over-vision arbitration with switch-back hysteresis.
///
/// GPS wins whenever it is the active source and present. After losing the
/// active source the arbiter switches immediately to whatever is available,
/// but switching back UP to GPS requires [`HYSTERESIS_TICKS`] consecutive
/// ticks of GPS availability, which suppresses chattering at dropout edges.
#[derive(Debug, Default)]
pub struct SourceArbiter {
    active: Option<OffsetSource>,
    gps_streak: u32,
}

impl SourceArbiter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Picks the offsets to steer by this tick.
    pub fn select(
        &mut self,
        gps: Option<OffsetPair>,
        vision: Option<OffsetPair>,
    ) -> Result<OffsetPair, GeoError> {
        self.gps_streak = if gps.is_some() { self.gps_streak + 1 } else { 0 };
        let choice = match self.active {
            Some(OffsetSource::Gps) => {
                if gps.is_some() {
                    gps
                } else {
                    vision
                }
            }
            Some(OffsetSource::Vision) => {
                if gps.is_some() && self.gps_streak >= HYSTERESIS_TICKS {
                    gps
                } else if vision.is_some() {
                    vision
                } else {
                    gps
                }
            }
            None => {
                if gps.is_some() {
                    gps
                } else {
                    vision
                }
            }
        };
        match choice {
            Some(pair) => {
                if self.active != Some(pair.source) {
                    log::debug!("offset source -> {}", pair.source);
                }
                self.active = Some(pair.source);
                Ok(pair)
            }
            None => {
                self.active = None;
                Err(GeoError::NoSource)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gps_pair(lateral: f64) -> OffsetPair {
        OffsetPair { lateral, heading: 0.0, source: OffsetSource::Gps }
    }

    fn vision_pair(lateral: f64) -> OffsetPair {
        OffsetPair { lateral, heading: 0.0, source: OffsetSource::Vision }
    }

    #[test]
    fn projection_matches_hand_computed_meters_per_degree() {
        let origin = GeodeticFix::new(0.0, 0.0);
        let fix = GeodeticFix::new(1e-5, 0.0);
        let (x, y) = latlon_to_local(&origin, &fix).unwrap();
        assert_relative_eq!(y, 1.111949266445849, epsilon = 1e-9);
        assert_relative_eq!(x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_scales_longitude_by_cos_latitude() {
        let origin = GeodeticFix::new(60.0, 10.0);
        let fix = GeodeticFix::new(60.0, 10.0 + 1e-5);
        let (x, y) = latlon_to_local(&origin, &fix).unwrap();
        assert_relative_eq!(x, 0.5559746332229245, epsilon = 1e-8);
        assert_relative_eq!(y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_rejects_invalid_fixes() {
        let origin = GeodeticFix::new(0.0, 0.0);
        let bad = GeodeticFix { lat: 0.0, lon: 0.0, valid: false };
        assert!(latlon_to_local(&origin, &bad).is_err());
        assert!(latlon_to_local(&bad, &origin).is_err());
    }

    #[test]
    fn projection_inverts_exactly_within_a_kilometer() {
        // Independent inverse of the forward formulas.
        let origin = GeodeticFix::new(24.8, 121.0);
        let deg = std::f64::consts::PI / 180.0;
        for &(dlat, dlon) in &[(3e-3, 5e-3), (-8e-3, 2e-3), (5e-4, -9e-3)] {
            let fix = GeodeticFix::new(origin.lat + dlat, origin.lon + dlon);
            let (x, y) = latlon_to_local(&origin, &fix).unwrap();
            let lat = origin.lat + y / (EARTH_RADIUS_M * deg);
            let lon = origin.lon + x / (EARTH_RADIUS_M * deg * (origin.lat * deg).cos());
            assert_relative_eq!(lat, fix.lat, epsilon = 1e-9);
            assert_relative_eq!(lon, fix.lon, epsilon = 1e-9);
        }
    }

    #[test]
    fn path_recomputes_headings_and_rejects_degenerate_input() {
        let path = ReferencePath::from_points(&[[0.0, 0.0], [10.0, 0.0], [10.0, 5.0]], false).unwrap();
        assert_eq!(path.points()[0].heading, 0.0);
        assert_eq!(path.points()[1].heading, 90.0);
        assert_eq!(path.points()[2].heading, 90.0); // incoming direction at the end
        assert!(ReferencePath::from_points(&[[0.0, 0.0]], false).is_err());
        assert!(ReferencePath::from_points(&[[0.0, 0.0], [0.0, 0.0]], false).is_err());
    }

    #[test]
    fn nearest_waypoint_at_pose_is_selected_with_zero_lateral() {
        let path = ReferencePath::from_points(
            &[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]],
            true,
        )
        .unwrap();
        let pose = Pose2D::new(10.0, 0.0, 90.0);
        let (a, _) = nearest_segment(&path, &pose);
        assert_eq!(a, 1);
        let off = offsets_from_path(&path, &pose);
        assert_relative_eq!(off.lateral, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn neighbor_choice_prefers_the_closer_segment() {
        let path =
            ReferencePath::from_points(&[[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]], false).unwrap();
        let pose = Pose2D::new(12.0, 1.0, 0.0);
        assert_eq!(nearest_segment(&path, &pose), (1, 2));
    }

    #[test]
    fn closed_path_wraps_neighbor_lookup() {
        let path = ReferencePath::from_points(
            &[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]],
            true,
        )
        .unwrap();
        // Near the last waypoint, on the side of the wrapping segment 3 -> 0.
        let pose = Pose2D::new(-0.5, 9.0, -90.0);
        assert_eq!(nearest_segment(&path, &pose), (3, 0));
    }

    #[test]
    fn lateral_sign_is_negative_left_of_travel() {
        let path =
            ReferencePath::from_points(&[[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]], false).unwrap();
        let pose = Pose2D::new(5.0, 2.0, 0.0);
        let off = offsets_from_path(&path, &pose);
        assert_relative_eq!(off.lateral, -2.0, epsilon = 1e-12);
        let pose = Pose2D::new(5.0, -2.0, 0.0);
        assert_relative_eq!(offsets_from_path(&path, &pose).lateral, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn heading_offset_is_right_positive_and_wrapped() {
        let path = ReferencePath::from_points(&[[0.0, 0.0], [10.0, 1.76327]], false).unwrap();
        // Path heading is ~10 degrees.
        let ph = path.points()[0].heading;
        assert_relative_eq!(ph, 10.0, epsilon = 1e-3);
        let pose = Pose2D::new(1.0, 0.0, ph + 20.0);
        let off = offsets_from_path(&path, &pose);
        assert_relative_eq!(off.heading, -20.0, epsilon = 1e-12);
        let pose = Pose2D::new(1.0, 0.0, ph - 350.0);
        let off = offsets_from_path(&path, &pose);
        assert_relative_eq!(off.heading, -10.0, epsilon = 1e-12);
    }

    #[test]
    fn arbiter_prefers_gps_and_latches_vision_through_reappearance() {
        let mut arb = SourceArbiter::new();
        // Both present from a cold start: GPS wins immediately.
        let got = arb.select(Some(gps_pair(0.1)), Some(vision_pair(0.2))).unwrap();
        assert_eq!(got.source, OffsetSource::Gps);
        // GPS drops: fall to vision at once.
        let got = arb.select(None, Some(vision_pair(0.2))).unwrap();
        assert_eq!(got.source, OffsetSource::Vision);
        // GPS returns: vision holds for two more ticks, GPS back on the third.
        for tick in 1..=2 {
            let got = arb.select(Some(gps_pair(0.1)), Some(vision_pair(0.2))).unwrap();
            assert_eq!(got.source, OffsetSource::Vision, "tick {tick}");
        }
        let got = arb.select(Some(gps_pair(0.1)), Some(vision_pair(0.2))).unwrap();
        assert_eq!(got.source, OffsetSource::Gps);
    }

    #[test]
    fn arbiter_errors_when_both_sources_are_absent() {
        let mut arb = SourceArbiter::new();
        assert!(matches!(arb.select(None, None), Err(GeoError::NoSource)));
    }

    #[test]
    fn geodetic_path_spec_projects_before_building() {
        let json = r#"{"origin": [24.0, 121.0], "points_geodetic": [[24.0, 121.0], [24.0005, 121.0]]}"#;
        let path = ReferencePath::from_json_str(json).unwrap();
        assert_relative_eq!(path.points()[1].y, 55.5974633222, epsilon = 1e-6);
        assert_relative_eq!(path.points()[0].heading, 90.0, epsilon = 1e-9);
    }
}
