//! Obstacle handling: lidar scan geometry, density-based clustering, and
//! the speed governor that slows or stops the platform near obstacles.
//!
//! Everything works in the robot frame: x forward, y left, angles in
//! degrees counterclockwise from the x axis.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Converts polar scan returns to Cartesian points, dropping returns at or
/// beyond `max_range` (no-echo rays report exactly `max_range`).
pub fn scan_to_points(scan: &[(f64, f64)], max_range: f64) -> Vec<(f64, f64)> {
    scan.iter()
        .filter(|&&(_, range)| range < max_range)
        .map(|&(bearing_deg, range)| {
            let (sin_b, cos_b) = bearing_deg.to_radians().sin_cos();
            (range * cos_b, range * sin_b)
        })
        .collect()
}

/// Density-based clustering over 2D points.
///
/// A point is a core point when its closed eps-ball (itself included) holds
/// at least `min_pts` points. Clusters grow breadth-first from core points
/// in input order; non-core points inside a core's ball join as border
/// points of the first cluster that reaches them. Returns one label per
/// point, `None` for noise.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let eps_sq = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        let (xi, yi) = points[i];
        (0..n)
            .filter(|&j| {
                let (xj, yj) = points[j];
                (xi - xj).powi(2) + (yi - yj).powi(2) <= eps_sq
            })
            .collect()
    };
    let mut next_cluster = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbors(i);
        if nb.len() < min_pts {
            continue; // noise unless a later cluster claims it as border
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = Some(cluster);
        let mut queue: VecDeque<usize> = nb.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if !visited[j] {
                visited[j] = true;
                let nbj = neighbors(j);
                if nbj.len() >= min_pts {
                    queue.extend(nbj);
                }
            }
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
        }
    }
    labels
}

/// Distance from the robot to the closest clustered point. Noise points are
/// ignored: a single stray return never brakes the platform.
pub fn nearest_obstacle_distance(points: &[(f64, f64)], labels: &[Option<usize>]) -> Option<f64> {
    points
        .iter()
        .zip(labels)
        .filter(|(_, label)| label.is_some())
        .map(|(&(x, y), _)| (x * x + y * y).sqrt())
        .min_by(|a, b| a.partial_cmp(b).unwrap())
}

/// Obstacle-avoidance settings: clustering density plus the stop/slow
/// distance envelope and speed ramp limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardConfig {
    pub eps: f64,
    pub min_pts: usize,
    pub d_stop: f64,
    pub d_slow: f64,
    pub cruise: f64,
    pub accel: f64,
    pub decel: f64,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig {
            eps: 0.5,
            min_pts: 3,
            d_stop: 1.0,
            d_slow: 1.5,
            cruise: 0.8,
            accel: 0.5,
            decel: 2.0,
        }
    }
}

/// Rate-limited speed governor.
///
/// The target speed is zero inside `d_stop`, ramps linearly across the slow
/// zone, and is `cruise` beyond `d_slow` (or with no obstacle). Output
/// chases the target at `accel`/`decel` per second, except that an obstacle
/// at or inside `d_stop` forces an immediate zero.
#[derive(Debug, Clone)]
pub struct SpeedGovernor {
    config: GuardConfig,
    current: f64,
}

impl SpeedGovernor {
    /// Starts from standstill.
    pub fn new(config: GuardConfig) -> Self {
        SpeedGovernor { config, current: 0.0 }
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Advances one tick and returns the governed speed.
    pub fn govern(&mut self, nearest: Option<f64>, dt: f64) -> f64 {
        let c = &self.config;
        if let Some(d) = nearest {
            if d <= c.d_stop {
                self.current = 0.0;
                return 0.0;
            }
        }
        let target = match nearest {
            Some(d) if d < c.d_slow => c.cruise * (d - c.d_stop) / (c.d_slow - c.d_stop),
            _ => c.cruise,
        };
        self.current = if target > self.current {
            (self.current + c.accel * dt).min(target)
        } else {
            (self.current - c.decel * dt).max(target)
        };
        self.current
    }
}
