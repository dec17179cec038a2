//! Lane boundary detection: Canny edges, Hough line voting, and the
//! vanishing-point geometry that turns two boundary lines into lateral and
//! heading offsets.
//!
//! Conventions: pixel x grows with column index, pixel y with row index
//! (down). Line parameters use the normal form rho = x*cos(theta) +
//! y*sin(theta) with theta in degrees in [0, 180). The camera mounts so the
//! column axis points to the robot's left, which makes both reported offsets
//! positive-to-the-right like the path-relative ones.

use std::collections::VecDeque;

use thiserror::Error;

use crate::image::GrayImage;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("blur kernel is larger than the image")]
    KernelTooLarge,
    #[error("blur kernel size must be odd and nonzero")]
    BadKernel,
    #[error("no lane boundary pair found")]
    BoundariesNotFound,
    #[error("boundary lines are too close to parallel")]
    ParallelLines,
}

/// Edge detector settings. Thresholds apply to the Sobel gradient magnitude.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CannyParams {
    pub sigma: f64,
    pub kernel_size: usize,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams { sigma: 1.0, kernel_size: 3, low: 120.0, high: 300.0 }
    }
}

/// Hough transform settings. `theta_res` in degrees.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HoughParams {
    pub rho_res: f64,
    pub theta_res: f64,
    pub vote_threshold: u32,
}

impl HoughParams {
    /// Default resolution with the vote threshold scaled to image height.
    pub fn for_image_height(height: usize) -> Self {
        HoughParams {
            rho_res: 1.0,
            theta_res: 1.0,
            vote_threshold: (0.3 * height as f64).round() as u32,
        }
    }
}

/// One detected line in normal form, with its accumulator votes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughLine {
    pub rho: f64,
    pub theta_deg: f64,
    pub votes: u32,
}

/// Per-pixel gradient magnitude and direction (degrees from atan2, so in
/// (-180, 180]).
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub angle_deg: Vec<f64>,
}

/// Blurs with a sampled, renormalized Gaussian kernel. Borders replicate the
/// nearest edge pixel.
pub fn gaussian_blur(
    img: &GrayImage,
    sigma: f64,
    kernel_size: usize,
) -> Result<GrayImage, VisionError> {
    if kernel_size == 0 || kernel_size % 2 == 0 {
        return Err(VisionError::BadKernel);
    }
    if kernel_size > img.width || kernel_size > img.height {
        return Err(VisionError::KernelTooLarge);
    }
    let half = (kernel_size / 2) as isize;
    let mut kernel = Vec::with_capacity(kernel_size * kernel_size);
    let mut sum = 0.0;
    for j in -half..=half {
        for i in -half..=half {
            let w = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
            kernel.push(w);
            sum += w;
        }
    }
    for w in &mut kernel {
        *w /= sum;
    }
    let mut out = GrayImage::new(img.width, img.height);
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let mut acc = 0.0;
            let mut k = 0;
            for j in -half..=half {
                for i in -half..=half {
                    let sx = (x + i).clamp(0, img.width as isize - 1) as usize;
                    let sy = (y + j).clamp(0, img.height as isize - 1) as usize;
                    acc += kernel[k] * img.get(sx, sy);
                    k += 1;
                }
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    Ok(out)
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Sobel gradients applied as correlation with replicated borders.
pub fn sobel_gradients(img: &GrayImage) -> GradientField {
    let (w, h) = (img.width, img.height);
    let mut magnitude = vec![0.0; w * h];
    let mut angle_deg = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for j in -1..=1isize {
                for i in -1..=1isize {
                    let sx = (x + i).clamp(0, w as isize - 1) as usize;
                    let sy = (y + j).clamp(0, h as isize - 1) as usize;
                    let v = img.get(sx, sy);
                    gx += SOBEL_X[(j + 1) as usize][(i + 1) as usize] * v;
                    gy += SOBEL_Y[(j + 1) as usize][(i + 1) as usize] * v;
                }
            }
            let idx = y as usize * w + x as usize;
            magnitude[idx] = (gx * gx + gy * gy).sqrt();
            // atan2(0, 0) = 0 keeps flat regions in the horizontal bin.
            angle_deg[idx] = gy.atan2(gx).to_degrees();
        }
    }
    GradientField { width: w, height: h, magnitude, angle_deg }
}

/// Forward/backward neighbor offsets for the four quantized directions.
fn direction_offsets(angle_deg: f64) -> ((isize, isize), (isize, isize)) {
    let mut a = angle_deg % 180.0;
    if a < 0.0 {
        a += 180.0;
    }
    if a < 22.5 || a >= 157.5 {
        ((1, 0), (-1, 0))
    } else if a < 67.5 {
        ((1, 1), (-1, -1))
    } else if a < 112.5 {
        ((0, 1), (0, -1))
    } else {
        ((-1, 1), (1, -1))
    }
}

/// Thins the gradient ridge to single-pixel width.
///
/// A pixel survives when its magnitude strictly exceeds the backward
/// neighbor along the gradient and is at least the forward neighbor; on a
/// plateau of two equal pixels this keeps exactly the backward one, so step
/// edges come out one pixel wide. Out-of-image neighbors count as zero.
fn non_max_suppress(grad: &GradientField) -> Vec<f64> {
    let (w, h) = (grad.width as isize, grad.height as isize);
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            grad.magnitude[(y * w + x) as usize]
        }
    };
    let mut out = vec![0.0; grad.magnitude.len()];
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            let m = grad.magnitude[idx];
            if m <= 0.0 {
                continue;
            }
            let ((fx, fy), (bx, by)) = direction_offsets(grad.angle_deg[idx]);
            if m > at(x + bx, y + by) && m >= at(x + fx, y + fy) {
                out[idx] = m;
            }
        }
    }
    out
}

/// Double-threshold hysteresis over suppressed magnitudes: strong pixels
/// (>= high) seed a flood fill through 8-connected weak pixels (>= low).
fn hysteresis(mags: &[f64], width: usize, height: usize, low: f64, high: f64) -> GrayImage {
    let mut out = GrayImage::new(width, height);
    let mut queue = VecDeque::new();
    for (idx, &m) in mags.iter().enumerate() {
        if m >= high {
            out.data[idx] = 255.0;
            queue.push_back(idx);
        }
    }
    while let Some(idx) = queue.pop_front() {
        let x = (idx % width) as isize;
        let y = (idx / width) as isize;
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let nidx = ny as usize * width + nx as usize;
                if out.data[nidx] == 0.0 && mags[nidx] >= low && mags[nidx] < high {
                    out.data[nidx] = 255.0;
                    queue.push_back(nidx);
                }
            }
        }
    }
    out
}

/// Full edge detector: blur, Sobel, non-maximum suppression, hysteresis.
/// Returns a binary image (255 edge, 0 background).
pub fn canny_edges(img: &GrayImage, params: &CannyParams) -> Result<GrayImage, VisionError> {
    let blurred = gaussian_blur(img, params.sigma, params.kernel_size)?;
    let grad = sobel_gradients(&blurred);
    let thin = non_max_suppress(&grad);
    Ok(hysteresis(&thin, img.width, img.height, params.low, params.high))
}

/// Hough line transform over a binary edge image.
///
/// Every edge pixel votes in each theta bin; a line is reported for every
/// accumulator cell that is a local maximum over its 8 neighbors and meets
/// the vote threshold. Results carry bin-center rho/theta and are sorted by
/// votes descending, then (theta, rho) ascending.
pub fn hough_lines(edges: &GrayImage, params: &HoughParams) -> Vec<HoughLine> {
    let (w, h) = (edges.width, edges.height);
    let diag = ((w * w + h * h) as f64).sqrt();
    let n_theta = (180.0 / params.theta_res).round() as usize;
    let n_rho = (2.0 * diag / params.rho_res).round() as usize + 1;
    let sincos: Vec<(f64, f64)> = (0..n_theta)
        .map(|k| (k as f64 * params.theta_res).to_radians().sin_cos())
        .collect();
    let mut acc = vec![0u32; n_rho * n_theta];
    for y in 0..h {
        for x in 0..w {
            if edges.get(x, y) <= 0.0 {
                continue;
            }
            for (k, &(sin_t, cos_t)) in sincos.iter().enumerate() {
                let rho = x as f64 * cos_t + y as f64 * sin_t;
                let r = ((rho + diag) / params.rho_res).round() as usize;
                acc[r * n_theta + k] += 1;
            }
        }
    }
    let vote = |r: isize, k: isize| -> u32 {
        if r < 0 || k < 0 || r >= n_rho as isize || k >= n_theta as isize {
            0
        } else {
            acc[r as usize * n_theta + k as usize]
        }
    };
    let mut lines = Vec::new();
    for r in 0..n_rho as isize {
        for k in 0..n_theta as isize {
            let v = vote(r, k);
            if v < params.vote_threshold || v == 0 {
                continue;
            }
            let mut is_peak = true;
            'nb: for dr in -1..=1isize {
                for dk in -1..=1isize {
                    if dr == 0 && dk == 0 {
                        continue;
                    }
                    if vote(r + dr, k + dk) > v {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                lines.push(HoughLine {
                    rho: r as f64 * params.rho_res - diag,
                    theta_deg: k as f64 * params.theta_res,
                    votes: v,
                });
            }
        }
    }
    lines.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.theta_deg.partial_cmp(&b.theta_deg).unwrap())
            .then(a.rho.partial_cmp(&b.rho).unwrap())
    });
    lines
}

/// Angular window (degrees) where lane boundaries are expected: steep enough
/// to be a converging lane edge, never near-horizontal or near-vertical.
const BOUNDARY_THETA_WINDOWS: [(f64, f64); 2] = [(15.0, 75.0), (105.0, 165.0)];

fn in_theta_window(theta: f64) -> bool {
    BOUNDARY_THETA_WINDOWS.iter().any(|&(lo, hi)| theta >= lo && theta <= hi)
}

/// Where a line crosses the bottom pixel row of an image of height `h`.
fn bottom_row_x(line: &HoughLine, h: usize) -> f64 {
    let (sin_t, cos_t) = line.theta_deg.to_radians().sin_cos();
    (line.rho - (h - 1) as f64 * sin_t) / cos_t
}

/// Picks the left and right lane boundary from detected lines.
///
/// Candidates are filtered to plausible boundary angles, then split by where
/// they cross the bottom row relative to the image center; the
/// highest-voted line on each side wins (input order breaks ties, so pass
/// lines as returned by [`hough_lines`]).
pub fn select_boundaries(
    lines: &[HoughLine],
    img_w: usize,
    img_h: usize,
) -> Result<(HoughLine, HoughLine), VisionError> {
    let cx = img_w as f64 / 2.0;
    let mut left = None;
    let mut right = None;
    for line in lines {
        if !in_theta_window(line.theta_deg) {
            continue;
        }
        let xb = bottom_row_x(line, img_h);
        if xb < cx {
            left.get_or_insert(*line);
        } else {
            right.get_or_insert(*line);
        }
        if left.is_some() && right.is_some() {
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok((l, r)),
        _ => Err(VisionError::BoundariesNotFound),
    }
}

/// Snaps an accumulator peak onto the edge pixels that actually support it.
///
/// A peak is only accurate to half a bin, and half a degree of angular
/// jitter costs a couple of pixels once the boundary is extrapolated up to
/// the vanishing point. Refitting a least-squares line through the per-row
/// mean of the nearby edge pixels recovers the sub-bin direction; the
/// second pass with a tighter capture band drops pixels that belong to a
/// neighboring edge. Falls back to the seed when the support is too thin
/// to fit.
pub fn refine_boundary(edges: &GrayImage, seed: &HoughLine) -> HoughLine {
    let mut line = *seed;
    for band in [1.25, 0.75] {
        let (sin_t, cos_t) = line.theta_deg.to_radians().sin_cos();
        if cos_t.abs() < 0.2 {
            // Near-horizontal: not a lane boundary shape, and the
            // column-on-row fit below would be ill-conditioned.
            return line;
        }
        let (mut n, mut sv, mut su, mut svv, mut svu) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
        for v in 0..edges.height {
            let (mut sum, mut count) = (0.0, 0u32);
            for x in 0..edges.width {
                if edges.get(x, v) > 0.0
                    && (x as f64 * cos_t + v as f64 * sin_t - line.rho).abs() <= band
                {
                    sum += x as f64;
                    count += 1;
                }
            }
            if count > 0 {
                let (u, v) = (sum / count as f64, v as f64);
                n += 1.0;
                sv += v;
                su += u;
                svv += v * v;
                svu += v * u;
            }
        }
        let det = n * svv - sv * sv;
        if n < 2.0 || det <= 0.0 {
            return line;
        }
        let b = (n * svu - sv * su) / det;
        let a = (su - b * sv) / n;
        let scale = (1.0 + b * b).sqrt();
        let mut rho = a / scale;
        let mut theta = (-b).atan();
        if theta < 0.0 {
            theta += std::f64::consts::PI;
            rho = -rho;
        }
        line = HoughLine { rho, theta_deg: theta.to_degrees(), votes: seed.votes };
    }
    line
}

/// Intersects two lines in normal form. Errors when their angles are within
/// half a degree of each other (near-parallel, numerically unstable).
pub fn intersect_lines(a: &HoughLine, b: &HoughLine) -> Result<(f64, f64), VisionError> {
    if (a.theta_deg - b.theta_deg).abs() <= 0.5 {
        return Err(VisionError::ParallelLines);
    }
    let (sin_a, cos_a) = a.theta_deg.to_radians().sin_cos();
    let (sin_b, cos_b) = b.theta_deg.to_radians().sin_cos();
    let det = cos_a * sin_b - sin_a * cos_b;
    let u = (a.rho * sin_b - b.rho * sin_a) / det;
    let v = (cos_a * b.rho - cos_b * a.rho) / det;
    Ok((u, v))
}

/// Result of one analyzed camera frame.
///
/// `lateral` (meters) and `heading` (degrees) follow the path-offset sign
/// convention: positive when the robot sits or points right of the lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneEstimate {
    pub vp_u: f64,
    pub vp_v: f64,
    pub lane_center_col: f64,
    pub lateral: f64,
    pub heading: f64,
}

/// Calibration for turning image measurements into metric offsets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LaneGeometry {
    /// Focal length in pixels.
    pub focal_px: f64,
    /// Ground meters per pixel along the bottom image row.
    pub meters_per_pixel: f64,
}

/// Turns a boundary pair into a vanishing point and metric offsets.
pub fn lane_estimate_from_boundaries(
    left: &HoughLine,
    right: &HoughLine,
    img_w: usize,
    img_h: usize,
    geom: &LaneGeometry,
) -> Result<LaneEstimate, VisionError> {
    let (vp_u, vp_v) = intersect_lines(left, right)?;
    let cx = img_w as f64 / 2.0;
    let lane_center_col = (bottom_row_x(left, img_h) + bottom_row_x(right, img_h)) / 2.0;
    let heading = ((vp_u - cx) / geom.focal_px).atan().to_degrees();
    let lateral = (lane_center_col - cx) * geom.meters_per_pixel;
    Ok(LaneEstimate { vp_u, vp_v, lane_center_col, lateral, heading })
}

/// Full frame pipeline: edges, lines, boundary pair, offsets.
pub fn lane_estimate(
    img: &GrayImage,
    canny: &CannyParams,
    hough: &HoughParams,
    geom: &LaneGeometry,
) -> Result<LaneEstimate, VisionError> {
    let edges = canny_edges(img, canny)?;
    let lines = hough_lines(&edges, hough);
    let (left, right) = select_boundaries(&lines, img.width, img.height)?;
    let left = refine_boundary(&edges, &left);
    let right = refine_boundary(&edges, &right);
    lane_estimate_from_boundaries(&left, &right, img.width, img.height, geom)
}
