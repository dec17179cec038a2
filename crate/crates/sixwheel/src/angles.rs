//! Degree-based angle helpers shared across the crate.
//!
//! Headings are stored in degrees on the half-open interval (-180, 180].

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_deg(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Signed smallest difference `a - b` in degrees, wrapped into (-180, 180].
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    wrap_deg(a - b)
}
