//! Gridded ocean-current and wind fields: loading, sampling, differentiation,
//! the Ekman wind-driven surface current, and closed-form test fields.
//!
//! The surface velocity seen by a drifter is `u = u_g + u_e`: a geostrophic
//! (or otherwise gridded) current plus the wind-driven Ekman component
//! `u_e = 0.0127/sqrt(sin|lat|) * A * u10`, where `A` rotates the 10 m wind
//! 45 degrees to the right in the northern hemisphere and to the left in the
//! southern.

mod analytic;
mod grid;

pub use analytic::{AnalyticField, AnalyticSample};
pub use grid::{load_field, save_field, FieldSample, GridSpec, GriddedVelocityField};

pub(crate) use grid::material_derivative_from_sample;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 2D vector; meters or m/s depending on context, east/north components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// 90-degree counterclockwise rotation: (-y, x).
    pub fn perp(self) -> Vec2 {
        Vec2 { x: -self.y, y: self.x }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product self x other.
    pub fn cross_z(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wind-to-surface-current factor in the Ekman model.
pub const EKMAN_WIND_FACTOR: f64 = 0.0127;

/// Latitudes closer to the equator than this are rejected: the Ekman factor
/// 1/sqrt(sin|lat|) diverges there.
pub const EKMAN_LAT_GUARD_DEG: f64 = 2.0;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-monotone {axis} axis: spacing {spacing} must be positive")]
    NonMonotoneAxis { axis: &'static str, spacing: f64 },
    #[error("size mismatch for variable {variable}: expected {expected} cells, {problem}")]
    SizeMismatch {
        variable: String,
        expected: usize,
        problem: String,
    },
    #[error("query ({lon}, {lat}, {t}) outside grid domain")]
    OutOfDomain { lon: f64, lat: f64, t: f64 },
    #[error("interpolation support at ({lon}, {lat}) contains masked cells and fallback is disabled")]
    MaskedSupport { lon: f64, lat: f64 },
    #[error("query ({lon}, {lat}) too close to the grid edge for derivatives")]
    InsufficientMargin { lon: f64, lat: f64 },
    #[error("latitude {lat} inside the +-{guard} degree equatorial guard band")]
    EquatorialGuard { lat: f64, guard: f64 },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Wind-driven Ekman surface current from the 10 m wind.
///
/// `u_e = 0.0127/sqrt(sin|lat|) * A(lat) * wind10` with `A` a 45-degree
/// rotation to the right of the wind in the northern hemisphere and to the
/// left in the southern. Rejects latitudes inside the equatorial guard band
/// where the magnitude factor diverges.
pub fn ekman_velocity(wind10: Vec2, lat_deg: f64) -> Result<Vec2, FieldError> {
    if !wind10.is_finite() {
        return Err(FieldError::NonFinite("wind10"));
    }
    if lat_deg.abs() < EKMAN_LAT_GUARD_DEG || !lat_deg.is_finite() {
        return Err(FieldError::EquatorialGuard {
            lat: lat_deg,
            guard: EKMAN_LAT_GUARD_DEG,
        });
    }
    let scale = EKMAN_WIND_FACTOR / lat_deg.to_radians().abs().sin().sqrt();
    // Rotate 45 degrees: clockwise (right) for northern latitudes,
    // counterclockwise (left) for southern.
    let c = std::f64::consts::FRAC_PI_4.cos();
    let s = std::f64::consts::FRAC_PI_4.sin() * lat_deg.signum();
    Ok(Vec2::new(
        scale * (c * wind10.x + s * wind10.y),
        scale * (-s * wind10.x + c * wind10.y),
    ))
}

/// Derivative of the Ekman rotation-and-scale operator with respect to
/// latitude (per degree). Applied to the wind vector this gives the part of
/// the Ekman velocity gradient caused by the latitude dependence of the
/// magnitude factor; the rotation itself is constant within a hemisphere.
pub fn ekman_velocity_dlat(wind10: Vec2, lat_deg: f64) -> Result<Vec2, FieldError> {
    let ue = ekman_velocity(wind10, lat_deg)?;
    let phi = lat_deg.to_radians().abs();
    // d/dphi [sin(phi)^(-1/2)] = -cos(phi)/(2 sin(phi)^(3/2)); relative to the
    // factor itself this is -cos(phi)/(2 sin(phi)). Chain through |lat| and
    // degrees->radians.
    let dlog_dphi = -phi.cos() / (2.0 * phi.sin());
    let dphi_dlat = lat_deg.signum() * std::f64::consts::PI / 180.0;
    Ok(ue * (dlog_dphi * dphi_dlat))
}

/// Total surface velocity: gridded current sample plus the Ekman current
/// derived from the gridded 10 m wind sample at the same point.
pub fn total_surface_velocity(
    current: &GriddedVelocityField,
    wind: &GriddedVelocityField,
    lon: f64,
    lat: f64,
    t: f64,
) -> Result<Vec2, FieldError> {
    let ug = current.sample_velocity(lon, lat, t)?;
    let w10 = wind.sample_velocity(lon, lat, t)?;
    Ok(ug + ekman_velocity(w10, lat)?)
}
