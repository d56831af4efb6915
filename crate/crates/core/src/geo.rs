//! Small-region geodesy helpers shared across the crate.
//!
//! All conversions use a spherical earth with the local equirectangular
//! approximation: one degree of latitude is a fixed arc length, one degree
//! of longitude shrinks with cos(latitude). Adequate for basin-scale work
//! far from the poles.

/// Mean earth radius (m).
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude (constant on the sphere).
pub fn meters_per_deg_lat() -> f64 {
    EARTH_RADIUS_M * std::f64::consts::PI / 180.0
}

/// Meters per degree of longitude at the given latitude.
pub fn meters_per_deg_lon(lat_deg: f64) -> f64 {
    meters_per_deg_lat() * lat_deg.to_radians().cos()
}

/// Great-circle distance between two (lon, lat) points in meters.
pub fn haversine_m(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dphi = (lat2 - lat1).to_radians();
    let dlam = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlam / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}
