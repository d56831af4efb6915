//! Epoch-seconds <-> ISO 8601 conversion used by all file formats.

use chrono::{DateTime, SecondsFormat, Utc};

/// Format epoch seconds as an ISO 8601 UTC timestamp. Whole seconds render
/// without a fractional part; otherwise milliseconds are kept.
pub fn epoch_to_iso(t: f64) -> String {
    let secs = t.floor() as i64;
    let nanos = ((t - t.floor()) * 1e9).round() as u32;
    let dt = DateTime::<Utc>::from_timestamp(secs, nanos.min(999_999_999))
        .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
    if nanos == 0 {
        dt.to_rfc3339_opts(SecondsFormat::Secs, true)
    } else {
        dt.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

/// Parse an ISO 8601 / RFC 3339 timestamp to epoch seconds.
pub fn iso_to_epoch(s: &str) -> Result<f64, String> {
    let dt = DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad timestamp {s:?}: {e}"))?;
    Ok(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 / 1e9)
}
