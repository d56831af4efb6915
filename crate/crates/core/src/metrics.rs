//! Trajectory and velocity skill metrics.
//!
//! The trajectory skill score follows the normalized cumulative separation
//! form: with modeled positions y(t_j), real positions x_D(t_j) and l(t_j)
//! the cumulative real path length up to t_j,
//!
//! ```text
//! c = sum_j ||y(t_j) - x_D(t_j)|| / sum_j l(t_j),     s = 1 - c
//! ```
//!
//! s = 1 means a perfect trajectory; s < 0 means the model separates from
//! the real drifter faster than the drifter itself moves. Similarity
//! statistics (lagged cross-correlation, Welch magnitude-squared coherence,
//! deployment distance/time) quantify how close a test drifter sits to the
//! training set.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::flowfield::Vec2;
use crate::geo;
use crate::integrate::Trajectory;

/// Welch estimate segment length (samples).
pub const WELCH_SEGMENT: usize = 256;
/// Hop between segments: 50% overlap.
pub const WELCH_HOP: usize = WELCH_SEGMENT / 2;
/// Minimum fractional overlap for a cross-correlation lag to count.
pub const MIN_LAG_OVERLAP: f64 = 0.25;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trajectories do not share a time axis")]
    MismatchedTimeAxes,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    EmptySeries,
    #[error("real trajectory has zero path length")]
    ZeroPathLength,
    #[error("series too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("all series excluded: {0}")]
    Degenerate(&'static str),
    #[error("normalization scale must be positive, got {0}")]
    BadScale(f64),
    #[error("empty training set")]
    EmptyTrainingSet,
}

/// Skill of one modeled trajectory against the real one.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SkillReport {
    pub drifter_id: String,
    /// Normalized cumulative separation.
    pub c: f64,
    /// Skill s = 1 - c.
    pub s: f64,
    /// Number of summed steps.
    pub n: usize,
}

/// Normalized cumulative separation skill of `modeled` against `real`.
/// Both trajectories must share the time axis; the shared initial sample is
/// excluded from the sums. Distances are great-circle meters.
pub fn skill_score(modeled: &Trajectory, real: &Trajectory) -> Result<SkillReport, MetricsError> {
    if modeled.times != real.times {
        return Err(MetricsError::MismatchedTimeAxes);
    }
    if real.len() < 2 {
        return Err(MetricsError::TooShort { need: 2, got: real.len() });
    }
    let mut cum_len = 0.0;
    let mut sum_len = 0.0;
    let mut sum_sep = 0.0;
    for j in 1..real.len() {
        let (plon, plat) = real.positions[j - 1];
        let (rlon, rlat) = real.positions[j];
        cum_len += geo::haversine_m(plon, plat, rlon, rlat);
        sum_len += cum_len;
        let (mlon, mlat) = modeled.positions[j];
        sum_sep += geo::haversine_m(mlon, mlat, rlon, rlat);
    }
    if sum_len <= 0.0 {
        return Err(MetricsError::ZeroPathLength);
    }
    let c = sum_sep / sum_len;
    Ok(SkillReport {
        drifter_id: real.drifter_id.clone(),
        c,
        s: 1.0 - c,
        n: real.len() - 1,
    })
}

/// RMSE of the zonal velocity component, nondimensionalized by `u_bar`.
pub fn rmse_zonal(modeled: &[Vec2], real: &[Vec2], u_bar: f64) -> Result<f64, MetricsError> {
    if modeled.len() != real.len() {
        return Err(MetricsError::LengthMismatch(modeled.len(), real.len()));
    }
    if modeled.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    if !(u_bar > 0.0) {
        return Err(MetricsError::BadScale(u_bar));
    }
    let ss: f64 = modeled
        .iter()
        .zip(real)
        .map(|(m, r)| ((m.x - r.x) / u_bar).powi(2))
        .sum();
    Ok((ss / modeled.len() as f64).sqrt())
}

/// Mean speed of a set of velocity series; the dataset-wide normalization
/// scale for zonal RMSE.
pub fn mean_speed(series: &[Vec<Vec2>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in series {
        for v in s {
            sum += v.norm();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Maximum over training drifters and lags of the normalized (Pearson)
/// cross-correlation between the test series and each training series.
/// Each lag window is mean-removed and normalized by its own standard
/// deviations; lags must overlap by at least 25% of the shorter series.
pub fn max_cross_correlation(
    test: &[f64],
    training: &[Vec<f64>],
) -> Result<f64, MetricsError> {
    if training.is_empty() {
        return Err(MetricsError::EmptyTrainingSet);
    }
    if test.len() < 2 {
        return Err(MetricsError::TooShort { need: 2, got: test.len() });
    }
    let mut best: Option<f64> = None;
    for series in training {
        if series.len() < 2 {
            continue;
        }
        let (nx, ny) = (test.len(), series.len());
        let min_overlap = ((MIN_LAG_OVERLAP * nx.min(ny) as f64).ceil() as usize).max(2);
        let lo = -(ny as isize - min_overlap as isize);
        let hi = nx as isize - min_overlap as isize;
        for lag in lo..=hi {
            let i0 = lag.max(0) as usize;
            let i1 = (nx as isize).min(ny as isize + lag) as usize;
            if i1 <= i0 || i1 - i0 < min_overlap {
                continue;
            }
            let xw = &test[i0..i1];
            let yw: Vec<f64> = (i0..i1).map(|i| series[(i as isize - lag) as usize]).collect();
            if let Some(r) = pearson(xw, &yw) {
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
    }
    best.ok_or(MetricsError::Degenerate("no lag window with variance"))
}

/// Welch magnitude-squared coherence between two series, averaged over
/// frequency bins (DC excluded). Segments of 256 samples, 50% overlap, Hann
/// window, per-segment mean removal.
pub fn mean_ms_coherence(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len().min(y.len());
    if n < 2 * WELCH_SEGMENT {
        return Err(MetricsError::TooShort {
            need: 2 * WELCH_SEGMENT,
            got: n,
        });
    }
    let window: Vec<f64> = (0..WELCH_SEGMENT)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / WELCH_SEGMENT as f64).cos()))
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(WELCH_SEGMENT);
    let nbins = WELCH_SEGMENT / 2;
    let mut sxx = vec![0.0f64; nbins + 1];
    let mut syy = vec![0.0f64; nbins + 1];
    let mut sxy = vec![Complex64::new(0.0, 0.0); nbins + 1];
    let mut start = 0;
    let mut segments = 0usize;
    let mut buf_x = vec![Complex64::new(0.0, 0.0); WELCH_SEGMENT];
    let mut buf_y = vec![Complex64::new(0.0, 0.0); WELCH_SEGMENT];
    while start + WELCH_SEGMENT <= n {
        let seg_x = &x[start..start + WELCH_SEGMENT];
        let seg_y = &y[start..start + WELCH_SEGMENT];
        let mx = seg_x.iter().sum::<f64>() / WELCH_SEGMENT as f64;
        let my = seg_y.iter().sum::<f64>() / WELCH_SEGMENT as f64;
        for i in 0..WELCH_SEGMENT {
            buf_x[i] = Complex64::new((seg_x[i] - mx) * window[i], 0.0);
            buf_y[i] = Complex64::new((seg_y[i] - my) * window[i], 0.0);
        }
        fft.process(&mut buf_x);
        fft.process(&mut buf_y);
        for k in 0..=nbins {
            sxx[k] += buf_x[k].norm_sqr();
            syy[k] += buf_y[k].norm_sqr();
            sxy[k] += buf_x[k] * buf_y[k].conj();
        }
        segments += 1;
        start += WELCH_HOP;
    }
    if segments == 0 {
        return Err(MetricsError::TooShort { need: 2 * WELCH_SEGMENT, got: n });
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for k in 1..=nbins {
        let denom = sxx[k] * syy[k];
        if denom > 0.0 {
            sum += sxy[k].norm_sqr() / denom;
            used += 1;
        }
    }
    if used == 0 {
        return Err(MetricsError::Degenerate("no frequency bin with power"));
    }
    Ok(sum / used as f64)
}

/// Maximum over training drifters of the mean magnitude-squared coherence
/// with the test series.
pub fn max_mean_ms_coherence(
    test: &[f64],
    training: &[Vec<f64>],
) -> Result<f64, MetricsError> {
    if training.is_empty() {
        return Err(MetricsError::EmptyTrainingSet);
    }
    let mut best: Option<f64> = None;
    for series in training {
        match mean_ms_coherence(test, series) {
            Ok(c) => best = Some(best.map_or(c, |b: f64| b.max(c))),
            Err(MetricsError::TooShort { .. }) | Err(MetricsError::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    best.ok_or(MetricsError::Degenerate("no training series long enough"))
}

/// Deployment coordinates of one drifter.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub drifter_id: String,
    pub lon: f64,
    pub lat: f64,
    /// Epoch seconds.
    pub t: f64,
}

/// Distance (km) and time (hours) from a test deployment to the nearest
/// training deployment; the two minima are taken independently. Ties go to
/// the lexicographically smallest drifter id.
pub fn nearest_trained(
    test: &Deployment,
    training: &[Deployment],
) -> Result<(f64, f64), MetricsError> {
    if training.is_empty() {
        return Err(MetricsError::EmptyTrainingSet);
    }
    let mut sorted: Vec<&Deployment> = training.iter().collect();
    sorted.sort_by(|a, b| a.drifter_id.cmp(&b.drifter_id));
    let km = sorted
        .iter()
        .map(|d| geo::haversine_m(test.lon, test.lat, d.lon, d.lat) / 1000.0)
        .fold(f64::INFINITY, f64::min);
    let hours = sorted
        .iter()
        .map(|d| (test.t - d.t).abs() / 3600.0)
        .fold(f64::INFINITY, f64::min);
    Ok((km, hours))
}

/// Similarity of one test drifter to a training set.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SimilarityReport {
    pub drifter_id: String,
    pub max_correlation: f64,
    pub max_mean_ms_coherence: Option<f64>,
    pub dist_to_trained_km: f64,
    pub time_to_trained_h: f64,
}

/// Histogram counts for the given bin edges; values outside the edges are
/// dropped. Edges must be increasing.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let nbins = edges.len().saturating_sub(1);
    let mut counts = vec![0usize; nbins];
    for &v in values {
        for b in 0..nbins {
            let last = b == nbins - 1;
            if v >= edges[b] && (v < edges[b + 1] || (last && v <= edges[b + 1])) {
                counts[b] += 1;
                break;
            }
        }
    }
    counts
}

/// Uniform bin edges over [lo, hi].
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let bins = bins.max(1);
    (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::SampleStatus;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn make_traj(id: &str, positions: Vec<(f64, f64)>) -> Trajectory {
        let n = positions.len();
        Trajectory {
            drifter_id: id.into(),
            times: (0..n).map(|k| k as f64 * 900.0).collect(),
            velocities: vec![Vec2::ZERO; n],
            status: vec![SampleStatus::Ok; n],
            positions,
        }
    }

    #[test]
    fn skill_identical_is_one() {
        let real = make_traj("d", (0..10).map(|j| (-88.0, 27.0 + 1e-6 * j as f64)).collect());
        let rep = skill_score(&real, &real).unwrap();
        assert!((rep.s - 1.0).abs() < 1e-12);
        assert_eq!(rep.n, 9);
    }

    #[test]
    fn skill_stationary_model_straight_line_is_zero() {
        // Separation at step j equals the cumulative path length j*d, so the
        // two sums cancel: c = 1, s = 0.
        let step = 1e-6;
        let real = make_traj("d", (0..9).map(|j| (-88.0, 27.0 + step * j as f64)).collect());
        let modeled = make_traj("d", vec![(-88.0, 27.0); 9]);
        let rep = skill_score(&modeled, &real).unwrap();
        assert!(rep.c.abs() - 1.0 < 1e-12 && (rep.s).abs() < 1e-12, "{rep:?}");
    }

    #[test]
    fn skill_antipodal_motion_is_minus_one() {
        let step = 1e-6;
        let real = make_traj("d", (0..9).map(|j| (-88.0, 27.0 + step * j as f64)).collect());
        let modeled = make_traj("d", (0..9).map(|j| (-88.0, 27.0 - step * j as f64)).collect());
        let rep = skill_score(&modeled, &real).unwrap();
        assert!((rep.c - 2.0).abs() < 1e-12 && (rep.s + 1.0).abs() < 1e-12, "{rep:?}");
    }

    #[test]
    fn skill_translation_invariance() {
        let real = make_traj(
            "d",
            (0..20).map(|j| (-88.0 + 1e-4 * j as f64, 27.0 + 5e-5 * (j * j) as f64 * 1e-2)).collect(),
        );
        let modeled = make_traj(
            "d",
            (0..20).map(|j| (-88.0 + 1.3e-4 * j as f64, 27.0 + 4e-5 * j as f64)).collect(),
        );
        let rep = skill_score(&modeled, &real).unwrap();
        // Pure longitude translation preserves every pairwise distance on
        // the sphere exactly.
        let shift_lon = |t: &Trajectory| {
            let mut s = t.clone();
            for p in &mut s.positions {
                p.0 += 7.5;
            }
            s
        };
        let rep2 = skill_score(&shift_lon(&modeled), &shift_lon(&real)).unwrap();
        assert!((rep.s - rep2.s).abs() < 1e-12, "{} vs {}", rep.s, rep2.s);
        // A small latitude translation changes the metric only through
        // cos(lat): near-invariance.
        let shift_lat = |t: &Trajectory| {
            let mut s = t.clone();
            for p in &mut s.positions {
                p.1 += 0.05;
            }
            s
        };
        let rep3 = skill_score(&shift_lat(&modeled), &shift_lat(&real)).unwrap();
        assert!((rep.s - rep3.s).abs() < 1e-3, "{} vs {}", rep.s, rep3.s);
    }

    #[test]
    fn skill_rejects_zero_path() {
        let real = make_traj("d", vec![(-88.0, 27.0); 5]);
        let modeled = make_traj("d", vec![(-88.0, 27.1); 5]);
        assert!(matches!(
            skill_score(&modeled, &real),
            Err(MetricsError::ZeroPathLength)
        ));
    }

    #[test]
    fn rmse_zonal_cases() {
        let a = vec![Vec2::new(0.3, 0.0); 16];
        assert_eq!(rmse_zonal(&a, &a, 0.5).unwrap(), 0.0);
        let b: Vec<Vec2> = a.iter().map(|v| Vec2::new(v.x + 0.05, 0.0)).collect();
        let r = rmse_zonal(&b, &a, 0.5).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
        let r2 = rmse_zonal(&b, &a, 1.0).unwrap();
        assert!((r2 - 0.05).abs() < 1e-12, "doubling u_bar halves rmse");
        assert!(rmse_zonal(&[], &[], 0.5).is_err());
    }

    #[test]
    fn correlation_self_is_one() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() + 0.2 * (i as f64 * 0.11).cos()).collect();
        let r = max_cross_correlation(&x, &[x.clone()]).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn correlation_finds_known_shift() {
        let n = 400;
        let period = 80;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / period as f64).sin())
            .collect();
        let shift = 17;
        let y: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * (i as isize - shift) as f64 / period as f64).sin())
            .collect();
        let r = max_cross_correlation(&x, &[y]).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn correlation_sine_vs_cosine() {
        let n = 400;
        let period = 80;
        let w = 2.0 * std::f64::consts::PI / period as f64;
        let x: Vec<f64> = (0..n).map(|i| (w * i as f64).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (w * i as f64).cos()).collect();
        let r = max_cross_correlation(&x, &[y]).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "quarter-period alignment, got {r}");
    }

    #[test]
    fn correlation_excludes_flat_series() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let flat = vec![1.0; 50];
        assert!(matches!(
            max_cross_correlation(&x, &[flat]),
            Err(MetricsError::Degenerate(_))
        ));
    }

    #[test]
    fn coherence_identical_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..2048).map(|_| rng.random::<f64>() - 0.5).collect();
        let c = mean_ms_coherence(&x, &x).unwrap();
        assert!((c - 1.0).abs() < 1e-9, "{c}");
    }

    #[test]
    fn coherence_independent_noise_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..8192).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..8192).map(|_| rng.random::<f64>() - 0.5).collect();
        let c = mean_ms_coherence(&x, &y).unwrap();
        assert!(c < 0.25, "{c}");
    }

    #[test]
    fn coherence_snr_dominated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4096).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 0.05 * (rng.random::<f64>() - 0.5)).collect();
        let c = mean_ms_coherence(&x, &y).unwrap();
        assert!(c > 0.9, "{c}");
    }

    #[test]
    fn coherence_requires_length() {
        let x = vec![0.0; 100];
        assert!(matches!(
            mean_ms_coherence(&x, &x),
            Err(MetricsError::TooShort { .. })
        ));
    }

    #[test]
    fn nearest_trained_basics() {
        let test = Deployment { drifter_id: "t".into(), lon: -88.0, lat: 27.0, t: 0.0 };
        let same = Deployment { drifter_id: "a".into(), lon: -88.0, lat: 27.0, t: 0.0 };
        let (km, h) = nearest_trained(&test, &[same]).unwrap();
        assert_eq!((km, h), (0.0, 0.0));

        let one_deg = Deployment { drifter_id: "b".into(), lon: -88.0, lat: 28.0, t: 0.0 };
        let (km, h) = nearest_trained(&test, &[one_deg]).unwrap();
        assert!((km - 111.194926).abs() < 1e-3, "{km}");
        assert_eq!(h, 0.0);
    }

    #[test]
    fn nearest_trained_minima_independent() {
        let test = Deployment { drifter_id: "t".into(), lon: -88.0, lat: 27.0, t: 0.0 };
        let near_space = Deployment { drifter_id: "a".into(), lon: -88.0, lat: 27.01, t: 72.0 * 3600.0 };
        let far_space = Deployment { drifter_id: "b".into(), lon: -80.0, lat: 22.0, t: 1800.0 };
        let (km, h) = nearest_trained(&test, &[near_space, far_space]).unwrap();
        assert!(km < 2.0, "{km}");
        assert!((h - 0.5).abs() < 1e-12, "{h}");
    }

    #[test]
    fn histogram_counts() {
        let edges = uniform_edges(0.0, 1.0, 4);
        let counts = histogram(&[0.1, 0.3, 0.31, 0.99, 1.0, -0.2, 1.3], &edges);
        assert_eq!(counts, vec![1, 2, 0, 2]);
    }
}
