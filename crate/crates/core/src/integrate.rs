//! Fixed-step RK4 trajectory integration against any velocity model, in
//! geographic coordinates, plus ensemble seeding and median-path extraction.
//!
//! Velocities are m/s; the integrator converts them to degree rates with the
//! local equirectangular metric evaluated at each stage's latitude. The step
//! is fixed at the 15-minute data cadence by default.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowfield::{FieldError, Vec2};
use crate::geo;
use crate::timebase;

/// Default integration step (s), matching the 15-minute drifter cadence.
pub const DEFAULT_DT_S: f64 = 900.0;

/// Ensemble seeding radii must stay under 10 km.
pub const MAX_ENSEMBLE_RADIUS_M: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("position ({lon}, {lat}) at t={t} outside the model domain")]
    OutOfDomain { lon: f64, lat: f64, t: f64 },
    #[error("masked flow at ({lon}, {lat})")]
    MaskedFlow { lon: f64, lat: f64 },
    #[error("numerical failure in velocity model: {0}")]
    Numerical(String),
}

impl From<FieldError> for ModelError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::OutOfDomain { lon, lat, t } => ModelError::OutOfDomain { lon, lat, t },
            FieldError::MaskedSupport { lon, lat } => ModelError::MaskedFlow { lon, lat },
            FieldError::InsufficientMargin { lon, lat } => {
                ModelError::OutOfDomain { lon, lat, t: f64::NAN }
            }
            other => ModelError::Numerical(other.to_string()),
        }
    }
}

/// Velocity returned by a model, with a flag for degraded (masked-fallback)
/// flow samples.
#[derive(Debug, Clone, Copy)]
pub struct ModelVelocity {
    pub v: Vec2,
    pub degraded: bool,
}

impl From<Vec2> for ModelVelocity {
    fn from(v: Vec2) -> Self {
        ModelVelocity { v, degraded: false }
    }
}

/// Anything that yields a surface velocity (m/s) at (lon, lat, t).
pub trait VelocityModel: Sync {
    fn velocity(&self, lon: f64, lat: f64, t: f64) -> Result<ModelVelocity, ModelError>;
}

impl<F> VelocityModel for F
where
    F: Fn(f64, f64, f64) -> Result<ModelVelocity, ModelError> + Sync,
{
    fn velocity(&self, lon: f64, lat: f64, t: f64) -> Result<ModelVelocity, ModelError> {
        self(lon, lat, t)
    }
}

/// One classical RK4 step of y' = f(t, y) for a fixed-size state.
pub fn rk4_step_n<const N: usize, E>(
    f: &mut impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    t: f64,
    y: &[f64; N],
    dt: f64,
) -> Result<[f64; N], E> {
    let shift = |y: &[f64; N], k: &[f64; N], h: f64| {
        let mut out = *y;
        for i in 0..N {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = f(t, y)?;
    let k2 = f(t + dt / 2.0, &shift(y, &k1, dt / 2.0))?;
    let k3 = f(t + dt / 2.0, &shift(y, &k2, dt / 2.0))?;
    let k4 = f(t + dt, &shift(y, &k3, dt))?;
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

/// One RK4 step of a (lon, lat) position advected by `model`.
pub fn rk4_step(
    model: &dyn VelocityModel,
    pos: (f64, f64),
    t: f64,
    dt: f64,
) -> Result<(f64, f64), ModelError> {
    let mut rate = |tt: f64, y: &[f64; 2]| -> Result<[f64; 2], ModelError> {
        let mv = model.velocity(y[0], y[1], tt)?;
        Ok([
            mv.v.x / geo::meters_per_deg_lon(y[1]),
            mv.v.y / geo::meters_per_deg_lat(),
        ])
    };
    let out = rk4_step_n(&mut rate, t, &[pos.0, pos.1], dt)?;
    Ok((out[0], out[1]))
}

/// Per-sample trajectory quality flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Ok,
    LeftDomain,
    MaskedFlow,
}

impl SampleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleStatus::Ok => "ok",
            SampleStatus::LeftDomain => "left_domain",
            SampleStatus::MaskedFlow => "masked_flow",
        }
    }
}

/// A drifter path sampled on a uniform time axis.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub drifter_id: String,
    /// Epoch seconds, strictly increasing, uniform cadence.
    pub times: Vec<f64>,
    /// (lon, lat) degrees.
    pub positions: Vec<(f64, f64)>,
    /// m/s at each sample.
    pub velocities: Vec<Vec2>,
    pub status: Vec<SampleStatus>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn cadence(&self) -> Option<f64> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("ensemble radius {radius_m} m exceeds the {MAX_ENSEMBLE_RADIUS_M} m limit")]
    RadiusTooLarge { radius_m: f64 },
    #[error("ensemble count must be at least 1")]
    EmptyEnsemble,
    #[error("trajectories do not share a time axis")]
    MismatchedTimeAxes,
    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Integrate a trajectory with fixed-step RK4, recording the model velocity
/// at every sample. When a step leaves the model domain the position freezes
/// and the remaining samples are flagged.
pub fn integrate_trajectory(
    model: &dyn VelocityModel,
    drifter_id: &str,
    start: (f64, f64),
    t0: f64,
    n_steps: usize,
    dt: f64,
) -> Trajectory {
    let n = n_steps + 1;
    let mut times = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);

    let mut pos = start;
    let mut frozen: Option<SampleStatus> = None;
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        times.push(t);
        if let Some(flag) = frozen {
            positions.push(pos);
            velocities.push(Vec2::ZERO);
            status.push(flag);
            continue;
        }
        match model.velocity(pos.0, pos.1, t) {
            Ok(mv) => {
                positions.push(pos);
                velocities.push(mv.v);
                status.push(if mv.degraded {
                    SampleStatus::MaskedFlow
                } else {
                    SampleStatus::Ok
                });
            }
            Err(e) => {
                let flag = match e {
                    ModelError::MaskedFlow { .. } => SampleStatus::MaskedFlow,
                    _ => SampleStatus::LeftDomain,
                };
                frozen = Some(flag);
                positions.push(pos);
                velocities.push(Vec2::ZERO);
                status.push(flag);
                continue;
            }
        }
        if k < n_steps {
            match rk4_step(model, pos, t, dt) {
                Ok(next) => pos = next,
                Err(e) => {
                    frozen = Some(match e {
                        ModelError::MaskedFlow { .. } => SampleStatus::MaskedFlow,
                        _ => SampleStatus::LeftDomain,
                    });
                }
            }
        }
    }
    Trajectory {
        drifter_id: drifter_id.to_string(),
        times,
        positions,
        velocities,
        status,
    }
}

/// Ensemble seeding specification: `count` points drawn area-uniformly from
/// the disk of `radius_m` around `center`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub center: (f64, f64),
    pub radius_m: f64,
    pub count: usize,
    pub rng_seed: u64,
}

/// Deterministic area-uniform seeding in a small disk: r = R sqrt(U1),
/// theta = 2 pi U2, offsets converted to degrees at the center latitude.
pub fn seed_ensemble(spec: &EnsembleSpec) -> Result<Vec<(f64, f64)>, IntegrateError> {
    if spec.radius_m >= MAX_ENSEMBLE_RADIUS_M {
        return Err(IntegrateError::RadiusTooLarge {
            radius_m: spec.radius_m,
        });
    }
    if spec.count == 0 {
        return Err(IntegrateError::EmptyEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let m_lon = geo::meters_per_deg_lon(spec.center.1);
    let m_lat = geo::meters_per_deg_lat();
    let mut points = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let r = spec.radius_m * rng.random::<f64>().sqrt();
        let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        points.push((
            spec.center.0 + r * theta.cos() / m_lon,
            spec.center.1 + r * theta.sin() / m_lat,
        ));
    }
    Ok(points)
}

/// Integrate every ensemble member independently. Members are merged by
/// index, so parallel and serial execution give identical results.
pub fn integrate_ensemble(
    model: &dyn VelocityModel,
    base_id: &str,
    starts: &[(f64, f64)],
    t0: f64,
    n_steps: usize,
    dt: f64,
    parallel: bool,
) -> Vec<Trajectory> {
    let run = |(m, start): (usize, &(f64, f64))| {
        integrate_trajectory(model, &format!("{base_id}#m{m:03}"), *start, t0, n_steps, dt)
    };
    if parallel {
        starts.par_iter().enumerate().map(run).collect()
    } else {
        starts.iter().enumerate().map(run).collect()
    }
}

/// Componentwise median path of an ensemble. A sample keeps `ok` status when
/// at least half of the members are `ok` there; otherwise it is flagged with
/// the most common member flag and the position freezes.
pub fn median_trajectory(ensemble: &[Trajectory]) -> Result<Trajectory, IntegrateError> {
    let first = ensemble.first().ok_or(IntegrateError::EmptyEnsemble)?;
    for traj in ensemble {
        if traj.times != first.times {
            return Err(IntegrateError::MismatchedTimeAxes);
        }
    }
    let n = first.len();
    let mut times = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    let mut last_pos = first.positions.first().copied().unwrap_or((0.0, 0.0));
    for k in 0..n {
        times.push(first.times[k]);
        let ok_members: Vec<&Trajectory> = ensemble
            .iter()
            .filter(|m| m.status[k] == SampleStatus::Ok)
            .collect();
        if 2 * ok_members.len() >= ensemble.len() && !ok_members.is_empty() {
            let lon = median(ok_members.iter().map(|m| m.positions[k].0));
            let lat = median(ok_members.iter().map(|m| m.positions[k].1));
            let u = median(ok_members.iter().map(|m| m.velocities[k].x));
            let v = median(ok_members.iter().map(|m| m.velocities[k].y));
            last_pos = (lon, lat);
            positions.push(last_pos);
            velocities.push(Vec2::new(u, v));
            status.push(SampleStatus::Ok);
        } else {
            let left = ensemble
                .iter()
                .filter(|m| m.status[k] == SampleStatus::LeftDomain)
                .count();
            let masked = ensemble
                .iter()
                .filter(|m| m.status[k] == SampleStatus::MaskedFlow)
                .count();
            positions.push(last_pos);
            velocities.push(Vec2::ZERO);
            status.push(if masked > left {
                SampleStatus::MaskedFlow
            } else {
                SampleStatus::LeftDomain
            });
        }
    }
    Ok(Trajectory {
        drifter_id: format!("{}#median", base_id(&first.drifter_id)),
        times,
        positions,
        velocities,
        status,
    })
}

fn base_id(member_id: &str) -> &str {
    member_id.split('#').next().unwrap_or(member_id)
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Write trajectories as CSV rows (drifter_id, iso_time, lon, lat, u, v,
/// status). An optional `# key=value` provenance comment goes first.
pub fn write_trajectories_csv(
    path: impl AsRef<Path>,
    trajectories: &[Trajectory],
    provenance: Option<&str>,
) -> Result<(), IntegrateError> {
    let path = path.as_ref();
    let io_err = |source: std::io::Error| IntegrateError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    if let Some(p) = provenance {
        writeln!(out, "# {p}").map_err(io_err)?;
    }
    writeln!(out, "drifter_id,iso_time,lon,lat,u,v,status").map_err(io_err)?;
    for traj in trajectories {
        for k in 0..traj.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                traj.drifter_id,
                timebase::epoch_to_iso(traj.times[k]),
                traj.positions[k].0,
                traj.positions[k].1,
                traj.velocities[k].x,
                traj.velocities[k].y,
                traj.status[k].as_str()
            )
            .map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// Write trajectories as a GeoJSON FeatureCollection with one LineString per
/// trajectory.
pub fn write_trajectories_geojson(
    path: impl AsRef<Path>,
    trajectories: &[Trajectory],
    provenance: Option<&str>,
) -> Result<(), IntegrateError> {
    let path = path.as_ref();
    let io_err = |source: std::io::Error| IntegrateError::Io {
        path: path.display().to_string(),
        source,
    };
    let features: Vec<serde_json::Value> = trajectories
        .iter()
        .map(|traj| {
            let coords: Vec<[f64; 2]> = traj.positions.iter().map(|&(lon, lat)| [lon, lat]).collect();
            serde_json::json!({
                "type": "Feature",
                "properties": {
                    "drifter_id": traj.drifter_id,
                    "t_start": timebase::epoch_to_iso(*traj.times.first().unwrap_or(&0.0)),
                    "samples": traj.len(),
                },
                "geometry": { "type": "LineString", "coordinates": coords }
            })
        })
        .collect();
    let doc = serde_json::json!({
        "type": "FeatureCollection",
        "properties": { "provenance": provenance.unwrap_or("") },
        "features": features
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap()).map_err(io_err)
}
