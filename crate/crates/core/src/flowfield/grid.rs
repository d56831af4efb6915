//! Uniform lon/lat/time velocity grids with land masking.
//!
//! Interpolation is Catmull-Rom cubic in longitude and latitude and linear in
//! time: cubic space follows the smoothness of mesoscale fields, linear time
//! avoids overshoot across the long (daily) gaps between snapshots. Spatial
//! derivatives are the analytic derivatives of the interpolant, so the
//! material derivative carries no extra finite-difference error.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FieldError, Vec2};
use crate::geo;

/// Uniform grid layout: `nlon * nlat * nt` cells, longitude fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lon0: f64,
    pub lat0: f64,
    pub dlon: f64,
    pub dlat: f64,
    pub nlon: usize,
    pub nlat: usize,
    /// Epoch seconds of the first snapshot.
    pub t0: f64,
    /// Snapshot spacing in seconds.
    #[serde(rename = "dt")]
    pub dt_grid: f64,
    pub nt: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), FieldError> {
        for (axis, spacing) in [("lon", self.dlon), ("lat", self.dlat), ("time", self.dt_grid)] {
            if !(spacing > 0.0) {
                return Err(FieldError::NonMonotoneAxis { axis: match axis {
                    "lon" => "lon",
                    "lat" => "lat",
                    _ => "time",
                }, spacing });
            }
        }
        if self.nlon < 4 || self.nlat < 4 {
            return Err(FieldError::MalformedHeader(format!(
                "grid needs at least 4x4 spatial nodes, got {}x{}",
                self.nlon, self.nlat
            )));
        }
        if self.nt < 2 {
            return Err(FieldError::MalformedHeader(format!(
                "grid needs at least 2 time levels, got {}",
                self.nt
            )));
        }
        let lat_max = self.lat0 + (self.nlat - 1) as f64 * self.dlat;
        if self.lat0 <= -90.0 || lat_max >= 90.0 {
            return Err(FieldError::MalformedHeader(format!(
                "latitudes [{}, {lat_max}] must lie inside (-90, 90)",
                self.lat0
            )));
        }
        if !(self.lon0.is_finite() && self.t0.is_finite()) {
            return Err(FieldError::MalformedHeader("non-finite origin".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nlon * self.nlat * self.nt
    }

    pub fn lon_max(&self) -> f64 {
        self.lon0 + (self.nlon - 1) as f64 * self.dlon
    }

    pub fn lat_max(&self) -> f64 {
        self.lat0 + (self.nlat - 1) as f64 * self.dlat
    }

    pub fn t_max(&self) -> f64 {
        self.t0 + (self.nt - 1) as f64 * self.dt_grid
    }

    fn index(&self, it: usize, ilat: usize, ilon: usize) -> usize {
        (it * self.nlat + ilat) * self.nlon + ilon
    }
}

/// Interpolated value with its derivatives at a query point.
#[derive(Debug, Clone, Copy)]
pub struct FieldSample {
    pub v: Vec2,
    /// Time derivative of the interpolant (per second).
    pub dv_dt: Vec2,
    /// Longitude derivative (per degree).
    pub dv_dlon: Vec2,
    /// Latitude derivative (per degree).
    pub dv_dlat: Vec2,
    /// True when masked support cells were replaced by the nearest-neighbor
    /// fallback.
    pub degraded: bool,
}

/// Gridded 2D velocity snapshots with a validity mask.
///
/// Immutable after construction; sampling is read-only and safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct GriddedVelocityField {
    spec: GridSpec,
    u: Vec<f64>,
    v: Vec<f64>,
    mask: Vec<bool>, // true = valid
    /// Nearest-unmasked copies of u/v, present only when the field has
    /// masked cells.
    fill_u: Option<Vec<f64>>,
    fill_v: Option<Vec<f64>>,
    fallback_enabled: bool,
}

impl GriddedVelocityField {
    /// Build from component arrays (longitude fastest, then latitude, then
    /// time). Non-finite cells become masked.
    pub fn from_components(spec: GridSpec, u: Vec<f64>, v: Vec<f64>) -> Result<Self, FieldError> {
        spec.validate()?;
        let n = spec.cells();
        if u.len() != n || v.len() != n {
            return Err(FieldError::SizeMismatch {
                variable: "u/v".into(),
                expected: n,
                problem: format!("got {} and {} values", u.len(), v.len()),
            });
        }
        let mask: Vec<bool> = u
            .iter()
            .zip(&v)
            .map(|(a, b)| a.is_finite() && b.is_finite())
            .collect();
        let any_masked = mask.iter().any(|m| !m);
        let (fill_u, fill_v) = if any_masked {
            let fu = nearest_fill(&spec, &u, &mask);
            let fv = nearest_fill(&spec, &v, &mask);
            (Some(fu), Some(fv))
        } else {
            (None, None)
        };
        Ok(GriddedVelocityField {
            spec,
            u,
            v,
            mask,
            fill_u,
            fill_v,
            fallback_enabled: false,
        })
    }

    /// Sample an analytic function onto the grid nodes.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64, f64) -> Vec2) -> Result<Self, FieldError> {
        spec.validate()?;
        let n = spec.cells();
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        for it in 0..spec.nt {
            let t = spec.t0 + it as f64 * spec.dt_grid;
            for ilat in 0..spec.nlat {
                let lat = spec.lat0 + ilat as f64 * spec.dlat;
                for ilon in 0..spec.nlon {
                    let lon = spec.lon0 + ilon as f64 * spec.dlon;
                    let w = f(lon, lat, t);
                    let idx = spec.index(it, ilat, ilon);
                    u[idx] = w.x;
                    v[idx] = w.y;
                }
            }
        }
        Self::from_components(spec, u, v)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Enable or disable nearest-unmasked replacement of masked support cells.
    pub fn set_masked_fallback(&mut self, enabled: bool) {
        self.fallback_enabled = enabled;
    }

    pub fn is_masked(&self, it: usize, ilat: usize, ilon: usize) -> bool {
        !self.mask[self.spec.index(it, ilat, ilon)]
    }

    pub fn unmasked_cells(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Stored value at a grid node (NaN components where masked).
    pub fn node_value(&self, it: usize, ilat: usize, ilon: usize) -> Vec2 {
        let idx = self.spec.index(it, ilat, ilon);
        Vec2::new(self.u[idx], self.v[idx])
    }

    pub fn contains(&self, lon: f64, lat: f64, t: f64) -> bool {
        lon >= self.spec.lon0
            && lon <= self.spec.lon_max()
            && lat >= self.spec.lat0
            && lat <= self.spec.lat_max()
            && t >= self.spec.t0
            && t <= self.spec.t_max()
    }

    /// Interpolated velocity at (lon, lat, t).
    pub fn sample_velocity(&self, lon: f64, lat: f64, t: f64) -> Result<Vec2, FieldError> {
        Ok(self.sample_full(lon, lat, t, false)?.v)
    }

    /// Interpolated velocity plus a flag for masked-support fallback use.
    pub fn sample_velocity_flagged(&self, lon: f64, lat: f64, t: f64) -> Result<(Vec2, bool), FieldError> {
        let s = self.sample_full(lon, lat, t, false)?;
        Ok((s.v, s.degraded))
    }

    /// Material derivative du/dt + (u . grad)u of the interpolated field, in
    /// m/s^2. Spatial gradients are the analytic derivatives of the
    /// interpolant converted to per-meter with the local equirectangular
    /// metric. Requires one cell of margin from the spatial grid edge.
    pub fn material_derivative(&self, lon: f64, lat: f64, t: f64) -> Result<Vec2, FieldError> {
        let s = self.sample_full(lon, lat, t, true)?;
        Ok(material_derivative_from_sample(&s, lat))
    }

    /// Full interpolation bundle. With `require_margin` the spatial support
    /// stencil must not clamp at the grid edge (needed whenever derivatives
    /// are consumed).
    pub fn sample_full(
        &self,
        lon: f64,
        lat: f64,
        t: f64,
        require_margin: bool,
    ) -> Result<FieldSample, FieldError> {
        if !(lon.is_finite() && lat.is_finite() && t.is_finite()) {
            return Err(FieldError::NonFinite("query point"));
        }
        if !self.contains(lon, lat, t) {
            return Err(FieldError::OutOfDomain { lon, lat, t });
        }
        let lx = locate(lon, self.spec.lon0, self.spec.dlon, self.spec.nlon);
        let ly = locate(lat, self.spec.lat0, self.spec.dlat, self.spec.nlat);
        if require_margin && (lx.clamped || ly.clamped) {
            return Err(FieldError::InsufficientMargin { lon, lat });
        }
        // Time interval and linear weight.
        let st = (t - self.spec.t0) / self.spec.dt_grid;
        let it = (st.floor() as usize).min(self.spec.nt - 2);
        let alpha = st - it as f64;

        let wx = catmull_rom_weights(lx.frac);
        let wy = catmull_rom_weights(ly.frac);
        let dwx = catmull_rom_dweights(lx.frac);
        let dwy = catmull_rom_dweights(ly.frac);

        let mut degraded = false;
        let mut level = |itime: usize| -> Result<(Vec2, Vec2, Vec2), FieldError> {
            let mut val = Vec2::ZERO;
            let mut dlon = Vec2::ZERO;
            let mut dlat = Vec2::ZERO;
            for (j, &ilat) in ly.idx.iter().enumerate() {
                for (i, &ilon) in lx.idx.iter().enumerate() {
                    let idx = self.spec.index(itime, ilat, ilon);
                    let p = if self.mask[idx] {
                        Vec2::new(self.u[idx], self.v[idx])
                    } else if self.fallback_enabled {
                        let (fu, fv) = (self.fill_u.as_ref().unwrap(), self.fill_v.as_ref().unwrap());
                        if !fu[idx].is_finite() {
                            // Whole time slice masked; fallback has nothing to offer.
                            return Err(FieldError::MaskedSupport { lon, lat });
                        }
                        degraded = true;
                        Vec2::new(fu[idx], fv[idx])
                    } else {
                        return Err(FieldError::MaskedSupport { lon, lat });
                    };
                    val = val + p * (wy[j] * wx[i]);
                    dlon = dlon + p * (wy[j] * dwx[i]);
                    dlat = dlat + p * (dwy[j] * wx[i]);
                }
            }
            Ok((val, dlon * (1.0 / self.spec.dlon), dlat * (1.0 / self.spec.dlat)))
        };

        let (v0, dlon0, dlat0) = level(it)?;
        let (v1, dlon1, dlat1) = level(it + 1)?;
        Ok(FieldSample {
            v: v0 * (1.0 - alpha) + v1 * alpha,
            dv_dt: (v1 - v0) * (1.0 / self.spec.dt_grid),
            dv_dlon: dlon0 * (1.0 - alpha) + dlon1 * alpha,
            dv_dlat: dlat0 * (1.0 - alpha) + dlat1 * alpha,
            degraded,
        })
    }
}

/// Assemble du/dt + (u . grad)u from an interpolation bundle.
pub(crate) fn material_derivative_from_sample(s: &FieldSample, lat: f64) -> Vec2 {
    let dv_dx = s.dv_dlon * (1.0 / geo::meters_per_deg_lon(lat));
    let dv_dy = s.dv_dlat * (1.0 / geo::meters_per_deg_lat());
    s.dv_dt + dv_dx * s.v.x + dv_dy * s.v.y
}

struct AxisLocation {
    frac: f64,
    idx: [usize; 4],
    clamped: bool,
}

/// Locate the interpolation cell along one axis and build the (possibly
/// edge-clamped) 4-point support stencil. Caller guarantees the coordinate
/// is inside [x0, x0 + (n-1) dx].
fn locate(x: f64, x0: f64, dx: f64, n: usize) -> AxisLocation {
    let s = (x - x0) / dx;
    let i = (s.floor() as usize).min(n - 2);
    let frac = s - i as f64;
    let lo = i.checked_sub(1);
    let hi = i + 2;
    AxisLocation {
        frac,
        idx: [lo.unwrap_or(0), i, i + 1, hi.min(n - 1)],
        clamped: lo.is_none() || hi > n - 1,
    }
}

fn catmull_rom_weights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        0.5 * (-u3 + 2.0 * u2 - u),
        0.5 * (3.0 * u3 - 5.0 * u2 + 2.0),
        0.5 * (-3.0 * u3 + 4.0 * u2 + u),
        0.5 * (u3 - u2),
    ]
}

fn catmull_rom_dweights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    [
        0.5 * (-3.0 * u2 + 4.0 * u - 1.0),
        0.5 * (9.0 * u2 - 10.0 * u),
        0.5 * (-9.0 * u2 + 8.0 * u + 1.0),
        0.5 * (3.0 * u2 - 2.0 * u),
    ]
}

/// Per time slice, replace masked cells by the value of the nearest unmasked
/// cell (multi-source BFS in grid index space, 4-neighborhood, deterministic
/// visiting order). Slices with no unmasked cell stay NaN.
fn nearest_fill(spec: &GridSpec, values: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut out = vec![f64::NAN; values.len()];
    let (nlon, nlat) = (spec.nlon, spec.nlat);
    for it in 0..spec.nt {
        let base = it * nlat * nlon;
        let mut queue = std::collections::VecDeque::new();
        let mut seen = vec![false; nlat * nlon];
        for ilat in 0..nlat {
            for ilon in 0..nlon {
                let idx = base + ilat * nlon + ilon;
                if mask[idx] {
                    out[idx] = values[idx];
                    seen[ilat * nlon + ilon] = true;
                    queue.push_back((ilat, ilon));
                }
            }
        }
        while let Some((ilat, ilon)) = queue.pop_front() {
            let here = out[base + ilat * nlon + ilon];
            let mut push = |jlat: usize, jlon: usize, q: &mut std::collections::VecDeque<(usize, usize)>| {
                let flat = jlat * nlon + jlon;
                if !seen[flat] {
                    seen[flat] = true;
                    out[base + flat] = here;
                    q.push_back((jlat, jlon));
                }
            };
            if ilat > 0 {
                push(ilat - 1, ilon, &mut queue);
            }
            if ilat + 1 < nlat {
                push(ilat + 1, ilon, &mut queue);
            }
            if ilon > 0 {
                push(ilat, ilon - 1, &mut queue);
            }
            if ilon + 1 < nlon {
                push(ilat, ilon + 1, &mut queue);
            }
        }
    }
    out
}

// ------------------------------------------------------------------
// File format: JSON header + one CSV per variable
// ------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    format: String,
    grid: GridSpec,
    variables: Vec<VariableEntry>,
    fill_value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct VariableEntry {
    name: String,
    units: String,
    file: String,
}

const FIELD_FORMAT: &str = "gridded-velocity-v1";
const CSV_COLUMNS: [&str; 4] = ["time_index", "lat_index", "lon_index", "value"];

/// Load a gridded field from its JSON header; variable CSVs are resolved
/// relative to the header's directory.
pub fn load_field(header_path: impl AsRef<Path>) -> Result<GriddedVelocityField, FieldError> {
    let header_path = header_path.as_ref();
    let text = std::fs::read_to_string(header_path).map_err(|source| FieldError::Io {
        path: header_path.display().to_string(),
        source,
    })?;
    let header: FieldHeader =
        serde_json::from_str(&text).map_err(|e| FieldError::MalformedHeader(e.to_string()))?;
    if header.format != FIELD_FORMAT {
        return Err(FieldError::MalformedHeader(format!(
            "unknown format tag {:?}",
            header.format
        )));
    }
    header.grid.validate()?;
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let mut arrays: Vec<Vec<f64>> = Vec::new();
    for want in ["u", "v"] {
        let entry = header
            .variables
            .iter()
            .find(|v| v.name == want)
            .ok_or_else(|| FieldError::MalformedHeader(format!("missing variable {want:?}")))?;
        arrays.push(read_variable_csv(
            &dir.join(&entry.file),
            &header.grid,
            header.fill_value,
            want,
        )?);
    }
    let v = arrays.pop().unwrap();
    let u = arrays.pop().unwrap();
    GriddedVelocityField::from_components(header.grid, u, v)
}

fn read_variable_csv(
    path: &Path,
    grid: &GridSpec,
    fill_value: f64,
    variable: &str,
) -> Result<Vec<f64>, FieldError> {
    let expected = grid.cells();
    let mismatch = |problem: String| FieldError::SizeMismatch {
        variable: variable.to_string(),
        expected,
        problem,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FieldError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
    {
        let headers = reader
            .headers()
            .map_err(|e| FieldError::MalformedHeader(e.to_string()))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_COLUMNS {
            return Err(FieldError::MalformedHeader(format!(
                "{variable} csv columns {got:?} != {CSV_COLUMNS:?}"
            )));
        }
    }
    let mut values = vec![f64::NAN; expected];
    let mut seen = vec![false; expected];
    let mut count = 0usize;
    for row in reader.records() {
        let row = row.map_err(|e| mismatch(format!("unreadable row: {e}")))?;
        if row.len() != 4 {
            return Err(mismatch(format!("row with {} fields", row.len())));
        }
        let parse_idx = |k: usize, name: &str, bound: usize| -> Result<usize, FieldError> {
            let raw: i64 = row[k]
                .parse()
                .map_err(|_| mismatch(format!("bad {name} {:?}", &row[k])))?;
            if raw < 0 || raw as usize >= bound {
                return Err(mismatch(format!("{name} {raw} out of range 0..{bound}")));
            }
            Ok(raw as usize)
        };
        let it = parse_idx(0, "time_index", grid.nt)?;
        let ilat = parse_idx(1, "lat_index", grid.nlat)?;
        let ilon = parse_idx(2, "lon_index", grid.nlon)?;
        let value: f64 = row[3]
            .parse()
            .map_err(|_| mismatch(format!("bad value {:?}", &row[3])))?;
        let idx = grid.index(it, ilat, ilon);
        if seen[idx] {
            return Err(mismatch(format!("duplicate cell ({it}, {ilat}, {ilon})")));
        }
        seen[idx] = true;
        values[idx] = if value == fill_value { f64::NAN } else { value };
        count += 1;
    }
    if count != expected {
        return Err(mismatch(format!("got {count} cells")));
    }
    Ok(values)
}

/// Write a field as `<basename>.json` plus `<basename>_u.csv` /
/// `<basename>_v.csv` in `dir`. Masked cells are written as the fill value.
pub fn save_field(
    field: &GriddedVelocityField,
    dir: impl AsRef<Path>,
    basename: &str,
    units: &str,
) -> Result<std::path::PathBuf, FieldError> {
    let dir = dir.as_ref();
    let io_err = |path: &Path, source: std::io::Error| FieldError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let fill_value = -9999.0;
    let header = FieldHeader {
        format: FIELD_FORMAT.to_string(),
        grid: field.spec.clone(),
        variables: ["u", "v"]
            .iter()
            .map(|name| VariableEntry {
                name: name.to_string(),
                units: units.to_string(),
                file: format!("{basename}_{name}.csv"),
            })
            .collect(),
        fill_value,
    };
    let header_path = dir.join(format!("{basename}.json"));
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| FieldError::MalformedHeader(e.to_string()))?;
    std::fs::write(&header_path, json).map_err(|e| io_err(&header_path, e))?;

    for (name, data) in [("u", &field.u), ("v", &field.v)] {
        let path = dir.join(format!("{basename}_{name}.csv"));
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(&path).map_err(|e| io_err(&path, e))?,
        );
        writeln!(out, "{}", CSV_COLUMNS.join(",")).map_err(|e| io_err(&path, e))?;
        for it in 0..field.spec.nt {
            for ilat in 0..field.spec.nlat {
                for ilon in 0..field.spec.nlon {
                    let idx = field.spec.index(it, ilat, ilon);
                    let value = if field.mask[idx] { data[idx] } else { fill_value };
                    writeln!(out, "{it},{ilat},{ilon},{value}").map_err(|e| io_err(&path, e))?;
                }
            }
        }
        out.flush().map_err(|e| io_err(&path, e))?;
    }
    Ok(header_path)
}
