//! Gridded-field interpolation and file-format tests: node reproduction,
//! exactness on constants/linears, material-derivative oracles against
//! closed forms, mask semantics and loader error paths.

use std::io::Write;

use driftblend::flowfield::{
    load_field, save_field, AnalyticField, FieldError, GridSpec, GriddedVelocityField, Vec2,
};
use driftblend::geo;

fn small_spec() -> GridSpec {
    GridSpec {
        lon0: -90.0,
        lat0: 25.0,
        dlon: 0.25,
        dlat: 0.25,
        nlon: 12,
        nlat: 10,
        t0: 0.0,
        dt_grid: 86_400.0,
        nt: 3,
    }
}

#[test]
fn constant_field_reproduced_everywhere() {
    let c = Vec2::new(0.3, -0.1);
    let field = GriddedVelocityField::from_fn(small_spec(), |_, _, _| c).unwrap();
    for (lon, lat, t) in [
        (-89.0, 26.0, 40_000.0),
        (-88.13, 25.77, 0.0),
        (-90.0, 25.0, 172_800.0),
        (-87.25, 27.25, 86_400.0),
    ] {
        let v = field.sample_velocity(lon, lat, t).unwrap();
        assert!((v - c).norm() < 1e-12, "{v:?} at ({lon}, {lat}, {t})");
    }
}

#[test]
fn linear_field_is_exact_off_nodes() {
    // Interpolation must reproduce a + b*lon + c*lat to near machine
    // precision at interior points.
    let f = |lon: f64, lat: f64| Vec2::new(0.02 * lon + 0.005 * lat, -0.01 * lon + 0.03 * lat);
    let field = GriddedVelocityField::from_fn(small_spec(), |lon, lat, _| f(lon, lat)).unwrap();
    for (lon, lat) in [(-89.07, 26.13), (-88.511, 25.613), (-88.0, 26.62)] {
        let v = field.sample_velocity(lon, lat, 43_200.0).unwrap();
        let want = f(lon, lat);
        assert!((v - want).norm() <= 1e-10, "{v:?} vs {want:?}");
    }
}

#[test]
fn node_queries_return_stored_values() {
    let field = GriddedVelocityField::from_fn(small_spec(), |lon, lat, t| {
        Vec2::new((lon * 3.1).sin() + t / 1e6, (lat * 2.7).cos())
    })
    .unwrap();
    let spec = field.spec().clone();
    for (it, ilat, ilon) in [(0usize, 0usize, 0usize), (1, 4, 7), (2, 9, 11)] {
        let lon = spec.lon0 + ilon as f64 * spec.dlon;
        let lat = spec.lat0 + ilat as f64 * spec.dlat;
        let t = spec.t0 + it as f64 * spec.dt_grid;
        let v = field.sample_velocity(lon, lat, t).unwrap();
        let stored = field.node_value(it, ilat, ilon);
        assert!((v - stored).norm() < 1e-13);
    }
}

#[test]
fn time_interpolation_is_linear() {
    let field = GriddedVelocityField::from_fn(small_spec(), |_, _, t| {
        Vec2::new(1.0e-6 * t, 0.0)
    })
    .unwrap();
    let v = field.sample_velocity(-88.5, 26.0, 30_000.0).unwrap();
    assert!((v.x - 0.03).abs() < 1e-12);
    // d/dt of a linear-in-time uniform field
    let md = field.material_derivative(-88.5, 26.0, 30_000.0).unwrap();
    assert!((md.x - 1.0e-6).abs() < 1e-18 && md.y.abs() < 1e-18);
}

#[test]
fn steady_uniform_field_has_zero_material_derivative() {
    let field = GriddedVelocityField::from_fn(small_spec(), |_, _, _| Vec2::new(0.4, 0.2)).unwrap();
    let md = field.material_derivative(-88.5, 26.0, 50_000.0).unwrap();
    assert!(md.norm() < 1e-15, "{md:?}");
}

#[test]
fn stagnation_flow_material_derivative_matches_closed_form() {
    // u = (a x, -a y) about a center on the equator; (u.grad)u = a^2 (x, y).
    let a = 1.0e-5;
    let center = (0.0, 0.0);
    let m_lat = geo::meters_per_deg_lat();
    let spec = GridSpec {
        lon0: -0.4,
        lat0: -0.4,
        dlon: 0.02,
        dlat: 0.02,
        nlon: 41,
        nlat: 41,
        t0: 0.0,
        dt_grid: 3600.0,
        nt: 2,
    };
    let field = GriddedVelocityField::from_fn(spec, |lon, lat, _| {
        let x = (lon - center.0) * geo::meters_per_deg_lon(lat);
        let y = (lat - center.1) * m_lat;
        Vec2::new(a * x, -a * y)
    })
    .unwrap();
    let (xq, yq) = (1.0e4, 1.0e4);
    let lon = xq / geo::meters_per_deg_lon(0.0);
    let lat = yq / m_lat;
    let md = field.material_derivative(lon, lat, 1800.0).unwrap();
    let want = Vec2::new(a * a * xq, a * a * yq);
    assert!(
        (md - want).norm() < 0.02 * want.norm(),
        "{md:?} vs {want:?}"
    );
}

#[test]
fn gridded_material_derivative_converges_to_analytic() {
    // Sampling a smooth analytic field on finer and finer grids: the
    // interpolant derivative error should shrink at roughly second order.
    let gyre = AnalyticField::DoubleGyre {
        amplitude: 0.3,
        eps_g: 0.0,
        omega: 0.0,
        scale: 2.0e5,
    };
    let m_lat = geo::meters_per_deg_lat();
    let chart = |lon: f64, lat: f64| Vec2::new(lon * geo::meters_per_deg_lon(0.0), lat * m_lat);
    // Max error over a spread of interior points; a single query would be
    // contaminated by superconvergence when it lands near a grid node.
    let queries: Vec<(f64, f64)> = (0..6)
        .flat_map(|i| (0..3).map(move |j| (0.63 + 0.41 * i as f64, 0.37 + 0.33 * j as f64)))
        .collect();
    let errs: Vec<f64> = [0.125, 0.0625, 0.03125]
        .iter()
        .map(|&dl| {
            let n = (4.0 / dl) as usize + 1;
            let spec = GridSpec {
                lon0: -0.25,
                lat0: -0.25,
                dlon: dl,
                dlat: dl,
                nlon: n,
                nlat: n,
                t0: 0.0,
                dt_grid: 3600.0,
                nt: 2,
            };
            let field =
                GriddedVelocityField::from_fn(spec, |lon, lat, _| gyre.velocity(chart(lon, lat), 0.0))
                    .unwrap();
            queries
                .iter()
                .map(|&(qlon, qlat)| {
                    let md = field.material_derivative(qlon, qlat, 0.0).unwrap();
                    let want = gyre.material_derivative(chart(qlon, qlat), 0.0);
                    (md - want).norm()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let order1 = (errs[0] / errs[1]).log2();
    let order2 = (errs[1] / errs[2]).log2();
    assert!(
        order1 > 1.5 && order2 > 1.5,
        "errors {errs:?} orders {order1:.2}/{order2:.2}"
    );
}

#[test]
fn out_of_domain_and_margin_errors() {
    let field = GriddedVelocityField::from_fn(small_spec(), |_, _, _| Vec2::ZERO).unwrap();
    assert!(matches!(
        field.sample_velocity(-91.0, 26.0, 0.0),
        Err(FieldError::OutOfDomain { .. })
    ));
    assert!(matches!(
        field.sample_velocity(-88.0, 26.0, -1.0),
        Err(FieldError::OutOfDomain { .. })
    ));
    // boundary cell is fine for sampling but not for derivatives
    assert!(field.sample_velocity(-89.9, 25.1, 0.0).is_ok());
    assert!(matches!(
        field.material_derivative(-89.9, 25.1, 0.0),
        Err(FieldError::InsufficientMargin { .. })
    ));
}

#[test]
fn masked_support_errors_and_fallback() {
    let spec = small_spec();
    let mut field = GriddedVelocityField::from_fn(spec, |lon, lat, _| {
        if (lon + 88.5).abs() < 0.01 && (lat - 26.0).abs() < 0.01 {
            Vec2::new(f64::NAN, f64::NAN)
        } else {
            Vec2::new(0.25, -0.15)
        }
    })
    .unwrap();
    // all 3 time levels of that cell are masked
    assert_eq!(field.unmasked_cells(), field.spec().cells() - 3);
    assert!(matches!(
        field.sample_velocity(-88.55, 26.05, 40_000.0),
        Err(FieldError::MaskedSupport { .. })
    ));
    // far from the hole everything works
    assert!(field.sample_velocity(-89.5, 25.3, 40_000.0).is_ok());
    // fallback fills from the nearest unmasked neighbor and flags the sample
    field.set_masked_fallback(true);
    let (v, degraded) = field.sample_velocity_flagged(-88.55, 26.05, 40_000.0).unwrap();
    assert!(degraded);
    assert!((v - Vec2::new(0.25, -0.15)).norm() < 1e-12);
    let (_, clean) = field.sample_velocity_flagged(-89.5, 25.3, 40_000.0).unwrap();
    assert!(!clean);
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let field = GriddedVelocityField::from_fn(small_spec(), |lon, lat, t| {
        Vec2::new((lon + lat).sin() + t / 1e6, (lon - lat).cos())
    })
    .unwrap();
    let header = save_field(&field, dir.path(), "current", "m s-1").unwrap();
    let loaded = load_field(&header).unwrap();
    assert_eq!(loaded.spec(), field.spec());
    for (it, ilat, ilon) in [(0usize, 3usize, 5usize), (2, 9, 11), (1, 0, 0)] {
        let a = field.node_value(it, ilat, ilon);
        let b = loaded.node_value(it, ilat, ilon);
        assert_eq!(a, b, "node ({it}, {ilat}, {ilon})");
    }
}

#[test]
fn loader_masks_fill_and_nan_cells() {
    let dir = tempfile::tempdir().unwrap();
    let field = GriddedVelocityField::from_fn(small_spec(), |_, _, _| Vec2::ZERO).unwrap();
    let header = save_field(&field, dir.path(), "f", "m s-1").unwrap();
    // poke one NaN cell into u
    let upath = dir.path().join("f_u.csv");
    let text = std::fs::read_to_string(&upath).unwrap();
    let patched = text.replacen("0,0,0,0", "0,0,0,NaN", 1);
    assert_ne!(text, patched);
    std::fs::write(&upath, patched).unwrap();
    let loaded = load_field(&header).unwrap();
    assert_eq!(loaded.unmasked_cells(), loaded.spec().cells() - 1);
    assert!(loaded.is_masked(0, 0, 0));
}

#[test]
fn zero_field_minimal_grid() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GridSpec {
        lon0: 0.0,
        lat0: 10.0,
        dlon: 1.0,
        dlat: 1.0,
        nlon: 4,
        nlat: 4,
        t0: 0.0,
        dt_grid: 3600.0,
        nt: 2,
    };
    let field = GriddedVelocityField::from_fn(spec, |_, _, _| Vec2::ZERO).unwrap();
    let header = save_field(&field, dir.path(), "z", "m s-1").unwrap();
    let loaded = load_field(&header).unwrap();
    assert_eq!(loaded.unmasked_cells(), 32);
    assert_eq!(loaded.sample_velocity(1.5, 11.5, 1800.0).unwrap(), Vec2::ZERO);
}

#[test]
fn loader_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    let field = GriddedVelocityField::from_fn(small_spec(), |_, _, _| Vec2::ZERO).unwrap();
    let header = save_field(&field, dir.path(), "f", "m s-1").unwrap();

    // size mismatch: drop the last row of u.csv
    let upath = dir.path().join("f_u.csv");
    let text = std::fs::read_to_string(&upath).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    std::fs::write(&upath, lines.join("\n")).unwrap();
    assert!(matches!(
        load_field(&header),
        Err(FieldError::SizeMismatch { .. })
    ));
    // restore, then corrupt the header spacing: non-monotone axis
    std::fs::write(&upath, &text).unwrap();
    let htext = std::fs::read_to_string(&header).unwrap();
    std::fs::write(&header, htext.replace("\"dlon\": 0.25", "\"dlon\": -0.25")).unwrap();
    assert!(matches!(
        load_field(&header),
        Err(FieldError::NonMonotoneAxis { .. })
    ));
    // malformed header json
    std::fs::write(&header, "{ not json").unwrap();
    assert!(matches!(
        load_field(&header),
        Err(FieldError::MalformedHeader(_))
    ));
}

#[test]
fn header_declares_more_lon_columns_than_csv_has() {
    // Grid says nlon = 4 but the csv only carries lon indices 0..2.
    let dir = tempfile::tempdir().unwrap();
    let header_path = dir.path().join("g.json");
    let mut grid = serde_json::json!({
        "format": "gridded-velocity-v1",
        "grid": {"lon0": 0.0, "lat0": 10.0, "dlon": 1.0, "dlat": 1.0,
                  "nlon": 4, "nlat": 4, "t0": 0.0, "dt": 3600.0, "nt": 2},
        "variables": [
            {"name": "u", "units": "m s-1", "file": "g_u.csv"},
            {"name": "v", "units": "m s-1", "file": "g_v.csv"}
        ],
        "fill_value": -9999.0
    });
    std::fs::write(&header_path, serde_json::to_string(&mut grid).unwrap()).unwrap();
    for name in ["g_u.csv", "g_v.csv"] {
        let mut f = std::fs::File::create(dir.path().join(name)).unwrap();
        writeln!(f, "time_index,lat_index,lon_index,value").unwrap();
        for it in 0..2 {
            for ilat in 0..4 {
                for ilon in 0..3 {
                    writeln!(f, "{it},{ilat},{ilon},0.0").unwrap();
                }
            }
        }
    }
    match load_field(&header_path) {
        Err(FieldError::SizeMismatch { expected, .. }) => assert_eq!(expected, 32),
        other => panic!("expected size mismatch, got {other:?}"),
    }
}

#[test]
fn total_surface_velocity_composition() {
    use driftblend::flowfield::{ekman_velocity, total_surface_velocity};
    let current = GriddedVelocityField::from_fn(small_spec(), |_, _, _| Vec2::new(0.2, 0.0)).unwrap();
    let zero_wind = GriddedVelocityField::from_fn(small_spec(), |_, _, _| Vec2::ZERO).unwrap();
    let wind = GriddedVelocityField::from_fn(small_spec(), |_, _, _| Vec2::new(10.0, 0.0)).unwrap();

    // zero wind: just the geostrophic sample
    let v = total_surface_velocity(&current, &zero_wind, -88.5, 26.0, 40_000.0).unwrap();
    assert!((v - Vec2::new(0.2, 0.0)).norm() < 1e-12);

    // uniform wind at fixed latitude: current + closed-form Ekman velocity
    let lat = 26.0;
    let v = total_surface_velocity(&current, &wind, -88.5, lat, 40_000.0).unwrap();
    let want = Vec2::new(0.2, 0.0) + ekman_velocity(Vec2::new(10.0, 0.0), lat).unwrap();
    assert!((v - want).norm() < 1e-12);
}
