//! Blended-model contracts: with a zero network the blended velocity model
//! reproduces the deterministic reduced model exactly, in both single-step
//! and multi-step modes.

use driftblend::dynamics::{DrifterParams, GeoFlow, ReducedDrifterModel};
use driftblend::flowfield::{GridSpec, GriddedVelocityField};
use driftblend::integrate::{integrate_trajectory, SampleStatus};
use driftblend::learn::{
    forecast_blended, predict_single_step, FeatureVector, LstmModel, LstmState, Normalization,
};
use driftblend::Vec2;

fn gyre_spec() -> GridSpec {
    GridSpec {
        lon0: -90.0,
        lat0: 24.0,
        dlon: 0.25,
        dlat: 0.25,
        nlon: 25,
        nlat: 17,
        t0: 0.0,
        dt_grid: 86_400.0,
        nt: 4,
    }
}

fn smooth_current() -> GriddedVelocityField {
    GriddedVelocityField::from_fn(gyre_spec(), |lon, lat, t| {
        let x = (lon + 90.0) / 6.0 * std::f64::consts::PI;
        let y = (lat - 24.0) / 4.0 * std::f64::consts::PI;
        let s = 1.0 + 0.05 * (t / 86_400.0);
        Vec2::new(-0.3 * x.sin() * y.cos() * s, 0.3 * x.cos() * y.sin() * s)
    })
    .unwrap()
}

fn wind_field() -> GriddedVelocityField {
    GriddedVelocityField::from_fn(gyre_spec(), |lon, lat, _| {
        Vec2::new(4.0 + 0.3 * (lon + 88.0), -2.0 + 0.2 * (lat - 26.0))
    })
    .unwrap()
}

fn params() -> DrifterParams {
    DrifterParams::from_groups(0.66, 0.66 * 0.05, 1.02, 1.2e-3, 0.0, 2.0e4, 0.5).unwrap()
}

#[test]
fn zero_network_multi_step_matches_deterministic_exactly() {
    let current = smooth_current();
    let wind = wind_field();
    let det = ReducedDrifterModel::new(GeoFlow::new(&current, Some(&wind)), params());
    let zero_net = LstmModel::zeros(16, Normalization::identity());
    let start = (-87.0, 26.0);
    let plain = integrate_trajectory(&det, "d", start, 3600.0, 96, 900.0);
    let blended_none = forecast_blended(&det, None, "d", start, 3600.0, 96, 900.0);
    let blended_zero = forecast_blended(&det, Some(&zero_net), "d", start, 3600.0, 96, 900.0);
    assert!(plain.status.iter().all(|s| *s == SampleStatus::Ok));
    for k in 0..plain.len() {
        assert_eq!(plain.positions[k], blended_none.positions[k], "step {k}");
        assert_eq!(plain.positions[k], blended_zero.positions[k], "step {k}");
        assert_eq!(plain.velocities[k], blended_zero.velocities[k], "step {k}");
    }
}

#[test]
fn zero_network_single_step_matches_deterministic_exactly() {
    let current = smooth_current();
    let wind = wind_field();
    let det = ReducedDrifterModel::new(GeoFlow::new(&current, Some(&wind)), params());
    // a short synthetic "real" track to predict along
    let track = integrate_trajectory(&det, "d", (-86.5, 26.5), 0.0, 48, 900.0);
    let zero_net = LstmModel::zeros(8, Normalization::identity());
    let no_model = predict_single_step(&track, &det, None);
    let with_zero = predict_single_step(&track, &det, Some(&zero_net));
    for (a, b) in no_model.iter().zip(&with_zero) {
        assert!(!a.gap && !b.gap);
        assert_eq!(a.v_det, b.v_det);
        assert_eq!(a.v_blend, b.v_blend, "zero net must not perturb the blend");
        assert_eq!(a.v_det, a.v_blend);
    }
}

#[test]
fn blended_velocity_adds_network_output() {
    let current = smooth_current();
    let wind = wind_field();
    let det = ReducedDrifterModel::new(GeoFlow::new(&current, Some(&wind)), params());
    // force a known constant correction through the normalization offsets
    let mut norm = Normalization::identity();
    norm.target_mean = [0.013, -0.007];
    let constant_net = LstmModel::zeros(8, norm);
    let mut state = LstmState::zeros(8);
    let (lon, lat, t) = (-87.3, 26.2, 7200.0);
    let blended =
        driftblend::learn::blended_velocity(&det, &constant_net, &mut state, lon, lat, t).unwrap();
    let (v_det, _) = det.velocity_bundle(lon, lat, t).unwrap();
    assert!((blended - v_det - Vec2::new(0.013, -0.007)).norm() < 1e-15);
}

#[test]
fn feature_vectors_follow_flow_bundle() {
    let current = smooth_current();
    let wind = wind_field();
    let flow = GeoFlow::new(&current, Some(&wind));
    let det = ReducedDrifterModel::new(GeoFlow::new(&current, Some(&wind)), params());
    let track = integrate_trajectory(&det, "d", (-86.8, 26.3), 0.0, 10, 900.0);
    let feats = driftblend::learn::build_features(&track, &det);
    assert_eq!(feats.len(), track.len());
    for (k, f) in feats.iter().enumerate() {
        let f = f.as_ref().expect("no gaps on this track");
        let b = flow
            .bundle(track.positions[k].0, track.positions[k].1, track.times[k])
            .unwrap();
        assert_eq!(FeatureVector { u: b.u, u_e: b.u_e, du_dt: b.du_dt }, *f);
        // features must never contain position information
        let ch = f.channels();
        assert!(ch.iter().all(|c| c.abs() < 50.0), "no coordinates in {ch:?}");
    }
}

#[test]
fn uniform_steady_current_gives_constant_features() {
    let current =
        GriddedVelocityField::from_fn(gyre_spec(), |_, _, _| Vec2::new(0.31, -0.12)).unwrap();
    let det = ReducedDrifterModel::new(GeoFlow::new(&current, None), params());
    let track = integrate_trajectory(&det, "d", (-87.0, 26.0), 0.0, 8, 900.0);
    let feats = driftblend::learn::build_features(&track, &det);
    for f in feats.iter().map(|f| f.as_ref().unwrap()) {
        assert!((f.u - Vec2::new(0.31, -0.12)).norm() < 1e-12);
        assert_eq!(f.u_e, Vec2::ZERO);
        assert!(f.du_dt.norm() < 1e-15);
    }
}

#[test]
fn gap_resets_recurrent_history() {
    // Track wandering outside the grid: out-of-coverage samples are gaps.
    let current = smooth_current();
    let det = ReducedDrifterModel::new(GeoFlow::new(&current, None), params());
    let mut track = integrate_trajectory(&det, "d", (-87.0, 26.0), 0.0, 20, 900.0);
    // fake a mid-track excursion out of the domain
    for k in 8..12 {
        track.positions[k] = (-120.0, 26.0);
    }
    let net = LstmModel::init(4, 3, Normalization::identity());
    let rows = predict_single_step(&track, &det, Some(&net));
    assert!(rows[9].gap && rows[9].v_det.x.is_nan());
    assert!(!rows[14].gap);
    // after the gap the prediction equals a fresh-state run over the tail
    let tail: Vec<_> = (12..=20).map(|k| k).collect();
    let mut state = LstmState::zeros(4);
    for (i, &k) in tail.iter().enumerate() {
        let (v_det, b) = det
            .velocity_bundle(track.positions[k].0, track.positions[k].1, track.times[k])
            .unwrap();
        let xi = FeatureVector { u: b.u, u_e: b.u_e, du_dt: b.du_dt };
        let expect = v_det + net.step(&mut state, &xi);
        assert!((rows[k].v_blend - expect).norm() < 1e-15, "tail step {i}");
    }
}
