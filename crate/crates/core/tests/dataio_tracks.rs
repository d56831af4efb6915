//! Track ingestion, resampling and splitting.

use driftblend::dataio::{
    load_drifters, resample_15min, save_drifters, split, DataError, DrifterRecord, DrifterSample,
    SplitMode, SplitSpec,
};

fn sample(t: f64, lon: f64, lat: f64) -> DrifterSample {
    DrifterSample { t, lon, lat, u: 0.1, v: -0.05 }
}

fn record(id: &str, t0: f64, lon: f64, lat: f64, n: usize, dt: f64) -> DrifterRecord {
    DrifterRecord {
        drifter_id: id.to_string(),
        samples: (0..n)
            .map(|k| sample(t0 + k as f64 * dt, lon + 1e-4 * k as f64, lat))
            .collect(),
        drogue_lost_time: None,
    }
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("drifters.csv");
    let records = vec![
        record("a01", 1_453_334_400.0, -88.0, 27.0, 12, 900.0),
        record("a02", 1_453_338_000.0, -87.5, 26.5, 8, 900.0),
    ];
    save_drifters(&path, &records, Some("test set")).unwrap();
    let loaded = load_drifters(&path).unwrap();
    assert_eq!(loaded.len(), 2);
    for (a, b) in records.iter().zip(&loaded) {
        assert_eq!(a.drifter_id, b.drifter_id);
        assert_eq!(a.samples.len(), b.samples.len());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x.lon - y.lon).abs() < 1e-9 && (x.lat - y.lat).abs() < 1e-9);
            assert_eq!(x.t, y.t);
            assert_eq!(x.u, y.u);
        }
    }
}

#[test]
fn empty_file_and_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "drifter_id,iso_time,lon,lat,u_mps,v_mps,drogue\n").unwrap();
    assert!(load_drifters(&path).unwrap().is_empty());

    std::fs::write(&path, "id,time\n1,2\n").unwrap();
    assert!(matches!(
        load_drifters(&path),
        Err(DataError::MissingColumns { .. })
    ));

    std::fs::write(
        &path,
        "drifter_id,iso_time,lon,lat,u_mps,v_mps,drogue\n\
         d1,2016-01-21T00:15:00Z,-88.0,27.0,0.1,0.0,1\n\
         d1,2016-01-21T00:00:00Z,-88.0,27.0,0.1,0.0,1\n",
    )
    .unwrap();
    assert!(matches!(
        load_drifters(&path),
        Err(DataError::UnorderedTimestamps { .. })
    ));
}

#[test]
fn drogue_loss_truncates_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut body = String::from("drifter_id,iso_time,lon,lat,u_mps,v_mps,drogue\n");
    for k in 0..10 {
        let drogue = if k < 6 { 1 } else { 0 };
        body.push_str(&format!(
            "d1,2016-01-21T0{}:{:02}:00Z,-88.0,27.0,0.1,0.0,{drogue}\n",
            k / 4,
            (k % 4) * 15
        ));
    }
    std::fs::write(&path, body).unwrap();
    let records = load_drifters(&path).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].samples.len(), 6);
    let lost = records[0].drogue_lost_time.unwrap();
    assert_eq!(lost, records[0].samples.last().unwrap().t + 900.0);
}

#[test]
fn three_drifters_grouped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let records = vec![
        record("b2", 1000.0, -88.0, 27.0, 3, 900.0),
        record("a1", 0.0, -88.5, 26.0, 5, 900.0),
        record("c3", 2000.0, -87.0, 25.5, 4, 900.0),
    ];
    save_drifters(&path, &records, None).unwrap();
    let loaded = load_drifters(&path).unwrap();
    // sorted by deployment time
    let ids: Vec<&str> = loaded.iter().map(|r| r.drifter_id.as_str()).collect();
    assert_eq!(ids, ["a1", "b2", "c3"]);
    let counts: Vec<usize> = loaded.iter().map(|r| r.samples.len()).collect();
    assert_eq!(counts, [5, 3, 4]);
}

#[test]
fn resample_uniform_record_unchanged() {
    let rec = record("u", 0.0, -88.0, 27.0, 10, 900.0);
    let out = resample_15min(&rec).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].drifter_id, "u");
    assert_eq!(out[0].samples.len(), 10);
    for (a, b) in rec.samples.iter().zip(&out[0].samples) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.lon, b.lon);
        assert_eq!(a.u, b.u);
    }
}

#[test]
fn resample_inserts_midpoint() {
    let rec = DrifterRecord {
        drifter_id: "m".into(),
        samples: vec![sample(0.0, -88.0, 27.0), sample(1800.0, -87.9, 27.1)],
        drogue_lost_time: None,
    };
    let out = resample_15min(&rec).unwrap();
    assert_eq!(out[0].samples.len(), 3);
    let mid = &out[0].samples[1];
    assert_eq!(mid.t, 900.0);
    assert!((mid.lon + 87.95).abs() < 1e-12);
    assert!((mid.lat - 27.05).abs() < 1e-12);
}

#[test]
fn resample_splits_on_long_gap() {
    let mut samples: Vec<DrifterSample> = (0..5).map(|k| sample(k as f64 * 900.0, -88.0, 27.0)).collect();
    // 12 h gap, then another run
    let t2 = 4.0 * 900.0 + 12.0 * 3600.0;
    samples.extend((0..4).map(|k| sample(t2 + k as f64 * 900.0, -87.0, 26.0)));
    let rec = DrifterRecord { drifter_id: "g".into(), samples, drogue_lost_time: None };
    let out = resample_15min(&rec).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].drifter_id, "g_s0");
    assert_eq!(out[1].drifter_id, "g_s1");
    assert_eq!(out[0].samples.len(), 5);
    assert_eq!(out[1].samples.len(), 4);
}

#[test]
fn resample_rejects_single_sample() {
    let rec = DrifterRecord {
        drifter_id: "x".into(),
        samples: vec![sample(0.0, -88.0, 27.0)],
        drogue_lost_time: None,
    };
    assert!(matches!(resample_15min(&rec), Err(DataError::TooShort { .. })));
}

fn many_records(n: usize) -> Vec<DrifterRecord> {
    (0..n)
        .map(|i| {
            record(
                &format!("d{i:04}"),
                i as f64 * 60.0,
                -88.0 + (i % 50) as f64 * 0.02,
                26.0 + (i / 50) as f64 * 0.02,
                4,
                900.0,
            )
        })
        .collect()
}

#[test]
fn random_split_reference_counts() {
    // 835 records at fraction 0.2 -> 167 test / 668 training
    let records = many_records(835);
    let spec = SplitSpec { mode: SplitMode::Random, test_fraction: 0.2, rng_seed: 7, ..SplitSpec::default() };
    let out = split(&records, &spec).unwrap();
    assert_eq!(out.test.len(), 167);
    assert_eq!(out.training.len(), 668);
    // deterministic per seed
    let out2 = split(&records, &spec).unwrap();
    assert_eq!(out.test, out2.test);
    // different seed shuffles differently
    let out3 = split(&records, &SplitSpec { rng_seed: 8, ..spec }).unwrap();
    assert_ne!(out.test, out3.test);
    // partition: no overlap, full coverage
    let mut all: Vec<&String> = out.test.iter().chain(&out.training).collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 835);
}

#[test]
fn non_repetitive_split_keeps_clusters_whole() {
    // 20 clusters of 3 co-deployed drifters
    let mut records = Vec::new();
    for c in 0..20 {
        for m in 0..3 {
            records.push(record(
                &format!("c{c:02}m{m}"),
                c as f64 * 7200.0,
                -88.0 + c as f64 * 0.5 + m as f64 * 0.005, // ~500 m apart in cluster
                26.0,
                4,
                900.0,
            ));
        }
    }
    let spec = SplitSpec {
        mode: SplitMode::NonRepetitive,
        test_fraction: 0.2,
        rng_seed: 3,
        cluster_radius_km: 2.0,
        cluster_window_h: 2.0,
    };
    let out = split(&records, &spec).unwrap();
    assert_eq!(out.test.len() + out.training.len(), 60);
    assert!((out.test.len() as f64 - 12.0).abs() <= 2.0);
    // cluster atomicity: all members of a cluster land on the same side
    for c in 0..20 {
        let members: Vec<String> = (0..3).map(|m| format!("c{c:02}m{m}")).collect();
        let in_test = members.iter().filter(|id| out.test.contains(id)).count();
        assert!(in_test == 0 || in_test == 3, "cluster {c} split: {in_test}/3");
    }
    // determinism
    let out2 = split(&records, &spec).unwrap();
    assert_eq!(out.test, out2.test);
}

#[test]
fn non_repetitive_split_reports_infeasible_structure() {
    // one giant cluster of 50 and a couple of singletons: a 0.2 fraction
    // cannot be approximated
    let mut records = Vec::new();
    for m in 0..50 {
        records.push(record(&format!("g{m:02}"), 0.0, -88.0 + m as f64 * 0.001, 26.0, 4, 900.0));
    }
    records.push(record("s1", 9.0e6, -70.0, 20.0, 4, 900.0));
    records.push(record("s2", 1.8e7, -60.0, 15.0, 4, 900.0));
    let spec = SplitSpec {
        mode: SplitMode::NonRepetitive,
        test_fraction: 0.2,
        rng_seed: 1,
        cluster_radius_km: 2.0,
        cluster_window_h: 2.0,
    };
    match split(&records, &spec) {
        Err(DataError::SplitInfeasible { target, cluster_sizes, .. }) => {
            assert_eq!(target, 10);
            assert_eq!(cluster_sizes[0], 50);
        }
        other => panic!("expected infeasible split, got {other:?}"),
    }
}

#[test]
fn split_input_validation() {
    let records = many_records(1);
    assert!(matches!(
        split(&records, &SplitSpec::default()),
        Err(DataError::NotEnoughRecords(1))
    ));
    let records = many_records(10);
    assert!(matches!(
        split(&records, &SplitSpec { test_fraction: 1.0, ..SplitSpec::default() }),
        Err(DataError::BadFraction(_))
    ));
}
