//! The four pipeline commands. Every output embeds the config hash and
//! seeds; rerunning a command with the same effective config reproduces the
//! same bytes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use driftblend::dataio::{
    generate_synthetic_truth, load_drifters, read_split_manifest, resample_15min, split,
    write_split_manifest, DrifterRecord,
};
use driftblend::dynamics::{GeoFlow, ReducedDrifterModel};
use driftblend::flowfield::{load_field, GriddedVelocityField, Vec2};
use driftblend::integrate::{
    median_trajectory, seed_ensemble, write_trajectories_csv, write_trajectories_geojson,
    EnsembleSpec, SampleStatus, Trajectory,
};
use driftblend::learn::{
    forecast_blended, predict_single_step, train, LstmModel, StepPrediction,
};
use driftblend::metrics::{
    histogram, max_cross_correlation, max_mean_ms_coherence, mean_speed, nearest_trained,
    rmse_zonal, skill_score, uniform_edges, Deployment, MetricsError,
};
use driftblend::timebase;

use crate::config::RunContext;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    SingleStep,
    Forecast,
}

/// Generate the synthetic dataset described by the config's [synth] table.
pub fn cmd_synth(ctx: &RunContext) -> Result<(), CliError> {
    let synth = ctx
        .config
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no [synth] section".into()))?;
    let params = ctx.config.params.to_params()?;
    let dataset = generate_synthetic_truth(synth, &params, &ctx.config.paths.dataset_dir)?;
    log::info!(
        "wrote {} drifters and fields under {}",
        dataset.records.len(),
        ctx.config.paths.dataset_dir.display()
    );
    println!(
        "synth: {} drifters, {} samples each, dataset at {}",
        dataset.records.len(),
        dataset.records.first().map(|r| r.samples.len()).unwrap_or(0),
        ctx.config.paths.dataset_dir.display()
    );
    Ok(())
}

/// The dataset as the pipeline sees it: resampled records plus fields.
pub struct Dataset {
    pub records: Vec<DrifterRecord>,
    pub current: GriddedVelocityField,
    pub wind: Option<GriddedVelocityField>,
}

pub fn load_dataset(dataset_dir: &Path) -> Result<Dataset, CliError> {
    let drifter_path = dataset_dir.join("drifters.csv");
    let raw = load_drifters(&drifter_path)?;
    if raw.is_empty() {
        return Err(CliError::Data(format!(
            "no drifter records in {}",
            drifter_path.display()
        )));
    }
    let mut records = Vec::new();
    for rec in &raw {
        records.extend(resample_15min(rec)?);
    }
    let current = load_field(dataset_dir.join("fields").join("current.json"))?;
    let wind_path = dataset_dir.join("fields").join("wind.json");
    let wind = if wind_path.exists() {
        Some(load_field(&wind_path)?)
    } else {
        None
    };
    Ok(Dataset {
        records,
        current,
        wind,
    })
}

fn side_records<'a>(records: &'a [DrifterRecord], ids: &[String]) -> Vec<&'a DrifterRecord> {
    let wanted: std::collections::BTreeSet<&str> = ids.iter().map(|s| s.as_str()).collect();
    records
        .iter()
        .filter(|r| wanted.contains(r.drifter_id.as_str()))
        .collect()
}

/// Split, train the residual network on the training side, and write the
/// model, the split manifest and the per-epoch loss log.
pub fn cmd_train(ctx: &RunContext) -> Result<(), CliError> {
    let dataset = load_dataset(&ctx.config.paths.dataset_dir)?;
    let run_dir = &ctx.config.paths.run_dir;
    std::fs::create_dir_all(run_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", run_dir.display())))?;

    let outcome = split(&dataset.records, &ctx.config.split)?;
    write_split_manifest(run_dir.join("split.json"), &ctx.config.split, &outcome)?;

    let training = side_records(&dataset.records, &outcome.training);
    if training.is_empty() {
        return Err(CliError::Data("training side is empty".into()));
    }
    let params = ctx.config.params.to_params()?;
    let flow = GeoFlow::new(&dataset.current, dataset.wind.as_ref());
    let det = ReducedDrifterModel::new(flow, params);
    let tracks: Vec<Trajectory> = training.iter().map(|r| r.to_trajectory()).collect();
    let trained = train(&tracks, &det, &ctx.config.train, !ctx.serial)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    trained
        .model
        .save_json_with_config(run_dir.join("model.json"), Some(&ctx.config.train))
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    let loss_path = run_dir.join("training_loss.csv");
    let mut out = std::fs::File::create(&loss_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", loss_path.display())))?;
    writeln!(out, "# {}", ctx.provenance()).ok();
    writeln!(out, "epoch,loss").ok();
    for (e, l) in trained.epoch_loss.iter().enumerate() {
        writeln!(out, "{},{}", e + 1, l).ok();
    }
    println!(
        "train: {} training / {} test drifters, {} epochs, final loss {:.3e}",
        outcome.training.len(),
        outcome.test.len(),
        trained.epoch_loss.len(),
        trained.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn load_model_if_any(ctx: &RunContext, baseline_only: bool) -> Result<Option<LstmModel>, CliError> {
    if baseline_only {
        return Ok(None);
    }
    let path = ctx.config.paths.run_dir.join("model.json");
    if !path.exists() {
        return Ok(None);
    }
    LstmModel::load_json(&path)
        .map(Some)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn stable_id_seed(base: u64, id: &str) -> u64 {
    // FNV-1a over the drifter id, folded with the base seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ base
}

fn write_single_step_csv(
    path: &Path,
    rows: &[StepPrediction],
    drifter_id: &str,
    provenance: &str,
) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
    );
    let werr = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    writeln!(out, "# {provenance}").map_err(werr)?;
    writeln!(
        out,
        "drifter_id,iso_time,lon,lat,u_real,v_real,u_det,v_det,u_blend,v_blend,gap"
    )
    .map_err(werr)?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            drifter_id,
            timebase::epoch_to_iso(r.t),
            r.lon,
            r.lat,
            r.v_real.x,
            r.v_real.y,
            r.v_det.x,
            r.v_det.y,
            r.v_blend.x,
            r.v_blend.y,
            u8::from(r.gap)
        )
        .map_err(werr)?;
    }
    out.flush().map_err(werr)
}

/// Predict along the test side: single-step velocities along real tracks,
/// or free-running ensemble forecasts for both the deterministic and the
/// blended model.
pub fn cmd_predict(ctx: &RunContext, mode: PredictMode, baseline_only: bool) -> Result<(), CliError> {
    let dataset = load_dataset(&ctx.config.paths.dataset_dir)?;
    let run_dir = &ctx.config.paths.run_dir;
    let manifest = read_split_manifest(run_dir.join("split.json"))?;
    let test = side_records(&dataset.records, &manifest.test);
    if test.is_empty() {
        return Err(CliError::Data("test side is empty".into()));
    }
    let params = ctx.config.params.to_params()?;
    let model = load_model_if_any(ctx, baseline_only)?;
    let provenance = ctx.provenance();

    match mode {
        PredictMode::SingleStep => {
            let dir = run_dir.join("predictions").join("single_step");
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
            let run_one = |rec: &&DrifterRecord| -> Result<(String, Vec<StepPrediction>), CliError> {
                let det = ReducedDrifterModel::new(
                    GeoFlow::new(&dataset.current, dataset.wind.as_ref()),
                    params.clone(),
                );
                let track = rec.to_trajectory();
                Ok((rec.drifter_id.clone(), predict_single_step(&track, &det, model.as_ref())))
            };
            let results: Vec<Result<(String, Vec<StepPrediction>), CliError>> = if ctx.serial {
                test.iter().map(|r| run_one(&r)).collect()
            } else {
                test.par_iter().map(|r| run_one(&r)).collect()
            };
            for res in results {
                let (id, rows) = res?;
                write_single_step_csv(&dir.join(format!("{id}.csv")), &rows, &id, &provenance)?;
            }
            println!(
                "predict single_step: {} test drifters -> {}",
                test.len(),
                dir.display()
            );
        }
        PredictMode::Forecast => {
            let dir = run_dir.join("predictions").join("forecast");
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
            for rec in &test {
                let n_steps = if ctx.config.forecast.steps > 0 {
                    ctx.config.forecast.steps
                } else {
                    rec.samples.len().saturating_sub(1)
                };
                let spec = EnsembleSpec {
                    center: rec.deploy_pos(),
                    radius_m: ctx.config.ensemble.radius_m,
                    count: ctx.config.ensemble.count,
                    rng_seed: stable_id_seed(ctx.config.ensemble.rng_seed, &rec.drifter_id),
                };
                let starts = seed_ensemble(&spec).map_err(|e| CliError::Numerical(e.to_string()))?;
                let t0 = rec.deploy_time();
                let forecast_members = |lstm: Option<&LstmModel>| -> Vec<Trajectory> {
                    let run_member = |(m, start): (usize, &(f64, f64))| {
                        let det = ReducedDrifterModel::new(
                            GeoFlow::new(&dataset.current, dataset.wind.as_ref()),
                            params.clone(),
                        );
                        forecast_blended(
                            &det,
                            lstm,
                            &format!("{}#m{m:03}", rec.drifter_id),
                            *start,
                            t0,
                            n_steps,
                            900.0,
                        )
                    };
                    if ctx.serial {
                        starts.iter().enumerate().map(run_member).collect()
                    } else {
                        starts.par_iter().enumerate().map(run_member).collect()
                    }
                };
                let mut outputs: Vec<(&str, Vec<Trajectory>)> =
                    vec![("det", forecast_members(None))];
                if let Some(lstm) = model.as_ref() {
                    outputs.push(("blend", forecast_members(Some(lstm))));
                }
                for (tag, members) in &outputs {
                    let med = median_trajectory(members)
                        .map_err(|e| CliError::Numerical(e.to_string()))?;
                    let base = format!("{}_{tag}", rec.drifter_id);
                    write_trajectories_csv(
                        dir.join(format!("{base}_members.csv")),
                        members,
                        Some(&provenance),
                    )
                    .map_err(|e| CliError::Data(e.to_string()))?;
                    write_trajectories_csv(
                        dir.join(format!("{base}_median.csv")),
                        std::slice::from_ref(&med),
                        Some(&provenance),
                    )
                    .map_err(|e| CliError::Data(e.to_string()))?;
                    write_trajectories_geojson(
                        dir.join(format!("{base}.geojson")),
                        members,
                        Some(&provenance),
                    )
                    .map_err(|e| CliError::Data(e.to_string()))?;
                }
            }
            println!(
                "predict forecast: {} test drifters x {} members -> {}",
                test.len(),
                ctx.config.ensemble.count,
                dir.display()
            );
        }
    }
    Ok(())
}

fn read_single_step_csv(path: &Path, expect_hash: &str) -> Result<Vec<StepPrediction>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') {
            if !line.contains(&format!("config_hash={expect_hash}")) {
                return Err(CliError::Data(format!(
                    "{}: run id mismatch (expected config_hash={expect_hash}, got {line:?})",
                    path.display()
                )));
            }
            continue;
        }
        if line.starts_with("drifter_id") || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(CliError::Data(format!("{}: bad row {i}", path.display())));
        }
        let num = |k: usize| -> Result<f64, CliError> {
            f[k].parse()
                .map_err(|_| CliError::Data(format!("{}: bad number {:?} row {i}", path.display(), f[k])))
        };
        rows.push(StepPrediction {
            t: timebase::iso_to_epoch(f[1]).map_err(CliError::Data)?,
            lon: num(2)?,
            lat: num(3)?,
            v_real: Vec2::new(num(4)?, num(5)?),
            v_det: Vec2::new(num(6)?, num(7)?),
            v_blend: Vec2::new(num(8)?, num(9)?),
            gap: f[10] == "1",
        });
    }
    Ok(rows)
}

fn read_trajectories_csv(path: &Path, expect_hash: &str) -> Result<Vec<Trajectory>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut by_id: BTreeMap<String, Trajectory> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') {
            if !line.contains(&format!("config_hash={expect_hash}")) {
                return Err(CliError::Data(format!(
                    "{}: run id mismatch",
                    path.display()
                )));
            }
            continue;
        }
        if line.starts_with("drifter_id") || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(CliError::Data(format!("{}: bad row {line:?}", path.display())));
        }
        let num = |k: usize| -> Result<f64, CliError> {
            f[k].parse()
                .map_err(|_| CliError::Data(format!("{}: bad number {:?}", path.display(), f[k])))
        };
        let id = f[0].to_string();
        let entry = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Trajectory {
                drifter_id: id,
                times: Vec::new(),
                positions: Vec::new(),
                velocities: Vec::new(),
                status: Vec::new(),
            }
        });
        entry.times.push(timebase::iso_to_epoch(f[1]).map_err(CliError::Data)?);
        entry.positions.push((num(2)?, num(3)?));
        entry.velocities.push(Vec2::new(num(4)?, num(5)?));
        entry.status.push(match f[6] {
            "ok" => SampleStatus::Ok,
            "masked_flow" => SampleStatus::MaskedFlow,
            _ => SampleStatus::LeftDomain,
        });
    }
    Ok(order.into_iter().map(|id| by_id.remove(&id).unwrap()).collect())
}

/// Per-drifter evaluation record.
#[derive(Debug, serde::Serialize)]
struct DrifterEvaluation {
    drifter_id: String,
    rmse_det: Option<f64>,
    rmse_blend: Option<f64>,
    mean_skill_det: Option<f64>,
    mean_skill_blend: Option<f64>,
    median_skill_det: Option<f64>,
    median_skill_blend: Option<f64>,
    max_correlation: Option<f64>,
    max_mean_ms_coherence: Option<f64>,
    dist_to_trained_km: Option<f64>,
    time_to_trained_h: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn median_of(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Evaluate predictions against the real tracks: zonal RMSE (single-step),
/// ensemble skill scores (forecast), similarity statistics, histograms and
/// a summary with the blended-beats-deterministic fractions.
pub fn cmd_evaluate(ctx: &RunContext) -> Result<(), CliError> {
    let dataset = load_dataset(&ctx.config.paths.dataset_dir)?;
    let run_dir = &ctx.config.paths.run_dir;
    let manifest = read_split_manifest(run_dir.join("split.json"))?;
    let test = side_records(&dataset.records, &manifest.test);
    let training = side_records(&dataset.records, &manifest.training);
    if test.is_empty() {
        return Err(CliError::Data("test side is empty".into()));
    }
    let reports_dir = run_dir.join("reports");
    std::fs::create_dir_all(&reports_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", reports_dir.display())))?;

    // Dataset-wide normalization scale: mean speed of the evaluated real
    // velocities.
    let real_series: Vec<Vec<Vec2>> = test
        .iter()
        .map(|r| r.samples.iter().map(|s| Vec2::new(s.u, s.v)).collect())
        .collect();
    let u_bar = mean_speed(&real_series);
    if !(u_bar > 0.0) {
        return Err(CliError::Numerical("zero mean speed on test side".into()));
    }

    let training_zonal: Vec<Vec<f64>> = training
        .iter()
        .map(|r| r.samples.iter().map(|s| s.u).collect())
        .collect();
    let deployments: Vec<Deployment> = training
        .iter()
        .map(|r| Deployment {
            drifter_id: r.drifter_id.clone(),
            lon: r.deploy_pos().0,
            lat: r.deploy_pos().1,
            t: r.deploy_time(),
        })
        .collect();

    let single_dir = run_dir.join("predictions").join("single_step");
    let forecast_dir = run_dir.join("predictions").join("forecast");
    let mut evaluations = Vec::new();
    for rec in &test {
        let id = &rec.drifter_id;
        let real_track = rec.to_trajectory();

        let (rmse_det, rmse_blend) = {
            let path = single_dir.join(format!("{id}.csv"));
            if path.exists() {
                let rows = read_single_step_csv(&path, &ctx.config_hash)?;
                let clean: Vec<&StepPrediction> = rows.iter().filter(|r| !r.gap).collect();
                let real: Vec<Vec2> = clean.iter().map(|r| r.v_real).collect();
                let det: Vec<Vec2> = clean.iter().map(|r| r.v_det).collect();
                let blend: Vec<Vec2> = clean.iter().map(|r| r.v_blend).collect();
                (
                    Some(rmse_zonal(&det, &real, u_bar).map_err(metrics_err)?),
                    Some(rmse_zonal(&blend, &real, u_bar).map_err(metrics_err)?),
                )
            } else {
                (None, None)
            }
        };

        let mut skills = BTreeMap::new();
        for tag in ["det", "blend"] {
            let members_path = forecast_dir.join(format!("{id}_{tag}_members.csv"));
            if !members_path.exists() {
                continue;
            }
            let members = read_trajectories_csv(&members_path, &ctx.config_hash)?;
            let horizon = members.first().map(|m| m.len()).unwrap_or(0);
            let real_slice = Trajectory {
                drifter_id: real_track.drifter_id.clone(),
                times: real_track.times[..horizon].to_vec(),
                positions: real_track.positions[..horizon].to_vec(),
                velocities: real_track.velocities[..horizon].to_vec(),
                status: real_track.status[..horizon].to_vec(),
            };
            let member_skills: Vec<f64> = members
                .iter()
                .map(|m| skill_score(m, &real_slice).map(|r| r.s))
                .collect::<Result<_, _>>()
                .map_err(metrics_err)?;
            let med = median_trajectory(&members).map_err(|e| CliError::Numerical(e.to_string()))?;
            let med_skill = skill_score(&med, &real_slice).map_err(metrics_err)?.s;
            skills.insert(tag.to_string(), (mean(&member_skills), med_skill));
        }

        let max_correlation = {
            let zonal: Vec<f64> = rec.samples.iter().map(|s| s.u).collect();
            match max_cross_correlation(&zonal, &training_zonal) {
                Ok(v) => Some(v),
                Err(MetricsError::EmptyTrainingSet) => None,
                Err(e) => return Err(metrics_err(e)),
            }
        };
        let max_coh = {
            let zonal: Vec<f64> = rec.samples.iter().map(|s| s.u).collect();
            match max_mean_ms_coherence(&zonal, &training_zonal) {
                Ok(v) => Some(v),
                Err(MetricsError::TooShort { .. }) | Err(MetricsError::Degenerate(_)) | Err(MetricsError::EmptyTrainingSet) => None,
                Err(e) => return Err(metrics_err(e)),
            }
        };
        let (dist_km, time_h) = if deployments.is_empty() {
            (None, None)
        } else {
            let test_dep = Deployment {
                drifter_id: id.clone(),
                lon: rec.deploy_pos().0,
                lat: rec.deploy_pos().1,
                t: rec.deploy_time(),
            };
            let (km, h) = nearest_trained(&test_dep, &deployments).map_err(metrics_err)?;
            (Some(km), Some(h))
        };

        evaluations.push(DrifterEvaluation {
            drifter_id: id.clone(),
            rmse_det,
            rmse_blend,
            mean_skill_det: skills.get("det").and_then(|s| s.0),
            mean_skill_blend: skills.get("blend").and_then(|s| s.0),
            median_skill_det: skills.get("det").map(|s| s.1),
            median_skill_blend: skills.get("blend").map(|s| s.1),
            max_correlation,
            max_mean_ms_coherence: max_coh,
            dist_to_trained_km: dist_km,
            time_to_trained_h: time_h,
        });
    }

    // ---- reports ----
    let provenance = ctx.provenance();
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();

    let rmse_path = reports_dir.join("rmse.csv");
    {
        let mut out = std::fs::File::create(&rmse_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", rmse_path.display())))?;
        writeln!(out, "# {provenance}").ok();
        writeln!(out, "drifter_id,rmse_det,rmse_blend").ok();
        for ev in &evaluations {
            writeln!(out, "{},{},{}", ev.drifter_id, fmt_opt(ev.rmse_det), fmt_opt(ev.rmse_blend)).ok();
        }
    }

    let skill_path = reports_dir.join("skill.csv");
    {
        let mut out = std::fs::File::create(&skill_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", skill_path.display())))?;
        writeln!(out, "# {provenance}").ok();
        writeln!(
            out,
            "drifter_id,mean_skill_det,mean_skill_blend,median_skill_det,median_skill_blend"
        )
        .ok();
        for ev in &evaluations {
            writeln!(
                out,
                "{},{},{},{},{}",
                ev.drifter_id,
                fmt_opt(ev.mean_skill_det),
                fmt_opt(ev.mean_skill_blend),
                fmt_opt(ev.median_skill_det),
                fmt_opt(ev.median_skill_blend)
            )
            .ok();
        }
    }

    let sim_path = reports_dir.join("similarity.csv");
    {
        let mut out = std::fs::File::create(&sim_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", sim_path.display())))?;
        writeln!(out, "# {provenance}").ok();
        writeln!(
            out,
            "drifter_id,max_correlation,max_mean_ms_coherence,dist_to_trained_km,time_to_trained_h"
        )
        .ok();
        for ev in &evaluations {
            writeln!(
                out,
                "{},{},{},{},{}",
                ev.drifter_id,
                fmt_opt(ev.max_correlation),
                fmt_opt(ev.max_mean_ms_coherence),
                fmt_opt(ev.dist_to_trained_km),
                fmt_opt(ev.time_to_trained_h)
            )
            .ok();
        }
    }

    // RMSE histograms (deterministic vs blended) on shared edges.
    let det_rmse: Vec<f64> = evaluations.iter().filter_map(|e| e.rmse_det).collect();
    let blend_rmse: Vec<f64> = evaluations.iter().filter_map(|e| e.rmse_blend).collect();
    let hist_path = reports_dir.join("rmse_hist.csv");
    if !det_rmse.is_empty() {
        let hi = if ctx.config.evaluate.rmse_hist_max > 0.0 {
            ctx.config.evaluate.rmse_hist_max
        } else {
            det_rmse
                .iter()
                .chain(&blend_rmse)
                .fold(0.0f64, |a, &b| a.max(b))
                * 1.05
        };
        let edges = uniform_edges(0.0, hi.max(1e-12), ctx.config.evaluate.rmse_hist_bins);
        let det_counts = histogram(&det_rmse, &edges);
        let blend_counts = histogram(&blend_rmse, &edges);
        let mut out = std::fs::File::create(&hist_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", hist_path.display())))?;
        writeln!(out, "# {provenance}").ok();
        writeln!(out, "bin_lo,bin_hi,count_det,count_blend").ok();
        for b in 0..det_counts.len() {
            writeln!(
                out,
                "{},{},{},{}",
                edges[b],
                edges[b + 1],
                det_counts[b],
                blend_counts[b]
            )
            .ok();
        }
    }

    // Summary with the paper-analog fractions.
    let frac = |pairs: Vec<(f64, f64)>| -> Option<f64> {
        if pairs.is_empty() {
            None
        } else {
            Some(pairs.iter().filter(|(b, d)| b > d).count() as f64 / pairs.len() as f64)
        }
    };
    let mean_skill_pairs: Vec<(f64, f64)> = evaluations
        .iter()
        .filter_map(|e| Some((e.mean_skill_blend?, e.mean_skill_det?)))
        .collect();
    let median_skill_pairs: Vec<(f64, f64)> = evaluations
        .iter()
        .filter_map(|e| Some((e.median_skill_blend?, e.median_skill_det?)))
        .collect();
    let rmse_pairs: Vec<(f64, f64)> = evaluations
        .iter()
        .filter_map(|e| Some((e.rmse_blend?, e.rmse_det?)))
        .collect();
    let summary = serde_json::json!({
        "config_hash": ctx.config_hash,
        "seeds": {
            "split": ctx.config.split.rng_seed,
            "train": ctx.config.train.rng_seed,
            "ensemble": ctx.config.ensemble.rng_seed,
        },
        "n_test": test.len(),
        "n_training": training.len(),
        "u_bar_mps": u_bar,
        "median_rmse_det": median_of(det_rmse.clone()),
        "median_rmse_blend": median_of(blend_rmse.clone()),
        "mean_dist_to_trained_km": mean(&evaluations.iter().filter_map(|e| e.dist_to_trained_km).collect::<Vec<_>>()),
        "mean_time_to_trained_h": mean(&evaluations.iter().filter_map(|e| e.time_to_trained_h).collect::<Vec<_>>()),
        "mean_max_correlation": mean(&evaluations.iter().filter_map(|e| e.max_correlation).collect::<Vec<_>>()),
        "mean_max_ms_coherence": mean(&evaluations.iter().filter_map(|e| e.max_mean_ms_coherence).collect::<Vec<_>>()),
        "fraction_blend_rmse_below_det": frac(rmse_pairs.iter().map(|(b, d)| (*d, *b)).collect()),
        "fraction_blend_mean_skill_beats_det": frac(mean_skill_pairs),
        "fraction_blend_median_skill_beats_det": frac(median_skill_pairs),
    });
    let summary_path = reports_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())
        .map_err(|e| CliError::Data(format!("{}: {e}", summary_path.display())))?;
    println!(
        "evaluate: {} test drifters -> {}",
        test.len(),
        reports_dir.display()
    );
    Ok(())
}

fn metrics_err(e: MetricsError) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Directory layout helper used by the acceptance suite.
pub fn summary_path(run_dir: &Path) -> PathBuf {
    run_dir.join("reports").join("summary.json")
}
