//! Desk-scale pilot of the synthetic blended experiment; prints the
//! summary numbers the acceptance suite will gate on.

use std::path::PathBuf;

use driftblend::dataio::{ExportGrid, LocalChart, SplitMode, SplitSpec, SynthSpec};
use driftblend::flowfield::{AnalyticField, Vec2};
use driftblend::learn::TrainConfig;
use driftblend_cli::commands::{self, PredictMode};
use driftblend_cli::config::{
    EnsembleConfig, EvaluateConfig, ExperimentConfig, ForecastConfig, ParamsConfig, PathsConfig,
    RunContext,
};

fn main() {
    let t_start = std::time::Instant::now();
    let base = PathBuf::from(std::env::args().nth(1).unwrap_or("/tmp/pilot".into()));
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();
    let dataset_dir = base.join("dataset");
    let run_dir = base.join("run_random");

    let config = ExperimentConfig {
        paths: PathsConfig {
            dataset_dir: dataset_dir.clone(),
            run_dir: run_dir.clone(),
        },
        params: ParamsConfig {
            r: 0.6579,
            eps: 0.2,
            delta_p: 1.02,
            delta_a: 1.17e-3,
            nu_a_alpha: 0.0,
            length_scale_m: 2.0e4,
            velocity_scale_mps: 0.5,
        },
        train: TrainConfig {
            hidden: 32,
            epochs: 30,
            tau_s: 900.0,
            truncation_steps: 96,
            learning_rate: 2e-3,
            batch_size: 16,
            rng_seed: 7,
            grad_clip_norm: 5.0,
        },
        split: SplitSpec {
            mode: SplitMode::Random,
            test_fraction: 0.2,
            rng_seed: 11,
            cluster_radius_km: 2.0,
            cluster_window_h: 2.0,
        },
        ensemble: EnsembleConfig {
            count: 16,
            radius_m: 5000.0,
            rng_seed: 13,
        },
        forecast: ForecastConfig { steps: 0 },
        evaluate: EvaluateConfig::default(),
        synth: Some(SynthSpec {
            current: AnalyticField::DoubleGyre {
                amplitude: 0.14,
                eps_g: 0.03,
                omega: 2.0 * std::f64::consts::PI / (20.0 * 86_400.0),
                scale: 3.0e5,
            },
            wind: Some(AnalyticField::SolidRotation {
                omega: 2.0e-5,
                center: Vec2::new(3.0e5, 1.5e5),
            }),
            h_coeff_ue: 0.05,
            h_coeff_u: 0.02,
            n_drifters: 60,
            n_clusters: 15,
            cluster_radius_m: 1000.0,
            duration_s: 10.0 * 86_400.0,
            cadence_s: 900.0,
            seed: 42,
            t0_epoch: 1_453_334_400.0,
            chart: LocalChart {
                origin_lon: -90.0,
                origin_lat: 25.0,
            },
            deploy_lo: Vec2::new(0.8e5, 0.8e5),
            deploy_hi: Vec2::new(5.2e5, 2.2e5),
            current_grid: ExportGrid {
                lon0: -90.5,
                lat0: 24.5,
                dlon: 0.25,
                dlat: 0.25,
                nlon: 29,
                nlat: 16,
                dt_s: 86_400.0,
            },
            wind_grid: ExportGrid {
                lon0: -90.5,
                lat0: 24.5,
                dlon: 0.25,
                dlat: 0.25,
                nlon: 29,
                nlat: 16,
                dt_s: 21_600.0,
            },
            box_avg_samples: 4,
        }),
    };

    let config_path = base.join("experiment.toml");
    std::fs::write(&config_path, toml::to_string(&config).unwrap()).unwrap();
    let ctx = RunContext::from_file(&config_path, None, false).unwrap();

    let step = |name: &str, f: &dyn Fn() -> Result<(), driftblend_cli::CliError>| {
        let t = std::time::Instant::now();
        f().unwrap_or_else(|e| panic!("{name}: {e}"));
        println!("[{name}] {:.1}s", t.elapsed().as_secs_f64());
    };
    step("synth", &|| commands::cmd_synth(&ctx));
    step("train", &|| commands::cmd_train(&ctx));
    step("predict-ss", &|| {
        commands::cmd_predict(&ctx, PredictMode::SingleStep, false)
    });
    step("predict-fc", &|| {
        commands::cmd_predict(&ctx, PredictMode::Forecast, false)
    });
    step("evaluate", &|| commands::cmd_evaluate(&ctx));

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(commands::summary_path(&run_dir)).unwrap())
            .unwrap();
    println!("summary: {}", serde_json::to_string_pretty(&summary).unwrap());
    let loss = std::fs::read_to_string(run_dir.join("training_loss.csv")).unwrap();
    let lines: Vec<&str> = loss.lines().collect();
    println!("loss first/last: {} | {}", lines[2], lines.last().unwrap());
    println!("total {:.1}s", t_start.elapsed().as_secs_f64());
}
