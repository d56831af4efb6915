//! The data-driven half of the blended drifter model.
//!
//! A recurrent network G consumes the time-delayed feature vector
//! `xi(t) = [u, u_e, Du/Dt]` sampled along a track — deliberately free of
//! any position information — and predicts the residual between the real
//! drifter velocity and the reduced deterministic model. The blended
//! velocity is `v_reduced + G(xi(t), xi(t - tau), ...)`; ensemble members
//! carry independent recurrent histories.

mod lstm;
mod train;

pub use lstm::{
    lstm_gradients, lstm_loss, LstmGradients, LstmModel, LstmState, Mat, Normalization, STD_FLOOR,
};
pub use train::{fit_normalization, train_on_samples, TrainConfig, TrainOutcome};

use thiserror::Error;

use crate::dynamics::ReducedDrifterModel;
use crate::flowfield::{FieldError, Vec2};
use crate::integrate::{rk4_step, ModelError, SampleStatus, Trajectory, VelocityModel};

/// Feature channels per step: u, u_e and Du/Dt, two components each.
pub const INPUT_CHANNELS: usize = 6;
/// Output components: a 2D velocity correction.
pub const OUTPUT_DIM: usize = 2;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("no training data")]
    EmptyTrainingSet,
    #[error("no usable training windows (all tracks gappy or too short)")]
    NoUsableWindows,
    #[error("model error: {0}")]
    Model(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Flow(#[from] FieldError),
}

/// One step of the network input: total water velocity, its Ekman part and
/// the material derivative, all at the drifter position. Channel order is
/// [u_x, u_y, ue_x, ue_y, dudt_x, dudt_y].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub u: Vec2,
    pub u_e: Vec2,
    pub du_dt: Vec2,
}

impl FeatureVector {
    pub fn channels(&self) -> [f64; INPUT_CHANNELS] {
        [
            self.u.x, self.u.y, self.u_e.x, self.u_e.y, self.du_dt.x, self.du_dt.y,
        ]
    }
}

/// A training window: features and per-step residual targets
/// (real minus deterministic velocity, m/s) on the same time axis.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub features: Vec<FeatureVector>,
    pub targets: Vec<Vec2>,
}

/// Feature sequence along a track, aligned sample-for-sample; `None` marks a
/// field-coverage gap (the sample is dropped from training and the
/// recurrent history restarts after it).
pub fn build_features(
    track: &Trajectory,
    model: &ReducedDrifterModel<'_>,
) -> Vec<Option<FeatureVector>> {
    (0..track.len())
        .map(|k| {
            if track.status[k] != SampleStatus::Ok {
                return None;
            }
            let (lon, lat) = track.positions[k];
            model
                .flow
                .bundle(lon, lat, track.times[k])
                .ok()
                .map(|b| FeatureVector {
                    u: b.u,
                    u_e: b.u_e,
                    du_dt: b.du_dt,
                })
        })
        .collect()
}

/// Slice a track into training windows: contiguous gap-free runs are cut
/// into chunks of at most `truncation_steps`, each paired with its per-step
/// residual targets.
pub fn build_training_samples(
    tracks: &[Trajectory],
    model: &ReducedDrifterModel<'_>,
    truncation_steps: usize,
) -> Result<Vec<TrainingSample>, LearnError> {
    let mut samples = Vec::new();
    for track in tracks {
        let mut run_feats: Vec<FeatureVector> = Vec::new();
        let mut run_targets: Vec<Vec2> = Vec::new();
        let flush = |feats: &mut Vec<FeatureVector>, targets: &mut Vec<Vec2>, out: &mut Vec<TrainingSample>| {
            for (f_chunk, t_chunk) in feats
                .chunks(truncation_steps)
                .zip(targets.chunks(truncation_steps))
            {
                if f_chunk.len() >= 2 {
                    out.push(TrainingSample {
                        features: f_chunk.to_vec(),
                        targets: t_chunk.to_vec(),
                    });
                }
            }
            feats.clear();
            targets.clear();
        };
        for k in 0..track.len() {
            let ok = track.status[k] == SampleStatus::Ok;
            let (lon, lat) = track.positions[k];
            let bundle = if ok {
                model.velocity_bundle(lon, lat, track.times[k]).ok()
            } else {
                None
            };
            match bundle {
                Some((v_det, b)) => {
                    run_feats.push(FeatureVector {
                        u: b.u,
                        u_e: b.u_e,
                        du_dt: b.du_dt,
                    });
                    run_targets.push(track.velocities[k] - v_det);
                }
                None => flush(&mut run_feats, &mut run_targets, &mut samples),
            }
        }
        flush(&mut run_feats, &mut run_targets, &mut samples);
    }
    if samples.is_empty() {
        return Err(LearnError::NoUsableWindows);
    }
    Ok(samples)
}

/// Train the residual network on real tracks against the deterministic
/// model that will be used at inference.
pub fn train(
    tracks: &[Trajectory],
    model: &ReducedDrifterModel<'_>,
    cfg: &TrainConfig,
    parallel: bool,
) -> Result<TrainOutcome, LearnError> {
    let samples = build_training_samples(tracks, model, cfg.truncation_steps)?;
    train_on_samples(&samples, cfg, parallel)
}

/// Blended velocity at one point: the deterministic reduced velocity plus
/// the network correction, advancing the caller's recurrent state with the
/// local feature sample.
pub fn blended_velocity(
    det: &ReducedDrifterModel<'_>,
    lstm: &LstmModel,
    state: &mut LstmState,
    lon: f64,
    lat: f64,
    t: f64,
) -> Result<Vec2, FieldError> {
    let (v_det, b) = det.velocity_bundle(lon, lat, t)?;
    let xi = FeatureVector {
        u: b.u,
        u_e: b.u_e,
        du_dt: b.du_dt,
    };
    Ok(v_det + lstm.step(state, &xi))
}

/// One single-step prediction row along a real track.
#[derive(Debug, Clone)]
pub struct StepPrediction {
    pub t: f64,
    pub lon: f64,
    pub lat: f64,
    pub v_real: Vec2,
    pub v_det: Vec2,
    pub v_blend: Vec2,
    /// Field coverage gap: model outputs are NaN and the recurrent history
    /// restarts at the next valid sample.
    pub gap: bool,
}

/// Predict velocity at every step along the real track (the model sees true
/// past positions only). Without a network the blended column equals the
/// deterministic one.
pub fn predict_single_step(
    track: &Trajectory,
    det: &ReducedDrifterModel<'_>,
    lstm: Option<&LstmModel>,
) -> Vec<StepPrediction> {
    let mut state = lstm.map(|m| LstmState::zeros(m.hidden));
    let mut rows = Vec::with_capacity(track.len());
    for k in 0..track.len() {
        let (lon, lat) = track.positions[k];
        let t = track.times[k];
        let bundle = if track.status[k] == SampleStatus::Ok {
            det.velocity_bundle(lon, lat, t).ok()
        } else {
            None
        };
        match bundle {
            Some((v_det, b)) => {
                let correction = match (lstm, state.as_mut()) {
                    (Some(model), Some(s)) => {
                        let xi = FeatureVector {
                            u: b.u,
                            u_e: b.u_e,
                            du_dt: b.du_dt,
                        };
                        model.step(s, &xi)
                    }
                    _ => Vec2::ZERO,
                };
                rows.push(StepPrediction {
                    t,
                    lon,
                    lat,
                    v_real: track.velocities[k],
                    v_det,
                    v_blend: v_det + correction,
                    gap: false,
                });
            }
            None => {
                if let (Some(model), Some(s)) = (lstm, state.as_mut()) {
                    *s = LstmState::zeros(model.hidden);
                }
                rows.push(StepPrediction {
                    t,
                    lon,
                    lat,
                    v_real: track.velocities[k],
                    v_det: Vec2::new(f64::NAN, f64::NAN),
                    v_blend: Vec2::new(f64::NAN, f64::NAN),
                    gap: true,
                });
            }
        }
    }
    rows
}

/// Deterministic model plus a correction held fixed across the RK4 stages
/// of one step; the network state advances once per cadence step.
struct FrozenCorrection<'a, 'b> {
    det: &'a ReducedDrifterModel<'b>,
    g: Vec2,
}

impl VelocityModel for FrozenCorrection<'_, '_> {
    fn velocity(
        &self,
        lon: f64,
        lat: f64,
        t: f64,
    ) -> Result<crate::integrate::ModelVelocity, ModelError> {
        let mv = self.det.velocity(lon, lat, t)?;
        Ok(crate::integrate::ModelVelocity {
            v: mv.v + self.g,
            degraded: mv.degraded,
        })
    }
}

/// Free-running (multi-step) forecast: features come from the modeled
/// positions, so network and position errors accumulate together. With
/// `lstm = None` this reproduces the deterministic trajectory exactly.
pub fn forecast_blended(
    det: &ReducedDrifterModel<'_>,
    lstm: Option<&LstmModel>,
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
    let mut state = lstm.map(|m| LstmState::zeros(m.hidden));
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
        let bundle = det.velocity_bundle(pos.0, pos.1, t);
        match bundle {
            Ok((v_det, b)) => {
                let g = match (lstm, state.as_mut()) {
                    (Some(model), Some(s)) => {
                        let xi = FeatureVector {
                            u: b.u,
                            u_e: b.u_e,
                            du_dt: b.du_dt,
                        };
                        model.step(s, &xi)
                    }
                    _ => Vec2::ZERO,
                };
                positions.push(pos);
                velocities.push(v_det + g);
                status.push(if b.degraded {
                    SampleStatus::MaskedFlow
                } else {
                    SampleStatus::Ok
                });
                if k < n_steps {
                    match rk4_step(&FrozenCorrection { det, g }, pos, t, dt) {
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
            Err(e) => {
                let flag = match e {
                    FieldError::MaskedSupport { .. } => SampleStatus::MaskedFlow,
                    _ => SampleStatus::LeftDomain,
                };
                frozen = Some(flag);
                positions.push(pos);
                velocities.push(Vec2::ZERO);
                status.push(flag);
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
