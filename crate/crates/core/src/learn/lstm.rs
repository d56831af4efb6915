//! Single-layer LSTM with a dense head, hand-rolled in f64.
//!
//! Forward: standard gated recurrence (sigmoid input/forget/output gates,
//! tanh cell candidate), dense projection of the hidden state to a 2D
//! velocity correction. Inputs are z-scored per channel, outputs are
//! denormalized with the target statistics, both frozen at training time.
//!
//! Backward: exact backpropagation through time over a window; gradients
//! are checked against central finite differences in the test suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureVector, LearnError, TrainingSample, INPUT_CHANNELS, OUTPUT_DIM};
use crate::flowfield::Vec2;

/// Gate order inside the weight arrays.
pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CELL: usize = 2;
pub const GATE_OUTPUT: usize = 3;

/// Smallest allowed normalization standard deviation.
pub const STD_FLOOR: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// out += A x
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[r] += acc;
        }
    }

    /// out += A^T x
    pub fn t_matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let s = x[r];
            for (o, a) in out.iter_mut().zip(row) {
                *o += s * a;
            }
        }
    }

    /// A += u v^T
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let s = u[r];
            for (a, b) in row.iter_mut().zip(v) {
                *a += s * b;
            }
        }
    }
}

/// Per-channel input and per-component target statistics, frozen on the
/// training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: [f64; INPUT_CHANNELS],
    pub input_std: [f64; INPUT_CHANNELS],
    pub target_mean: [f64; OUTPUT_DIM],
    pub target_std: [f64; OUTPUT_DIM],
}

impl Normalization {
    /// Identity normalization (zero mean, unit scale).
    pub fn identity() -> Self {
        Normalization {
            input_mean: [0.0; INPUT_CHANNELS],
            input_std: [1.0; INPUT_CHANNELS],
            target_mean: [0.0; OUTPUT_DIM],
            target_std: [1.0; OUTPUT_DIM],
        }
    }

    pub fn normalize_input(&self, raw: &[f64; INPUT_CHANNELS]) -> [f64; INPUT_CHANNELS] {
        std::array::from_fn(|k| (raw[k] - self.input_mean[k]) / self.input_std[k])
    }

    pub fn normalize_target(&self, t: Vec2) -> [f64; OUTPUT_DIM] {
        [
            (t.x - self.target_mean[0]) / self.target_std[0],
            (t.y - self.target_mean[1]) / self.target_std[1],
        ]
    }

    pub fn denormalize_output(&self, y: &[f64; OUTPUT_DIM]) -> Vec2 {
        Vec2::new(
            y[0] * self.target_std[0] + self.target_mean[0],
            y[1] * self.target_std[1] + self.target_mean[1],
        )
    }
}

/// The residual-correction network: one LSTM layer plus a dense 2D head,
/// with its normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub hidden: usize,
    /// Input-to-gate weights (hidden x 6), gate order i, f, g, o.
    pub wx: [Mat; 4],
    /// Recurrent gate weights (hidden x hidden).
    pub wh: [Mat; 4],
    /// Gate biases.
    pub b: [Vec<f64>; 4],
    /// Dense head (2 x hidden).
    pub dense_w: Mat,
    pub dense_b: [f64; OUTPUT_DIM],
    pub norm: Normalization,
}

/// Recurrent state of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    /// All-zero weights; with identity normalization the model outputs
    /// exactly (0, 0) for any input.
    pub fn zeros(hidden: usize, norm: Normalization) -> Self {
        LstmModel {
            hidden,
            wx: std::array::from_fn(|_| Mat::zeros(hidden, INPUT_CHANNELS)),
            wh: std::array::from_fn(|_| Mat::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
            dense_w: Mat::zeros(OUTPUT_DIM, hidden),
            dense_b: [0.0; OUTPUT_DIM],
            norm,
        }
    }

    /// Seeded initialization: all weights and biases uniform in
    /// +-1/sqrt(hidden), then the forget-gate bias is set to +1.
    pub fn init(hidden: usize, seed: u64, norm: Normalization) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut model = Self::zeros(hidden, norm);
        let fill = |data: &mut [f64], rng: &mut ChaCha8Rng| {
            for v in data {
                *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
            }
        };
        for g in 0..4 {
            fill(&mut model.wx[g].data, &mut rng);
            fill(&mut model.wh[g].data, &mut rng);
            fill(&mut model.b[g], &mut rng);
        }
        fill(&mut model.dense_w.data, &mut rng);
        let mut db = model.dense_b.to_vec();
        fill(&mut db, &mut rng);
        model.dense_b = [db[0], db[1]];
        for v in &mut model.b[GATE_FORGET] {
            *v = 1.0;
        }
        model
    }

    /// Advance the recurrent state with one feature sample and return the
    /// denormalized velocity correction.
    pub fn step(&self, state: &mut LstmState, xi: &FeatureVector) -> Vec2 {
        let x = self.norm.normalize_input(&xi.channels());
        let mut gates: [Vec<f64>; 4] = std::array::from_fn(|g| self.b[g].clone());
        for g in 0..4 {
            self.wx[g].matvec_acc(&x, &mut gates[g]);
            self.wh[g].matvec_acc(&state.h, &mut gates[g]);
        }
        for j in 0..self.hidden {
            let i = sigmoid(gates[GATE_INPUT][j]);
            let f = sigmoid(gates[GATE_FORGET][j]);
            let g = gates[GATE_CELL][j].tanh();
            let o = sigmoid(gates[GATE_OUTPUT][j]);
            state.c[j] = f * state.c[j] + i * g;
            state.h[j] = o * state.c[j].tanh();
        }
        let mut y = self.dense_b;
        self.dense_w.matvec_acc(&state.h, &mut y);
        self.norm.denormalize_output(&y)
    }

    /// Run a whole sequence from a zero state; returns the per-step
    /// denormalized outputs and the final state.
    pub fn forward(&self, sequence: &[FeatureVector]) -> (Vec<Vec2>, LstmState) {
        let mut state = LstmState::zeros(self.hidden);
        let out = sequence
            .iter()
            .map(|xi| self.step(&mut state, xi))
            .collect();
        (out, state)
    }

    pub fn num_params(&self) -> usize {
        let h = self.hidden;
        4 * (h * INPUT_CHANNELS + h * h + h) + OUTPUT_DIM * h + OUTPUT_DIM
    }

    /// Flatten all trainable parameters in a fixed order: wx gates, wh
    /// gates, biases, dense weights, dense bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for g in 0..4 {
            out.extend_from_slice(&self.wx[g].data);
        }
        for g in 0..4 {
            out.extend_from_slice(&self.wh[g].data);
        }
        for g in 0..4 {
            out.extend_from_slice(&self.b[g]);
        }
        out.extend_from_slice(&self.dense_w.data);
        out.extend_from_slice(&self.dense_b);
        out
    }

    /// Write back parameters flattened by [`Self::flatten`].
    pub fn unflatten(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut k = 0;
        let take = |dst: &mut [f64], k: &mut usize| {
            dst.copy_from_slice(&flat[*k..*k + dst.len()]);
            *k += dst.len();
        };
        for g in 0..4 {
            take(&mut self.wx[g].data, &mut k);
        }
        for g in 0..4 {
            take(&mut self.wh[g].data, &mut k);
        }
        for g in 0..4 {
            take(&mut self.b[g], &mut k);
        }
        take(&mut self.dense_w.data, &mut k);
        take(&mut self.dense_b, &mut k);
    }

    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<(), LearnError> {
        self.save_json_with_config(path, None)
    }

    /// Save with the training configuration echoed into the file.
    pub fn save_json_with_config(
        &self,
        path: impl AsRef<std::path::Path>,
        config_echo: Option<&super::TrainConfig>,
    ) -> Result<(), LearnError> {
        let doc = SerializedModel {
            format_version: MODEL_FORMAT_VERSION,
            input_channels: INPUT_CHANNELS,
            train_config: config_echo.cloned(),
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| LearnError::Model(e.to_string()))?;
        std::fs::write(path.as_ref(), text).map_err(|e| LearnError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }

    pub fn load_json(path: impl AsRef<std::path::Path>) -> Result<Self, LearnError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| LearnError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })?;
        let doc: SerializedModel =
            serde_json::from_str(&text).map_err(|e| LearnError::Model(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Model(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        if doc.input_channels != INPUT_CHANNELS {
            return Err(LearnError::Model(format!(
                "model expects {} input channels, this build uses {INPUT_CHANNELS}",
                doc.input_channels
            )));
        }
        doc.model.validate()?;
        Ok(doc.model)
    }

    /// Shape consistency check for deserialized models.
    pub fn validate(&self) -> Result<(), LearnError> {
        let h = self.hidden;
        let shape_ok = (0..4).all(|g| {
            self.wx[g].rows == h
                && self.wx[g].cols == INPUT_CHANNELS
                && self.wx[g].data.len() == h * INPUT_CHANNELS
                && self.wh[g].rows == h
                && self.wh[g].cols == h
                && self.wh[g].data.len() == h * h
                && self.b[g].len() == h
        }) && self.dense_w.rows == OUTPUT_DIM
            && self.dense_w.cols == h
            && self.dense_w.data.len() == OUTPUT_DIM * h;
        if !shape_ok {
            return Err(LearnError::Model("inconsistent weight shapes".into()));
        }
        if self.norm.input_std.iter().chain(&self.norm.target_std).any(|s| !(*s > 0.0)) {
            return Err(LearnError::Model("normalization std must be positive".into()));
        }
        Ok(())
    }
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SerializedModel {
    format_version: u32,
    input_channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_config: Option<super::TrainConfig>,
    #[serde(flatten)]
    model: LstmModel,
}

/// Parameter gradients, mirroring the model layout.
#[derive(Debug, Clone)]
pub struct LstmGradients {
    pub wx: [Mat; 4],
    pub wh: [Mat; 4],
    pub b: [Vec<f64>; 4],
    pub dense_w: Mat,
    pub dense_b: [f64; OUTPUT_DIM],
}

impl LstmGradients {
    pub fn zeros(hidden: usize) -> Self {
        LstmGradients {
            wx: std::array::from_fn(|_| Mat::zeros(hidden, INPUT_CHANNELS)),
            wh: std::array::from_fn(|_| Mat::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
            dense_w: Mat::zeros(OUTPUT_DIM, hidden),
            dense_b: [0.0; OUTPUT_DIM],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in 0..4 {
            out.extend_from_slice(&self.wx[g].data);
        }
        for g in 0..4 {
            out.extend_from_slice(&self.wh[g].data);
        }
        for g in 0..4 {
            out.extend_from_slice(&self.b[g]);
        }
        out.extend_from_slice(&self.dense_w.data);
        out.extend_from_slice(&self.dense_b);
        out
    }

    fn add_scaled(&mut self, other: &LstmGradients, s: f64) {
        for g in 0..4 {
            for (a, b) in self.wx[g].data.iter_mut().zip(&other.wx[g].data) {
                *a += s * b;
            }
            for (a, b) in self.wh[g].data.iter_mut().zip(&other.wh[g].data) {
                *a += s * b;
            }
            for (a, b) in self.b[g].iter_mut().zip(&other.b[g]) {
                *a += s * b;
            }
        }
        for (a, b) in self.dense_w.data.iter_mut().zip(&other.dense_w.data) {
            *a += s * b;
        }
        for k in 0..OUTPUT_DIM {
            self.dense_b[k] += s * other.dense_b[k];
        }
    }
}

/// Cached activations of one sequence, for backpropagation.
struct ForwardCache {
    x: Vec<[f64; INPUT_CHANNELS]>,
    gate_i: Vec<Vec<f64>>,
    gate_f: Vec<Vec<f64>>,
    gate_g: Vec<Vec<f64>>,
    gate_o: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    /// Normalized network outputs per step.
    y: Vec<[f64; OUTPUT_DIM]>,
}

fn forward_cached(model: &LstmModel, sample: &TrainingSample) -> ForwardCache {
    let steps = sample.features.len();
    let h = model.hidden;
    let mut cache = ForwardCache {
        x: Vec::with_capacity(steps),
        gate_i: Vec::with_capacity(steps),
        gate_f: Vec::with_capacity(steps),
        gate_g: Vec::with_capacity(steps),
        gate_o: Vec::with_capacity(steps),
        c: Vec::with_capacity(steps),
        h: Vec::with_capacity(steps),
        y: Vec::with_capacity(steps),
    };
    let mut state = LstmState::zeros(h);
    for xi in &sample.features {
        let x = model.norm.normalize_input(&xi.channels());
        let mut gates: [Vec<f64>; 4] = std::array::from_fn(|g| model.b[g].clone());
        for g in 0..4 {
            model.wx[g].matvec_acc(&x, &mut gates[g]);
            model.wh[g].matvec_acc(&state.h, &mut gates[g]);
        }
        let mut gi = vec![0.0; h];
        let mut gf = vec![0.0; h];
        let mut gg = vec![0.0; h];
        let mut go = vec![0.0; h];
        for j in 0..h {
            gi[j] = sigmoid(gates[GATE_INPUT][j]);
            gf[j] = sigmoid(gates[GATE_FORGET][j]);
            gg[j] = gates[GATE_CELL][j].tanh();
            go[j] = sigmoid(gates[GATE_OUTPUT][j]);
            state.c[j] = gf[j] * state.c[j] + gi[j] * gg[j];
            state.h[j] = go[j] * state.c[j].tanh();
        }
        let mut y = model.dense_b;
        model.dense_w.matvec_acc(&state.h, &mut y);
        cache.x.push(x);
        cache.gate_i.push(gi);
        cache.gate_f.push(gf);
        cache.gate_g.push(gg);
        cache.gate_o.push(go);
        cache.c.push(state.c.clone());
        cache.h.push(state.h.clone());
        cache.y.push(y);
    }
    cache
}

/// Backpropagation through time for one sample. Returns unnormalized
/// quantities: the gradient of sum_t |y_t - target_t|^2 (normalized target
/// space) and that sum itself, plus the step count. The batch wrapper
/// divides by the total step-component count.
pub(crate) fn bptt_sample(model: &LstmModel, sample: &TrainingSample) -> (LstmGradients, f64, usize) {
    let steps = sample.features.len();
    let h = model.hidden;
    let cache = forward_cached(model, sample);
    let mut grads = LstmGradients::zeros(h);
    let mut loss = 0.0;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let zero_state = vec![0.0; h];
    for t in (0..steps).rev() {
        let target = model.norm.normalize_target(sample.targets[t]);
        // d sum (y-tau)^2 / dy = 2 (y - tau)
        let dy = [
            2.0 * (cache.y[t][0] - target[0]),
            2.0 * (cache.y[t][1] - target[1]),
        ];
        loss += (cache.y[t][0] - target[0]).powi(2) + (cache.y[t][1] - target[1]).powi(2);
        grads.dense_w.add_outer(&dy, &cache.h[t]);
        grads.dense_b[0] += dy[0];
        grads.dense_b[1] += dy[1];
        let mut dh = std::mem::take(&mut dh_next);
        model.dense_w.t_matvec_acc(&dy, &mut dh);
        let c_prev: &[f64] = if t == 0 { &zero_state } else { &cache.c[t - 1] };
        let h_prev: &[f64] = if t == 0 { &zero_state } else { &cache.h[t - 1] };
        let mut da_i = vec![0.0; h];
        let mut da_f = vec![0.0; h];
        let mut da_g = vec![0.0; h];
        let mut da_o = vec![0.0; h];
        let mut dc_prev = vec![0.0; h];
        for j in 0..h {
            let (i, f, g, o) = (
                cache.gate_i[t][j],
                cache.gate_f[t][j],
                cache.gate_g[t][j],
                cache.gate_o[t][j],
            );
            let tc = cache.c[t][j].tanh();
            let do_ = dh[j] * tc;
            let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
            da_i[j] = dc * g * i * (1.0 - i);
            da_f[j] = dc * c_prev[j] * f * (1.0 - f);
            da_g[j] = dc * i * (1.0 - g * g);
            da_o[j] = do_ * o * (1.0 - o);
            dc_prev[j] = dc * f;
        }
        dc_next = dc_prev;
        dh_next = vec![0.0; h];
        for (gate, da) in [(GATE_INPUT, &da_i), (GATE_FORGET, &da_f), (GATE_CELL, &da_g), (GATE_OUTPUT, &da_o)] {
            grads.wx[gate].add_outer(da, &cache.x[t]);
            grads.wh[gate].add_outer(da, h_prev);
            for j in 0..h {
                grads.b[gate][j] += da[j];
            }
            model.wh[gate].t_matvec_acc(da, &mut dh_next);
        }
    }
    (grads, loss, steps)
}

/// Mean-squared-error loss and its exact gradients over a batch of windows.
/// The loss is the mean of squared normalized residuals over every step and
/// output component in the batch.
pub fn lstm_gradients(
    model: &LstmModel,
    batch: &[TrainingSample],
) -> Result<(LstmGradients, f64), LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    for sample in batch {
        if sample.features.len() != sample.targets.len() {
            return Err(LearnError::Model(format!(
                "sample features/targets length mismatch: {} vs {}",
                sample.features.len(),
                sample.targets.len()
            )));
        }
    }
    let mut total = LstmGradients::zeros(model.hidden);
    let mut loss_raw = 0.0;
    let mut steps = 0usize;
    for sample in batch {
        if sample.features.is_empty() {
            continue;
        }
        let (g, l, n) = bptt_sample(model, sample);
        total.add_scaled(&g, 1.0);
        loss_raw += l;
        steps += n;
    }
    if steps == 0 {
        return Err(LearnError::EmptyBatch);
    }
    let scale = 1.0 / (steps * OUTPUT_DIM) as f64;
    for g in 0..4 {
        for v in &mut total.wx[g].data {
            *v *= scale;
        }
        for v in &mut total.wh[g].data {
            *v *= scale;
        }
        for v in &mut total.b[g] {
            *v *= scale;
        }
    }
    for v in &mut total.dense_w.data {
        *v *= scale;
    }
    for v in &mut total.dense_b {
        *v *= scale;
    }
    Ok((total, loss_raw * scale))
}

/// Batch loss only (no gradients); used for epoch logging.
pub fn lstm_loss(model: &LstmModel, batch: &[TrainingSample]) -> Result<f64, LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let mut loss = 0.0;
    let mut steps = 0usize;
    for sample in batch {
        let cache = forward_cached(model, sample);
        for (t, y) in cache.y.iter().enumerate() {
            let target = model.norm.normalize_target(sample.targets[t]);
            loss += (y[0] - target[0]).powi(2) + (y[1] - target[1]).powi(2);
        }
        steps += sample.features.len();
    }
    if steps == 0 {
        return Err(LearnError::EmptyBatch);
    }
    Ok(loss / (steps * OUTPUT_DIM) as f64)
}
