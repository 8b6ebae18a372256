//! The forecasting network and its ablation variants.
//!
//! Full pipeline (`performer_bilstm`):
//! features → affine embedding + sinusoidal positions → encoder blocks
//! (attention, residual + layer norm, ReLU feed-forward, residual + layer
//! norm) → two BiLSTM layers → last timestep → fully-connected stack →
//! one normalized close price.

pub mod checkpoint;
pub mod layers;
pub mod train;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::favor::draw_with_seed;
use crate::attention::{ExactKernel, FavorConfig, FavorDiagnostics, FavorKernel, MultiHeadAttention, RandomFeatureMap};
use crate::data::{DataError, Dataset, Split};
use crate::indicators::FeatureSet;
use crate::metrics::{MetricError, PredictionRow};
use crate::recurrent::{bilstm_sequence, LstmVars, LstmWeights};
use crate::tensor::{Tape, Tensor, TensorError, Var};

use layers::{dense, dropout, glorot, positional_encoding, LayerNorm};

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use train::{train, EpochRecord, TrainParams, TrainReport};

/// Number of stacked BiLSTM layers in the recurrent head.
pub const BILSTM_LAYERS: usize = 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input does not match the model: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence { epoch: usize, step: usize, detail: String },
    #[error("split {0} has no windows")]
    EmptySplit(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    BilstmOnly,
    TransformerMh,
    TransformerMhNoIndicators,
    Performer,
    PerformerBilstm,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BilstmOnly,
        Variant::TransformerMh,
        Variant::TransformerMhNoIndicators,
        Variant::Performer,
        Variant::PerformerBilstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::BilstmOnly => "bilstm_only",
            Variant::TransformerMh => "transformer_mh",
            Variant::TransformerMhNoIndicators => "transformer_mh_no_indicators",
            Variant::Performer => "performer",
            Variant::PerformerBilstm => "performer_bilstm",
        }
    }

    pub fn feature_set(self) -> FeatureSet {
        match self {
            Variant::TransformerMhNoIndicators => FeatureSet::Ohlcv,
            _ => FeatureSet::Indicators,
        }
    }

    pub fn has_encoder(self) -> bool {
        self != Variant::BilstmOnly
    }

    pub fn uses_favor(self) -> bool {
        matches!(self, Variant::Performer | Variant::PerformerBilstm)
    }

    pub fn has_bilstm(self) -> bool {
        matches!(self, Variant::BilstmOnly | Variant::PerformerBilstm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Lookback length `L`.
    pub window: usize,
    pub d_model: usize,
    pub blocks: usize,
    pub heads: usize,
    /// Feed-forward width; `None` means `2·d_model`.
    pub d_ff: Option<usize>,
    /// Random-feature settings; required by the performer variants only.
    pub favor: Option<FavorConfig>,
    pub bilstm_hidden: usize,
    /// Widths of the fully-connected stack; the last must be 1.
    pub fc_widths: Vec<usize>,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            variant: Variant::PerformerBilstm,
            window: 64,
            d_model: 64,
            blocks: 2,
            heads: 4,
            d_ff: None,
            favor: Some(FavorConfig {
                r: 128,
                d_k: 16,
                seed: 0,
                causal: false,
                redraw_interval: None,
            }),
            bilstm_hidden: 64,
            fc_widths: vec![64, 1],
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl ModelSpec {
    /// The default hyperparameters adapted to `variant`.
    pub fn for_variant(variant: Variant) -> ModelSpec {
        let mut spec = ModelSpec {
            variant,
            ..ModelSpec::default()
        };
        if !variant.uses_favor() {
            spec.favor = None;
        }
        spec
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads.max(1)
    }

    pub fn ffn_width(&self) -> usize {
        self.d_ff.unwrap_or(2 * self.d_model)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.window == 0 {
            return bad("window must be ≥ 1".into());
        }
        if self.fc_widths.last() != Some(&1) || self.fc_widths.contains(&0) {
            return bad(format!("fc_widths {:?} must be positive and end in 1", self.fc_widths));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        let v = self.variant;
        if v.has_encoder() {
            if self.d_model == 0 || self.heads == 0 || self.blocks == 0 || self.ffn_width() == 0 {
                return bad("d_model, heads, blocks and d_ff must be positive".into());
            }
            if !self.d_model.is_multiple_of(self.heads) {
                return bad(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
            }
        }
        match (&self.favor, v.uses_favor()) {
            (None, true) => return bad(format!("{} needs a favor configuration", v.as_str())),
            (Some(_), false) => return bad(format!("{} takes no favor configuration", v.as_str())),
            (Some(f), true) => {
                f.validate().map_err(|e| ModelError::Config(e.to_string()))?;
                if f.d_k != self.d_k() {
                    return bad(format!("favor.d_k {} must equal d_model/heads = {}", f.d_k, self.d_k()));
                }
            }
            (None, false) => {}
        }
        if v.has_bilstm() && self.bilstm_hidden == 0 {
            return bad("bilstm_hidden must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Exact,
    Favor,
}

#[derive(Clone, Debug)]
struct BlockSlots {
    w_q: usize,
    w_k: usize,
    w_v: usize,
    w_o: usize,
    ln1: (usize, usize),
    ff1: (usize, usize),
    ff2: (usize, usize),
    ln2: (usize, usize),
}

#[derive(Clone, Debug, Default)]
struct Layout {
    embed: Option<(usize, usize)>,
    blocks: Vec<BlockSlots>,
    lstm: Vec<[[usize; 8]; 2]>,
    fc: Vec<(usize, usize)>,
}

struct Builder {
    params: Vec<Tensor>,
    names: Vec<String>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn add(&mut self, name: String, t: Tensor) -> usize {
        self.params.push(t);
        self.names.push(name);
        self.params.len() - 1
    }

    fn dense(&mut self, name: &str, rows: usize, cols: usize) -> (usize, usize) {
        let w = glorot(rows, cols, &mut self.rng);
        (self.add(format!("{name}.w"), w), self.add(format!("{name}.b"), Tensor::zeros(&[cols])))
    }

    fn layer_norm(&mut self, name: &str, d: usize) -> (usize, usize) {
        (
            self.add(format!("{name}.gamma"), Tensor::filled(&[d], 1.0)),
            self.add(format!("{name}.beta"), Tensor::zeros(&[d])),
        )
    }

    fn lstm(&mut self, name: &str, input: usize, hidden: usize) -> [usize; 8] {
        let w = LstmWeights::init(input, hidden, &mut self.rng);
        let labels = ["w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o"];
        let mut slots = [0; 8];
        for (k, t) in w.tensors().into_iter().enumerate() {
            slots[k] = self.add(format!("{name}.{}", labels[k]), t.clone());
        }
        slots
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    n_features: usize,
    params: Vec<Tensor>,
    names: Vec<String>,
    layout: Layout,
    kernel: AttentionKind,
    maps: Vec<Arc<RandomFeatureMap>>,
    feature_draws: u64,
    retired: FavorDiagnostics,
}

fn block_seed(cfg: &FavorConfig, block: usize, draw: u64) -> u64 {
    cfg.redraw_seed(draw).wrapping_add((block as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

impl Model {
    /// Deterministically initialized model for inputs with `n_features` columns.
    pub fn build(spec: &ModelSpec, n_features: usize) -> Result<Model> {
        spec.validate()?;
        if n_features == 0 {
            return Err(ModelError::Config("model needs at least one input feature".into()));
        }
        let mut b = Builder {
            params: Vec::new(),
            names: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        };
        let mut layout = Layout::default();
        let mut width = n_features;
        if spec.variant.has_encoder() {
            let d = spec.d_model;
            layout.embed = Some(b.dense("embed", n_features, d));
            for i in 0..spec.blocks {
                let p = format!("block{i}");
                let mut proj = |name: &str| {
                    let w = glorot(d, d, &mut b.rng);
                    b.add(format!("{p}.{name}"), w)
                };
                let (w_q, w_k, w_v, w_o) = (proj("w_q"), proj("w_k"), proj("w_v"), proj("w_o"));
                let ln1 = b.layer_norm(&format!("{p}.ln1"), d);
                let ff1 = b.dense(&format!("{p}.ff1"), d, spec.ffn_width());
                let ff2 = b.dense(&format!("{p}.ff2"), spec.ffn_width(), d);
                let ln2 = b.layer_norm(&format!("{p}.ln2"), d);
                layout.blocks.push(BlockSlots {
                    w_q,
                    w_k,
                    w_v,
                    w_o,
                    ln1,
                    ff1,
                    ff2,
                    ln2,
                });
            }
            width = d;
        }
        if spec.variant.has_bilstm() {
            for layer in 0..BILSTM_LAYERS {
                let fwd = b.lstm(&format!("bilstm{layer}.fwd"), width, spec.bilstm_hidden);
                let bwd = b.lstm(&format!("bilstm{layer}.bwd"), width, spec.bilstm_hidden);
                layout.lstm.push([fwd, bwd]);
                width = 2 * spec.bilstm_hidden;
            }
        }
        for (i, &out) in spec.fc_widths.iter().enumerate() {
            layout.fc.push(b.dense(&format!("fc{i}"), width, out));
            width = out;
        }
        let kernel = if spec.variant.uses_favor() {
            AttentionKind::Favor
        } else {
            AttentionKind::Exact
        };
        let mut model = Model {
            spec: spec.clone(),
            n_features,
            params: b.params,
            names: b.names,
            layout,
            kernel,
            maps: Vec::new(),
            feature_draws: 0,
            retired: FavorDiagnostics::default(),
        };
        model.draw_maps()?;
        Ok(model)
    }

    fn draw_maps(&mut self) -> Result<()> {
        self.maps.clear();
        if let Some(cfg) = &self.spec.favor {
            for block in 0..self.spec.blocks {
                let seed = block_seed(cfg, block, self.feature_draws);
                self.maps.push(Arc::new(draw_with_seed(cfg.r, cfg.d_k, seed)?));
            }
        }
        Ok(())
    }

    /// Replaces every block's random features with the next seeded draw.
    pub fn redraw_features(&mut self) -> Result<()> {
        let d = self.favor_diagnostics();
        self.retired = d;
        self.feature_draws += 1;
        self.draw_maps()
    }

    pub fn feature_draws(&self) -> u64 {
        self.feature_draws
    }

    pub(crate) fn set_feature_draws(&mut self, draws: u64) -> Result<()> {
        self.feature_draws = draws;
        self.draw_maps()
    }

    /// Guard counters summed over all feature maps this model has used.
    pub fn favor_diagnostics(&self) -> FavorDiagnostics {
        self.maps.iter().fold(self.retired, |acc, m| {
            let d = m.diagnostics();
            FavorDiagnostics {
                exponent_clamps: acc.exponent_clamps + d.exponent_clamps,
                denominator_floors: acc.denominator_floors + d.denominator_floors,
            }
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Number of scalars in attention projections (`W_Q, W_K, W_V, W_O`).
    pub fn attention_param_count(&self) -> usize {
        self.layout
            .blocks
            .iter()
            .map(|b| [b.w_q, b.w_k, b.w_v, b.w_o].iter().map(|&i| self.params[i].numel()).sum::<usize>())
            .sum()
    }

    pub fn attention_kind(&self) -> AttentionKind {
        self.kernel
    }

    /// The same weights with every attention layer evaluated exactly.
    pub fn with_exact_attention(&self) -> Model {
        Model {
            kernel: AttentionKind::Exact,
            ..self.clone()
        }
    }

    /// Records the network on `tape`.
    ///
    /// `params` holds one handle per parameter in [`Model::params`] order and
    /// `x` is a `[batch, L, F]` input. With `dropout_rng` set, dropout is
    /// active. Returns the `[batch, 1]` normalized prediction.
    pub fn record(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(ModelError::Shape(format!("{} parameter handles for {} parameters", params.len(), self.params.len())));
        }
        let (batch, len, f) = tape.value(x).dims3("model input")?;
        if len != self.spec.window || f != self.n_features {
            return Err(ModelError::Shape(format!(
                "input [{batch}, {len}, {f}] against window {} with {} features",
                self.spec.window, self.n_features
            )));
        }
        let p = |i: usize| params[i];
        let rate = self.spec.dropout;
        let mut h = x;
        if let Some((w, b)) = self.layout.embed {
            let d = self.spec.d_model;
            let flat = tape.reshape(x, &[batch * len, f])?;
            let mut e = dense(tape, flat, p(w), p(b))?;
            let pe = positional_encoding(len, d);
            let tiled: Vec<f64> = (0..batch).flat_map(|_| pe.data().iter().copied()).collect();
            let pe = tape.constant(Tensor::new(&[batch * len, d], tiled)?);
            e = tape.add(e, pe)?;
            for (bi, slots) in self.layout.blocks.iter().enumerate() {
                let project = |tape: &mut Tape, w: usize| -> Result<Var> {
                    let y = tape.matmul(e, p(w))?;
                    Ok(tape.reshape(y, &[batch, len, d])?)
                };
                let q = project(tape, slots.w_q)?;
                let k = project(tape, slots.w_k)?;
                let v = project(tape, slots.w_v)?;
                let heads = self.spec.heads;
                let att = match self.kernel {
                    AttentionKind::Exact => {
                        MultiHeadAttention::new(ExactKernel { causal: self.causal() }, heads).record(tape, q, k, v)?
                    }
                    AttentionKind::Favor => {
                        let kernel = FavorKernel::new(self.maps[bi].clone(), self.causal());
                        MultiHeadAttention::new(kernel, heads).record(tape, q, k, v)?
                    }
                };
                let att = tape.reshape(att, &[batch * len, d])?;
                let mut att = tape.matmul(att, p(slots.w_o))?;
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    att = dropout(tape, att, rate, rng)?;
                }
                let res = tape.add(e, att)?;
                e = LayerNorm::record(tape, res, p(slots.ln1.0), p(slots.ln1.1))?;
                let hidden = dense(tape, e, p(slots.ff1.0), p(slots.ff1.1))?;
                let hidden = tape.relu(hidden)?;
                let mut ff = dense(tape, hidden, p(slots.ff2.0), p(slots.ff2.1))?;
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    ff = dropout(tape, ff, rate, rng)?;
                }
                let res = tape.add(e, ff)?;
                e = LayerNorm::record(tape, res, p(slots.ln2.0), p(slots.ln2.1))?;
            }
            h = tape.reshape(e, &[batch, len, d])?;
        }
        for [fwd, bwd] in &self.layout.lstm {
            let vars = |s: &[usize; 8]| LstmVars {
                w: [p(s[0]), p(s[1]), p(s[2]), p(s[3])],
                b: [p(s[4]), p(s[5]), p(s[6]), p(s[7])],
            };
            h = bilstm_sequence(tape, &vars(fwd), &vars(bwd), h)?;
        }
        let mut out = tape.select_time(h, len - 1)?;
        let last = self.layout.fc.len() - 1;
        for (i, &(w, b)) in self.layout.fc.iter().enumerate() {
            out = dense(tape, out, p(w), p(b))?;
            if i < last {
                out = tape.relu(out)?;
            }
        }
        Ok(out)
    }

    fn causal(&self) -> bool {
        self.spec.favor.as_ref().is_some_and(|f| f.causal)
    }

    /// Normalized predictions for a `[batch, L, F]` input.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|t| tape.constant(t.clone())).collect();
        let x = tape.constant(x.clone());
        let y = self.record(&mut tape, &vars, x, None)?;
        Ok(tape.value(y).data().to_vec())
    }

    /// Prediction for a single `L × F` window.
    pub fn forward(&self, window: &Tensor) -> Result<f64> {
        let (l, f) = window.dims2("model input")?;
        Ok(self.predict(&window.reshape(&[1, l, f])?)?[0])
    }
}

/// Anything that maps dataset windows to normalized next-close predictions.
pub trait Predictor {
    fn predict_windows(&self, ds: &Dataset, windows: &[usize]) -> Result<Vec<f64>>;
}

const PREDICT_CHUNK: usize = 64;

impl Predictor for Model {
    fn predict_windows(&self, ds: &Dataset, windows: &[usize]) -> Result<Vec<f64>> {
        if ds.n_features() != self.n_features || ds.window != self.spec.window {
            return Err(ModelError::Shape(format!(
                "dataset has {} features and window {}, model expects {} and {}",
                ds.n_features(),
                ds.window,
                self.n_features,
                self.spec.window
            )));
        }
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(PREDICT_CHUNK) {
            out.extend(self.predict(&ds.batch(chunk))?);
        }
        Ok(out)
    }
}

/// One-step-ahead predictions over `split`, in price units.
pub fn predict_series(model: &dyn Predictor, ds: &Dataset, split: Split) -> Result<Vec<PredictionRow>> {
    let windows: Vec<usize> = ds.splits.get(split).collect();
    if windows.is_empty() {
        return Err(ModelError::EmptySplit(split.as_str()));
    }
    let preds = model.predict_windows(ds, &windows)?;
    Ok(windows
        .iter()
        .zip(preds)
        .map(|(&w, z)| PredictionRow {
            timestamp: ds.target_timestamp(w),
            actual: ds.target_price(w),
            predicted: ds.denormalize_close(z),
        })
        .collect())
}
