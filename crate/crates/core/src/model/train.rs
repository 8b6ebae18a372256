//! Mini-batch training with Adam and global-norm gradient clipping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_series, Model, ModelError, Predictor, Result};
use crate::attention::FavorDiagnostics;
use crate::data::{Dataset, Split};
use crate::metrics::MetricSet;
use crate::tensor::{Tape, Tensor, Var};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Samples per gradient work unit. Batches are always cut into chunks of
/// this size and chunk gradients are summed in order, so results do not
/// depend on how many threads process the chunks.
pub const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Maximum global L2 norm of the gradient.
    pub grad_clip: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 50,
            batch: 32,
            lr: 1e-3,
            grad_clip: 1.0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(ModelError::Config("batch must be ≥ 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(ModelError::Config(format!("lr {} must be finite and ≥ 0", self.lr)));
        }
        if !(self.grad_clip.is_finite() && self.grad_clip > 0.0) {
            return Err(ModelError::Config(format!("grad_clip {} must be > 0", self.grad_clip)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error over the training windows, normalized units,
    /// accumulated during the epoch's updates.
    pub train_loss: f64,
    /// Mean squared error over the validation windows after the epoch.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: String,
    pub param_count: usize,
    pub seed: u64,
    pub train_windows: usize,
    pub validation_windows: usize,
    pub steps: usize,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (by validation loss).
    pub best_epoch: Option<usize>,
    /// Validation metrics of the kept parameters, in price units.
    pub validation: Option<MetricSet>,
    pub feature_draws: u64,
    pub favor: FavorDiagnostics,
}

/// Worker threads for gradient chunks: `FF_THREADS` if set, capped by the
/// available parallelism.
pub fn worker_threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("FF_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n >= 1 => n.min(available),
        _ => available,
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &[Tensor]) -> Adam {
        Adam {
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                let g = grads[i][j];
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
                *x -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Model {
    /// Batch MSE (normalized units) and its gradient for every parameter.
    ///
    /// `dropout_seed` enables dropout with masks derived from the seed and
    /// the chunk index.
    pub fn loss_and_grads(
        &self,
        ds: &Dataset,
        windows: &[usize],
        dropout_seed: Option<u64>,
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let total = windows.len() as f64;
        let work = |(ci, chunk): (usize, &[usize])| -> Result<(f64, Vec<Vec<f64>>)> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = self.params.iter().map(|t| tape.param(t.clone())).collect();
            let x = tape.constant(ds.batch(chunk));
            let mut rng = dropout_seed.map(|s| ChaCha8Rng::seed_from_u64(mix(s, ci as u64, 0)));
            let pred = self.record(&mut tape, &vars, x, rng.as_mut())?;
            let target = tape.constant(Tensor::new(&[chunk.len(), 1], ds.targets(chunk))?);
            let diff = tape.sub(pred, target)?;
            let sq = tape.mul(diff, diff)?;
            let sum = tape.sum(sq)?;
            let loss = tape.scale(sum, 1.0 / total)?;
            tape.backward(loss)?;
            let grads = vars
                .iter()
                .map(|&v| tape.grad(v).expect("parameters are differentiable").into_data())
                .collect();
            Ok((tape.value(loss).data()[0], grads))
        };
        let chunks: Vec<(usize, &[usize])> = windows.chunks(GRAD_CHUNK).enumerate().collect();
        let parts: Vec<Result<(f64, Vec<Vec<f64>>)>> = match pool {
            Some(pool) if pool.current_num_threads() > 1 => pool.install(|| chunks.par_iter().map(|&c| work(c)).collect()),
            _ => chunks.iter().map(|&c| work(c)).collect(),
        };
        let mut loss = 0.0;
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.numel()]).collect();
        for part in parts {
            let (l, g) = part?;
            loss += l;
            for (acc, gi) in grads.iter_mut().zip(g) {
                for (a, b) in acc.iter_mut().zip(gi) {
                    *a += b;
                }
            }
        }
        Ok((loss, grads))
    }

    /// Mean squared error in normalized units over `windows`, dropout off.
    pub fn mse_on(&self, ds: &Dataset, windows: &[usize]) -> Result<f64> {
        let preds = self.predict_windows(ds, windows)?;
        let sq: f64 = preds.iter().zip(windows).map(|(p, &w)| (p - ds.target(w)).powi(2)).sum();
        Ok(sq / windows.len() as f64)
    }
}

fn clip(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// Trains `model` in place on the training split of `ds`.
///
/// Windows are shuffled each epoch with a generator seeded from the model
/// seed. After every epoch the validation loss is measured; the parameters
/// of the best epoch are restored at the end. Any non-finite loss, gradient
/// or activation aborts with [`ModelError::Divergence`].
pub fn train(model: &mut Model, ds: &Dataset, hp: &TrainParams) -> Result<TrainReport> {
    hp.validate()?;
    let train_windows: Vec<usize> = ds.splits.train.clone().collect();
    let val_windows: Vec<usize> = ds.splits.validation.clone().collect();
    if train_windows.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    let threads = worker_threads();
    let pool = if threads > 1 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok()
    } else {
        None
    };
    let seed = model.spec.seed;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x7EA1, 1));
    let mut adam = Adam::new(&model.params);
    let redraw = model.spec.favor.as_ref().and_then(|f| f.redraw_interval).filter(|&n| n > 0);
    let mut order = train_windows.clone();
    let mut epochs = Vec::with_capacity(hp.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>, u64)> = None;
    let mut step = 0usize;
    let dropout_on = model.spec.dropout > 0.0;

    for epoch in 1..=hp.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for batch in order.chunks(hp.batch) {
            step += 1;
            let diverged = |detail: String| ModelError::Divergence { epoch, step, detail };
            let dropout_seed = dropout_on.then(|| mix(seed, step as u64, 2));
            let (loss, mut grads) = match model.loss_and_grads(ds, batch, dropout_seed, pool.as_ref()) {
                Ok(v) => v,
                Err(ModelError::Tensor(e)) => return Err(diverged(e.to_string())),
                Err(e) => return Err(e),
            };
            let norm = clip(&mut grads, hp.grad_clip);
            if !loss.is_finite() || !norm.is_finite() {
                return Err(diverged(format!("loss {loss}, gradient norm {norm}")));
            }
            adam.step(&mut model.params, &grads, hp.lr);
            if model.params.iter().any(|p| p.data().iter().any(|v| !v.is_finite())) {
                return Err(diverged("non-finite parameter after update".into()));
            }
            weighted += loss * batch.len() as f64;
            if redraw.is_some_and(|n| step.is_multiple_of(n)) {
                model.redraw_features()?;
            }
        }
        let train_loss = weighted / train_windows.len() as f64;
        let val_loss = if val_windows.is_empty() {
            None
        } else {
            let v = match model.mse_on(ds, &val_windows) {
                Ok(v) => v,
                Err(ModelError::Tensor(e)) => {
                    return Err(ModelError::Divergence {
                        epoch,
                        step,
                        detail: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            };
            if !v.is_finite() {
                return Err(ModelError::Divergence {
                    epoch,
                    step,
                    detail: format!("validation loss {v}"),
                });
            }
            Some(v)
        };
        log::info!("epoch {epoch}: train {train_loss:.6e}, validation {val_loss:?}");
        if let Some(v) = val_loss {
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, epoch, model.params.clone(), model.feature_draws));
            }
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
    }

    let best_epoch = match best {
        Some((_, epoch, params, draws)) => {
            model.params = params;
            if draws != model.feature_draws {
                let diag = model.favor_diagnostics();
                model.set_feature_draws(draws)?;
                model.retired = diag;
            }
            Some(epoch)
        }
        None => None,
    };
    let validation = if val_windows.len() >= 2 {
        let rows = predict_series(model, ds, Split::Validation)?;
        let actual: Vec<f64> = rows.iter().map(|r| r.actual).collect();
        let predicted: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
        MetricSet::compute(&actual, &predicted).ok()
    } else {
        None
    };
    Ok(TrainReport {
        variant: model.spec.variant.as_str().to_string(),
        param_count: model.param_count(),
        seed,
        train_windows: train_windows.len(),
        validation_windows: val_windows.len(),
        steps: step,
        epochs,
        best_epoch,
        validation,
        feature_draws: model.feature_draws,
        favor: model.favor_diagnostics(),
    })
}
