//! Softmax attention (exact) and its FAVOR+ random-feature approximation.
//!
//! Both families are written as per-head kernels over flat row-major
//! buffers ([`HeadKernel`]). [`MultiHeadAttention`] lifts a kernel to
//! `[batch, seq, heads·width]` tensors on the gradient tape; the plain
//! functions in [`exact`] and [`favor`] operate on single `L × d` matrices.

pub mod exact;
pub mod favor;
pub mod probe;

use serde::{Deserialize, Serialize};

use crate::tensor::{Function, Result, Tape, Tensor, TensorError, Var};

pub use exact::{
    exact_bidirectional, exact_unidirectional, multi_head, scaled_dot_attention, ExactKernel,
};
pub use favor::{
    draw_features, favor_bidirectional, favor_unidirectional, phi_positive, FavorConfig,
    FavorDiagnostics, FavorKernel, RandomFeatureMap,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub causal: bool,
}

impl AttentionConfig {
    /// Even split of `d_model` across `heads`.
    pub fn new(d_model: usize, heads: usize, causal: bool) -> Result<Self> {
        let cfg = AttentionConfig {
            d_model,
            heads,
            d_k: d_model.checked_div(heads).unwrap_or(0),
            d_v: d_model.checked_div(heads).unwrap_or(0),
            causal,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_k == 0 || self.d_v == 0 {
            return Err(TensorError::Contract(format!(
                "attention dimensions must be positive: {self:?}"
            )));
        }
        if self.heads * self.d_k != self.d_model || self.heads * self.d_v != self.d_model {
            return Err(TensorError::Contract(format!(
                "heads·d_k and heads·d_v must equal d_model: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-head projections and the shared output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    /// `d_model × d_k`, one per head.
    pub w_q: Vec<Tensor>,
    /// `d_model × d_k`, one per head.
    pub w_k: Vec<Tensor>,
    /// `d_model × d_v`, one per head.
    pub w_v: Vec<Tensor>,
    /// `heads·d_v × d_model`.
    pub w_o: Tensor,
}

impl AttentionWeights {
    pub fn check(&self, cfg: &AttentionConfig) -> Result<()> {
        cfg.validate()?;
        let bad = |what: &str, got: &[usize], want: [usize; 2]| {
            TensorError::dim(
                "multi_head",
                format!("{what} has shape {got:?}, expected {want:?}"),
            )
        };
        for (name, mats, width) in [
            ("W_Q", &self.w_q, cfg.d_k),
            ("W_K", &self.w_k, cfg.d_k),
            ("W_V", &self.w_v, cfg.d_v),
        ] {
            if mats.len() != cfg.heads {
                return Err(TensorError::dim(
                    "multi_head",
                    format!("{name} has {} heads, config says {}", mats.len(), cfg.heads),
                ));
            }
            for m in mats {
                if m.shape() != [cfg.d_model, width] {
                    return Err(bad(name, m.shape(), [cfg.d_model, width]));
                }
            }
        }
        if self.w_o.shape() != [cfg.heads * cfg.d_v, cfg.d_model] {
            return Err(bad("W_o", self.w_o.shape(), [cfg.heads * cfg.d_v, cfg.d_model]));
        }
        Ok(())
    }
}

/// Gradients of one head with respect to its query, key and value blocks.
pub struct HeadGrads {
    pub dq: Vec<f64>,
    pub dk: Vec<f64>,
    pub dv: Vec<f64>,
}

/// Self-attention over one head: `q`, `k` are `len × dk`, `v` is `len × dv`.
pub trait HeadKernel {
    fn name(&self) -> &'static str;
    fn forward(&self, q: &[f64], k: &[f64], v: &[f64], len: usize, dk: usize, dv: usize) -> Vec<f64>;
    fn backward(
        &self,
        q: &[f64],
        k: &[f64],
        v: &[f64],
        len: usize,
        dk: usize,
        dv: usize,
        grad_out: &[f64],
    ) -> HeadGrads;
}

/// Tape function applying a [`HeadKernel`] independently to every head of
/// every batch item. Inputs are `[B, L, heads·d_k]`, `[B, L, heads·d_k]`,
/// `[B, L, heads·d_v]`; rank-2 inputs are treated as a batch of one.
pub struct MultiHeadAttention<K> {
    pub kernel: K,
    pub heads: usize,
}

struct Layout {
    batch: usize,
    len: usize,
    dk: usize,
    dv: usize,
}

impl<K: HeadKernel> MultiHeadAttention<K> {
    pub fn new(kernel: K, heads: usize) -> Self {
        MultiHeadAttention { kernel, heads }
    }

    /// Records the attention on `tape`.
    pub fn record(self, tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var>
    where
        K: 'static,
    {
        tape.apply(Box::new(self), &[q, k, v])
    }

    fn layout(&self, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Layout> {
        let split = |t: &Tensor| -> Result<(usize, usize, usize)> {
            match t.shape() {
                &[l, f] => Ok((1, l, f)),
                &[b, l, f] => Ok((b, l, f)),
                s => Err(TensorError::dim("attention", format!("unsupported shape {s:?}"))),
            }
        };
        let (bq, lq, fq) = split(q)?;
        let (bk, lk, fk) = split(k)?;
        let (bv, lv, fv) = split(v)?;
        if bq != bk || bq != bv || lq != lk || lq != lv || fq != fk {
            return Err(TensorError::dim(
                "attention",
                format!("Q {:?}, K {:?}, V {:?}", q.shape(), k.shape(), v.shape()),
            ));
        }
        if fq % self.heads != 0 || fv % self.heads != 0 {
            return Err(TensorError::dim(
                "attention",
                format!("widths {fq}/{fv} not divisible by {} heads", self.heads),
            ));
        }
        Ok(Layout {
            batch: bq,
            len: lq,
            dk: fq / self.heads,
            dv: fv / self.heads,
        })
    }
}

fn gather_head(src: &[f64], b: usize, h: usize, len: usize, width: usize, heads: usize) -> Vec<f64> {
    let stride = width * heads;
    let mut out = Vec::with_capacity(len * width);
    for t in 0..len {
        let off = (b * len + t) * stride + h * width;
        out.extend_from_slice(&src[off..off + width]);
    }
    out
}

fn scatter_head(dst: &mut [f64], src: &[f64], b: usize, h: usize, len: usize, width: usize, heads: usize) {
    let stride = width * heads;
    for t in 0..len {
        let off = (b * len + t) * stride + h * width;
        dst[off..off + width].copy_from_slice(&src[t * width..(t + 1) * width]);
    }
}

impl<K: HeadKernel> Function for MultiHeadAttention<K> {
    fn name(&self) -> &'static str {
        self.kernel.name()
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (q, k, v) = (inputs[0], inputs[1], inputs[2]);
        let lay = self.layout(q, k, v)?;
        let mut out = vec![0.0; v.numel()];
        for b in 0..lay.batch {
            for h in 0..self.heads {
                let qh = gather_head(q.data(), b, h, lay.len, lay.dk, self.heads);
                let kh = gather_head(k.data(), b, h, lay.len, lay.dk, self.heads);
                let vh = gather_head(v.data(), b, h, lay.len, lay.dv, self.heads);
                let oh = self.kernel.forward(&qh, &kh, &vh, lay.len, lay.dk, lay.dv);
                scatter_head(&mut out, &oh, b, h, lay.len, lay.dv, self.heads);
            }
        }
        Tensor::new(v.shape(), out)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &[f64]) -> Result<Vec<Option<Vec<f64>>>> {
        let (q, k, v) = (inputs[0], inputs[1], inputs[2]);
        let lay = self.layout(q, k, v)?;
        let mut dq = vec![0.0; q.numel()];
        let mut dk = vec![0.0; k.numel()];
        let mut dv = vec![0.0; v.numel()];
        for b in 0..lay.batch {
            for h in 0..self.heads {
                let qh = gather_head(q.data(), b, h, lay.len, lay.dk, self.heads);
                let kh = gather_head(k.data(), b, h, lay.len, lay.dk, self.heads);
                let vh = gather_head(v.data(), b, h, lay.len, lay.dv, self.heads);
                let gh = gather_head(grad, b, h, lay.len, lay.dv, self.heads);
                let g = self.kernel.backward(&qh, &kh, &vh, lay.len, lay.dk, lay.dv, &gh);
                scatter_head(&mut dq, &g.dq, b, h, lay.len, lay.dk, self.heads);
                scatter_head(&mut dk, &g.dk, b, h, lay.len, lay.dk, self.heads);
                scatter_head(&mut dv, &g.dv, b, h, lay.len, lay.dv, self.heads);
            }
        }
        Ok(vec![Some(dq), Some(dk), Some(dv)])
    }
}

pub(crate) fn check_qkv(op: &'static str, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize, usize)> {
    let (lq, dq) = q.dims2(op)?;
    let (lk, dk) = k.dims2(op)?;
    let (lv, dv) = v.dims2(op)?;
    if lq != lk || lq != lv || dq != dk {
        return Err(TensorError::dim(
            op,
            format!("Q {:?}, K {:?}, V {:?}", q.shape(), k.shape(), v.shape()),
        ));
    }
    Ok((lq, dq, dv))
}
