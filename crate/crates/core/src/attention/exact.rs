//! Exact softmax attention.
//!
//! `scaled_dot_attention` follows the textbook `softmax(QKᵀ/√d_k)·V` route
//! through [`Tensor::softmax_rows`]; `exact_bidirectional` and
//! `exact_unidirectional` build the attention matrix `A` and the diagonal
//! normaliser `D` explicitly. Rows of `A` are shifted by their maximum before
//! exponentiation, which cancels in `D⁻¹A`.

use super::{check_qkv, AttentionConfig, AttentionWeights, HeadGrads, HeadKernel};
use crate::tensor::{matmul_into, transpose_buf, Result, Tensor};

/// `softmax(Q·Kᵀ/√d_k)·V`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (_, dk, _) = check_qkv("scaled_dot_attention", q, k, v)?;
    let scale = 1.0 / (dk as f64).sqrt();
    let scores = q.matmul(&k.transpose()?)?.map(|s| s * scale)?;
    scores.softmax_rows()?.matmul(v)
}

/// `D⁻¹AV` with `A = exp(QKᵀ/√d_k)` over all key positions.
pub fn exact_bidirectional(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    exact(q, k, v, false)
}

/// `D̃⁻¹ÃV` with `Ã = tril(A)`: row `i` sees keys `0..=i` only.
pub fn exact_unidirectional(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    exact(q, k, v, true)
}

fn exact(q: &Tensor, k: &Tensor, v: &Tensor, causal: bool) -> Result<Tensor> {
    let (len, dk, dv) = check_qkv("exact_attention", q, k, v)?;
    let out = ExactKernel { causal }.forward(q.data(), k.data(), v.data(), len, dk, dv);
    Tensor::new(&[len, dv], out)
}

/// Row-normalised attention matrix `D⁻¹A` (or `D̃⁻¹Ã` when causal).
pub fn attention_weights(q: &Tensor, k: &Tensor, causal: bool) -> Result<Tensor> {
    let (len, dk) = q.dims2("attention_weights")?;
    check_qkv("attention_weights", q, k, k)?;
    Tensor::new(&[len, len], normalized_scores(q.data(), k.data(), len, dk, causal))
}

/// Self-attention with per-head projections, concatenation and `W_o`.
pub fn multi_head(x: &Tensor, w: &AttentionWeights, cfg: &AttentionConfig) -> Result<Tensor> {
    w.check(cfg)?;
    let (len, width) = x.dims2("multi_head")?;
    if width != cfg.d_model {
        return Err(crate::tensor::TensorError::dim(
            "multi_head",
            format!("input width {width}, d_model {}", cfg.d_model),
        ));
    }
    let kernel = ExactKernel { causal: cfg.causal };
    let mut concat = vec![0.0; len * cfg.heads * cfg.d_v];
    for h in 0..cfg.heads {
        let q = x.matmul(&w.w_q[h])?;
        let k = x.matmul(&w.w_k[h])?;
        let v = x.matmul(&w.w_v[h])?;
        let head = kernel.forward(q.data(), k.data(), v.data(), len, cfg.d_k, cfg.d_v);
        for t in 0..len {
            let dst = t * cfg.heads * cfg.d_v + h * cfg.d_v;
            concat[dst..dst + cfg.d_v].copy_from_slice(&head[t * cfg.d_v..(t + 1) * cfg.d_v]);
        }
    }
    Tensor::new(&[len, cfg.heads * cfg.d_v], concat)?.matmul(&w.w_o)
}

/// Materialises the `len × len` matrix `D⁻¹A`.
fn normalized_scores(q: &[f64], k: &[f64], len: usize, dk: usize, causal: bool) -> Vec<f64> {
    let scale = 1.0 / (dk as f64).sqrt();
    let kt = transpose_buf(k, len, dk);
    let mut a = vec![0.0; len * len];
    matmul_into(q, &kt, &mut a, len, dk, len);
    for (i, row) in a.chunks_mut(len).enumerate() {
        let visible = if causal { i + 1 } else { len };
        let max = row[..visible]
            .iter()
            .fold(f64::NEG_INFINITY, |m, &s| m.max(s * scale));
        let mut d = 0.0;
        for s in row[..visible].iter_mut() {
            *s = (*s * scale - max).exp();
            d += *s;
        }
        for s in row[..visible].iter_mut() {
            *s /= d;
        }
        row[visible..].fill(0.0);
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactKernel {
    pub causal: bool,
}

impl HeadKernel for ExactKernel {
    fn name(&self) -> &'static str {
        if self.causal {
            "exact_unidirectional"
        } else {
            "exact_bidirectional"
        }
    }

    fn forward(&self, q: &[f64], k: &[f64], v: &[f64], len: usize, dk: usize, dv: usize) -> Vec<f64> {
        let p = normalized_scores(q, k, len, dk, self.causal);
        let mut out = vec![0.0; len * dv];
        matmul_into(&p, v, &mut out, len, len, dv);
        out
    }

    fn backward(
        &self,
        q: &[f64],
        k: &[f64],
        v: &[f64],
        len: usize,
        dk: usize,
        dv: usize,
        grad_out: &[f64],
    ) -> HeadGrads {
        let scale = 1.0 / (dk as f64).sqrt();
        let p = normalized_scores(q, k, len, dk, self.causal);

        let pt = transpose_buf(&p, len, len);
        let mut grad_v = vec![0.0; len * dv];
        matmul_into(&pt, grad_out, &mut grad_v, len, len, dv);

        let vt = transpose_buf(v, len, dv);
        let mut ds = vec![0.0; len * len];
        matmul_into(grad_out, &vt, &mut ds, len, dv, len);
        for (ds_row, p_row) in ds.chunks_mut(len).zip(p.chunks(len)) {
            let dot: f64 = ds_row.iter().zip(p_row).map(|(g, p)| g * p).sum();
            for (g, &pv) in ds_row.iter_mut().zip(p_row) {
                *g = pv * (*g - dot) * scale;
            }
        }

        let mut grad_q = vec![0.0; len * dk];
        matmul_into(&ds, k, &mut grad_q, len, len, dk);
        let dst = transpose_buf(&ds, len, len);
        let mut grad_k = vec![0.0; len * dk];
        matmul_into(&dst, q, &mut grad_k, len, len, dk);

        HeadGrads {
            dq: grad_q,
            dk: grad_k,
            dv: grad_v,
        }
    }
}
