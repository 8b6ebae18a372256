//! FAVOR+: softmax attention through positive orthogonal random features.
//!
//! The feature map is
//!
//! ```text
//! φ(x) = r^{-1/2} · exp(−‖x‖²/2) · [exp(ω_1ᵀx), …, exp(ω_rᵀx)]
//! ```
//!
//! so that `E[φ(x)ᵀφ(y)] = exp(xᵀy)`. Queries and keys are pre-scaled by
//! `d_k^{-1/4}`, which makes the estimated kernel `exp(qᵀk/√d_k)`.
//! Projection rows `ω_i` are Gaussian directions orthogonalised in blocks of
//! `d_k` with χ-distributed norms.
//!
//! Neither kernel ever builds an `L × L` matrix: bidirectional attention
//! contracts `φ(K)ᵀV` first, causal attention keeps running prefix sums.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_qkv, HeadGrads, HeadKernel};
use crate::tensor::{matmul_into, transpose_buf, Result, Tensor, TensorError};

/// Exponent arguments above this are clamped before `exp` (ln f64::MAX ≈ 709.8).
pub const EXPONENT_CLAMP: f64 = 700.0;

/// Lower bound applied to `φ(q)ᵀz` denominators.
pub const DENOMINATOR_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FavorConfig {
    /// Random-feature count.
    pub r: usize,
    pub d_k: usize,
    pub seed: u64,
    pub causal: bool,
    /// Optimiser steps between feature redraws; `None` freezes the features.
    #[serde(default)]
    pub redraw_interval: Option<usize>,
}

impl FavorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.d_k == 0 {
            return Err(TensorError::Contract(format!(
                "FAVOR+ needs r ≥ 1 and d_k ≥ 1, got r={} d_k={}",
                self.r, self.d_k
            )));
        }
        if self.redraw_interval == Some(0) {
            return Err(TensorError::Contract("redraw_interval must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Seed for the `n`-th redraw (`n = 0` is the initial draw).
    pub fn redraw_seed(&self, n: u64) -> u64 {
        self.seed.wrapping_add(n.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

/// Counters for numerical guards that fired while evaluating FAVOR+.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FavorDiagnostics {
    pub exponent_clamps: u64,
    pub denominator_floors: u64,
}

/// The projection matrix `Ω` (`r × d_k`) plus guard counters.
#[derive(Debug)]
pub struct RandomFeatureMap {
    omega: Tensor,
    omega_t: Vec<f64>,
    exponent_clamps: AtomicU64,
    denominator_floors: AtomicU64,
}

impl Clone for RandomFeatureMap {
    fn clone(&self) -> Self {
        RandomFeatureMap {
            omega: self.omega.clone(),
            omega_t: self.omega_t.clone(),
            exponent_clamps: AtomicU64::new(self.exponent_clamps.load(Ordering::Relaxed)),
            denominator_floors: AtomicU64::new(self.denominator_floors.load(Ordering::Relaxed)),
        }
    }
}

impl RandomFeatureMap {
    /// Wraps an explicit projection matrix (`r × d_k`).
    pub fn from_omega(omega: Tensor) -> Result<Self> {
        let (r, d) = omega.dims2("RandomFeatureMap")?;
        Ok(RandomFeatureMap {
            omega_t: transpose_buf(omega.data(), r, d),
            omega,
            exponent_clamps: AtomicU64::new(0),
            denominator_floors: AtomicU64::new(0),
        })
    }

    pub fn omega(&self) -> &Tensor {
        &self.omega
    }

    pub fn features(&self) -> usize {
        self.omega.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.omega.shape()[1]
    }

    pub fn diagnostics(&self) -> FavorDiagnostics {
        FavorDiagnostics {
            exponent_clamps: self.exponent_clamps.load(Ordering::Relaxed),
            denominator_floors: self.denominator_floors.load(Ordering::Relaxed),
        }
    }

    fn note_clamps(&self, n: u64) {
        if n > 0 && self.exponent_clamps.fetch_add(n, Ordering::Relaxed) == 0 {
            log::warn!("FAVOR+ feature exponent exceeded {EXPONENT_CLAMP} and was clamped");
        }
    }

    fn note_floors(&self, n: u64) {
        if n > 0 && self.denominator_floors.fetch_add(n, Ordering::Relaxed) == 0 {
            log::warn!("FAVOR+ normaliser fell below {DENOMINATOR_FLOOR:e} and was floored");
        }
    }

    /// Unbiased estimate `φ(x)ᵀφ(y)` of `exp(xᵀy)`.
    pub fn kernel_estimate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (px, py) = (phi_positive(x, self)?, phi_positive(y, self)?);
        Ok(px.iter().zip(&py).map(|(a, b)| a * b).sum())
    }
}

/// Draws `Ω` deterministically from `cfg.seed`.
///
/// Each block of `d_k` rows comes from a fresh Gaussian matrix whose rows are
/// orthonormalised by modified Gram–Schmidt; every row is then rescaled by
/// the norm of an independent standard Gaussian vector in `d_k` dimensions.
pub fn draw_features(cfg: &FavorConfig) -> Result<RandomFeatureMap> {
    cfg.validate()?;
    draw_with_seed(cfg.r, cfg.d_k, cfg.seed)
}

pub(crate) fn draw_with_seed(r: usize, d: usize, seed: u64) -> Result<RandomFeatureMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut rows: Vec<f64> = Vec::with_capacity(r * d);
    while rows.len() < r * d {
        let block = orthonormal_block(d, &mut gauss);
        let take = (r - rows.len() / d).min(d);
        for row in block.chunks(d).take(take) {
            let norm = (0..d).map(|_| gauss().powi(2)).sum::<f64>().sqrt();
            rows.extend(row.iter().map(|x| x * norm));
        }
    }
    RandomFeatureMap::from_omega(Tensor::new(&[r, d], rows)?)
}

fn orthonormal_block(d: usize, gauss: &mut impl FnMut() -> f64) -> Vec<f64> {
    let mut block = vec![0.0; d * d];
    let mut i = 0;
    while i < d {
        let mut row: Vec<f64> = (0..d).map(|_| gauss()).collect();
        for j in 0..i {
            let prev = &block[j * d..(j + 1) * d];
            let dot: f64 = row.iter().zip(prev).map(|(a, b)| a * b).sum();
            row.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        // a numerically dependent draw is simply redrawn
        if norm < 1e-8 {
            continue;
        }
        block[i * d..(i + 1) * d]
            .iter_mut()
            .zip(&row)
            .for_each(|(dst, x)| *dst = x / norm);
        i += 1;
    }
    block
}

/// `φ(x) = r^{-1/2}·exp(−‖x‖²/2)·[exp(ω_iᵀx)]`, every component > 0.
///
/// Exponents above [`EXPONENT_CLAMP`] are clamped and counted in
/// [`RandomFeatureMap::diagnostics`].
pub fn phi_positive(x: &[f64], fm: &RandomFeatureMap) -> Result<Vec<f64>> {
    let d = fm.dim();
    if x.len() != d {
        return Err(TensorError::dim(
            "phi_positive",
            format!("input length {} vs feature width {d}", x.len()),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite { op: "phi_positive" });
    }
    let r = fm.features();
    let half_sq = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
    let norm = 1.0 / (r as f64).sqrt();
    let mut clamps = 0;
    let out = (0..r)
        .map(|i| {
            let w = fm.omega.row(i);
            let mut e = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - half_sq;
            if e > EXPONENT_CLAMP {
                e = EXPONENT_CLAMP;
                clamps += 1;
            }
            norm * e.exp()
        })
        .collect();
    fm.note_clamps(clamps);
    Ok(out)
}

/// `D̂⁻¹(Q̂·(K̂ᵀ·V))`.
pub fn favor_bidirectional(q: &Tensor, k: &Tensor, v: &Tensor, fm: &RandomFeatureMap) -> Result<Tensor> {
    favor(q, k, v, fm, false)
}

/// Causal FAVOR+ through running prefix sums of `φ(k_j)v_jᵀ` and `φ(k_j)`.
pub fn favor_unidirectional(q: &Tensor, k: &Tensor, v: &Tensor, fm: &RandomFeatureMap) -> Result<Tensor> {
    favor(q, k, v, fm, true)
}

fn favor(q: &Tensor, k: &Tensor, v: &Tensor, fm: &RandomFeatureMap, causal: bool) -> Result<Tensor> {
    let (len, dk, dv) = check_qkv("favor_attention", q, k, v)?;
    if dk != fm.dim() {
        return Err(TensorError::dim(
            "favor_attention",
            format!("query width {dk} vs feature map width {}", fm.dim()),
        ));
    }
    let kernel = FavorKernel::new(Arc::new(fm.clone()), causal);
    let out = kernel.forward(q.data(), k.data(), v.data(), len, dk, dv);
    // carry diagnostics back to the caller's map
    let diag = kernel.map.diagnostics();
    let before = fm.diagnostics();
    fm.note_clamps(diag.exponent_clamps - before.exponent_clamps);
    fm.note_floors(diag.denominator_floors - before.denominator_floors);
    Tensor::new(&[len, dv], out)
}

/// Which stabilising shift a feature matrix gets before `exp`.
#[derive(Clone, Copy)]
enum Shift {
    /// Per-row maximum (queries: cancels between numerator and denominator).
    RowMax,
    /// One maximum over all rows (keys, bidirectional only).
    GlobalMax,
    None,
}

/// Per-head FAVOR+ kernel for the tape. Shares one feature map across heads.
#[derive(Clone, Debug)]
pub struct FavorKernel {
    pub map: Arc<RandomFeatureMap>,
    pub causal: bool,
}

impl FavorKernel {
    pub fn new(map: Arc<RandomFeatureMap>, causal: bool) -> Self {
        FavorKernel { map, causal }
    }

    /// `len × r` matrix of φ applied to `d_k^{-1/4}`-scaled rows of `x`.
    ///
    /// The stabilising shift is a constant of the forward map, so gradients
    /// treat it as fixed.
    fn features(&self, x: &[f64], len: usize, dk: usize, shift: Shift) -> Vec<f64> {
        let r = self.map.features();
        let s = (dk as f64).powf(-0.25);
        let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
        let mut a = vec![0.0; len * r];
        matmul_into(&scaled, &self.map.omega_t, &mut a, len, dk, r);
        let mut clamps = 0;
        for (row, xr) in a.chunks_mut(r).zip(scaled.chunks(dk)) {
            let half_sq = 0.5 * xr.iter().map(|v| v * v).sum::<f64>();
            for e in row.iter_mut() {
                *e -= half_sq;
                if *e > EXPONENT_CLAMP {
                    *e = EXPONENT_CLAMP;
                    clamps += 1;
                }
            }
        }
        self.map.note_clamps(clamps);
        let norm = 1.0 / (r as f64).sqrt();
        match shift {
            Shift::RowMax => {
                for row in a.chunks_mut(r) {
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    row.iter_mut().for_each(|e| *e = norm * (*e - m).exp());
                }
            }
            Shift::GlobalMax => {
                let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                a.iter_mut().for_each(|e| *e = norm * (*e - m).exp());
            }
            Shift::None => a.iter_mut().for_each(|e| *e = norm * e.exp()),
        }
        a
    }

    fn key_shift(&self) -> Shift {
        // a global key shift would depend on future keys and break prefix
        // reproducibility in the causal kernel
        if self.causal {
            Shift::None
        } else {
            Shift::GlobalMax
        }
    }

    fn floor(&self, den: f64, floors: &mut u64) -> f64 {
        if den < DENOMINATOR_FLOOR {
            *floors += 1;
            DENOMINATOR_FLOOR
        } else {
            den
        }
    }

    /// Backpropagates `dΦ` (len × r) through φ into the unscaled input rows.
    fn feature_backward(&self, x: &[f64], phi: &[f64], dphi: &[f64], len: usize, dk: usize) -> Vec<f64> {
        let r = self.map.features();
        let s = (dk as f64).powf(-0.25);
        let da: Vec<f64> = dphi.iter().zip(phi).map(|(g, p)| g * p).collect();
        let mut dx = vec![0.0; len * dk];
        matmul_into(&da, self.map.omega.data(), &mut dx, len, r, dk);
        for ((dxr, xr), dar) in dx.chunks_mut(dk).zip(x.chunks(dk)).zip(da.chunks(r)) {
            let total: f64 = dar.iter().sum();
            for (g, &xv) in dxr.iter_mut().zip(xr) {
                *g = s * (*g - total * xv * s);
            }
        }
        dx
    }
}

impl HeadKernel for FavorKernel {
    fn name(&self) -> &'static str {
        if self.causal {
            "favor_unidirectional"
        } else {
            "favor_bidirectional"
        }
    }

    fn forward(&self, q: &[f64], k: &[f64], v: &[f64], len: usize, dk: usize, dv: usize) -> Vec<f64> {
        let r = self.map.features();
        let pq = self.features(q, len, dk, Shift::RowMax);
        let pk = self.features(k, len, dk, self.key_shift());
        let mut out = vec![0.0; len * dv];
        let mut floors = 0;
        if self.causal {
            let mut s = vec![0.0; r * dv];
            let mut z = vec![0.0; r];
            for i in 0..len {
                let (ki, vi) = (&pk[i * r..(i + 1) * r], &v[i * dv..(i + 1) * dv]);
                for m in 0..r {
                    z[m] += ki[m];
                    for c in 0..dv {
                        s[m * dv + c] += ki[m] * vi[c];
                    }
                }
                let qi = &pq[i * r..(i + 1) * r];
                let den = self.floor(qi.iter().zip(&z).map(|(a, b)| a * b).sum(), &mut floors);
                let oi = &mut out[i * dv..(i + 1) * dv];
                matmul_into(qi, &s, oi, 1, r, dv);
                oi.iter_mut().for_each(|o| *o /= den);
            }
        } else {
            let pkt = transpose_buf(&pk, len, r);
            let mut s = vec![0.0; r * dv];
            matmul_into(&pkt, v, &mut s, r, len, dv);
            let z: Vec<f64> = pkt.chunks(len).map(|row| row.iter().sum()).collect();
            matmul_into(&pq, &s, &mut out, len, r, dv);
            for (oi, qi) in out.chunks_mut(dv).zip(pq.chunks(r)) {
                let den = self.floor(qi.iter().zip(&z).map(|(a, b)| a * b).sum(), &mut floors);
                oi.iter_mut().for_each(|o| *o /= den);
            }
        }
        self.map.note_floors(floors);
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
        let r = self.map.features();
        let pq = self.features(q, len, dk, Shift::RowMax);
        let pk = self.features(k, len, dk, self.key_shift());
        let mut dpq = vec![0.0; len * r];
        let mut dpk = vec![0.0; len * r];
        let mut grad_v = vec![0.0; len * dv];
        // guards were already counted by the forward pass
        let mut floors = 0;
        // d(num_i) = g_i / den_i and d(den_i) = −g_i·out_i / den_i
        let mut dnum = vec![0.0; len * dv];
        let mut dden = vec![0.0; len];

        if self.causal {
            let mut s = vec![0.0; r * dv];
            let mut z = vec![0.0; r];
            for i in 0..len {
                let (ki, vi) = (&pk[i * r..(i + 1) * r], &v[i * dv..(i + 1) * dv]);
                for m in 0..r {
                    z[m] += ki[m];
                    for c in 0..dv {
                        s[m * dv + c] += ki[m] * vi[c];
                    }
                }
                let qi = &pq[i * r..(i + 1) * r];
                let den = self.floor(qi.iter().zip(&z).map(|(a, b)| a * b).sum(), &mut floors);
                let mut num = vec![0.0; dv];
                matmul_into(qi, &s, &mut num, 1, r, dv);
                let gi = &grad_out[i * dv..(i + 1) * dv];
                let g_dot_out: f64 = gi.iter().zip(&num).map(|(g, n)| g * n / den).sum();
                dden[i] = -g_dot_out / den;
                for c in 0..dv {
                    dnum[i * dv + c] = gi[c] / den;
                }
                let dq_row = &mut dpq[i * r..(i + 1) * r];
                for m in 0..r {
                    let srow = &s[m * dv..(m + 1) * dv];
                    dq_row[m] = srow.iter().zip(&dnum[i * dv..(i + 1) * dv]).map(|(a, b)| a * b).sum::<f64>()
                        + z[m] * dden[i];
                }
            }
            // suffix sums R = Σ_{i≥j} φ(q_i)·dnum_iᵀ and t = Σ_{i≥j} φ(q_i)·dden_i
            let mut rs = vec![0.0; r * dv];
            let mut ts = vec![0.0; r];
            for j in (0..len).rev() {
                let qj = &pq[j * r..(j + 1) * r];
                for m in 0..r {
                    ts[m] += qj[m] * dden[j];
                    for c in 0..dv {
                        rs[m * dv + c] += qj[m] * dnum[j * dv + c];
                    }
                }
                let (kj, vj) = (&pk[j * r..(j + 1) * r], &v[j * dv..(j + 1) * dv]);
                let dk_row = &mut dpk[j * r..(j + 1) * r];
                for m in 0..r {
                    let rrow = &rs[m * dv..(m + 1) * dv];
                    dk_row[m] = rrow.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>() + ts[m];
                }
                let gv = &mut grad_v[j * dv..(j + 1) * dv];
                for m in 0..r {
                    for c in 0..dv {
                        gv[c] += rs[m * dv + c] * kj[m];
                    }
                }
            }
        } else {
            let pkt = transpose_buf(&pk, len, r);
            let mut s = vec![0.0; r * dv];
            matmul_into(&pkt, v, &mut s, r, len, dv);
            let z: Vec<f64> = pkt.chunks(len).map(|row| row.iter().sum()).collect();
            let mut num = vec![0.0; len * dv];
            matmul_into(&pq, &s, &mut num, len, r, dv);
            for i in 0..len {
                let qi = &pq[i * r..(i + 1) * r];
                let den = self.floor(qi.iter().zip(&z).map(|(a, b)| a * b).sum(), &mut floors);
                let gi = &grad_out[i * dv..(i + 1) * dv];
                let ni = &num[i * dv..(i + 1) * dv];
                dden[i] = -gi.iter().zip(ni).map(|(g, n)| g * n / den).sum::<f64>() / den;
                for c in 0..dv {
                    dnum[i * dv + c] = gi[c] / den;
                }
            }
            // dΦq = dNum·Sᵀ + dden·zᵀ
            let st = transpose_buf(&s, r, dv);
            matmul_into(&dnum, &st, &mut dpq, len, dv, r);
            for (row, &dd) in dpq.chunks_mut(r).zip(&dden) {
                row.iter_mut().zip(&z).for_each(|(x, zm)| *x += dd * zm);
            }
            // dS = Φqᵀ·dNum, dz = Φqᵀ·dden
            let pqt = transpose_buf(&pq, len, r);
            let mut ds = vec![0.0; r * dv];
            matmul_into(&pqt, &dnum, &mut ds, r, len, dv);
            let mut dz = vec![0.0; r];
            matmul_into(&pqt, &dden, &mut dz, r, len, 1);
            // dΦk = V·dSᵀ + 1·dzᵀ, dV = Φk·dS
            let dst = transpose_buf(&ds, r, dv);
            matmul_into(v, &dst, &mut dpk, len, dv, r);
            for row in dpk.chunks_mut(r) {
                row.iter_mut().zip(&dz).for_each(|(x, d)| *x += d);
            }
            matmul_into(&pk, &ds, &mut grad_v, len, r, dv);
        }
        debug_assert!(floors <= len as u64);

        HeadGrads {
            dq: self.feature_backward(q, &pq, &dpq, len, dk),
            dk: self.feature_backward(k, &pk, &dpk, len, dk),
            dv: grad_v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{exact_bidirectional, MultiHeadAttention};
    use crate::tensor::{check_gradients, Tape};
    use rand::Rng;

    fn cfg(r: usize, d_k: usize, seed: u64) -> FavorConfig {
        FavorConfig {
            r,
            d_k,
            seed,
            causal: false,
            redraw_interval: None,
        }
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn same_seed_same_features() {
        let a = draw_features(&cfg(10, 4, 42)).unwrap();
        let b = draw_features(&cfg(10, 4, 42)).unwrap();
        assert_eq!(a.omega().data(), b.omega().data());
        let c = draw_features(&cfg(10, 4, 43)).unwrap();
        assert_ne!(a.omega().data(), c.omega().data());
    }

    #[test]
    fn blocks_are_orthogonal() {
        for (r, d) in [(4, 4), (3, 5), (11, 4)] {
            let fm = draw_features(&cfg(r, d, 7)).unwrap();
            for i in 0..r {
                for j in 0..i {
                    if i / d == j / d {
                        let dot: f64 = fm.omega().row(i).iter().zip(fm.omega().row(j)).map(|(a, b)| a * b).sum();
                        assert!(dot.abs() <= 1e-10, "rows {i},{j}: {dot}");
                    }
                }
            }
        }
    }

    #[test]
    fn phi_of_zero_is_uniform() {
        let fm = draw_features(&cfg(16, 4, 1)).unwrap();
        let p = phi_positive(&[0.0; 4], &fm).unwrap();
        for x in &p {
            assert!((x - 0.25).abs() < 1e-15);
        }
        assert!((fm.kernel_estimate(&[0.0; 4], &[0.0; 4]).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn phi_is_strictly_positive() {
        let fm = draw_features(&cfg(32, 4, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!(phi_positive(&x, &fm).unwrap().iter().all(|&p| p > 0.0));
        }
        assert!(phi_positive(&[1.0; 3], &fm).is_err());
    }

    #[test]
    fn exponent_clamp_is_counted() {
        let fm = RandomFeatureMap::from_omega(Tensor::new(&[1, 1], vec![2000.0]).unwrap()).unwrap();
        let p = phi_positive(&[1.0], &fm).unwrap();
        assert!(p[0].is_finite());
        assert_eq!(fm.diagnostics().exponent_clamps, 1);
    }

    #[test]
    fn single_position_returns_v() {
        let fm = draw_features(&cfg(8, 3, 4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, k, v) = (random(&mut rng, &[1, 3], 1.0), random(&mut rng, &[1, 3], 1.0), random(&mut rng, &[1, 2], 1.0));
        let bi = favor_bidirectional(&q, &k, &v, &fm).unwrap();
        let uni = favor_unidirectional(&q, &k, &v, &fm).unwrap();
        assert!(bi.max_abs_diff(&v) <= 1e-12);
        assert!(uni.max_abs_diff(&bi) <= 1e-12);
    }

    #[test]
    fn outputs_stay_in_value_hull() {
        let fm = draw_features(&cfg(16, 4, 6)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (q, k, v) = (random(&mut rng, &[12, 4], 1.5), random(&mut rng, &[12, 4], 1.5), random(&mut rng, &[12, 3], 2.0));
        for causal in [false, true] {
            let out = favor(&q, &k, &v, &fm, causal).unwrap();
            for i in 0..12 {
                let visible = if causal { i + 1 } else { 12 };
                for c in 0..3 {
                    let col: Vec<f64> = (0..visible).map(|j| v.at2(j, c)).collect();
                    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    assert!(out.at2(i, c) >= lo - 1e-9 && out.at2(i, c) <= hi + 1e-9);
                }
            }
        }
    }

    #[test]
    fn causal_prefix_is_bitwise_reproducible() {
        let fm = draw_features(&cfg(16, 4, 8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (q, k, v) = (random(&mut rng, &[9, 4], 1.0), random(&mut rng, &[9, 4], 1.0), random(&mut rng, &[9, 2], 1.0));
        let full = favor_unidirectional(&q, &k, &v, &fm).unwrap();
        assert!(full.row(0).iter().zip(v.row(0)).all(|(a, b)| (a - b).abs() <= 1e-12));
        for t in 1..=9 {
            let pre = |x: &Tensor| Tensor::new(&[t, x.last_dim()], x.data()[..t * x.last_dim()].to_vec()).unwrap();
            let part = favor_unidirectional(&pre(&q), &pre(&k), &pre(&v), &fm).unwrap();
            assert_eq!(part.data(), &full.data()[..t * 2]);
        }
    }

    #[test]
    fn approximates_exact_attention_for_many_features() {
        // unit-norm rows, d_k = 2, r = 4096: median RMS output error over 20 seeds
        let unit_rows = |rng: &mut ChaCha8Rng, len: usize| {
            let mut v: Vec<f64> = (0..len * 2).map(|_| StandardNormal.sample(rng)).collect();
            for row in v.chunks_mut(2) {
                let n = (row[0] * row[0] + row[1] * row[1]).sqrt();
                row.iter_mut().for_each(|x| *x /= n);
            }
            Tensor::new(&[len, 2], v).unwrap()
        };
        let mut errs: Vec<f64> = (0..20)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                let (q, k, v) = (unit_rows(&mut rng, 16), unit_rows(&mut rng, 16), unit_rows(&mut rng, 16));
                let exact = exact_bidirectional(&q, &k, &v).unwrap();
                let fm = draw_features(&cfg(4096, 2, seed)).unwrap();
                let approx = favor_bidirectional(&q, &k, &v, &fm).unwrap();
                let sq: f64 = approx.data().iter().zip(exact.data()).map(|(a, b)| (a - b).powi(2)).sum();
                (sq / 32.0).sqrt()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs[10] <= 0.02, "median RMS error {}", errs[10]);
    }

    #[test]
    fn kernel_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let fm = Arc::new(draw_features(&cfg(12, 3, 13)).unwrap());
        let inputs = vec![random(&mut rng, &[2, 6, 6], 1.0), random(&mut rng, &[2, 6, 6], 1.0), random(&mut rng, &[2, 6, 4], 1.0)];
        let proj = random(&mut rng, &[2, 6, 4], 1.0);
        for causal in [false, true] {
            let fm = fm.clone();
            let report = check_gradients(&inputs, 1e-5, |tape: &mut Tape, x| {
                let out = MultiHeadAttention::new(FavorKernel::new(fm.clone(), causal), 2).record(tape, x[0], x[1], x[2])?;
                let w = tape.constant(proj.clone());
                let y = tape.mul(out, w)?;
                tape.sum(y)
            })
            .unwrap();
            assert!(report.max_rel_error <= 1e-5, "causal={causal}: {report:?}");
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let fm = draw_features(&cfg(8, 3, 1)).unwrap();
        let t = Tensor::zeros(&[4, 2]);
        assert!(favor_bidirectional(&t, &t, &t, &fm).is_err());
        assert!(draw_features(&cfg(0, 3, 1)).is_err());
    }
}
