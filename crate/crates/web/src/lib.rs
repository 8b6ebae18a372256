//! Browser demo: FAVOR+ accuracy against exact attention, single kernel
//! estimates, and indicator curves on a synthetic market.
//!
//! The computations live in plain functions (usable and tested natively);
//! the `#[wasm_bindgen]` exports are thin wrappers around them.

use perfcast::attention::{
    draw_features, exact_bidirectional, exact_unidirectional, favor_bidirectional, favor_unidirectional,
    FavorConfig,
};
use perfcast::indicators::{bollinger, cci, ema, rsi, sma, IndicatorSeries};
use perfcast::series::{synthetic_series, SyntheticSpec};
use perfcast::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wasm_bindgen::prelude::*;

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::new(&[rows, cols], (0..rows * cols).map(|_| normal.sample(rng)).collect()).expect("finite samples")
}

fn frobenius(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median relative Frobenius error of FAVOR+ against exact attention for
/// each feature count in `rs`, over `draws` independent feature draws.
///
/// Query and key entries are `N(0, 1/d_k)` (rows of unit expected norm),
/// values `N(0, 1)`; the same inputs are used for every `r`.
pub fn favor_error_curve(len: usize, d_k: usize, rs: &[usize], draws: usize, seed: u64, causal: bool) -> Result<Vec<f64>, String> {
    if len == 0 || d_k == 0 || draws == 0 || rs.contains(&0) {
        return Err("len, d_k, draws and every r must be positive".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (1.0 / d_k as f64).sqrt();
    let (q, k, v) = (gaussian(len, d_k, s, &mut rng), gaussian(len, d_k, s, &mut rng), gaussian(len, d_k, 1.0, &mut rng));
    let exact = if causal { exact_unidirectional(&q, &k, &v) } else { exact_bidirectional(&q, &k, &v) }
        .map_err(|e| e.to_string())?;
    let norm = frobenius(&exact).max(f64::MIN_POSITIVE);
    rs.iter()
        .map(|&r| {
            let errs = (0..draws as u64)
                .map(|d| {
                    let fm = draw_features(&FavorConfig {
                        r,
                        d_k,
                        seed: seed.wrapping_add(1 + d),
                        causal,
                        redraw_interval: None,
                    })
                    .map_err(|e| e.to_string())?;
                    let approx = if causal { favor_unidirectional(&q, &k, &v, &fm) } else { favor_bidirectional(&q, &k, &v, &fm) }
                        .map_err(|e| e.to_string())?;
                    let diff: f64 = approx.data().iter().zip(exact.data()).map(|(a, b)| (a - b).powi(2)).sum();
                    Ok(diff.sqrt() / norm)
                })
                .collect::<Result<Vec<f64>, String>>()?;
            Ok(median(errs))
        })
        .collect()
}

/// `samples` random pairs `(x, y)` with `‖x‖ = ‖y‖ = norm`; returns
/// interleaved `[exp(xᵀy), φ(x)ᵀφ(y), ...]` for one feature draw.
pub fn kernel_pairs(d: usize, r: usize, norm: f64, samples: usize, seed: u64) -> Result<Vec<f64>, String> {
    if !(norm.is_finite() && norm >= 0.0) {
        return Err(format!("norm {norm} must be finite and ≥ 0"));
    }
    let fm = draw_features(&FavorConfig {
        r,
        d_k: d,
        seed,
        causal: false,
        redraw_interval: None,
    })
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    let mut unit = || {
        let g = gaussian(1, d, 1.0, &mut rng);
        let n = frobenius(&g).max(f64::MIN_POSITIVE);
        g.data().iter().map(|v| norm * v / n).collect::<Vec<f64>>()
    };
    let mut out = Vec::with_capacity(2 * samples);
    for _ in 0..samples {
        let (x, y) = (unit(), unit());
        let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        out.push(dot.exp());
        out.push(fm.kernel_estimate(&x, &y).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// Close prices and indicators of a synthetic series, aligned to the input
/// (`NaN` inside each indicator's warm-up).
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Curves {
    close: Vec<f64>,
    sma: Vec<f64>,
    ema: Vec<f64>,
    bb_mid: Vec<f64>,
    bb_upper: Vec<f64>,
    bb_lower: Vec<f64>,
    rsi: Vec<f64>,
    cci: Vec<f64>,
}

fn aligned(s: &IndicatorSeries) -> Vec<f64> {
    (0..s.input_len()).map(|i| s.get(i).unwrap_or(f64::NAN)).collect()
}

#[wasm_bindgen]
impl Curves {
    #[wasm_bindgen(getter)]
    pub fn close(&self) -> Vec<f64> {
        self.close.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn sma(&self) -> Vec<f64> {
        self.sma.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn ema(&self) -> Vec<f64> {
        self.ema.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn bb_mid(&self) -> Vec<f64> {
        self.bb_mid.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn bb_upper(&self) -> Vec<f64> {
        self.bb_upper.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn bb_lower(&self) -> Vec<f64> {
        self.bb_lower.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn rsi(&self) -> Vec<f64> {
        self.rsi.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn cci(&self) -> Vec<f64> {
        self.cci.clone()
    }
}

/// Indicator periods shared by the curve view: `n` for SMA, EMA, RSI and
/// CCI, `bb_n`/`bb_k` for the bands.
pub fn indicator_curves(len: usize, seed: u64, noise: f64, n: usize, bb_n: usize, bb_k: f64) -> Result<Curves, String> {
    if len == 0 {
        return Err("len must be ≥ 1".into());
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(format!("noise {noise} must be finite and ≥ 0"));
    }
    let series = synthetic_series(&SyntheticSpec {
        len,
        noise,
        seed,
        ..SyntheticSpec::default()
    });
    let close = series.closes();
    let e = |err: perfcast::indicators::IndicatorError| err.to_string();
    let bands = bollinger(&close, bb_n, bb_k).map_err(e)?;
    Ok(Curves {
        sma: aligned(&sma(&close, n).map_err(e)?),
        ema: aligned(&ema(&close, n).map_err(e)?),
        bb_mid: aligned(&bands.mid),
        bb_upper: aligned(&bands.upper),
        bb_lower: aligned(&bands.lower),
        rsi: aligned(&rsi(&close, n).map_err(e)?),
        cci: aligned(&cci(&series, n).map_err(e)?),
        close,
    })
}

#[wasm_bindgen(js_name = favorErrorCurve)]
pub fn favor_error_curve_js(len: usize, d_k: usize, rs: Vec<u32>, draws: usize, seed: u32, causal: bool) -> Result<Vec<f64>, JsError> {
    let rs: Vec<usize> = rs.into_iter().map(|r| r as usize).collect();
    favor_error_curve(len, d_k, &rs, draws, seed.into(), causal).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = kernelPairs)]
pub fn kernel_pairs_js(d: usize, r: usize, norm: f64, samples: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    kernel_pairs(d, r, norm, samples, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = indicatorCurves)]
pub fn indicator_curves_js(len: usize, seed: u32, noise: f64, n: usize, bb_n: usize, bb_k: f64) -> Result<Curves, JsError> {
    indicator_curves(len, seed.into(), noise, n, bb_n, bb_k).map_err(|e| JsError::new(&e))
}
