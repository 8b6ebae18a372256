//! Wall-clock scaling probe for exact vs FAVOR+ attention.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::favor::draw_with_seed;
use super::{ExactKernel, FavorKernel, HeadKernel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    Exact,
    Favor,
}

impl ProbeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeMode::Exact => "exact",
            ProbeMode::Favor => "favor",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub mode: ProbeMode,
    #[serde(rename = "L")]
    pub len: usize,
    pub d_k: usize,
    pub r: usize,
    pub rep: usize,
    pub wall_ns: u128,
    pub peak_bytes_estimate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub lengths: Vec<usize>,
    pub d_k: usize,
    pub r: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            lengths: vec![256, 512, 1024, 2048],
            d_k: 16,
            r: 64,
            reps: 3,
            seed: 0,
        }
    }
}

/// Working-set size of one exact head: `A` (L×L), `Kᵀ`, and the output.
pub fn exact_peak_bytes(len: usize, d_k: usize) -> usize {
    8 * (len * len + len * d_k + len * d_k)
}

/// Working-set size of one FAVOR+ head: scaled rows, `φ(Q)`, `φ(K)`,
/// `φ(K)ᵀ`, the `r × d_v` contraction, the normaliser, and the output.
/// No term grows with `L²`.
pub fn favor_peak_bytes(len: usize, d_k: usize, r: usize) -> usize {
    8 * (len * d_k + 3 * len * r + r * d_k + r + len * d_k)
}

/// Times one single-head forward pass per `(mode, L, rep)`.
///
/// Each configuration gets one untimed warm-up pass first. Inputs are
/// standard Gaussian `L × d_k` matrices (`d_v = d_k`).
pub fn complexity_probe(modes: &[ProbeMode], settings: &ProbeSettings) -> Vec<ProbeRow> {
    let d = settings.d_k;
    let map = Arc::new(draw_with_seed(settings.r, d, settings.seed).expect("validated sizes"));
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5EED);
    let mut rows = Vec::new();
    for &len in &settings.lengths {
        let mut gauss = |n: usize| -> Vec<f64> {
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        };
        let (q, k, v) = (gauss(len * d), gauss(len * d), gauss(len * d));
        for &mode in modes {
            let kernel: Box<dyn HeadKernel> = match mode {
                ProbeMode::Exact => Box::new(ExactKernel { causal: false }),
                ProbeMode::Favor => Box::new(FavorKernel::new(map.clone(), false)),
            };
            std::hint::black_box(kernel.forward(&q, &k, &v, len, d, d));
            for rep in 0..settings.reps {
                let start = Instant::now();
                let out = kernel.forward(&q, &k, &v, len, d, d);
                let wall_ns = start.elapsed().as_nanos();
                std::hint::black_box(out);
                rows.push(ProbeRow {
                    mode,
                    len,
                    d_k: d,
                    r: settings.r,
                    rep,
                    wall_ns,
                    peak_bytes_estimate: match mode {
                        ProbeMode::Exact => exact_peak_bytes(len, d),
                        ProbeMode::Favor => favor_peak_bytes(len, d, settings.r),
                    },
                });
            }
        }
    }
    rows
}

/// Least-squares slope of `ln(median wall time)` against `ln L` for `mode`.
pub fn loglog_slope(rows: &[ProbeRow], mode: ProbeMode) -> Option<f64> {
    let mut lengths: Vec<usize> = rows.iter().filter(|r| r.mode == mode).map(|r| r.len).collect();
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.len() < 2 {
        return None;
    }
    let points: Vec<(f64, f64)> = lengths
        .iter()
        .map(|&len| {
            let mut times: Vec<u128> = rows
                .iter()
                .filter(|r| r.mode == mode && r.len == len)
                .map(|r| r.wall_ns.max(1))
                .collect();
            times.sort_unstable();
            ((len as f64).ln(), (times[times.len() / 2] as f64).ln())
        })
        .collect();
    Some(fit_slope(&points))
}

pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn write_probe_csv<W: Write>(rows: &[ProbeRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "L", "d_k", "r", "rep", "wall_ns", "peak_bytes_estimate"])?;
    for r in rows {
        w.write_record([
            r.mode.as_str().to_string(),
            r.len.to_string(),
            r.d_k.to_string(),
            r.r.to_string(),
            r.rep.to_string(),
            r.wall_ns.to_string(),
            r.peak_bytes_estimate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
