//! Technical indicators and the model's input feature matrix.
//!
//! Every indicator returns an [`IndicatorSeries`]: values start at a warm-up
//! offset instead of carrying placeholder entries, so nothing undefined
//! reaches the numeric path. Window statistics are computed per window from
//! a sum shifted by the window's first value, which keeps flat windows exact
//! and makes each output depend only on its own window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::OhlcvSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndicatorError {
    #[error("{indicator} needs at least {needed} points, got {available}")]
    InsufficientData {
        indicator: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Result<T> = std::result::Result<T, IndicatorError>;

/// Indicator output; `values[i]` belongs to input index `warmup + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorSeries {
    pub warmup: usize,
    pub values: Vec<f64>,
}

impl IndicatorSeries {
    /// Value at input index `i`, `None` inside the warm-up.
    pub fn get(&self, i: usize) -> Option<f64> {
        i.checked_sub(self.warmup).and_then(|j| self.values.get(j)).copied()
    }

    /// Total length of the input the indicator was computed on.
    pub fn input_len(&self) -> usize {
        self.warmup + self.values.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorParams {
    pub sma_n: usize,
    /// EMA period; smoothing factor is `2 / (ema_n + 1)`.
    pub ema_n: usize,
    pub bb_n: usize,
    pub bb_k: f64,
    pub rsi_n: usize,
    pub cci_n: usize,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        IndicatorParams {
            sma_n: 14,
            ema_n: 14,
            bb_n: 20,
            bb_k: 2.0,
            rsi_n: 14,
            cci_n: 20,
        }
    }
}

impl IndicatorParams {
    pub fn validate(&self) -> Result<()> {
        let windows = [
            ("sma_n", self.sma_n, 1),
            ("ema_n", self.ema_n, 1),
            ("bb_n", self.bb_n, 2),
            ("rsi_n", self.rsi_n, 1),
            ("cci_n", self.cci_n, 2),
        ];
        for (name, n, min) in windows {
            if n < min {
                return Err(IndicatorError::InvalidParam(format!("{name} = {n}, must be ≥ {min}")));
            }
        }
        if !(self.bb_k > 0.0 && self.bb_k.is_finite()) {
            return Err(IndicatorError::InvalidParam(format!("bb_k = {}, must be > 0", self.bb_k)));
        }
        Ok(())
    }

    /// First row index at which every indicator is defined.
    pub fn warmup(&self) -> usize {
        [
            self.sma_n - 1,
            self.ema_n - 1,
            self.bb_n - 1,
            self.rsi_n,
            self.cci_n - 1,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }
}

fn require(indicator: &'static str, needed: usize, available: usize) -> Result<()> {
    if available < needed {
        Err(IndicatorError::InsufficientData {
            indicator,
            needed,
            available,
        })
    } else {
        Ok(())
    }
}

fn window_mean(w: &[f64]) -> f64 {
    let base = w[0];
    base + w.iter().map(|x| x - base).sum::<f64>() / w.len() as f64
}

fn is_flat(w: &[f64]) -> bool {
    w.iter().all(|&x| x == w[0])
}

/// Simple moving average over `n` periods.
pub fn sma(prices: &[f64], n: usize) -> Result<IndicatorSeries> {
    if n == 0 {
        return Err(IndicatorError::InvalidParam("SMA window must be ≥ 1".into()));
    }
    require("SMA", n, prices.len())?;
    Ok(IndicatorSeries {
        warmup: n - 1,
        values: prices.windows(n).map(window_mean).collect(),
    })
}

/// Exponential moving average, seeded with the SMA of the first `n` prices.
pub fn ema(prices: &[f64], n: usize) -> Result<IndicatorSeries> {
    if n == 0 {
        return Err(IndicatorError::InvalidParam("EMA period must be ≥ 1".into()));
    }
    require("EMA", n, prices.len())?;
    let k = 2.0 / (n as f64 + 1.0);
    let mut prev = window_mean(&prices[..n]);
    let mut values = Vec::with_capacity(prices.len() - n + 1);
    values.push(prev);
    for &p in &prices[n..] {
        prev += (p - prev) * k;
        values.push(prev);
    }
    Ok(IndicatorSeries { warmup: n - 1, values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BollingerBands {
    pub mid: IndicatorSeries,
    pub upper: IndicatorSeries,
    pub lower: IndicatorSeries,
}

/// Middle band = SMA(n); outer bands = mid ± k·σ with the population σ.
pub fn bollinger(prices: &[f64], n: usize, k: f64) -> Result<BollingerBands> {
    if n < 2 {
        return Err(IndicatorError::InvalidParam("Bollinger window must be ≥ 2".into()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(IndicatorError::InvalidParam(format!("Bollinger multiplier {k} must be > 0")));
    }
    require("Bollinger", n, prices.len())?;
    let len = prices.len() - n + 1;
    let (mut mid, mut upper, mut lower) = (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len));
    for w in prices.windows(n) {
        let m = window_mean(w);
        let sd = if is_flat(w) {
            0.0
        } else {
            (w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        mid.push(m);
        upper.push(m + k * sd);
        lower.push(m - k * sd);
    }
    let band = |values| IndicatorSeries { warmup: n - 1, values };
    Ok(BollingerBands {
        mid: band(mid),
        upper: band(upper),
        lower: band(lower),
    })
}

/// Relative strength index from simple `n`-period averages of gains and losses.
///
/// Output is 100 when the average loss is zero and 0 when the average gain is
/// zero (a flat window therefore reads 100).
pub fn rsi(prices: &[f64], n: usize) -> Result<IndicatorSeries> {
    if n == 0 {
        return Err(IndicatorError::InvalidParam("RSI lookback must be ≥ 1".into()));
    }
    require("RSI", n + 1, prices.len())?;
    let deltas: Vec<f64> = prices.windows(2).map(|w| w[1] - w[0]).collect();
    let values = deltas
        .windows(n)
        .map(|w| {
            let gain = w.iter().filter(|&&d| d > 0.0).sum::<f64>() / n as f64;
            let loss = -w.iter().filter(|&&d| d < 0.0).sum::<f64>() / n as f64;
            if loss == 0.0 {
                100.0
            } else if gain == 0.0 {
                0.0
            } else {
                100.0 - 100.0 / (1.0 + gain / loss)
            }
        })
        .collect();
    Ok(IndicatorSeries { warmup: n, values })
}

/// Commodity channel index on the typical price.
///
/// `(TP − MA) / (0.015·D)` with `MA` the `n`-period mean of `TP` and `D` the
/// mean absolute deviation from it; a zero deviation yields 0.
pub fn cci(series: &OhlcvSeries, n: usize) -> Result<IndicatorSeries> {
    if n < 2 {
        return Err(IndicatorError::InvalidParam("CCI lookback must be ≥ 2".into()));
    }
    require("CCI", n, series.len())?;
    let tp: Vec<f64> = series.candles().iter().map(|c| c.typical_price()).collect();
    let values = tp
        .windows(n)
        .map(|w| {
            if is_flat(w) {
                return 0.0;
            }
            let ma = window_mean(w);
            let dev = w.iter().map(|x| (x - ma).abs()).sum::<f64>() / n as f64;
            if dev == 0.0 {
                0.0
            } else {
                (w[n - 1] - ma) / (0.015 * dev)
            }
        })
        .collect();
    Ok(IndicatorSeries { warmup: n - 1, values })
}

/// Which columns feed the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// close plus the seven indicator columns.
    #[default]
    Indicators,
    /// open, high, low, close, volume only.
    Ohlcv,
}

impl FeatureSet {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            FeatureSet::Indicators => &["close", "sma", "ema", "bb_mid", "bb_upper", "bb_lower", "rsi", "cci"],
            FeatureSet::Ohlcv => &["open", "high", "low", "close", "volume"],
        }
    }

    pub fn close_column(self) -> usize {
        self.columns().iter().position(|&c| c == "close").expect("close is always present")
    }
}

/// Per-timestep feature rows from `warmup` onwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    /// Series index of the first row in `values`.
    pub warmup: usize,
    pub columns: Vec<String>,
    /// `values[i]` is the row for series index `warmup + i`.
    pub values: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Row for series index `t`, `None` inside the warm-up.
    pub fn row(&self, t: usize) -> Option<&[f64]> {
        t.checked_sub(self.warmup).and_then(|i| self.values.get(i)).map(Vec::as_slice)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.values.iter().map(|r| r[j]).collect())
    }
}

/// Assembles the feature matrix for `set`; the warm-up is always taken from
/// `params` so both feature sets cover the same timesteps.
pub fn build_features(series: &OhlcvSeries, params: &IndicatorParams, set: FeatureSet) -> Result<FeatureMatrix> {
    params.validate()?;
    let warmup = params.warmup();
    require("feature matrix", warmup + 1, series.len())?;
    let columns = set.columns().iter().map(|s| s.to_string()).collect();
    let values = match set {
        FeatureSet::Ohlcv => series.candles()[warmup..]
            .iter()
            .map(|c| vec![c.open, c.high, c.low, c.close, c.volume])
            .collect(),
        FeatureSet::Indicators => {
            let close = series.closes();
            let sma = sma(&close, params.sma_n)?;
            let ema = ema(&close, params.ema_n)?;
            let bb = bollinger(&close, params.bb_n, params.bb_k)?;
            let rsi = rsi(&close, params.rsi_n)?;
            let cci = cci(series, params.cci_n)?;
            let cols = [&sma, &ema, &bb.mid, &bb.upper, &bb.lower, &rsi, &cci];
            (warmup..series.len())
                .map(|t| {
                    let mut row = Vec::with_capacity(8);
                    row.push(close[t]);
                    row.extend(cols.iter().map(|c| c.get(t).expect("warm-up covers every indicator")));
                    row
                })
                .collect()
        }
    };
    Ok(FeatureMatrix { warmup, columns, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Candle, Interval};

    #[test]
    fn sma_small_cases() {
        let s = sma(&[1.0, 2.0, 3.0], 3).unwrap();
        assert_eq!((s.warmup, s.values.clone()), (2, vec![2.0]));
        assert_eq!(s.get(1), None);
        let c = sma(&[5.0; 4], 2).unwrap();
        assert_eq!((c.warmup, c.values), (1, vec![5.0; 3]));
        assert!(matches!(sma(&[1.0], 2), Err(IndicatorError::InsufficientData { .. })));
        assert!(sma(&[1.0], 0).is_err());
    }

    #[test]
    fn ema_small_cases() {
        let p = [3.0, -1.0, 4.5, 2.0];
        assert_eq!(ema(&p, 1).unwrap().values, p.to_vec());
        assert_eq!(ema(&[7.25; 6], 3).unwrap().values, vec![7.25; 4]);
        let e = ema(&[10.0, 11.0, 12.0, 13.0], 2).unwrap();
        assert_eq!(e.warmup, 1);
        let expected = [10.5, 11.5, 12.5];
        for (a, b) in e.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bollinger_small_cases() {
        let flat = bollinger(&[4.0; 5], 3, 2.0).unwrap();
        assert_eq!(flat.upper, flat.mid);
        assert_eq!(flat.lower, flat.mid);
        let b = bollinger(&[1.0, 3.0], 2, 2.0).unwrap();
        assert_eq!((b.mid.values[0], b.upper.values[0], b.lower.values[0]), (2.0, 4.0, 0.0));
        assert!(bollinger(&[1.0, 2.0], 1, 2.0).is_err());
        assert!(bollinger(&[1.0, 2.0], 2, 0.0).is_err());
    }

    #[test]
    fn rsi_small_cases() {
        let up: Vec<f64> = (0..10).map(|i| i as f64 * 1.5).collect();
        assert!(rsi(&up, 4).unwrap().values.iter().all(|&v| v == 100.0));
        let down: Vec<f64> = (0..10).map(|i| -(i as f64)).collect();
        assert!(rsi(&down, 4).unwrap().values.iter().all(|&v| v == 0.0));
        let zigzag: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 10.0 } else { 11.0 }).collect();
        let r = rsi(&zigzag, 4).unwrap();
        assert_eq!(r.warmup, 4);
        assert!(r.values.iter().all(|&v| (v - 50.0).abs() < 1e-12));
        assert!(rsi(&[1.0, 2.0], 2).is_err());
    }

    fn flat_series(len: usize, p: f64) -> OhlcvSeries {
        let candles = (0..len as i64)
            .map(|i| Candle {
                timestamp: i * 3600,
                open: p,
                high: p,
                low: p,
                close: p,
                volume: 1.0,
            })
            .collect();
        OhlcvSeries::new(Interval::Hourly, candles).unwrap()
    }

    #[test]
    fn cci_flat_is_zero() {
        let c = cci(&flat_series(30, 0.1), 20).unwrap();
        assert_eq!(c.warmup, 19);
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cci_at_window_mean_is_zero() {
        let tps = [1.0, 3.0, 2.0];
        let candles = tps
            .iter()
            .enumerate()
            .map(|(i, &p)| Candle {
                timestamp: i as i64 * 86_400,
                open: p,
                high: p,
                low: p,
                close: p,
                volume: 0.0,
            })
            .collect();
        let s = OhlcvSeries::new(Interval::Daily, candles).unwrap();
        assert_eq!(cci(&s, 3).unwrap().values, vec![0.0]);
    }

    #[test]
    fn features_of_flat_series() {
        let params = IndicatorParams::default();
        let fm = build_features(&flat_series(40, 12.0), &params, FeatureSet::Indicators).unwrap();
        assert_eq!(fm.warmup, 19);
        assert_eq!(fm.values.len(), 21);
        for row in &fm.values {
            assert_eq!(row, &vec![12.0, 12.0, 12.0, 12.0, 12.0, 12.0, 100.0, 0.0]);
        }
    }

    #[test]
    fn warmup_is_largest_individual_warmup() {
        let p = IndicatorParams {
            sma_n: 5,
            ema_n: 9,
            bb_n: 4,
            bb_k: 1.5,
            rsi_n: 7,
            cci_n: 3,
        };
        assert_eq!(p.warmup(), 8);
        let p2 = IndicatorParams { rsi_n: 12, ..p };
        assert_eq!(p2.warmup(), 12);
        assert!(build_features(&flat_series(12, 1.0), &p2, FeatureSet::Indicators).is_err());
        assert!(IndicatorParams { bb_k: -1.0, ..p }.validate().is_err());
    }

    #[test]
    fn ohlcv_features_share_warmup() {
        let params = IndicatorParams::default();
        let fm = build_features(&flat_series(25, 3.0), &params, FeatureSet::Ohlcv).unwrap();
        assert_eq!(fm.warmup, 19);
        assert_eq!(fm.width(), 5);
        assert_eq!(fm.row(19).unwrap(), &[3.0, 3.0, 3.0, 3.0, 1.0]);
        assert!(fm.row(18).is_none());
    }
}
