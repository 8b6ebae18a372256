//! OHLCV candles at a fixed interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interval {
    Hourly,
    Daily,
}

impl Interval {
    pub fn seconds(self) -> i64 {
        match self {
            Interval::Hourly => 3_600,
            Interval::Daily => 86_400,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    /// Epoch seconds.
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Candle {
    /// `(high + low + close) / 3`.
    pub fn typical_price(&self) -> f64 {
        (self.high + self.low + self.close) / 3.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("candle {index}: {reason}")]
    InvalidCandle { index: usize, reason: String },
    #[error("candle {index}: timestamp {timestamp} does not follow {previous} by one {interval:?} interval")]
    Spacing {
        index: usize,
        previous: i64,
        timestamp: i64,
        interval: Interval,
    },
    #[error("series is empty")]
    Empty,
}

/// Time-ordered candles with constant spacing equal to `interval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OhlcvSeries {
    interval: Interval,
    candles: Vec<Candle>,
}

impl OhlcvSeries {
    pub fn new(interval: Interval, candles: Vec<Candle>) -> Result<Self, SeriesError> {
        if candles.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (index, c) in candles.iter().enumerate() {
            validate_candle(c).map_err(|reason| SeriesError::InvalidCandle { index, reason })?;
            if index > 0 {
                let previous = candles[index - 1].timestamp;
                if c.timestamp - previous != interval.seconds() {
                    return Err(SeriesError::Spacing {
                        index,
                        previous,
                        timestamp: c.timestamp,
                        interval,
                    });
                }
            }
        }
        Ok(OhlcvSeries { interval, candles })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn candles(&self) -> &[Candle] {
        &self.candles
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.close).collect()
    }

    /// Candles `start..`, still a valid series.
    pub fn skip(&self, start: usize) -> Result<OhlcvSeries, SeriesError> {
        OhlcvSeries::new(self.interval, self.candles[start.min(self.len())..].to_vec())
    }
}

/// Deterministic test market: `base + amplitude·sin(2πt/period)` plus AR(1)
/// noise on the close, with opens, wicks and volumes derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub len: usize,
    pub interval: Interval,
    pub base: f64,
    pub amplitude: f64,
    pub period: f64,
    /// AR(1) coefficient of the noise.
    pub phi: f64,
    /// Innovation standard deviation of the noise.
    pub noise: f64,
    pub start: i64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            len: 5_000,
            interval: Interval::Hourly,
            base: 100.0,
            amplitude: 20.0,
            period: 50.0,
            phi: 0.8,
            noise: 0.5,
            start: 1_514_764_800,
            seed: 0,
        }
    }
}

pub fn synthetic_series(spec: &SyntheticSpec) -> OhlcvSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ar = 0.0;
    let mut prev_close = spec.base;
    let candles = (0..spec.len)
        .map(|t| {
            let z: f64 = StandardNormal.sample(&mut rng);
            ar = spec.phi * ar + spec.noise * z;
            let angle = 2.0 * std::f64::consts::PI * t as f64 / spec.period;
            let close = spec.base + spec.amplitude * angle.sin() + ar;
            let open = prev_close;
            prev_close = close;
            let wick = spec.noise.max(1e-3);
            Candle {
                timestamp: spec.start + t as i64 * spec.interval.seconds(),
                open,
                high: open.max(close) + wick * rng.random::<f64>(),
                low: open.min(close) - wick * rng.random::<f64>(),
                close,
                volume: 1_000.0 * (1.0 + rng.random::<f64>()),
            }
        })
        .collect();
    OhlcvSeries::new(spec.interval, candles).expect("generated candles are valid")
}

pub(crate) fn validate_candle(c: &Candle) -> Result<(), String> {
    let fields = [c.open, c.high, c.low, c.close, c.volume];
    if fields.iter().any(|v| !v.is_finite()) {
        return Err("non-finite field".into());
    }
    if c.volume < 0.0 {
        return Err(format!("negative volume {}", c.volume));
    }
    if c.high < c.open.max(c.close) {
        return Err(format!("high {} below open/close", c.high));
    }
    if c.low > c.open.min(c.close) {
        return Err(format!("low {} above open/close", c.low));
    }
    Ok(())
}
