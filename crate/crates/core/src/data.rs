//! CSV ingestion, windowing, normalization and chronological splits.

use std::fs::File;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::{build_features, FeatureSet, IndicatorError, IndicatorParams};
use crate::series::{validate_candle, Candle, Interval, OhlcvSeries, SeriesError};
use crate::tensor::Tensor;

pub const CSV_HEADER: [&str; 6] = ["timestamp", "open", "high", "low", "close", "volume"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("input has no data rows")]
    Empty,
    #[error("line {line}: duplicate timestamp {timestamp}")]
    Duplicate { line: u64, timestamp: i64 },
    #[error("line {line}: timestamp {timestamp} is not after {previous}")]
    NotIncreasing { line: u64, timestamp: i64, previous: i64 },
    #[error("line {line}: timestamp {timestamp} is off the {interval:?} grid started at {previous}")]
    Misaligned {
        line: u64,
        timestamp: i64,
        previous: i64,
        interval: Interval,
    },
    #[error("need at least {needed} rows, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("invalid split fractions: {0}")]
    Split(String),
    #[error("normalization covers {found} columns, the features have {expected}")]
    NormMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// A parsed file reduced to its longest gap-free run of candles.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedSeries {
    pub series: OhlcvSeries,
    /// Number of gaps found; each one started a new segment.
    pub gap_warnings: usize,
    /// Rows discarded because they were outside the kept segment.
    pub dropped_rows: usize,
}

pub fn load_csv(path: impl AsRef<Path>, interval: Interval) -> Result<LoadedSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(file, interval)
}

/// Writes candles in the format `parse_csv` reads; values round-trip exactly.
pub fn write_csv<W: std::io::Write>(series: &OhlcvSeries, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for c in series.candles() {
        writeln!(out, "{},{},{},{},{},{}", c.timestamp, c.open, c.high, c.low, c.close, c.volume)?;
    }
    Ok(())
}

/// Parses `timestamp,open,high,low,close,volume` rows.
///
/// Timestamps must increase in whole multiples of the interval. A jump of
/// more than one interval is a gap: the data is split there and the longest
/// segment is kept (the earliest one on ties).
pub fn parse_csv<R: Read>(reader: R, interval: Interval) -> Result<LoadedSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| DataError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().map(str::to_ascii_lowercase).ne(CSV_HEADER.iter().map(|s| s.to_string())) {
        return Err(DataError::Parse {
            line: 1,
            message: format!("expected header {}, found {}", CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let step = interval.seconds();
    let mut segments: Vec<Vec<Candle>> = vec![Vec::new()];
    let mut previous: Option<i64> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CSV_HEADER.len() {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let timestamp: i64 = record[0].parse().map_err(|_| DataError::Parse {
            line,
            message: format!("timestamp {:?} is not an integer", &record[0]),
        })?;
        let mut fields = [0.0; 5];
        for (k, slot) in fields.iter_mut().enumerate() {
            let raw = &record[k + 1];
            *slot = raw.parse().map_err(|_| DataError::Parse {
                line,
                message: format!("{} {raw:?} is not a number", CSV_HEADER[k + 1]),
            })?;
        }
        let [open, high, low, close, volume] = fields;
        let candle = Candle {
            timestamp,
            open,
            high,
            low,
            close,
            volume,
        };
        validate_candle(&candle).map_err(|message| DataError::Parse { line, message })?;

        if let Some(prev) = previous {
            let delta = timestamp - prev;
            if delta == 0 {
                return Err(DataError::Duplicate { line, timestamp });
            }
            if delta < 0 {
                return Err(DataError::NotIncreasing {
                    line,
                    timestamp,
                    previous: prev,
                });
            }
            if delta % step != 0 {
                return Err(DataError::Misaligned {
                    line,
                    timestamp,
                    previous: prev,
                    interval,
                });
            }
            if delta > step {
                log::warn!("line {line}: gap of {} intervals before timestamp {timestamp}", delta / step - 1);
                segments.push(Vec::new());
            }
        }
        previous = Some(timestamp);
        segments.last_mut().expect("at least one segment").push(candle);
    }

    let total: usize = segments.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(DataError::Empty);
    }
    let gap_warnings = segments.len() - 1;
    let mut best = 0;
    for (i, s) in segments.iter().enumerate() {
        if s.len() > segments[best].len() {
            best = i;
        }
    }
    let kept = segments.swap_remove(best);
    if gap_warnings > 0 {
        log::warn!("kept the longest gap-free segment: {} of {total} rows", kept.len());
    }
    Ok(LoadedSeries {
        dropped_rows: total - kept.len(),
        series: OhlcvSeries::new(interval, kept)?,
        gap_warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || self.train <= 0.0 {
            return Err(DataError::Split(format!("{parts:?} must be non-negative with a positive train share")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Split(format!("{parts:?} must sum to 1")));
        }
        Ok(())
    }

    /// Window-index ranges for `n` windows; the test split takes the remainder.
    pub fn ranges(&self, n: usize) -> Splits {
        let n_train = ((self.train * n as f64).round() as usize).clamp(1.min(n), n);
        let n_val = ((self.validation * n as f64).round() as usize).min(n - n_train);
        Splits {
            train: 0..n_train,
            validation: n_train..n_train + n_val,
            test: n_train + n_val..n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(alias = "val")]
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    pub fn get(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Validation => self.validation.clone(),
            Split::Test => self.test.clone(),
        }
    }
}

/// Per-column z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; a constant column gets 1.
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(rows: &[Vec<f64>]) -> NormStats {
        let width = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        let mut std = vec![1.0; width];
        for j in 0..width {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            if var > 0.0 {
                std[j] = var.sqrt();
            }
        }
        NormStats { mean, std }
    }

    pub fn normalize(&self, j: usize, x: f64) -> f64 {
        (x - self.mean[j]) / self.std[j]
    }

    pub fn denormalize(&self, j: usize, z: f64) -> f64 {
        z * self.std[j] + self.mean[j]
    }
}

/// Sliding windows over normalized feature rows with next-close targets.
///
/// Window `w` spans valid rows `w .. w + L`; its target is the close of row
/// `w + L`. Normalization statistics come from the rows the training windows
/// touch (inputs and targets) and nothing later.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub feature_set: FeatureSet,
    pub window: usize,
    pub close_column: usize,
    pub norm: NormStats,
    pub splits: Splits,
    /// Normalized feature rows from the warm-up onwards.
    rows: Vec<Vec<f64>>,
    closes: Vec<f64>,
    timestamps: Vec<i64>,
}

impl Dataset {
    pub fn build(
        series: &OhlcvSeries,
        params: &IndicatorParams,
        feature_set: FeatureSet,
        window: usize,
        fractions: SplitFractions,
    ) -> Result<Dataset> {
        Self::assemble(series, params, feature_set, window, fractions, None)
    }

    /// Like [`Dataset::build`] but normalizes with stored statistics, e.g.
    /// those saved alongside a trained model.
    pub fn build_with_norm(
        series: &OhlcvSeries,
        params: &IndicatorParams,
        feature_set: FeatureSet,
        window: usize,
        fractions: SplitFractions,
        norm: NormStats,
    ) -> Result<Dataset> {
        Self::assemble(series, params, feature_set, window, fractions, Some(norm))
    }

    fn assemble(
        series: &OhlcvSeries,
        params: &IndicatorParams,
        feature_set: FeatureSet,
        window: usize,
        fractions: SplitFractions,
        norm: Option<NormStats>,
    ) -> Result<Dataset> {
        fractions.validate()?;
        if window == 0 {
            return Err(DataError::Split("window length must be ≥ 1".into()));
        }
        params.validate()?;
        let needed = params.warmup() + window + 1;
        if series.len() < needed {
            return Err(DataError::InsufficientData {
                needed,
                available: series.len(),
            });
        }
        let fm = build_features(series, params, feature_set)?;
        let n_windows = fm.values.len() - window;
        let splits = fractions.ranges(n_windows);
        let norm = match norm {
            Some(n) if n.mean.len() != fm.width() || n.std.len() != fm.width() => {
                return Err(DataError::NormMismatch {
                    expected: fm.width(),
                    found: n.mean.len().min(n.std.len()),
                })
            }
            Some(n) => n,
            None => NormStats::fit(&fm.values[..splits.train.end + window]),
        };
        let close_column = feature_set.close_column();
        let rows = fm
            .values
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, &x)| norm.normalize(j, x)).collect())
            .collect();
        let candles = &series.candles()[fm.warmup..];
        Ok(Dataset {
            columns: fm.columns,
            feature_set,
            window,
            close_column,
            norm,
            splits,
            rows,
            closes: candles.iter().map(|c| c.close).collect(),
            timestamps: candles.iter().map(|c| c.timestamp).collect(),
        })
    }

    pub fn n_windows(&self) -> usize {
        self.rows.len() - self.window
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Normalized `L × F` rows of window `w`.
    pub fn window_rows(&self, w: usize) -> &[Vec<f64>] {
        &self.rows[w..w + self.window]
    }

    /// Normalized next-close target of window `w`.
    pub fn target(&self, w: usize) -> f64 {
        self.rows[w + self.window][self.close_column]
    }

    /// Raw next close of window `w`.
    pub fn target_price(&self, w: usize) -> f64 {
        self.closes[w + self.window]
    }

    pub fn target_timestamp(&self, w: usize) -> i64 {
        self.timestamps[w + self.window]
    }

    pub fn denormalize_close(&self, z: f64) -> f64 {
        self.norm.denormalize(self.close_column, z)
    }

    /// `[B, L, F]` input batch for the given windows.
    pub fn batch(&self, windows: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(windows.len() * self.window * self.n_features());
        for &w in windows {
            for row in self.window_rows(w) {
                data.extend_from_slice(row);
            }
        }
        Tensor::new(&[windows.len(), self.window, self.n_features()], data).expect("normalized rows are finite")
    }

    pub fn targets(&self, windows: &[usize]) -> Vec<f64> {
        windows.iter().map(|&w| self.target(w)).collect()
    }
}
