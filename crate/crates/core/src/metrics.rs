//! Regression metrics and the prediction CSV format.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted values")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("metrics need at least {needed} values")]
    TooShort { needed: usize },
    #[error("actual values are constant, so their variance is zero")]
    UndefinedVariance,
    #[error("value {value} at index {index} is outside the MSLE domain (> -1)")]
    Domain { index: usize, value: f64 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn check(y: &[f64], y_hat: &[f64], min_len: usize) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(MetricError::LengthMismatch {
            actual: y.len(),
            predicted: y_hat.len(),
        });
    }
    if y.len() < min_len {
        return Err(MetricError::TooShort { needed: min_len });
    }
    if let Some(i) = y.iter().chain(y_hat).position(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite(i % y.len()));
    }
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    xs.sum::<f64>() / n
}

fn population_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(xs.clone());
    mean(xs.map(|x| (x - m) * (x - m)))
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat, 1)?;
    Ok(mean(y.iter().zip(y_hat).map(|(a, p)| (a - p) * (a - p))))
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    mse(y, y_hat).map(f64::sqrt)
}

/// `1 − Var(y − ŷ) / Var(y)` with population variances.
///
/// This differs from the sum-of-squares coefficient of determination when
/// the residuals have a non-zero mean: a constant bias is not penalized.
pub fn r_square(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat, 2)?;
    let var_y = population_variance(y.iter().copied());
    if var_y == 0.0 {
        return Err(MetricError::UndefinedVariance);
    }
    let var_res = population_variance(y.iter().zip(y_hat).map(|(a, p)| a - p));
    Ok(1.0 - var_res / var_y)
}

/// Mean of `(ln(1 + y) − ln(1 + ŷ))²`.
pub fn msle(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat, 1)?;
    for (i, (&a, &p)) in y.iter().zip(y_hat).enumerate() {
        for value in [a, p] {
            if value <= -1.0 {
                return Err(MetricError::Domain { index: i, value });
            }
        }
    }
    Ok(mean(y.iter().zip(y_hat).map(|(a, p)| (a.ln_1p() - p.ln_1p()).powi(2))))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub rmse: f64,
    pub r_square: f64,
    pub msle: f64,
}

impl MetricSet {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<MetricSet> {
        let mse = mse(y, y_hat)?;
        Ok(MetricSet {
            mse,
            rmse: mse.sqrt(),
            r_square: r_square(y, y_hat)?,
            msle: msle(y, y_hat)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub timestamp: i64,
    pub actual: f64,
    pub predicted: f64,
}

/// Writes `timestamp,actual,predicted`; floats use the shortest exact form.
pub fn write_predictions<W: Write>(rows: &[PredictionRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions<R: Read>(input: R) -> csv::Result<Vec<PredictionRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        let y = [1.0, 4.0, 2.0, 9.0];
        assert_eq!(r_square(&y, &y).unwrap(), 1.0);
        assert!(r_square(&y, &[4.0; 4]).unwrap().abs() < 1e-15);
        assert!((msle(&[std::f64::consts::E - 1.0], &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(msle(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(MetricError::LengthMismatch { .. })));
        assert!(matches!(mse(&[], &[]), Err(MetricError::TooShort { .. })));
        assert_eq!(r_square(&[3.0, 3.0], &[1.0, 2.0]), Err(MetricError::UndefinedVariance));
        assert!(matches!(msle(&[0.0, -1.0], &[0.0, 0.0]), Err(MetricError::Domain { index: 1, .. })));
        assert!(matches!(mse(&[f64::NAN], &[0.0]), Err(MetricError::NonFinite(0))));
    }

    #[test]
    fn prediction_csv_round_trip() {
        let rows = vec![
            PredictionRow {
                timestamp: 1_700_000_000,
                actual: 0.1 + 0.2,
                predicted: 41234.56789012345,
            },
            PredictionRow {
                timestamp: 1_700_003_600,
                actual: 1e-300,
                predicted: -3.5,
            },
        ];
        let mut buf = Vec::new();
        write_predictions(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,actual,predicted\n"));
        assert_eq!(read_predictions(buf.as_slice()).unwrap(), rows);
    }
}
