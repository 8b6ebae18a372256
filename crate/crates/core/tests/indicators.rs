use perfcast::indicators::*;
use perfcast::series::{Candle, Interval, OhlcvSeries};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_walk(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = 100.0;
    (0..len)
        .map(|_| {
            p += rng.random_range(-2.0..2.0);
            p
        })
        .collect()
}

fn candles_from(closes: &[f64], seed: u64) -> OhlcvSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = closes[0];
    let candles = closes
        .iter()
        .enumerate()
        .map(|(i, &close)| {
            let open = prev;
            prev = close;
            Candle {
                timestamp: 1_600_000_000 + i as i64 * 3600,
                open,
                high: open.max(close) + rng.random_range(0.0..1.5),
                low: open.min(close) - rng.random_range(0.0..1.5),
                close,
                volume: rng.random_range(0.0..1000.0),
            }
        })
        .collect();
    OhlcvSeries::new(Interval::Hourly, candles).unwrap()
}

// Plain textbook formulas, written without the shifted-sum trick.
fn oracle_mean(w: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in w {
        s += x;
    }
    s / w.len() as f64
}

fn oracle_ema(p: &[f64], n: usize) -> Vec<f64> {
    let k = 2.0 / (n as f64 + 1.0);
    let mut out = vec![oracle_mean(&p[..n])];
    for &x in &p[n..] {
        let prev = *out.last().unwrap();
        out.push(x * k + prev * (1.0 - k));
    }
    out
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn sma_matches_resummation() {
    let p = random_walk(100, 1);
    let s = sma(&p, 14).unwrap();
    assert_eq!(s.warmup, 13);
    let oracle: Vec<f64> = (13..100).map(|i| oracle_mean(&p[i - 13..=i])).collect();
    assert!(max_err(&s.values, &oracle) <= 1e-12);
}

#[test]
fn ema_matches_independent_recurrence() {
    let e = ema(&[10.0, 11.0, 12.0, 13.0], 2).unwrap();
    assert!(max_err(&e.values, &[10.5, 11.5, 12.5]) <= 1e-12);
    let p = random_walk(200, 2);
    assert!(max_err(&ema(&p, 14).unwrap().values, &oracle_ema(&p, 14)) <= 1e-10);
}

#[test]
fn bollinger_matches_two_pass() {
    let p = random_walk(150, 3);
    let b = bollinger(&p, 20, 2.0).unwrap();
    for i in 19..150 {
        let w = &p[i - 19..=i];
        let m = oracle_mean(w);
        let var = w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 20.0;
        let sd = var.sqrt();
        assert!((b.mid.get(i).unwrap() - m).abs() <= 1e-10);
        assert!((b.upper.get(i).unwrap() - (m + 2.0 * sd)).abs() <= 1e-10);
        assert!((b.lower.get(i).unwrap() - (m - 2.0 * sd)).abs() <= 1e-10);
    }
}

#[test]
fn rsi_matches_direct_averages() {
    let p = random_walk(120, 4);
    let r = rsi(&p, 14).unwrap();
    assert_eq!(r.warmup, 14);
    for i in 14..120 {
        let (mut g, mut l) = (0.0, 0.0);
        for j in i - 13..=i {
            let d = p[j] - p[j - 1];
            if d > 0.0 {
                g += d;
            } else {
                l -= d;
            }
        }
        let expected = if l == 0.0 {
            100.0
        } else if g == 0.0 {
            0.0
        } else {
            100.0 * g / (g + l)
        };
        assert!((r.get(i).unwrap() - expected).abs() <= 1e-10, "index {i}");
    }
}

#[test]
fn cci_matches_direct_recomputation() {
    let s = candles_from(&random_walk(100, 5), 5);
    let c = cci(&s, 20).unwrap();
    let tp: Vec<f64> = s.candles().iter().map(|c| (c.high + c.low + c.close) / 3.0).collect();
    for i in 19..100 {
        let w = &tp[i - 19..=i];
        let ma = oracle_mean(w);
        let d = w.iter().map(|x| (x - ma).abs()).sum::<f64>() / 20.0;
        let expected = (tp[i] - ma) / (0.015 * d);
        assert!((c.get(i).unwrap() - expected).abs() <= 1e-9, "index {i}");
    }
}

#[test]
fn feature_columns_match_individual_indicators() {
    let s = candles_from(&random_walk(300, 6), 6);
    let params = IndicatorParams::default();
    let fm = build_features(&s, &params, FeatureSet::Indicators).unwrap();
    assert_eq!(fm.columns, ["close", "sma", "ema", "bb_mid", "bb_upper", "bb_lower", "rsi", "cci"]);
    let close = s.closes();
    let bb = bollinger(&close, 20, 2.0).unwrap();
    let singles = [
        sma(&close, 14).unwrap(),
        ema(&close, 14).unwrap(),
        bb.mid,
        bb.upper,
        bb.lower,
        rsi(&close, 14).unwrap(),
        cci(&s, 20).unwrap(),
    ];
    for t in fm.warmup..s.len() {
        let row = fm.row(t).unwrap();
        assert_eq!(row[0], close[t]);
        for (j, ind) in singles.iter().enumerate() {
            assert_eq!(row[j + 1], ind.get(t).unwrap());
        }
        assert!(row.iter().all(|v| v.is_finite()));
    }
}

fn prices_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 30..80).prop_map(|deltas| {
        let mut p = 50.0;
        deltas
            .into_iter()
            .map(|d| {
                p += d;
                p
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn rsi_is_bounded(p in prices_strategy(), n in 1usize..20) {
        for v in rsi(&p, n).unwrap().values {
            prop_assert!((0.0..=100.0).contains(&v));
        }
    }

    #[test]
    fn bands_are_ordered(p in prices_strategy(), n in 2usize..25, k in 0.1f64..4.0) {
        let b = bollinger(&p, n, k).unwrap();
        for i in 0..b.mid.values.len() {
            prop_assert!(b.lower.values[i] <= b.mid.values[i]);
            prop_assert!(b.mid.values[i] <= b.upper.values[i]);
        }
    }

    #[test]
    fn windowed_indicators_are_shift_equivariant(p in prices_strategy(), t in 0usize..10) {
        let tail = &p[t..];
        let same = |full: &IndicatorSeries, shifted: &IndicatorSeries| {
            (full.warmup + t..p.len()).all(|i| full.get(i) == shifted.get(i - t))
        };
        prop_assert!(same(&sma(&p, 7).unwrap(), &sma(tail, 7).unwrap()));
        prop_assert!(same(&rsi(&p, 6).unwrap(), &rsi(tail, 6).unwrap()));
        let (a, b) = (bollinger(&p, 9, 2.0).unwrap(), bollinger(tail, 9, 2.0).unwrap());
        prop_assert!(same(&a.upper, &b.upper) && same(&a.lower, &b.lower));
        let s = candles_from(&p, 9);
        prop_assert!(same(&cci(&s, 8).unwrap(), &cci(&s.skip(t).unwrap(), 8).unwrap()));
    }

    // The EMA seed depends on where the series starts, so equivariance holds
    // only once the seed difference has decayed by (1 − k)^m.
    #[test]
    fn ema_shift_difference_decays(p in prices_strategy(), t in 1usize..10) {
        let n = 5;
        let full = ema(&p, n).unwrap();
        let shifted = ema(&p[t..], n).unwrap();
        let k = 2.0 / (n as f64 + 1.0);
        let start = n - 1 + t;
        let d0 = (full.get(start).unwrap() - shifted.get(start - t).unwrap()).abs();
        for i in start..p.len() {
            let bound = d0 * (1.0 - k).powi((i - start) as i32) + 1e-9;
            prop_assert!((full.get(i).unwrap() - shifted.get(i - t).unwrap()).abs() <= bound);
        }
    }

    #[test]
    fn averages_of_constant_are_constant(c in -1e3f64..1e3, len in 2usize..60, n in 1usize..20) {
        let p = vec![c; len.max(n)];
        prop_assert!(sma(&p, n).unwrap().values.iter().all(|&v| v == c));
        prop_assert!(ema(&p, n).unwrap().values.iter().all(|&v| v == c));
    }
}
