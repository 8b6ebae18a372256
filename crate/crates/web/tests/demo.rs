use perfcast::series::{synthetic_series, SyntheticSpec};
use perfcast_web::{favor_error_curve, indicator_curves, kernel_pairs};

#[test]
fn error_curve_shrinks_with_more_features() {
    let rs = [16, 64, 256, 1024];
    let errs = favor_error_curve(32, 8, &rs, 9, 3, false).unwrap();
    assert_eq!(errs.len(), rs.len());
    assert!(errs.iter().all(|e| e.is_finite() && *e >= 0.0));
    assert!(errs[3] < errs[0], "{errs:?}");
    assert!(errs[3] <= 0.05, "{errs:?}");
    assert_eq!(errs, favor_error_curve(32, 8, &rs, 9, 3, false).unwrap());

    let causal = favor_error_curve(32, 8, &[16, 1024], 9, 3, true).unwrap();
    assert!(causal[1] < causal[0], "{causal:?}");
}

#[test]
fn error_curve_rejects_empty_sizes() {
    assert!(favor_error_curve(0, 8, &[16], 3, 0, false).is_err());
    assert!(favor_error_curve(8, 8, &[16, 0], 3, 0, false).is_err());
    assert!(favor_error_curve(8, 8, &[16], 0, 0, false).is_err());
}

#[test]
fn kernel_pairs_at_the_origin_are_exact() {
    let pairs = kernel_pairs(4, 32, 0.0, 5, 1).unwrap();
    assert_eq!(pairs.len(), 10);
    for p in pairs.chunks(2) {
        assert_eq!(p[0], 1.0);
        assert!((p[1] - 1.0).abs() <= 1e-12, "{p:?}");
    }
}

fn mean_relative_error(pairs: &[f64]) -> f64 {
    let rel: Vec<f64> = pairs.chunks(2).map(|p| (p[1] - p[0]).abs() / p[0]).collect();
    rel.iter().sum::<f64>() / rel.len() as f64
}

#[test]
fn kernel_pairs_converge_like_inverse_root_r() {
    let norm = 1.0f64;
    let coarse = kernel_pairs(8, 64, norm, 200, 7).unwrap();
    let fine = kernel_pairs(8, 4096, norm, 200, 7).unwrap();
    // same (x, y) pairs for both feature counts
    let exact: Vec<f64> = coarse.chunks(2).map(|p| p[0]).collect();
    assert_eq!(exact, fine.chunks(2).map(|p| p[0]).collect::<Vec<_>>());
    for p in fine.chunks(2) {
        // |xᵀy| ≤ ‖x‖‖y‖
        assert!(p[0] >= (-norm * norm).exp() - 1e-12 && p[0] <= (norm * norm).exp() + 1e-12);
        assert!(p[1] > 0.0);
    }
    // relative std is sqrt((exp‖x+y‖² - 1) / r): 64x the features, ~8x smaller error
    let (ec, ef) = (mean_relative_error(&coarse), mean_relative_error(&fine));
    assert!(ef <= ec / 4.0, "{ec} -> {ef}");
    assert!(ef <= 0.05, "{ef}");
    assert!(kernel_pairs(8, 16, f64::NAN, 1, 0).is_err());
}

#[test]
fn indicator_curves_align_with_the_series() {
    let (len, n, bb_n) = (300, 14, 20);
    let c = indicator_curves(len, 5, 0.5, n, bb_n, 2.0).unwrap();
    let closes = synthetic_series(&SyntheticSpec {
        len,
        noise: 0.5,
        seed: 5,
        ..SyntheticSpec::default()
    })
    .closes();
    assert_eq!(c.close(), closes);

    let nan_prefix = |v: &[f64]| v.iter().take_while(|x| x.is_nan()).count();
    for (curve, warmup) in [(c.sma(), n - 1), (c.ema(), n - 1), (c.bb_mid(), bb_n - 1), (c.rsi(), n), (c.cci(), n - 1)] {
        assert_eq!(curve.len(), len);
        assert_eq!(nan_prefix(&curve), warmup);
        assert!(curve[warmup..].iter().all(|x| x.is_finite()));
    }

    let sma = c.sma();
    for t in [n - 1, 100, len - 1] {
        let brute = closes[t + 1 - n..=t].iter().sum::<f64>() / n as f64;
        assert!((sma[t] - brute).abs() <= 1e-9);
    }
    let (lo, mid, hi) = (c.bb_lower(), c.bb_mid(), c.bb_upper());
    for t in bb_n - 1..len {
        assert!(lo[t] <= mid[t] && mid[t] <= hi[t]);
    }
    assert!(c.rsi()[n..].iter().all(|r| (0.0..=100.0).contains(r)));
}

#[test]
fn indicator_curves_report_bad_parameters() {
    assert!(indicator_curves(10, 0, 0.5, 14, 20, 2.0).is_err());
    assert!(indicator_curves(0, 0, 0.5, 14, 20, 2.0).is_err());
    assert!(indicator_curves(100, 0, -1.0, 14, 20, 2.0).is_err());
    assert!(indicator_curves(100, 0, 0.5, 14, 20, 0.0).is_err());
}
