use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use perfcast::attention::probe::{complexity_probe, loglog_slope, write_probe_csv, ProbeMode, ProbeSettings};
use perfcast::data::{load_csv, write_csv, Dataset, LoadedSeries, NormStats, Split};
use perfcast::metrics::{write_predictions, MetricSet};
use perfcast::model::{predict_series, train as fit, Checkpoint, Model, ModelSpec, TrainReport};
use perfcast::series::{synthetic_series, Interval, SyntheticSpec};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Loads the config, then applies the command-line overrides.
pub fn resolve(config: &Path, out: &Option<PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config)?.with_seed(seed);
    if let Some(out) = out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct WindowCounts {
    total: usize,
    train: usize,
    validation: usize,
    test: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    data: String,
    interval: Interval,
    input_rows: usize,
    rows: usize,
    dropped_rows: usize,
    gap_warnings: usize,
    warmup: usize,
    window: usize,
    columns: &'a [String],
    windows: WindowCounts,
    norm: &'a NormStats,
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<(LoadedSeries, Dataset)> {
    let loaded = load_csv(&cfg.data.path, cfg.data.interval)?;
    let ds = Dataset::build(
        &loaded.series,
        &cfg.indicators,
        cfg.model.variant.feature_set(),
        cfg.model.window,
        cfg.split,
    )?;
    Ok((loaded, ds))
}

fn write_manifest(cfg: &ExperimentConfig, loaded: &LoadedSeries, ds: &Dataset) -> Result<()> {
    let rows = loaded.series.len();
    let manifest = Manifest {
        data: cfg.data.path.display().to_string(),
        interval: cfg.data.interval,
        input_rows: rows + loaded.dropped_rows,
        rows,
        dropped_rows: loaded.dropped_rows,
        gap_warnings: loaded.gap_warnings,
        warmup: cfg.indicators.warmup(),
        window: ds.window,
        columns: &ds.columns,
        windows: WindowCounts {
            total: ds.n_windows(),
            train: ds.splits.train.len(),
            validation: ds.splits.validation.len(),
            test: ds.splits.test.len(),
        },
        norm: &ds.norm,
    };
    write_json(&cfg.out_dir.join("manifest.json"), &manifest)?;
    println!(
        "rows {rows} (dropped {}, gaps {}), warm-up {}, window {}",
        loaded.dropped_rows,
        loaded.gap_warnings,
        manifest.warmup,
        ds.window
    );
    println!(
        "windows {}: train {}, validation {}, test {}",
        manifest.windows.total, manifest.windows.train, manifest.windows.validation, manifest.windows.test
    );
    Ok(())
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<()> {
    let (loaded, ds) = load_dataset(cfg)?;
    write_manifest(cfg, &loaded, &ds)
}

fn write_losses(path: &Path, report: &TrainReport) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from("epoch,train_loss,val_loss\n");
    for e in &report.epochs {
        let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
        body.push_str(&format!("{},{},{val}\n", e.epoch, e.train_loss));
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn print_metrics(label: &str, m: &MetricSet) {
    println!(
        "{label}: MSE {:.6e}  RMSE {:.6e}  R-Square {:.6}  MSLE {:.6e}",
        m.mse, m.rmse, m.r_square, m.msle
    );
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let (loaded, ds) = load_dataset(cfg)?;
    write_manifest(cfg, &loaded, &ds)?;
    let mut model = Model::build(&cfg.model, ds.n_features())?;
    let report = fit(&mut model, &ds, &cfg.train)?;

    let ckpt_path = cfg.out_dir.join("model.ckpt");
    Checkpoint::from_model(&model, cfg.indicators, cfg.split, ds.columns.clone(), ds.norm.clone())
        .save(&ckpt_path)
        .map_err(|e| io_err(&ckpt_path, e))?;
    write_losses(&cfg.out_dir.join("losses.csv"), &report)?;
    write_json(&cfg.out_dir.join("train_report.json"), &report)?;

    println!(
        "{}: {} parameters, {} epochs, {} steps",
        report.variant,
        report.param_count,
        report.epochs.len(),
        report.steps
    );
    match (&report.validation, report.best_epoch) {
        (Some(m), Some(best)) => print_metrics(&format!("validation (epoch {best})"), m),
        _ => println!("validation: none"),
    }
    println!("checkpoint written to {}", ckpt_path.display());
    Ok(())
}

#[derive(Serialize)]
struct MetricsOut {
    #[serde(rename = "MSE")]
    mse: f64,
    #[serde(rename = "RMSE")]
    rmse: f64,
    #[serde(rename = "R-Square")]
    r_square: f64,
    #[serde(rename = "MSLE")]
    msle: f64,
    split: &'static str,
    windows: usize,
}

/// Seeds only decide the initial draw, which a checkpoint replaces.
fn unseeded(spec: &ModelSpec) -> ModelSpec {
    let mut s = spec.clone();
    s.seed = 0;
    if let Some(f) = s.favor.as_mut() {
        f.seed = 0;
    }
    s
}

fn check_matches(cfg: &ExperimentConfig, ckpt: &Checkpoint) -> Result<()> {
    let h = &ckpt.header;
    let mut diffs = Vec::new();
    if unseeded(&cfg.model) != unseeded(&h.spec) {
        diffs.push("model");
    }
    if cfg.indicators != h.indicators {
        diffs.push("indicators");
    }
    if cfg.split != h.split {
        diffs.push("split");
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "checkpoint was trained with different {} settings",
            diffs.join(", ")
        )))
    }
}

pub fn evaluate(checkpoint: &Path, cfg: &ExperimentConfig, split: Split) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint).map_err(|e| io_err(checkpoint, e))?;
    check_matches(cfg, &ckpt)?;
    let h = &ckpt.header;
    let loaded = load_csv(&cfg.data.path, cfg.data.interval)?;
    let ds = Dataset::build_with_norm(
        &loaded.series,
        &h.indicators,
        h.spec.variant.feature_set(),
        h.spec.window,
        h.split,
        ckpt.norm.clone(),
    )?;
    if ds.columns != h.columns {
        return Err(CliError::Config(format!(
            "checkpoint columns {:?} differ from data columns {:?}",
            h.columns, ds.columns
        )));
    }
    let model = ckpt.to_model()?;
    let rows = predict_series(&model, &ds, split)?;
    let actual: Vec<f64> = rows.iter().map(|r| r.actual).collect();
    let predicted: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
    let m = MetricSet::compute(&actual, &predicted).map_err(|e| CliError::Input(e.to_string()))?;

    let name = split.as_str();
    write_json(
        &cfg.out_dir.join(format!("metrics_{name}.json")),
        &MetricsOut {
            mse: m.mse,
            rmse: m.rmse,
            r_square: m.r_square,
            msle: m.msle,
            split: name,
            windows: rows.len(),
        },
    )?;
    let pred_path = cfg.out_dir.join(format!("predictions_{name}.csv"));
    let mut w = create(&pred_path)?;
    write_predictions(&rows, &mut w).map_err(|e| io_err(&pred_path, e))?;
    print_metrics(&format!("{name} ({} windows)", rows.len()), &m);
    Ok(())
}

pub fn bench(lengths: Vec<usize>, d_k: usize, r: usize, reps: usize, seed: u64, out: &Path) -> Result<()> {
    if lengths.is_empty() || lengths.contains(&0) || d_k == 0 || r == 0 || reps == 0 {
        return Err(CliError::Config("lengths, d_k, r and reps must all be positive".into()));
    }
    let settings = ProbeSettings {
        lengths,
        d_k,
        r,
        reps,
        seed,
    };
    let rows = complexity_probe(&[ProbeMode::Exact, ProbeMode::Favor], &settings);
    let path = out.join("bench.csv");
    let mut w = create(&path)?;
    write_probe_csv(&rows, &mut w).map_err(|e| io_err(&path, e))?;
    for mode in [ProbeMode::Exact, ProbeMode::Favor] {
        match loglog_slope(&rows, mode) {
            Some(s) => println!("{} log-log slope {s:.3}", mode.as_str()),
            None => println!("{} log-log slope n/a (need two lengths)", mode.as_str()),
        }
    }
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}

pub fn synth(len: usize, interval: Interval, seed: u64, out: &Path) -> Result<()> {
    if len == 0 {
        return Err(CliError::Config("len must be ≥ 1".into()));
    }
    let series = synthetic_series(&SyntheticSpec {
        len,
        interval,
        seed,
        ..SyntheticSpec::default()
    });
    let mut w = create(out)?;
    write_csv(&series, &mut w).and_then(|_| w.flush()).map_err(|e| io_err(out, e))?;
    println!("{len} candles written to {}", out.display());
    Ok(())
}
