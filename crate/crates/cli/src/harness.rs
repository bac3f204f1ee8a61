//! Experiment orchestration behind the subcommands: dataset construction,
//! network initialization, training runs, metric sweeps over epsilon,
//! per-point attack reports, and the satisfaction table.
//!
//! Everything here is a pure function of (config, seed) plus the files it
//! reads, so reruns reproduce their outputs; see the report module for
//! which artifacts are additionally byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use robnet_core::data::{gen_blobs, gen_two_moons, load_idx, DataError, Dataset, LoadIdxError};
use robnet_core::linalg::Matrix;
use robnet_core::metrics::{
    constraint_accuracy, constraint_satisfaction, constraint_security, MetricReport,
};
use robnet_core::nn::{Activation, Layer, Network};
use robnet_core::properties::{PropertyError, PropertyKind, PropertySpec};
use robnet_core::train::{accuracy, train, TrainError, TrainLog};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{
    config_hash, spec_at_epsilon, ConfigError, DatasetConfig, ExperimentConfig, MetricChoice,
};
use crate::dataset_io::{load_dataset, DatasetIoError};
use crate::model_io::{load_model, save_model, ModelIoError};
use crate::report::{
    point_csv, property_label, sweep_csv, table_csv, ReportError, SweepRow, TableRow,
};
use crate::{fmt_f64, to_json_17};

/// Samples drawn per point by the constraint-accuracy metric.
const ACCURACY_SAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelIoError),
    #[error(transparent)]
    DatasetCsv(#[from] DatasetIoError),
    #[error("dataset: {0}")]
    Data(#[from] DataError),
    #[error("dataset: {0}")]
    Idx(#[from] LoadIdxError),
    #[error("training: {0}")]
    Train(#[from] TrainError),
    #[error("metric: {0}")]
    Property(#[from] PropertyError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("no model at {path}; run `robnet train` first")]
    MissingModel { path: String },
    #[error("config lists no [[property]]; nothing to evaluate")]
    NoProperties,
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| HarnessError::Io { path: parent.display().to_string(), source: e })?;
    }
    fs::write(path, text)
        .map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })
}

fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path)
        .map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Builds the configured dataset and splits it. Generated datasets are
/// drawn from `seed`, so every seed sees fresh data as well as fresh
/// weights; file-backed datasets are fixed and only the split varies.
pub fn build_dataset(
    cfg: &ExperimentConfig,
    base: &Path,
    seed: u64,
) -> Result<(Dataset, Dataset), HarnessError> {
    let full = match &cfg.dataset {
        DatasetConfig::TwoMoons { n, noise } => gen_two_moons(*n, *noise, seed)?,
        DatasetConfig::Blobs { n, k_classes, centers, sigma } => {
            gen_blobs(*n, *k_classes, centers, *sigma, seed)?
        }
        DatasetConfig::Idx { images, labels, limit } => load_idx(
            &resolve(base, images),
            &resolve(base, labels),
            limit.unwrap_or(usize::MAX),
        )?,
        DatasetConfig::Csv { path } => load_dataset(&resolve(base, path))?,
    };
    Ok(full.split(cfg.train_frac, seed))
}

/// Fresh network for one seed: Glorot-uniform weights, zero biases, the
/// configured hidden activation, identity output (logits).
pub fn build_network(
    cfg: &ExperimentConfig,
    input_dim: usize,
    n_classes: usize,
    seed: u64,
) -> Result<Network, HarnessError> {
    let hidden = &cfg.architecture.hidden;
    match cfg.architecture.hidden_activation()? {
        Activation::Relu => {
            Ok(Network::mlp(input_dim, hidden, n_classes, Activation::Identity, seed))
        }
        act => {
            // Same draw order as the ReLU initializer; only the hidden
            // activation differs, so relu and clamp runs share weights.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layers = Vec::new();
            let mut fan_in = input_dim;
            for (i, &width) in hidden.iter().chain(core::iter::once(&n_classes)).enumerate() {
                let bound = (6.0 / (fan_in + width) as f64).sqrt();
                let mut data = Vec::with_capacity(width * fan_in);
                for _ in 0..width * fan_in {
                    data.push(rng.gen_range(-bound..bound));
                }
                let layer_act = if i == hidden.len() { Activation::Identity } else { act };
                layers.push(
                    Layer::new(Matrix::from_flat(width, fan_in, data), vec![0.0; width], layer_act)
                        .expect("generated layer is valid"),
                );
                fan_in = width;
            }
            Ok(Network::new(layers).expect("generated network is valid"))
        }
    }
}

fn model_rel(regime: &str, seed: u64) -> String {
    format!("models/{regime}-seed{seed}.json")
}

/// Run manifest: what was trained, where it lives, and how it scored.
/// Deliberately free of timestamps so reruns are byte-identical.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub regime: String,
    pub seeds: Vec<ManifestSeed>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestSeed {
    pub seed: u64,
    pub model: String,
    pub log: String,
    pub dataset: String,
    pub train_points: usize,
    pub test_points: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

fn log_csv(log: &TrainLog) -> String {
    let mut out = String::from("epoch,loss,accuracy\n");
    for e in &log.epochs {
        out.push_str(&format!("{},{},{}\n", e.epoch, fmt_f64(e.loss), fmt_f64(e.accuracy)));
    }
    out
}

/// Trains the configured regime for every seed; writes one model and one
/// epoch log per seed plus `manifest.json`, and returns the manifest.
pub fn run_train(
    cfg: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
) -> Result<Manifest, HarnessError> {
    let regime = cfg.training.mode.name();
    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        let (train_set, test_set) = build_dataset(cfg, base, seed)?;
        let fresh = build_network(cfg, train_set.input_dim(), train_set.n_classes, seed)?;
        let (net, log) = train(fresh, &train_set, &cfg.train_config(seed)?)?;
        let model = model_rel(regime, seed);
        let log_rel = format!("logs/{regime}-seed{seed}.csv");
        let model_path = out_dir.join(&model);
        if let Some(parent) = model_path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| HarnessError::Io { path: parent.display().to_string(), source: e })?;
        }
        save_model(&net, &model_path)?;
        write_text(&out_dir.join(&log_rel), &log_csv(&log))?;
        seeds.push(ManifestSeed {
            seed,
            model,
            log: log_rel,
            dataset: train_set.name.clone(),
            train_points: train_set.len(),
            test_points: test_set.len(),
            train_accuracy: accuracy(&net, &train_set),
            test_accuracy: accuracy(&net, &test_set),
        });
    }
    let manifest = Manifest {
        name: cfg.name.clone(),
        config_hash: config_hash(cfg),
        regime: String::from(regime),
        seeds,
    };
    write_text(&out_dir.join("manifest.json"), &to_json_17(&manifest))?;
    Ok(manifest)
}

/// Loads the trained model for one seed together with its test split.
fn load_trained(
    cfg: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
    seed: u64,
) -> Result<(Network, Dataset), HarnessError> {
    let path = out_dir.join(model_rel(cfg.training.mode.name(), seed));
    if !path.exists() {
        return Err(HarnessError::MissingModel { path: path.display().to_string() });
    }
    let net = load_model(&path)?;
    let (_, test_set) = build_dataset(cfg, base, seed)?;
    Ok((net, test_set))
}

struct Cell {
    seed: u64,
    net_index: usize,
    spec_index: usize,
    epsilon: f64,
    metric: MetricChoice,
}

fn run_cell(
    cfg: &ExperimentConfig,
    cell: &Cell,
    net: &Network,
    data: &Dataset,
    spec: &PropertySpec,
) -> Result<MetricReport, HarnessError> {
    let at_eps = spec_at_epsilon(spec, cell.epsilon);
    let report = match cell.metric {
        MetricChoice::Satisfaction => {
            constraint_satisfaction(&at_eps, net, data, &cfg.budget())?
        }
        MetricChoice::Security => constraint_security(
            &at_eps,
            net,
            data,
            &cfg.attack.params_at(cell.epsilon),
            cell.seed,
        ),
        MetricChoice::Accuracy => {
            constraint_accuracy(&at_eps, net, data, ACCURACY_SAMPLES, cell.seed)
        }
    };
    Ok(report)
}

/// Evaluates every (seed, property, sweep radius, metric) cell on the test
/// split and writes the long-format `sweep.csv`. Cells run on a pool of
/// `threads` workers (0 = one per core); output order and content do not
/// depend on the pool because rows are sorted before writing.
pub fn run_evaluate(
    cfg: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
    threads: usize,
) -> Result<PathBuf, HarnessError> {
    let specs = cfg.property_specs()?;
    if specs.is_empty() {
        return Err(HarnessError::NoProperties);
    }
    let mut trained = Vec::new();
    for &seed in &cfg.seeds {
        trained.push(load_trained(cfg, base, out_dir, seed)?);
    }

    let mut cells = Vec::new();
    for (net_index, &seed) in cfg.seeds.iter().enumerate() {
        for spec_index in 0..specs.len() {
            for &epsilon in &cfg.sweep {
                for &metric in &cfg.metrics {
                    cells.push(Cell { seed, net_index, spec_index, epsilon, metric });
                }
            }
        }
    }

    let hash = config_hash(cfg);
    let regime = cfg.training.mode.name();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("worker pool construction cannot fail with a sane thread count");
    let rows: Result<Vec<SweepRow>, HarnessError> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let (net, data) = &trained[cell.net_index];
                let spec = &specs[cell.spec_index];
                let report = run_cell(cfg, cell, net, data, spec)?;
                Ok(SweepRow {
                    config: hash.clone(),
                    seed: cell.seed,
                    regime: String::from(regime),
                    dataset: data.name.clone(),
                    property: property_label(spec),
                    epsilon: cell.epsilon,
                    metric: String::from(cell.metric.name()),
                    value: report.value,
                    value_upper: report.value_upper,
                    timeouts: report.timeouts,
                    n_points: report.dataset_size,
                })
            })
            .collect()
    });
    let path = out_dir.join("sweep.csv");
    write_text(&path, &sweep_csv(rows?))?;
    Ok(path)
}

/// Attacks every test point of every trained net, once per configured
/// property at that property's own radius, and writes one per-point CSV
/// per (seed, property) under `attack/`.
pub fn run_attack(
    cfg: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let specs = cfg.property_specs()?;
    if specs.is_empty() {
        return Err(HarnessError::NoProperties);
    }
    let regime = cfg.training.mode.name();
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let (net, test_set) = load_trained(cfg, base, out_dir, seed)?;
        for (i, spec) in specs.iter().enumerate() {
            let report =
                constraint_security(spec, &net, &test_set, &cfg.attack.params_at(spec.epsilon), seed);
            let path = out_dir
                .join("attack")
                .join(format!("{regime}-seed{seed}-p{i}-{}.csv", spec.kind().name()));
            write_text(&path, &point_csv(&report))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Verifies satisfaction of the first CR, SR, and LR property in the list
/// (each at its own radius) for every trained net and writes `table.csv`.
pub fn run_verify_table(
    cfg: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
) -> Result<PathBuf, HarnessError> {
    let specs = cfg.property_specs()?;
    let budget = cfg.budget();
    let first = |kind: PropertyKind| specs.iter().find(|s| s.kind() == kind);
    let hash = config_hash(cfg);
    let regime = cfg.training.mode.name();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let (net, test_set) = load_trained(cfg, base, out_dir, seed)?;
        let satisfy = |spec: Option<&PropertySpec>| -> Result<Option<(f64, f64)>, HarnessError> {
            match spec {
                Some(spec) => {
                    let report = constraint_satisfaction(spec, &net, &test_set, &budget)?;
                    Ok(Some((report.value, report.value_upper)))
                }
                None => Ok(None),
            }
        };
        rows.push(TableRow {
            config: hash.clone(),
            seed,
            regime: String::from(regime),
            cr: satisfy(first(PropertyKind::Cr))?,
            sr: satisfy(first(PropertyKind::Sr))?,
            lr: satisfy(first(PropertyKind::Lr))?,
        });
    }
    let path = out_dir.join("table.csv");
    write_text(&path, &table_csv(rows))?;
    Ok(path)
}

/// Merges one or more sweep CSVs and writes the seed-aggregated summary.
/// Feeding it the sweeps of several configs (one per regime) produces the
/// cross-regime comparison tables.
pub fn run_report(sweeps: &[PathBuf], out_path: &Path) -> Result<(), HarnessError> {
    let mut rows = Vec::new();
    for path in sweeps {
        rows.extend(crate::report::parse_sweep_csv(&read_text(path)?)?);
    }
    write_text(out_path, &crate::report::summary_csv(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> PathBuf {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().to_path_buf();
        std::mem::forget(dir);
        path
    }

    fn tiny_config() -> ExperimentConfig {
        let text = r#"
            name = "tiny"
            seeds = [0, 1]
            sweep = [0.05]

            [dataset]
            kind = "two-moons"
            n = 40
            noise = 0.05

            [architecture]
            hidden = [4]

            [training]
            mode = "baseline"
            epochs = 3
            batch_size = 16
            learning_rate = 0.05

            [attack]
            epsilon = 0.05

            [[property]]
            kind = "sr"
            epsilon = 0.05
            delta = 1.0

            [[property]]
            kind = "cr"
            epsilon = 0.05
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn train_then_evaluate_produces_deterministic_artifacts() {
        let cfg = tiny_config();
        let base = tmpdir();
        let out_a = tmpdir();
        let out_b = tmpdir();

        let manifest = run_train(&cfg, &base, &out_a).unwrap();
        assert_eq!(manifest.seeds.len(), 2);
        assert!(out_a.join("models/baseline-seed0.json").exists());
        assert!(out_a.join("logs/baseline-seed1.csv").exists());

        run_train(&cfg, &base, &out_b).unwrap();
        for rel in ["models/baseline-seed0.json", "models/baseline-seed1.json", "manifest.json"] {
            let a = fs::read(out_a.join(rel)).unwrap();
            let b = fs::read(out_b.join(rel)).unwrap();
            assert_eq!(a, b, "{rel} differs between identical runs");
        }

        let sweep_a = run_evaluate(&cfg, &base, &out_a, 1).unwrap();
        let text_a = fs::read_to_string(&sweep_a).unwrap();
        // 2 seeds x 2 properties x 1 radius x 3 metrics.
        assert_eq!(text_a.lines().count(), 1 + 12);

        let sweep_b = run_evaluate(&cfg, &base, &out_b, 2).unwrap();
        let text_b = fs::read_to_string(&sweep_b).unwrap();
        assert_eq!(text_a, text_b, "sweep.csv must not depend on the worker count");

        let rows = crate::report::parse_sweep_csv(&text_a).unwrap();
        assert!(rows.iter().all(|r| r.config == config_hash(&cfg)));
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.value)));
    }

    #[test]
    fn verify_table_has_one_row_per_seed_with_the_configured_kinds() {
        let cfg = tiny_config();
        let base = tmpdir();
        let out = tmpdir();
        run_train(&cfg, &base, &out).unwrap();
        let path = run_verify_table(&cfg, &base, &out).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3, "header plus one row per seed");
        // SR and CR are configured, LR is not: trailing cells stay empty.
        assert!(lines[1].ends_with(",,"), "row: {}", lines[1]);
    }

    #[test]
    fn attack_reports_reload_and_missing_models_are_reported() {
        let cfg = tiny_config();
        let base = tmpdir();
        let out = tmpdir();
        assert!(matches!(
            run_evaluate(&cfg, &base, &out, 1),
            Err(HarnessError::MissingModel { .. })
        ));

        run_train(&cfg, &base, &out).unwrap();
        let files = run_attack(&cfg, &base, &out).unwrap();
        assert_eq!(files.len(), 4, "2 seeds x 2 properties");
        for file in files {
            let report = crate::report::parse_point_csv(&fs::read_to_string(&file).unwrap()).unwrap();
            assert_eq!(report.dataset_size, 10, "test split of 40 points at 0.75");
        }
    }

    #[test]
    fn clamp_hidden_networks_share_weights_with_relu_ones() {
        let mut cfg = tiny_config();
        let relu = build_network(&cfg, 2, 2, 7).unwrap();
        cfg.architecture.activation = String::from("clamp");
        cfg.architecture.clamp_lo = Some(0.0);
        cfg.architecture.clamp_hi = Some(1.0);
        cfg.validate().unwrap();
        let clamp = build_network(&cfg, 2, 2, 7).unwrap();
        assert_eq!(clamp.layers()[0].activation(), Activation::Clamp { lo: 0.0, hi: 1.0 });
        assert_eq!(clamp.layers()[1].activation(), Activation::Identity);
        for (a, b) in relu.layers().iter().zip(clamp.layers()) {
            assert_eq!(a.weights().data(), b.weights().data(), "same seed, same draws");
        }
    }

    #[test]
    fn report_merges_sweeps_from_multiple_configs() {
        let cfg = tiny_config();
        let base = tmpdir();
        let out = tmpdir();
        run_train(&cfg, &base, &out).unwrap();
        let sweep = run_evaluate(&cfg, &base, &out, 1).unwrap();
        let summary = out.join("summary.csv");
        run_report(&[sweep.clone(), sweep], &summary).unwrap();
        let text = fs::read_to_string(summary).unwrap();
        // Duplicated input doubles the seed count per group.
        assert!(text.lines().skip(1).all(|l| l.split(',').nth(5) == Some("4")), "{text}");
    }
}
