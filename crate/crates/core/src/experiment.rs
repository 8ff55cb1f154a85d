//! Experiment orchestration: dataset loading, training runs with on-disk
//! artifacts, manifest replay and the |x| approximation demo.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::compile::{self, CompileConfig, DeviationReport};
use crate::ep::{self, ConductanceStats, EpConfig, Trainer};
use crate::error::{DrnError, Result};
use crate::idx::{IdxDataset, Split};
use crate::model::{random_drn, DrnParams};
use crate::rng;
use crate::solver::{self, SolverConfig};

/// Environment variable naming the directory that holds one subdirectory
/// per dataset (`mnist/`, `kmnist/`, `fashion-mnist/`).
pub const DATA_ROOT_ENV: &str = "DRN_DATA_ROOT";

pub const METRICS_VERSION_LINE: &str = "# drn-metrics v1";
pub const MANIFEST_FORMAT: &str = "drn-run-manifest v1";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "params.drn";
pub const STATS_FILE: &str = "conductance_stats.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILED_FILE: &str = "FAILED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetId {
    Mnist,
    Kmnist,
    FashionMnist,
}

impl DatasetId {
    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Kmnist => "kmnist",
            DatasetId::FashionMnist => "fashion-mnist",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Drn1h,
    Drn2h,
    Drn3h,
}

pub const IMAGE_PIXELS: usize = 784;
pub const HIDDEN_UNITS: usize = 1024;
pub const CLASSES: usize = 10;

impl Arch {
    pub fn hidden_layers(self) -> usize {
        match self {
            Arch::Drn1h => 1,
            Arch::Drn2h => 2,
            Arch::Drn3h => 3,
        }
    }

    /// Node counts per layer, bias pairs included.
    pub fn widths(self) -> Vec<usize> {
        let mut w = vec![2 * IMAGE_PIXELS + 2];
        w.extend(std::iter::repeat_n(HIDDEN_UNITS + 2, self.hidden_layers()));
        w.push(CLASSES);
        w
    }

    pub fn input_gain(self) -> f64 {
        match self {
            Arch::Drn1h => 480.0,
            Arch::Drn2h => 2000.0,
            Arch::Drn3h => 4000.0,
        }
    }

    /// Reference hyperparameters for `epochs` epochs.
    pub fn ep_config(self, epochs: usize) -> EpConfig {
        let (iterations, lr, beta) = match self {
            Arch::Drn1h => (4, vec![0.006, 0.006], 0.5),
            Arch::Drn2h => (5, vec![0.002, 0.006, 0.005], 1.0),
            Arch::Drn3h => (6, vec![0.005, 0.02, 0.08, 0.005], 2.0),
        };
        EpConfig {
            beta,
            lr,
            momentum: 0.9,
            lr_decay: 0.99,
            batch_size: 32,
            epochs,
            t_inference: iterations,
            t_nudge: iterations,
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetId,
    /// Directory holding the four IDX files.
    pub data_dir: PathBuf,
    pub arch: Arch,
    pub ep: EpConfig,
    /// Input amplification `A^(0)`.
    pub input_gain: f64,
    /// Potential of the bias pairs of hidden layers.
    pub hidden_bias: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Use only the first `n` training examples.
    pub train_limit: Option<usize>,
    /// Use only the first `n` test examples.
    pub test_limit: Option<usize>,
    pub eval_batch_size: usize,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetId, data_dir: PathBuf, arch: Arch, epochs: usize, seed: u64, out_dir: PathBuf) -> Self {
        ExperimentConfig {
            dataset,
            data_dir,
            arch,
            ep: arch.ep_config(epochs),
            input_gain: arch.input_gain(),
            hidden_bias: 1.0,
            seed,
            out_dir,
            train_limit: None,
            test_limit: None,
            eval_batch_size: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ep.validate(self.arch.hidden_layers() + 1)?;
        if !(self.input_gain > 0.0 && self.input_gain.is_finite()) {
            return Err(DrnError::param(format!("input gain must be positive, got {}", self.input_gain)));
        }
        if !(self.hidden_bias > 0.0 && self.hidden_bias.is_finite()) {
            return Err(DrnError::param(format!("hidden bias must be positive, got {}", self.hidden_bias)));
        }
        if self.eval_batch_size == 0 {
            return Err(DrnError::param("evaluation batch size must be positive"));
        }
        for split in [Split::Train, Split::Test] {
            let (images, labels) = crate::idx::split_files(&self.data_dir, split);
            for f in [images, labels] {
                if !f.is_file() {
                    return Err(DrnError::Dataset(format!("missing dataset file {}", f.display())));
                }
            }
        }
        Ok(())
    }

    /// Untrained network for this configuration.
    pub fn initial_params(&self) -> Result<DrnParams> {
        let mut gains = vec![self.hidden_bias; self.arch.hidden_layers() + 1];
        gains[0] = self.input_gain;
        random_drn(&self.arch.widths(), self.seed)?.with_gains(gains)
    }
}

/// One line of the metrics CSV. Epoch 0 is the untrained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_err: Option<f64>,
    pub test_err: f64,
    /// Mean free-phase energy per test example.
    pub mean_energy: f64,
    /// Learning rates used during the epoch, `;`-separated.
    pub lr: String,
    /// Largest energy increase of any layer update during the epoch.
    pub max_energy_increase: f64,
    pub energy_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub epochs: Vec<EpochRecord>,
    pub stats: Vec<ConductanceStats>,
}

impl RunMetrics {
    pub fn final_test_error(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.test_err)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Written next to the artifacts; sufficient to rerun the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub code_version: String,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    pub final_test_err: Option<f64>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let manifest: RunManifest = serde_json::from_reader(File::open(path)?)?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(DrnError::param(format!("unsupported manifest format {:?}", manifest.format)));
        }
        Ok(manifest)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }
}

pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(IdxDataset, IdxDataset)> {
    let mut train = IdxDataset::load_split(&cfg.data_dir, Split::Train)?;
    let mut test = IdxDataset::load_split(&cfg.data_dir, Split::Test)?;
    if let Some(n) = cfg.train_limit {
        train.truncate(n);
    }
    if let Some(n) = cfg.test_limit {
        test.truncate(n);
    }
    for d in [&train, &test] {
        if d.images.ncols() != IMAGE_PIXELS {
            return Err(DrnError::Dataset(format!("expected 28x28 images, got {:?}", d.shape)));
        }
    }
    Ok((train, test))
}

struct MetricsWriter {
    rows: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_VERSION_LINE}")?;
        Ok(MetricsWriter { rows: csv::Writer::from_writer(out) })
    }

    fn push(&mut self, record: &EpochRecord) -> Result<()> {
        self.rows.serialize(record)?;
        self.rows.flush()?;
        Ok(())
    }
}

fn join_lr(lr: &[f64]) -> String {
    lr.iter().map(|l| format!("{l:?}")).collect::<Vec<_>>().join(";")
}

/// Reads a metrics CSV written by [`run_experiment`].
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path)?;
    let body = text
        .strip_prefix(METRICS_VERSION_LINE)
        .ok_or_else(|| DrnError::param("metrics file lacks the version line"))?;
    let mut reader = csv::Reader::from_reader(body.trim_start().as_bytes());
    reader.deserialize().map(|r| r.map_err(DrnError::from)).collect()
}

pub fn write_stats_csv<W: Write>(stats: &[ConductanceStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in stats {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Trains and evaluates per `cfg`, writing `metrics.csv`, `params.drn`,
/// `conductance_stats.csv` and `manifest.json` into `cfg.out_dir`. On
/// failure the partial artifacts stay on disk next to a `FAILED` marker.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunMetrics> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let _ = fs::remove_file(cfg.out_dir.join(FAILED_FILE));
    let mut manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        status: RunStatus::Running,
        config: cfg.clone(),
        final_test_err: None,
    };
    manifest.save(&cfg.out_dir)?;
    let mut params_slot = None;
    match train_and_record(cfg, &mut params_slot) {
        Ok(metrics) => {
            manifest.status = RunStatus::Completed;
            manifest.final_test_err = metrics.final_test_error();
            manifest.save(&cfg.out_dir)?;
            Ok(metrics)
        }
        Err(e) => {
            if let Some(params) = params_slot {
                let _ = params.save(cfg.out_dir.join(CHECKPOINT_FILE));
            }
            let _ = fs::write(cfg.out_dir.join(FAILED_FILE), format!("{e}\n"));
            manifest.status = RunStatus::Failed;
            let _ = manifest.save(&cfg.out_dir);
            Err(e)
        }
    }
}

fn train_and_record(cfg: &ExperimentConfig, params_slot: &mut Option<DrnParams>) -> Result<RunMetrics> {
    let (train, test) = load_datasets(cfg)?;
    let mut metrics_out = MetricsWriter::create(&cfg.out_dir.join(METRICS_FILE))?;
    let mut trainer = Trainer::new(cfg.initial_params()?, cfg.ep.clone())?;
    let t_eval = cfg.ep.t_inference;
    let mut records = Vec::with_capacity(cfg.ep.epochs + 1);

    let eval = ep::evaluate(trainer.params(), test.images.view(), &test.labels, t_eval, cfg.eval_batch_size)?;
    let record = EpochRecord {
        epoch: 0,
        train_err: None,
        test_err: eval.error_rate,
        mean_energy: eval.mean_energy,
        lr: join_lr(trainer.learning_rates()),
        max_energy_increase: eval.max_energy_increase,
        energy_scale: eval.energy_scale,
    };
    metrics_out.push(&record)?;
    records.push(record);

    for epoch in 1..=cfg.ep.epochs {
        let mut shuffle = rng::stream(cfg.seed, rng::SHUFFLE_STREAM + epoch as u64);
        let result = trainer.train_epoch(train.images.view(), &train.labels, &mut shuffle);
        let m = match result {
            Ok(m) => m,
            Err(e) => {
                *params_slot = Some(trainer.params().clone());
                return Err(e);
            }
        };
        let eval = ep::evaluate(trainer.params(), test.images.view(), &test.labels, t_eval, cfg.eval_batch_size)?;
        let record = EpochRecord {
            epoch,
            train_err: Some(m.train_err),
            test_err: eval.error_rate,
            mean_energy: eval.mean_energy,
            lr: join_lr(&m.lr),
            max_energy_increase: m.max_energy_increase.max(eval.max_energy_increase),
            energy_scale: m.energy_scale.max(eval.energy_scale),
        };
        metrics_out.push(&record)?;
        records.push(record);
    }

    let params = trainer.into_params();
    params.save(cfg.out_dir.join(CHECKPOINT_FILE))?;
    let stats = ep::conductance_stats(&params);
    write_stats_csv(&stats, BufWriter::new(File::create(cfg.out_dir.join(STATS_FILE))?))?;
    Ok(RunMetrics { epochs: records, stats })
}

/// Reruns the experiment recorded in `manifest_path`, writing artifacts to
/// `out_dir`.
pub fn replay_manifest(manifest_path: impl AsRef<Path>, out_dir: impl Into<PathBuf>) -> Result<RunMetrics> {
    let manifest = RunManifest::load(manifest_path)?;
    let cfg = ExperimentConfig { out_dir: out_dir.into(), ..manifest.config };
    run_experiment(&cfg)
}

/// Grid, deviation and defect of one `γ` in the |x| demo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniversalRow {
    pub gamma: f64,
    pub x: f64,
    pub target: f64,
    pub output: f64,
    pub deviation: f64,
    pub antisym_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniversalReport {
    pub rows: Vec<UniversalRow>,
    pub summaries: Vec<DeviationReport>,
}

pub const DEMO_GAMMAS: [f64; 3] = [1e-1, 1e-2, 1e-3];
pub const DEMO_GRID_POINTS: usize = 41;

/// Compiles the |x| network at each demo `γ`, solves it on a 41-point grid
/// over `[-1, 1]` and writes `universal.csv` (per point) and
/// `universal_summary.csv` (per layer) into `out_dir`.
pub fn demo_universal(out_dir: impl AsRef<Path>) -> Result<UniversalReport> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let net = compile::abs_value_net();
    let grid: Vec<f64> = (0..DEMO_GRID_POINTS)
        .map(|i| -1.0 + 2.0 * i as f64 / (DEMO_GRID_POINTS - 1) as f64)
        .collect();
    let xs = Array2::from_shape_vec((grid.len(), 1), grid.clone()).expect("column");
    let solver_cfg = SolverConfig::converged(1e-13, 100_000);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for gamma in DEMO_GAMMAS {
        let drn = compile::compile(&net, &CompileConfig::new(gamma))?;
        let (state, _) = solver::solve_steady_state(&drn, xs.view(), &solver_cfg)?;
        let hidden = state.layer(1);
        for (b, &x) in grid.iter().enumerate() {
            let output = state.output()[[b, 0]];
            let defect = (2..hidden.ncols())
                .step_by(2)
                .map(|k| (hidden[[b, k]] + hidden[[b, k + 1]]).abs())
                .fold(0.0, f64::max);
            rows.push(UniversalRow {
                gamma,
                x,
                target: x.abs(),
                output,
                deviation: (output - x.abs()).abs(),
                antisym_defect: defect,
            });
        }
        let mut report = compile::verify_compilation(&net, &drn, &solver_cfg, xs.view())?;
        report.gamma = Some(gamma);
        summaries.push(report);
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out_dir.join("universal.csv"))?));
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    compile::write_deviation_csv(&summaries, BufWriter::new(File::create(out_dir.join("universal_summary.csv"))?))?;
    Ok(UniversalReport { rows, summaries })
}
