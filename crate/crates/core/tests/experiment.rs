use std::fs;
use std::path::{Path, PathBuf};

use drn_core::experiment::{
    self, Arch, DatasetId, ExperimentConfig, RunManifest, RunStatus, CHECKPOINT_FILE, FAILED_FILE,
    MANIFEST_FILE, METRICS_FILE, METRICS_VERSION_LINE, STATS_FILE,
};
use drn_core::idx::{split_files, IdxTensor, Split};
use rand::{Rng, SeedableRng};

fn mnist_dir() -> Option<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    split_files(&dir, Split::Test).0.is_file().then_some(dir)
}

/// Random 28x28 images with random labels, in IDX form.
fn write_synthetic(dir: &Path, train: usize, test: usize) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for (split, n) in [(Split::Train, train), (Split::Test, test)] {
        let images = IdxTensor { dims: vec![n, 28, 28], data: (0..n * 784).map(|_| rng.gen()).collect() };
        let labels = IdxTensor { dims: vec![n], data: (0..n).map(|_| rng.gen_range(0..10)).collect() };
        let (pi, pl) = split_files(dir, split);
        fs::write(pi, images.to_bytes()).unwrap();
        fs::write(pl, labels.to_bytes()).unwrap();
    }
}

fn data_dir(tmp: &Path) -> PathBuf {
    mnist_dir().unwrap_or_else(|| {
        let d = tmp.join("data");
        fs::create_dir_all(&d).unwrap();
        write_synthetic(&d, 300, 500);
        d
    })
}

fn small_config(data: PathBuf, out: PathBuf, epochs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DatasetId::Mnist, data, Arch::Drn1h, epochs, 7, out);
    cfg.train_limit = Some(300);
    cfg.test_limit = Some(500);
    cfg.eval_batch_size = 250;
    cfg
}

#[test]
fn architecture_widths() {
    assert_eq!(Arch::Drn1h.widths(), vec![1570, 1026, 10]);
    assert_eq!(Arch::Drn2h.widths(), vec![1570, 1026, 1026, 10]);
    assert_eq!(Arch::Drn3h.widths(), vec![1570, 1026, 1026, 1026, 10]);
    let cfg = Arch::Drn1h.ep_config(10);
    assert_eq!((cfg.beta, cfg.lr.clone(), cfg.momentum, cfg.lr_decay), (0.5, vec![0.006, 0.006], 0.9, 0.99));
    assert_eq!((cfg.batch_size, cfg.t_inference), (32, 4));
    assert_eq!(Arch::Drn1h.input_gain(), 480.0);
}

#[test]
fn untrained_network_is_near_chance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(data_dir(tmp.path()), tmp.path().join("run"), 0);
    let metrics = experiment::run_experiment(&cfg).unwrap();
    assert_eq!(metrics.epochs.len(), 1);
    let err = metrics.epochs[0].test_err;
    assert!((0.75..=0.97).contains(&err), "untrained error {err}");
    for f in [METRICS_FILE, CHECKPOINT_FILE, STATS_FILE, MANIFEST_FILE] {
        assert!(cfg.out_dir.join(f).is_file(), "{f} missing");
    }
    let text = fs::read_to_string(cfg.out_dir.join(METRICS_FILE)).unwrap();
    assert!(text.starts_with(METRICS_VERSION_LINE));
    let manifest = RunManifest::load(cfg.out_dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.status, RunStatus::Completed);
    assert_eq!(manifest.config, cfg);
}

#[test]
fn reruns_and_replays_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = data_dir(tmp.path());
    let a = small_config(data.clone(), tmp.path().join("a"), 1);
    let b = small_config(data, tmp.path().join("b"), 1);
    experiment::run_experiment(&a).unwrap();
    experiment::run_experiment(&b).unwrap();
    experiment::replay_manifest(a.out_dir.join(MANIFEST_FILE), tmp.path().join("c")).unwrap();
    for f in [METRICS_FILE, CHECKPOINT_FILE, STATS_FILE] {
        let first = fs::read(a.out_dir.join(f)).unwrap();
        assert_eq!(first, fs::read(b.out_dir.join(f)).unwrap(), "{f} differs between runs");
        assert_eq!(first, fs::read(tmp.path().join("c").join(f)).unwrap(), "{f} differs on replay");
    }
    let rows = experiment::read_metrics(a.out_dir.join(METRICS_FILE)).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].train_err.is_some());
}

#[test]
fn failure_leaves_marker_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir_all(&data).unwrap();
    write_synthetic(&data, 20, 20);
    let (test_images, _) = split_files(&data, Split::Test);
    let bytes = fs::read(&test_images).unwrap();
    fs::write(&test_images, &bytes[..bytes.len() / 2]).unwrap();

    let cfg = small_config(data, tmp.path().join("run"), 1);
    let err = experiment::run_experiment(&cfg).unwrap_err();
    let marker = fs::read_to_string(cfg.out_dir.join(FAILED_FILE)).unwrap();
    assert_eq!(marker.trim(), err.to_string());
    let manifest = RunManifest::load(cfg.out_dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.status, RunStatus::Failed);
}

#[test]
fn missing_dataset_is_rejected_up_front() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path().join("nowhere"), tmp.path().join("run"), 1);
    assert!(experiment::run_experiment(&cfg).is_err());
    assert!(!cfg.out_dir.exists());
}

#[test]
fn universal_demo_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let report = experiment::demo_universal(tmp.path()).unwrap();
    assert_eq!(report.rows.len(), 3 * 41);
    for r in report.rows.iter().filter(|r| r.x == 0.0) {
        assert!(r.output.abs() <= 1e-9, "gamma {} output {}", r.gamma, r.output);
    }
    let devs: Vec<f64> = report.summaries.iter().map(|s| s.output_dev()).collect();
    for w in devs.windows(2) {
        assert!(w[1] * 5.0 <= w[0], "{devs:?}");
    }
    let csv = fs::read_to_string(tmp.path().join("universal.csv")).unwrap();
    assert!(csv.starts_with("gamma,x,target,output,deviation,antisym_defect"));
    assert!(tmp.path().join("universal_summary.csv").is_file());
}
