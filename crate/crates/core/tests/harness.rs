use std::fs;
use std::path::Path;

use london::harness::{
    run_analyze, run_distill, run_gen_data, run_overfit_probe, run_sweep, run_train_teacher, sweep,
    DataKind, Dataset, RunConfig, Split,
};
use london::network::io::{load, save, to_text};
use london::rng::Stream;
use london::{build_network, ActivationKind, Block, Error, Matrix, Network};

fn small(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        out_dir: dir.to_path_buf(),
        teacher_epochs: 5,
        ..RunConfig::default()
    };
    cfg.data.train_count = 120;
    cfg.data.test_count = 60;
    cfg.teacher_widths = vec![8, 16, 16, 3];
    cfg.distill.epochs = 4;
    cfg.distill.batch_size = 32;
    cfg
}

fn prepared(dir: &Path) -> RunConfig {
    let cfg = small(dir);
    run_gen_data(&cfg).unwrap();
    run_train_teacher(&cfg).unwrap();
    cfg
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn gen_data_writes_deterministic_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out_dir: tmp.path().to_path_buf(),
        ..RunConfig::default()
    };
    let (train, test) = run_gen_data(&cfg).unwrap();
    let (a, b) = (read(&train), read(&test));
    assert_eq!(a.lines().count(), 601);
    assert_eq!(b.lines().count(), 301);
    assert!(a.starts_with("f0,f1,f2,f3,f4,f5,f6,f7,label\n"));
    run_gen_data(&cfg).unwrap();
    assert_eq!(read(&train), a);
    assert_eq!(read(&test), b);
}

#[test]
fn noisy_blobs_flip_exactly_the_configured_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        out_dir: tmp.path().join("noisy"),
        ..RunConfig::default()
    };
    cfg.data.kind = DataKind::NoisyBlobs;
    cfg.data.flip_fraction = 0.2;
    run_gen_data(&cfg).unwrap();
    let clean_cfg = RunConfig {
        out_dir: tmp.path().join("clean"),
        data: london::harness::DataSpec {
            kind: DataKind::Blobs,
            ..cfg.data.clone()
        },
        ..cfg.clone()
    };
    run_gen_data(&clean_cfg).unwrap();
    let noisy = Dataset::load(cfg.train_csv_path(), 3, Split::Train).unwrap();
    let clean = Dataset::load(clean_cfg.train_csv_path(), 3, Split::Train).unwrap();
    assert_eq!(noisy.features, clean.features);
    let flipped = noisy
        .labels
        .iter()
        .zip(&clean.labels)
        .filter(|(a, b)| a != b)
        .count();
    assert_eq!(flipped, 120);
}

#[test]
fn zero_epoch_teacher_is_its_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.teacher_epochs = 0;
    run_gen_data(&cfg).unwrap();
    run_train_teacher(&cfg).unwrap();
    let init = build_network(
        &cfg.teacher_widths,
        &cfg.teacher_kinds(),
        cfg.activation,
        cfg.init_scale,
        Stream::TeacherInit.seed(cfg.seed),
    )
    .unwrap();
    assert_eq!(read(tmp.path().join("teacher.model")), to_text(&init));
    assert_eq!(
        read(tmp.path().join("teacher_metrics.csv")),
        "epoch,train_loss,train_acc,test_acc\n"
    );
}

#[test]
fn teacher_training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = prepared(tmp.path());
    let model = read(tmp.path().join("teacher.model"));
    let metrics = read(tmp.path().join("teacher_metrics.csv"));
    assert_eq!(metrics.lines().count(), 6);
    run_train_teacher(&cfg).unwrap();
    assert_eq!(read(tmp.path().join("teacher.model")), model);
    assert_eq!(read(tmp.path().join("teacher_metrics.csv")), metrics);
}

#[test]
fn distill_metrics_schema_and_shared_epoch_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = prepared(tmp.path());
    let a = run_distill(&cfg.with_lambda(0.0)).unwrap();
    let b = run_distill(&cfg.with_lambda(3.2)).unwrap();
    let csv = read(tmp.path().join("metrics.csv"));
    let header = csv.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 7 + 2 * b.pairs.len());
    assert!(header.starts_with("epoch,train_loss_total,loss_ce,loss_kd,loss_lip,train_acc,test_acc,sn_teacher_1,sn_student_1"));
    assert_eq!(csv.lines().count(), cfg.distill.epochs + 2);
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').count() == 7 + 2 * b.pairs.len()));
    assert_eq!(a.metrics[0].ce, b.metrics[0].ce);
    assert_eq!(a.metrics[0].kd, b.metrics[0].kd);
    assert_eq!(a.metrics[0].lip, b.metrics[0].lip);
    assert!(b.metrics[0].total > a.metrics[0].total);
}

#[test]
fn distill_requires_a_teacher() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    run_gen_data(&cfg).unwrap();
    let err = run_distill(&cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn degenerate_sweep_equals_standalone_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = prepared(tmp.path());
    cfg.sweep_lambdas = vec![0.0];
    cfg.sweep_seeds = vec![cfg.seed];
    let out = run_sweep(&cfg).unwrap();
    assert_eq!(out.rows.len(), 1);
    let solo = run_distill(&cfg.with_lambda(0.0)).unwrap();
    assert_eq!(out.rows[0].mean_test_err, 1.0 - solo.last().test_acc);
    assert_eq!(out.rows[0].std_test_err, 0.0);
    let cell = read(
        tmp.path()
            .join("sweep")
            .join(format!("lambda_0_seed_{}", cfg.seed))
            .join("metrics.csv"),
    );
    assert_eq!(cell, read(tmp.path().join("metrics.csv")));
    assert_eq!(
        read(tmp.path().join("sweep_summary.csv")).lines().count(),
        2
    );
}

#[test]
fn sweep_counts_cells_and_records_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = prepared(tmp.path());
    cfg.distill.epochs = 1;
    cfg.jobs = 2;
    let teacher = load(cfg.teacher_model_path()).unwrap();
    let train = Dataset::load(cfg.train_csv_path(), 3, Split::Train).unwrap();
    let test = Dataset::load(cfg.test_csv_path(), 3, Split::Test).unwrap();
    let out = sweep(
        &cfg,
        &teacher,
        &train,
        &test,
        &[0.0, f64::NAN, 1.6],
        &[1, 2],
        &tmp.path().join("cells"),
    )
    .unwrap();
    assert_eq!(out.cells.len(), 6);
    assert_eq!(out.rows.len(), 3);
    assert_eq!(out.cells.iter().filter(|c| c.outcome.is_err()).count(), 2);
    assert_eq!(out.rows[1].completed, 0);
    assert_eq!((out.rows[0].completed, out.rows[2].completed), (2, 2));
    assert!(
        out.cells_csv()
            .lines()
            .filter(|l| l.contains(",failed,"))
            .count()
            == 2
    );
}

#[test]
fn probe_against_itself_has_zero_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = prepared(tmp.path());
    cfg.probe_lambda = 0.0;
    cfg.probe_seeds = vec![1, 2, 3];
    let out = run_overfit_probe(&cfg).unwrap();
    assert!(out.seeds.iter().all(|s| s.difference() == 0.0));
    let report = read(tmp.path().join("overfit_report.csv"));
    assert_eq!(report.lines().count(), 1 + 3 + 1);
    assert!(report.lines().last().unwrap().starts_with("mean,"));
    let curves = read(tmp.path().join("overfit_curves.csv"));
    assert_eq!(curves.lines().count(), 1 + cfg.distill.epochs + 1);
}

#[test]
fn analyze_identity_model() {
    let tmp = tempfile::tempdir().unwrap();
    let net = Network::new(vec![Block::Dense {
        weight: Matrix::identity(4),
        activation: ActivationKind::Identity,
    }])
    .unwrap();
    let model = tmp.path().join("id.model");
    save(&net, &model).unwrap();
    let data = Dataset::new(Matrix::identity(4), vec![0, 1, 2, 3], 4, Split::Test).unwrap();
    let data_path = tmp.path().join("basis.csv");
    data.save(&data_path).unwrap();
    let cfg = RunConfig {
        out_dir: tmp.path().join("report"),
        ..RunConfig::default()
    };
    let report = run_analyze(&cfg, &model, &data_path).unwrap();
    assert!((report.blocks[0].sn_tm - 1.0).abs() < 1e-9);
    assert!((report.profile.upper_bound - 1.0).abs() < 1e-9);
    assert!(report.empirical_max_ratio <= 1.0 + 1e-9);
    assert_eq!(report.pairs, 10_000);
    let table = read(tmp.path().join("report").join("analysis.csv"));
    assert!(table.starts_with("block_index,sn_tm,sqrt_sn_tm,sn_weight_exact,independence_score\n"));
    assert_eq!(table.lines().count(), 2);
}

#[test]
fn analyze_reports_malformed_model_line() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("bad.model");
    fs::write(
        &model,
        "LONDON-MODEL v1\nblock 1 dense identity 2 2\n1 0\n0 oops\n",
    )
    .unwrap();
    let data = tmp.path().join("d.csv");
    fs::write(&data, "f0,f1,label\n1,0,0\n").unwrap();
    let err = run_analyze(&RunConfig::default(), &model, &data).unwrap_err();
    assert!(err.is_format_error());
    assert!(err.to_string().contains("bad.model:4:"), "{err}");
}

#[test]
fn config_file_paths_resolve_next_to_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.cfg");
    fs::write(
        &path,
        "out_dir = results\ntrain_csv = data/train.csv\nlambda = 1.6\n",
    )
    .unwrap();
    let cfg = RunConfig::from_file(&path).unwrap();
    assert_eq!(cfg.out_dir, tmp.path().join("results"));
    assert_eq!(cfg.train_csv_path(), tmp.path().join("data/train.csv"));
    assert_eq!(cfg.test_csv_path(), tmp.path().join("results/test.csv"));
    assert_eq!(cfg.distill.lambda, 1.6);
}

#[test]
fn analyzer_tm_estimate_tracks_weight_norm_for_independent_inputs() {
    use london::rng::{gaussian_matrix, seeded};
    for seed in 0..5u64 {
        let d = 16;
        let basis = london::random_orthogonal(d, seed);
        let features = basis
            .add(&gaussian_matrix(d, d, &mut seeded(seed)).scale(0.01))
            .unwrap();
        let data = Dataset::new(features, vec![0; d], d, Split::Test).unwrap();
        let weight = gaussian_matrix(d, d, &mut seeded(100 + seed));
        let net = Network::new(vec![Block::Dense {
            weight,
            activation: ActivationKind::Identity,
        }])
        .unwrap();
        let cfg = RunConfig {
            seed,
            analyze_pairs: 200,
            ..RunConfig::default()
        };
        let report = london::harness::analyze(&cfg, &net, &data).unwrap();
        let row = &report.blocks[0];
        assert!(row.independence_score < 0.1, "{}", row.independence_score);
        let exact = row.sn_weight_exact.unwrap();
        assert!(
            (row.sqrt_sn_tm - exact).abs() <= 0.1 * exact,
            "{} vs {exact}",
            row.sqrt_sn_tm
        );
    }
}

#[test]
fn lipschitz_term_narrows_the_final_spectral_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = prepared(tmp.path());
    cfg.distill.epochs = 10;
    for seed in [1, 2] {
        let cfg = cfg.with_seed(seed);
        let plain = run_distill(&cfg.with_lambda(0.0)).unwrap();
        let guided = run_distill(&cfg.with_lambda(3.2)).unwrap();
        assert!(
            guided.final_sn_gap() <= plain.final_sn_gap(),
            "seed {seed}: {} > {}",
            guided.final_sn_gap(),
            plain.final_sn_gap()
        );
    }
}
