//! Training loops and the file-producing experiment runners.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::RunConfig;
use super::data::{gen_dataset, Dataset, Split};
use crate::distillation::{distill_step_with_teacher, teacher_view, Sgd, StepReport};
use crate::error::{Error, Result};
use crate::lipschitz::{
    block_reports, empirical_max_ratio, profile_network, BlockReport, LipschitzProfile,
};
use crate::network::io::{format_f64, load, save};
use crate::network::{base_loss_and_gradients, build_network, Network};
use crate::rng::{permutation, seeded, Stream};

/// Relative slack allowed when comparing the sampled ratio with the bound.
pub const BOUND_CHECK_SLACK: f64 = 1e-9;

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_row(fields: impl IntoIterator<Item = String>) -> String {
    let mut line = fields.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let pred = net.predict(&data.features)?;
    let hits = pred
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Splits an index order into minibatches, dropping a trailing partial batch
/// unless it would be the only one.
fn minibatches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    if order.len() <= batch_size {
        return vec![order];
    }
    order.chunks_exact(batch_size).collect()
}

fn load_split(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let c = cfg.data.classes;
    Ok((
        Dataset::load(cfg.train_csv_path(), c, Split::Train)?,
        Dataset::load(cfg.test_csv_path(), c, Split::Test)?,
    ))
}

fn check_input_dim(net: &Network, data: &Dataset, what: &str) -> Result<()> {
    if net.input_dim() != data.dim() || net.output_dim() != data.classes {
        return Err(Error::Config(format!(
            "{what} maps {} -> {} but the data has {} features and {} classes",
            net.input_dim(),
            net.output_dim(),
            data.dim(),
            data.classes
        )));
    }
    Ok(())
}

pub fn run_gen_data(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    let generated = gen_dataset(&cfg.data, cfg.seed)?;
    let (train, test) = (cfg.train_csv_path(), cfg.test_csv_path());
    write_file(&train, &generated.train.to_csv())?;
    write_file(&test, &generated.test.to_csv())?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TeacherOutcome {
    pub model: Network,
    pub metrics: Vec<TeacherEpoch>,
}

impl TeacherOutcome {
    pub fn metrics_csv(&self) -> String {
        let mut text = "epoch,train_loss,train_acc,test_acc\n".to_string();
        for m in &self.metrics {
            text.push_str(&csv_row([
                m.epoch.to_string(),
                format_f64(m.train_loss),
                format_f64(m.train_acc),
                format_f64(m.test_acc),
            ]));
        }
        text
    }
}

/// Trains the teacher on cross-entropy alone.
pub fn train_teacher(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<TeacherOutcome> {
    let mut model = build_network(
        &cfg.teacher_widths,
        &cfg.teacher_kinds(),
        cfg.activation,
        cfg.init_scale,
        Stream::TeacherInit.seed(cfg.seed),
    )?;
    check_input_dim(&model, train, "teacher")?;
    let mut opt = Sgd::new(cfg.teacher_learning_rate, cfg.distill.momentum);
    let mut shuffle = seeded(Stream::Shuffle.seed(cfg.seed));
    let mut metrics = Vec::with_capacity(cfg.teacher_epochs);
    for epoch in 1..=cfg.teacher_epochs {
        let order = permutation(train.len(), &mut shuffle);
        let batches = minibatches(&order, cfg.distill.batch_size);
        let mut loss = 0.0;
        for idx in &batches {
            let (x, y) = train.subset(idx);
            let step = base_loss_and_gradients(&model, &x, &y, None, cfg.distill.temperature, 0.0)?;
            loss += step.ce;
            opt.step(&mut model, &step.grads);
        }
        metrics.push(TeacherEpoch {
            epoch,
            train_loss: loss / batches.len() as f64,
            train_acc: accuracy(&model, train)?,
            test_acc: accuracy(&model, test)?,
        });
    }
    Ok(TeacherOutcome { model, metrics })
}

pub fn run_train_teacher(cfg: &RunConfig) -> Result<TeacherOutcome> {
    let (train, test) = load_split(cfg)?;
    let outcome = train_teacher(cfg, &train, &test)?;
    write_file(
        &cfg.out_dir.join("teacher_metrics.csv"),
        &outcome.metrics_csv(),
    )?;
    save(&outcome.model, cfg.out_dir.join("teacher.model"))?;
    Ok(outcome)
}

/// Per-epoch means of the pre-update step statistics. Epoch 0 evaluates the
/// initial student without updating it.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total: f64,
    pub ce: f64,
    pub kd: f64,
    pub lip: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub teacher_sn: Vec<f64>,
    pub student_sn: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub student: Network,
    pub pairs: Vec<(usize, usize)>,
    pub metrics: Vec<EpochMetrics>,
}

impl DistillOutcome {
    pub fn last(&self) -> &EpochMetrics {
        self.metrics.last().expect("epoch 0 is always recorded")
    }

    pub fn metrics_header(pairs: usize) -> String {
        let mut cols: Vec<String> = [
            "epoch",
            "train_loss_total",
            "loss_ce",
            "loss_kd",
            "loss_lip",
            "train_acc",
            "test_acc",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for i in 1..=pairs {
            cols.push(format!("sn_teacher_{i}"));
            cols.push(format!("sn_student_{i}"));
        }
        csv_row(cols)
    }

    pub fn metrics_csv(&self) -> String {
        let mut text = Self::metrics_header(self.pairs.len());
        for m in &self.metrics {
            let mut fields = vec![m.epoch.to_string()];
            fields.extend([m.total, m.ce, m.kd, m.lip, m.train_acc, m.test_acc].map(format_f64));
            for (t, s) in m.teacher_sn.iter().zip(&m.student_sn) {
                fields.push(format_f64(*t));
                fields.push(format_f64(*s));
            }
            text.push_str(&csv_row(fields));
        }
        text
    }

    /// Mean absolute gap between paired teacher and student statistics in
    /// the final epoch.
    pub fn final_sn_gap(&self) -> f64 {
        let m = self.last();
        if m.teacher_sn.is_empty() {
            return 0.0;
        }
        m.teacher_sn
            .iter()
            .zip(&m.student_sn)
            .map(|(t, s)| (t - s).abs())
            .sum::<f64>()
            / m.teacher_sn.len() as f64
    }
}

struct Accumulator {
    steps: usize,
    total: f64,
    ce: f64,
    kd: f64,
    lip: f64,
    teacher_sn: Vec<f64>,
    student_sn: Vec<f64>,
}

impl Accumulator {
    fn new(pairs: usize) -> Self {
        Self {
            steps: 0,
            total: 0.0,
            ce: 0.0,
            kd: 0.0,
            lip: 0.0,
            teacher_sn: vec![0.0; pairs],
            student_sn: vec![0.0; pairs],
        }
    }

    fn add(&mut self, r: &StepReport) {
        self.steps += 1;
        self.total += r.loss.total;
        self.ce += r.loss.ce;
        self.kd += r.loss.kd;
        self.lip += r.loss.lip;
        for (a, b) in self.teacher_sn.iter_mut().zip(&r.teacher_sn) {
            *a += b;
        }
        for (a, b) in self.student_sn.iter_mut().zip(&r.student_sn) {
            *a += b;
        }
    }

    fn finish(self, epoch: usize, train_acc: f64, test_acc: f64) -> EpochMetrics {
        let n = self.steps.max(1) as f64;
        EpochMetrics {
            epoch,
            total: self.total / n,
            ce: self.ce / n,
            kd: self.kd / n,
            lip: self.lip / n,
            train_acc,
            test_acc,
            teacher_sn: self.teacher_sn.iter().map(|v| v / n).collect(),
            student_sn: self.student_sn.iter().map(|v| v / n).collect(),
        }
    }
}

pub fn distill(
    cfg: &RunConfig,
    teacher: &Network,
    train: &Dataset,
    test: &Dataset,
) -> Result<DistillOutcome> {
    let dc = {
        let mut d = cfg.distill.clone();
        d.power = cfg.power();
        d
    };
    dc.validate()?;
    check_input_dim(teacher, train, "teacher")?;
    let mut student = build_network(
        &cfg.student_widths,
        &cfg.student_kinds(),
        cfg.activation,
        cfg.init_scale,
        Stream::Init.seed(cfg.seed),
    )?;
    check_input_dim(&student, train, "student")?;
    let pairs = dc.block_pairing.pairs(student.depth(), teacher.depth());
    let teacher_blocks: Vec<usize> = pairs.iter().map(|p| p.1).collect();

    let mut metrics = Vec::with_capacity(dc.epochs + 1);
    let natural: Vec<usize> = (0..train.len()).collect();
    let mut acc = Accumulator::new(pairs.len());
    for idx in minibatches(&natural, dc.batch_size) {
        let (x, y) = train.subset(idx);
        let view = teacher_view(teacher, &x, &teacher_blocks, &dc.power)?;
        let mut probe = student.clone();
        let report = distill_step_with_teacher(
            &mut probe,
            &mut Sgd::new(0.0, 0.0),
            &view,
            &pairs,
            &x,
            &y,
            &dc,
        )?;
        acc.add(&report);
    }
    metrics.push(acc.finish(0, accuracy(&student, train)?, accuracy(&student, test)?));

    let mut opt = Sgd::new(dc.learning_rate, dc.momentum);
    let mut shuffle = seeded(Stream::Shuffle.seed(cfg.seed));
    for epoch in 1..=dc.epochs {
        let order = permutation(train.len(), &mut shuffle);
        let mut acc = Accumulator::new(pairs.len());
        for idx in minibatches(&order, dc.batch_size) {
            let (x, y) = train.subset(idx);
            let view = teacher_view(teacher, &x, &teacher_blocks, &dc.power)?;
            let report =
                distill_step_with_teacher(&mut student, &mut opt, &view, &pairs, &x, &y, &dc)?;
            if !report.loss.total.is_finite() {
                return Err(Error::Check(format!(
                    "training diverged at epoch {epoch} (loss {})",
                    report.loss.total
                )));
            }
            acc.add(&report);
        }
        metrics.push(acc.finish(epoch, accuracy(&student, train)?, accuracy(&student, test)?));
    }
    Ok(DistillOutcome {
        student,
        pairs,
        metrics,
    })
}

fn load_teacher(cfg: &RunConfig) -> Result<Network> {
    let path = cfg.teacher_model_path();
    if !path.exists() {
        return Err(Error::Config(format!(
            "teacher model {} does not exist; run train-teacher first",
            path.display()
        )));
    }
    load(path)
}

fn distill_to_dir(
    cfg: &RunConfig,
    teacher: &Network,
    train: &Dataset,
    test: &Dataset,
    dir: &Path,
) -> Result<DistillOutcome> {
    let outcome = distill(cfg, teacher, train, test)?;
    write_file(&dir.join("metrics.csv"), &outcome.metrics_csv())?;
    save(&outcome.student, dir.join("student.model"))?;
    Ok(outcome)
}

pub fn run_distill(cfg: &RunConfig) -> Result<DistillOutcome> {
    let teacher = load_teacher(cfg)?;
    let (train, test) = load_split(cfg)?;
    distill_to_dir(cfg, &teacher, &train, &test, &cfg.out_dir)
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub lambda: f64,
    pub seed: u64,
    /// `(train_err, test_err)` or the failure message.
    pub outcome: std::result::Result<(f64, f64), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean_test_err: f64,
    pub std_test_err: f64,
    pub mean_train_err: f64,
    pub completed: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cells: Vec<CellResult>,
    pub rows: Vec<SweepRow>,
}

impl SweepOutcome {
    pub fn summary_csv(&self) -> String {
        let mut text = "lambda,mean_test_err,std_test_err,mean_train_err\n".to_string();
        for r in &self.rows {
            text.push_str(&csv_row(
                [r.lambda, r.mean_test_err, r.std_test_err, r.mean_train_err].map(format_f64),
            ));
        }
        text
    }

    pub fn cells_csv(&self) -> String {
        let mut text = "lambda,seed,status,train_err,test_err,error\n".to_string();
        for c in &self.cells {
            let fields = match &c.outcome {
                Ok((tr, te)) => [
                    format_f64(c.lambda),
                    c.seed.to_string(),
                    "ok".into(),
                    format_f64(*tr),
                    format_f64(*te),
                    String::new(),
                ],
                Err(e) => [
                    format_f64(c.lambda),
                    c.seed.to_string(),
                    "failed".into(),
                    String::new(),
                    String::new(),
                    e.replace([',', '\n'], ";"),
                ],
            };
            text.push_str(&csv_row(fields));
        }
        text
    }

    /// Lambda with the lowest mean test error among rows with results.
    pub fn best_lambda(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.completed > 0)
            .min_by(|a, b| a.mean_test_err.total_cmp(&b.mean_test_err))
            .map(|r| r.lambda)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cell_dir(root: &Path, lambda: f64, seed: u64) -> PathBuf {
    root.join(format!("lambda_{lambda}_seed_{seed}"))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Runs every `(λ, seed)` cell. Cell failures are recorded, not propagated.
pub fn sweep(
    cfg: &RunConfig,
    teacher: &Network,
    train: &Dataset,
    test: &Dataset,
    lambdas: &[f64],
    seeds: &[u64],
    root: &Path,
) -> Result<SweepOutcome> {
    let grid: Vec<(f64, u64)> = lambdas
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    let cells: Vec<CellResult> = pool(cfg.jobs)?.install(|| {
        grid.par_iter()
            .map(|&(lambda, seed)| {
                let cell_cfg = cfg.with_lambda(lambda).with_seed(seed);
                let outcome = distill_to_dir(
                    &cell_cfg,
                    teacher,
                    train,
                    test,
                    &cell_dir(root, lambda, seed),
                )
                .map(|o| (1.0 - o.last().train_acc, 1.0 - o.last().test_acc))
                .map_err(|e| e.to_string());
                CellResult {
                    lambda,
                    seed,
                    outcome,
                }
            })
            .collect()
    });
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let ok: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.lambda == lambda)
                .filter_map(|c| c.outcome.clone().ok())
                .collect();
            let test_errs: Vec<f64> = ok.iter().map(|p| p.1).collect();
            let train_errs: Vec<f64> = ok.iter().map(|p| p.0).collect();
            let (mean_test_err, std_test_err) = mean_std(&test_errs);
            SweepRow {
                lambda,
                mean_test_err,
                std_test_err,
                mean_train_err: mean_std(&train_errs).0,
                completed: ok.len(),
            }
        })
        .collect();
    Ok(SweepOutcome { cells, rows })
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let teacher = load_teacher(cfg)?;
    let (train, test) = load_split(cfg)?;
    let outcome = sweep(
        cfg,
        &teacher,
        &train,
        &test,
        &cfg.sweep_lambdas,
        &cfg.sweep_seeds,
        &cfg.out_dir.join("sweep"),
    )?;
    write_file(
        &cfg.out_dir.join("sweep_summary.csv"),
        &outcome.summary_csv(),
    )?;
    write_file(&cfg.out_dir.join("sweep_cells.csv"), &outcome.cells_csv())?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeed {
    pub seed: u64,
    pub gap_baseline: f64,
    pub gap_lipschitz: f64,
}

impl ProbeSeed {
    /// `gap(λ*) − gap(0)`; negative means less overfitting with the term.
    pub fn difference(&self) -> f64 {
        self.gap_lipschitz - self.gap_baseline
    }
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub lambda: f64,
    pub seeds: Vec<ProbeSeed>,
    pub baseline: Vec<DistillOutcome>,
    pub lipschitz: Vec<DistillOutcome>,
}

fn gap(o: &DistillOutcome) -> f64 {
    o.last().train_acc - o.last().test_acc
}

impl ProbeOutcome {
    pub fn mean_gaps(&self) -> (f64, f64) {
        let n = self.seeds.len().max(1) as f64;
        (
            self.seeds.iter().map(|s| s.gap_baseline).sum::<f64>() / n,
            self.seeds.iter().map(|s| s.gap_lipschitz).sum::<f64>() / n,
        )
    }

    pub fn report_csv(&self) -> String {
        let mut text = "seed,gap_lambda_0,gap_lambda_star,gap_difference\n".to_string();
        for s in &self.seeds {
            text.push_str(&csv_row([
                s.seed.to_string(),
                format_f64(s.gap_baseline),
                format_f64(s.gap_lipschitz),
                format_f64(s.difference()),
            ]));
        }
        let (b, l) = self.mean_gaps();
        text.push_str(&csv_row([
            "mean".to_string(),
            format_f64(b),
            format_f64(l),
            format_f64(l - b),
        ]));
        text
    }

    /// Seed-averaged per-epoch accuracies for both series.
    pub fn curves_csv(&self) -> String {
        let mut text = "epoch,train_acc_lambda_0,test_acc_lambda_0,train_acc_lambda_star,test_acc_lambda_star\n".to_string();
        let epochs = self.baseline.first().map_or(0, |o| o.metrics.len());
        let n = self.baseline.len().max(1) as f64;
        let mean = |runs: &[DistillOutcome], e: usize, f: fn(&EpochMetrics) -> f64| {
            runs.iter().map(|o| f(&o.metrics[e])).sum::<f64>() / n
        };
        for e in 0..epochs {
            text.push_str(&csv_row([
                e.to_string(),
                format_f64(mean(&self.baseline, e, |m| m.train_acc)),
                format_f64(mean(&self.baseline, e, |m| m.test_acc)),
                format_f64(mean(&self.lipschitz, e, |m| m.train_acc)),
                format_f64(mean(&self.lipschitz, e, |m| m.test_acc)),
            ]));
        }
        text
    }
}

pub fn overfit_probe(
    cfg: &RunConfig,
    teacher: &Network,
    train: &Dataset,
    test: &Dataset,
    root: &Path,
) -> Result<ProbeOutcome> {
    let lambda = cfg.probe_lambda;
    let grid: Vec<(f64, u64)> = cfg
        .probe_seeds
        .iter()
        .flat_map(|&s| [(0.0, s), (lambda, s)])
        .collect();
    let runs: Vec<DistillOutcome> = pool(cfg.jobs)?.install(|| {
        grid.par_iter()
            .map(|&(l, seed)| {
                distill_to_dir(
                    &cfg.with_lambda(l).with_seed(seed),
                    teacher,
                    train,
                    test,
                    &cell_dir(root, l, seed),
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut baseline = Vec::new();
    let mut lipschitz = Vec::new();
    for (k, run) in runs.into_iter().enumerate() {
        if k % 2 == 0 {
            baseline.push(run);
        } else {
            lipschitz.push(run);
        }
    }
    let seeds = cfg
        .probe_seeds
        .iter()
        .zip(baseline.iter().zip(&lipschitz))
        .map(|(&seed, (b, l))| ProbeSeed {
            seed,
            gap_baseline: gap(b),
            gap_lipschitz: gap(l),
        })
        .collect();
    Ok(ProbeOutcome {
        lambda,
        seeds,
        baseline,
        lipschitz,
    })
}

pub fn run_overfit_probe(cfg: &RunConfig) -> Result<ProbeOutcome> {
    let teacher = load_teacher(cfg)?;
    let (train, test) = load_split(cfg)?;
    let outcome = overfit_probe(cfg, &teacher, &train, &test, &cfg.out_dir.join("probe"))?;
    write_file(
        &cfg.out_dir.join("overfit_report.csv"),
        &outcome.report_csv(),
    )?;
    write_file(
        &cfg.out_dir.join("overfit_curves.csv"),
        &outcome.curves_csv(),
    )?;
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    pub blocks: Vec<BlockReport>,
    pub profile: LipschitzProfile,
    pub empirical_max_ratio: f64,
    pub pairs: usize,
}

impl AnalyzeReport {
    pub fn table_csv(&self) -> String {
        let mut text =
            "block_index,sn_tm,sqrt_sn_tm,sn_weight_exact,independence_score\n".to_string();
        for b in &self.blocks {
            text.push_str(&csv_row([
                b.block_index.to_string(),
                format_f64(b.sn_tm),
                format_f64(b.sqrt_sn_tm),
                b.sn_weight_exact.map(format_f64).unwrap_or_default(),
                format_f64(b.independence_score),
            ]));
        }
        text
    }

    pub fn bound_csv(&self) -> String {
        let mut text = "quantity,value\n".to_string();
        for (k, v) in [
            ("upper_bound", format_f64(self.profile.upper_bound)),
            ("tm_estimate", format_f64(self.profile.tm_estimate)),
            ("empirical_max_ratio", format_f64(self.empirical_max_ratio)),
            ("pairs", self.pairs.to_string()),
            ("batch_size", self.profile.batch_size.to_string()),
        ] {
            text.push_str(&csv_row([k.to_string(), v]));
        }
        text
    }
}

/// Profiles `net` on a seeded batch drawn from `data` and fails if any
/// sampled input pair exceeds the reported bound.
pub fn analyze(cfg: &RunConfig, net: &Network, data: &Dataset) -> Result<AnalyzeReport> {
    if net.input_dim() != data.dim() {
        return Err(Error::Config(format!(
            "model expects {} features, data has {}",
            net.input_dim(),
            data.dim()
        )));
    }
    if data.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let mut rng = seeded(Stream::Eval.seed(cfg.seed));
    let mut idx = permutation(data.len(), &mut rng);
    idx.truncate(cfg.distill.batch_size.min(data.len()));
    let (batch, _) = data.subset(&idx);
    let power = cfg.power();
    let blocks = block_reports(net, &batch, &power)?;
    let profile = profile_network(net, &batch, &power)?;
    let ratio = empirical_max_ratio(
        net,
        Some(&data.features),
        cfg.analyze_pairs,
        Stream::Eval.seed(cfg.seed).wrapping_add(1),
    )?;
    if ratio > profile.upper_bound * (1.0 + BOUND_CHECK_SLACK) {
        return Err(Error::Check(format!(
            "sampled ratio {ratio:e} exceeds the upper bound {:e}",
            profile.upper_bound
        )));
    }
    Ok(AnalyzeReport {
        blocks,
        profile,
        empirical_max_ratio: ratio,
        pairs: cfg.analyze_pairs,
    })
}

pub fn run_analyze(cfg: &RunConfig, model: &Path, data: &Path) -> Result<AnalyzeReport> {
    let net = load(model)?;
    let data = Dataset::load(data, net.output_dim(), Split::Test)?;
    let report = analyze(cfg, &net, &data)?;
    write_file(&cfg.out_dir.join("analysis.csv"), &report.table_csv())?;
    write_file(&cfg.out_dir.join("analysis_bound.csv"), &report.bound_csv())?;
    Ok(report)
}

/// Formats a report table for terminal output.
pub fn render_analysis(report: &AnalyzeReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:>14} {:>14} {:>14} {:>12}",
        "block", "sn_tm", "sqrt_sn_tm", "sn_weight", "independence"
    );
    for b in &report.blocks {
        let exact = b
            .sn_weight_exact
            .map_or("-".to_string(), |v| format!("{v:.6e}"));
        let _ = writeln!(
            out,
            "{:>5} {:>14.6e} {:>14.6e} {:>14} {:>12.4}",
            b.block_index, b.sn_tm, b.sqrt_sn_tm, exact, b.independence_score
        );
    }
    let _ = writeln!(
        out,
        "upper bound          {:.6e}",
        report.profile.upper_bound
    );
    let _ = writeln!(
        out,
        "tm estimate          {:.6e}",
        report.profile.tm_estimate
    );
    let _ = writeln!(
        out,
        "empirical max ratio  {:.6e} over {} pairs",
        report.empirical_max_ratio, report.pairs
    );
    out
}
