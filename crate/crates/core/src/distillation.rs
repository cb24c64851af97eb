//! Loss family and the Lipschitz-regularized training step.
//!
//! The full objective is `(λ/2)·L_lip + L_kd + L_ce`. `L_lip` compares the
//! teacher's and student's per-block `σ1(TM)` statistics, weighting block
//! `i` of `m` paired blocks by `β^-(m-1-i)` so later blocks count more. Its
//! gradient is approximated by the rank-1 pull `−γ·u1·v1ᵀ` on each paired
//! student weight, with `γ = λ·(t_i − s_i)/β^(m-1-i)`.

use crate::error::{Error, Result};
use crate::linalg::{top_singular_pair, Matrix, PowerIterationConfig};
use crate::lipschitz::block_spectral_norms;
use crate::network::{base_loss_and_gradients, forward_collect, Gradients, Network};

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.cols() {
        return Err(Error::dim(
            "labels",
            format!("{} labels", logits.cols()),
            format!("{} labels", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.rows()) {
        return Err(Error::Label {
            label: bad,
            classes: logits.rows(),
        });
    }
    Ok(())
}

/// Log-softmax of column `j` of `logits / temperature`.
fn log_softmax_column(logits: &Matrix, j: usize, temperature: f64) -> Vec<f64> {
    let col: Vec<f64> = (0..logits.rows())
        .map(|i| logits[(i, j)] / temperature)
        .collect();
    let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + col.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    col.into_iter().map(|x| x - lse).collect()
}

/// Mean softmax cross-entropy over the batch (columns).
pub fn loss_ce(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let n = logits.cols();
    let total: f64 = (0..n)
        .map(|j| -log_softmax_column(logits, j, 1.0)[labels[j]])
        .sum();
    Ok(total / n as f64)
}

/// `T² · KL(softmax(teacher/T) ‖ softmax(student/T))`, averaged over the
/// batch.
pub fn loss_kd(student: &Matrix, teacher: &Matrix, temperature: f64) -> Result<f64> {
    if student.shape() != teacher.shape() {
        return Err(Error::dim(
            "loss_kd",
            format!("{}x{}", student.rows(), student.cols()),
            format!("{}x{}", teacher.rows(), teacher.cols()),
        ));
    }
    if !(temperature > 0.0) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let n = student.cols();
    let mut total = 0.0;
    for j in 0..n {
        let ls = log_softmax_column(student, j, temperature);
        let lt = log_softmax_column(teacher, j, temperature);
        total += lt
            .iter()
            .zip(&ls)
            .map(|(t, s)| t.exp() * (t - s))
            .sum::<f64>();
    }
    Ok(temperature * temperature * total / n as f64)
}

pub(crate) struct OutputGradient {
    pub ce: f64,
    /// Weighted: `kd_weight · L_kd`.
    pub kd: f64,
    pub dlogits: Matrix,
}

/// Loss values and `∂(L_ce + kd_weight·L_kd)/∂logits`.
pub(crate) fn output_gradient(
    logits: &Matrix,
    labels: &[usize],
    teacher: Option<&Matrix>,
    temperature: f64,
    kd_weight: f64,
) -> Result<OutputGradient> {
    let ce = loss_ce(logits, labels)?;
    let n = logits.cols() as f64;
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    for j in 0..logits.cols() {
        let ls = log_softmax_column(logits, j, 1.0);
        for (i, l) in ls.iter().enumerate() {
            dlogits[(i, j)] = (l.exp() - if labels[j] == i { 1.0 } else { 0.0 }) / n;
        }
    }
    let kd = if kd_weight != 0.0 {
        let teacher =
            teacher.ok_or_else(|| Error::Config("kd_weight > 0 needs teacher logits".into()))?;
        let kd = loss_kd(logits, teacher, temperature)?;
        // d/dz of T²·KL(p_t ‖ softmax(z/T)) is T·(p_s − p_t).
        let c = kd_weight * temperature / n;
        for j in 0..logits.cols() {
            let ls = log_softmax_column(logits, j, temperature);
            let lt = log_softmax_column(teacher, j, temperature);
            for i in 0..logits.rows() {
                dlogits[(i, j)] += c * (ls[i].exp() - lt[i].exp());
            }
        }
        kd_weight * kd
    } else {
        0.0
    };
    Ok(OutputGradient { ce, kd, dlogits })
}

fn block_weight_power(beta: f64, exponent: usize) -> f64 {
    beta.powi(exponent as i32)
}

/// `Σ_i ((t_i − s_i) / β^(m−1−i))²` over `m` paired blocks, with the
/// individual terms.
pub fn loss_lip(teacher_sn: &[f64], student_sn: &[f64], beta: f64) -> Result<(f64, Vec<f64>)> {
    if teacher_sn.len() != student_sn.len() {
        return Err(Error::dim(
            "loss_lip",
            format!("{} student statistics", teacher_sn.len()),
            format!("{}", student_sn.len()),
        ));
    }
    let m = teacher_sn.len();
    let terms: Vec<f64> = teacher_sn
        .iter()
        .zip(student_sn)
        .enumerate()
        .map(|(i, (t, s))| {
            let r = (t - s) / block_weight_power(beta, m - 1 - i);
            r * r
        })
        .collect();
    Ok((terms.iter().sum(), terms))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    /// KD contribution, already multiplied by the configured `kd_weight`.
    pub kd: f64,
    pub lip: f64,
    pub total: f64,
    pub per_block_lip_terms: Vec<f64>,
}

impl LossBreakdown {
    pub fn from_terms(ce: f64, kd: f64, per_block_lip_terms: Vec<f64>, lambda: f64) -> Self {
        let lip = per_block_lip_terms.iter().sum();
        Self {
            ce,
            kd,
            lip,
            total: lambda / 2.0 * lip + kd + ce,
            per_block_lip_terms,
        }
    }
}

/// `(λ/2)·lip + kd + ce`.
pub fn total_loss(ce: f64, kd: f64, lip: f64, lambda: f64) -> LossBreakdown {
    LossBreakdown::from_terms(ce, kd, vec![lip], lambda)
}

/// How student blocks are matched with teacher blocks when depths differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockPairing {
    /// Student block `i` ↔ teacher block `round(i·L_T/L_S)`.
    #[default]
    Uniform,
    /// Blocks `1..min(L_S, L_T)−1` paired index to index.
    Truncate,
}

impl BlockPairing {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(BlockPairing::Uniform),
            "truncate" => Some(BlockPairing::Truncate),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BlockPairing::Uniform => "uniform",
            BlockPairing::Truncate => "truncate",
        }
    }

    /// 1-based `(student_block, teacher_block)` pairs. Final blocks never
    /// take part.
    pub fn pairs(self, student_depth: usize, teacher_depth: usize) -> Vec<(usize, usize)> {
        if student_depth < 2 || teacher_depth < 2 {
            return Vec::new();
        }
        match self {
            BlockPairing::Uniform => (1..student_depth)
                .map(|i| {
                    // round-half-up of i·L_T/L_S in integers
                    let t = (2 * i * teacher_depth + student_depth) / (2 * student_depth);
                    (i, t.clamp(1, teacher_depth - 1))
                })
                .collect(),
            BlockPairing::Truncate => (1..student_depth.min(teacher_depth))
                .map(|i| (i, i))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub lambda: f64,
    pub beta: f64,
    pub temperature: f64,
    pub kd_weight: f64,
    pub power: PowerIterationConfig,
    pub block_pairing: BlockPairing,
    /// Use `β^(2(m−1−i))` in `γ`, the literal derivative of `L_lip`,
    /// instead of `β^(m−1−i)`.
    pub exact_beta_power: bool,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lambda: 3.2,
            beta: 2.0,
            temperature: 4.0,
            kd_weight: 1.0,
            power: PowerIterationConfig::default(),
            block_pairing: BlockPairing::Uniform,
            exact_beta_power: false,
            learning_rate: 0.002,
            momentum: 0.9,
            epochs: 100,
            batch_size: 64,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.beta > 1.0) {
            return bad(format!("beta must be > 1, got {}", self.beta));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!(
                "lambda must be a non-negative number, got {}",
                self.lambda
            ));
        }
        if !(self.temperature > 0.0) {
            return bad(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        if !(self.kd_weight >= 0.0) {
            return bad(format!(
                "kd_weight must be non-negative, got {}",
                self.kd_weight
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return bad(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.power.res_stop > 0.0) || self.power.max_iters == 0 {
            return bad("res_stop and max_iters must be positive".into());
        }
        Ok(())
    }
}

/// Rank-1 pull applied to one student weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationTerm {
    /// 1-based student block.
    pub block_index: usize,
    /// Position within [`crate::network::Block::params`].
    pub param_index: usize,
    pub gamma: f64,
    /// `u1·v1ᵀ` of the weight.
    pub direction: Matrix,
}

/// `γ` and `u1·v1ᵀ` for every paired student block. Residual blocks get
/// one term per branch matrix, sharing the block's `γ`.
pub fn lip_gradient_terms(
    student: &Network,
    student_blocks: &[usize],
    teacher_sn: &[f64],
    student_sn: &[f64],
    cfg: &DistillConfig,
) -> Result<Vec<RegularizationTerm>> {
    let m = student_blocks.len();
    if teacher_sn.len() != m || student_sn.len() != m {
        return Err(Error::dim(
            "lip_gradient_terms",
            format!("{m} paired statistics"),
            format!(
                "{} teacher / {} student",
                teacher_sn.len(),
                student_sn.len()
            ),
        ));
    }
    let mut terms = Vec::new();
    for (j, &block_index) in student_blocks.iter().enumerate() {
        let block = student
            .blocks()
            .get(block_index.wrapping_sub(1))
            .ok_or_else(|| Error::Network(format!("student has no block {block_index}")))?;
        let exponent = if cfg.exact_beta_power {
            2 * (m - 1 - j)
        } else {
            m - 1 - j
        };
        let gamma =
            cfg.lambda * (teacher_sn[j] - student_sn[j]) / block_weight_power(cfg.beta, exponent);
        for (param_index, w) in block.params().into_iter().enumerate() {
            let triple = top_singular_pair(w, &cfg.power)?;
            terms.push(RegularizationTerm {
                block_index,
                param_index,
                gamma,
                direction: triple.direction(),
            });
        }
    }
    Ok(terms)
}

/// Plain SGD with optional heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: None,
        }
    }

    /// `v ← μ·v + g`, `W ← W − lr·v`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        if self.momentum == 0.0 {
            apply(net, grads, self.learning_rate);
            return;
        }
        let v = self
            .velocity
            .get_or_insert_with(|| Gradients::zeros_like(net));
        for (vb, gb) in v.blocks.iter_mut().zip(&grads.blocks) {
            for (vm, gm) in vb.iter_mut().zip(gb) {
                *vm = vm.scale(self.momentum);
                vm.axpy(1.0, gm);
            }
        }
        let v = self.velocity.as_ref().expect("velocity initialized above");
        apply(net, v, self.learning_rate);
    }
}

fn apply(net: &mut Network, update: &Gradients, lr: f64) {
    if lr == 0.0 {
        return;
    }
    for (block, ub) in net.blocks_mut().iter_mut().zip(&update.blocks) {
        for (p, u) in block.params_mut().into_iter().zip(ub) {
            p.axpy(-lr, u);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Pre-update losses.
    pub loss: LossBreakdown,
    /// 1-based `(student_block, teacher_block)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub teacher_sn: Vec<f64>,
    pub student_sn: Vec<f64>,
    pub terms: Vec<RegularizationTerm>,
}

/// Teacher-side statistics for a batch; reusable across steps that share
/// the batch since the teacher is frozen.
#[derive(Debug, Clone)]
pub struct TeacherView {
    pub logits: Matrix,
    pub sn: Vec<f64>,
}

pub fn teacher_view(
    teacher: &Network,
    batch: &Matrix,
    teacher_blocks: &[usize],
    power: &PowerIterationConfig,
) -> Result<TeacherView> {
    let (logits, maps) = forward_collect(teacher, batch)?;
    let sn = block_spectral_norms(teacher, &maps, teacher_blocks, power)?;
    Ok(TeacherView { logits, sn })
}

/// One SGD step on the full objective.
///
/// Losses and statistics are measured before the update. With `λ = 0` the
/// update is exactly the vanilla CE + KD step.
pub fn distill_step(
    student: &mut Network,
    optimizer: &mut Sgd,
    teacher: &Network,
    batch: &Matrix,
    labels: &[usize],
    cfg: &DistillConfig,
) -> Result<StepReport> {
    let pairs = cfg.block_pairing.pairs(student.depth(), teacher.depth());
    let teacher_blocks: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let view = teacher_view(teacher, batch, &teacher_blocks, &cfg.power)?;
    distill_step_with_teacher(student, optimizer, &view, &pairs, batch, labels, cfg)
}

pub fn distill_step_with_teacher(
    student: &mut Network,
    optimizer: &mut Sgd,
    teacher: &TeacherView,
    pairs: &[(usize, usize)],
    batch: &Matrix,
    labels: &[usize],
    cfg: &DistillConfig,
) -> Result<StepReport> {
    cfg.validate()?;
    let student_blocks: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let mut base = base_loss_and_gradients(
        student,
        batch,
        labels,
        Some(&teacher.logits),
        cfg.temperature,
        cfg.kd_weight,
    )?;
    let student_sn = block_spectral_norms(student, &base.maps, &student_blocks, &cfg.power)?;
    let (_, lip_terms) = loss_lip(&teacher.sn, &student_sn, cfg.beta)?;
    let loss = LossBreakdown::from_terms(base.ce, base.kd, lip_terms, cfg.lambda);

    let terms = if cfg.lambda != 0.0 {
        let terms = lip_gradient_terms(student, &student_blocks, &teacher.sn, &student_sn, cfg)?;
        for t in &terms {
            base.grads.blocks[t.block_index - 1][t.param_index].axpy(-t.gamma, &t.direction);
        }
        terms
    } else {
        Vec::new()
    };
    optimizer.step(student, &base.grads);

    Ok(StepReport {
        loss,
        pairs: pairs.to_vec(),
        teacher_sn: teacher.sn.clone(),
        student_sn,
        terms,
    })
}
