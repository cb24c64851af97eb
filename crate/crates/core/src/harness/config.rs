//! Flat `key = value` run configuration.
//!
//! `#` starts a comment. Unknown or repeated keys are errors. Relative paths
//! are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use crate::distillation::{BlockPairing, DistillConfig};
use crate::error::{Error, Result};
use crate::linalg::PowerIterationConfig;
use crate::network::{ActivationKind, BlockKind};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Blobs,
    Spirals,
    NoisyBlobs,
}

impl DataKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "blobs" => Some(DataKind::Blobs),
            "spirals" => Some(DataKind::Spirals),
            "noisy_blobs" => Some(DataKind::NoisyBlobs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub kind: DataKind,
    pub classes: usize,
    pub features: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub cluster_std: f64,
    /// Blob centers are drawn uniformly from `[-center_box, center_box]^d`.
    pub center_box: f64,
    /// Fraction of training labels reassigned to a different class
    /// (`noisy_blobs` only).
    pub flip_fraction: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            kind: DataKind::Blobs,
            classes: 3,
            features: 8,
            train_count: 600,
            test_count: 300,
            cluster_std: 1.0,
            center_box: 3.0,
            flip_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSpec,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub teacher_model: Option<PathBuf>,
    pub teacher_widths: Vec<usize>,
    pub student_widths: Vec<usize>,
    pub teacher_blocks: Option<Vec<BlockKind>>,
    pub student_blocks: Option<Vec<BlockKind>>,
    pub activation: ActivationKind,
    pub init_scale: f64,
    pub teacher_epochs: usize,
    pub teacher_learning_rate: f64,
    pub distill: DistillConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sweep_lambdas: Vec<f64>,
    pub sweep_seeds: Vec<u64>,
    pub probe_lambda: f64,
    pub probe_seeds: Vec<u64>,
    pub analyze_pairs: usize,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSpec::default(),
            train_csv: None,
            test_csv: None,
            teacher_model: None,
            teacher_widths: vec![8, 64, 64, 3],
            student_widths: vec![8, 16, 3],
            teacher_blocks: None,
            student_blocks: None,
            activation: ActivationKind::Relu,
            init_scale: 2f64.sqrt(),
            teacher_epochs: 50,
            teacher_learning_rate: 0.05,
            distill: DistillConfig::default(),
            seed: 1,
            out_dir: PathBuf::from("out"),
            sweep_lambdas: vec![0.0, 0.1, 0.4, 1.6, 3.2, 6.4],
            sweep_seeds: vec![1, 2, 3, 4, 5],
            probe_lambda: 3.2,
            probe_seeds: vec![1, 2, 3, 4, 5],
            analyze_pairs: 10_000,
            jobs: 1,
        }
    }
}

fn parse_list<T>(value: &str, item: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect()
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, path)
    }

    /// Parses config text; `base` anchors relative paths and `origin` names
    /// the source in error messages.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Config(format!("{}:{line_no}: {msg}", origin.display()));
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("expected `key = value`, found {line:?}")))?;
            if !seen.insert(key.to_string()) {
                return Err(bad(format!("duplicate key {key:?}")));
            }
            cfg.set(key, value, base).map_err(bad)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        let path = |v: &str| base.join(v);
        let d = &mut self.distill;
        match key {
            "data_kind" => {
                self.data.kind =
                    DataKind::parse(value).ok_or(format!("unknown data_kind {value:?}"))?
            }
            "classes" => self.data.classes = num(key, value)?,
            "features" => self.data.features = num(key, value)?,
            "train_count" => self.data.train_count = num(key, value)?,
            "test_count" => self.data.test_count = num(key, value)?,
            "cluster_std" => self.data.cluster_std = num(key, value)?,
            "center_box" => self.data.center_box = num(key, value)?,
            "flip_fraction" => self.data.flip_fraction = num(key, value)?,
            "train_csv" => self.train_csv = Some(path(value)),
            "test_csv" => self.test_csv = Some(path(value)),
            "teacher_model" => self.teacher_model = Some(path(value)),
            "teacher_widths" => {
                self.teacher_widths =
                    parse_list(value, |s| s.parse().ok()).ok_or(format!("bad widths {value:?}"))?
            }
            "student_widths" => {
                self.student_widths =
                    parse_list(value, |s| s.parse().ok()).ok_or(format!("bad widths {value:?}"))?
            }
            "teacher_blocks" => {
                self.teacher_blocks = Some(
                    parse_list(value, BlockKind::parse)
                        .ok_or(format!("bad block kinds {value:?}"))?,
                )
            }
            "student_blocks" => {
                self.student_blocks = Some(
                    parse_list(value, BlockKind::parse)
                        .ok_or(format!("bad block kinds {value:?}"))?,
                )
            }
            "activation" => self.activation = value.parse()?,
            "init_scale" => self.init_scale = num(key, value)?,
            "teacher_epochs" => self.teacher_epochs = num(key, value)?,
            "teacher_learning_rate" => self.teacher_learning_rate = num(key, value)?,
            "lambda" => d.lambda = num(key, value)?,
            "beta" => d.beta = num(key, value)?,
            "temperature" => d.temperature = num(key, value)?,
            "kd_weight" => d.kd_weight = num(key, value)?,
            "res_stop" => d.power.res_stop = num(key, value)?,
            "max_iters" => d.power.max_iters = num(key, value)?,
            "block_pairing" => {
                d.block_pairing =
                    BlockPairing::parse(value).ok_or(format!("unknown block_pairing {value:?}"))?
            }
            "exact_beta_power" => d.exact_beta_power = num(key, value)?,
            "learning_rate" => d.learning_rate = num(key, value)?,
            "momentum" => d.momentum = num(key, value)?,
            "epochs" => d.epochs = num(key, value)?,
            "batch_size" => d.batch_size = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out_dir" => self.out_dir = path(value),
            "sweep_lambdas" => {
                self.sweep_lambdas = parse_list(value, |s| s.parse().ok())
                    .ok_or(format!("bad lambda list {value:?}"))?
            }
            "sweep_seeds" => {
                self.sweep_seeds = parse_list(value, |s| s.parse().ok())
                    .ok_or(format!("bad seed list {value:?}"))?
            }
            "probe_lambda" => self.probe_lambda = num(key, value)?,
            "probe_seeds" => {
                self.probe_seeds = parse_list(value, |s| s.parse().ok())
                    .ok_or(format!("bad seed list {value:?}"))?
            }
            "analyze_pairs" => self.analyze_pairs = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let data = &self.data;
        if data.classes < 2 {
            return bad(format!("classes must be >= 2, got {}", data.classes));
        }
        if data.features == 0 {
            return bad("features must be positive".into());
        }
        if data.kind == DataKind::Spirals && data.features < 2 {
            return bad("spirals need at least 2 features".into());
        }
        if data.train_count + data.test_count < 10 || data.train_count == 0 {
            return bad("need at least 10 samples including at least one training sample".into());
        }
        if !(0.0..=1.0).contains(&data.flip_fraction) {
            return bad(format!(
                "flip_fraction must be in [0, 1], got {}",
                data.flip_fraction
            ));
        }
        if !(data.cluster_std >= 0.0) || !(data.center_box >= 0.0) {
            return bad("cluster_std and center_box must be non-negative".into());
        }
        for (name, widths) in [
            ("teacher", &self.teacher_widths),
            ("student", &self.student_widths),
        ] {
            if widths.len() < 2 || widths.contains(&0) {
                return bad(format!("{name}_widths needs at least two positive widths"));
            }
            if widths[0] != data.features {
                return bad(format!(
                    "{name}_widths[0] = {} but data has {} features",
                    widths[0], data.features
                ));
            }
            if widths[widths.len() - 1] != data.classes {
                return bad(format!(
                    "{name}_widths ends in {} but data has {} classes",
                    widths[widths.len() - 1],
                    data.classes
                ));
            }
        }
        if !(self.init_scale > 0.0) || !(self.teacher_learning_rate >= 0.0) {
            return bad(
                "init_scale must be positive and teacher_learning_rate non-negative".into(),
            );
        }
        if self.jobs == 0 {
            return bad("jobs must be positive".into());
        }
        if self
            .sweep_lambdas
            .iter()
            .chain([&self.probe_lambda])
            .any(|l| !(*l >= 0.0))
        {
            return bad("lambdas must be non-negative".into());
        }
        self.distill.validate()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut c = self.clone();
        c.distill.lambda = lambda;
        c
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        RunConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn train_csv_path(&self) -> PathBuf {
        self.train_csv
            .clone()
            .unwrap_or_else(|| self.out_dir.join("train.csv"))
    }

    pub fn test_csv_path(&self) -> PathBuf {
        self.test_csv
            .clone()
            .unwrap_or_else(|| self.out_dir.join("test.csv"))
    }

    pub fn teacher_model_path(&self) -> PathBuf {
        self.teacher_model
            .clone()
            .unwrap_or_else(|| self.out_dir.join("teacher.model"))
    }

    pub fn teacher_kinds(&self) -> Vec<BlockKind> {
        self.teacher_blocks
            .clone()
            .unwrap_or_else(|| vec![BlockKind::Dense; self.teacher_widths.len() - 1])
    }

    pub fn student_kinds(&self) -> Vec<BlockKind> {
        self.student_blocks
            .clone()
            .unwrap_or_else(|| vec![BlockKind::Dense; self.student_widths.len() - 1])
    }

    /// Power-iteration settings seeded from the master seed.
    pub fn power(&self) -> PowerIterationConfig {
        self.distill
            .power
            .with_seed(Stream::PowerIteration.seed(self.seed))
    }
}
