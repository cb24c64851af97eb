//! Synthetic datasets and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::config::{DataKind, DataSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::io::format_f64;
use crate::rng::{gaussian, permutation, seeded, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `d × M`, one sample per column.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        if labels.len() != features.cols() {
            return Err(Error::dim("Dataset::new", features.cols(), labels.len()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label, classes });
        }
        Ok(Self {
            features,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    /// Features and labels of the given sample indices.
    pub fn subset(&self, idx: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.features.columns(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        out.push("label".into());
        let mut text = out.join(",");
        text.push('\n');
        for j in 0..self.len() {
            for i in 0..d {
                text.push_str(&format_f64(self.features[(i, j)]));
                text.push(',');
            }
            let _ = writeln!(text, "{}", self.labels[j]);
        }
        text
    }

    pub fn from_csv(text: &str, classes: usize, split: Split, source: &Path) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Format {
            path: source.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        let d = names.len().saturating_sub(1);
        let expected: Vec<String> = (0..d)
            .map(|i| format!("f{i}"))
            .chain(["label".to_string()])
            .collect();
        if d == 0 || names != expected {
            return Err(bad(
                1,
                format!("expected header `f0,...,f{{d-1}},label`, found {header:?}"),
            ));
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(bad(
                    line_no,
                    format!("expected {} fields, found {}", d + 1, fields.len()),
                ));
            }
            for f in &fields[..d] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| bad(line_no, format!("bad number {f:?}")))?;
                if !v.is_finite() {
                    return Err(bad(line_no, format!("non-finite value {f:?}")));
                }
                values.push(v);
            }
            let label: usize = fields[d]
                .parse()
                .map_err(|_| bad(line_no, format!("bad label {:?}", fields[d])))?;
            if label >= classes {
                return Err(bad(
                    line_no,
                    format!("label {label} out of range for {classes} classes"),
                ));
            }
            labels.push(label);
        }
        let m = labels.len();
        let features = Matrix::from_fn(d, m, |i, j| values[j * d + i]);
        Dataset::new(features, labels, classes, split)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, classes: usize, split: Split) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, classes, split, path)
    }
}

/// Generated train/test pair plus the training indices whose labels were
/// flipped.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub train: Dataset,
    pub test: Dataset,
    pub flipped: Vec<usize>,
}

pub fn gen_dataset(spec: &DataSpec, seed: u64) -> Result<GeneratedData> {
    if spec.classes < 2 || spec.train_count + spec.test_count < 10 || spec.features == 0 {
        return Err(Error::Config(
            "need classes >= 2, at least 10 samples and a positive feature count".into(),
        ));
    }
    let mut rng = seeded(Stream::Data.seed(seed));
    let total = spec.train_count + spec.test_count;
    let d = spec.features;
    let c = spec.classes;
    let order = permutation(total, &mut rng);
    let labels: Vec<usize> = order.iter().map(|&k| k % c).collect();
    let mut features = Matrix::zeros(d, total);
    match spec.kind {
        DataKind::Blobs | DataKind::NoisyBlobs => {
            let centers = Matrix::from_fn(d, c, |_, _| {
                rng.random_range(-spec.center_box..=spec.center_box)
            });
            for (j, &label) in labels.iter().enumerate() {
                for i in 0..d {
                    features[(i, j)] = centers[(i, label)] + spec.cluster_std * gaussian(&mut rng);
                }
            }
        }
        DataKind::Spirals => {
            let noise = 0.1 * spec.cluster_std;
            for (j, &label) in labels.iter().enumerate() {
                let t: f64 = rng.random();
                let radius = 1.0 + 4.0 * t;
                let angle = label as f64 * std::f64::consts::TAU / c as f64
                    + 4.0 * std::f64::consts::PI * t;
                features[(0, j)] = radius * angle.cos() + noise * gaussian(&mut rng);
                features[(1, j)] = radius * angle.sin() + noise * gaussian(&mut rng);
                for i in 2..d {
                    features[(i, j)] = spec.cluster_std * gaussian(&mut rng);
                }
            }
        }
    }
    let train_idx: Vec<usize> = (0..spec.train_count).collect();
    let test_idx: Vec<usize> = (spec.train_count..total).collect();
    let mut train_labels: Vec<usize> = labels[..spec.train_count].to_vec();
    let mut flipped = Vec::new();
    if spec.kind == DataKind::NoisyBlobs {
        let count = (spec.flip_fraction * spec.train_count as f64).floor() as usize;
        flipped = permutation(spec.train_count, &mut rng)[..count].to_vec();
        flipped.sort_unstable();
        for &k in &flipped {
            let shift = rng.random_range(1..c);
            train_labels[k] = (train_labels[k] + shift) % c;
        }
    }
    Ok(GeneratedData {
        train: Dataset::new(features.columns(&train_idx), train_labels, c, Split::Train)?,
        test: Dataset::new(
            features.columns(&test_idx),
            labels[spec.train_count..].to_vec(),
            c,
            Split::Test,
        )?,
        flipped,
    })
}
