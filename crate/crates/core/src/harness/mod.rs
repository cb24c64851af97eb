//! Experiment harness: configuration, synthetic data, training runs and
//! their CSV outputs.

pub mod config;
pub mod data;
pub mod experiments;

pub use config::{DataKind, DataSpec, RunConfig};
pub use data::{gen_dataset, Dataset, GeneratedData, Split};
pub use experiments::{
    accuracy, analyze, distill, overfit_probe, render_analysis, run_analyze, run_distill,
    run_gen_data, run_overfit_probe, run_sweep, run_train_teacher, sweep, train_teacher,
    AnalyzeReport, CellResult, DistillOutcome, EpochMetrics, ProbeOutcome, ProbeSeed, SweepOutcome,
    SweepRow, TeacherEpoch, TeacherOutcome,
};
