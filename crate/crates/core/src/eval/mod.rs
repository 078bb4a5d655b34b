//! Classification metrics and the cross-dataset benchmark.

pub mod metrics;

pub use metrics::{
    argmax, confusion, confusion_k, precision_f1, top_k_accuracy, war, ClassScores, ConfusionMatrix, MetricReport,
    PrecisionF1,
};

pub mod bench;

pub use bench::{
    benchmark, evaluate_dataset, render_reference_tables, BenchRow, BenchmarkReport, Classifier, REFERENCE_ROWS,
    TABLE_COLUMNS,
};
