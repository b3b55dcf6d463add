//! Report documents. The key-value tree is the source of truth; the tabular
//! and markdown renderings are derived from it, so they agree on every
//! shared number.

use optbench_core::data::{PipelineReport, PreparedData};
use optbench_core::harness::{BenchmarkResult, EnhancedReport, ExperimentConfig, RunReport};
use optbench_core::kv::{fmt_f64, KvDoc, KvError};
use optbench_core::metrics::ClassificationScores;

use crate::config::echo_config;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column order of the per-optimizer table.
pub const TABLE_COLUMNS: [&str; 8] = [
    "optimizer",
    "final_train_loss",
    "final_val_loss",
    "convergence_epoch",
    "stability",
    "precision",
    "recall",
    "auc",
];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report {0}")]
    Kv(#[from] KvError),
    #[error("unsupported report kind {0:?}")]
    Kind(String),
}

fn push_header(doc: &mut KvDoc, kind: &str) {
    doc.push("tool.name", TOOL_NAME);
    doc.push("tool.version", TOOL_VERSION);
    doc.push("report.kind", kind);
}

fn push_dataset(doc: &mut KvDoc, data: &PreparedData) {
    let r: &PipelineReport = &data.report;
    doc.push("dataset.mode", data.options.mode);
    doc.push("dataset.impute", data.options.impute.name());
    doc.push("dataset.split_seed", data.options.split.seed);
    doc.push("dataset.rows_in", r.rows_in);
    doc.push("dataset.columns_in", r.columns_in);
    doc.push("dataset.rows_after_drop", r.rows_after_drop);
    doc.push("dataset.columns_after_drop", r.columns_after_drop);
    doc.push("dataset.duplicates_removed", r.duplicates_removed);
    doc.push("dataset.rows_after_dedup", r.rows_after_dedup);
    doc.push("dataset.input_features", data.dataset.x.cols());
    for (part, c) in [
        ("all", r.classes),
        ("train", r.train),
        ("validation", r.validation),
        ("test", r.test),
    ] {
        doc.push(format!("dataset.{part}.rows"), c.total());
        doc.push(format!("dataset.{part}.class0"), c.negative);
        doc.push(format!("dataset.{part}.class1"), c.positive);
    }
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn push_scores(doc: &mut KvDoc, p: &str, s: &ClassificationScores) {
    doc.push_f64(format!("{p}.precision"), s.precision);
    doc.push_f64(format!("{p}.recall"), s.recall);
    doc.push_f64(format!("{p}.auc"), s.auc);
}

/// Summary fields of one run, plus its loss curves.
fn push_run(doc: &mut KvDoc, p: &str, r: &RunReport) {
    doc.push(format!("{p}.init_hash"), &r.init_hash);
    doc.push(format!("{p}.final_params_hash"), &r.final_params_hash);
    doc.push(format!("{p}.epochs_run"), r.epochs_run());
    doc.push(format!("{p}.best_epoch"), opt_usize(r.best_epoch));
    doc.push(format!("{p}.stopped_early"), r.stopped_early);
    doc.push_f64(format!("{p}.final_train_loss"), r.final_train_loss);
    doc.push_f64(format!("{p}.final_val_loss"), r.final_validation_loss);
    doc.push(format!("{p}.convergence_epoch"), opt_usize(r.convergence_epoch));
    doc.push(format!("{p}.stability"), opt_f64(r.stability));
    push_scores(doc, p, &r.eval);
    doc.push_f64_list(format!("{p}.train_loss"), &r.log.train_losses());
    doc.push_f64_list(format!("{p}.val_loss"), &r.log.validation_losses());
}

pub fn benchmark_document(cfg: &ExperimentConfig, data: &PreparedData, result: &BenchmarkResult) -> KvDoc {
    let mut doc = KvDoc::new();
    push_header(&mut doc, "benchmark");
    echo_config(&mut doc, "config.", cfg);
    push_dataset(&mut doc, data);
    doc.push("snapshot.hash", &result.snapshot_hash);
    doc.push("runs.count", result.runs.len());
    for (i, run) in result.runs.iter().enumerate() {
        let p = format!("run.{i}");
        doc.push(format!("{p}.optimizer"), run.spec.kind);
        match &run.result {
            Ok(r) => {
                doc.push(format!("{p}.status"), "ok");
                push_run(&mut doc, &p, r);
            }
            Err(e) => {
                doc.push(format!("{p}.status"), "failed");
                doc.push(format!("{p}.error"), e);
            }
        }
    }
    doc
}

pub fn enhanced_document(cfg: &ExperimentConfig, data: &PreparedData, report: &EnhancedReport) -> KvDoc {
    let mut doc = KvDoc::new();
    push_header(&mut doc, "enhanced");
    echo_config(&mut doc, "config.", cfg);
    push_dataset(&mut doc, data);
    doc.push("snapshot.hash", &report.snapshot_hash);
    doc.push("enhanced.optimizer", report.kind);

    let grid = &report.grid;
    doc.push("grid.count", grid.entries.len());
    for (i, (lr, r)) in grid.entries.iter().enumerate() {
        let p = format!("grid.{i}");
        doc.push_f64(format!("{p}.eta"), *lr);
        match r {
            Ok(r) => {
                doc.push(format!("{p}.status"), "ok");
                push_run(&mut doc, &p, r);
            }
            Err(e) => {
                doc.push(format!("{p}.status"), "failed");
                doc.push(format!("{p}.error"), e);
            }
        }
    }
    doc.push_f64("grid.best_eta", grid.best_rate);

    let cv = &report.cv;
    doc.push("cv.count", cv.folds.len());
    for f in &cv.folds {
        let p = format!("cv.fold.{}", f.fold);
        doc.push(format!("{p}.validation_rows"), f.validation_rows);
        doc.push(format!("{p}.train_rows"), f.train_rows);
        doc.push(format!("{p}.init_seed"), f.init_seed);
        push_run(&mut doc, &p, &f.run);
    }
    push_scores(&mut doc, "cv.mean", &cv.mean);
    push_scores(&mut doc, "cv.std", &cv.std);
    doc.push("final.epochs", cv.final_epochs);
    push_run(&mut doc, "final", &cv.final_run);
    // The two AUC figures the headline could refer to, side by side.
    doc.push_f64("headline.auc_cv_mean", cv.mean.auc);
    doc.push_f64("headline.auc_test", cv.final_run.eval.auc);
    doc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Kv,
    Csv,
    Md,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kv" => Ok(Format::Kv),
            "csv" => Ok(Format::Csv),
            "md" => Ok(Format::Md),
            other => Err(format!("unknown format {other:?} (expected kv, csv or md)")),
        }
    }
}

/// Rows of the main table: header first, then one row per entry.
pub fn table_rows(doc: &KvDoc) -> Result<Vec<Vec<String>>, ReportError> {
    let kind = doc.required("report.kind")?.value.clone();
    match kind.as_str() {
        "benchmark" => benchmark_rows(doc),
        "enhanced" => enhanced_rows(doc),
        other => Err(ReportError::Kind(other.to_string())),
    }
}

fn get(doc: &KvDoc, key: &str) -> String {
    doc.get(key).unwrap_or_default().to_string()
}

fn benchmark_rows(doc: &KvDoc) -> Result<Vec<Vec<String>>, ReportError> {
    let n: usize = doc.parse_value("runs.count")?;
    let mut rows = vec![TABLE_COLUMNS.iter().map(|s| s.to_string()).collect()];
    for i in 0..n {
        let p = format!("run.{i}");
        let mut row = vec![doc.required(&format!("{p}.optimizer"))?.value.clone()];
        for col in &TABLE_COLUMNS[1..] {
            row.push(get(doc, &format!("{p}.{col}")));
        }
        rows.push(row);
    }
    Ok(rows)
}

const ENHANCED_COLUMNS: [&str; 8] = [
    "section",
    "eta",
    "fold",
    "epochs_run",
    "final_val_loss",
    "precision",
    "recall",
    "auc",
];

fn enhanced_rows(doc: &KvDoc) -> Result<Vec<Vec<String>>, ReportError> {
    let mut rows: Vec<Vec<String>> = vec![ENHANCED_COLUMNS.iter().map(|s| s.to_string()).collect()];
    let scores = |p: &str| {
        vec![
            get(doc, &format!("{p}.precision")),
            get(doc, &format!("{p}.recall")),
            get(doc, &format!("{p}.auc")),
        ]
    };
    let n: usize = doc.parse_value("grid.count")?;
    for i in 0..n {
        let p = format!("grid.{i}");
        let mut row = vec!["grid".into(), get(doc, &format!("{p}.eta")), String::new()];
        row.push(get(doc, &format!("{p}.epochs_run")));
        row.push(get(doc, &format!("{p}.final_val_loss")));
        row.extend(scores(&p));
        rows.push(row);
    }
    let eta = get(doc, "grid.best_eta");
    let folds: usize = doc.parse_value("cv.count")?;
    for k in 0..folds {
        let p = format!("cv.fold.{k}");
        let mut row = vec!["fold".into(), eta.clone(), k.to_string()];
        row.push(get(doc, &format!("{p}.epochs_run")));
        row.push(get(doc, &format!("{p}.final_val_loss")));
        row.extend(scores(&p));
        rows.push(row);
    }
    for section in ["cv.mean", "cv.std"] {
        let mut row = vec![
            section.replace('.', "_"),
            eta.clone(),
            String::new(),
            String::new(),
            String::new(),
        ];
        row.extend(scores(section));
        rows.push(row);
    }
    let mut row = vec![
        "test".into(),
        eta,
        String::new(),
        get(doc, "final.epochs_run"),
        String::new(),
    ];
    row.extend(scores("final"));
    rows.push(row);
    Ok(rows)
}

pub fn render_csv(doc: &KvDoc) -> Result<String, ReportError> {
    let rows = table_rows(doc)?;
    Ok(rows.iter().map(|r| r.join(",") + "\n").collect())
}

pub fn render_markdown(doc: &KvDoc) -> Result<String, ReportError> {
    let rows = table_rows(doc)?;
    let kind = get(doc, "report.kind");
    let mut out = format!("# {TOOL_NAME} {kind} report\n\n");
    out.push_str(&format!(
        "Dataset: {} rows in, {} after deduplication, {} input features ({} mode).\n\n",
        get(doc, "dataset.rows_in"),
        get(doc, "dataset.rows_after_dedup"),
        get(doc, "dataset.input_features"),
        get(doc, "dataset.mode"),
    ));
    out.push_str(&format!("Initial weights hash: `{}`\n\n", get(doc, "snapshot.hash")));
    let line = |r: &[String]| format!("| {} |\n", r.join(" | "));
    out.push_str(&line(&rows[0]));
    out.push_str(&line(&vec!["---".to_string(); rows[0].len()]));
    for r in &rows[1..] {
        out.push_str(&line(r));
    }
    if kind == "enhanced" {
        out.push_str(&format!(
            "\nBest learning rate: {}. AUC: cross-validation mean {}, held-out test {}.\n",
            get(doc, "grid.best_eta"),
            get(doc, "headline.auc_cv_mean"),
            get(doc, "headline.auc_test"),
        ));
    }
    Ok(out)
}

pub fn render(doc: &KvDoc, format: Format) -> Result<String, ReportError> {
    match format {
        Format::Kv => Ok(doc.render()),
        Format::Csv => render_csv(doc),
        Format::Md => render_markdown(doc),
    }
}
