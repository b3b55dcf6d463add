//! CSV ingestion and preprocessing for the heart-disease table.
//!
//! Pipeline stages, in the `paper-faithful` mode order:
//! drop low-variance feature, remove exact duplicates, impute implausible
//! zeros, robust-scale, stratified split. The default leakage-safe order
//! splits before scaling and fits the scaler on training rows only.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::kv::{KvDoc, KvError};
use crate::matrix::Matrix;

/// Column names of the input CSV, in file order.
pub const FEATURE_NAMES: [&str; 12] = [
    "age",
    "sex",
    "chest pain type",
    "resting bp s",
    "cholesterol",
    "fasting blood sugar",
    "resting ecg",
    "max heart rate",
    "exercise angina",
    "oldpeak",
    "ST slope",
    "target",
];

pub const TARGET: &str = "target";
pub const LOW_VARIANCE_FEATURE: &str = "fasting blood sugar";
pub const ZERO_IMPUTED: [&str; 2] = ["cholesterol", "resting bp s"];

const DATASET_MAGIC: &[u8; 4] = b"OBDS";
const SIDECAR_FORMAT: &str = "optbench-dataset-1";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("line {line}, column {column:?}: cannot parse {value:?} as a number")]
    Parse { line: usize, column: String, value: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("imputation error: {0}")]
    Imputation(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("fold error: {0}")]
    Fold(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("dataset file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("sidecar: {0}")]
    Sidecar(#[from] KvError),
}

/// A parsed CSV: header plus numeric rows of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }
}

pub fn load_csv(path: &Path) -> Result<RawTable, DataError> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_csv(&text)
}

/// Parses CSV text whose header must equal [`FEATURE_NAMES`].
pub fn parse_csv(text: &str) -> Result<RawTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header != FEATURE_NAMES {
        return Err(DataError::Header {
            expected: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            found: header,
        });
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(DataError::Malformed {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(header.len());
        for (cell, name) in record.iter().zip(&header) {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataError::Parse {
                    line,
                    column: name.clone(),
                    value: cell.to_string(),
                })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(RawTable { header, rows })
}

pub fn drop_feature(table: &RawTable, name: &str) -> Result<RawTable, DataError> {
    let c = table
        .column_index(name)
        .ok_or_else(|| DataError::Config(format!("no column named {name:?}")))?;
    let mut header = table.header.clone();
    header.remove(c);
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.remove(c);
            r
        })
        .collect();
    Ok(RawTable { header, rows })
}

/// Removes bitwise-identical rows, keeping first occurrences in order.
pub fn deduplicate(table: &RawTable) -> RawTable {
    let mut seen = HashSet::with_capacity(table.rows.len());
    let rows = table
        .rows
        .iter()
        .filter(|r| seen.insert(r.iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .cloned()
        .collect();
    RawTable {
        header: table.header.clone(),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImputeMode {
    /// Mean of the column's non-zero entries.
    #[default]
    NonZeroMean,
    /// Mean of the whole column, zeros included.
    LiteralMean,
}

impl ImputeMode {
    pub fn name(self) -> &'static str {
        match self {
            ImputeMode::NonZeroMean => "nonzero-mean",
            ImputeMode::LiteralMean => "literal-mean",
        }
    }
}

impl FromStr for ImputeMode {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "nonzero-mean" => Ok(ImputeMode::NonZeroMean),
            "literal-mean" => Ok(ImputeMode::LiteralMean),
            other => Err(DataError::Config(format!("unknown imputation mode {other:?}"))),
        }
    }
}

/// Replaces zeros in `columns` by a mean computed before any replacement.
/// Returns the new table and the number of cells replaced per column.
pub fn impute_zeros_with_mean(
    table: &RawTable,
    columns: &[&str],
    mode: ImputeMode,
) -> Result<(RawTable, Vec<usize>), DataError> {
    let mut out = table.clone();
    let mut replaced = Vec::with_capacity(columns.len());
    for &name in columns {
        let c = table
            .column_index(name)
            .ok_or_else(|| DataError::Config(format!("no column named {name:?}")))?;
        let values: Vec<f64> = table.rows.iter().map(|r| r[c]).collect();
        let nonzero: Vec<f64> = values.iter().copied().filter(|&v| v != 0.0).collect();
        if nonzero.is_empty() {
            if values.is_empty() {
                replaced.push(0);
                continue;
            }
            return Err(DataError::Imputation(format!("column {name:?} is entirely zero")));
        }
        let fill = match mode {
            ImputeMode::NonZeroMean => nonzero.iter().sum::<f64>() / nonzero.len() as f64,
            ImputeMode::LiteralMean => values.iter().sum::<f64>() / values.len() as f64,
        };
        let mut count = 0;
        for r in &mut out.rows {
            if r[c] == 0.0 {
                r[c] = fill;
                count += 1;
            }
        }
        replaced.push(count);
    }
    Ok((out, replaced))
}

/// Per-feature robust-scaling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub medians: Vec<f64>,
    pub iqrs: Vec<f64>,
    /// Features whose IQR was zero; they are centred but divided by 1.
    pub zero_iqr: Vec<usize>,
}

impl ScalerParams {
    pub fn fit(x: &Matrix, fit_rows: &[usize]) -> Result<Self, DataError> {
        if fit_rows.is_empty() {
            return Err(DataError::Config("robust scaling needs at least one row".into()));
        }
        let mut medians = Vec::with_capacity(x.cols());
        let mut iqrs = Vec::with_capacity(x.cols());
        let mut zero_iqr = Vec::new();
        for c in 0..x.cols() {
            let mut col: Vec<f64> = fit_rows.iter().map(|&r| x.get(r, c)).collect();
            col.sort_by(f64::total_cmp);
            let q1 = quantile_sorted(&col, 0.25);
            let q3 = quantile_sorted(&col, 0.75);
            medians.push(quantile_sorted(&col, 0.5));
            let iqr = q3 - q1;
            if iqr == 0.0 {
                zero_iqr.push(c);
                iqrs.push(1.0);
            } else {
                iqrs.push(iqr);
            }
        }
        Ok(ScalerParams {
            medians,
            iqrs,
            zero_iqr,
        })
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.medians[c]) / self.iqrs[c];
            }
        }
        out
    }
}

/// Linear-interpolation quantile of ascending `sorted` values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Fits robust scaling on `fit_rows` and applies it to every row of `x`.
pub fn robust_scale(x: &Matrix, fit_rows: &[usize]) -> Result<(Matrix, ScalerParams), DataError> {
    let params = ScalerParams::fit(x, fit_rows)?;
    Ok((params.apply(x), params))
}

/// Features, labels and provenance of a preprocessed table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub scaler: Option<ScalerParams>,
}

impl Dataset {
    /// Splits `table` into features and the `target` label column.
    pub fn from_table(table: &RawTable) -> Result<Self, DataError> {
        let t = table
            .column_index(TARGET)
            .ok_or_else(|| DataError::Config("table has no target column".into()))?;
        let feature_names: Vec<String> = table
            .header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != t)
            .map(|(_, h)| h.clone())
            .collect();
        let mut data = Vec::with_capacity(table.rows.len() * feature_names.len());
        let mut y = Vec::with_capacity(table.rows.len());
        for (i, r) in table.rows.iter().enumerate() {
            let label = r[t];
            if label != 0.0 && label != 1.0 {
                return Err(DataError::Label(format!("row {i}: target {label} is not 0 or 1")));
            }
            y.push(label);
            data.extend(r.iter().enumerate().filter(|&(c, _)| c != t).map(|(_, v)| *v));
        }
        let x = Matrix::from_vec(table.rows.len(), feature_names.len(), data).expect("row widths checked by parser");
        Ok(Dataset {
            x,
            y,
            feature_names,
            scaler: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Rows of a dataset materialised for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn concat(&self, other: &LabeledSet) -> LabeledSet {
        assert_eq!(self.x.cols(), other.x.cols());
        let mut data = self.x.as_slice().to_vec();
        data.extend_from_slice(other.x.as_slice());
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        LabeledSet {
            x: Matrix::from_vec(self.len() + other.len(), self.x.cols(), data).unwrap(),
            y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub negative: usize,
    pub positive: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.negative + self.positive
    }
}

pub fn class_distribution(y: &[f64]) -> ClassCounts {
    let positive = y.iter().filter(|&&v| v == 1.0).count();
    ClassCounts {
        negative: y.len() - positive,
        positive,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    /// Fraction of the training portion held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.30,
            validation_fraction: 0.20,
            seed: 0,
            stratified: true,
        }
    }
}

/// Row indices of the three parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Training and validation rows together.
    pub fn pool(&self) -> Vec<usize> {
        let mut p = self.train.clone();
        p.extend_from_slice(&self.validation);
        p
    }
}

/// Stratified train/validation/test partition. Per class, the test share is
/// `round(n_c * test_fraction)` and the validation share is
/// `round(rest * validation_fraction)`; part order is shuffled by `seed`.
pub fn stratified_split(y: &[f64], spec: &SplitSpec) -> Result<Splits, DataError> {
    for (name, f) in [
        ("test_fraction", spec.test_fraction),
        ("validation_fraction", spec.validation_fraction),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(DataError::Config(format!("{name} {f} outside (0, 1)")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let counts = class_distribution(y);
        for (label, n) in [(0, counts.negative), (1, counts.positive)] {
            if n < 3 {
                return Err(DataError::Split(format!("class {label} has only {n} samples")));
            }
        }
        [0.0, 1.0]
            .iter()
            .map(|&c| (0..y.len()).filter(|&i| y[i] == c).collect())
            .collect()
    } else {
        if y.len() < 3 {
            return Err(DataError::Split(format!("only {} samples", y.len())));
        }
        vec![(0..y.len()).collect()]
    };

    let mut splits = Splits {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for mut members in groups {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_test = (n as f64 * spec.test_fraction).round() as usize;
        let n_val = ((n - n_test) as f64 * spec.validation_fraction).round() as usize;
        splits.test.extend_from_slice(&members[..n_test]);
        splits.validation.extend_from_slice(&members[n_test..n_test + n_val]);
        splits.train.extend_from_slice(&members[n_test + n_val..]);
    }
    splits.train.shuffle(&mut rng);
    splits.validation.shuffle(&mut rng);
    splits.test.shuffle(&mut rng);
    Ok(splits)
}

/// Stratified k-fold partition of `pool` (indices into `y`). Each class is
/// shuffled and dealt round-robin, continuing the count across classes, so
/// fold sizes differ by at most one with the larger folds first.
pub fn stratified_folds(pool: &[usize], y: &[f64], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, DataError> {
    if folds < 2 {
        return Err(DataError::Config(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut counter = 0usize;
    for class in [0.0, 1.0] {
        let mut members: Vec<usize> = pool.iter().copied().filter(|&i| y[i] == class).collect();
        if members.len() < folds {
            return Err(DataError::Fold(format!(
                "class {class} has {} samples, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            out[counter % folds].push(i);
            counter += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PipelineMode {
    /// Split first, then fit the scaler on training rows only.
    #[default]
    LeakageSafe,
    /// Scale with statistics from every row, then split.
    PaperFaithful,
}

impl PipelineMode {
    pub fn name(self) -> &'static str {
        match self {
            PipelineMode::LeakageSafe => "leakage-safe",
            PipelineMode::PaperFaithful => "paper-faithful",
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineMode {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "leakage-safe" => Ok(PipelineMode::LeakageSafe),
            "paper-faithful" => Ok(PipelineMode::PaperFaithful),
            other => Err(DataError::Config(format!(
                "unknown mode {other:?} (expected leakage-safe or paper-faithful)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub mode: PipelineMode,
    pub impute: ImputeMode,
    pub split: SplitSpec,
}

impl PipelineOptions {
    pub fn new(mode: PipelineMode, seed: u64) -> Self {
        PipelineOptions {
            mode,
            impute: ImputeMode::default(),
            split: SplitSpec {
                seed,
                ..SplitSpec::default()
            },
        }
    }
}

/// Row and column counts observed at each stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineReport {
    pub rows_in: usize,
    pub columns_in: usize,
    pub rows_after_drop: usize,
    pub columns_after_drop: usize,
    pub duplicates_removed: usize,
    pub rows_after_dedup: usize,
    /// `(column, cells replaced)` for each imputed column.
    pub zeros_imputed: Vec<(String, usize)>,
    pub classes: ClassCounts,
    pub train: ClassCounts,
    pub validation: ClassCounts,
    pub test: ClassCounts,
    pub zero_iqr_features: Vec<String>,
}

impl PipelineReport {
    /// Human-readable stage summary, one fact per line.
    pub fn lines(&self, mode: PipelineMode) -> Vec<String> {
        let mut out = vec![
            format!("mode: {mode}"),
            format!("rows in: {}", self.rows_in),
            format!("columns in: {}", self.columns_in),
            format!("rows after drop: {}", self.rows_after_drop),
            format!("columns after drop: {}", self.columns_after_drop),
            format!("duplicate rows removed: {}", self.duplicates_removed),
            format!("rows after dedup: {}", self.rows_after_dedup),
        ];
        for (name, n) in &self.zeros_imputed {
            out.push(format!("zeros imputed in {name}: {n}"));
        }
        out.push(format!("input features: {}", self.columns_after_drop - 1));
        for (part, c) in [
            ("all", self.classes),
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        ] {
            out.push(format!(
                "{part}: {} rows (class 0: {}, class 1: {})",
                c.total(),
                c.negative,
                c.positive
            ));
        }
        if !self.zero_iqr_features.is_empty() {
            out.push(format!("zero-IQR features: {}", self.zero_iqr_features.join(", ")));
        }
        out
    }
}

/// The pipeline stage that failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Drop,
    Deduplicate,
    Impute,
    Labels,
    Scale,
    Split,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Drop => "drop",
            Stage::Deduplicate => "deduplicate",
            Stage::Impute => "impute",
            Stage::Labels => "labels",
            Stage::Scale => "scale",
            Stage::Split => "split",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("pipeline stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: DataError,
}

fn at(stage: Stage) -> impl FnOnce(DataError) -> PipelineError {
    move |source| PipelineError { stage, source }
}

/// A scaled dataset with its split and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub dataset: Dataset,
    pub splits: Splits,
    pub report: PipelineReport,
    pub options: PipelineOptions,
}

impl PreparedData {
    pub fn train(&self) -> LabeledSet {
        self.dataset.subset(&self.splits.train)
    }

    pub fn validation(&self) -> LabeledSet {
        self.dataset.subset(&self.splits.validation)
    }

    pub fn test(&self) -> LabeledSet {
        self.dataset.subset(&self.splits.test)
    }
}

pub fn run_pipeline(table: &RawTable, options: &PipelineOptions) -> Result<PreparedData, PipelineError> {
    let mut report = PipelineReport {
        rows_in: table.rows.len(),
        columns_in: table.header.len(),
        ..Default::default()
    };

    let dropped = drop_feature(table, LOW_VARIANCE_FEATURE).map_err(at(Stage::Drop))?;
    report.rows_after_drop = dropped.rows.len();
    report.columns_after_drop = dropped.header.len();

    let deduped = deduplicate(&dropped);
    report.rows_after_dedup = deduped.rows.len();
    report.duplicates_removed = dropped.rows.len() - deduped.rows.len();

    let (imputed, counts) =
        impute_zeros_with_mean(&deduped, &ZERO_IMPUTED, options.impute).map_err(at(Stage::Impute))?;
    report.zeros_imputed = ZERO_IMPUTED.iter().map(|s| s.to_string()).zip(counts).collect();

    let mut dataset = Dataset::from_table(&imputed).map_err(at(Stage::Labels))?;
    report.classes = class_distribution(&dataset.y);

    // The split depends only on labels and seed, so both orders share it;
    // they differ in which rows the scaler sees.
    let splits = stratified_split(&dataset.y, &options.split).map_err(at(Stage::Split))?;
    let fit_rows: Vec<usize> = match options.mode {
        PipelineMode::PaperFaithful => (0..dataset.len()).collect(),
        PipelineMode::LeakageSafe => splits.train.clone(),
    };
    let (scaled, scaler) = robust_scale(&dataset.x, &fit_rows).map_err(at(Stage::Scale))?;
    report.zero_iqr_features = scaler
        .zero_iqr
        .iter()
        .map(|&c| dataset.feature_names[c].clone())
        .collect();
    dataset.x = scaled;
    dataset.scaler = Some(scaler);

    let counts_of = |idx: &[usize]| class_distribution(&idx.iter().map(|&i| dataset.y[i]).collect::<Vec<_>>());
    report.train = counts_of(&splits.train);
    report.validation = counts_of(&splits.validation);
    report.test = counts_of(&splits.test);

    Ok(PreparedData {
        dataset,
        splits,
        report,
        options: options.clone(),
    })
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta");
    PathBuf::from(s)
}

fn key_name(feature: &str) -> String {
    feature.replace(' ', "_")
}

fn dataset_bytes(ds: &Dataset) -> Vec<u8> {
    let cols = ds.x.cols() + 1;
    let mut out = Vec::with_capacity(20 + 8 * ds.len() * cols);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for (r, &label) in ds.y.iter().enumerate() {
        for v in ds.x.row(r) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&label.to_le_bytes());
    }
    out
}

/// Writes the binary feature/label matrix to `path` and a key-value
/// metadata sidecar to `path.meta`. Returns the sidecar path.
pub fn write_dataset(path: &Path, data: &PreparedData) -> Result<PathBuf, DataError> {
    let bytes = dataset_bytes(&data.dataset);
    let meta = sidecar(data, &bytes);
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(path, &bytes).map_err(io)?;
    let meta_path = sidecar_path(path);
    fs::write(&meta_path, meta.render()).map_err(|source| DataError::Io {
        path: meta_path.clone(),
        source,
    })?;
    Ok(meta_path)
}

fn sidecar(data: &PreparedData, bytes: &[u8]) -> KvDoc {
    let ds = &data.dataset;
    let r = &data.report;
    let mut doc = KvDoc::new();
    doc.push("format", SIDECAR_FORMAT);
    doc.push("sha256", hex::encode(Sha256::digest(bytes)));
    doc.push("rows", ds.len());
    doc.push_list("features", &ds.feature_names);
    doc.push("target", TARGET);
    doc.push("mode", data.options.mode);
    doc.push("impute", data.options.impute.name());
    doc.push("seed.split", data.options.split.seed);
    doc.push_f64("split.test_fraction", data.options.split.test_fraction);
    doc.push_f64("split.validation_fraction", data.options.split.validation_fraction);
    if let Some(s) = &ds.scaler {
        doc.push(
            "scaler.fit",
            match data.options.mode {
                PipelineMode::LeakageSafe => "train",
                PipelineMode::PaperFaithful => "all",
            },
        );
        doc.push_f64_list("scaler.median", &s.medians);
        doc.push_f64_list("scaler.iqr", &s.iqrs);
        doc.push_list("scaler.zero_iqr", &s.zero_iqr);
    }
    doc.push("pipeline.rows_in", r.rows_in);
    doc.push("pipeline.columns_in", r.columns_in);
    doc.push("pipeline.rows_after_drop", r.rows_after_drop);
    doc.push("pipeline.columns_after_drop", r.columns_after_drop);
    doc.push("pipeline.duplicates_removed", r.duplicates_removed);
    doc.push("pipeline.rows_after_dedup", r.rows_after_dedup);
    for (name, n) in &r.zeros_imputed {
        doc.push(format!("pipeline.zeros_imputed.{}", key_name(name)), n);
    }
    for (part, c) in [
        ("all", r.classes),
        ("train", r.train),
        ("validation", r.validation),
        ("test", r.test),
    ] {
        doc.push(format!("classes.{part}.negative"), c.negative);
        doc.push(format!("classes.{part}.positive"), c.positive);
    }
    doc.push_list("split.train", &data.splits.train);
    doc.push_list("split.validation", &data.splits.validation);
    doc.push_list("split.test", &data.splits.test);
    doc
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<PreparedData, DataError> {
    let file_err = |message: String| DataError::File {
        path: path.to_path_buf(),
        message,
    };
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let meta_path = sidecar_path(path);
    let meta_text = fs::read_to_string(&meta_path).map_err(|source| DataError::Io {
        path: meta_path.clone(),
        source,
    })?;
    let meta = KvDoc::parse(&meta_text)?;
    if meta.get("format") != Some(SIDECAR_FORMAT) {
        return Err(file_err(format!("unsupported sidecar format {:?}", meta.get("format"))));
    }
    if meta.get("sha256") != Some(hex::encode(Sha256::digest(&bytes)).as_str()) {
        return Err(file_err("checksum does not match sidecar".into()));
    }

    if bytes.len() < 20 || &bytes[..4] != DATASET_MAGIC {
        return Err(file_err("bad magic".into()));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if cols < 2 || bytes.len() != 20 + 8 * rows * cols {
        return Err(file_err(format!("size does not match {rows}x{cols}")));
    }
    let values: Vec<f64> = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let d = cols - 1;
    let mut x = Vec::with_capacity(rows * d);
    let mut y = Vec::with_capacity(rows);
    for r in values.chunks_exact(cols) {
        x.extend_from_slice(&r[..d]);
        y.push(r[d]);
    }

    let feature_names: Vec<String> = meta.parse_list("features")?;
    if feature_names.len() != d {
        return Err(file_err(format!(
            "{} feature names for {d} columns",
            feature_names.len()
        )));
    }
    let mode: PipelineMode = meta.parse_value::<String>("mode")?.parse()?;
    let impute: ImputeMode = meta.parse_value::<String>("impute")?.parse()?;
    let scaler = match meta.get("scaler.median") {
        Some(_) => Some(ScalerParams {
            medians: meta.parse_list("scaler.median")?,
            iqrs: meta.parse_list("scaler.iqr")?,
            zero_iqr: meta.parse_list("scaler.zero_iqr")?,
        }),
        None => None,
    };
    let splits = Splits {
        train: meta.parse_list("split.train")?,
        validation: meta.parse_list("split.validation")?,
        test: meta.parse_list("split.test")?,
    };
    if splits
        .train
        .iter()
        .chain(&splits.validation)
        .chain(&splits.test)
        .any(|&i| i >= rows)
    {
        return Err(file_err("split index out of range".into()));
    }
    let counts = |part: &str| -> Result<ClassCounts, KvError> {
        Ok(ClassCounts {
            negative: meta.parse_value(&format!("classes.{part}.negative"))?,
            positive: meta.parse_value(&format!("classes.{part}.positive"))?,
        })
    };
    let zeros_imputed = ZERO_IMPUTED
        .iter()
        .map(|name| {
            meta.parse_value::<usize>(&format!("pipeline.zeros_imputed.{}", key_name(name)))
                .map(|n| (name.to_string(), n))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let zero_iqr_features = scaler
        .as_ref()
        .map(|s| {
            s.zero_iqr
                .iter()
                .filter_map(|&c| feature_names.get(c).cloned())
                .collect()
        })
        .unwrap_or_default();
    let report = PipelineReport {
        rows_in: meta.parse_value("pipeline.rows_in")?,
        columns_in: meta.parse_value("pipeline.columns_in")?,
        rows_after_drop: meta.parse_value("pipeline.rows_after_drop")?,
        columns_after_drop: meta.parse_value("pipeline.columns_after_drop")?,
        duplicates_removed: meta.parse_value("pipeline.duplicates_removed")?,
        rows_after_dedup: meta.parse_value("pipeline.rows_after_dedup")?,
        zeros_imputed,
        classes: counts("all")?,
        train: counts("train")?,
        validation: counts("validation")?,
        test: counts("test")?,
        zero_iqr_features,
    };
    let options = PipelineOptions {
        mode,
        impute,
        split: SplitSpec {
            test_fraction: meta.parse_value("split.test_fraction")?,
            validation_fraction: meta.parse_value("split.validation_fraction")?,
            seed: meta.parse_value("seed.split")?,
            stratified: true,
        },
    };
    Ok(PreparedData {
        dataset: Dataset {
            x: Matrix::from_vec(rows, d, x).expect("size checked"),
            y,
            feature_names,
            scaler,
        },
        splits,
        report,
        options,
    })
}
