//! Experiment orchestration: the shared-initialization benchmark across
//! optimizers and the enhanced phase (dropout, early stopping, learning-rate
//! grid, stratified k-fold cross-validation).
//!
//! Every run owns its RNG streams, so runs may execute in parallel and still
//! produce the same reports as a serial execution.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{stratified_folds, DataError, LabeledSet, PreparedData};
use crate::metrics::{
    self, classification_scores, convergence_epoch, ClassificationScores, EpochLog, EpochRecord, MetricsError,
    DEFAULT_THRESHOLD,
};
use crate::network::{
    backward, bce_loss, eval_loss, forward, glorot_init, predict, Mode, NetworkConfig, NetworkError, Params,
};
use crate::optim::{make_state, HyperParams, OptimError, OptimizerKind, OptimizerState};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("every learning rate in the grid diverged")]
    GridDiverged,
    #[error("restored weights hash {found} differs from snapshot {expected}")]
    Reset { expected: String, found: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub init: u64,
    pub shuffle: u64,
    pub dropout: u64,
    pub split: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            init: 42,
            shuffle: 43,
            dropout: 44,
            split: 45,
        }
    }
}

/// How the per-epoch training loss is logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainLossMode {
    /// Mean of the mini-batch losses seen during the epoch.
    #[default]
    BatchMean,
    /// A separate eval-mode pass over the whole training set after the epoch.
    FullPass,
}

impl TrainLossMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainLossMode::BatchMean => "batch-mean",
            TrainLossMode::FullPass => "full-pass",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "batch-mean" => Some(TrainLossMode::BatchMean),
            "full-pass" => Some(TrainLossMode::FullPass),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedConfig {
    pub dropout_rate: f64,
    pub patience: usize,
    pub lr_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for EnhancedConfig {
    fn default() -> Self {
        EnhancedConfig {
            dropout_rate: 0.2,
            patience: 15,
            lr_grid: vec![0.001, 0.01, 0.1],
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub hp: HyperParams,
}

impl OptimizerSpec {
    pub fn defaults(kind: OptimizerKind) -> Self {
        OptimizerSpec {
            kind,
            hp: HyperParams::defaults(kind),
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.hp.learning_rate = lr;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Seeds,
    pub optimizers: Vec<OptimizerSpec>,
    pub enhanced: EnhancedConfig,
    pub train_loss: TrainLossMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            epochs: 50,
            batch_size: 32,
            seeds: Seeds::default(),
            optimizers: OptimizerKind::ALL.iter().map(|&k| OptimizerSpec::defaults(k)).collect(),
            enhanced: EnhancedConfig::default(),
            train_loss: TrainLossMode::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if self.enhanced.lr_grid.is_empty() {
            return bad("lr_grid must not be empty".into());
        }
        if let Some(lr) = self.enhanced.lr_grid.iter().find(|lr| !(lr.is_finite() && **lr > 0.0)) {
            return bad(format!("lr_grid entry {lr} must be positive"));
        }
        if self.enhanced.folds < 2 {
            return bad("folds must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.enhanced.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.enhanced.dropout_rate));
        }
        for spec in &self.optimizers {
            spec.hp
                .validate()
                .map_err(|e| HarnessError::Config(format!("{}: {e}", spec.kind)))?;
        }
        Ok(())
    }

    /// Looks up the configured hyperparameters for `kind`, falling back to
    /// the defaults when the kind is not in the optimizer list.
    pub fn spec_for(&self, kind: OptimizerKind) -> OptimizerSpec {
        self.optimizers
            .iter()
            .copied()
            .find(|s| s.kind == kind)
            .unwrap_or_else(|| OptimizerSpec::defaults(kind))
    }
}

/// Frozen initial parameters and their content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    bytes: Vec<u8>,
    hash: String,
}

impl Snapshot {
    pub fn from_params(params: &Params) -> Self {
        Snapshot {
            bytes: params.to_bytes(),
            hash: params.content_hash(),
        }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn restore(&self) -> Params {
        Params::from_bytes(&self.bytes).expect("snapshot bytes are produced by Params::to_bytes")
    }
}

/// Glorot-initialised hourglass network for `input_dim` features.
pub fn snapshot_init(seed: u64, input_dim: usize) -> Result<Snapshot, HarnessError> {
    let params = glorot_init(&NetworkConfig::with_input_dim(input_dim), seed)?;
    Ok(Snapshot::from_params(&params))
}

/// Derived seed for the `fold`-th cross-validation initialisation.
pub fn fold_seed(init_seed: u64, fold: usize) -> u64 {
    init_seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub restore_best: bool,
}

/// Per-run training settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub dropout_seed: u64,
    pub dropout_rate: f64,
    pub early_stopping: Option<EarlyStopping>,
    pub train_loss: TrainLossMode,
}

impl RunSettings {
    /// Plain benchmark run: no dropout, no early stopping.
    pub fn benchmark(cfg: &ExperimentConfig) -> Self {
        RunSettings {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            shuffle_seed: cfg.seeds.shuffle,
            dropout_seed: cfg.seeds.dropout,
            dropout_rate: 0.0,
            early_stopping: None,
            train_loss: cfg.train_loss,
        }
    }

    /// Enhanced run: dropout plus early stopping that restores the best weights.
    pub fn enhanced(cfg: &ExperimentConfig) -> Self {
        RunSettings {
            dropout_rate: cfg.enhanced.dropout_rate,
            early_stopping: Some(EarlyStopping {
                patience: cfg.enhanced.patience,
                restore_best: true,
            }),
            ..Self::benchmark(cfg)
        }
    }
}

/// A model the epoch loop can drive. [`drive`] owns the early-stopping and
/// divergence logic so it can be exercised with scripted models.
pub trait EpochModel {
    type Checkpoint;

    /// Runs training epoch `epoch` (0-based) and returns its training loss.
    fn train_epoch(&mut self, epoch: usize) -> Result<f64, HarnessError>;
    /// Validation loss and, when available, validation scores.
    fn validate(&mut self) -> Result<(f64, Option<ClassificationScores>), HarnessError>;
    fn checkpoint(&self) -> Self::Checkpoint;
    fn restore(&mut self, checkpoint: Self::Checkpoint);
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveOutcome {
    pub log: EpochLog,
    /// Epoch whose validation loss was lowest (earliest on ties).
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Runs up to `epochs` epochs. With early stopping, halts once `patience`
/// consecutive epochs bring no new validation-loss minimum, and optionally
/// restores the weights of the best epoch.
pub fn drive<M: EpochModel>(
    model: &mut M,
    epochs: usize,
    early: Option<EarlyStopping>,
) -> Result<DriveOutcome, HarnessError> {
    let mut log = EpochLog::default();
    let mut best: Option<(usize, f64)> = None;
    let mut best_checkpoint = None;
    let mut waited = 0;
    let mut stopped_early = false;
    for epoch in 0..epochs {
        let train_loss = model.train_epoch(epoch)?;
        let (validation_loss, validation_scores) = model.validate()?;
        if !train_loss.is_finite() || !validation_loss.is_finite() {
            return Err(HarnessError::Diverged { epoch });
        }
        log.push(EpochRecord {
            train_loss,
            validation_loss,
            validation_scores,
        });
        if best.is_none_or(|(_, b)| validation_loss < b) {
            best = Some((epoch, validation_loss));
            waited = 0;
            if early.is_some_and(|e| e.restore_best) {
                best_checkpoint = Some(model.checkpoint());
            }
        } else {
            waited += 1;
        }
        if let Some(e) = early {
            if waited >= e.patience {
                stopped_early = epoch + 1 < epochs;
                break;
            }
        }
    }
    if let Some(c) = best_checkpoint {
        model.restore(c);
    }
    Ok(DriveOutcome {
        log,
        best_epoch: best.map(|(e, _)| e),
        stopped_early,
    })
}

struct MlpRun<'a> {
    params: Params,
    state: OptimizerState,
    hp: HyperParams,
    train: &'a LabeledSet,
    validation: &'a LabeledSet,
    settings: RunSettings,
    dropout_rng: ChaCha8Rng,
}

/// Training-row order for `epoch`: a permutation drawn from the shuffle seed
/// on an epoch-specific stream.
pub fn epoch_order(n: usize, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

impl EpochModel for MlpRun<'_> {
    type Checkpoint = Params;

    fn train_epoch(&mut self, epoch: usize) -> Result<f64, HarnessError> {
        let order = epoch_order(self.train.len(), self.settings.shuffle_seed, epoch);
        let mut losses = Vec::with_capacity(order.len().div_ceil(self.settings.batch_size));
        for chunk in order.chunks(self.settings.batch_size) {
            let batch = self.train.select(chunk);
            // Nesterov needs the gradient at the look-ahead point; for every
            // other rule this is the current parameters.
            let at = self.state.lookahead(&self.hp, &self.params)?;
            let trace = forward(
                &at,
                &batch.x,
                Mode::Train,
                self.settings.dropout_rate,
                &mut self.dropout_rng,
            )?;
            let loss = bce_loss(&batch.y, trace.predictions())?;
            if !loss.is_finite() {
                return Err(HarnessError::Diverged { epoch });
            }
            let grads = backward(&at, &trace, &batch.y)?;
            self.state.step(&self.hp, &mut self.params, &grads)?;
            losses.push(loss);
        }
        if !self.params.is_finite() {
            return Err(HarnessError::Diverged { epoch });
        }
        Ok(match self.settings.train_loss {
            TrainLossMode::BatchMean => metrics::mean(&losses),
            TrainLossMode::FullPass => eval_loss(&self.params, &self.train.x, &self.train.y)?,
        })
    }

    fn validate(&mut self) -> Result<(f64, Option<ClassificationScores>), HarnessError> {
        let y_hat = predict(&self.params, &self.validation.x)?;
        let loss = bce_loss(&self.validation.y, &y_hat)?;
        let scores = if loss.is_finite() {
            classification_scores(&self.validation.y, &y_hat, DEFAULT_THRESHOLD).ok()
        } else {
            None
        };
        Ok((loss, scores))
    }

    fn checkpoint(&self) -> Params {
        self.params.clone()
    }

    fn restore(&mut self, checkpoint: Params) {
        self.params = checkpoint;
    }
}

/// Outcome of one training run. Summary fields are derived from the epoch
/// log and the evaluation-set predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub kind: OptimizerKind,
    pub hp: HyperParams,
    /// Hash of the weights the run started from.
    pub init_hash: String,
    pub final_params_hash: String,
    pub log: EpochLog,
    pub final_train_loss: f64,
    pub final_validation_loss: f64,
    pub convergence_epoch: Option<usize>,
    /// Sample std of validation losses; needs at least two epochs.
    pub stability: Option<f64>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub eval_predictions: Vec<f64>,
    pub eval: ClassificationScores,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn epochs_run(&self) -> usize {
        self.log.len()
    }
}

/// Trains from `init` with one optimizer, then scores the final weights on
/// `eval`. With early stopping and `restore_best`, the final weights and
/// final losses are those of the best epoch.
pub fn train_run(
    init: &Snapshot,
    spec: &OptimizerSpec,
    train: &LabeledSet,
    validation: &LabeledSet,
    eval: &LabeledSet,
    settings: &RunSettings,
) -> Result<RunReport, HarnessError> {
    let started = Instant::now();
    if settings.batch_size == 0 {
        return Err(HarnessError::Config("batch_size must be at least 1".into()));
    }
    if train.is_empty() || validation.is_empty() || eval.is_empty() {
        return Err(HarnessError::Config(
            "train, validation and evaluation sets must be non-empty".into(),
        ));
    }
    spec.hp.validate()?;

    let params = init.restore();
    let init_hash = params.content_hash();
    if init_hash != init.hash() {
        return Err(HarnessError::Reset {
            expected: init.hash().to_string(),
            found: init_hash,
        });
    }
    let mut run = MlpRun {
        state: make_state(spec.kind, &params.shapes()),
        params,
        hp: spec.hp,
        train,
        validation,
        settings: *settings,
        dropout_rng: ChaCha8Rng::seed_from_u64(settings.dropout_seed),
    };
    let outcome = drive(&mut run, settings.epochs, settings.early_stopping)?;

    let restored = settings.early_stopping.is_some_and(|e| e.restore_best);
    let pick = match (restored, outcome.best_epoch) {
        (true, Some(b)) => Some(b),
        _ => outcome.log.len().checked_sub(1),
    };
    let (final_train_loss, final_validation_loss) = match pick {
        Some(i) => (outcome.log.epochs[i].train_loss, outcome.log.epochs[i].validation_loss),
        None => (
            eval_loss(&run.params, &train.x, &train.y)?,
            eval_loss(&run.params, &validation.x, &validation.y)?,
        ),
    };
    let eval_predictions = predict(&run.params, &eval.x)?;
    let scores = classification_scores(&eval.y, &eval_predictions, DEFAULT_THRESHOLD)?;
    Ok(RunReport {
        kind: spec.kind,
        hp: spec.hp,
        init_hash,
        final_params_hash: run.params.content_hash(),
        convergence_epoch: convergence_epoch(&outcome.log),
        stability: metrics::stability(&outcome.log).ok(),
        final_train_loss,
        final_validation_loss,
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        log: outcome.log,
        eval_predictions,
        eval: scores,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One configured optimizer and what became of its run.
#[derive(Debug)]
pub struct RunOutcome {
    pub spec: OptimizerSpec,
    pub result: Result<RunReport, HarnessError>,
}

#[derive(Debug)]
pub struct BenchmarkResult {
    pub snapshot_hash: String,
    pub runs: Vec<RunOutcome>,
}

impl BenchmarkResult {
    pub fn all_succeeded(&self) -> bool {
        self.runs.iter().all(|r| r.result.is_ok())
    }
}

/// Trains every configured optimizer from one shared snapshot on the
/// training split, monitors the validation split and scores the test split.
/// A failing run does not abort the others.
pub fn run_benchmark(data: &PreparedData, cfg: &ExperimentConfig) -> Result<BenchmarkResult, HarnessError> {
    cfg.validate()?;
    if cfg.optimizers.is_empty() {
        return Err(HarnessError::Config("no optimizers configured".into()));
    }
    let snapshot = snapshot_init(cfg.seeds.init, data.dataset.x.cols())?;
    let (train, validation, test) = (data.train(), data.validation(), data.test());
    let settings = RunSettings::benchmark(cfg);
    let runs = cfg
        .optimizers
        .par_iter()
        .map(|spec| RunOutcome {
            spec: *spec,
            result: train_run(&snapshot, spec, &train, &validation, &test, &settings),
        })
        .collect();
    Ok(BenchmarkResult {
        snapshot_hash: snapshot.hash().to_string(),
        runs,
    })
}

/// Quantity a grid search minimises.
pub trait GridScore {
    fn selection_loss(&self) -> f64;
}

impl GridScore for RunReport {
    fn selection_loss(&self) -> f64 {
        self.final_validation_loss
    }
}

impl GridScore for f64 {
    fn selection_loss(&self) -> f64 {
        *self
    }
}

#[derive(Debug)]
pub struct GridResult<R> {
    pub best_rate: f64,
    pub best_index: usize,
    pub entries: Vec<(f64, Result<R, HarnessError>)>,
}

/// Runs `runner` once per rate and picks the lowest selection loss; ties go
/// to the lower rate. Diverged rates are skipped.
pub fn grid_search<R, F>(grid: &[f64], runner: F) -> Result<GridResult<R>, HarnessError>
where
    R: GridScore + Send,
    F: Fn(f64) -> Result<R, HarnessError> + Sync,
{
    if grid.is_empty() {
        return Err(HarnessError::Config("lr_grid must not be empty".into()));
    }
    let entries: Vec<(f64, Result<R, HarnessError>)> = grid.par_iter().map(|&lr| (lr, runner(lr))).collect();
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, (lr, r)) in entries.iter().enumerate() {
        let Ok(r) = r else { continue };
        let loss = r.selection_loss();
        if !loss.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b_lr, b_loss)) => loss < b_loss || (loss == b_loss && *lr < b_lr),
        };
        if better {
            best = Some((i, *lr, loss));
        }
    }
    let (best_index, best_rate, _) = best.ok_or(HarnessError::GridDiverged)?;
    Ok(GridResult {
        best_rate,
        best_index,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub validation_rows: usize,
    pub train_rows: usize,
    pub init_seed: u64,
    pub run: RunReport,
}

#[derive(Debug)]
pub struct CvReport {
    pub learning_rate: f64,
    pub folds: Vec<FoldReport>,
    pub mean: ClassificationScores,
    pub std: ClassificationScores,
    /// Epoch budget of the final retrain on the whole pool.
    pub final_epochs: usize,
    pub final_run: RunReport,
}

fn summarise(scores: &[ClassificationScores]) -> Result<(ClassificationScores, ClassificationScores), HarnessError> {
    let pick = |f: fn(&ClassificationScores) -> f64| scores.iter().map(f).collect::<Vec<f64>>();
    let (p, r, a) = (pick(|s| s.precision), pick(|s| s.recall), pick(|s| s.auc));
    Ok((
        ClassificationScores {
            precision: metrics::mean(&p),
            recall: metrics::mean(&r),
            auc: metrics::mean(&a),
        },
        ClassificationScores {
            precision: metrics::sample_std(&p)?,
            recall: metrics::sample_std(&r)?,
            auc: metrics::sample_std(&a)?,
        },
    ))
}

/// Stratified k-fold cross-validation over the train+validation pool. Each
/// fold starts from a fresh initialisation, trains with dropout and early
/// stopping, and is scored on its held-out fold. A final model is then
/// retrained on the whole pool for the mean best-epoch count and scored once
/// on the test split.
pub fn cross_validate(
    data: &PreparedData,
    spec: &OptimizerSpec,
    cfg: &ExperimentConfig,
) -> Result<CvReport, HarnessError> {
    cfg.validate()?;
    let pool = data.splits.pool();
    let folds = stratified_folds(&pool, &data.dataset.y, cfg.enhanced.folds, cfg.seeds.split)?;
    let settings = RunSettings::enhanced(cfg);
    let input_dim = data.dataset.x.cols();

    let fold_reports: Vec<FoldReport> = folds
        .par_iter()
        .enumerate()
        .map(|(k, held_out)| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let train = data.dataset.subset(&train_idx);
            let validation = data.dataset.subset(held_out);
            let seed = fold_seed(cfg.seeds.init, k);
            let init = snapshot_init(seed, input_dim)?;
            let run = train_run(&init, spec, &train, &validation, &validation, &settings)?;
            Ok(FoldReport {
                fold: k,
                validation_rows: held_out.len(),
                train_rows: train_idx.len(),
                init_seed: seed,
                run,
            })
        })
        .collect::<Result<_, HarnessError>>()?;

    let scores: Vec<ClassificationScores> = fold_reports.iter().map(|f| f.run.eval).collect();
    let (mean, std) = summarise(&scores)?;

    let best_epochs: Vec<f64> = fold_reports
        .iter()
        .map(|f| f.run.best_epoch.map_or(f.run.epochs_run(), |b| b + 1) as f64)
        .collect();
    let final_epochs = (metrics::mean(&best_epochs).round() as usize).max(1);
    // No data is left for early stopping, so the pool doubles as the
    // monitored set and the budget comes from the folds.
    let full = data.dataset.subset(&pool);
    let final_settings = RunSettings {
        epochs: final_epochs,
        early_stopping: None,
        ..settings
    };
    let init = snapshot_init(cfg.seeds.init, input_dim)?;
    let final_run = train_run(&init, spec, &full, &full, &data.test(), &final_settings)?;

    Ok(CvReport {
        learning_rate: spec.hp.learning_rate,
        folds: fold_reports,
        mean,
        std,
        final_epochs,
        final_run,
    })
}

#[derive(Debug)]
pub struct EnhancedReport {
    pub kind: OptimizerKind,
    pub snapshot_hash: String,
    pub grid: GridResult<RunReport>,
    pub cv: CvReport,
}

/// Learning-rate grid (dropout and early stopping, scored on the validation
/// split) followed by cross-validation at the winning rate.
pub fn run_enhanced(
    data: &PreparedData,
    kind: OptimizerKind,
    cfg: &ExperimentConfig,
) -> Result<EnhancedReport, HarnessError> {
    cfg.validate()?;
    let base = cfg.spec_for(kind);
    let snapshot = snapshot_init(cfg.seeds.init, data.dataset.x.cols())?;
    let (train, validation) = (data.train(), data.validation());
    let settings = RunSettings::enhanced(cfg);
    let grid = grid_search(&cfg.enhanced.lr_grid, |lr| {
        train_run(
            &snapshot,
            &base.with_learning_rate(lr),
            &train,
            &validation,
            &validation,
            &settings,
        )
    })?;
    let cv = cross_validate(data, &base.with_learning_rate(grid.best_rate), cfg)?;
    Ok(EnhancedReport {
        kind,
        snapshot_hash: snapshot.hash().to_string(),
        grid,
        cv,
    })
}
