//! Experiment configuration files: `key = value` lines with dotted sections.
//!
//! ```text
//! epochs = 50
//! optimizers = sgd,adam
//! optim.adam.eta = 0.001
//! enhanced.lr_grid = 0.001,0.01,0.1
//! ```

use std::path::Path;

use optbench_core::harness::{ExperimentConfig, OptimizerSpec, TrainLossMode};
use optbench_core::kv::{parse_entry, parse_list_entry, Entry, KvDoc, KvError};
use optbench_core::optim::{HyperParams, OptimizerKind};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {0}")]
    Syntax(#[from] KvError),
}

fn at(e: &Entry, message: String) -> ConfigError {
    ConfigError::Syntax(KvError::new(e.line, message))
}

fn set_hyper(hp: &mut HyperParams, field: &str, e: &Entry) -> Result<(), ConfigError> {
    match field {
        "eta" => hp.learning_rate = parse_entry(e)?,
        "beta1" => hp.beta1 = parse_entry(e)?,
        "beta2" => hp.beta2 = parse_entry(e)?,
        "rho" => hp.rho = parse_entry(e)?,
        "mu" => hp.momentum = parse_entry(e)?,
        "epsilon" => hp.epsilon = parse_entry(e)?,
        "lambda" => hp.weight_decay = parse_entry(e)?,
        "canonical" => hp.canonical = parse_entry(e)?,
        other => return Err(at(e, format!("unknown optimizer field {other:?}"))),
    }
    Ok(())
}

/// Parses a configuration; keys absent from the text keep their defaults.
/// Hyperparameter sections may name any optimizer kind; only kinds in the
/// `optimizers` list are run by the benchmark.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, Vec<OptimizerSpec>), ConfigError> {
    let doc = KvDoc::parse(text)?;
    let mut cfg = ExperimentConfig::default();
    let mut specs: Vec<OptimizerSpec> = OptimizerKind::ALL.iter().map(|&k| OptimizerSpec::defaults(k)).collect();
    let mut order: Option<Vec<OptimizerKind>> = None;

    for e in doc.entries() {
        let key = e.key.as_str();
        match key {
            "epochs" => cfg.epochs = parse_entry(e)?,
            "batch_size" => cfg.batch_size = parse_entry(e)?,
            "train_loss" => {
                cfg.train_loss = TrainLossMode::parse(&e.value).ok_or_else(|| {
                    at(
                        e,
                        format!("train_loss must be batch-mean or full-pass, found {:?}", e.value),
                    )
                })?
            }
            "seed.init" => cfg.seeds.init = parse_entry(e)?,
            "seed.shuffle" => cfg.seeds.shuffle = parse_entry(e)?,
            "seed.dropout" => cfg.seeds.dropout = parse_entry(e)?,
            "seed.split" => cfg.seeds.split = parse_entry(e)?,
            "optimizers" => order = Some(parse_list_entry(e)?),
            "enhanced.dropout" => cfg.enhanced.dropout_rate = parse_entry(e)?,
            "enhanced.patience" => cfg.enhanced.patience = parse_entry(e)?,
            "enhanced.lr_grid" => cfg.enhanced.lr_grid = parse_list_entry(e)?,
            "enhanced.folds" => cfg.enhanced.folds = parse_entry(e)?,
            _ => {
                let Some(rest) = key.strip_prefix("optim.") else {
                    return Err(at(e, format!("unknown key {key:?}")));
                };
                let (kind, field) = rest
                    .split_once('.')
                    .ok_or_else(|| at(e, format!("expected optim.<kind>.<field>, found {key:?}")))?;
                let kind: OptimizerKind = kind.parse().map_err(|err| at(e, format!("{err}")))?;
                let spec = specs.iter_mut().find(|s| s.kind == kind).expect("every kind present");
                set_hyper(&mut spec.hp, field, e)?;
            }
        }
    }
    let order = order.unwrap_or_else(|| OptimizerKind::ALL.to_vec());
    cfg.optimizers = order
        .iter()
        .map(|k| *specs.iter().find(|s| s.kind == *k).expect("every kind present"))
        .collect();
    cfg.validate().map_err(|e| KvError::new(0, e.to_string()))?;
    Ok((cfg, specs))
}

pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<OptimizerSpec>), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

fn push_hyper(doc: &mut KvDoc, prefix: &str, spec: &OptimizerSpec) {
    let p = format!("{prefix}optim.{}", spec.kind);
    let hp = &spec.hp;
    doc.push_f64(format!("{p}.eta"), hp.learning_rate);
    doc.push_f64(format!("{p}.beta1"), hp.beta1);
    doc.push_f64(format!("{p}.beta2"), hp.beta2);
    doc.push_f64(format!("{p}.rho"), hp.rho);
    doc.push_f64(format!("{p}.mu"), hp.momentum);
    doc.push_f64(format!("{p}.epsilon"), hp.epsilon);
    doc.push_f64(format!("{p}.lambda"), hp.weight_decay);
    doc.push(format!("{p}.canonical"), hp.canonical);
}

/// Writes every setting of `cfg` under `prefix`. Parsing the echo (with the
/// prefix stripped) yields `cfg` again.
pub fn echo_config(doc: &mut KvDoc, prefix: &str, cfg: &ExperimentConfig) {
    doc.push(format!("{prefix}epochs"), cfg.epochs);
    doc.push(format!("{prefix}batch_size"), cfg.batch_size);
    doc.push(format!("{prefix}train_loss"), cfg.train_loss.name());
    doc.push(format!("{prefix}seed.init"), cfg.seeds.init);
    doc.push(format!("{prefix}seed.shuffle"), cfg.seeds.shuffle);
    doc.push(format!("{prefix}seed.dropout"), cfg.seeds.dropout);
    doc.push(format!("{prefix}seed.split"), cfg.seeds.split);
    let kinds: Vec<&str> = cfg.optimizers.iter().map(|s| s.kind.name()).collect();
    doc.push_list(format!("{prefix}optimizers"), &kinds);
    let mut seen = Vec::new();
    for spec in &cfg.optimizers {
        if !seen.contains(&spec.kind) {
            seen.push(spec.kind);
            push_hyper(doc, prefix, spec);
        }
    }
    doc.push_f64(format!("{prefix}enhanced.dropout"), cfg.enhanced.dropout_rate);
    doc.push(format!("{prefix}enhanced.patience"), cfg.enhanced.patience);
    doc.push_f64_list(format!("{prefix}enhanced.lr_grid"), &cfg.enhanced.lr_grid);
    doc.push(format!("{prefix}enhanced.folds"), cfg.enhanced.folds);
}

/// Standalone config text for `cfg`.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let mut doc = KvDoc::new();
    echo_config(&mut doc, "", cfg);
    doc.render()
}
