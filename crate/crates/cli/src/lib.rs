//! Command implementations behind the `optbench` binary.

pub mod config;
pub mod plot;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use optbench_core::data::{self, DataError, PipelineMode, PipelineOptions, PreparedData};
use optbench_core::harness::{self, ExperimentConfig, OptimizerSpec};
use optbench_core::kv::KvDoc;
use optbench_core::optim::OptimizerKind;

use crate::config::{load_config, ConfigError};
use crate::plot::{line_chart, Series};
use crate::report::Format;

/// Exit code for unreadable inputs and invalid configuration.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for runtime failures, including diverged runs.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn failure(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::input(e.to_string())
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::failure(format!("cannot write {}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::failure(format!("output error: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "optbench",
    version,
    about = "Optimizer comparison benchmark on tabular heart-disease data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean, scale and split the raw CSV into a dataset file.
    Preprocess(PreprocessArgs),
    /// Train every configured optimizer from one shared initialisation.
    Benchmark(BenchmarkArgs),
    /// Learning-rate grid and cross-validation for one optimizer.
    Enhanced(EnhancedArgs),
    /// Re-render a stored key-value report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw CSV file.
    #[arg(long)]
    pub input: PathBuf,
    /// Dataset file to write; metadata goes to `<output>.meta`.
    #[arg(long)]
    pub output: PathBuf,
    /// leakage-safe or paper-faithful.
    #[arg(long, default_value = "leakage-safe")]
    pub mode: String,
    /// Split seed; defaults to the config's seed.split.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset file written by `preprocess`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
    /// Override the epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override the initialisation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: number of cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Table format printed to stdout.
    #[arg(long, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated optimizer subset, in run order.
    #[arg(long, value_delimiter = ',')]
    pub optimizers: Option<Vec<OptimizerKind>>,
    /// Also write SVG loss curves.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct EnhancedArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value = "rmsprop")]
    pub optimizer: OptimizerKind,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Key-value report written by `benchmark` or `enhanced`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: Format,
    /// File to write instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Runs a parsed command. `Ok(false)` means it completed but at least one
/// training run failed.
pub fn dispatch(cli: Cli, out: &mut (dyn Write + Send)) -> Result<bool, CliError> {
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(&a, out).map(|_| true),
        Command::Benchmark(a) => with_jobs(a.run.jobs, || cmd_benchmark(&a, out)),
        Command::Enhanced(a) => with_jobs(a.run.jobs, || cmd_enhanced(&a, out)),
        Command::Report(a) => cmd_report(&a, out).map(|_| true),
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn config_or_default(path: Option<&Path>) -> Result<(ExperimentConfig, Vec<OptimizerSpec>), CliError> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => {
            let cfg = ExperimentConfig::default();
            let specs = OptimizerKind::ALL.iter().map(|&k| OptimizerSpec::defaults(k)).collect();
            Ok((cfg, specs))
        }
    }
}

fn data_error(e: DataError) -> CliError {
    match e {
        DataError::Io { .. } => CliError::input(e.to_string()),
        other => CliError::failure(other.to_string()),
    }
}

pub fn cmd_preprocess(args: &PreprocessArgs, out: &mut (dyn Write + Send)) -> Result<PreparedData, CliError> {
    let mode: PipelineMode = args
        .mode
        .parse()
        .map_err(|e: DataError| CliError::input(e.to_string()))?;
    let (cfg, _) = config_or_default(args.config.as_deref())?;
    let seed = args.seed.unwrap_or(cfg.seeds.split);
    let table = data::load_csv(&args.input).map_err(data_error)?;
    let prepared =
        data::run_pipeline(&table, &PipelineOptions::new(mode, seed)).map_err(|e| CliError::failure(e.to_string()))?;
    data::write_dataset(&args.output, &prepared).map_err(data_error)?;
    for line in prepared.report.lines(mode) {
        writeln!(out, "{line}").map_err(io_err)?;
    }
    Ok(prepared)
}

fn load_run_inputs(args: &RunArgs) -> Result<(ExperimentConfig, Vec<OptimizerSpec>, PreparedData), CliError> {
    let (mut cfg, specs) = config_or_default(args.config.as_deref())?;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seeds.init = s;
    }
    cfg.validate().map_err(|e| CliError::input(e.to_string()))?;
    let data = data::read_dataset(&args.input).map_err(data_error)?;
    fs::create_dir_all(&args.output)
        .map_err(|e| CliError::failure(format!("cannot create {}: {e}", args.output.display())))?;
    Ok((cfg, specs, data))
}

fn emit(doc: &KvDoc, dir: &Path, stem: &str, format: Format, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let csv = report::render_csv(doc).map_err(|e| CliError::failure(e.to_string()))?;
    write_file(&dir.join(format!("{stem}.kv")), doc.render())?;
    write_file(&dir.join(format!("{stem}.csv")), &csv)?;
    let shown = report::render(doc, format).map_err(|e| CliError::failure(e.to_string()))?;
    out.write_all(shown.as_bytes()).map_err(io_err)
}

pub fn cmd_benchmark(args: &BenchmarkArgs, out: &mut (dyn Write + Send)) -> Result<bool, CliError> {
    let (mut cfg, specs, data) = load_run_inputs(&args.run)?;
    if let Some(kinds) = &args.optimizers {
        cfg.optimizers = kinds
            .iter()
            .map(|k| *specs.iter().find(|s| s.kind == *k).expect("every kind present"))
            .collect();
    }
    let result = harness::run_benchmark(&data, &cfg).map_err(|e| CliError::failure(e.to_string()))?;
    let doc = report::benchmark_document(&cfg, &data, &result);
    emit(&doc, &args.run.output, "benchmark", args.run.format, out)?;

    if args.plots {
        let dir = args.run.output.join("plots");
        fs::create_dir_all(&dir).map_err(io_err)?;
        let mut overlay = Vec::new();
        let curves: Vec<(String, Vec<f64>, Vec<f64>)> = result
            .runs
            .iter()
            .map(|r| {
                let (t, v) = r
                    .result
                    .as_ref()
                    .map(|r| (r.log.train_losses(), r.log.validation_losses()))
                    .unwrap_or_default();
                (r.spec.kind.to_string(), t, v)
            })
            .collect();
        for (i, (name, train, val)) in curves.iter().enumerate() {
            let svg = line_chart(
                &format!("{name}: loss per epoch"),
                &[
                    Series {
                        label: "train".into(),
                        values: train,
                        dashed: false,
                    },
                    Series {
                        label: "validation".into(),
                        values: val,
                        dashed: true,
                    },
                ],
            );
            write_file(&dir.join(format!("loss_{i:02}_{name}.svg")), svg)?;
            overlay.push(Series {
                label: name.clone(),
                values: val,
                dashed: false,
            });
        }
        write_file(
            &dir.join("overlay_validation_loss.svg"),
            line_chart("validation loss per epoch", &overlay),
        )?;
    }

    for r in &result.runs {
        if let Err(e) = &r.result {
            eprintln!("{}: {e}", r.spec.kind);
        }
    }
    Ok(result.all_succeeded())
}

pub fn cmd_enhanced(args: &EnhancedArgs, out: &mut (dyn Write + Send)) -> Result<bool, CliError> {
    let (mut cfg, specs, data) = load_run_inputs(&args.run)?;
    let spec = *specs
        .iter()
        .find(|s| s.kind == args.optimizer)
        .expect("every kind present");
    // The echo must carry the tuned optimizer's settings.
    cfg.optimizers = vec![spec];
    let report = harness::run_enhanced(&data, args.optimizer, &cfg).map_err(|e| CliError::failure(e.to_string()))?;
    let doc = report::enhanced_document(&cfg, &data, &report);
    emit(&doc, &args.run.output, "enhanced", args.run.format, out)?;
    Ok(report.grid.entries.iter().all(|(_, r)| r.is_ok()))
}

pub fn cmd_report(args: &ReportArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", args.input.display())))?;
    let doc = KvDoc::parse(&text).map_err(|e| CliError::input(format!("{}: {e}", args.input.display())))?;
    let rendered = report::render(&doc, args.format).map_err(|e| CliError::input(e.to_string()))?;
    match &args.output {
        Some(p) => write_file(p, rendered),
        None => out.write_all(rendered.as_bytes()).map_err(io_err),
    }
}
