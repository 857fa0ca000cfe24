//! Command-line front end: `search`, `metrics` and `plan`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::chromosome::{map_to_architecture, Chromosome, GeneDomains};
use crate::config::{EvaluatorConfig, RunConfigFile};
use crate::error::{CliError, ConfigError, MetricsError};
use crate::fitness::{FitnessEvaluator, LookupEntry, LookupTable, TrainerBridge};
use crate::ga::{Search, StopReason};
use crate::metrics::{self, ContingencyTable, McNemarResult, ScoredLabels};
use crate::record::{generations_csv, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_EVALUATOR_FAILURE: i32 = 2;

pub const GENERATIONS_FILE: &str = "generations.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "tlevo",
    version,
    about = "Genetic search over DenseNet-121+SE transfer-learning configurations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a genetic search and write generations.csv and manifest.json.
    Search(SearchArgs),
    /// Compute per-column AUC and McNemar's test from CSV files.
    Metrics(MetricsArgs),
    /// Print the architecture plan for one chromosome.
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SearchArgs {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub population_size: Option<usize>,
    #[arg(long)]
    pub max_generations: Option<u32>,
    #[arg(long)]
    pub plateau_epsilon: Option<f64>,
    #[arg(long)]
    pub mutation_rate: Option<f64>,
    #[arg(long)]
    pub tournament_draws: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u32>,
    /// `synthetic`, `lookup:<path>` or `bridge:<command>`.
    #[arg(long)]
    pub evaluator: Option<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Warm-start the fitness cache from a previous run's manifest.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// CSV with a header row and one 0/1 column per label.
    pub truth: PathBuf,
    /// CSV of scores (or 0/1 predictions) from the first model.
    pub pred1: PathBuf,
    /// CSV from the second model; enables McNemar's test.
    pub pred2: Option<PathBuf>,
    /// Binarize scores for McNemar's test (score >= threshold means 1).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Significance level reported alongside p-values.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    pub included_layers: u32,
    pub frozen_layers: u32,
    pub learning_rate: f64,
    pub dropout: f64,
}

/// Parses arguments and runs a command, writing to the given streams.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Search(a) => cmd_search(&a).map(|outcome| {
            let _ = writeln!(out, "{}", outcome.summary());
            if outcome.stop_reason == StopReason::EvaluatorFailure {
                if let Some(f) = &outcome.manifest.failure {
                    let _ = writeln!(
                        err,
                        "evaluator failed in generation {} on {}: {}",
                        f.generation, f.chromosome, f.error
                    );
                }
                EXIT_EVALUATOR_FAILURE
            } else {
                EXIT_OK
            }
        }),
        Command::Metrics(a) => cmd_metrics(&a).map(|report| {
            let _ = writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            EXIT_OK
        }),
        Command::Plan(a) => cmd_plan(&a).map(|json| {
            let _ = writeln!(out, "{json}");
            EXIT_OK
        }),
    };
    result.unwrap_or_else(|e| {
        let _ = writeln!(err, "error: {e}");
        EXIT_USAGE
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads the config file (or defaults) and applies command-line overrides.
pub fn resolve_config(args: &SearchArgs) -> Result<RunConfigFile, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfigFile::from_json(&read_text(path)?).map_err(|e| CliError::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?,
        None => RunConfigFile::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() { cfg.$field = v; })*
        };
    }
    apply!(
        seed,
        population_size,
        max_generations,
        plateau_epsilon,
        mutation_rate,
        tournament_draws,
        epochs,
        output_dir
    );
    if let Some(e) = &args.evaluator {
        cfg.evaluator = EvaluatorConfig::parse_short(e)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn build_evaluator(cfg: &RunConfigFile) -> Result<Box<dyn FitnessEvaluator + Send>, CliError> {
    Ok(match &cfg.evaluator {
        EvaluatorConfig::Synthetic(s) => Box::new(s.landscape(&cfg.domains)?),
        EvaluatorConfig::Lookup { path } => {
            let entries: Vec<LookupEntry> = serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let table = LookupTable::from_entries(cfg.domains.clone(), &entries).map_err(|e| CliError::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            Box::new(table)
        }
        EvaluatorConfig::Bridge(bridge) => {
            Box::new(TrainerBridge::new(bridge.clone()).map_err(|e| ConfigError::new("evaluator", e.to_string()))?)
        }
    })
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub output_dir: PathBuf,
    pub stop_reason: StopReason,
    pub manifest: RunManifest,
}

impl SearchOutcome {
    pub fn summary(&self) -> String {
        let m = &self.manifest;
        let best = match &m.best {
            Some(b) => format!("best {} fitness {}", b.chromosome, b.fitness),
            None => "no chromosome evaluated".into(),
        };
        format!(
            "{:?} after {} generation(s), {} evaluator call(s); {}; wrote {}",
            m.stop_reason,
            m.generations_completed,
            m.evaluator_calls,
            best,
            self.output_dir.display()
        )
    }
}

/// Runs a search and writes `generations.csv` and `manifest.json`.
///
/// An evaluator failure is not an error here: the partial run is written
/// and reported through `stop_reason`.
pub fn cmd_search(args: &SearchArgs) -> Result<SearchOutcome, CliError> {
    let cfg = resolve_config(args)?;
    let mut search = Search::new(cfg.ga_config())?;
    if let Some(path) = &args.resume {
        let previous: RunManifest = serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let cache = previous.warm_cache(&cfg.domains).map_err(|e| CliError::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        search = search.with_cache(cache);
    }
    let evaluator = build_evaluator(&cfg)?;
    let result = search.run(&evaluator);

    fs::create_dir_all(&cfg.output_dir).map_err(|source| CliError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;
    write_file(
        &cfg.output_dir.join(GENERATIONS_FILE),
        &generations_csv(&result.generations),
    )?;
    let manifest = RunManifest::new(&cfg, &result);
    write_file(&cfg.output_dir.join(MANIFEST_FILE), &manifest.to_json())?;
    Ok(SearchOutcome {
        output_dir: cfg.output_dir,
        stop_reason: result.stop_reason,
        manifest,
    })
}

/// CSV table with a header row and numeric cells.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let parse_err = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| parse_err(e.to_string()))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| parse_err(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            for (col, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    parse_err(format!(
                        "row {}, column {:?}: {cell:?} is not a number",
                        row + 2,
                        headers[col]
                    ))
                })?;
                columns[col].push(v);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McNemarReport {
    #[serde(flatten)]
    pub table: ContingencyTable,
    #[serde(flatten)]
    pub result: McNemarResult,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnReport {
    pub column: String,
    /// AUC per prediction file; null when the column has a single class.
    pub auc: Vec<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcnemar: Option<McNemarReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub alpha: f64,
    pub columns: Vec<ColumnReport>,
}

fn to_binary(values: &[f64]) -> Result<Vec<bool>, MetricsError> {
    values
        .iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(MetricsError::NonBinaryLabel(v))
            }
        })
        .collect()
}

/// Columns are matched by position; names come from the truth file.
pub fn cmd_metrics(args: &MetricsArgs) -> Result<MetricsReport, CliError> {
    let truth = NumericTable::read(&args.truth)?;
    let mut preds = vec![NumericTable::read(&args.pred1)?];
    if let Some(p) = &args.pred2 {
        preds.push(NumericTable::read(p)?);
    }
    for (p, path) in preds
        .iter()
        .zip([Some(&args.pred1), args.pred2.as_ref()].into_iter().flatten())
    {
        if p.headers.len() != truth.headers.len() {
            return Err(CliError::Usage(format!(
                "{} has {} column(s), truth has {}",
                path.display(),
                p.headers.len(),
                truth.headers.len()
            )));
        }
        if p.rows() != truth.rows() {
            return Err(MetricsError::LengthMismatch(truth.rows(), p.rows()).into());
        }
    }
    if truth.rows() == 0 {
        return Err(MetricsError::Empty.into());
    }

    let mut columns = Vec::with_capacity(truth.headers.len());
    for (i, name) in truth.headers.iter().enumerate() {
        let labels = to_binary(&truth.columns[i])?;
        let mut auc = Vec::new();
        for p in &preds {
            let data = ScoredLabels::new(labels.clone(), p.columns[i].clone())?;
            auc.push(match metrics::auc(&data) {
                Ok(v) => Some(v),
                Err(MetricsError::SingleClass) => None,
                Err(e) => return Err(e.into()),
            });
        }
        let mcnemar = if preds.len() == 2 {
            let binarize = |values: &[f64]| -> Result<Vec<bool>, CliError> {
                match args.threshold {
                    Some(t) => Ok(values.iter().map(|&v| v >= t).collect()),
                    None => to_binary(values).map_err(|_| {
                        CliError::Usage(format!(
                            "column {name:?}: McNemar's test needs 0/1 predictions; pass --threshold to binarize scores"
                        ))
                    }),
                }
            };
            let p1 = binarize(&preds[0].columns[i])?;
            let p2 = binarize(&preds[1].columns[i])?;
            let table = metrics::build_contingency(&labels, &p1, &p2)?;
            let result = metrics::mcnemar(&table);
            Some(McNemarReport {
                table,
                result,
                significant: result.significant(args.alpha),
            })
        } else {
            None
        };
        columns.push(ColumnReport {
            column: name.clone(),
            auc,
            mcnemar,
        });
    }
    Ok(MetricsReport {
        samples: truth.rows(),
        alpha: args.alpha,
        columns,
    })
}

/// Plan JSON for a chromosome over the default domains.
pub fn cmd_plan(args: &PlanArgs) -> Result<String, CliError> {
    let c = Chromosome::new(
        &GeneDomains::default(),
        args.included_layers,
        args.frozen_layers,
        args.learning_rate,
        args.dropout,
    )?;
    Ok(serde_json::to_string_pretty(&map_to_architecture(&c)).expect("plan serializes"))
}
