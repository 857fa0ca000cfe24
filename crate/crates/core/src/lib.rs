//! Genetic search over transfer-learning configurations of DenseNet-121 with
//! squeeze-and-excitation layers.
//!
//! A [`Chromosome`] fixes how many dense-block layers to keep, how many of
//! them to freeze, the learning rate and the dropout. The [`ga`] module
//! evolves a population of chromosomes against a pluggable
//! [`FitnessEvaluator`]: a synthetic landscape, a lookup table, or an
//! external trainer reached over a line-delimited JSON pipe. The [`metrics`]
//! module provides ROC-AUC and McNemar's test for comparing the resulting
//! models.
//!
//! ```
//! use tlevo::{run, GaConfig, SyntheticLandscape};
//!
//! let result = run(GaConfig::with_seed(42), &SyntheticLandscape::reference()).unwrap();
//! let best = result.best.unwrap();
//! assert!(best.fitness <= 0.0);
//! println!("{:?}", best.chromosome.to_architecture());
//! ```

pub mod chromosome;
pub mod cli;
pub mod config;
pub mod error;
pub mod fitness;
pub mod ga;
pub mod metrics;
pub mod record;

pub use chromosome::{
    map_to_architecture, sample_chromosome, ArchitecturePlan, Chromosome, ChromosomeKey, ChromosomeValues, GeneDomains,
    LayerRange,
};
pub use error::{CliError, ConfigError, DomainError, EvaluatorError, MetricsError};
pub use fitness::{
    Concurrency, FitnessEvaluator, FnEvaluator, LookupTable, SyntheticLandscape, TrainerBridge, TrainerBridgeConfig,
};
pub use ga::{run, EvaluatedChromosome, FailurePolicy, GaConfig, GenerationRecord, RunResult, Search, StopReason};
pub use metrics::{auc, build_contingency, mcnemar, ContingencyTable, McNemarResult, ScoredLabels};
