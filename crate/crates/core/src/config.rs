//! Search configuration file.
//!
//! A single JSON document. Every field is optional except where noted;
//! unknown keys are rejected.
//!
//! ```json
//! {
//!   "seed": 42,
//!   "population_size": 10,
//!   "max_generations": 10,
//!   "plateau_epsilon": 0.001,
//!   "mutation_rate": 0.1,
//!   "tournament_draws": 2,
//!   "epochs": 5,
//!   "evaluator": "bridge:python3 train.py --data /data/cxr14",
//!   "output_dir": "runs/cxr14"
//! }
//! ```
//!
//! `evaluator` is either a short string (`synthetic`, `lookup:<path>`,
//! `bridge:<program> <args...>`, split on whitespace) or an object tagged
//! with `"kind"` that exposes the tuning fields.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize};

use crate::chromosome::{Chromosome, ChromosomeValues, GeneDomains};
use crate::error::ConfigError;
use crate::fitness::{SyntheticLandscape, TrainerBridgeConfig, DEFAULT_EPOCHS};
use crate::ga::{FailurePolicy, GaConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub seed: u64,
    pub population_size: usize,
    pub max_generations: u32,
    pub plateau_epsilon: f64,
    pub mutation_rate: f64,
    pub tournament_draws: usize,
    pub epochs: u32,
    pub domains: GeneDomains,
    pub on_evaluator_failure: FailurePolicy,
    pub evaluator: EvaluatorConfig,
    /// Not echoed into manifests, so reruns elsewhere stay byte-identical.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    /// Free-form description of what the trainer's loss measures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_note: Option<String>,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        let ga = GaConfig::default();
        Self {
            seed: ga.seed,
            population_size: ga.population_size,
            max_generations: ga.max_generations,
            plateau_epsilon: ga.plateau_epsilon,
            mutation_rate: ga.mutation_rate,
            tournament_draws: ga.tournament_draws,
            epochs: DEFAULT_EPOCHS,
            domains: GeneDomains::default(),
            on_evaluator_failure: FailurePolicy::Abort,
            evaluator: EvaluatorConfig::default(),
            output_dir: PathBuf::from("tlevo-run"),
            loss_note: None,
        }
    }
}

impl RunConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let key = match path.as_str() {
                "." | "?" => unknown_field(&inner).unwrap_or_else(|| "config".to_string()),
                _ => path,
            };
            ConfigError::new(key, inner.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            population_size: self.population_size,
            max_generations: self.max_generations,
            plateau_epsilon: self.plateau_epsilon,
            mutation_rate: self.mutation_rate,
            tournament_draws: self.tournament_draws,
            seed: self.seed,
            epochs: self.epochs,
            domains: self.domains.clone(),
            failure_policy: self.on_evaluator_failure,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ga_config().validate()?;
        self.evaluator.validate(&self.domains)
    }
}

/// Key named by an "unknown field" error.
fn unknown_field(e: &serde_json::Error) -> Option<String> {
    let msg = e.to_string();
    msg.strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
        .map(str::to_string)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    #[serde(default = "default_target")]
    pub target: ChromosomeValues,
    #[serde(default = "unit_weights")]
    pub weights: [f64; 4],
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

fn default_target() -> ChromosomeValues {
    ChromosomeValues {
        included_layers: 57,
        frozen_layers: 2,
        learning_rate: 0.1,
        dropout: 0.1,
    }
}

fn unit_weights() -> [f64; 4] {
    [1.0; 4]
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            target: default_target(),
            weights: unit_weights(),
            noise_amplitude: 0.0,
            noise_seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn landscape(&self, domains: &GeneDomains) -> Result<SyntheticLandscape, ConfigError> {
        let target: Chromosome = self
            .target
            .resolve(domains)
            .map_err(|e| ConfigError::new("evaluator.target", e.to_string()))?;
        if !(self.noise_amplitude.is_finite() && self.noise_amplitude >= 0.0) {
            return Err(ConfigError::new("evaluator.noise_amplitude", "must be >= 0"));
        }
        let landscape = SyntheticLandscape::new(domains.clone(), target, self.weights)
            .map_err(|e| ConfigError::new("evaluator.weights", e.to_string()))?;
        Ok(landscape.with_noise(self.noise_amplitude, self.noise_seed))
    }
}

/// Which fitness evaluator a search uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum TaggedEvaluator {
    Synthetic {
        #[serde(default = "default_target")]
        target: ChromosomeValues,
        #[serde(default = "unit_weights")]
        weights: [f64; 4],
        #[serde(default)]
        noise_amplitude: f64,
        #[serde(default)]
        noise_seed: u64,
    },
    Lookup {
        path: PathBuf,
    },
    Bridge {
        command: Vec<String>,
        #[serde(default = "default_timeout_secs")]
        request_timeout_secs: f64,
        #[serde(default = "default_retries")]
        max_retries: u32,
        #[serde(default = "default_pool")]
        pool_size: usize,
    },
}

fn default_timeout_secs() -> f64 {
    TrainerBridgeConfig::new(Vec::new()).request_timeout.as_secs_f64()
}

fn default_retries() -> u32 {
    TrainerBridgeConfig::new(Vec::new()).max_retries
}

fn default_pool() -> usize {
    TrainerBridgeConfig::new(Vec::new()).pool_size
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "TaggedEvaluator")]
pub enum EvaluatorConfig {
    Synthetic(SyntheticConfig),
    Lookup { path: PathBuf },
    Bridge(TrainerBridgeConfig),
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self::Synthetic(SyntheticConfig::default())
    }
}

impl EvaluatorConfig {
    /// Parses `synthetic`, `lookup:<path>` or `bridge:<command line>`.
    pub fn parse_short(s: &str) -> Result<Self, ConfigError> {
        let s = s.trim();
        if s == "synthetic" {
            return Ok(Self::default());
        }
        if let Some(path) = s.strip_prefix("lookup:") {
            if path.is_empty() {
                return Err(ConfigError::new("evaluator", "lookup needs a path"));
            }
            return Ok(Self::Lookup { path: path.into() });
        }
        if let Some(cmd) = s.strip_prefix("bridge:") {
            let command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if command.is_empty() {
                return Err(ConfigError::new("evaluator", "bridge needs a command"));
            }
            return Ok(Self::Bridge(TrainerBridgeConfig::new(command)));
        }
        Err(ConfigError::new(
            "evaluator",
            format!("unknown evaluator {s:?}; expected synthetic, lookup:<path> or bridge:<command>"),
        ))
    }

    fn validate(&self, domains: &GeneDomains) -> Result<(), ConfigError> {
        match self {
            Self::Synthetic(s) => s.landscape(domains).map(|_| ()),
            Self::Lookup { .. } => Ok(()),
            Self::Bridge(cfg) => cfg.validate().map_err(|m| ConfigError::new("evaluator", m)),
        }
    }
}

impl From<EvaluatorConfig> for TaggedEvaluator {
    fn from(evaluator: EvaluatorConfig) -> Self {
        match evaluator {
            EvaluatorConfig::Synthetic(s) => TaggedEvaluator::Synthetic {
                target: s.target,
                weights: s.weights,
                noise_amplitude: s.noise_amplitude,
                noise_seed: s.noise_seed,
            },
            EvaluatorConfig::Lookup { path } => TaggedEvaluator::Lookup { path },
            EvaluatorConfig::Bridge(c) => TaggedEvaluator::Bridge {
                command: c.command,
                request_timeout_secs: c.request_timeout.as_secs_f64(),
                max_retries: c.max_retries,
                pool_size: c.pool_size,
            },
        }
    }
}

impl TryFrom<TaggedEvaluator> for EvaluatorConfig {
    type Error = String;

    fn try_from(t: TaggedEvaluator) -> Result<Self, String> {
        Ok(match t {
            TaggedEvaluator::Synthetic {
                target,
                weights,
                noise_amplitude,
                noise_seed,
            } => EvaluatorConfig::Synthetic(SyntheticConfig {
                target,
                weights,
                noise_amplitude,
                noise_seed,
            }),
            TaggedEvaluator::Lookup { path } => EvaluatorConfig::Lookup { path },
            TaggedEvaluator::Bridge {
                command,
                request_timeout_secs,
                max_retries,
                pool_size,
            } => EvaluatorConfig::Bridge(TrainerBridgeConfig {
                command,
                request_timeout: Duration::try_from_secs_f64(request_timeout_secs)
                    .map_err(|e| format!("request_timeout_secs: {e}"))?,
                max_retries,
                pool_size,
            }),
        })
    }
}

impl<'de> Deserialize<'de> for EvaluatorConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let value = serde_json::Value::deserialize(d)?;
        if let Some(s) = value.as_str() {
            return EvaluatorConfig::parse_short(s).map_err(|e| D::Error::custom(e.message));
        }
        let tagged: TaggedEvaluator = serde_json::from_value(value).map_err(D::Error::custom)?;
        EvaluatorConfig::try_from(tagged).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = RunConfigFile::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfigFile::default());
        assert_eq!(cfg.ga_config(), GaConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfigFile::from_json(r#"{"populaton_size": 10}"#).unwrap_err();
        assert_eq!(err.key, "populaton_size");
    }

    #[test]
    fn invalid_value_is_named() {
        let err = RunConfigFile::from_json(r#"{"population_size": 1}"#).unwrap_err();
        assert_eq!(err.key, "population_size");
    }

    #[test]
    fn short_evaluator_forms() {
        let cfg = RunConfigFile::from_json(r#"{"evaluator": "lookup:table.json"}"#).unwrap();
        assert_eq!(
            cfg.evaluator,
            EvaluatorConfig::Lookup {
                path: "table.json".into()
            }
        );
        let cfg = RunConfigFile::from_json(r#"{"evaluator": "bridge:python3 train.py --fast"}"#).unwrap();
        match cfg.evaluator {
            EvaluatorConfig::Bridge(b) => assert_eq!(b.command, ["python3", "train.py", "--fast"]),
            other => panic!("{other:?}"),
        }
        assert!(RunConfigFile::from_json(r#"{"evaluator": "grid"}"#).is_err());
    }

    #[test]
    fn tagged_evaluator_forms() {
        let cfg = RunConfigFile::from_json(
            r#"{"evaluator": {"kind": "bridge", "command": ["sh", "t.sh"], "request_timeout_secs": 2.5, "pool_size": 3}}"#,
        )
        .unwrap();
        match &cfg.evaluator {
            EvaluatorConfig::Bridge(b) => {
                assert_eq!(b.request_timeout, Duration::from_millis(2500));
                assert_eq!(b.pool_size, 3);
                assert_eq!(b.max_retries, 1);
            }
            other => panic!("{other:?}"),
        }
        let echoed = serde_json::to_string(&cfg).unwrap();
        let back = RunConfigFile::from_json(&echoed).unwrap();
        assert_eq!(back.evaluator, cfg.evaluator);

        let err =
            RunConfigFile::from_json(r#"{"evaluator": {"kind": "synthetic", "wieghts": [1,1,1,1]}}"#).unwrap_err();
        assert!(err.message.contains("wieghts"), "{err}");
    }

    #[test]
    fn synthetic_target_is_validated() {
        let err = RunConfigFile::from_json(
            r#"{"evaluator": {"kind": "synthetic", "target": {"included_layers": 3, "frozen_layers": 5, "learning_rate": 0.1, "dropout": 0.1}}}"#,
        )
        .unwrap_err();
        assert_eq!(err.key, "evaluator.target");
    }
}
