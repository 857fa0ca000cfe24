//! Run artifacts: the per-generation CSV and the JSON run manifest.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chromosome::{ArchitecturePlan, Chromosome, ChromosomeValues, GeneDomains};
use crate::config::RunConfigFile;
use crate::error::DomainError;
use crate::ga::{FitnessCache, GenerationRecord, RunResult, StopReason};

pub const GENERATIONS_CSV_HEADER: &str =
    "generation,best_fitness,avg_fitness,evaluator_calls,cache_hits,best_included,best_frozen,best_lr,best_dropout";

/// Formats like C's `%g`: six significant digits, trailing zeros removed,
/// scientific notation for exponents below -4 or above 5.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn generations_csv(generations: &[GenerationRecord]) -> String {
    let mut out = String::with_capacity(64 * (generations.len() + 1));
    out.push_str(GENERATIONS_CSV_HEADER);
    out.push('\n');
    for g in generations {
        let best = g.best().chromosome;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            g.index,
            format_sig6(g.best_fitness),
            format_sig6(g.avg_fitness),
            g.evaluator_calls,
            g.cache_hits,
            best.included_layers(),
            best.frozen_layers(),
            format_sig6(best.learning_rate()),
            format_sig6(best.dropout()),
        )
        .expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestRecord {
    pub chromosome: ChromosomeValues,
    pub fitness: f64,
    pub plan: ArchitecturePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureRecord {
    pub generation: u32,
    pub chromosome: ChromosomeValues,
    pub error: String,
}

/// One fitness-cache entry; `loss` is null for penalty assignments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationRecord {
    pub included_layers: u32,
    pub frozen_layers: u32,
    pub learning_rate: f64,
    pub dropout: f64,
    pub loss: Option<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: RunConfigFile,
    pub seed: u64,
    pub stop_reason: StopReason,
    pub generations_completed: usize,
    pub evaluator_calls: usize,
    pub cache_hits: usize,
    pub best: Option<BestRecord>,
    pub failure: Option<FailureRecord>,
    /// Fitness cache at the end of the run, ordered by chromosome key.
    pub evaluations: Vec<EvaluationRecord>,
}

impl RunManifest {
    pub fn new(config: &RunConfigFile, result: &RunResult) -> Self {
        let domains = &config.domains;
        Self {
            config: config.clone(),
            seed: config.seed,
            stop_reason: result.stop_reason,
            generations_completed: result.generations.len(),
            evaluator_calls: result.generations.iter().map(|g| g.evaluator_calls).sum(),
            cache_hits: result.generations.iter().map(|g| g.cache_hits).sum(),
            best: result.best.map(|b| BestRecord {
                chromosome: b.chromosome.values(),
                fitness: b.fitness,
                plan: b.chromosome.to_architecture(),
            }),
            failure: result.failure.as_ref().map(|f| FailureRecord {
                generation: f.generation,
                chromosome: f.chromosome.values(),
                error: f.error.to_string(),
            }),
            evaluations: result
                .cache
                .iter()
                .map(|(k, e)| {
                    let c = Chromosome::from_parts(
                        domains,
                        k.included_layers,
                        k.frozen_layers,
                        k.learning_rate_index,
                        k.dropout_index,
                    );
                    EvaluationRecord {
                        included_layers: c.included_layers(),
                        frozen_layers: c.frozen_layers(),
                        learning_rate: c.learning_rate(),
                        dropout: c.dropout(),
                        loss: e.loss,
                        fitness: e.fitness,
                    }
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Fitness cache holding every successful evaluation in the log.
    pub fn warm_cache(&self, domains: &GeneDomains) -> Result<FitnessCache, DomainError> {
        let mut cache = FitnessCache::new();
        for e in &self.evaluations {
            let Some(loss) = e.loss else { continue };
            let c = Chromosome::new(domains, e.included_layers, e.frozen_layers, e.learning_rate, e.dropout)?;
            cache.insert_loss(c.canonical_key(), loss);
        }
        Ok(cache)
    }
}
