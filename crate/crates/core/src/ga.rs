//! Generational genetic search.
//!
//! One generation is: evaluate (with a fitness cache), record statistics,
//! test termination, then breed the next population. Breeding keeps the
//! first tournament-selected parent pair unchanged and fills the remaining
//! slots with mutated uniform-crossover children of fresh tournament pairs.
//!
//! # Determinism
//!
//! All randomness comes from one [`SearchRng`] seeded with `GaConfig::seed`,
//! consumed on the calling thread in this order:
//!
//! 1. initial population: per chromosome, included, frozen, learning-rate
//!    index, dropout index ([`sample_chromosome`]);
//! 2. per generation, after evaluation:
//!    - elite pair: two tournaments, each `tournament_draws` uniform
//!      indices;
//!    - per offspring: two tournaments, then four crossover coin flips
//!      (included, frozen, learning rate, dropout), then per gene in the same
//!      order one mutation trial and, if it fires, one direction coin flip.
//!
//! Fitness evaluation never touches the generator, so evaluating in
//! parallel cannot change a run.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chromosome::{sample_chromosome, Chromosome, ChromosomeKey, GeneDomains};
use crate::error::{ConfigError, EvaluatorError};
use crate::fitness::{Concurrency, FitnessEvaluator, DEFAULT_EPOCHS};

/// Generator behind every random decision of a search.
pub type SearchRng = ChaCha8Rng;

pub fn search_rng(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// What to do when the evaluator fails on a chromosome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Stop the run and report the failure.
    #[default]
    Abort,
    /// Assign `-10 x` the largest loss seen so far and continue.
    Penalty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: u32,
    pub plateau_epsilon: f64,
    pub mutation_rate: f64,
    pub tournament_draws: usize,
    pub seed: u64,
    pub epochs: u32,
    pub domains: GeneDomains,
    pub failure_policy: FailurePolicy,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 10,
            max_generations: 10,
            plateau_epsilon: 0.001,
            mutation_rate: 0.10,
            tournament_draws: 2,
            seed: 0,
            epochs: DEFAULT_EPOCHS,
            domains: GeneDomains::default(),
            failure_policy: FailurePolicy::Abort,
        }
    }
}

impl GaConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population_size < 2 {
            return Err(ConfigError::new("population_size", "must be at least 2"));
        }
        if self.max_generations < 1 {
            return Err(ConfigError::new("max_generations", "must be at least 1"));
        }
        if !(self.plateau_epsilon.is_finite() && self.plateau_epsilon > 0.0) {
            return Err(ConfigError::new("plateau_epsilon", "must be a positive number"));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(ConfigError::new("mutation_rate", "must lie in [0, 1]"));
        }
        if self.tournament_draws < 2 {
            return Err(ConfigError::new("tournament_draws", "must be at least 2"));
        }
        if self.epochs < 1 {
            return Err(ConfigError::new("epochs", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluatedChromosome {
    pub chromosome: Chromosome,
    /// Negated average loss; higher is better.
    pub fitness: f64,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub index: u32,
    pub population: Vec<EvaluatedChromosome>,
    pub best_fitness: f64,
    pub avg_fitness: f64,
    pub evaluator_calls: usize,
    pub cache_hits: usize,
}

impl GenerationRecord {
    /// Fittest member; ties go to the earliest.
    pub fn best(&self) -> &EvaluatedChromosome {
        fittest(&self.population)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    GenerationCap,
    Plateau,
    EvaluatorFailure,
}

/// The chromosome an evaluator failed on.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationFailure {
    pub chromosome: Chromosome,
    pub generation: u32,
    pub error: EvaluatorError,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub generations: Vec<GenerationRecord>,
    /// All-time fittest chromosome; `None` only if the first generation
    /// failed to evaluate.
    pub best: Option<EvaluatedChromosome>,
    pub stop_reason: StopReason,
    pub failure: Option<EvaluationFailure>,
    pub cache: FitnessCache,
}

impl RunResult {
    pub fn total_evaluator_calls(&self) -> usize {
        self.generations.iter().map(|g| g.evaluator_calls).sum()
    }
}

/// Cached outcome of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheEntry {
    pub fitness: f64,
    /// Loss reported by the evaluator; `None` for penalty assignments.
    pub loss: Option<f64>,
}

/// Fitness memo keyed by [`ChromosomeKey`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitnessCache {
    entries: BTreeMap<ChromosomeKey, CacheEntry>,
}

impl FitnessCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &ChromosomeKey) -> Option<CacheEntry> {
        self.entries.get(key).copied()
    }

    /// Records an evaluator loss.
    pub fn insert_loss(&mut self, key: ChromosomeKey, loss: f64) {
        self.entries.insert(
            key,
            CacheEntry {
                fitness: -loss,
                loss: Some(loss),
            },
        );
    }

    fn insert_penalty(&mut self, key: ChromosomeKey, fitness: f64) {
        self.entries.insert(key, CacheEntry { fitness, loss: None });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ChromosomeKey, &CacheEntry)> {
        self.entries.iter()
    }

    fn largest_loss(&self) -> Option<f64> {
        self.entries
            .values()
            .filter_map(|e| e.loss)
            .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.max(l))))
    }
}

/// Outcome of evaluating one population.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationEvaluation {
    pub evaluated: Vec<EvaluatedChromosome>,
    pub evaluator_calls: usize,
    pub cache_hits: usize,
}

pub fn initialize_population(config: &GaConfig, rng: &mut SearchRng) -> Vec<Chromosome> {
    (0..config.population_size)
        .map(|_| sample_chromosome(&config.domains, rng))
        .collect()
}

/// Evaluates `population`, consulting and updating `cache`.
///
/// Each distinct uncached chromosome is sent to the evaluator once; repeats
/// within the population count as cache hits. Results are merged in
/// population order.
pub fn evaluate_population<E: FitnessEvaluator + ?Sized>(
    population: &[Chromosome],
    evaluator: &E,
    cache: &mut FitnessCache,
    epochs: u32,
    policy: FailurePolicy,
) -> Result<PopulationEvaluation, (Chromosome, EvaluatorError)> {
    let mut pending: Vec<Chromosome> = Vec::new();
    let mut queued = HashSet::new();
    for c in population {
        let key = c.canonical_key();
        if cache.get(&key).is_none() && queued.insert(key) {
            pending.push(*c);
        }
    }

    let stop_on_failure = policy == FailurePolicy::Abort;
    let outcomes = run_evaluations(&pending, evaluator, epochs, stop_on_failure);

    let mut first_failure = None;
    let mut failed = Vec::new();
    for (c, outcome) in pending.iter().zip(outcomes) {
        match outcome {
            None => {}
            Some(Ok(loss)) => cache.insert_loss(c.canonical_key(), loss),
            Some(Err(e)) => {
                if first_failure.is_none() {
                    first_failure = Some((*c, e));
                }
                failed.push(*c);
            }
        }
    }
    if let Some(failure) = first_failure {
        match policy {
            FailurePolicy::Abort => return Err(failure),
            FailurePolicy::Penalty => {
                let base = cache.largest_loss().filter(|l| *l > 0.0).unwrap_or(1.0);
                for c in failed {
                    cache.insert_penalty(c.canonical_key(), -10.0 * base);
                }
            }
        }
    }

    let fresh: HashSet<ChromosomeKey> = pending.iter().map(Chromosome::canonical_key).collect();
    let mut reported = HashSet::new();
    let evaluated: Vec<EvaluatedChromosome> = population
        .iter()
        .map(|c| {
            let key = c.canonical_key();
            let entry = cache.get(&key).expect("every chromosome evaluated");
            let from_cache = !(fresh.contains(&key) && reported.insert(key));
            EvaluatedChromosome {
                chromosome: *c,
                fitness: entry.fitness,
                from_cache,
            }
        })
        .collect();
    Ok(PopulationEvaluation {
        evaluator_calls: pending.len(),
        cache_hits: population.len() - pending.len(),
        evaluated,
    })
}

/// Evaluates `pending`, in parallel when the evaluator allows it. With
/// `stop_on_failure`, no new evaluation starts after one fails; skipped
/// entries come back as `None`.
fn run_evaluations<E: FitnessEvaluator + ?Sized>(
    pending: &[Chromosome],
    evaluator: &E,
    epochs: u32,
    stop_on_failure: bool,
) -> Vec<Option<Result<f64, EvaluatorError>>> {
    let eval_one = |c: &Chromosome| {
        evaluator.evaluate(&c.to_architecture(), epochs).and_then(|loss| {
            if loss.is_finite() && loss >= 0.0 {
                Ok(loss)
            } else {
                Err(EvaluatorError::InvalidLoss(loss))
            }
        })
    };
    let workers = match evaluator.concurrency() {
        Concurrency::Serial => 1,
        Concurrency::Concurrent { max_in_flight } => {
            let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
            max_in_flight.min(cores).min(pending.len())
        }
    };
    if workers <= 1 {
        let mut stopped = false;
        return pending
            .iter()
            .map(|c| {
                if stopped {
                    return None;
                }
                let outcome = eval_one(c);
                stopped = stop_on_failure && outcome.is_err();
                Some(outcome)
            })
            .collect();
    }

    let slots: Vec<Mutex<Option<Result<f64, EvaluatorError>>>> = pending.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let stopped = AtomicBool::new(false);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stopped.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(c) = pending.get(i) else { break };
                let outcome = eval_one(c);
                if stop_on_failure && outcome.is_err() {
                    stopped.store(true, Ordering::Relaxed);
                }
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap()).collect()
}

fn fittest(pop: &[EvaluatedChromosome]) -> &EvaluatedChromosome {
    pop.iter()
        .reduce(|best, c| if c.fitness > best.fitness { c } else { best })
        .expect("non-empty population")
}

/// Winner among the members at `draws` (indices into `pop`); the first
/// drawn wins ties.
pub fn tournament_winner(pop: &[EvaluatedChromosome], draws: &[usize]) -> Chromosome {
    let mut best = &pop[draws[0]];
    for &i in &draws[1..] {
        if pop[i].fitness > best.fitness {
            best = &pop[i];
        }
    }
    best.chromosome
}

/// Draws `draws` members uniformly with replacement and returns the fittest.
pub fn tournament_select(pop: &[EvaluatedChromosome], draws: usize, rng: &mut SearchRng) -> Chromosome {
    assert!(!pop.is_empty(), "tournament on an empty population");
    let picks: Vec<usize> = (0..draws.max(1)).map(|_| rng.gen_range(0..pop.len())).collect();
    tournament_winner(pop, &picks)
}

/// Which parent contributes a gene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parent {
    A,
    B,
}

/// Crossover with an explicit per-gene mask (included, frozen, learning
/// rate, dropout). Frozen is clamped down to the included count afterwards.
pub fn crossover_with_mask(a: &Chromosome, b: &Chromosome, mask: [Parent; 4], domains: &GeneDomains) -> Chromosome {
    let pick = |i: usize| if mask[i] == Parent::A { a } else { b };
    let included = pick(0).included_layers();
    let frozen = pick(1).frozen_layers().min(domains.frozen_ceiling(included));
    Chromosome::from_parts(
        domains,
        included,
        frozen,
        pick(2).learning_rate_index(),
        pick(3).dropout_index(),
    )
}

pub fn uniform_crossover(a: &Chromosome, b: &Chromosome, domains: &GeneDomains, rng: &mut SearchRng) -> Chromosome {
    let mut mask = [Parent::A; 4];
    for m in &mut mask {
        if !rng.gen_bool(0.5) {
            *m = Parent::B;
        }
    }
    crossover_with_mask(a, b, mask, domains)
}

/// Direction of one mutation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Up,
    Down,
}

/// Layer-count genes move by this many layers per mutation.
pub const LAYER_MUTATION_STEP: i64 = 5;

/// Applies explicit per-gene mutation steps (`None` leaves a gene alone).
///
/// Layer genes move by five layers and are clamped to their range; menu
/// genes move one menu position (x10 / ÷10 for learning rate, ±0.1 for
/// dropout) and stop at the menu ends. Frozen is then clamped down to the
/// included count.
pub fn mutate_with_steps(c: &Chromosome, steps: [Option<Step>; 4], domains: &GeneDomains) -> Chromosome {
    let signed = |s: Step| if s == Step::Up { 1 } else { -1 };
    let mut included = c.included_layers();
    if let Some(s) = steps[0] {
        included = domains
            .included_layers()
            .clamp(i64::from(included) + signed(s) * LAYER_MUTATION_STEP);
    }
    let mut frozen = c.frozen_layers();
    if let Some(s) = steps[1] {
        frozen = domains
            .frozen_layers()
            .clamp(i64::from(frozen) + signed(s) * LAYER_MUTATION_STEP);
    }
    let menu_step = |idx: u16, len: usize, step: Option<Step>| match step {
        Some(s) => (i64::from(idx) + signed(s)).clamp(0, len as i64 - 1) as u16,
        None => idx,
    };
    let lr = menu_step(c.learning_rate_index(), domains.learning_rates().len(), steps[2]);
    let dr = menu_step(c.dropout_index(), domains.dropouts().len(), steps[3]);
    frozen = frozen.min(domains.frozen_ceiling(included));
    Chromosome::from_parts(domains, included, frozen, lr, dr)
}

pub fn mutate(c: &Chromosome, config: &GaConfig, rng: &mut SearchRng) -> Chromosome {
    let mut steps = [None; 4];
    for s in &mut steps {
        if rng.gen_bool(config.mutation_rate) {
            *s = Some(if rng.gen_bool(0.5) { Step::Up } else { Step::Down });
        }
    }
    mutate_with_steps(c, steps, &config.domains)
}

/// Breeds the next population: the first selected parent pair survives
/// unchanged, the rest are offspring of fresh tournament pairs.
pub fn next_generation(current: &[EvaluatedChromosome], config: &GaConfig, rng: &mut SearchRng) -> Vec<Chromosome> {
    let k = config.tournament_draws;
    let mut next = Vec::with_capacity(config.population_size);
    next.push(tournament_select(current, k, rng));
    next.push(tournament_select(current, k, rng));
    next.truncate(config.population_size);
    while next.len() < config.population_size {
        let a = tournament_select(current, k, rng);
        let b = tournament_select(current, k, rng);
        let child = uniform_crossover(&a, &b, &config.domains, rng);
        next.push(mutate(&child, config, rng));
    }
    next
}

/// `true` once consecutive average fitnesses differ by less than `epsilon`.
pub fn plateau_reached(previous_avg: f64, current_avg: f64, epsilon: f64) -> bool {
    (current_avg - previous_avg).abs() < epsilon
}

/// A configured search, optionally warm-started.
pub struct Search {
    config: GaConfig,
    cache: FitnessCache,
    initial_population: Option<Vec<Chromosome>>,
}

impl Search {
    pub fn new(config: GaConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            cache: FitnessCache::new(),
            initial_population: None,
        })
    }

    /// Seeds the fitness cache, e.g. from a previous run's evaluation log.
    pub fn with_cache(mut self, cache: FitnessCache) -> Self {
        self.cache = cache;
        self
    }

    /// Replaces random initialization with the given chromosomes.
    pub fn with_initial_population(mut self, population: Vec<Chromosome>) -> Result<Self, ConfigError> {
        if population.len() != self.config.population_size {
            return Err(ConfigError::new(
                "initial_population",
                format!(
                    "has {} chromosomes, population_size is {}",
                    population.len(),
                    self.config.population_size
                ),
            ));
        }
        for c in &population {
            c.validate(&self.config.domains)
                .map_err(|e| ConfigError::new("initial_population", e.to_string()))?;
        }
        self.initial_population = Some(population);
        Ok(self)
    }

    pub fn config(&self) -> &GaConfig {
        &self.config
    }

    pub fn run<E: FitnessEvaluator + ?Sized>(self, evaluator: &E) -> RunResult {
        let Search {
            config,
            mut cache,
            initial_population,
        } = self;
        let mut rng = search_rng(config.seed);
        let mut population = initial_population.unwrap_or_else(|| initialize_population(&config, &mut rng));
        let mut generations: Vec<GenerationRecord> = Vec::new();
        let mut best: Option<EvaluatedChromosome> = None;

        for index in 0..config.max_generations {
            let eval =
                match evaluate_population(&population, evaluator, &mut cache, config.epochs, config.failure_policy) {
                    Ok(eval) => eval,
                    Err((chromosome, error)) => {
                        return RunResult {
                            generations,
                            best,
                            stop_reason: StopReason::EvaluatorFailure,
                            failure: Some(EvaluationFailure {
                                chromosome,
                                generation: index,
                                error,
                            }),
                            cache,
                        };
                    }
                };
            let gen_best = *fittest(&eval.evaluated);
            if best.is_none_or(|b| gen_best.fitness > b.fitness) {
                best = Some(gen_best);
            }
            let avg_fitness = eval.evaluated.iter().map(|e| e.fitness).sum::<f64>() / eval.evaluated.len() as f64;
            let record = GenerationRecord {
                index,
                best_fitness: gen_best.fitness,
                avg_fitness,
                evaluator_calls: eval.evaluator_calls,
                cache_hits: eval.cache_hits,
                population: eval.evaluated,
            };

            let plateau = generations
                .last()
                .is_some_and(|prev| plateau_reached(prev.avg_fitness, avg_fitness, config.plateau_epsilon));
            let stop = if plateau {
                Some(StopReason::Plateau)
            } else if index + 1 == config.max_generations {
                Some(StopReason::GenerationCap)
            } else {
                None
            };
            if stop.is_none() {
                population = next_generation(&record.population, &config, &mut rng);
            }
            generations.push(record);
            if let Some(stop_reason) = stop {
                return RunResult {
                    generations,
                    best,
                    stop_reason,
                    failure: None,
                    cache,
                };
            }
        }
        unreachable!("loop returns on the final generation")
    }
}

/// Runs a search with a cold cache.
pub fn run<E: FitnessEvaluator + ?Sized>(config: GaConfig, evaluator: &E) -> Result<RunResult, ConfigError> {
    Ok(Search::new(config)?.run(evaluator))
}
