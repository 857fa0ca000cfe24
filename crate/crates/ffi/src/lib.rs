//! C ABI for the tlevo genetic search.
//!
//! Handles (`TlevoConfig`, `TlevoResult`) are opaque and owned by the caller
//! once returned; release them with the matching `*_free` function. Every
//! fallible function returns a [`TlevoStatus`]; on failure a message is
//! available from [`tlevo_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use tlevo::record::generations_csv;
use tlevo::{
    map_to_architecture, ArchitecturePlan, Chromosome, ContingencyTable, EvaluatorError, FnEvaluator, GaConfig,
    GeneDomains, RunResult, ScoredLabels, StopReason, SyntheticLandscape,
};

/// Status code returned by fallible functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlevoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The requested value does not exist (no best chromosome, index out of range).
    NotFound = 3,
    Panic = 4,
}

/// Why a search stopped.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlevoStopReason {
    GenerationCap = 0,
    Plateau = 1,
    EvaluatorFailure = 2,
}

impl From<StopReason> for TlevoStopReason {
    fn from(r: StopReason) -> Self {
        match r {
            StopReason::GenerationCap => Self::GenerationCap,
            StopReason::Plateau => Self::Plateau,
            StopReason::EvaluatorFailure => Self::EvaluatorFailure,
        }
    }
}

/// Gene values of one chromosome.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TlevoChromosome {
    pub included_layers: u32,
    pub frozen_layers: u32,
    pub learning_rate: f64,
    pub dropout: f64,
}

/// Architecture derived from a chromosome. Only the first `block_count`
/// entries of `block_layer_counts` are meaningful.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TlevoPlan {
    pub block_layer_counts: [u32; 4],
    pub block_count: u32,
    pub frozen_prefix: u32,
    pub se_layer_count: u32,
    pub learning_rate: f64,
    pub dropout: f64,
}

/// One row of the per-generation record.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TlevoGeneration {
    pub index: u32,
    pub best_fitness: f64,
    pub avg_fitness: f64,
    pub evaluator_calls: usize,
    pub cache_hits: usize,
    pub best: TlevoChromosome,
}

/// McNemar's test outcome; `statistic` and `p_value` are NaN when
/// `computable` is false.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TlevoMcNemar {
    pub computable: bool,
    pub statistic: f64,
    pub p_value: f64,
}

/// Search settings. Opaque.
pub struct TlevoConfig {
    inner: GaConfig,
}

/// Outcome of a search. Opaque.
pub struct TlevoResult {
    inner: RunResult,
    failure: Option<CString>,
}

/// Loss callback. Writes the average loss of `plan` after `epochs` epochs to
/// `loss_out` and returns 0, or returns non-zero on failure.
pub type TlevoEvaluateFn = Option<
    unsafe extern "C" fn(user_data: *mut c_void, plan: *const TlevoPlan, epochs: u32, loss_out: *mut f64) -> i32,
>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(TlevoStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(TlevoStatus::InvalidArgument, msg.into())
    }

    fn null(name: &str) -> Self {
        Failure(TlevoStatus::NullPointer, format!("{name} is null"))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TlevoStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TlevoStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            set_last_error(&format!("panic: {msg}"));
            TlevoStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(name))
}

fn to_c_chromosome(c: &Chromosome) -> TlevoChromosome {
    TlevoChromosome {
        included_layers: c.included_layers(),
        frozen_layers: c.frozen_layers(),
        learning_rate: c.learning_rate(),
        dropout: c.dropout(),
    }
}

fn to_c_plan(plan: &ArchitecturePlan) -> TlevoPlan {
    let mut blocks = [0u32; 4];
    for (slot, n) in blocks.iter_mut().zip(&plan.block_layer_counts) {
        *slot = *n;
    }
    TlevoPlan {
        block_layer_counts: blocks,
        block_count: plan.block_layer_counts.len() as u32,
        frozen_prefix: plan.frozen_prefix,
        se_layer_count: plan.se_layer_count,
        learning_rate: plan.learning_rate,
        dropout: plan.dropout,
    }
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tlevo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tlevo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default settings with the given seed. Never returns NULL.
#[no_mangle]
pub extern "C" fn tlevo_config_new(seed: u64) -> *mut TlevoConfig {
    Box::into_raw(Box::new(TlevoConfig {
        inner: GaConfig::with_seed(seed),
    }))
}

/// # Safety
/// `config` must be NULL or a pointer from [`tlevo_config_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tlevo_config_free(config: *mut TlevoConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Applies `set` to a copy of the settings and keeps it only if it validates.
unsafe fn update_config(config: *mut TlevoConfig, set: impl FnOnce(&mut GaConfig)) -> TlevoStatus {
    guard(|| {
        let cfg = deref_mut(config, "config")?;
        let mut next = cfg.inner.clone();
        set(&mut next);
        next.validate().map_err(|e| Failure::invalid(e.to_string()))?;
        cfg.inner = next;
        Ok(())
    })
}

/// Population size (at least 2). Rejected values leave the settings unchanged.
///
/// # Safety
/// `config` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_config_set_population_size(config: *mut TlevoConfig, value: usize) -> TlevoStatus {
    update_config(config, |c| c.population_size = value)
}

/// Generation cap (at least 1). Rejected values leave the settings unchanged.
///
/// # Safety
/// `config` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_config_set_max_generations(config: *mut TlevoConfig, value: u32) -> TlevoStatus {
    update_config(config, |c| c.max_generations = value)
}

/// Plateau threshold on the change in average fitness. Rejected values leave the settings unchanged.
///
/// # Safety
/// `config` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_config_set_plateau_epsilon(config: *mut TlevoConfig, value: f64) -> TlevoStatus {
    update_config(config, |c| c.plateau_epsilon = value)
}

/// Per-gene mutation probability in [0, 1]. Rejected values leave the settings unchanged.
///
/// # Safety
/// `config` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_config_set_mutation_rate(config: *mut TlevoConfig, value: f64) -> TlevoStatus {
    update_config(config, |c| c.mutation_rate = value)
}

/// Tournament size (at least 2). Rejected values leave the settings unchanged.
///
/// # Safety
/// `config` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_config_set_tournament_draws(config: *mut TlevoConfig, value: usize) -> TlevoStatus {
    update_config(config, |c| c.tournament_draws = value)
}

/// Training epochs requested per fitness probe. Rejected values leave the settings unchanged.
///
/// # Safety
/// `config` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_config_set_epochs(config: *mut TlevoConfig, value: u32) -> TlevoStatus {
    update_config(config, |c| c.epochs = value)
}

/// RNG seed. Rejected values leave the settings unchanged.
///
/// # Safety
/// `config` must be NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_config_set_seed(config: *mut TlevoConfig, value: u64) -> TlevoStatus {
    update_config(config, |c| c.seed = value)
}

/// Maps a chromosome (validated against the default gene domains) to its
/// architecture.
///
/// # Safety
/// `chromosome` and `plan_out` must be NULL or valid for reads/writes.
#[no_mangle]
pub unsafe extern "C" fn tlevo_map_to_architecture(
    chromosome: *const TlevoChromosome,
    plan_out: *mut TlevoPlan,
) -> TlevoStatus {
    guard(|| {
        let c = deref(chromosome, "chromosome")?;
        let out = deref_mut(plan_out, "plan_out")?;
        let chrom = Chromosome::new(
            &GeneDomains::default(),
            c.included_layers,
            c.frozen_layers,
            c.learning_rate,
            c.dropout,
        )
        .map_err(|e| Failure::invalid(e.to_string()))?;
        *out = to_c_plan(&map_to_architecture(&chrom));
        Ok(())
    })
}

fn finish(result: RunResult, out: &mut *mut TlevoResult) {
    let failure = result
        .failure
        .as_ref()
        .map(|f| CString::new(f.error.to_string().replace('\0', " ")).expect("nul bytes removed"));
    *out = Box::into_raw(Box::new(TlevoResult { inner: result, failure }));
}

/// Runs a search against the built-in synthetic landscape whose optimum is
/// (57, 2, 0.1, 0.1).
///
/// # Safety
/// `config` must be a live config handle and `result_out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tlevo_run_synthetic(
    config: *const TlevoConfig,
    result_out: *mut *mut TlevoResult,
) -> TlevoStatus {
    guard(|| {
        let cfg = deref(config, "config")?;
        let out = deref_mut(result_out, "result_out")?;
        let landscape = SyntheticLandscape::reference();
        let result = tlevo::run(cfg.inner.clone(), &landscape).map_err(|e| Failure::invalid(e.to_string()))?;
        finish(result, out);
        Ok(())
    })
}

struct Callback {
    f: unsafe extern "C" fn(*mut c_void, *const TlevoPlan, u32, *mut f64) -> i32,
    user_data: *mut c_void,
}

// The callback evaluator is serial, so it is only ever invoked from the
// thread that called `tlevo_run_with_callback`.
unsafe impl Sync for Callback {}

impl Callback {
    fn evaluate(&self, plan: &ArchitecturePlan, epochs: u32) -> Result<f64, EvaluatorError> {
        let c_plan = to_c_plan(plan);
        let mut loss = f64::NAN;
        // SAFETY: the caller of `tlevo_run_with_callback` vouches for `f` and `user_data`.
        let code = unsafe { (self.f)(self.user_data, &c_plan, epochs, &mut loss) };
        if code == 0 {
            Ok(loss)
        } else {
            Err(EvaluatorError::Other(format!("callback returned {code}")))
        }
    }
}

/// Runs a search, scoring chromosomes with `evaluate`. Evaluations happen
/// serially on the calling thread. A non-zero callback return stops the
/// search with `TLEVO_STOP_REASON_EVALUATOR_FAILURE`.
///
/// # Safety
/// `config` must be a live config handle, `result_out` valid for writes, and
/// `evaluate` safe to call with `user_data`.
#[no_mangle]
pub unsafe extern "C" fn tlevo_run_with_callback(
    config: *const TlevoConfig,
    evaluate: TlevoEvaluateFn,
    user_data: *mut c_void,
    result_out: *mut *mut TlevoResult,
) -> TlevoStatus {
    guard(|| {
        let cfg = deref(config, "config")?;
        let out = deref_mut(result_out, "result_out")?;
        let callback = Callback {
            f: evaluate.ok_or_else(|| Failure::null("evaluate"))?,
            user_data,
        };
        let evaluator = FnEvaluator::new(|plan: &ArchitecturePlan, epochs: u32| callback.evaluate(plan, epochs));
        let result = tlevo::run(cfg.inner.clone(), &evaluator).map_err(|e| Failure::invalid(e.to_string()))?;
        finish(result, out);
        Ok(())
    })
}

/// # Safety
/// `result` must be NULL or a handle from a run function not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tlevo_result_free(result: *mut TlevoResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tlevo_result_stop_reason(
    result: *const TlevoResult,
    out: *mut TlevoStopReason,
) -> TlevoStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(result, "result")?.inner.stop_reason.into();
        Ok(())
    })
}

/// Number of fully evaluated generations; 0 for a NULL handle.
///
/// # Safety
/// `result` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_result_generation_count(result: *const TlevoResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.generations.len())
}

/// # Safety
/// `result` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tlevo_result_generation(
    result: *const TlevoResult,
    index: usize,
    out: *mut TlevoGeneration,
) -> TlevoStatus {
    guard(|| {
        let r = deref(result, "result")?;
        let out = deref_mut(out, "out")?;
        let g = r.inner.generations.get(index).ok_or_else(|| {
            Failure(
                TlevoStatus::NotFound,
                format!(
                    "generation {index} out of range ({} recorded)",
                    r.inner.generations.len()
                ),
            )
        })?;
        *out = TlevoGeneration {
            index: g.index,
            best_fitness: g.best_fitness,
            avg_fitness: g.avg_fitness,
            evaluator_calls: g.evaluator_calls,
            cache_hits: g.cache_hits,
            best: to_c_chromosome(&g.best().chromosome),
        };
        Ok(())
    })
}

/// All-time best chromosome and its fitness. `NotFound` when the first
/// generation failed to evaluate.
///
/// # Safety
/// `result`, `chromosome_out` and `fitness_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tlevo_result_best(
    result: *const TlevoResult,
    chromosome_out: *mut TlevoChromosome,
    fitness_out: *mut f64,
) -> TlevoStatus {
    guard(|| {
        let r = deref(result, "result")?;
        let c_out = deref_mut(chromosome_out, "chromosome_out")?;
        let f_out = deref_mut(fitness_out, "fitness_out")?;
        let best = r
            .inner
            .best
            .ok_or_else(|| Failure(TlevoStatus::NotFound, "no chromosome was evaluated".into()))?;
        *c_out = to_c_chromosome(&best.chromosome);
        *f_out = best.fitness;
        Ok(())
    })
}

/// Evaluator error that stopped the run, or NULL. Valid while `result` lives.
///
/// # Safety
/// `result` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_result_failure_message(result: *const TlevoResult) -> *const c_char {
    result
        .as_ref()
        .and_then(|r| r.failure.as_ref())
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Per-generation CSV as a newly allocated string; free it with
/// [`tlevo_string_free`]. NULL on failure.
///
/// # Safety
/// `result` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn tlevo_result_generations_csv(result: *const TlevoResult) -> *mut c_char {
    let mut csv = ptr::null_mut();
    let status = guard(|| {
        let r = deref(result, "result")?;
        let s = CString::new(generations_csv(&r.inner.generations)).map_err(|e| Failure::invalid(e.to_string()))?;
        csv = s.into_raw();
        Ok(())
    });
    if status == TlevoStatus::Ok {
        csv
    } else {
        ptr::null_mut()
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tlevo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// ROC AUC of `scores` against 0/1 `labels`, both of length `n`.
///
/// # Safety
/// `labels` and `scores` must point to `n` readable elements; `auc_out`
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tlevo_auc(labels: *const u8, scores: *const f64, n: usize, auc_out: *mut f64) -> TlevoStatus {
    guard(|| {
        if labels.is_null() {
            return Err(Failure::null("labels"));
        }
        if scores.is_null() {
            return Err(Failure::null("scores"));
        }
        let out = deref_mut(auc_out, "auc_out")?;
        let labels = std::slice::from_raw_parts(labels, n);
        let scores = std::slice::from_raw_parts(scores, n);
        let data = ScoredLabels::from_binary(labels, scores).map_err(|e| Failure::invalid(e.to_string()))?;
        *out = tlevo::auc(&data).map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// McNemar's test on a paired contingency table: `a` both correct, `b`
/// only the first model correct, `c` only the second, `d` both wrong.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tlevo_mcnemar(a: u64, b: u64, c: u64, d: u64, out: *mut TlevoMcNemar) -> TlevoStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let r = tlevo::mcnemar(&ContingencyTable { a, b, c, d });
        *out = TlevoMcNemar {
            computable: r.computable(),
            statistic: r.statistic.unwrap_or(f64::NAN),
            p_value: r.p_value.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}
