//! Fitness evaluation.
//!
//! An evaluator turns an [`ArchitecturePlan`] into the average training loss
//! of a short probe run. The search ranks chromosomes by the negated loss.

mod bridge;
mod lookup;
mod synthetic;

pub use bridge::{TrainerBridge, TrainerBridgeConfig, TrainerRequest, TrainerResponse};
pub use lookup::{LookupEntry, LookupTable};
pub use synthetic::SyntheticLandscape;

use crate::chromosome::ArchitecturePlan;
use crate::error::EvaluatorError;

/// Default number of training epochs per fitness probe.
pub const DEFAULT_EPOCHS: u32 = 5;

/// Whether an evaluator may be called from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Serial,
    Concurrent { max_in_flight: usize },
}

pub trait FitnessEvaluator: Sync {
    /// Average loss of `plan` after `epochs` epochs. Must be finite and
    /// non-negative.
    fn evaluate(&self, plan: &ArchitecturePlan, epochs: u32) -> Result<f64, EvaluatorError>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Serial
    }
}

impl<E: FitnessEvaluator + ?Sized> FitnessEvaluator for &E {
    fn evaluate(&self, plan: &ArchitecturePlan, epochs: u32) -> Result<f64, EvaluatorError> {
        (**self).evaluate(plan, epochs)
    }

    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

impl<E: FitnessEvaluator + ?Sized + Send> FitnessEvaluator for Box<E> {
    fn evaluate(&self, plan: &ArchitecturePlan, epochs: u32) -> Result<f64, EvaluatorError> {
        (**self).evaluate(plan, epochs)
    }

    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

/// Evaluator backed by a closure.
pub struct FnEvaluator<F> {
    f: F,
    concurrency: Concurrency,
}

impl<F> FnEvaluator<F>
where
    F: Fn(&ArchitecturePlan, u32) -> Result<f64, EvaluatorError> + Sync,
{
    pub fn new(f: F) -> Self {
        Self {
            f,
            concurrency: Concurrency::Serial,
        }
    }

    pub fn with_concurrency(mut self, concurrency: Concurrency) -> Self {
        self.concurrency = concurrency;
        self
    }
}

impl<F> FitnessEvaluator for FnEvaluator<F>
where
    F: Fn(&ArchitecturePlan, u32) -> Result<f64, EvaluatorError> + Sync,
{
    fn evaluate(&self, plan: &ArchitecturePlan, epochs: u32) -> Result<f64, EvaluatorError> {
        (self.f)(plan, epochs)
    }

    fn concurrency(&self) -> Concurrency {
        self.concurrency
    }
}
