use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Concurrency, FitnessEvaluator};
use crate::chromosome::{ArchitecturePlan, Chromosome, ChromosomeKey, ChromosomeValues, GeneDomains};
use crate::error::{DomainError, EvaluatorError};

/// Evaluator that returns stored losses and fails on anything absent.
#[derive(Debug, Clone)]
pub struct LookupTable {
    domains: GeneDomains,
    losses: BTreeMap<ChromosomeKey, f64>,
}

/// One row of a lookup-table file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupEntry {
    pub included_layers: u32,
    pub frozen_layers: u32,
    pub learning_rate: f64,
    pub dropout: f64,
    pub loss: f64,
}

impl LookupEntry {
    pub fn new(chromosome: ChromosomeValues, loss: f64) -> Self {
        Self {
            included_layers: chromosome.included_layers,
            frozen_layers: chromosome.frozen_layers,
            learning_rate: chromosome.learning_rate,
            dropout: chromosome.dropout,
            loss,
        }
    }

    pub fn chromosome(&self) -> ChromosomeValues {
        ChromosomeValues {
            included_layers: self.included_layers,
            frozen_layers: self.frozen_layers,
            learning_rate: self.learning_rate,
            dropout: self.dropout,
        }
    }
}

impl LookupTable {
    pub fn new(domains: GeneDomains) -> Self {
        Self {
            domains,
            losses: BTreeMap::new(),
        }
    }

    /// Builds a table from a loss function over every valid chromosome of
    /// `domains`.
    pub fn tabulate(domains: GeneDomains, mut loss: impl FnMut(&Chromosome) -> f64) -> Self {
        let mut table = Self::new(domains);
        let d = table.domains.clone();
        for inc in d.included_layers().min..=d.included_layers().max {
            for frz in d.frozen_layers().min..=d.frozen_ceiling(inc) {
                for lr in 0..d.learning_rates().len() as u16 {
                    for dr in 0..d.dropouts().len() as u16 {
                        let c = Chromosome::from_parts(&d, inc, frz, lr, dr);
                        table.losses.insert(c.canonical_key(), loss(&c));
                    }
                }
            }
        }
        table
    }

    pub fn from_entries(domains: GeneDomains, entries: &[LookupEntry]) -> Result<Self, DomainError> {
        let mut table = Self::new(domains);
        for e in entries {
            let c = e.chromosome().resolve(&table.domains)?;
            if !e.loss.is_finite() || e.loss < 0.0 {
                return Err(DomainError::InvalidDomains(format!(
                    "lookup loss {} for {c} is not a finite non-negative number",
                    e.loss
                )));
            }
            if table.losses.insert(c.canonical_key(), e.loss).is_some() {
                return Err(DomainError::InvalidDomains(format!("duplicate lookup entry for {c}")));
            }
        }
        Ok(table)
    }

    pub fn insert(&mut self, c: &Chromosome, loss: f64) {
        self.losses.insert(c.canonical_key(), loss);
    }

    pub fn get(&self, c: &Chromosome) -> Option<f64> {
        self.losses.get(&c.canonical_key()).copied()
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn domains(&self) -> &GeneDomains {
        &self.domains
    }

    pub fn entries(&self) -> Vec<LookupEntry> {
        let d = &self.domains;
        self.losses
            .iter()
            .map(|(k, &loss)| {
                let c = Chromosome::from_parts(
                    d,
                    k.included_layers,
                    k.frozen_layers,
                    k.learning_rate_index,
                    k.dropout_index,
                );
                LookupEntry::new(c.values(), loss)
            })
            .collect()
    }
}

impl FitnessEvaluator for LookupTable {
    fn evaluate(&self, plan: &ArchitecturePlan, _epochs: u32) -> Result<f64, EvaluatorError> {
        let key = plan.to_chromosome(&self.domains)?.canonical_key();
        self.losses.get(&key).copied().ok_or(EvaluatorError::MissingEntry(key))
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent {
            max_in_flight: usize::MAX,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stored_loss_is_returned_exactly() {
        let d = GeneDomains::default();
        let x = Chromosome::new(&d, 10, 3, 0.01, 0.2).unwrap();
        let mut t = LookupTable::new(d);
        t.insert(&x, 0.3);
        assert_eq!(t.evaluate(&x.to_architecture(), 5).unwrap(), 0.3);
    }

    #[test]
    fn absent_key_is_an_error() {
        let d = GeneDomains::default();
        let x = Chromosome::new(&d, 10, 3, 0.01, 0.2).unwrap();
        let y = Chromosome::new(&d, 11, 3, 0.01, 0.2).unwrap();
        let mut t = LookupTable::new(d);
        t.insert(&x, 0.3);
        assert_eq!(
            t.evaluate(&y.to_architecture(), 5),
            Err(EvaluatorError::MissingEntry(y.canonical_key()))
        );
    }

    #[test]
    fn tabulate_covers_feasible_space() {
        let t = LookupTable::tabulate(GeneDomains::default(), |_| 1.0);
        // sum over included of (min(18, inc) + 1) feasible frozen values
        let feasible: usize = (1..=58usize).map(|i| i.min(18) + 1).sum();
        assert_eq!(t.len(), feasible * 54);
    }

    #[test]
    fn entries_roundtrip_through_json() {
        let d = GeneDomains::default();
        let mut t = LookupTable::new(d.clone());
        t.insert(&Chromosome::new(&d, 57, 2, 0.1, 0.1).unwrap(), 0.125);
        t.insert(&Chromosome::new(&d, 3, 0, 1e-6, 0.9).unwrap(), 0.5);
        let json = serde_json::to_string(&t.entries()).unwrap();
        assert!(json.contains(r#""included_layers":3"#));
        let entries: Vec<LookupEntry> = serde_json::from_str(&json).unwrap();
        let back = LookupTable::from_entries(d, &entries).unwrap();
        assert_eq!(back.entries(), t.entries());
    }

    #[test]
    fn duplicate_and_invalid_entries_are_rejected() {
        let d = GeneDomains::default();
        let e = LookupEntry {
            included_layers: 5,
            frozen_layers: 0,
            learning_rate: 0.1,
            dropout: 0.1,
            loss: 0.2,
        };
        assert!(LookupTable::from_entries(d.clone(), &[e, e]).is_err());
        let bad = LookupEntry { loss: f64::NAN, ..e };
        assert!(LookupTable::from_entries(d.clone(), &[bad]).is_err());
        let infeasible = LookupEntry { frozen_layers: 6, ..e };
        assert!(LookupTable::from_entries(d, &[infeasible]).is_err());
    }
}
