//! Chromosome genotype, gene domains and the mapping onto a truncated,
//! partially frozen DenseNet-121+SE architecture.
//!
//! A chromosome has four genes:
//!
//! | gene            | domain (defaults)                          |
//! |-----------------|--------------------------------------------|
//! | included layers | integer in `[1, 58]`                       |
//! | frozen layers   | integer in `[0, 18]`, never above included |
//! | learning rate   | menu `1e-6 .. 0.1`, decades                |
//! | dropout         | menu `0.1 .. 0.9`, steps of 0.1            |
//!
//! Layer counts are in dense-block layer units, accumulated across the four
//! dense blocks of DenseNet-121 (6, 12, 24 and 16 layers).

use std::fmt;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Dense-block layer counts of DenseNet-121, input side first.
pub const DENSENET121_BLOCKS: [u32; 4] = [6, 12, 24, 16];

/// Total number of dense-block layers in DenseNet-121.
pub const DENSENET121_LAYERS: u32 = 58;

/// Learning-rate menu, ascending.
pub const DEFAULT_LEARNING_RATES: [f64; 6] = [0.000001, 0.00001, 0.0001, 0.001, 0.01, 0.1];

/// Dropout menu, ascending.
pub const DEFAULT_DROPOUTS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

const MENU_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Gene names as they appear in diagnostics and serialized documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gene {
    IncludedLayers,
    FrozenLayers,
    LearningRate,
    Dropout,
}

impl Gene {
    pub const ALL: [Gene; 4] = [
        Gene::IncludedLayers,
        Gene::FrozenLayers,
        Gene::LearningRate,
        Gene::Dropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Gene::IncludedLayers => "included_layers",
            Gene::FrozenLayers => "frozen_layers",
            Gene::LearningRate => "learning_rate",
            Gene::Dropout => "dropout",
        }
    }
}

impl fmt::Display for Gene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRange {
    pub min: u32,
    pub max: u32,
}

impl LayerRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, value: u32) -> bool {
        (self.min..=self.max).contains(&value)
    }

    pub fn span(&self) -> u32 {
        self.max - self.min
    }

    pub fn clamp(&self, value: i64) -> u32 {
        value.clamp(i64::from(self.min), i64::from(self.max)) as u32
    }
}

/// Legal values for each gene.
///
/// Menus are kept sorted ascending, so "one step up" on the learning-rate
/// menu is a multiplication by ten for the default decades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeneDomains", into = "RawGeneDomains")]
pub struct GeneDomains {
    included_layers: LayerRange,
    frozen_layers: LayerRange,
    learning_rates: Vec<f64>,
    dropouts: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeneDomains {
    included_layers: LayerRange,
    frozen_layers: LayerRange,
    learning_rates: Vec<f64>,
    dropouts: Vec<f64>,
}

impl TryFrom<RawGeneDomains> for GeneDomains {
    type Error = DomainError;

    fn try_from(raw: RawGeneDomains) -> Result<Self, Self::Error> {
        GeneDomains::new(raw.included_layers, raw.frozen_layers, raw.learning_rates, raw.dropouts)
    }
}

impl From<GeneDomains> for RawGeneDomains {
    fn from(d: GeneDomains) -> Self {
        RawGeneDomains {
            included_layers: d.included_layers,
            frozen_layers: d.frozen_layers,
            learning_rates: d.learning_rates,
            dropouts: d.dropouts,
        }
    }
}

impl Default for GeneDomains {
    fn default() -> Self {
        Self {
            included_layers: LayerRange::new(1, DENSENET121_LAYERS),
            frozen_layers: LayerRange::new(0, DENSENET121_BLOCKS[0] + DENSENET121_BLOCKS[1]),
            learning_rates: DEFAULT_LEARNING_RATES.to_vec(),
            dropouts: DEFAULT_DROPOUTS.to_vec(),
        }
    }
}

impl GeneDomains {
    pub fn new(
        included_layers: LayerRange,
        frozen_layers: LayerRange,
        mut learning_rates: Vec<f64>,
        mut dropouts: Vec<f64>,
    ) -> Result<Self, DomainError> {
        let invalid = |msg: String| Err(DomainError::InvalidDomains(msg));
        if included_layers.min < 1 {
            return invalid("included_layers.min must be at least 1".into());
        }
        if included_layers.min > included_layers.max {
            return invalid("included_layers.min exceeds included_layers.max".into());
        }
        if included_layers.max > DENSENET121_LAYERS {
            return invalid(format!(
                "included_layers.max must not exceed {DENSENET121_LAYERS} dense-block layers"
            ));
        }
        if frozen_layers.min > frozen_layers.max {
            return invalid("frozen_layers.min exceeds frozen_layers.max".into());
        }
        if frozen_layers.max > included_layers.max {
            return invalid("frozen_layers.max exceeds included_layers.max".into());
        }
        if frozen_layers.min > included_layers.min {
            return invalid("frozen_layers.min exceeds included_layers.min".into());
        }
        normalize_menu(Gene::LearningRate, &mut learning_rates, |v| v > 0.0)?;
        normalize_menu(Gene::Dropout, &mut dropouts, |v| v > 0.0 && v < 1.0)?;
        Ok(Self {
            included_layers,
            frozen_layers,
            learning_rates,
            dropouts,
        })
    }

    pub fn included_layers(&self) -> LayerRange {
        self.included_layers
    }

    pub fn frozen_layers(&self) -> LayerRange {
        self.frozen_layers
    }

    pub fn learning_rates(&self) -> &[f64] {
        &self.learning_rates
    }

    pub fn dropouts(&self) -> &[f64] {
        &self.dropouts
    }

    /// Number of points in the gene box, ignoring the frozen ≤ included
    /// constraint.
    pub fn box_size(&self) -> usize {
        (self.included_layers.span() as usize + 1)
            * (self.frozen_layers.span() as usize + 1)
            * self.learning_rates.len()
            * self.dropouts.len()
    }

    pub(crate) fn menu(&self, gene: Gene) -> &[f64] {
        match gene {
            Gene::LearningRate => &self.learning_rates,
            Gene::Dropout => &self.dropouts,
            _ => unreachable!("{gene} is not a menu gene"),
        }
    }

    /// Menu position of `value`, matched with a small relative tolerance so
    /// that `0.1` parsed from text finds the menu's `0.1`.
    pub fn menu_index(&self, gene: Gene, value: f64) -> Result<u16, DomainError> {
        self.menu(gene)
            .iter()
            .position(|&m| (m - value).abs() <= MENU_RELATIVE_TOLERANCE * m.abs().max(value.abs()))
            .map(|i| i as u16)
            .ok_or(DomainError::NotInMenu { gene, value })
    }

    /// Largest frozen count allowed alongside `included` layers.
    pub fn frozen_ceiling(&self, included: u32) -> u32 {
        self.frozen_layers.max.min(included)
    }
}

fn normalize_menu(gene: Gene, menu: &mut [f64], legal: impl Fn(f64) -> bool) -> Result<(), DomainError> {
    if menu.is_empty() {
        return Err(DomainError::InvalidDomains(format!("{gene} menu is empty")));
    }
    if menu.len() > usize::from(u16::MAX) {
        return Err(DomainError::InvalidDomains(format!("{gene} menu is too large")));
    }
    if let Some(bad) = menu.iter().find(|v| !v.is_finite() || !legal(**v)) {
        return Err(DomainError::InvalidDomains(format!(
            "{gene} menu entry {bad} is out of range"
        )));
    }
    menu.sort_by(f64::total_cmp);
    if menu.windows(2).any(|w| w[0] == w[1]) {
        return Err(DomainError::InvalidDomains(format!(
            "{gene} menu has duplicate entries"
        )));
    }
    Ok(())
}

/// A menu gene: position in the menu plus the value it stands for.
///
/// Equality and hashing use only the index.
#[derive(Debug, Clone, Copy)]
pub struct MenuChoice {
    index: u16,
    value: f64,
}

impl MenuChoice {
    pub fn index(&self) -> u16 {
        self.index
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

impl PartialEq for MenuChoice {
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index
    }
}

impl Eq for MenuChoice {}

impl Hash for MenuChoice {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.index.hash(state);
    }
}

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Chromosome {
    included_layers: u32,
    frozen_layers: u32,
    learning_rate: MenuChoice,
    dropout: MenuChoice,
}

impl Chromosome {
    /// Builds a chromosome from gene values, checking every invariant.
    pub fn new(
        domains: &GeneDomains,
        included_layers: u32,
        frozen_layers: u32,
        learning_rate: f64,
        dropout: f64,
    ) -> Result<Self, DomainError> {
        check_range(Gene::IncludedLayers, included_layers, domains.included_layers)?;
        check_range(Gene::FrozenLayers, frozen_layers, domains.frozen_layers)?;
        if frozen_layers > included_layers {
            return Err(DomainError::FrozenExceedsIncluded {
                frozen: frozen_layers,
                included: included_layers,
            });
        }
        let lr = domains.menu_index(Gene::LearningRate, learning_rate)?;
        let dr = domains.menu_index(Gene::Dropout, dropout)?;
        Ok(Self::from_parts(domains, included_layers, frozen_layers, lr, dr))
    }

    /// Builds a chromosome from menu positions.
    pub fn from_indices(
        domains: &GeneDomains,
        included_layers: u32,
        frozen_layers: u32,
        learning_rate_index: u16,
        dropout_index: u16,
    ) -> Result<Self, DomainError> {
        for (gene, idx) in [
            (Gene::LearningRate, learning_rate_index),
            (Gene::Dropout, dropout_index),
        ] {
            if usize::from(idx) >= domains.menu(gene).len() {
                return Err(DomainError::MenuIndexOutOfRange { gene, index: idx });
            }
        }
        let lr = domains.learning_rates[usize::from(learning_rate_index)];
        let dr = domains.dropouts[usize::from(dropout_index)];
        Self::new(domains, included_layers, frozen_layers, lr, dr)
    }

    /// Unchecked assembly; callers guarantee the invariants.
    pub(crate) fn from_parts(
        domains: &GeneDomains,
        included_layers: u32,
        frozen_layers: u32,
        lr_index: u16,
        dropout_index: u16,
    ) -> Self {
        debug_assert!(frozen_layers <= included_layers);
        Self {
            included_layers,
            frozen_layers,
            learning_rate: MenuChoice {
                index: lr_index,
                value: domains.learning_rates[usize::from(lr_index)],
            },
            dropout: MenuChoice {
                index: dropout_index,
                value: domains.dropouts[usize::from(dropout_index)],
            },
        }
    }

    pub fn included_layers(&self) -> u32 {
        self.included_layers
    }

    pub fn frozen_layers(&self) -> u32 {
        self.frozen_layers
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.value
    }

    pub fn dropout(&self) -> f64 {
        self.dropout.value
    }

    pub fn learning_rate_index(&self) -> u16 {
        self.learning_rate.index
    }

    pub fn dropout_index(&self) -> u16 {
        self.dropout.index
    }

    /// Cache key: integer genes as-is, menu genes by menu position.
    pub fn canonical_key(&self) -> ChromosomeKey {
        ChromosomeKey {
            included_layers: self.included_layers,
            frozen_layers: self.frozen_layers,
            learning_rate_index: self.learning_rate.index,
            dropout_index: self.dropout.index,
        }
    }

    pub fn to_architecture(&self) -> ArchitecturePlan {
        map_to_architecture(self)
    }

    /// Checks membership in `domains`, e.g. after deserializing.
    pub fn validate(&self, domains: &GeneDomains) -> Result<(), DomainError> {
        Chromosome::new(
            domains,
            self.included_layers,
            self.frozen_layers,
            self.learning_rate(),
            self.dropout(),
        )
        .map(|_| ())
    }

    pub fn values(&self) -> ChromosomeValues {
        ChromosomeValues {
            included_layers: self.included_layers,
            frozen_layers: self.frozen_layers,
            learning_rate: self.learning_rate(),
            dropout: self.dropout(),
        }
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.included_layers,
            self.frozen_layers,
            self.learning_rate(),
            self.dropout()
        )
    }
}

fn check_range(gene: Gene, value: u32, range: LayerRange) -> Result<(), DomainError> {
    if value < range.min {
        Err(DomainError::BelowMinimum {
            gene,
            value,
            min: range.min,
        })
    } else if value > range.max {
        Err(DomainError::AboveMaximum {
            gene,
            value,
            max: range.max,
        })
    } else {
        Ok(())
    }
}

/// Serialized form of a chromosome: plain gene values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChromosomeValues {
    pub included_layers: u32,
    pub frozen_layers: u32,
    pub learning_rate: f64,
    pub dropout: f64,
}

impl fmt::Display for ChromosomeValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.included_layers, self.frozen_layers, self.learning_rate, self.dropout
        )
    }
}

impl ChromosomeValues {
    pub fn resolve(&self, domains: &GeneDomains) -> Result<Chromosome, DomainError> {
        Chromosome::new(
            domains,
            self.included_layers,
            self.frozen_layers,
            self.learning_rate,
            self.dropout,
        )
    }
}

/// Exact, injective key over the gene box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChromosomeKey {
    pub included_layers: u32,
    pub frozen_layers: u32,
    pub learning_rate_index: u16,
    pub dropout_index: u16,
}

impl ChromosomeKey {
    /// Packs the key into one integer.
    pub fn packed(&self) -> u64 {
        (u64::from(self.included_layers) << 40)
            | (u64::from(self.frozen_layers) << 24)
            | (u64::from(self.learning_rate_index) << 12)
            | u64::from(self.dropout_index)
    }
}

impl fmt::Display for ChromosomeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.included_layers, self.frozen_layers, self.learning_rate_index, self.dropout_index
        )
    }
}

/// Draws a chromosome uniformly from `domains`.
///
/// Draw order: included layers, frozen layers, learning-rate index, dropout
/// index. The frozen gene is drawn from `[frozen.min, min(frozen.max,
/// included)]`, so it never exceeds the included gene.
pub fn sample_chromosome<R: Rng + ?Sized>(domains: &GeneDomains, rng: &mut R) -> Chromosome {
    let inc = domains.included_layers;
    let included = rng.gen_range(inc.min..=inc.max);
    let frozen = rng.gen_range(domains.frozen_layers.min..=domains.frozen_ceiling(included));
    let lr = rng.gen_range(0..domains.learning_rates.len()) as u16;
    let dr = rng.gen_range(0..domains.dropouts.len()) as u16;
    Chromosome::from_parts(domains, included, frozen, lr, dr)
}

/// Concrete transfer-learning layout derived from a chromosome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitecturePlan {
    /// Retained layers per dense block; trailing empty blocks are dropped.
    pub block_layer_counts: Vec<u32>,
    /// Dense-block layers frozen from the input side.
    pub frozen_prefix: u32,
    /// Transition + squeeze-and-excitation stages kept between blocks.
    pub se_layer_count: u32,
    pub learning_rate: f64,
    /// Dropout probability; placement is left to the trainer.
    pub dropout: f64,
}

impl ArchitecturePlan {
    pub fn included_layers(&self) -> u32 {
        self.block_layer_counts.iter().sum()
    }

    /// Recovers the chromosome a plan was built from.
    pub fn to_chromosome(&self, domains: &GeneDomains) -> Result<Chromosome, DomainError> {
        let c = Chromosome::new(
            domains,
            self.included_layers(),
            self.frozen_prefix,
            self.learning_rate,
            self.dropout,
        )?;
        if map_to_architecture(&c) != *self {
            return Err(DomainError::MalformedPlan);
        }
        Ok(c)
    }
}

/// Fills the dense blocks greedily from the input side and keeps a
/// transition/SE stage only where the next block retains at least one layer.
pub fn map_to_architecture(c: &Chromosome) -> ArchitecturePlan {
    let mut remaining = c.included_layers;
    let mut block_layer_counts = Vec::with_capacity(DENSENET121_BLOCKS.len());
    for capacity in DENSENET121_BLOCKS {
        if remaining == 0 {
            break;
        }
        let take = remaining.min(capacity);
        block_layer_counts.push(take);
        remaining -= take;
    }
    let se_layer_count = block_layer_counts.len().saturating_sub(1) as u32;
    ArchitecturePlan {
        block_layer_counts,
        frozen_prefix: c.frozen_layers,
        se_layer_count,
        learning_rate: c.learning_rate(),
        dropout: c.dropout(),
    }
}
