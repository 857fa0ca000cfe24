//! Evaluation statistics: ROC-AUC and McNemar's test.

use serde::{Serialize, Serializer};

use crate::error::MetricsError;

/// Binary labels with one score per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    labels: Vec<bool>,
    scores: Vec<f64>,
}

impl ScoredLabels {
    pub fn new(labels: Vec<bool>, scores: Vec<f64>) -> Result<Self, MetricsError> {
        if labels.len() != scores.len() {
            return Err(MetricsError::LengthMismatch(labels.len(), scores.len()));
        }
        if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(MetricsError::NonFiniteScore(s));
        }
        Ok(Self { labels, scores })
    }

    /// Labels given as 0/1 numbers.
    pub fn from_binary(labels: &[u8], scores: &[f64]) -> Result<Self, MetricsError> {
        let labels = labels
            .iter()
            .map(|&l| match l {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(MetricsError::NonBinaryLabel(f64::from(other))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(labels, scores.to_vec())
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Area under the ROC curve.
///
/// Computed as the Mann-Whitney statistic: the probability that a random
/// positive scores above a random negative, ties counting one half. Tied
/// scores receive their average rank.
pub fn auc(data: &ScoredLabels) -> Result<f64, MetricsError> {
    let n_pos = data.labels.iter().filter(|&&l| l).count();
    let n_neg = data.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));

    // Sum of (doubled) ranks of the positives; doubling keeps tied average
    // ranks integral.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && data.scores[order[j]] == data.scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j, average (i + 1 + j) / 2
        let doubled_avg = (i + 1 + j) as u128;
        let positives = order[i..j].iter().filter(|&&k| data.labels[k]).count() as u128;
        doubled_rank_sum += doubled_avg * positives;
        i = j;
    }
    let n_pos = n_pos as u128;
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg as u128) as f64)
}

/// Paired agreement counts between two classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContingencyTable {
    /// Both correct.
    pub a: u64,
    /// Only the first model correct.
    pub b: u64,
    /// Only the second model correct.
    pub c: u64,
    /// Both wrong.
    pub d: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

pub fn build_contingency(truth: &[bool], pred1: &[bool], pred2: &[bool]) -> Result<ContingencyTable, MetricsError> {
    if truth.len() != pred1.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), pred1.len()));
    }
    if truth.len() != pred2.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), pred2.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut t = ContingencyTable { a: 0, b: 0, c: 0, d: 0 };
    for ((&y, &p1), &p2) in truth.iter().zip(pred1).zip(pred2) {
        match (p1 == y, p2 == y) {
            (true, true) => t.a += 1,
            (true, false) => t.b += 1,
            (false, true) => t.c += 1,
            (false, false) => t.d += 1,
        }
    }
    Ok(t)
}

/// McNemar's test outcome; statistic and p-value are absent when there are
/// no discordant pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemarResult {
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

impl McNemarResult {
    pub fn computable(&self) -> bool {
        self.statistic.is_some()
    }

    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value.is_some_and(|p| p < alpha)
    }
}

impl Serialize for McNemarResult {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("computable", &self.computable())?;
        if let (Some(stat), Some(p)) = (self.statistic, self.p_value) {
            m.serialize_entry("statistic", &stat)?;
            m.serialize_entry("p_value", &p)?;
        }
        m.end()
    }
}

/// McNemar's chi-square test with continuity correction, as computed by R's
/// `mcnemar.test`: `(|b - c| - 1)^2 / (b + c)` on one degree of freedom.
pub fn mcnemar(t: &ContingencyTable) -> McNemarResult {
    let n = t.b + t.c;
    if n == 0 {
        return McNemarResult {
            statistic: None,
            p_value: None,
        };
    }
    let diff = t.b.abs_diff(t.c) as f64 - 1.0;
    let statistic = diff * diff / n as f64;
    McNemarResult {
        statistic: Some(statistic),
        p_value: Some(chi_square_1_upper_tail(statistic)),
    }
}

/// `P(X > x)` for a chi-square variable with one degree of freedom,
/// `erfc(sqrt(x / 2))`.
pub fn chi_square_1_upper_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc((x / 2.0).sqrt())
}
