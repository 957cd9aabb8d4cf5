//! Exact interventional Shapley values by coalition enumeration.
//!
//! The value of a coalition `S` is the mean model output over the background
//! set when the subject's own values are kept on `S` and each background
//! record supplies the remaining features:
//!
//! ```text
//! v(S)  = 1/B · Σ_b score(x_S, b_{N\S})
//! φ_i   = Σ_{S ⊆ N\{i}} |S|!(M-|S|-1)!/M! · (v(S ∪ {i}) - v(S))
//! ```
//!
//! Every coalition is evaluated once per subject, so one attribution costs
//! `2^M · B` model calls.

use indexmap::IndexMap;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{Dataset, Schema, SubjectRecord, MAX_DISPLAYED};
use crate::model::Scorer;

/// Enumeration is exponential in the feature count; refuse beyond this.
pub const MAX_FEATURES: usize = 15;
pub const DEFAULT_BACKGROUND_SIZE: usize = 32;
pub const DEFAULT_BACKGROUND_SEED: u64 = 42;
pub const OTHERS: &str = "others";

#[derive(Debug, Error, PartialEq)]
pub enum AttributionError {
    #[error("{0} features exceed the exact enumeration limit of {MAX_FEATURES}")]
    TooManyFeatures(usize),
    #[error("background set is empty")]
    EmptyBackground,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("{0} displayed features exceed the limit of {MAX_DISPLAYED}")]
    TooManyDisplayed(usize),
    #[error("attribution vector has no displayed grouping")]
    UngroupedVector,
    #[error("record `{id}` has {actual} values, schema has {expected}")]
    SchemaMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },
    #[error("no subjects to aggregate")]
    NoSubjects,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundSource {
    Sampled,
    Full,
}

/// Reference records that fill in absent features.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub source: BackgroundSource,
}

impl BackgroundSet {
    pub fn full(dataset: &Dataset) -> Self {
        Self {
            ids: dataset.records.iter().map(|r| r.id.clone()).collect(),
            values: dataset.records.iter().map(|r| r.values.clone()).collect(),
            source: BackgroundSource::Full,
        }
    }

    /// Seeded uniform sample without replacement, kept in dataset order.
    /// Falls back to the whole dataset when it has at most `size` rows.
    pub fn sample(dataset: &Dataset, size: usize, seed: u64) -> Self {
        if dataset.len() <= size {
            return Self::full(dataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, dataset.len(), size).into_vec();
        picked.sort_unstable();
        Self {
            ids: picked
                .iter()
                .map(|&i| dataset.records[i].id.clone())
                .collect(),
            values: picked
                .iter()
                .map(|&i| dataset.records[i].values.clone())
                .collect(),
            source: BackgroundSource::Sampled,
        }
    }

    pub fn from_records(records: &[SubjectRecord]) -> Self {
        Self {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            values: records.iter().map(|r| r.values.clone()).collect(),
            source: BackgroundSource::Sampled,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Base value plus one Shapley value per feature.
///
/// `phi` always holds every schema feature. Once grouped, `displayed` names
/// the highlighted features and `others` is the summed attribution of the
/// rest, so `base + Σ_displayed φ + others` reproduces the model output.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionVector {
    pub subject_id: String,
    pub base: f64,
    pub phi: IndexMap<String, f64>,
    pub others: f64,
    pub displayed: Option<Vec<String>>,
}

impl AttributionVector {
    /// Reconstructed model output.
    pub fn total(&self) -> f64 {
        match &self.displayed {
            None => self.base + self.phi.values().sum::<f64>() + self.others,
            Some(shown) => self.base + shown.iter().map(|f| self.phi[f]).sum::<f64>() + self.others,
        }
    }

    pub fn phi_of(&self, feature: &str) -> Option<f64> {
        self.phi.get(feature).copied()
    }

    /// Displayed features with their values, in display order. An ungrouped
    /// vector yields every feature.
    pub fn displayed_phi(&self) -> Vec<(&str, f64)> {
        match &self.displayed {
            None => self.phi.iter().map(|(k, v)| (k.as_str(), *v)).collect(),
            Some(shown) => shown.iter().map(|f| (f.as_str(), self.phi[f])).collect(),
        }
    }
}

fn shapley_weights(m: usize) -> Vec<f64> {
    let fact: Vec<f64> = (0..=m)
        .scan(1.0_f64, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        })
        .collect();
    (0..m)
        .map(|s| fact[s] * fact[m - s - 1] / fact[m])
        .collect()
}

/// Coalition values `v(mask)` for every subset of features.
fn coalition_values(model: &dyn Scorer, subject: &[f64], background: &BackgroundSet) -> Vec<f64> {
    let m = subject.len();
    let inv_b = 1.0 / background.len() as f64;
    let mut buf = vec![0.0; m];
    (0..1usize << m)
        .map(|mask| {
            let mut total = 0.0;
            for row in &background.values {
                for j in 0..m {
                    buf[j] = if mask >> j & 1 == 1 {
                        subject[j]
                    } else {
                        row[j]
                    };
                }
                total += model.score(&buf);
            }
            total * inv_b
        })
        .collect()
}

pub fn shapley_exact(
    model: &dyn Scorer,
    schema: &Schema,
    subject: &SubjectRecord,
    background: &BackgroundSet,
) -> Result<AttributionVector, AttributionError> {
    let m = schema.len();
    if m > MAX_FEATURES {
        return Err(AttributionError::TooManyFeatures(m));
    }
    if background.is_empty() {
        return Err(AttributionError::EmptyBackground);
    }
    if subject.values.len() != m {
        return Err(AttributionError::SchemaMismatch {
            id: subject.id.clone(),
            expected: m,
            actual: subject.values.len(),
        });
    }

    let v = coalition_values(model, &subject.values, background);
    let weights = shapley_weights(m);
    let phi = schema
        .names()
        .enumerate()
        .map(|(i, name)| {
            let bit = 1usize << i;
            let value = (0..v.len())
                .filter(|mask| mask & bit == 0)
                .map(|mask| weights[mask.count_ones() as usize] * (v[mask | bit] - v[mask]))
                .sum::<f64>();
            (name.to_string(), value)
        })
        .collect();

    Ok(AttributionVector {
        subject_id: subject.id.clone(),
        base: v[0],
        phi,
        others: 0.0,
        displayed: None,
    })
}

/// Keeps `displayed` as the highlighted features and folds the rest into `others`.
pub fn group_others(
    av: &AttributionVector,
    displayed: &[String],
) -> Result<AttributionVector, AttributionError> {
    if displayed.len() > MAX_DISPLAYED {
        return Err(AttributionError::TooManyDisplayed(displayed.len()));
    }
    if let Some(unknown) = displayed.iter().find(|f| !av.phi.contains_key(*f)) {
        return Err(AttributionError::UnknownFeature(unknown.clone()));
    }
    let others = av
        .phi
        .iter()
        .filter(|(name, _)| !displayed.contains(name))
        .map(|(_, v)| v)
        .sum();
    Ok(AttributionVector {
        others,
        displayed: Some(displayed.to_vec()),
        ..av.clone()
    })
}

/// Attributions for every dataset subject, computed in parallel.
pub fn attribution_table(
    model: &dyn Scorer,
    dataset: &Dataset,
    background: &BackgroundSet,
) -> Result<Vec<AttributionVector>, AttributionError> {
    dataset
        .records
        .par_iter()
        .map(|r| shapley_exact(model, &dataset.schema, r, background))
        .collect()
}

/// Mean |φ| per feature, sorted descending with ties broken by name.
pub fn importance_from_table(
    table: &[AttributionVector],
) -> Result<Vec<(String, f64)>, AttributionError> {
    let first = table.first().ok_or(AttributionError::NoSubjects)?;
    let n = table.len() as f64;
    let mut ranked: Vec<(String, f64)> = first
        .phi
        .keys()
        .map(|name| {
            let total: f64 = table.iter().map(|av| av.phi[name].abs()).sum();
            (name.clone(), total / n)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

pub fn global_importance(
    model: &dyn Scorer,
    dataset: &Dataset,
    background: &BackgroundSet,
) -> Result<Vec<(String, f64)>, AttributionError> {
    importance_from_table(&attribution_table(model, dataset, background)?)
}

/// The first six names of an importance ranking.
pub fn top_displayed(ranking: &[(String, f64)]) -> Vec<String> {
    ranking
        .iter()
        .take(MAX_DISPLAYED)
        .map(|(n, _)| n.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Negative,
    Base,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentLabel {
    Feature(String),
    Others,
    Base,
}

impl SegmentLabel {
    pub fn name(&self) -> &str {
        match self {
            SegmentLabel::Feature(n) => n,
            SegmentLabel::Others => OTHERS,
            SegmentLabel::Base => "base",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub label: SegmentLabel,
    pub y_from: f64,
    pub y_to: f64,
}

impl Segment {
    pub fn height(&self) -> f64 {
        (self.y_to - self.y_from).abs()
    }
}

/// Lays out a grouped vector as one stacked column.
///
/// Negative contributions hang downward from zero (largest first), the base
/// value then rises from the lowest point, and positive contributions stack
/// on top of it (largest first). The top of the column is the model output.
/// Zero contributions produce no segment.
pub fn stacked_segments(av: &AttributionVector) -> Result<Vec<Segment>, AttributionError> {
    let shown = av
        .displayed
        .as_ref()
        .ok_or(AttributionError::UngroupedVector)?;
    let mut entries: Vec<(SegmentLabel, f64)> = shown
        .iter()
        .map(|f| (SegmentLabel::Feature(f.clone()), av.phi[f]))
        .collect();
    entries.push((SegmentLabel::Others, av.others));

    let by_magnitude = |a: &(SegmentLabel, f64), b: &(SegmentLabel, f64)| {
        b.1.abs()
            .total_cmp(&a.1.abs())
            .then_with(|| a.0.name().cmp(b.0.name()))
    };
    let mut negative: Vec<_> = entries.iter().filter(|e| e.1 < 0.0).cloned().collect();
    let mut positive: Vec<_> = entries.iter().filter(|e| e.1 > 0.0).cloned().collect();
    negative.sort_by(by_magnitude);
    positive.sort_by(by_magnitude);

    let mut segments = Vec::with_capacity(entries.len() + 1);
    let mut y = 0.0;
    for (label, phi) in negative {
        let next = y + phi;
        segments.push(Segment {
            kind: SegmentKind::Negative,
            label,
            y_from: y,
            y_to: next,
        });
        y = next;
    }
    let top_of_base = y + av.base;
    segments.push(Segment {
        kind: SegmentKind::Base,
        label: SegmentLabel::Base,
        y_from: y,
        y_to: top_of_base,
    });
    y = top_of_base;
    for (label, phi) in positive {
        let next = y + phi;
        segments.push(Segment {
            kind: SegmentKind::Positive,
            label,
            y_from: y,
            y_to: next,
        });
        y = next;
    }
    Ok(segments)
}
