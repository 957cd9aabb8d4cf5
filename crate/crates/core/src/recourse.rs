//! Candidate search, recourse paths and the greedy planner.
//!
//! Candidates are real dataset subjects. Each is ranked by its projection:
//! outcome gain over the current state divided by the L1 distance between the
//! two states in normalized feature space.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::attribution::{
    attribution_table, group_others, importance_from_table, top_displayed, AttributionError,
    AttributionVector, BackgroundSet,
};
use crate::dataset::{Dataset, DatasetError, Schema, SubjectRecord};
use crate::model::Scorer;

/// Lower bound on the projection denominator.
pub const PROJECTION_EPSILON: f64 = 1e-6;
pub const DEFAULT_TARGET_OUTCOME: f64 = 0.8;
pub const DEFAULT_MAX_STEPS: usize = 10;
pub const TOP_TARGETS: usize = 3;
/// Raw feature change below which a trajectory slope is undefined.
pub const SLOPE_MIN_CHANGE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum RecourseError {
    #[error("path has no start state")]
    EmptyPath,
    #[error("`{0}` is not a candidate for the current state")]
    NotACandidate(String),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("candidate is the current subject `{0}`")]
    SameSubject(String),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
}

impl From<DatasetError> for RecourseError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::UnknownSubject(id) => RecourseError::UnknownSubject(id),
            other => RecourseError::InvalidConstraints(other.to_string()),
        }
    }
}

/// Filters applied when collecting candidate next states.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub immutable_features: Vec<String>,
    /// Allowed movement of an immutable feature, in normalized units.
    pub immutable_tolerance: f64,
    pub require_improvement: bool,
    /// Maximum normalized L1 distance; `None` is unbounded.
    pub max_l1_radius: Option<f64>,
    pub exclude_visited: bool,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            immutable_features: Vec::new(),
            immutable_tolerance: 0.05,
            require_improvement: true,
            max_l1_radius: None,
            exclude_visited: true,
        }
    }
}

impl ConstraintSet {
    /// Default constraints with every schema feature marked immutable held fixed.
    pub fn for_schema(schema: &Schema) -> Self {
        Self {
            immutable_features: schema
                .features()
                .iter()
                .filter(|f| !f.mutable)
                .map(|f| f.name.clone())
                .collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), RecourseError> {
        if let Some(name) = self
            .immutable_features
            .iter()
            .find(|n| schema.index_of(n).is_none())
        {
            return Err(RecourseError::InvalidConstraints(format!(
                "unknown feature `{name}`"
            )));
        }
        if !(0.0..=1.0).contains(&self.immutable_tolerance) {
            return Err(RecourseError::InvalidConstraints(
                "immutable_tolerance must lie in [0, 1]".into(),
            ));
        }
        if let Some(r) = self.max_l1_radius {
            if !(r > 0.0) {
                return Err(RecourseError::InvalidConstraints(
                    "max_l1_radius must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub projection: f64,
    /// Σ_f |n_f(candidate) − n_f(current)| over every schema feature.
    pub l1_change: f64,
    pub outcome_gain: f64,
}

impl Projection {
    pub fn new(outcome_gain: f64, l1_change: f64) -> Self {
        Self {
            projection: outcome_gain / l1_change.max(PROJECTION_EPSILON),
            l1_change,
            outcome_gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureDelta {
    /// Raw-unit change, candidate minus current.
    pub value: f64,
    /// Attribution change, candidate minus current.
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTarget {
    pub subject_id: String,
    pub outcome: f64,
    pub projection: f64,
    pub l1_change: f64,
    pub outcome_gain: f64,
    pub per_feature_delta: IndexMap<String, FeatureDelta>,
    pub top3: bool,
}

impl CandidateTarget {
    pub fn metrics(&self) -> Projection {
        Projection {
            projection: self.projection,
            l1_change: self.l1_change,
            outcome_gain: self.outcome_gain,
        }
    }
}

/// Total candidate order: projection descending, then smaller L1 change,
/// then subject id.
pub fn rank_order(a: &CandidateTarget, b: &CandidateTarget) -> Ordering {
    b.projection
        .total_cmp(&a.projection)
        .then_with(|| a.l1_change.total_cmp(&b.l1_change))
        .then_with(|| a.subject_id.cmp(&b.subject_id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecourseState {
    pub subject_id: String,
    pub values: Vec<f64>,
    pub outcome: f64,
    /// Grouped to the engine's displayed features.
    pub attribution: AttributionVector,
    /// Normalized value minus normalized dataset mean, per feature.
    pub deviation: IndexMap<String, f64>,
    /// How this state was reached from its predecessor; `None` for the start.
    pub arrival: Option<Projection>,
}

/// Visited states, first = start. Paths are values: extending or undoing
/// produces a new path and leaves the original untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoursePath {
    pub states: Vec<RecourseState>,
    pub target_outcome: f64,
}

impl Default for RecoursePath {
    fn default() -> Self {
        Self::new(DEFAULT_TARGET_OUTCOME)
    }
}

impl RecoursePath {
    pub fn new(target_outcome: f64) -> Self {
        Self {
            states: Vec::new(),
            target_outcome,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn last(&self) -> Option<&RecourseState> {
        self.states.last()
    }

    pub fn visits(&self, subject_id: &str) -> bool {
        self.states.iter().any(|s| s.subject_id == subject_id)
    }
}

/// Removes the last state.
pub fn undo(path: &RecoursePath) -> Result<RecoursePath, RecourseError> {
    if path.is_empty() {
        return Err(RecourseError::EmptyPath);
    }
    let mut next = path.clone();
    next.states.pop();
    Ok(next)
}

/// Attribution gained per raw unit of change in `feature` between two states.
pub fn trajectory_slope(
    schema: &Schema,
    a: &RecourseState,
    b: &RecourseState,
    feature: &str,
) -> Option<f64> {
    let i = schema.index_of(feature)?;
    let dx = b.values[i] - a.values[i];
    if dx.abs() <= SLOPE_MIN_CHANGE {
        return None;
    }
    let dphi = b.attribution.phi_of(feature)? - a.attribution.phi_of(feature)?;
    Some(dphi / dx)
}

pub fn deviation_stats(schema: &Schema, values: &[f64]) -> IndexMap<String, f64> {
    schema
        .features()
        .iter()
        .zip(values)
        .map(|(f, &v)| (f.name.clone(), f.normalize(v) - f.normalize(f.mean)))
        .collect()
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    TargetReached,
    Stuck,
    Budget,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::TargetReached => "target_reached",
            Termination::Stuck => "stuck",
            Termination::Budget => "budget",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPlan {
    pub path: RecoursePath,
    pub termination: Termination,
}

/// How the six highlighted features are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum DisplaySelection {
    /// Top six by mean |φ| over the dataset.
    #[default]
    ByImportance,
    Explicit(Vec<String>),
}

/// Dataset, model and background bundled with the precomputed attribution
/// table. Immutable once built.
pub struct Engine {
    dataset: Dataset,
    model: Arc<dyn Scorer>,
    background: BackgroundSet,
    importance: Vec<(String, f64)>,
    displayed: Vec<String>,
    outcomes: Vec<f64>,
    normalized: Vec<Vec<f64>>,
    attributions: Vec<AttributionVector>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("subjects", &self.dataset.len())
            .field("features", &self.dataset.schema.len())
            .field("background", &self.background.len())
            .field("displayed", &self.displayed)
            .finish()
    }
}

impl Engine {
    pub fn build(
        mut dataset: Dataset,
        model: Arc<dyn Scorer>,
        background: BackgroundSet,
        display: DisplaySelection,
    ) -> Result<Self, RecourseError> {
        let raw = attribution_table(model.as_ref(), &dataset, &background)?;
        let importance = importance_from_table(&raw)?;
        let displayed = match display {
            DisplaySelection::ByImportance => top_displayed(&importance),
            DisplaySelection::Explicit(names) => names,
        };
        dataset
            .schema
            .set_display_ranking(&displayed)
            .map_err(|e| match e {
                DatasetError::UnknownFeature(f) => AttributionError::UnknownFeature(f),
                other => AttributionError::UnknownFeature(other.to_string()),
            })?;
        let attributions = raw
            .iter()
            .map(|av| group_others(av, &displayed))
            .collect::<Result<Vec<_>, _>>()?;
        let outcomes = dataset
            .records
            .iter()
            .map(|r| model.score(&r.values))
            .collect();
        let normalized = dataset
            .records
            .iter()
            .map(|r| dataset.normalize(r).0)
            .collect();
        Ok(Self {
            dataset,
            model,
            background,
            importance,
            displayed,
            outcomes,
            normalized,
            attributions,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn schema(&self) -> &Schema {
        &self.dataset.schema
    }

    pub fn model(&self) -> &dyn Scorer {
        self.model.as_ref()
    }

    pub fn background(&self) -> &BackgroundSet {
        &self.background
    }

    pub fn importance(&self) -> &[(String, f64)] {
        &self.importance
    }

    pub fn displayed(&self) -> &[String] {
        &self.displayed
    }

    /// Grouped attributions, one per subject in dataset order.
    pub fn attributions(&self) -> &[AttributionVector] {
        &self.attributions
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    fn index(&self, subject_id: &str) -> Result<usize, RecourseError> {
        self.dataset
            .position(subject_id)
            .ok_or_else(|| RecourseError::UnknownSubject(subject_id.to_string()))
    }

    fn state_at(&self, i: usize, arrival: Option<Projection>) -> RecourseState {
        let record = &self.dataset.records[i];
        RecourseState {
            subject_id: record.id.clone(),
            values: record.values.clone(),
            outcome: self.outcomes[i],
            attribution: self.attributions[i].clone(),
            deviation: deviation_stats(self.schema(), &record.values),
            arrival,
        }
    }

    pub fn state(&self, subject_id: &str) -> Result<RecourseState, RecourseError> {
        Ok(self.state_at(self.index(subject_id)?, None))
    }

    /// A one-state path starting at `subject_id`.
    pub fn start(
        &self,
        subject_id: &str,
        target_outcome: f64,
    ) -> Result<RecoursePath, RecourseError> {
        let mut path = RecoursePath::new(target_outcome);
        path.states.push(self.state(subject_id)?);
        Ok(path)
    }

    pub fn projection_score(
        &self,
        current: &RecourseState,
        candidate: &SubjectRecord,
    ) -> Result<Projection, RecourseError> {
        if candidate.id == current.subject_id {
            return Err(RecourseError::SameSubject(candidate.id.clone()));
        }
        let from = self.schema().normalize(&current.values);
        let to = self.dataset.normalize(candidate);
        let gain = self.model.score(&candidate.values) - current.outcome;
        Ok(Projection::new(gain, l1_distance(&from.0, &to.0)))
    }

    /// Ranked candidates for the path's last state. Empty paths have none.
    pub fn find_candidates(
        &self,
        path: &RecoursePath,
        constraints: &ConstraintSet,
    ) -> Result<Vec<CandidateTarget>, RecourseError> {
        constraints.validate(self.schema())?;
        let Some(current) = path.last() else {
            return Ok(Vec::new());
        };
        let schema = self.schema();
        let from = schema.normalize(&current.values).0;
        let immutable: Vec<usize> = constraints
            .immutable_features
            .iter()
            .filter_map(|n| schema.index_of(n))
            .collect();

        let mut out = Vec::new();
        for (i, record) in self.dataset.records.iter().enumerate() {
            if record.id == current.subject_id
                || (constraints.exclude_visited && path.visits(&record.id))
            {
                continue;
            }
            let to = &self.normalized[i];
            if immutable
                .iter()
                .any(|&j| (to[j] - from[j]).abs() > constraints.immutable_tolerance)
            {
                continue;
            }
            let l1 = l1_distance(&from, to);
            if constraints.max_l1_radius.is_some_and(|r| l1 > r) {
                continue;
            }
            let gain = self.outcomes[i] - current.outcome;
            if constraints.require_improvement && !(gain > 0.0) {
                continue;
            }
            let metrics = Projection::new(gain, l1);
            let target_phi = &self.attributions[i];
            let per_feature_delta = schema
                .names()
                .enumerate()
                .map(|(j, name)| {
                    (
                        name.to_string(),
                        FeatureDelta {
                            value: record.values[j] - current.values[j],
                            phi: target_phi.phi[name] - current.attribution.phi[name],
                        },
                    )
                })
                .collect();
            out.push(CandidateTarget {
                subject_id: record.id.clone(),
                outcome: self.outcomes[i],
                projection: metrics.projection,
                l1_change: metrics.l1_change,
                outcome_gain: metrics.outcome_gain,
                per_feature_delta,
                top3: false,
            });
        }
        out.sort_by(rank_order);
        for c in out.iter_mut().take(TOP_TARGETS) {
            c.top3 = true;
        }
        Ok(out)
    }

    /// Appends `chosen` to the path; it must be one of the current candidates.
    pub fn extend_path(
        &self,
        path: &RecoursePath,
        chosen: &str,
        constraints: &ConstraintSet,
    ) -> Result<RecoursePath, RecourseError> {
        if path.is_empty() {
            return Err(RecourseError::EmptyPath);
        }
        let i = self.index(chosen)?;
        let candidate = self
            .find_candidates(path, constraints)?
            .into_iter()
            .find(|c| c.subject_id == chosen)
            .ok_or_else(|| RecourseError::NotACandidate(chosen.to_string()))?;
        let mut next = path.clone();
        next.states
            .push(self.state_at(i, Some(candidate.metrics())));
        Ok(next)
    }

    /// Repeatedly takes the top-ranked candidate until the target outcome is
    /// reached, no candidate remains, or `max_steps` extensions were made.
    pub fn greedy_plan(
        &self,
        start: &str,
        constraints: &ConstraintSet,
        target_outcome: f64,
        max_steps: usize,
    ) -> Result<GreedyPlan, RecourseError> {
        let mut path = self.start(start, target_outcome)?;
        let mut steps = 0;
        let termination = loop {
            if path.last().expect("started").outcome >= target_outcome {
                break Termination::TargetReached;
            }
            if steps >= max_steps {
                break Termination::Budget;
            }
            let candidates = self.find_candidates(&path, constraints)?;
            let Some(best) = candidates.first() else {
                break Termination::Stuck;
            };
            let i = self.index(&best.subject_id)?;
            path.states.push(self.state_at(i, Some(best.metrics())));
            steps += 1;
        };
        Ok(GreedyPlan { path, termination })
    }
}
