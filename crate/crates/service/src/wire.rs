//! JSON documents exchanged with the browser companion.
//!
//! Reals go out with 17 significant digits so responses are bit-stable.

use std::io;

use indexmap::IndexMap;
use recourse_core::attribution::{stacked_segments, AttributionVector, SegmentKind};
use recourse_core::numfmt::sig17;
use recourse_core::recourse::{CandidateTarget, ConstraintSet, RecoursePath, RecourseState};
use recourse_core::{Engine, Schema};
use serde::{Deserialize, Serialize};

/// serde_json formatter writing every `f64` via [`sig17`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Sig17Formatter;

impl serde_json::ser::Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(sig17(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter);
    value
        .serialize(&mut ser)
        .expect("documents serialize into memory");
    out
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ErrorDoc {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct FeatureDoc {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub mean_normalized: f64,
    pub mutable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub display_rank: Option<u8>,
}

#[derive(Debug, Serialize)]
pub struct SchemaDoc {
    pub features: Vec<FeatureDoc>,
    /// Ranked feature names, rank 1 first.
    pub displayed: Vec<String>,
}

impl SchemaDoc {
    pub fn new(schema: &Schema) -> Self {
        Self {
            features: schema
                .features()
                .iter()
                .map(|f| FeatureDoc {
                    name: f.name.clone(),
                    min: f.min,
                    max: f.max,
                    mean: f.mean,
                    mean_normalized: f.normalize(f.mean),
                    mutable: f.mutable,
                    display_rank: f.display_rank,
                })
                .collect(),
            displayed: schema.displayed(),
        }
    }
}

fn displayed_phi(av: &AttributionVector) -> IndexMap<String, f64> {
    av.displayed_phi()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct SubjectDoc {
    pub id: String,
    pub values: IndexMap<String, f64>,
    pub outcome: f64,
    pub base: f64,
    /// Displayed features only.
    pub phi: IndexMap<String, f64>,
    pub others: f64,
}

#[derive(Debug, Serialize)]
pub struct SubjectsDoc {
    pub subjects: Vec<SubjectDoc>,
}

impl SubjectsDoc {
    pub fn new(engine: &Engine) -> Self {
        let schema = engine.schema();
        let subjects = engine
            .dataset()
            .records
            .iter()
            .zip(engine.attributions())
            .zip(engine.outcomes())
            .map(|((r, av), &outcome)| SubjectDoc {
                id: r.id.clone(),
                values: schema.values_to_map(&r.values),
                outcome,
                base: av.base,
                phi: displayed_phi(av),
                others: av.others,
            })
            .collect();
        Self { subjects }
    }
}

/// Session options accepted by `POST /api/session`. Absent fields keep
/// their defaults.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub immutable_features: Option<Vec<String>>,
    pub immutable_tolerance: Option<f64>,
    pub require_improvement: Option<bool>,
    pub max_l1_radius: Option<f64>,
    pub exclude_visited: Option<bool>,
    pub target_outcome: Option<f64>,
}

impl SessionRequest {
    pub fn apply(&self, mut base: ConstraintSet) -> ConstraintSet {
        if let Some(v) = &self.immutable_features {
            base.immutable_features = v.clone();
        }
        if let Some(v) = self.immutable_tolerance {
            base.immutable_tolerance = v;
        }
        if let Some(v) = self.require_improvement {
            base.require_improvement = v;
        }
        if let Some(v) = self.max_l1_radius {
            base.max_l1_radius = Some(v);
        }
        if let Some(v) = self.exclude_visited {
            base.exclude_visited = v;
        }
        base
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectRequest {
    pub subject_id: String,
}

#[derive(Debug, Serialize)]
pub struct ConstraintsDoc {
    pub immutable_features: Vec<String>,
    pub immutable_tolerance: f64,
    pub require_improvement: bool,
    pub max_l1_radius: Option<f64>,
    pub exclude_visited: bool,
}

impl From<&ConstraintSet> for ConstraintsDoc {
    fn from(c: &ConstraintSet) -> Self {
        Self {
            immutable_features: c.immutable_features.clone(),
            immutable_tolerance: c.immutable_tolerance,
            require_improvement: c.require_improvement,
            max_l1_radius: c.max_l1_radius,
            exclude_visited: c.exclude_visited,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SessionDoc {
    pub session_id: String,
    pub target_outcome: f64,
    pub constraints: ConstraintsDoc,
}

#[derive(Debug, Serialize)]
pub struct SegmentDoc {
    pub sign: &'static str,
    pub label: String,
    pub y_from: f64,
    pub y_to: f64,
}

#[derive(Debug, Serialize)]
pub struct DeviationDoc {
    pub feature: String,
    pub range_min: f64,
    pub range_max: f64,
    pub mean: f64,
    pub current: f64,
    pub deviation: f64,
}

#[derive(Debug, Serialize)]
pub struct StateDoc {
    pub step: usize,
    pub subject_id: String,
    pub values: IndexMap<String, f64>,
    pub outcome: f64,
    pub base: f64,
    pub phi: IndexMap<String, f64>,
    pub others: f64,
    pub segments: Vec<SegmentDoc>,
    pub deviations: Vec<DeviationDoc>,
    pub projection: Option<f64>,
    pub l1_change: Option<f64>,
}

impl StateDoc {
    fn new(schema: &Schema, step: usize, st: &RecourseState) -> Self {
        let segments = stacked_segments(&st.attribution)
            .expect("engine states are grouped")
            .into_iter()
            .map(|s| SegmentDoc {
                sign: match s.kind {
                    SegmentKind::Negative => "negative",
                    SegmentKind::Base => "base",
                    SegmentKind::Positive => "positive",
                },
                label: s.label.name().to_string(),
                y_from: s.y_from,
                y_to: s.y_to,
            })
            .collect();
        let deviations = schema
            .features()
            .iter()
            .zip(&st.values)
            .map(|(f, &v)| DeviationDoc {
                feature: f.name.clone(),
                range_min: 0.0,
                range_max: 1.0,
                mean: f.normalize(f.mean),
                current: f.normalize(v),
                deviation: st.deviation[&f.name],
            })
            .collect();
        Self {
            step,
            subject_id: st.subject_id.clone(),
            values: schema.values_to_map(&st.values),
            outcome: st.outcome,
            base: st.attribution.base,
            phi: displayed_phi(&st.attribution),
            others: st.attribution.others,
            segments,
            deviations,
            projection: st.arrival.map(|a| a.projection),
            l1_change: st.arrival.map(|a| a.l1_change),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PathDoc {
    pub target_outcome: f64,
    pub states: Vec<StateDoc>,
}

impl PathDoc {
    pub fn new(schema: &Schema, path: &RecoursePath) -> Self {
        Self {
            target_outcome: path.target_outcome,
            states: path
                .states
                .iter()
                .enumerate()
                .map(|(i, st)| StateDoc::new(schema, i, st))
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DeltaDoc {
    pub value: f64,
    pub phi: f64,
}

#[derive(Debug, Serialize)]
pub struct CandidateDoc {
    pub subject_id: String,
    pub outcome: f64,
    pub projection: f64,
    pub l1_change: f64,
    pub outcome_gain: f64,
    pub top3: bool,
    pub per_feature_delta: IndexMap<String, DeltaDoc>,
}

impl From<&CandidateTarget> for CandidateDoc {
    fn from(c: &CandidateTarget) -> Self {
        Self {
            subject_id: c.subject_id.clone(),
            outcome: c.outcome,
            projection: c.projection,
            l1_change: c.l1_change,
            outcome_gain: c.outcome_gain,
            top3: c.top3,
            per_feature_delta: c
                .per_feature_delta
                .iter()
                .map(|(k, d)| {
                    (
                        k.clone(),
                        DeltaDoc {
                            value: d.value,
                            phi: d.phi,
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CandidatesDoc {
    /// Size of the full ranking before any limit.
    pub total: usize,
    pub candidates: Vec<CandidateDoc>,
}

impl CandidatesDoc {
    pub fn new(ranked: &[CandidateTarget], limit: Option<usize>) -> Self {
        let shown = limit.map_or(ranked.len(), |l| l.min(ranked.len()));
        Self {
            total: ranked.len(),
            candidates: ranked[..shown].iter().map(CandidateDoc::from).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StepDoc {
    pub path: PathDoc,
    pub candidates: CandidatesDoc,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_seventeen_digits() {
        #[derive(Serialize)]
        struct Probe {
            x: f64,
            n: usize,
            missing: Option<f64>,
            nan: f64,
        }
        let bytes = to_json_bytes(&Probe {
            x: 0.1,
            n: 3,
            missing: None,
            nan: f64::NAN,
        });
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            r#"{"x":1.0000000000000001e-1,"n":3,"missing":null,"nan":null}"#
        );
    }

    #[test]
    fn session_request_overrides_defaults() {
        let req: SessionRequest =
            serde_json::from_str(r#"{"max_l1_radius": 2.0, "exclude_visited": false}"#).unwrap();
        let c = req.apply(ConstraintSet::default());
        assert_eq!(c.max_l1_radius, Some(2.0));
        assert!(!c.exclude_visited);
        assert!(c.require_improvement);
        assert!(serde_json::from_str::<SessionRequest>(r#"{"radius": 1}"#).is_err());
    }
}
