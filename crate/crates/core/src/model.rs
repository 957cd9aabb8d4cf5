//! Black-box probability scorers and the in-repo logistic regression.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use thiserror::Error;

use crate::dataset::{Dataset, Schema, SubjectRecord};
use crate::numfmt::sig17;

pub const BIAS_KEY: &str = "__bias__";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data has no labels")]
    NoLabels,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("record `{id}` is unlabeled")]
    MissingLabel { id: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("failed to access model file: {0}")]
    Io(#[from] std::io::Error),
}

/// A probability-valued model over raw feature values in schema order.
pub trait Scorer: Send + Sync {
    fn score(&self, values: &[f64]) -> f64;
}

impl<F> Scorer for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn score(&self, values: &[f64]) -> f64 {
        self(values)
    }
}

/// Scores a record after checking it carries one value per schema feature.
pub fn score(
    model: &dyn Scorer,
    schema: &Schema,
    record: &SubjectRecord,
) -> Result<f64, ModelError> {
    if record.values.len() != schema.len() {
        return Err(ModelError::SchemaMismatch(format!(
            "record `{}` has {} values, schema has {} features",
            record.id,
            record.values.len(),
            schema.len()
        )));
    }
    Ok(model.score(&record.values))
}

pub fn score_batch(
    model: &dyn Scorer,
    schema: &Schema,
    records: &[SubjectRecord],
) -> Result<Vec<f64>, ModelError> {
    records.iter().map(|r| score(model, schema, r)).collect()
}

/// Logistic sigmoid kept strictly inside (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Min/max scaling carried by models that work on normalized inputs.
#[derive(Debug, Clone, PartialEq)]
struct Scaling {
    min: Vec<f64>,
    span: Vec<f64>,
}

impl Scaling {
    fn from_schema(schema: &Schema) -> Self {
        Self {
            min: schema.features().iter().map(|f| f.min).collect(),
            span: schema.features().iter().map(|f| f.span()).collect(),
        }
    }

    fn linear(&self, weights: &[f64], bias: f64, values: &[f64]) -> f64 {
        let mut z = bias;
        for i in 0..weights.len() {
            z += weights[i] * ((values[i] - self.min[i]) / self.span[i]);
        }
        z
    }
}

/// `sigmoid(bias + Σ w_f · n_f(x))` where `n_f` is the min/max-normalized value.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub feature_order: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    scaling: Scaling,
}

impl LogisticModel {
    pub fn new(schema: &Schema, weights: Vec<f64>, bias: f64) -> Result<Self, ModelError> {
        if weights.len() != schema.len() {
            return Err(ModelError::SchemaMismatch(format!(
                "{} weights for {} features",
                weights.len(),
                schema.len()
            )));
        }
        Ok(Self {
            feature_order: schema.names().map(str::to_string).collect(),
            weights,
            bias,
            scaling: Scaling::from_schema(schema),
        })
    }

    pub fn zeros(schema: &Schema) -> Self {
        Self::new(schema, vec![0.0; schema.len()], 0.0).expect("lengths match")
    }

    pub fn logit(&self, values: &[f64]) -> f64 {
        self.scaling.linear(&self.weights, self.bias, values)
    }

    pub fn weight(&self, name: &str) -> Option<f64> {
        self.feature_order
            .iter()
            .position(|n| n == name)
            .map(|i| self.weights[i])
    }

    /// Evaluates on a name-keyed map; keys must match the model's features exactly.
    pub fn score_map(&self, values: &IndexMap<String, f64>) -> Result<f64, ModelError> {
        if values.len() != self.feature_order.len() {
            return Err(ModelError::SchemaMismatch(format!(
                "{} values for {} features",
                values.len(),
                self.feature_order.len()
            )));
        }
        let dense = self
            .feature_order
            .iter()
            .map(|n| {
                values
                    .get(n)
                    .copied()
                    .ok_or_else(|| ModelError::SchemaMismatch(format!("missing `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.score(&dense))
    }

    /// Tab-separated `name<TAB>weight` lines followed by the bias line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, w) in self.feature_order.iter().zip(&self.weights) {
            let _ = writeln!(out, "{name}\t{}", sig17(*w));
        }
        let _ = writeln!(out, "{BIAS_KEY}\t{}", sig17(self.bias));
        out
    }

    /// Parses the text format; weights are bound to `schema`'s normalization.
    pub fn from_text(text: &str, schema: &Schema) -> Result<Self, ModelError> {
        let mut entries: HashMap<String, f64> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (name, value) = line.split_once('\t').ok_or_else(|| ModelError::Parse {
                line: line_no,
                message: "expected `name<TAB>weight`".into(),
            })?;
            let value: f64 = value.trim().parse().map_err(|_| ModelError::Parse {
                line: line_no,
                message: format!("`{}` is not a number", value.trim()),
            })?;
            if entries.insert(name.to_string(), value).is_some() {
                return Err(ModelError::Parse {
                    line: line_no,
                    message: format!("`{name}` repeated"),
                });
            }
        }
        let bias = entries
            .remove(BIAS_KEY)
            .ok_or_else(|| ModelError::SchemaMismatch(format!("no `{BIAS_KEY}` line")))?;
        let weights = schema
            .names()
            .map(|n| {
                entries
                    .remove(n)
                    .ok_or_else(|| ModelError::SchemaMismatch(format!("no weight for `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(extra) = entries.keys().next() {
            return Err(ModelError::SchemaMismatch(format!(
                "weight for unknown feature `{extra}`"
            )));
        }
        Self::new(schema, weights, bias)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, schema: &Schema) -> Result<Self, ModelError> {
        Self::from_text(&std::fs::read_to_string(path)?, schema)
    }
}

impl Scorer for LogisticModel {
    fn score(&self, values: &[f64]) -> f64 {
        sigmoid(self.logit(values))
    }
}

/// `bias + Σ w_f · n_f(x)` with no link function. Unbounded; used to check
/// attribution against closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
    scaling: Scaling,
}

impl LinearScorer {
    pub fn new(schema: &Schema, weights: Vec<f64>, bias: f64) -> Self {
        assert_eq!(weights.len(), schema.len(), "one weight per feature");
        Self {
            weights,
            bias,
            scaling: Scaling::from_schema(schema),
        }
    }
}

impl Scorer for LinearScorer {
    fn score(&self, values: &[f64]) -> f64 {
        self.scaling.linear(&self.weights, self.bias, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    /// Kept for reproducible invocations; full-batch descent from zero
    /// initialization consumes no randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 2000,
            l2_lambda: 1e-3,
            seed: 42,
        }
    }
}

/// L2-regularized mean cross-entropy over normalized features.
///
/// Parameters are laid out as `[w_0, .., w_{m-1}, bias]`; the bias is not
/// regularized.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
    l2_lambda: f64,
}

impl LogisticObjective {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<f64>, l2_lambda: f64) -> Self {
        assert_eq!(inputs.len(), labels.len());
        Self {
            inputs,
            labels,
            l2_lambda,
        }
    }

    pub fn from_dataset(dataset: &Dataset, l2_lambda: f64) -> Result<Self, ModelError> {
        let mut labels = Vec::with_capacity(dataset.len());
        let mut inputs = Vec::with_capacity(dataset.len());
        for r in &dataset.records {
            let y = r
                .label
                .ok_or_else(|| ModelError::MissingLabel { id: r.id.clone() })?;
            labels.push(f64::from(y));
            inputs.push(dataset.normalize(r).0);
        }
        Ok(Self::new(inputs, labels, l2_lambda))
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len) + 1
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.loss_and_gradient(params).0
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let m = params.len() - 1;
        let (weights, bias) = (&params[..m], params[m]);
        let n = self.inputs.len() as f64;
        let mut grad = vec![0.0; m + 1];
        let mut loss = 0.0;
        for (x, &y) in self.inputs.iter().zip(&self.labels) {
            let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            loss += softplus(z) - y * z;
            let residual = sigmoid_unclamped(z) - y;
            for (g, v) in grad[..m].iter_mut().zip(x) {
                *g += residual * v;
            }
            grad[m] += residual;
        }
        loss /= n;
        for g in &mut grad {
            *g /= n;
        }
        let mut penalty = 0.0;
        for (g, w) in grad[..m].iter_mut().zip(weights) {
            *g += self.l2_lambda * w;
            penalty += w * w;
        }
        loss += 0.5 * self.l2_lambda * penalty;
        (loss, grad)
    }
}

fn sigmoid_unclamped(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct Training {
    pub model: LogisticModel,
    /// Loss before the first step and after each epoch.
    pub loss_history: Vec<f64>,
}

impl Training {
    pub fn final_loss(&self) -> f64 {
        *self
            .loss_history
            .last()
            .expect("history holds the initial loss")
    }
}

/// Full-batch gradient descent from zero weights.
pub fn train_logistic(dataset: &Dataset, config: &TrainConfig) -> Result<Training, ModelError> {
    let labels: Vec<Option<u8>> = dataset.records.iter().map(|r| r.label).collect();
    if labels.iter().all(Option::is_none) {
        return Err(ModelError::NoLabels);
    }
    if let Some(r) = dataset.records.iter().find(|r| r.label.is_none()) {
        return Err(ModelError::MissingLabel { id: r.id.clone() });
    }
    let positives = labels.iter().filter(|l| **l == Some(1)).count();
    if positives == 0 || positives == labels.len() {
        return Err(ModelError::SingleClassData);
    }

    let objective = LogisticObjective::from_dataset(dataset, config.l2_lambda)?;
    let mut params = vec![0.0; objective.dim()];
    let mut loss_history = Vec::with_capacity(config.epochs + 1);
    let (mut loss, mut grad) = objective.loss_and_gradient(&params);
    loss_history.push(loss);
    for _ in 0..config.epochs {
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.learning_rate * g;
        }
        (loss, grad) = objective.loss_and_gradient(&params);
        loss_history.push(loss);
    }

    let bias = params.pop().expect("bias slot");
    Ok(Training {
        model: LogisticModel::new(&dataset.schema, params, bias)?,
        loss_history,
    })
}
