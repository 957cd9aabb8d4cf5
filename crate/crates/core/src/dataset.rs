//! Tabular subject data: CSV ingest, feature schema and min/max normalization.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use indexmap::IndexMap;
use thiserror::Error;

/// Number of features that can carry a display rank.
pub const MAX_DISPLAYED: usize = 6;

const DENORMALIZE_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header has no `id` column")]
    MissingIdColumn,
    #[error("row {row}, column `{column}`: cell is not numeric")]
    NonNumericCell { row: usize, column: String },
    #[error("row {row}: label must be 0 or 1")]
    InvalidLabel { row: usize },
    #[error("feature `{0}` is constant")]
    ConstantColumn(String),
    #[error("duplicate subject id `{0}`")]
    DuplicateId(String),
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("dataset has no rows")]
    NoRows,
    #[error("normalized value for `{0}` lies outside [0, 1]")]
    OutOfRange(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("expected {expected} feature values, got {actual}")]
    SchemaMismatch { expected: usize, actual: usize },
    #[error("invalid display ranking: {0}")]
    InvalidDisplayRank(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub mutable: bool,
    /// Position among the highlighted features, 1-based.
    pub display_rank: Option<u8>,
}

impl FeatureSchema {
    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.min) / self.span()
    }

    pub fn denormalize(&self, unit: f64) -> f64 {
        self.min + unit * self.span()
    }

    pub fn clamp(&self, raw: f64) -> f64 {
        raw.clamp(self.min, self.max)
    }
}

/// One data subject. `values` follow the order of the owning [`Schema`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub values: Vec<f64>,
    pub label: Option<u8>,
}

/// Per-feature values in `[0, 1]`, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedVector(pub Vec<f64>);

impl NormalizedVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Ordered feature list shared by every record of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    features: Vec<FeatureSchema>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSchema>) -> Result<Self, DatasetError> {
        if features.is_empty() {
            return Err(DatasetError::NoFeatures);
        }
        for f in &features {
            if !(f.min < f.max) {
                return Err(DatasetError::ConstantColumn(f.name.clone()));
            }
        }
        let schema = Self { features };
        schema.check_ranks()?;
        Ok(schema)
    }

    fn check_ranks(&self) -> Result<(), DatasetError> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if let Some(rank) = f.display_rank {
                if rank == 0 || rank as usize > MAX_DISPLAYED {
                    return Err(DatasetError::InvalidDisplayRank(format!(
                        "rank {rank} of `{}` outside 1..={MAX_DISPLAYED}",
                        f.name
                    )));
                }
                if !seen.insert(rank) {
                    return Err(DatasetError::InvalidDisplayRank(format!(
                        "rank {rank} used twice"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn features(&self) -> &[FeatureSchema] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSchema> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Assigns display ranks 1.. to `ranked` (at most six names), clearing
    /// every other rank.
    pub fn set_display_ranking(&mut self, ranked: &[String]) -> Result<(), DatasetError> {
        if ranked.len() > MAX_DISPLAYED {
            return Err(DatasetError::InvalidDisplayRank(format!(
                "{} features requested, at most {MAX_DISPLAYED} allowed",
                ranked.len()
            )));
        }
        let mut indices = Vec::with_capacity(ranked.len());
        for name in ranked {
            let idx = self
                .index_of(name)
                .ok_or_else(|| DatasetError::UnknownFeature(name.clone()))?;
            if indices.contains(&idx) {
                return Err(DatasetError::InvalidDisplayRank(format!(
                    "`{name}` listed twice"
                )));
            }
            indices.push(idx);
        }
        for f in &mut self.features {
            f.display_rank = None;
        }
        for (rank, idx) in indices.into_iter().enumerate() {
            self.features[idx].display_rank = Some(rank as u8 + 1);
        }
        Ok(())
    }

    /// Names of ranked features, in rank order.
    pub fn displayed(&self) -> Vec<String> {
        let mut ranked: Vec<_> = self
            .features
            .iter()
            .filter_map(|f| f.display_rank.map(|r| (r, f.name.clone())))
            .collect();
        ranked.sort();
        ranked.into_iter().map(|(_, n)| n).collect()
    }

    pub fn set_mutable(&mut self, name: &str, mutable: bool) -> Result<(), DatasetError> {
        let idx = self
            .index_of(name)
            .ok_or_else(|| DatasetError::UnknownFeature(name.to_string()))?;
        self.features[idx].mutable = mutable;
        Ok(())
    }

    pub fn normalize(&self, values: &[f64]) -> NormalizedVector {
        NormalizedVector(
            self.features
                .iter()
                .zip(values)
                .map(|(f, &v)| f.normalize(v))
                .collect(),
        )
    }

    pub fn denormalize(&self, nv: &NormalizedVector) -> Result<Vec<f64>, DatasetError> {
        if nv.0.len() != self.len() {
            return Err(DatasetError::SchemaMismatch {
                expected: self.len(),
                actual: nv.0.len(),
            });
        }
        self.features
            .iter()
            .zip(&nv.0)
            .map(|(f, &u)| {
                if !(-DENORMALIZE_SLACK..=1.0 + DENORMALIZE_SLACK).contains(&u) {
                    Err(DatasetError::OutOfRange(f.name.clone()))
                } else {
                    Ok(f.denormalize(u.clamp(0.0, 1.0)))
                }
            })
            .collect()
    }

    /// Normalized dataset mean per feature; the reference point for deviations.
    pub fn mean_normalized(&self) -> NormalizedVector {
        NormalizedVector(self.features.iter().map(|f| f.normalize(f.mean)).collect())
    }

    /// Converts a name-keyed value map into schema order, clamping each value
    /// into its feature range. The flag reports whether any value was clamped.
    pub fn values_from_map(
        &self,
        values: &IndexMap<String, f64>,
    ) -> Result<(Vec<f64>, bool), DatasetError> {
        if values.len() != self.len() {
            return Err(DatasetError::SchemaMismatch {
                expected: self.len(),
                actual: values.len(),
            });
        }
        let mut clamped = false;
        let mut out = Vec::with_capacity(self.len());
        for f in &self.features {
            let v = *values
                .get(&f.name)
                .ok_or_else(|| DatasetError::UnknownFeature(f.name.clone()))?;
            let c = f.clamp(v);
            clamped |= c != v;
            out.push(c);
        }
        Ok((out, clamped))
    }

    pub fn values_to_map(&self, values: &[f64]) -> IndexMap<String, f64> {
        self.names()
            .map(str::to_string)
            .zip(values.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Schema,
    pub records: Vec<SubjectRecord>,
    index: IndexMap<String, usize>,
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<SubjectRecord>) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::NoRows);
        }
        let mut index = IndexMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.values.len() != schema.len() {
                return Err(DatasetError::SchemaMismatch {
                    expected: schema.len(),
                    actual: r.values.len(),
                });
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(DatasetError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            schema,
            records,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Result<&SubjectRecord, DatasetError> {
        self.position(id)
            .map(|i| &self.records[i])
            .ok_or_else(|| DatasetError::UnknownSubject(id.to_string()))
    }

    pub fn normalize(&self, record: &SubjectRecord) -> NormalizedVector {
        self.schema.normalize(&record.values)
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let mut file = File::open(path)?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    parse_csv(text.as_bytes())
}

/// Parses subject data: an `id` column, an optional `label` column, and
/// numeric feature columns. Schema bounds and means come from the data.
pub fn parse_csv<R: Read>(reader: R) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    let id_col = headers
        .iter()
        .position(|h| h == "id")
        .ok_or(DatasetError::MissingIdColumn)?;
    let label_col = headers.iter().position(|h| h == "label");
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != id_col && Some(*i) != label_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if feature_cols.is_empty() {
        return Err(DatasetError::NoFeatures);
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let row = row + 1;
        let id = rec.get(id_col).unwrap_or_default().trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(DatasetError::DuplicateId(id));
        }
        let values = feature_cols
            .iter()
            .map(|(col, name)| {
                rec.get(*col)
                    .and_then(|cell| cell.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DatasetError::NonNumericCell {
                        row,
                        column: name.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let label = match label_col.and_then(|c| rec.get(c)).map(str::trim) {
            None | Some("") => None,
            Some("0") => Some(0),
            Some("1") => Some(1),
            Some(_) => return Err(DatasetError::InvalidLabel { row }),
        };
        records.push(SubjectRecord { id, values, label });
    }
    if records.is_empty() {
        return Err(DatasetError::NoRows);
    }

    let n = records.len() as f64;
    let features = feature_cols
        .iter()
        .enumerate()
        .map(|(j, (_, name))| {
            let column = records.iter().map(|r| r.values[j]);
            let min = column.clone().fold(f64::INFINITY, f64::min);
            let max = column.clone().fold(f64::NEG_INFINITY, f64::max);
            let mean = column.sum::<f64>() / n;
            if !(min < max) {
                return Err(DatasetError::ConstantColumn(name.clone()));
            }
            Ok(FeatureSchema {
                name: name.clone(),
                min,
                max,
                mean: mean.clamp(min, max),
                mutable: true,
                display_rank: None,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Dataset::new(Schema::new(features)?, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset, DatasetError> {
        parse_csv(text.as_bytes())
    }

    #[test]
    fn two_row_schema() {
        let ds = parse("id,income,label\na,70000,0\nb,90000,1\n").unwrap();
        let f = &ds.schema.features()[0];
        assert_eq!(f.name, "income");
        assert_eq!((f.min, f.max, f.mean), (70000.0, 90000.0, 80000.0));
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records[1].label, Some(1));
    }

    #[test]
    fn constant_column_rejected() {
        let err = parse("id,income\na,50000\nb,50000\nc,50000\n").unwrap_err();
        assert!(matches!(err, DatasetError::ConstantColumn(ref n) if n == "income"));
    }

    #[test]
    fn missing_id_rejected() {
        assert!(matches!(
            parse("name,income\na,1\nb,2\n").unwrap_err(),
            DatasetError::MissingIdColumn
        ));
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let err = parse("id,income,age\na,1,30\nb,2,old\n").unwrap_err();
        match err {
            DatasetError::NonNumericCell { row, column } => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        assert!(matches!(
            parse("id,x\na,1\na,2\n").unwrap_err(),
            DatasetError::DuplicateId(ref id) if id == "a"
        ));
    }

    #[test]
    fn bad_label_rejected() {
        assert!(matches!(
            parse("id,x,label\na,1,0\nb,2,yes\n").unwrap_err(),
            DatasetError::InvalidLabel { row: 2 }
        ));
    }

    #[test]
    fn normalize_endpoints_and_interior() {
        let f = FeatureSchema {
            name: "x".into(),
            min: 0.0,
            max: 100.0,
            mean: 40.0,
            mutable: true,
            display_rank: None,
        };
        assert_eq!(f.normalize(0.0), 0.0);
        assert_eq!(f.normalize(100.0), 1.0);
        assert_eq!(f.normalize(25.0), 0.25);
    }

    #[test]
    fn denormalize_corners() {
        let ds = parse("id,a,b\nx,1,10\ny,3,30\n").unwrap();
        let s = &ds.schema;
        assert_eq!(
            s.denormalize(&NormalizedVector(vec![0.0, 0.0])).unwrap(),
            vec![1.0, 10.0]
        );
        assert_eq!(
            s.denormalize(&NormalizedVector(vec![1.0, 1.0])).unwrap(),
            vec![3.0, 30.0]
        );
        assert!(matches!(
            s.denormalize(&NormalizedVector(vec![1.1, 0.0])),
            Err(DatasetError::OutOfRange(ref n)) if n == "a"
        ));
    }

    #[test]
    fn mean_normalized_values() {
        let ds = parse("id,a,b\nx,0,0\ny,10,2\nz,2,1\n").unwrap();
        let m = ds.schema.mean_normalized();
        // a: mean 4 over [0, 10]; b: symmetric around its midpoint
        assert!((m.0[0] - 0.4).abs() < 1e-15);
        assert!((m.0[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn display_ranking_rules() {
        let mut ds = parse("id,a,b,c\nx,0,0,0\ny,1,1,1\n").unwrap();
        ds.schema
            .set_display_ranking(&["c".to_string(), "a".to_string()])
            .unwrap();
        assert_eq!(ds.schema.displayed(), vec!["c", "a"]);
        assert_eq!(ds.schema.feature("b").unwrap().display_rank, None);
        assert!(ds.schema.set_display_ranking(&["zz".to_string()]).is_err());
        let seven: Vec<String> = (0..7).map(|i| format!("f{i}")).collect();
        assert!(ds.schema.set_display_ranking(&seven).is_err());
    }

    #[test]
    fn map_values_clamp_and_flag() {
        let ds = parse("id,a,b\nx,0,0\ny,1,1\n").unwrap();
        let mut m = IndexMap::new();
        m.insert("b".to_string(), 0.5);
        m.insert("a".to_string(), 3.0);
        let (vals, clamped) = ds.schema.values_from_map(&m).unwrap();
        assert_eq!(vals, vec![1.0, 0.5]);
        assert!(clamped);
    }
}
