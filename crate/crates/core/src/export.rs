//! CSV persistence for attribution tables and recourse paths.
//!
//! All reals are written with 17 significant digits.

use std::io::{Read, Write};

use indexmap::IndexMap;
use thiserror::Error;

use crate::attribution::{AttributionVector, OTHERS};
use crate::dataset::Schema;
use crate::numfmt::sig17;
use crate::recourse::RecoursePath;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("attribution table header must be subject_id, base, <features..>, others")]
    BadHeader,
    #[error("row {row}: `{cell}` is not a number")]
    BadNumber { row: usize, cell: String },
}

/// Writes `subject_id, base, φ per feature, others`.
///
/// Every feature's φ is written; `others` repeats the sum over the features
/// outside the displayed set.
pub fn write_attribution_table<W: Write>(
    out: W,
    schema: &Schema,
    table: &[AttributionVector],
) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject_id".to_string(), "base".to_string()];
    header.extend(schema.names().map(str::to_string));
    header.push(OTHERS.to_string());
    w.write_record(&header)?;
    for av in table {
        let mut row = vec![av.subject_id.clone(), sig17(av.base)];
        row.extend(schema.names().map(|n| sig17(av.phi[n])));
        row.push(sig17(av.others));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_attribution_table`]. Rows come back
/// ungrouped: `others` is kept as read and `displayed` is `None`.
pub fn read_attribution_table<R: Read>(input: R) -> Result<Vec<AttributionVector>, ExportError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3
        || header[0] != "subject_id"
        || header[1] != "base"
        || header[header.len() - 1] != OTHERS
    {
        return Err(ExportError::BadHeader);
    }
    let features = &header[2..header.len() - 1];
    let mut table = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |cell: &str| {
            cell.parse::<f64>().map_err(|_| ExportError::BadNumber {
                row: i + 1,
                cell: cell.to_string(),
            })
        };
        let phi: IndexMap<String, f64> = features
            .iter()
            .enumerate()
            .map(|(j, f)| Ok((f.clone(), num(&rec[j + 2])?)))
            .collect::<Result<_, ExportError>>()?;
        table.push(AttributionVector {
            subject_id: rec[0].to_string(),
            base: num(&rec[1])?,
            phi,
            others: num(&rec[header.len() - 1])?,
            displayed: None,
        });
    }
    Ok(table)
}

/// One row per state: step, subject, outcome, base, φ per feature, others,
/// deviation per feature, and the projection and L1 change of the step that
/// reached it (blank for the start).
pub fn write_path_csv<W: Write>(
    out: W,
    schema: &Schema,
    path: &RecoursePath,
) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["step", "subject_id", "outcome", "base"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(schema.names().map(|n| format!("phi_{n}")));
    header.push(OTHERS.to_string());
    header.extend(schema.names().map(|n| format!("dev_{n}")));
    header.push("projection".into());
    header.push("l1_change".into());
    w.write_record(&header)?;

    for (step, st) in path.states.iter().enumerate() {
        let mut row = vec![
            step.to_string(),
            st.subject_id.clone(),
            sig17(st.outcome),
            sig17(st.attribution.base),
        ];
        row.extend(schema.names().map(|n| sig17(st.attribution.phi[n])));
        row.push(sig17(st.attribution.others));
        row.extend(schema.names().map(|n| sig17(st.deviation[n])));
        match st.arrival {
            Some(p) => {
                row.push(sig17(p.projection));
                row.push(sig17(p.l1_change));
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::group_others;
    use crate::dataset::parse_csv;

    #[test]
    fn attribution_table_round_trip() {
        let ds = parse_csv("id,a,b\nx,0,0\ny,1,1\n".as_bytes()).unwrap();
        let av = AttributionVector {
            subject_id: "x".into(),
            base: 0.3,
            phi: [("a".to_string(), 0.1 / 3.0), ("b".to_string(), -0.2)]
                .into_iter()
                .collect(),
            others: 0.0,
            displayed: None,
        };
        let av = group_others(&av, &["a".to_string()]).unwrap();
        let mut buf = Vec::new();
        write_attribution_table(&mut buf, &ds.schema, std::slice::from_ref(&av)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("subject_id,base,a,b,others\n"));
        let back = read_attribution_table(buf.as_slice()).unwrap();
        assert_eq!(back[0].phi, av.phi);
        assert_eq!(back[0].base, av.base);
        assert_eq!(back[0].others, av.others);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(matches!(
            read_attribution_table("id,base,a,others\n".as_bytes()),
            Err(ExportError::BadHeader)
        ));
        assert!(matches!(
            read_attribution_table("subject_id,base,a,others\nq,0.1,zz,0\n".as_bytes()),
            Err(ExportError::BadNumber { row: 1, .. })
        ));
    }
}
