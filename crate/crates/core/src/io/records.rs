use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beat::ClassId;
use crate::error::{Error, Result};
use crate::signal::RawRecord;

/// A raw record with the class of the patient it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordRepr", into = "RecordRepr")]
pub struct LabeledRecord {
    pub record: RawRecord,
    pub label: ClassId,
}

#[derive(Serialize, Deserialize)]
struct RecordRepr {
    record_id: String,
    label: ClassId,
    sample_rate: f64,
    n_leads: usize,
    samples: Vec<f64>,
}

impl From<LabeledRecord> for RecordRepr {
    fn from(r: LabeledRecord) -> Self {
        RecordRepr {
            n_leads: r.record.n_leads(),
            sample_rate: r.record.sample_rate,
            samples: r.record.samples().to_vec(),
            record_id: r.record.record_id,
            label: r.label,
        }
    }
}

impl TryFrom<RecordRepr> for LabeledRecord {
    type Error = Error;
    fn try_from(r: RecordRepr) -> Result<Self> {
        Ok(LabeledRecord {
            record: RawRecord::new(r.samples, r.n_leads, r.sample_rate, r.record_id)?,
            label: r.label,
        })
    }
}

/// Records are kept as a JSON array; lengths may differ between records.
pub fn save_records(path: &Path, records: &[LabeledRecord]) -> Result<()> {
    super::write_atomic(path, &serde_json::to_vec(records)?)
}

pub fn load_records(path: &Path) -> Result<Vec<LabeledRecord>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn import_one(path: &Path, n_leads: usize, sample_rate: f64) -> Result<RawRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv { line: 0, msg: e.to_string() })?;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_leads];
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Csv { line: i + 1, msg: e.to_string() })?;
        let line = row.position().map_or(i + 1, |p| p.line() as usize);
        let parsed: std::result::Result<Vec<f64>, _> = row.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            // a non-numeric first row is a header
            Err(_) if i == 0 => continue,
            Err(_) => {
                let cell = row.iter().find(|c| c.parse::<f64>().is_err()).unwrap_or("");
                return Err(Error::Csv { line, msg: format!("non-numeric cell `{cell}`") });
            }
        };
        if values.len() != n_leads {
            return Err(Error::Csv {
                line,
                msg: format!("expected {n_leads} columns, found {}", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Csv { line, msg: format!("non-finite value {v}") });
        }
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Csv { line: 0, msg: format!("{} has no samples", path.display()) });
    }
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("record");
    RawRecord::new(columns.concat(), n_leads, sample_rate, id)
}

/// Rows are time steps, columns leads; an optional non-numeric header line
/// is skipped. `path` may be one file or a directory of `*.csv` files (read
/// in name order); each file becomes one record named after its stem.
pub fn import_csv(path: &Path, n_leads: usize, sample_rate: f64) -> Result<Vec<RawRecord>> {
    if n_leads == 0 {
        return Err(Error::InvalidParam("n_leads must be >= 1".into()));
    }
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")));
        files.sort();
        files.iter().map(|f| import_one(f, n_leads, sample_rate)).collect()
    } else {
        Ok(vec![import_one(path, n_leads, sample_rate)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    #[test]
    fn ten_seconds_of_twelve_leads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rec01.csv");
        let mut s = (0..12).map(|l| format!("lead{l}")).collect::<Vec<_>>().join(",") + "\n";
        for t in 0..1000 {
            let row: Vec<String> = (0..12).map(|l| format!("{}", (t * l) as f64 * 1e-3)).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        fs::write(&p, s).unwrap();
        let recs = import_csv(&p, 12, 100.0).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].len(), 1000);
        assert_eq!(recs[0].duration_s(), 10.0);
        assert_eq!(recs[0].record_id, "rec01");
        assert_eq!(recs[0].lead(3)[2], 6e-3);
        assert_eq!(import_csv(dir.path(), 12, 100.0).unwrap().len(), 1);
    }

    #[test]
    fn ragged_and_nan_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1,2,3\n4,5\n").unwrap();
        match import_csv(&p, 3, 100.0) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "1,2,3\n4,NaN,6\n").unwrap();
        assert!(matches!(import_csv(&p, 3, 100.0), Err(Error::Csv { line: 2, .. })));
        fs::write(&p, "1,2,3\n4,x,6\n").unwrap();
        assert!(matches!(import_csv(&p, 3, 100.0), Err(Error::Csv { line: 2, .. })));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let rec = LabeledRecord {
            record: RawRecord::new(vec![0.5, 1.0, 1.5, 2.0], 2, 100.0, "a").unwrap(),
            label: ClassId::MI,
        };
        save_records(&p, std::slice::from_ref(&rec)).unwrap();
        assert_eq!(load_records(&p).unwrap(), vec![rec]);
        fs::write(&p, r#"[{"record_id":"a","label":0,"sample_rate":100.0,"n_leads":3,"samples":[1.0,2.0]}]"#).unwrap();
        assert!(load_records(&p).is_err());
    }
}
