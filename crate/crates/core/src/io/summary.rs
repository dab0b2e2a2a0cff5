use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::beat::{BeatTensor, ClassId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: ClassId,
    pub name: String,
    pub patients: usize,
    pub patient_pct: f64,
    pub beats: usize,
    pub beat_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub classes: Vec<ClassSummary>,
    /// Distinct source ids over the whole set (a patient with beats in
    /// several classes is counted once here, once per class above).
    pub distinct_patients: usize,
    pub total_beats: usize,
    pub patient_pct_sum: f64,
    pub beat_pct_sum: f64,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Shares of the total in percent, rounded to one decimal.
pub fn percentages(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { round1(100.0 * c as f64 / total as f64) })
        .collect()
}

/// Summary from per-class `(class, patients, beats)` counts. Patient shares
/// are relative to the sum of per-class patient counts.
pub fn summarize_counts(rows: &[(ClassId, usize, usize)]) -> DatasetSummary {
    let p: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let b: Vec<usize> = rows.iter().map(|r| r.2).collect();
    let (pp, bp) = (percentages(&p), percentages(&b));
    let classes: Vec<ClassSummary> = rows
        .iter()
        .enumerate()
        .map(|(i, &(class, patients, beats))| ClassSummary {
            class,
            name: class.name(),
            patients,
            patient_pct: pp[i],
            beats,
            beat_pct: bp[i],
        })
        .collect();
    DatasetSummary {
        distinct_patients: p.iter().sum(),
        total_beats: b.iter().sum(),
        patient_pct_sum: round1(pp.iter().sum()),
        beat_pct_sum: round1(bp.iter().sum()),
        classes,
    }
}

pub fn dataset_summary(beats: &[BeatTensor]) -> DatasetSummary {
    let mut per: BTreeMap<ClassId, (BTreeSet<&str>, usize)> = BTreeMap::new();
    for b in beats {
        let e = per.entry(b.label).or_default();
        e.0.insert(&b.source_id);
        e.1 += 1;
    }
    let rows: Vec<_> = per.iter().map(|(&c, (ids, n))| (c, ids.len(), *n)).collect();
    let mut s = summarize_counts(&rows);
    s.distinct_patients = beats.iter().map(|b| b.source_id.as_str()).collect::<BTreeSet<_>>().len();
    s
}
