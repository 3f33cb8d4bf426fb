use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, histogram, positional_subset_report, rmse, SubsetReport};
use crate::error::{Error, Result};
use crate::geometry::comparison_count;
use crate::synth::{SceneRecord, Split};

/// Pairwise work implied by a set of scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonStats {
    pub scenes: usize,
    pub mean_proposals: f64,
    pub mean_patches: f64,
    /// Mean of `n² + n·m` per scene.
    pub mean_comparisons: f64,
}

impl ComparisonStats {
    pub fn of(records: &[&SceneRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("records"));
        }
        let k = records.len() as f64;
        let (mut n, mut m, mut c) = (0.0, 0.0, 0.0);
        for r in records {
            let (rn, rm) = (r.scene.proposals.len() as f64, r.scene.patches.len() as f64);
            n += rn;
            m += rm;
            c += comparison_count(rn, rm);
        }
        Ok(Self { scenes: records.len(), mean_proposals: n / k, mean_patches: m / k, mean_comparisons: c / k })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: Split,
    pub size: usize,
    pub accuracy: f64,
    pub rmse: f64,
    /// Accuracy per question template, keyed by template name.
    pub per_template: BTreeMap<String, SubsetReport>,
    pub positional: SubsetReport,
    /// Scenes where some object has more than one proposal.
    pub duplicates: SubsetReport,
    pub answer_histogram: Vec<usize>,
    pub prediction_histogram: Vec<usize>,
    pub comparisons: ComparisonStats,
}

fn subset(preds: &[i64], gts: &[i64], keep: impl Fn(usize) -> bool) -> Result<SubsetReport> {
    let (p, g): (Vec<i64>, Vec<i64>) = (0..preds.len()).filter(|&i| keep(i)).map(|i| (preds[i], gts[i])).unzip();
    Ok(SubsetReport { size: p.len(), accuracy: if p.is_empty() { None } else { Some(accuracy(&p, &g)?) } })
}

impl SplitReport {
    /// Score `preds` (already rounded and clamped) against `records`, all from `split`.
    pub fn build(split: Split, records: &[&SceneRecord], preds: &[i64], max_count: usize) -> Result<Self> {
        if records.len() != preds.len() {
            return Err(Error::Shape { context: "records vs predictions".into(), expected: records.len(), actual: preds.len() });
        }
        let gts: Vec<i64> = records.iter().map(|r| r.answer as i64).collect();
        let mut names: Vec<&str> = records.iter().map(|r| r.template.kind().name()).collect();
        names.sort_unstable();
        names.dedup();
        let mut per_template = BTreeMap::new();
        for name in names {
            per_template.insert(name.to_string(), subset(preds, &gts, |i| records[i].template.kind().name() == name)?);
        }
        let questions: Vec<&str> = records.iter().map(|r| r.question.as_str()).collect();
        let hi = max_count as i64;
        Ok(Self {
            split,
            size: records.len(),
            accuracy: accuracy(preds, &gts)?,
            rmse: rmse(preds, &gts)?,
            per_template,
            positional: positional_subset_report(&questions, preds, &gts)?,
            duplicates: subset(preds, &gts, |i| records[i].scene.has_duplicates())?,
            answer_histogram: histogram(&gts, 0, hi)?,
            prediction_histogram: histogram(preds, 0, hi)?,
            comparisons: ComparisonStats::of(records)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training-mode loss over the epoch's batches.
    pub train_loss: f64,
    /// Absent when no validation share was held out.
    pub validation_accuracy: Option<f64>,
    /// Test-split accuracy after this epoch, when per-epoch evaluation is on.
    pub test_accuracy: BTreeMap<Split, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub train_size: usize,
    pub validation_size: usize,
    /// Inference-mode mean loss of the untrained model on the training portion.
    pub initial_loss: f64,
    pub initial_validation_accuracy: Option<f64>,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights were kept; 0 means the untrained initialisation.
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub splits: Vec<SplitReport>,
    pub training: Option<TrainingLog>,
}

impl EvalReport {
    pub fn split(&self, split: Split) -> Option<&SplitReport> {
        self.splits.iter().find(|s| s.split == split)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn cell(r: Option<&SplitReport>) -> (String, String) {
    match r {
        Some(r) => (format!("{:.1}", r.accuracy), format!("{:.2}", r.rmse)),
        None => ("-".into(), "-".into()),
    }
}

/// One row per report with accuracy and RMSE on each test split.
pub fn results_table(reports: &[&EvalReport]) -> String {
    let header = ["Model", "Simple ACC", "Simple RMSE", "Complex ACC", "Complex RMSE"];
    let mut rows: Vec<[String; 5]> = vec![header.map(String::from)];
    for r in reports {
        let (sa, sr) = cell(r.split(Split::TestSimple));
        let (ca, cr) = cell(r.split(Split::TestComplex));
        rows.push([r.model.clone(), sa, sr, ca, cr]);
    }
    render(&rows)
}

/// Per-template accuracy for one split, one column per report.
pub fn template_table(reports: &[&EvalReport], split: Split) -> String {
    let mut names: Vec<String> = reports
        .iter()
        .filter_map(|r| r.split(split))
        .flat_map(|s| s.per_template.keys().cloned())
        .collect();
    names.sort();
    names.dedup();
    let mut rows = vec![std::iter::once("Template".to_string()).chain(reports.iter().map(|r| r.model.clone())).collect::<Vec<_>>()];
    for name in names {
        let mut row = vec![name.clone()];
        for r in reports {
            let acc = r.split(split).and_then(|s| s.per_template.get(&name)).and_then(|t| t.accuracy);
            row.push(acc.map_or("-".into(), |a| format!("{a:.1}")));
        }
        rows.push(row);
    }
    render(&rows)
}

/// Histogram table with one row per count value.
pub fn histogram_table(columns: &[(&str, &[usize])]) -> String {
    let len = columns.iter().map(|(_, h)| h.len()).max().unwrap_or(0);
    let mut rows = vec![std::iter::once("Count".to_string()).chain(columns.iter().map(|(n, _)| n.to_string())).collect::<Vec<_>>()];
    for k in 0..len {
        let mut row = vec![k.to_string()];
        row.extend(columns.iter().map(|(_, h)| h.get(k).map_or("0".into(), |v| v.to_string())));
        rows.push(row);
    }
    render(&rows)
}

fn render<R: AsRef<[String]>>(rows: &[R]) -> String {
    let cols = rows.iter().map(|r| r.as_ref().len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.as_ref().get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .as_ref()
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{emit_dataset, DatasetConfig};

    fn records() -> Vec<SceneRecord> {
        emit_dataset(&DatasetConfig { scenes: 80, ..DatasetConfig::default() }, 2).unwrap()
    }

    #[test]
    fn split_report_matches_brute_force() {
        let recs = records();
        let complex: Vec<&SceneRecord> = recs.iter().filter(|r| r.split == Split::TestComplex).collect();
        let preds: Vec<i64> = complex.iter().enumerate().map(|(i, r)| if i % 3 == 0 { r.answer as i64 } else { 1 }).collect();
        let rep = SplitReport::build(Split::TestComplex, &complex, &preds, 15).unwrap();
        assert_eq!(rep.size, complex.len());
        assert!((0.0..=100.0).contains(&rep.accuracy) && rep.rmse >= 0.0);
        let total: usize = rep.per_template.values().map(|t| t.size).sum();
        assert_eq!(total, complex.len());
        for (name, t) in &rep.per_template {
            let idx: Vec<usize> = (0..complex.len()).filter(|&i| complex[i].template.kind().name() == name).collect();
            let hits = idx.iter().filter(|&&i| preds[i] == complex[i].answer as i64).count();
            assert_eq!(t.accuracy.unwrap(), 100.0 * hits as f64 / idx.len() as f64);
        }
        assert_eq!(rep.answer_histogram.iter().sum::<usize>(), complex.len());
        let dup = complex.iter().filter(|r| r.scene.has_duplicates()).count();
        assert_eq!(rep.duplicates.size, dup);
        let n: f64 = complex.iter().map(|r| r.scene.proposals.len() as f64).sum::<f64>() / complex.len() as f64;
        assert!((rep.comparisons.mean_proposals - n).abs() < 1e-12);
        assert_eq!(rep.comparisons.mean_patches, 16.0);
    }

    #[test]
    fn tables_are_aligned() {
        let recs = records();
        let simple: Vec<&SceneRecord> = recs.iter().filter(|r| r.split == Split::TestSimple).collect();
        let preds = vec![1; simple.len()];
        let report = EvalReport {
            model: "guess-1".into(),
            seed: 0,
            config_fingerprint: String::new(),
            splits: vec![SplitReport::build(Split::TestSimple, &simple, &preds, 15).unwrap()],
            training: None,
        };
        let table = results_table(&[&report]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[2].starts_with("guess-1") && lines[2].ends_with('-'));
        assert_eq!(lines[0].len(), lines[1].len());
        assert_eq!(EvalReport::from_json(&report.to_json().unwrap()).unwrap(), report);
        let h = histogram_table(&[("a", &[1, 2]), ("b", &[3])]);
        assert_eq!(h.lines().count(), 4);
    }
}
