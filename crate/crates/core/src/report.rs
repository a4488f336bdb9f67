//! Trial logs and the report artifacts built from them: trials.csv,
//! summary.json, boxdata.csv, ranking.csv and timing.csv. Reports are pure
//! functions of the trial records, so re-aggregating a written log
//! reproduces the original summaries byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{Assignment, TrialStatus};
use crate::stats::{box_summary, kruskal_wallis, BoxSummary, GroupSample, KruskalWallis};

/// One trial with its experiment context; the row type of trials.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub strategy: String,
    pub dataset: String,
    pub model: String,
    pub assignment: Assignment,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_time: f64,
    pub status: TrialStatus,
}

/// Which accuracy stream a report reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMetric {
    Validation,
    Test,
}

impl AccuracyMetric {
    fn of(&self, r: &TrialRecord) -> f64 {
        match self {
            AccuracyMetric::Validation => r.validation_accuracy,
            AccuracyMetric::Test => r.test_accuracy,
        }
    }
}

/// Grouping keys understood by [`mean_accuracy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKey {
    Dataset,
    Model,
    Strategy,
    Status,
}

impl GroupKey {
    fn of(&self, r: &TrialRecord) -> String {
        match self {
            GroupKey::Dataset => r.dataset.clone(),
            GroupKey::Model => r.model.clone(),
            GroupKey::Strategy => r.strategy.clone(),
            GroupKey::Status => r.status.to_string(),
        }
    }
}

impl std::str::FromStr for GroupKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset" => Ok(GroupKey::Dataset),
            "model" => Ok(GroupKey::Model),
            "strategy" => Ok(GroupKey::Strategy),
            "status" => Ok(GroupKey::Status),
            other => Err(Error::invalid(format!("unknown group-by key {other:?}"))),
        }
    }
}

/// Aggregate of one group: mean/std/count of the chosen accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub key: Vec<String>,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Grouped means over validation or test accuracy, ordered by key.
/// Std is the sample standard deviation (0 for singleton groups).
pub fn mean_accuracy(
    records: &[TrialRecord],
    group_by: &[GroupKey],
    metric: AccuracyMetric,
) -> Result<Vec<GroupStat>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no trials to aggregate".into()));
    }
    let mut groups: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key: Vec<String> = group_by.iter().map(|k| k.of(r)).collect();
        groups.entry(key).or_default().push(metric.of(r));
    }
    Ok(groups
        .into_iter()
        .map(|(key, values)| {
            let n = values.len() as f64;
            let mean = crate::stats::kahan_sum(values.iter().copied()) / n;
            let std = if values.len() < 2 {
                0.0
            } else {
                (crate::stats::kahan_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0))
                    .sqrt()
            };
            GroupStat {
                key,
                mean,
                std,
                count: values.len(),
            }
        })
        .collect())
}

/// One row of the timing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub model: String,
    pub strategy: String,
    /// Mean over datasets of the total wall time the strategy spent on one
    /// dataset, so exhaustive strategies cost more than budgeted ones.
    pub mean_seconds: f64,
    pub datasets: usize,
}

/// Mean per-dataset wall time per (model, strategy) pair, ordered by key.
pub fn timing_table(records: &[TrialRecord]) -> Vec<TimingRow> {
    let mut totals: BTreeMap<(String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for r in records {
        *totals
            .entry((r.model.clone(), r.strategy.clone()))
            .or_default()
            .entry(r.dataset.clone())
            .or_insert(0.0) += r.wall_time;
    }
    totals
        .into_iter()
        .map(|((model, strategy), per_dataset)| {
            let n = per_dataset.len();
            TimingRow {
                model,
                strategy,
                mean_seconds: per_dataset.values().sum::<f64>() / n as f64,
                datasets: n,
            }
        })
        .collect()
}

/// Sort (name, accuracy) pairs by descending accuracy, ties by name.
pub fn ranking_table(results: &[(String, f64)]) -> Vec<(String, f64)> {
    let mut out = results.to_vec();
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    out
}

/// Union of hyperparameter names across records, sorted.
fn param_columns(records: &[TrialRecord]) -> Vec<String> {
    let names: BTreeSet<String> = records
        .iter()
        .flat_map(|r| r.assignment.keys().cloned())
        .collect();
    names.into_iter().collect()
}

/// Write trials.csv: strategy, dataset, model, one column per hyperparameter
/// (union, sorted; blank where not applicable), then validation_accuracy,
/// test_accuracy, wall_time, status.
pub fn write_trials_csv(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    let params = param_columns(records);
    let mut out = String::new();
    out.push_str("strategy,dataset,model");
    for p in &params {
        write!(out, ",{p}").unwrap();
    }
    out.push_str(",validation_accuracy,test_accuracy,wall_time,status\n");
    for r in records {
        write!(out, "{},{},{}", r.strategy, r.dataset, r.model).unwrap();
        for p in &params {
            match r.assignment.get(p) {
                Some(v) => write!(out, ",{v}").unwrap(),
                None => out.push(','),
            }
        }
        writeln!(
            out,
            ",{},{},{},{}",
            r.validation_accuracy, r.test_accuracy, r.wall_time, r.status
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse a trials.csv, diagnosing schema mismatches by column name.
pub fn read_trials_csv(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path_str = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::BadLogSchema {
        path: path_str.clone(),
        reason: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let fixed_prefix = ["strategy", "dataset", "model"];
    let fixed_suffix = ["validation_accuracy", "test_accuracy", "wall_time", "status"];
    if cols.len() < fixed_prefix.len() + fixed_suffix.len() {
        return Err(Error::BadLogSchema {
            path: path_str,
            reason: format!("expected at least 7 columns, found {}", cols.len()),
        });
    }
    for (i, name) in fixed_prefix.iter().enumerate() {
        if cols[i] != *name {
            return Err(Error::BadLogSchema {
                path: path_str,
                reason: format!("column {} should be {name:?}, found {:?}", i + 1, cols[i]),
            });
        }
    }
    let suffix_start = cols.len() - fixed_suffix.len();
    for (i, name) in fixed_suffix.iter().enumerate() {
        if cols[suffix_start + i] != *name {
            return Err(Error::BadLogSchema {
                path: path_str,
                reason: format!(
                    "column {} should be {name:?}, found {:?}",
                    suffix_start + i + 1,
                    cols[suffix_start + i]
                ),
            });
        }
    }
    let params: Vec<String> = cols[fixed_prefix.len()..suffix_start]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::BadLogSchema {
                path: path_str,
                reason: format!(
                    "row {}: expected {} fields, found {}",
                    lineno + 2,
                    cols.len(),
                    fields.len()
                ),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::BadLogSchema {
                path: path_str.clone(),
                reason: format!("row {}: bad {what} value {s:?}", lineno + 2),
            })
        };
        let mut assignment = Assignment::new();
        for (k, p) in params.iter().enumerate() {
            let cell = fields[fixed_prefix.len() + k];
            if !cell.is_empty() {
                assignment.insert(p.clone(), parse(cell, p)?);
            }
        }
        records.push(TrialRecord {
            strategy: fields[0].to_string(),
            dataset: fields[1].to_string(),
            model: fields[2].to_string(),
            assignment,
            validation_accuracy: parse(fields[suffix_start], "validation_accuracy")?,
            test_accuracy: parse(fields[suffix_start + 1], "test_accuracy")?,
            wall_time: parse(fields[suffix_start + 2], "wall_time")?,
            status: fields[suffix_start + 3].parse()?,
        });
    }
    Ok(records)
}

/// One Kruskal-Wallis verdict in summary.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwVerdict {
    pub grouping: String,
    pub groups: Vec<String>,
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
    pub reject_h0_at_0_05: bool,
}

fn kw_verdict(grouping: &str, samples: Vec<GroupSample>) -> Result<Option<KwVerdict>> {
    if samples.len() < 2 {
        return Ok(None);
    }
    let labels: Vec<String> = samples.iter().map(|g| g.label.clone()).collect();
    let kw: KruskalWallis = kruskal_wallis(&samples)?;
    Ok(Some(KwVerdict {
        grouping: grouping.into(),
        groups: labels,
        h: kw.h,
        df: kw.df,
        p_value: kw.p_value,
        reject_h0_at_0_05: kw.reject_at_0_05(),
    }))
}

/// The summary.json document: grouped stats plus Kruskal-Wallis verdicts
/// across models and across strategies (where at least two groups exist).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_validation_accuracy: Vec<GroupStat>,
    pub mean_test_accuracy: Vec<GroupStat>,
    pub kruskal_wallis: Vec<KwVerdict>,
    pub trials: usize,
}

/// Build the summary document from records.
pub fn summarize(records: &[TrialRecord]) -> Result<Summary> {
    let keys = [GroupKey::Dataset, GroupKey::Model, GroupKey::Strategy];
    let mut kw = Vec::new();
    for (grouping, key) in [("model", GroupKey::Model), ("strategy", GroupKey::Strategy)] {
        let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in records {
            by.entry(key.of(r)).or_default().push(r.validation_accuracy);
        }
        let samples: Vec<GroupSample> = by
            .into_iter()
            .map(|(label, values)| GroupSample::new(label, values))
            .collect();
        if let Some(v) = kw_verdict(grouping, samples)? {
            kw.push(v);
        }
    }
    Ok(Summary {
        mean_validation_accuracy: mean_accuracy(records, &keys, AccuracyMetric::Validation)?,
        mean_test_accuracy: mean_accuracy(records, &keys, AccuracyMetric::Test)?,
        kruskal_wallis: kw,
        trials: records.len(),
    })
}

/// Box rows keyed like the report panels: (model, strategy, variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub model: String,
    pub strategy: String,
    pub variant: String,
    #[serde(flatten)]
    pub summary: BoxSummary,
}

/// Five-number summaries of test accuracy per (model, strategy) panel.
/// `variant` tags the preprocessing arm ("normalized" or "original").
pub fn box_rows(records: &[TrialRecord], variant: &str) -> Result<Vec<BoxRow>> {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.model.clone(), r.strategy.clone()))
            .or_default()
            .push(r.test_accuracy);
    }
    groups
        .into_iter()
        .map(|((model, strategy), values)| {
            Ok(BoxRow {
                model,
                strategy,
                variant: variant.to_string(),
                summary: box_summary(&values)?,
            })
        })
        .collect()
}

/// One panel of dataset rankings: (model, strategy, ranked (dataset, accuracy)).
pub type RankingPanel = (String, String, Vec<(String, f64)>);

/// Per-(model, strategy) dataset rankings: the test accuracy of each
/// dataset's best-validation trial, descending.
pub fn dataset_rankings(records: &[TrialRecord]) -> Vec<RankingPanel> {
    let mut best: BTreeMap<(String, String), BTreeMap<String, (f64, f64)>> = BTreeMap::new();
    for r in records {
        let entry = best
            .entry((r.model.clone(), r.strategy.clone()))
            .or_default()
            .entry(r.dataset.clone())
            .or_insert((f64::NEG_INFINITY, 0.0));
        if r.validation_accuracy > entry.0 {
            *entry = (r.validation_accuracy, r.test_accuracy);
        }
    }
    best.into_iter()
        .map(|((model, strategy), by_dataset)| {
            let pairs: Vec<(String, f64)> = by_dataset
                .into_iter()
                .map(|(dataset, (_, test_acc))| (dataset, test_acc))
                .collect();
            (model, strategy, ranking_table(&pairs))
        })
        .collect()
}

/// Write every report artifact for a set of records into `dir`:
/// summary.json, boxdata.csv, ranking.csv and timing.csv.
pub fn write_reports(records: &[TrialRecord], variant: &str, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let summary = summarize(records)?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    let mut box_out = String::from("model,strategy,variant,min,q1,median,q3,max,mean\n");
    for row in box_rows(records, variant)? {
        writeln!(
            box_out,
            "{},{},{},{},{},{},{},{},{}",
            row.model,
            row.strategy,
            row.variant,
            row.summary.min,
            row.summary.q1,
            row.summary.median,
            row.summary.q3,
            row.summary.max,
            row.summary.mean
        )
        .unwrap();
    }
    std::fs::write(dir.join("boxdata.csv"), box_out)?;

    let mut rank_out = String::from("model,strategy,rank,dataset,accuracy\n");
    for (model, strategy, ranks) in dataset_rankings(records) {
        for (i, (dataset, acc)) in ranks.iter().enumerate() {
            writeln!(rank_out, "{model},{strategy},{},{dataset},{acc}", i + 1).unwrap();
        }
    }
    std::fs::write(dir.join("ranking.csv"), rank_out)?;

    let mut timing_out = String::from("model,strategy,mean_seconds,datasets\n");
    for row in timing_table(records) {
        writeln!(
            timing_out,
            "{},{},{},{}",
            row.model, row.strategy, row.mean_seconds, row.datasets
        )
        .unwrap();
    }
    std::fs::write(dir.join("timing.csv"), timing_out)?;
    Ok(())
}
