//! Tabular classification datasets and the preprocessing pipeline:
//! factor-to-numeric conversion, sparsity profiling and min-max
//! normalization, applied in that order.

mod load;

pub use load::{load_table, write_csv, Format, LabelSpec};

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a column's raw values are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Factor,
}

/// Per-column metadata.
///
/// Factor columns keep their distinct raw levels (sorted). After
/// [`factor_to_numeric`] the applied code for each level is recorded in
/// `level_codes`, so the original level of any cell can be recovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    /// Sorted distinct raw values; empty for numeric columns.
    pub factor_levels: Vec<String>,
    pub is_label: bool,
    /// `level_codes[i]` is the numeric code assigned to `factor_levels[i]`,
    /// a bijection onto 1..=CF. `None` until the column is converted.
    pub level_codes: Option<Vec<usize>>,
}

impl ColumnMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Numeric,
            factor_levels: Vec::new(),
            is_label: false,
            level_codes: None,
        }
    }

    pub fn factor(name: impl Into<String>, levels: Vec<String>) -> Self {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Factor,
            factor_levels: levels,
            is_label: false,
            level_codes: None,
        }
    }

    /// Number of distinct levels (CF). Zero for numeric columns.
    pub fn n_levels(&self) -> usize {
        self.factor_levels.len()
    }

    /// Recover the raw level for a converted cell value.
    pub fn decode(&self, value: f64) -> Option<&str> {
        let codes = self.level_codes.as_ref()?;
        let code = value as usize;
        codes
            .iter()
            .position(|&c| c == code)
            .map(|i| self.factor_levels[i].as_str())
    }
}

/// How factor levels are mapped onto numeric codes 1..=CF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorPolicy {
    /// Sorted levels get codes 1, 2, ..., CF.
    LevelIndex,
    /// A seed-determined bijection of 1..=CF, reproducing randomized code
    /// assignment deterministically.
    SeededPermutation(u64),
}

/// A dense numeric table: rows are instances, columns are features plus one
/// designated label column.
///
/// Factor cells are stored as the 1-based index of their level in the
/// column's sorted `factor_levels`; [`factor_to_numeric`] re-maps them under
/// a chosen policy and records the mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    values: Array2<f64>,
    columns: Vec<ColumnMeta>,
    label_index: usize,
}

impl DataTable {
    /// Build a table from row-major values and column metadata.
    pub fn new(values: Array2<f64>, mut columns: Vec<ColumnMeta>, label_index: usize) -> Result<Self> {
        let (n_rows, n_cols) = values.dim();
        if n_cols != columns.len() {
            return Err(Error::DimensionMismatch {
                what: "columns".into(),
                expected: n_cols,
                got: columns.len(),
            });
        }
        if label_index >= n_cols {
            return Err(Error::ColumnOutOfRange {
                col: label_index,
                ncols: n_cols,
            });
        }
        if n_rows < 2 || n_cols < 2 {
            return Err(Error::invalid(format!(
                "table must have at least 2 instances and 1 feature, got {n_rows}x{n_cols}"
            )));
        }
        for (i, c) in columns.iter().enumerate() {
            if c.kind == ColumnKind::Factor && c.factor_levels.is_empty() {
                return Err(Error::invalid(format!(
                    "factor column {i} ({}) has no levels",
                    c.name
                )));
            }
        }
        for (i, c) in columns.iter_mut().enumerate() {
            c.is_label = i == label_index;
        }
        Ok(DataTable {
            values,
            columns,
            label_index,
        })
    }

    /// Convenience constructor for an all-numeric table with generated
    /// column names and the last column as label.
    pub fn from_numeric_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("no rows".into()));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("rows have unequal lengths"));
        }
        let n = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((n, width), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        let mut columns: Vec<ColumnMeta> = (0..width.saturating_sub(1))
            .map(|i| ColumnMeta::numeric(format!("x{i}")))
            .collect();
        columns.push(ColumnMeta::numeric("y"));
        DataTable::new(values, columns, width - 1)
    }

    pub fn n_instances(&self) -> usize {
        self.values.nrows()
    }

    /// Number of feature columns (the label column is not counted).
    pub fn n_features(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }

    pub fn label_index(&self) -> usize {
        self.label_index
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column(&self, col: usize) -> Result<&ColumnMeta> {
        self.columns.get(col).ok_or(Error::ColumnOutOfRange {
            col,
            ncols: self.columns.len(),
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[[row, col]]
    }

    /// Label value of every instance, in row order.
    pub fn labels(&self) -> Vec<f64> {
        self.values.column(self.label_index).to_vec()
    }

    /// Feature matrix (all columns except the label), row-major.
    pub fn features(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_instances(), self.n_features()));
        let mut j = 0;
        for col in 0..self.n_columns() {
            if col == self.label_index {
                continue;
            }
            out.column_mut(j).assign(&self.values.column(col));
            j += 1;
        }
        out
    }

    /// Feature matrix and labels restricted to `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Vec<f64>) {
        let feats = self.features();
        let mut x = Array2::zeros((indices.len(), self.n_features()));
        let mut y = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            x.row_mut(r).assign(&feats.row(i));
            y.push(self.values[[i, self.label_index]]);
        }
        (x, y)
    }

    fn column_view(&self, col: usize) -> ArrayView1<'_, f64> {
        self.values.column(col)
    }
}

/// True iff the column holds factor (symbolic) data.
pub fn detect_factor(table: &DataTable, col: usize) -> Result<bool> {
    Ok(table.column(col)?.kind == ColumnKind::Factor)
}

/// Re-map a factor column's cells onto numeric codes 1..=CF under `policy`
/// and record the level-to-code mapping in the column metadata.
pub fn factor_to_numeric(table: &DataTable, col: usize, policy: FactorPolicy) -> Result<DataTable> {
    let meta = table.column(col)?;
    if meta.kind != ColumnKind::Factor {
        return Err(Error::NotAFactor { col });
    }
    let cf = meta.n_levels();
    let codes: Vec<usize> = match policy {
        FactorPolicy::LevelIndex => (1..=cf).collect(),
        FactorPolicy::SeededPermutation(seed) => {
            let mut codes: Vec<usize> = (1..=cf).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            codes.shuffle(&mut rng);
            codes
        }
    };

    let mut out = table.clone();
    // Cells currently hold the 1-based sorted-level index; `level_codes` may
    // already carry a previous conversion, in which case we go through it.
    let prev = out.columns[col].level_codes.clone();
    for v in out.values.column_mut(col).iter_mut() {
        let level_idx = match &prev {
            None => (*v as usize) - 1,
            Some(old) => old
                .iter()
                .position(|&c| c == *v as usize)
                .expect("converted cell holds a recorded code"),
        };
        *v = codes[level_idx] as f64;
    }
    out.columns[col].level_codes = Some(codes);
    Ok(out)
}

/// Fraction of cells exactly equal to zero. `include_label` counts the label
/// column as well (the whole-matrix convention used before normalization).
pub fn sparsity(table: &DataTable, include_label: bool) -> f64 {
    let mut zeros = 0usize;
    let mut total = 0usize;
    for col in 0..table.n_columns() {
        if !include_label && col == table.label_index {
            continue;
        }
        for &v in table.column_view(col) {
            total += 1;
            if v == 0.0 {
                zeros += 1;
            }
        }
    }
    zeros as f64 / total as f64
}

/// Rescale each in-scope column to `[0, 1]` by `(x - min) / (max - min)`.
/// Constant columns map to 0.0. With `exclude_label` the label column is
/// left untouched.
pub fn minmax_normalize(table: &DataTable, exclude_label: bool) -> Result<DataTable> {
    let mut out = table.clone();
    for col in 0..table.n_columns() {
        if exclude_label && col == table.label_index {
            continue;
        }
        let view = table.column_view(col);
        for (row, &v) in view.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
        let min = view.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = view.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        for v in out.values.column_mut(col).iter_mut() {
            *v = if range == 0.0 { 0.0 } else { (*v - min) / range };
        }
    }
    Ok(out)
}

/// Options for [`preprocess_all`].
#[derive(Debug, Clone, Copy)]
pub struct PreprocessOptions {
    pub factor_policy: FactorPolicy,
    pub normalize: bool,
    /// Leave the label column out of normalization (recommended; `false`
    /// reproduces the strict whole-matrix normalization).
    pub exclude_label: bool,
    /// Convert factor feature columns in addition to a factor label.
    pub convert_factor_features: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            factor_policy: FactorPolicy::LevelIndex,
            normalize: true,
            exclude_label: true,
            convert_factor_features: true,
        }
    }
}

/// Run the preprocessing pipeline over a batch of tables: factor conversion,
/// sparsity recording, then min-max normalization. Returns the processed
/// tables and the sparsity list in input order.
pub fn preprocess_all(
    tables: &[DataTable],
    factor_policy: FactorPolicy,
    seed: u64,
) -> Result<(Vec<DataTable>, Vec<f64>)> {
    let opts = PreprocessOptions {
        factor_policy,
        ..PreprocessOptions::default()
    };
    preprocess_all_with(tables, seed, &opts)
}

/// [`preprocess_all`] with full control over normalization and factor scope.
pub fn preprocess_all_with(
    tables: &[DataTable],
    seed: u64,
    opts: &PreprocessOptions,
) -> Result<(Vec<DataTable>, Vec<f64>)> {
    let mut out = Vec::with_capacity(tables.len());
    let mut slist = Vec::with_capacity(tables.len());
    for table in tables {
        let (t, s) = preprocess_one(table, seed, opts)?;
        out.push(t);
        slist.push(s);
    }
    Ok((out, slist))
}

/// Preprocess a single table; returns the processed table and its sparsity
/// (whole matrix, computed after factor conversion and before normalization).
pub fn preprocess_one(
    table: &DataTable,
    seed: u64,
    opts: &PreprocessOptions,
) -> Result<(DataTable, f64)> {
    let mut t = table.clone();
    let policy = match opts.factor_policy {
        FactorPolicy::LevelIndex => FactorPolicy::LevelIndex,
        FactorPolicy::SeededPermutation(_) => FactorPolicy::SeededPermutation(seed),
    };
    if detect_factor(&t, t.label_index())? {
        t = factor_to_numeric(&t, t.label_index(), policy)?;
    }
    if opts.convert_factor_features {
        for col in 0..t.n_columns() {
            if col != t.label_index() && t.columns[col].kind == ColumnKind::Factor {
                t = factor_to_numeric(&t, col, policy)?;
            }
        }
    }
    let s = sparsity(&t, true);
    if opts.normalize {
        t = minmax_normalize(&t, opts.exclude_label)?;
    }
    Ok((t, s))
}

/// Structural summary of a dataset: sparsity, class balance and size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub n_features: usize,
    pub n_instances: usize,
    pub sparsity: f64,
    pub class_histogram: BTreeMap<String, usize>,
    /// Normalized label entropy in `[0, 1]`; 1.0 for a single class.
    pub class_uniformity: f64,
}

/// Profile a table's label distribution and sparsity.
pub fn profile(table: &DataTable) -> DatasetProfile {
    let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
    for y in table.labels() {
        *histogram.entry(format_label(y)).or_insert(0) += 1;
    }
    let n = table.n_instances() as f64;
    let k = histogram.len();
    let uniformity = if k <= 1 {
        1.0
    } else {
        let entropy: f64 = histogram
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum();
        entropy / (k as f64).ln()
    };
    DatasetProfile {
        n_features: table.n_features(),
        n_instances: table.n_instances(),
        sparsity: sparsity(table, true),
        class_histogram: histogram,
        class_uniformity: uniformity,
    }
}

fn format_label(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn table(rows: Vec<Vec<f64>>) -> DataTable {
        DataTable::from_numeric_rows(rows).unwrap()
    }

    #[test]
    fn sparsity_all_zero_matrix_is_one() {
        let t = table(vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(sparsity(&t, true), 1.0);
    }

    #[test]
    fn sparsity_counts_exact_zeros() {
        let t = table(vec![vec![0.0, 1.0], vec![2.0, 3.0]]);
        assert_eq!(sparsity(&t, true), 0.25);
        // Excluding the label column drops one non-zero cell from scope.
        assert_eq!(sparsity(&t, false), 0.5);
    }

    #[test]
    fn sparsity_no_zeros_is_zero() {
        let t = table(vec![vec![1.0, 1.0], vec![2.0, 3.0]]);
        assert_eq!(sparsity(&t, true), 0.0);
    }

    #[test]
    fn minmax_basic_column() {
        let t = table(vec![vec![2.0, 0.0], vec![4.0, 1.0], vec![6.0, 0.0]]);
        let n = minmax_normalize(&t, true).unwrap();
        let col: Vec<f64> = n.values().column(0).to_vec();
        assert_eq!(col, vec![0.0, 0.5, 1.0]);
        // label untouched
        assert_eq!(n.values().column(1).to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn minmax_constant_column_maps_to_zero() {
        let t = table(vec![vec![5.0, 0.0], vec![5.0, 1.0], vec![5.0, 0.0]]);
        let n = minmax_normalize(&t, true).unwrap();
        assert_eq!(n.values().column(0).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn minmax_idempotent() {
        let t = table(vec![vec![0.0, 0.0], vec![0.5, 1.0], vec![1.0, 0.0]]);
        let once = minmax_normalize(&t, true).unwrap();
        let twice = minmax_normalize(&once, true).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn minmax_rejects_non_finite() {
        let t = table(vec![vec![f64::NAN, 0.0], vec![1.0, 1.0]]);
        let err = minmax_normalize(&t, true).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 0 }));
    }

    #[test]
    fn normalize_includes_label_when_asked() {
        let t = table(vec![vec![0.0, 2.0], vec![1.0, 4.0], vec![2.0, 6.0]]);
        let n = minmax_normalize(&t, false).unwrap();
        assert_eq!(n.values().column(1).to_vec(), vec![0.0, 0.5, 1.0]);
    }

    fn factor_table() -> DataTable {
        // feature col is numeric, label is a factor with levels b < o < x
        // stored as 1-based sorted-level indices.
        let values = array![[1.0, 3.0], [2.0, 2.0], [3.0, 1.0], [4.0, 3.0]];
        let columns = vec![
            ColumnMeta::numeric("f"),
            ColumnMeta::factor("move", vec!["b".into(), "o".into(), "x".into()]),
        ];
        DataTable::new(values, columns, 1).unwrap()
    }

    #[test]
    fn detect_factor_flags_symbolic_column() {
        let t = factor_table();
        assert!(!detect_factor(&t, 0).unwrap());
        assert!(detect_factor(&t, 1).unwrap());
        assert!(detect_factor(&t, 9).is_err());
    }

    #[test]
    fn level_index_maps_sorted_levels() {
        let t = factor_table();
        let c = factor_to_numeric(&t, 1, FactorPolicy::LevelIndex).unwrap();
        assert_eq!(c.values().column(1).to_vec(), vec![3.0, 2.0, 1.0, 3.0]);
        assert_eq!(c.column(1).unwrap().level_codes, Some(vec![1, 2, 3]));
        assert_eq!(c.column(1).unwrap().decode(3.0), Some("x"));
    }

    #[test]
    fn seeded_permutation_is_a_reproducible_bijection() {
        let t = factor_table();
        let a = factor_to_numeric(&t, 1, FactorPolicy::SeededPermutation(7)).unwrap();
        let b = factor_to_numeric(&t, 1, FactorPolicy::SeededPermutation(7)).unwrap();
        assert_eq!(a, b);
        let codes = a.column(1).unwrap().level_codes.clone().unwrap();
        let mut sorted = codes.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3]);
        // decoding recovers original levels regardless of the permutation
        for (i, level) in ["b", "o", "x"].iter().enumerate() {
            assert_eq!(a.column(1).unwrap().decode(codes[i] as f64), Some(*level));
        }
    }

    #[test]
    fn factor_to_numeric_rejects_numeric_column() {
        let t = factor_table();
        assert!(matches!(
            factor_to_numeric(&t, 0, FactorPolicy::LevelIndex),
            Err(Error::NotAFactor { col: 0 })
        ));
    }

    #[test]
    fn preprocess_all_keeps_input_order() {
        let t1 = table(vec![vec![0.0, 0.0], vec![2.0, 1.0]]);
        let t2 = table(vec![vec![1.0, 0.0], vec![3.0, 1.0]]);
        let (out, slist) =
            preprocess_all(&[t1.clone(), t2.clone()], FactorPolicy::LevelIndex, 1).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(slist, vec![sparsity(&t1, true), sparsity(&t2, true)]);
        for t in &out {
            for col in 0..t.n_columns() - 1 {
                for &v in t.values().column(col) {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn preprocess_encodes_factor_label() {
        let t = factor_table();
        let (out, _) = preprocess_all(&[t], FactorPolicy::LevelIndex, 0).unwrap();
        let labels = out[0].labels();
        assert!(labels.iter().all(|&v| (1.0..=3.0).contains(&v)));
        assert!(out[0].column(1).unwrap().level_codes.is_some());
    }

    #[test]
    fn profile_balanced_labels() {
        let t = table(vec![
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![3.0, 1.0],
            vec![4.0, 1.0],
        ]);
        let p = profile(&t);
        assert_eq!(p.class_histogram.get("0"), Some(&2));
        assert_eq!(p.class_histogram.get("1"), Some(&2));
        assert!((p.class_uniformity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn profile_skewed_labels_matches_entropy() {
        let t = table(vec![
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![3.0, 0.0],
            vec![4.0, 1.0],
        ]);
        let p = profile(&t);
        let expected = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln()) / 2f64.ln();
        assert!((p.class_uniformity - expected).abs() < 1e-12);
        assert!((p.class_uniformity - 0.8112781).abs() < 1e-6);
    }

    #[test]
    fn profile_single_class_uniformity_is_one() {
        let t = table(vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![3.0, 1.0]]);
        let p = profile(&t);
        assert_eq!(p.class_uniformity, 1.0);
        assert_eq!(p.class_histogram.len(), 1);
    }
}
