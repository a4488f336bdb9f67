//! CSV and ARFF ingestion.
//!
//! CSV files need a header row; column kinds are inferred (any non-numeric
//! token makes the column a factor). ARFF attribute declarations drive the
//! kind directly. Missing values (empty cells or `?`) are rejected with
//! their location.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::{ColumnKind, ColumnMeta, DataTable};
use crate::error::{Error, Result};

/// Supported input formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Arff,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "arff" => Ok(Format::Arff),
            other => Err(Error::invalid(format!("unknown format {other:?}"))),
        }
    }
}

/// Label column designation: by header name, by 0-based index, or the last
/// column (the conventional position of the class attribute).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelSpec {
    Name(String),
    Index(usize),
    Last,
}

impl LabelSpec {
    fn resolve(&self, path: &str, names: &[String]) -> Result<usize> {
        match self {
            LabelSpec::Index(i) if *i < names.len() => Ok(*i),
            LabelSpec::Index(i) => Err(Error::ColumnOutOfRange {
                col: *i,
                ncols: names.len(),
            }),
            LabelSpec::Name(name) => names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownLabel {
                    path: path.into(),
                    label: name.clone(),
                }),
            LabelSpec::Last => Ok(names.len() - 1),
        }
    }
}

impl From<&str> for LabelSpec {
    fn from(s: &str) -> Self {
        LabelSpec::Name(s.to_string())
    }
}

impl From<usize> for LabelSpec {
    fn from(i: usize) -> Self {
        LabelSpec::Index(i)
    }
}

/// Load a table from `path` in the given format.
pub fn load_table(path: impl AsRef<Path>, format: Format, label: LabelSpec) -> Result<DataTable> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::BadFormat {
        path: name.clone(),
        reason: e.to_string(),
    })?;
    match format {
        Format::Csv => parse_csv(&name, &text, label),
        Format::Arff => parse_arff(&name, &text, label),
    }
}

/// Parse CSV text (header row required).
pub fn parse_csv(path: &str, text: &str, label: LabelSpec) -> Result<DataTable> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput(format!("{path}: empty file")));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let width = headers.len();

    let mut raw: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 2; // header is row 1
        if record.len() != width {
            return Err(Error::RaggedRow {
                path: path.into(),
                row: row_no,
                expected: width,
                found: record.len(),
            });
        }
        raw.push((row_no, record.iter().map(|c| c.to_string()).collect()));
    }
    if raw.is_empty() {
        return Err(Error::EmptyInput(format!("{path}: no data rows")));
    }

    let label_index = label.resolve(path, &headers)?;

    // Column kind inference: numeric unless some token fails to parse.
    let mut kinds = vec![ColumnKind::Numeric; width];
    for (row_no, row) in &raw {
        for (j, cell) in row.iter().enumerate() {
            if cell.is_empty() || cell == "?" {
                return Err(Error::MissingValue {
                    path: path.into(),
                    row: *row_no,
                    col: j + 1,
                });
            }
            if kinds[j] == ColumnKind::Numeric && cell.parse::<f64>().is_err() {
                kinds[j] = ColumnKind::Factor;
            }
        }
    }

    let mut columns = Vec::with_capacity(width);
    for (j, name) in headers.iter().enumerate() {
        match kinds[j] {
            ColumnKind::Numeric => columns.push(ColumnMeta::numeric(name)),
            ColumnKind::Factor => {
                let levels: BTreeSet<String> = raw.iter().map(|(_, r)| r[j].clone()).collect();
                columns.push(ColumnMeta::factor(name, levels.into_iter().collect()));
            }
        }
    }

    build_table(path, raw, columns, label_index)
}

/// Parse ARFF text. Supports numeric/real/integer and nominal attributes
/// with dense data rows; sparse `{...}` rows are rejected.
pub fn parse_arff(path: &str, text: &str, label: LabelSpec) -> Result<DataTable> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput(format!("{path}: empty file")));
    }
    let mut columns: Vec<ColumnMeta> = Vec::new();
    let mut raw: Vec<(usize, Vec<String>)> = Vec::new();
    let mut in_data = false;

    for (lineno, line) in text.lines().enumerate() {
        let row_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = trimmed.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            }
            if lower.starts_with("@attribute") {
                columns.push(parse_attribute(path, row_no, trimmed)?);
                continue;
            }
            if lower.starts_with("@data") {
                if columns.is_empty() {
                    return Err(Error::BadFormat {
                        path: path.into(),
                        reason: "@data before any @attribute".into(),
                    });
                }
                in_data = true;
                continue;
            }
            return Err(Error::BadFormat {
                path: path.into(),
                reason: format!("line {row_no}: unexpected line {trimmed:?}"),
            });
        }
        if trimmed.starts_with('{') {
            return Err(Error::BadFormat {
                path: path.into(),
                reason: format!("line {row_no}: sparse ARFF rows are not supported"),
            });
        }
        let fields = split_arff_row(trimmed);
        if fields.len() != columns.len() {
            return Err(Error::RaggedRow {
                path: path.into(),
                row: row_no,
                expected: columns.len(),
                found: fields.len(),
            });
        }
        for (j, f) in fields.iter().enumerate() {
            if f.is_empty() || f == "?" {
                return Err(Error::MissingValue {
                    path: path.into(),
                    row: row_no,
                    col: j + 1,
                });
            }
        }
        raw.push((row_no, fields));
    }

    if raw.is_empty() {
        return Err(Error::EmptyInput(format!("{path}: no data rows")));
    }

    // Nominal levels come from the declaration; sort them so the stored
    // cell encoding matches the CSV path.
    for c in columns.iter_mut() {
        c.factor_levels.sort();
    }
    let names: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
    let label_index = label.resolve(path, &names)?;
    build_table(path, raw, columns, label_index)
}

fn parse_attribute(path: &str, row: usize, line: &str) -> Result<ColumnMeta> {
    let rest = line["@attribute".len()..].trim();
    let (name, tail) = if let Some(stripped) = rest.strip_prefix('\'') {
        let end = stripped.find('\'').ok_or_else(|| Error::BadFormat {
            path: path.into(),
            reason: format!("line {row}: unterminated attribute name"),
        })?;
        (stripped[..end].to_string(), stripped[end + 1..].trim())
    } else {
        let mut parts = rest.splitn(2, char::is_whitespace);
        let name = parts.next().unwrap_or_default().to_string();
        (name, parts.next().unwrap_or_default().trim())
    };
    if name.is_empty() || tail.is_empty() {
        return Err(Error::BadFormat {
            path: path.into(),
            reason: format!("line {row}: malformed @attribute"),
        });
    }
    if tail.starts_with('{') {
        let inner = tail
            .trim_start_matches('{')
            .trim_end_matches('}')
            .trim();
        let levels: Vec<String> = inner
            .split(',')
            .map(|l| l.trim().trim_matches('\'').trim_matches('"').to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if levels.is_empty() {
            return Err(Error::BadFormat {
                path: path.into(),
                reason: format!("line {row}: nominal attribute {name:?} has no values"),
            });
        }
        Ok(ColumnMeta::factor(name, levels))
    } else {
        match tail.to_ascii_lowercase().as_str() {
            "numeric" | "real" | "integer" => Ok(ColumnMeta::numeric(name)),
            other => Err(Error::BadFormat {
                path: path.into(),
                reason: format!("line {row}: unsupported attribute type {other:?}"),
            }),
        }
    }
}

fn split_arff_row(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted: Option<char> = None;
    for ch in line.chars() {
        match quoted {
            Some(q) => {
                if ch == q {
                    quoted = None;
                } else {
                    cur.push(ch);
                }
            }
            None => match ch {
                '\'' | '"' => quoted = Some(ch),
                ',' => {
                    fields.push(cur.trim().to_string());
                    cur = String::new();
                }
                _ => cur.push(ch),
            },
        }
    }
    fields.push(cur.trim().to_string());
    fields
}

fn build_table(
    path: &str,
    raw: Vec<(usize, Vec<String>)>,
    columns: Vec<ColumnMeta>,
    label_index: usize,
) -> Result<DataTable> {
    let n_rows = raw.len();
    let n_cols = columns.len();
    let mut values = Array2::zeros((n_rows, n_cols));
    for (i, (row_no, row)) in raw.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let v = match columns[j].kind {
                ColumnKind::Numeric => cell.parse::<f64>().map_err(|e| Error::BadCell {
                    path: path.into(),
                    row: *row_no,
                    col: j + 1,
                    cell: cell.clone(),
                    reason: e.to_string(),
                })?,
                ColumnKind::Factor => {
                    let idx = columns[j]
                        .factor_levels
                        .binary_search(cell)
                        .map_err(|_| Error::BadCell {
                            path: path.into(),
                            row: *row_no,
                            col: j + 1,
                            cell: cell.clone(),
                            reason: "value not among declared levels".into(),
                        })?;
                    (idx + 1) as f64
                }
            };
            values[[i, j]] = v;
        }
    }
    DataTable::new(values, columns, label_index)
}

/// Write a table back out as CSV. Unconverted factor cells are written as
/// their raw level; converted ones as their numeric code.
pub fn write_csv(table: &DataTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let headers: Vec<&str> = table.columns().iter().map(|c| c.name.as_str()).collect();
    out.push_str(&headers.join(","));
    out.push('\n');
    for i in 0..table.n_instances() {
        let mut cells = Vec::with_capacity(table.n_columns());
        for (j, meta) in table.columns().iter().enumerate() {
            let v = table.get(i, j);
            let cell = match (meta.kind, &meta.level_codes) {
                (ColumnKind::Factor, None) => meta.factor_levels[(v as usize) - 1].clone(),
                _ => format!("{v}"),
            };
            cells.push(cell);
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}
