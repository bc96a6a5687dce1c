//! Dataset representation, CSV ingestion/emission and normalization.
//!
//! A [`Dataset`] is an ordered table of numeric records. An optional class
//! label column is split off at load time, carried alongside each record, and
//! never touched by numeric transforms. On emission the label is written back
//! at its original column position.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One tuple: the numeric attributes plus an optional class token.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub values: Vec<f64>,
    pub label: Option<String>,
}

impl Record {
    pub fn new(values: Vec<f64>) -> Self {
        Record {
            values,
            label: None,
        }
    }

    pub fn labeled(values: Vec<f64>, label: impl Into<String>) -> Self {
        Record {
            values,
            label: Some(label.into()),
        }
    }

    pub fn arity(&self) -> usize {
        self.values.len()
    }
}

/// Ordered collection of records sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    schema: Vec<String>,
    class_column: Option<usize>,
    class_name: Option<String>,
}

impl Dataset {
    /// Builds a dataset from records, checking arity and finiteness.
    ///
    /// `schema` names the numeric attributes only. `class_column` is the
    /// position the label occupies in the full CSV row, used on emission.
    pub fn new(
        records: Vec<Record>,
        schema: Vec<String>,
        class_column: Option<usize>,
    ) -> Result<Self> {
        let n = schema.len();
        for (row, r) in records.iter().enumerate() {
            if r.arity() != n {
                return Err(Error::MalformedRow {
                    row,
                    expected: n,
                    found: r.arity(),
                });
            }
            if let Some(column) = r.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericValue {
                    row,
                    column,
                    value: r.values[column].to_string(),
                });
            }
        }
        if let Some(c) = class_column {
            if c > n {
                return Err(Error::InvalidClassColumn {
                    index: c,
                    width: n + 1,
                });
            }
        }
        Ok(Dataset {
            records,
            schema,
            class_column,
            class_name: class_column.map(|_| "class".to_string()),
        })
    }

    /// Dataset with generated attribute names `a0..a{n-1}` and, if any record
    /// carries a label, a trailing class column.
    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let n = records.first().map_or(0, Record::arity);
        let schema = (0..n).map(|i| format!("a{i}")).collect();
        let class_column = records.iter().any(|r| r.label.is_some()).then_some(n);
        Dataset::new(records, schema, class_column)
    }

    /// Same schema, different records. Arity is checked.
    pub fn with_records(&self, records: Vec<Record>) -> Result<Self> {
        let mut d = Dataset::new(records, self.schema.clone(), self.class_column)?;
        d.class_name.clone_from(&self.class_name);
        Ok(d)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn class_column(&self) -> Option<usize> {
        self.class_column
    }

    pub fn set_class_name(&mut self, name: impl Into<String>) {
        self.class_name = Some(name.into());
    }

    pub fn class_name(&self) -> Option<&str> {
        self.class_name.as_deref()
    }

    /// Number of records (m).
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of numeric attributes (n).
    pub fn n_attributes(&self) -> usize {
        self.schema.len()
    }

    pub fn has_labels(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.label.is_some())
    }

    pub fn labels(&self) -> Vec<Option<&str>> {
        self.records.iter().map(|r| r.label.as_deref()).collect()
    }

    pub fn column(&self, a: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.values[a]).collect()
    }

    /// Writes the dataset as comma-separated text.
    ///
    /// Floats use Rust's shortest round-trip representation, so re-loading the
    /// output yields bit-identical values.
    pub fn write_csv<W: Write>(&self, writer: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        if header {
            w.write_record(self.full_row(
                self.schema.iter().cloned(),
                self.class_name.clone().unwrap_or_else(|| "class".into()),
            ))?;
        }
        for r in &self.records {
            w.write_record(self.full_row(
                r.values.iter().map(|v| v.to_string()),
                r.label.clone().unwrap_or_default(),
            ))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn emit_csv(&self, path: impl AsRef<Path>, header: bool) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file, header)
    }

    fn full_row(&self, values: impl Iterator<Item = String>, label: String) -> Vec<String> {
        let mut row: Vec<String> = values.collect();
        if let Some(c) = self.class_column {
            row.insert(c.min(row.len()), label);
        }
        row
    }
}

/// Parses one already-split row into a record.
pub(crate) fn parse_row(
    fields: &csv::StringRecord,
    row: usize,
    expected_width: usize,
    class_column: Option<usize>,
) -> Result<Record> {
    if fields.len() != expected_width {
        return Err(Error::MalformedRow {
            row,
            expected: expected_width,
            found: fields.len(),
        });
    }
    let mut values = Vec::with_capacity(expected_width);
    let mut label = None;
    for (column, raw) in fields.iter().enumerate() {
        let cell = raw.trim();
        if Some(column) == class_column {
            label = Some(cell.to_string());
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                return Err(Error::NonNumericValue {
                    row,
                    column,
                    value: cell.to_string(),
                })
            }
        }
    }
    Ok(Record { values, label })
}

/// Loads a CSV file. Row order is preserved.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    class_column: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, has_header, class_column)
}

/// Reads CSV text from any reader. Rows are numbered from 0, excluding the
/// header.
pub fn read_csv<R: Read>(
    reader: R,
    has_header: bool,
    class_column: Option<usize>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(reader);

    let header: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };

    let mut width = header.as_ref().map(Vec::len);
    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let expected = *width.get_or_insert(rec.len());
        if let Some(c) = class_column {
            if c >= expected {
                return Err(Error::InvalidClassColumn {
                    index: c,
                    width: expected,
                });
            }
        }
        records.push(parse_row(&rec, row, expected, class_column)?);
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let width = width.unwrap_or(0);
    let (schema, class_name) = match header {
        Some(h) => {
            let class_name = class_column.map(|c| h[c].clone());
            let schema = h
                .into_iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != class_column)
                .map(|(_, s)| s)
                .collect();
            (schema, class_name)
        }
        None => {
            let n = width - usize::from(class_column.is_some());
            ((0..n).map(|i| format!("a{i}")).collect(), class_column.map(|_| "class".into()))
        }
    };
    let mut d = Dataset::new(records, schema, class_column)?;
    d.class_name = class_name;
    Ok(d)
}

/// Sufficient statistics of a set of records: count, per-attribute sums and
/// per-attribute-pair product sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub count: usize,
    pub sums: Vec<f64>,
    /// Row-major n×n matrix of Σ x_a·x_b.
    pub product_sums: Vec<f64>,
}

impl GroupStats {
    pub fn new(n: usize) -> Self {
        GroupStats {
            count: 0,
            sums: vec![0.0; n],
            product_sums: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.sums.len()
    }

    pub fn add(&mut self, values: &[f64]) {
        let n = self.n();
        debug_assert_eq!(values.len(), n);
        self.count += 1;
        for a in 0..n {
            self.sums[a] += values[a];
            let row = &mut self.product_sums[a * n..(a + 1) * n];
            for (slot, &vb) in row.iter_mut().zip(values) {
                *slot += values[a] * vb;
            }
        }
    }

    pub fn from_values<'a>(n: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut s = GroupStats::new(n);
        for r in rows {
            s.add(r);
        }
        s
    }

    pub fn product_sum(&self, a: usize, b: usize) -> f64 {
        self.product_sums[a * self.n() + b]
    }
}

/// Per-attribute sums and pairwise product sums over the whole dataset.
pub fn column_stats(d: &Dataset) -> Result<GroupStats> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(GroupStats::from_values(
        d.n_attributes(),
        d.records().iter().map(|r| r.values.as_slice()),
    ))
}

/// Per-attribute z-score parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationParams {
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub stds: Vec<f64>,
}

impl NormalizationParams {
    pub fn fit(d: &Dataset) -> Result<Self> {
        Self::fit_rows(d.records().iter().map(|r| r.values.as_slice()), d.n_attributes())
    }

    pub fn fit_rows<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, n: usize) -> Result<Self> {
        let m = rows.clone().count();
        if m == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut means = vec![0.0; n];
        for r in rows.clone() {
            for (acc, v) in means.iter_mut().zip(r) {
                *acc += v;
            }
        }
        means.iter_mut().for_each(|v| *v /= m as f64);
        let mut vars = vec![0.0; n];
        for r in rows {
            for a in 0..n {
                let d = r[a] - means[a];
                vars[a] += d * d;
            }
        }
        let stds = vars.into_iter().map(|v| (v / m as f64).sqrt()).collect();
        Ok(NormalizationParams { means, stds })
    }

    /// Attributes whose standard deviation is zero; these normalize to 0.
    pub fn zero_std(&self) -> Vec<bool> {
        self.stds.iter().map(|&s| s == 0.0).collect()
    }

    pub fn normalize_values(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(a, &v)| {
                if self.stds[a] == 0.0 {
                    0.0
                } else {
                    (v - self.means[a]) / self.stds[a]
                }
            })
            .collect()
    }

    /// Applies these parameters to every record of `d`; labels are kept.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.n_attributes() != self.means.len() {
            return Err(Error::ArityMismatch {
                left: d.n_attributes(),
                right: self.means.len(),
            });
        }
        let records = d
            .records()
            .iter()
            .map(|r| Record {
                values: self.normalize_values(&r.values),
                label: r.label.clone(),
            })
            .collect();
        d.with_records(records)
    }
}

/// Z-score normalizes each non-class attribute.
pub fn zscore_normalize(d: &Dataset) -> Result<(Dataset, NormalizationParams)> {
    let params = NormalizationParams::fit(d)?;
    let normalized = params.apply(d)?;
    Ok((normalized, params))
}
