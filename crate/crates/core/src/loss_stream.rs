//! Time-by-model loss matrix and its CSV interchange format.
//!
//! Time indices are 1-based (`t = 1..=len`), matching the step log. Model
//! indices are 0-based in the Rust API and 1-based in every CSV file.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Growing matrix of finite losses `L[t, i]`, one row per time period.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    labels: Vec<String>,
    values: Vec<f64>,
}

/// Borrowed read-only prefix (rows `1..=len`) of a [`LossMatrix`].
#[derive(Debug, Clone, Copy)]
pub struct LossView<'a> {
    values: &'a [f64],
    m: usize,
}

impl LossMatrix {
    /// Empty `0 x m` matrix with the given model labels.
    pub fn new(labels: Vec<String>) -> Result<Self> {
        validate_labels(&labels).map_err(|reason| Error::Header { line: 1, reason })?;
        Ok(Self {
            labels,
            values: Vec::new(),
        })
    }

    /// Empty matrix labelled `m1..mM`.
    pub fn with_models(m: usize) -> Result<Self> {
        Self::new((1..=m).map(|i| format!("m{i}")).collect())
    }

    pub fn from_rows<R: AsRef<[f64]>>(labels: Vec<String>, rows: &[R]) -> Result<Self> {
        let mut lm = Self::new(labels)?;
        for row in rows {
            lm.push_row(row.as_ref())?;
        }
        Ok(lm)
    }

    /// Convenience constructor with default labels.
    pub fn from_rows_unlabeled<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        let mut lm = Self::with_models(m)?;
        for row in rows {
            lm.push_row(row.as_ref())?;
        }
        Ok(lm)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of candidate models.
    pub fn models(&self) -> usize {
        self.labels.len()
    }

    /// Number of time periods observed so far.
    pub fn len(&self) -> usize {
        self.values.len() / self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row `t` (1-based).
    pub fn row(&self, t: usize) -> Result<&[f64]> {
        self.check_time(t)?;
        let m = self.models();
        Ok(&self.values[(t - 1) * m..t * m])
    }

    pub fn view(&self) -> LossView<'_> {
        LossView {
            values: &self.values,
            m: self.models(),
        }
    }

    /// Rows `1..=t`.
    pub fn prefix(&self, t: usize) -> Result<LossView<'_>> {
        if t > self.len() {
            return Err(Error::OutOfRange {
                what: "time index",
                index: t,
                min: 0,
                max: self.len(),
            });
        }
        Ok(LossView {
            values: &self.values[..t * self.models()],
            m: self.models(),
        })
    }

    /// Appends one period in place.
    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.models() {
            return Err(Error::LengthMismatch {
                expected: self.models(),
                found: row.len(),
            });
        }
        if let Some((index, &value)) = row.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    /// Returns a copy with `row` appended; `self` is left untouched.
    pub fn append_row(&self, row: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.push_row(row)?;
        Ok(next)
    }

    /// Best model at time `t`: the row argmin, lowest index on ties.
    pub fn best_model(&self, t: usize) -> Result<usize> {
        Ok(argmin(self.row(t)?))
    }

    /// Copy of rows `1..=t`.
    pub fn truncated(&self, t: usize) -> Result<Self> {
        let view = self.prefix(t)?;
        Ok(Self {
            labels: self.labels.clone(),
            values: view.values.to_vec(),
        })
    }

    /// Copy with columns reordered so that new column `k` is old column `order[k]`.
    pub fn permute_columns(&self, order: &[usize]) -> Result<Self> {
        let m = self.models();
        let mut seen = vec![false; m];
        if order.len() != m || order.iter().any(|&j| j >= m || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::InvalidArgument(format!(
                "column order {order:?} is not a permutation of 0..{m}"
            )));
        }
        let labels = order.iter().map(|&j| self.labels[j].clone()).collect();
        let values = self
            .values
            .chunks_exact(m)
            .flat_map(|row| order.iter().map(move |&j| row[j]))
            .collect();
        Ok(Self { labels, values })
    }

    fn check_time(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::OutOfRange {
                what: "time index",
                index: t,
                min: 1,
                max: self.len(),
            });
        }
        Ok(())
    }

    pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        if text.trim().is_empty() {
            return Err(Error::EmptyFile {
                path: path.to_path_buf(),
            });
        }
        Self::parse_csv(text.as_bytes())
    }

    /// Parses the loss CSV format: a mandatory header of model labels followed
    /// by one row of `m` decimal numbers per period.
    pub fn parse_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(rec) => rec?,
            None => {
                return Err(Error::Header {
                    line: 1,
                    reason: "missing header row".into(),
                })
            }
        };
        let header_line = header.position().map_or(1, |p| p.line() as usize);
        let labels: Vec<String> = header.iter().map(str::to_owned).collect();
        validate_labels(&labels).map_err(|reason| Error::Header {
            line: header_line,
            reason,
        })?;
        let m = labels.len();
        let mut lm = Self::new(labels)?;
        let mut row = Vec::with_capacity(m);
        for rec in records {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != m {
                return Err(Error::RowLength {
                    line,
                    expected: m,
                    found: rec.len(),
                });
            }
            row.clear();
            for (k, field) in rec.iter().enumerate() {
                let value: f64 = field.parse().map_err(|_| Error::NonNumeric {
                    line,
                    column: k + 1,
                    field: field.to_owned(),
                })?;
                if !value.is_finite() {
                    return Err(Error::NonFiniteField {
                        line,
                        column: k + 1,
                        field: field.to_owned(),
                    });
                }
                row.push(value);
            }
            lm.values.extend_from_slice(&row);
        }
        Ok(lm)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.labels)?;
        for row in self.values.chunks_exact(self.models()) {
            wtr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(File::create(path)?))
    }
}

impl<'a> LossView<'a> {
    pub fn len(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn models(&self) -> usize {
        self.m
    }

    /// Row with 0-based offset `k` (time `k + 1`).
    pub fn row_at(&self, k: usize) -> &'a [f64] {
        &self.values[k * self.m..(k + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.values.chunks_exact(self.m)
    }
}

fn validate_labels(labels: &[String]) -> std::result::Result<(), String> {
    if labels.is_empty() {
        return Err("at least one model label is required".into());
    }
    if let Some(k) = labels.iter().position(|l| l.trim().is_empty()) {
        return Err(format!("model label in column {} is empty", k + 1));
    }
    for (k, label) in labels.iter().enumerate() {
        if labels[..k].contains(label) {
            return Err(format!("duplicate model label {label:?}"));
        }
    }
    Ok(())
}

/// Index of the smallest entry; the first one wins ties.
pub fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v < row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<LossMatrix> {
        LossMatrix::parse_csv(text.as_bytes())
    }

    #[test]
    fn parses_simple_matrix() {
        let lm = parse("m1,m2\n1.0,2.0\n0.5,0.25\n").unwrap();
        assert_eq!(lm.len(), 2);
        assert_eq!(lm.labels(), ["m1", "m2"]);
        assert_eq!(lm.row(1).unwrap(), [1.0, 2.0]);
        assert_eq!(lm.row(2).unwrap(), [0.5, 0.25]);
    }

    #[test]
    fn non_numeric_field_names_line_and_column() {
        let err = parse("m1,m2\n1.0,abc\n").unwrap_err();
        assert!(
            matches!(err, Error::NonNumeric { line: 2, column: 2, .. }),
            "{err:?}"
        );
        assert!(err.to_string().contains("line 2, column 2"));
    }

    #[test]
    fn infinite_field_is_rejected() {
        let err = parse("m1,m2\n1.0,inf\n").unwrap_err();
        assert!(matches!(err, Error::NonFiniteField { line: 2, column: 2, .. }));
        let err = parse("m1,m2\n1.0,2\nNaN,1\n").unwrap_err();
        assert!(matches!(err, Error::NonFiniteField { line: 3, column: 1, .. }));
    }

    #[test]
    fn ragged_row_is_rejected() {
        let err = parse("m1,m2\n1,2\n3\n").unwrap_err();
        assert!(matches!(
            err,
            Error::RowLength { line: 3, expected: 2, found: 1 }
        ));
    }

    #[test]
    fn empty_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            LossMatrix::ingest_csv(&path).unwrap_err(),
            Error::EmptyFile { .. }
        ));
    }

    #[test]
    fn header_must_be_distinct_and_nonempty() {
        assert!(matches!(parse("a,a\n1,2\n"), Err(Error::Header { .. })));
        assert!(matches!(parse("a,\n1,2\n"), Err(Error::Header { .. })));
    }

    #[test]
    fn thousands_separators_are_not_numbers() {
        assert!(matches!(
            parse("a\n\"1,000\"\n"),
            Err(Error::NonNumeric { line: 2, .. })
        ));
    }

    #[test]
    fn append_row_grows_matrix() {
        let lm = LossMatrix::from_rows_unlabeled(&[[1.0, 2.0], [0.5, 0.25]]).unwrap();
        let next = lm.append_row(&[3.0, 4.0]).unwrap();
        assert_eq!(next.len(), 3);
        assert_eq!(next.row(3).unwrap(), [3.0, 4.0]);
        assert_eq!(lm.len(), 2);

        assert!(matches!(
            lm.append_row(&[1.0, 2.0, 3.0]),
            Err(Error::LengthMismatch { expected: 2, found: 3 })
        ));
        assert!(matches!(
            lm.append_row(&[1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));

        let empty = LossMatrix::with_models(2).unwrap();
        assert_eq!(empty.len(), 0);
        assert_eq!(empty.append_row(&[1.0, 2.0]).unwrap().len(), 1);
    }

    #[test]
    fn best_model_examples() {
        let lm = LossMatrix::from_rows_unlabeled(&[[0.9, 0.1, 0.5]]).unwrap();
        assert_eq!(lm.best_model(1).unwrap(), 1);
        let lm = LossMatrix::from_rows_unlabeled(&[[0.3, 0.3]]).unwrap();
        assert_eq!(lm.best_model(1).unwrap(), 0);
        let lm = LossMatrix::from_rows_unlabeled(&[[7.0]]).unwrap();
        assert_eq!(lm.best_model(1).unwrap(), 0);
        assert!(lm.best_model(0).is_err());
        assert!(lm.best_model(2).is_err());
    }

    #[test]
    fn negative_losses_are_allowed() {
        let lm = parse("a,b\n-1.5,-2e3\n").unwrap();
        assert_eq!(lm.best_model(1).unwrap(), 1);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let lm = LossMatrix::from_rows_unlabeled(&[[0.1, 1.0 / 3.0], [-2.5e-17, 7.0]]).unwrap();
        let mut buf = Vec::new();
        lm.write_csv(&mut buf).unwrap();
        assert_eq!(LossMatrix::parse_csv(&buf[..]).unwrap(), lm);
    }

    proptest! {
        #[test]
        fn best_model_is_affine_invariant(
            row in prop::collection::vec(-100.0f64..100.0, 1..8),
            shift in -50.0f64..50.0,
            scale in 0.01f64..20.0,
        ) {
            let lm = LossMatrix::from_rows_unlabeled(std::slice::from_ref(&row)).unwrap();
            let moved: Vec<f64> = row.iter().map(|v| v * scale + shift).collect();
            let best = lm.best_model(1).unwrap();
            // Affine maps can merge near-ties under rounding; compare values.
            let moved_best = argmin(&moved);
            prop_assert!((moved[moved_best] - moved[best]).abs() <= 1e-9 * (1.0 + moved[best].abs()));
        }

        #[test]
        fn appended_row_best_is_its_argmin(
            base in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 0..5),
            row in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let mut lm = LossMatrix::with_models(3).unwrap();
            for r in &base {
                lm.push_row(r).unwrap();
            }
            let next = lm.append_row(&row).unwrap();
            prop_assert_eq!(next.best_model(next.len()).unwrap(), argmin(&row));
        }
    }
}
