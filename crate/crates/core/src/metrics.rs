//! Windowed summaries of a resolved step log.
//!
//! Every series is aligned with the log: entry `k` summarizes the trailing
//! window ending at record `k`, and windows at the start of the log use
//! whatever history exists.

use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;

use crate::engine::StepRecord;
use crate::error::{Error, Result};
use crate::loss_stream::LossMatrix;

fn check_nonempty(records: &[StepRecord], window: usize) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("step log is empty".into()));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    Ok(())
}

fn trailing(k: usize, window: usize) -> std::ops::RangeInclusive<usize> {
    (k + 1).saturating_sub(window)..=k
}

/// Trailing mean of `values` at every position.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|k| {
            let w = &values[trailing(k, window)];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Fraction of misses among the resolved records of each trailing window;
/// `None` when the window holds no resolved record.
pub fn moving_miscoverage(records: &[StepRecord], window: usize) -> Result<Vec<Option<f64>>> {
    check_nonempty(records, window)?;
    Ok((0..records.len())
        .map(|k| {
            let (misses, resolved) = records[trailing(k, window)]
                .iter()
                .filter_map(StepRecord::missed)
                .fold((0usize, 0usize), |(m, n), missed| (m + usize::from(missed), n + 1));
            (resolved > 0).then(|| misses as f64 / resolved as f64)
        })
        .collect())
}

pub fn moving_cardinality(records: &[StepRecord], window: usize) -> Result<Vec<f64>> {
    check_nonempty(records, window)?;
    let card: Vec<f64> = records.iter().map(|r| r.cardinality() as f64).collect();
    Ok(moving_average(&card, window))
}

/// Minimum-cardinality emitted set within a trailing window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualitySet {
    pub cardinality: usize,
    /// Position in the log of the record that emitted the set.
    pub origin: usize,
    pub set: Vec<usize>,
}

/// Trailing-window minimum of the emitted cardinality; the earliest record
/// wins ties.
pub fn quality_sets(records: &[StepRecord], window: usize) -> Result<Vec<QualitySet>> {
    check_nonempty(records, window)?;
    Ok((0..records.len())
        .map(|k| {
            let origin = trailing(k, window)
                .min_by_key(|&j| records[j].cardinality())
                .expect("window is nonempty");
            QualitySet {
                cardinality: records[origin].cardinality(),
                origin,
                set: records[origin].emitted_set.clone(),
            }
        })
        .collect())
}

/// Window-averaged loss extremes over the emitted sets and mean loss of the
/// quality sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRange {
    pub min: f64,
    pub max: f64,
    pub quality_mean: f64,
}

fn row_for<'a>(lm: &'a LossMatrix, record: &StepRecord) -> Result<&'a [f64]> {
    let row = lm.row(record.t).map_err(|_| {
        Error::InvalidArgument(format!(
            "step log time {} has no matching loss row (losses cover 1..={})",
            record.t,
            lm.len()
        ))
    })?;
    if let Some(&bad) = record.emitted_set.iter().find(|&&i| i >= row.len()) {
        return Err(Error::InvalidArgument(format!(
            "step log at t={} names model {} but the losses have {} models",
            record.t,
            bad + 1,
            row.len()
        )));
    }
    Ok(row)
}

/// Per-step `min`/`max` of `L[t, i]` over the set emitted at `t`, averaged
/// over a trailing `window`; the quality-set mean is computed at each quality
/// set's origin time and averaged the same way.
pub fn loss_ranges(
    records: &[StepRecord],
    lm: &LossMatrix,
    window: usize,
    quality: &[QualitySet],
) -> Result<Vec<LossRange>> {
    check_nonempty(records, window)?;
    if quality.len() != records.len() {
        return Err(Error::InvalidArgument(
            "quality sets do not align with the step log".into(),
        ));
    }
    let mut lows = Vec::with_capacity(records.len());
    let mut highs = Vec::with_capacity(records.len());
    for r in records {
        let row = row_for(lm, r)?;
        let vals = r.emitted_set.iter().map(|&i| row[i]);
        lows.push(vals.clone().fold(f64::INFINITY, f64::min));
        highs.push(vals.fold(f64::NEG_INFINITY, f64::max));
    }
    let qmeans = quality
        .iter()
        .map(|q| {
            let row = row_for(lm, &records[q.origin])?;
            Ok(q.set.iter().map(|&i| row[i]).sum::<f64>() / q.set.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (lows, highs, qmeans) = (
        moving_average(&lows, window),
        moving_average(&highs, window),
        moving_average(&qmeans, window),
    );
    Ok((0..records.len())
        .map(|k| LossRange {
            min: lows[k],
            max: highs[k],
            quality_mean: qmeans[k],
        })
        .collect())
}

/// One row of the report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub t: usize,
    pub miscoverage: Option<f64>,
    pub mean_cardinality: f64,
    pub min_cardinality: usize,
    pub quality_set: Vec<usize>,
    pub loss_min: Option<f64>,
    pub loss_max: Option<f64>,
    pub quality_mean_loss: Option<f64>,
}

/// Assembles the report. Loss columns are filled only when `losses` is given.
pub fn build_report(
    records: &[StepRecord],
    losses: Option<&LossMatrix>,
    window: usize,
    quality_window: usize,
) -> Result<Vec<ReportRow>> {
    let miss = moving_miscoverage(records, window)?;
    let card = moving_cardinality(records, window)?;
    let quality = quality_sets(records, quality_window)?;
    let ranges = losses
        .map(|lm| loss_ranges(records, lm, window, &quality))
        .transpose()?;
    Ok((0..records.len())
        .map(|k| {
            let range = ranges.as_ref().map(|r| r[k]);
            ReportRow {
                t: records[k].t,
                miscoverage: miss[k],
                mean_cardinality: card[k],
                min_cardinality: quality[k].cardinality,
                quality_set: quality[k].set.clone(),
                loss_min: range.map(|r| r.min),
                loss_max: range.map(|r| r.max),
                quality_mean_loss: range.map(|r| r.quality_mean),
            }
        })
        .collect())
}

pub const REPORT_HEADER: [&str; 8] = [
    "t",
    "miscoverage_w100",
    "mean_cardinality_w100",
    "min_cardinality_w20",
    "quality_set",
    "loss_min",
    "loss_max",
    "quality_mean_loss",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

pub fn write_report_to<W: Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(REPORT_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.t.to_string(),
            opt(r.miscoverage),
            r.mean_cardinality.to_string(),
            r.min_cardinality.to_string(),
            r.quality_set
                .iter()
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(";"),
            opt(r.loss_min),
            opt(r.loss_max),
            opt(r.quality_mean_loss),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the report CSV, refusing to replace an existing file unless `force`.
pub fn write_report(rows: &[ReportRow], path: impl AsRef<Path>, force: bool) -> Result<()> {
    let path = path.as_ref();
    let file = if force {
        std::fs::File::create(path)?
    } else {
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::WouldOverwrite {
                    path: path.to_path_buf(),
                },
                _ => Error::Io(e),
            })?
    };
    write_report_to(rows, std::io::BufWriter::new(file))
}

pub fn read_report<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(REPORT_HEADER) {
        return Err(Error::Header {
            line: 1,
            reason: format!("expected report columns {}", REPORT_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |k: usize| Error::NonNumeric {
            line,
            column: k + 1,
            field: rec[k].to_owned(),
        };
        let num = |k: usize| -> Result<Option<f64>> {
            match &rec[k] {
                "NA" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(k)),
            }
        };
        rows.push(ReportRow {
            t: rec[0].parse().map_err(|_| bad(0))?,
            miscoverage: num(1)?,
            mean_cardinality: num(2)?.ok_or_else(|| bad(2))?,
            min_cardinality: rec[3].parse().map_err(|_| bad(3))?,
            quality_set: rec[4]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<usize>().ok().filter(|&i| i > 0).map(|i| i - 1).ok_or_else(|| bad(4)))
                .collect::<Result<_>>()?,
            loss_min: num(5)?,
            loss_max: num(6)?,
            quality_mean_loss: num(7)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(t: usize, set: &[usize], covered: Option<bool>) -> StepRecord {
        StepRecord {
            t,
            alpha: 0.2,
            lambda: 1000.0,
            beta_prev: 0.5,
            emitted_set: set.to_vec(),
            best_next: None,
            covered,
            pvalues: Vec::new(),
        }
    }

    fn log_from(covered: &[bool]) -> Vec<StepRecord> {
        covered
            .iter()
            .enumerate()
            .map(|(k, &c)| rec(k + 1, &[0], Some(c)))
            .collect()
    }

    #[test]
    fn all_covered_is_zero() {
        let log = log_from(&[true; 150]);
        let miss = moving_miscoverage(&log, 100).unwrap();
        assert!(miss.iter().all(|m| *m == Some(0.0)));
    }

    #[test]
    fn alternating_is_half() {
        let covered: Vec<bool> = (0..300).map(|k| k % 2 == 0).collect();
        let miss = moving_miscoverage(&log_from(&covered), 100).unwrap();
        assert!(miss[99..].iter().all(|m| *m == Some(0.5)));
    }

    #[test]
    fn window_one_is_raw_indicator() {
        let covered = [true, false, false, true];
        let miss = moving_miscoverage(&log_from(&covered), 1).unwrap();
        assert_eq!(miss, [Some(0.0), Some(1.0), Some(1.0), Some(0.0)]);
    }

    #[test]
    fn unresolved_records_are_skipped() {
        let mut log = log_from(&[false, true]);
        log.push(rec(3, &[0], None));
        let miss = moving_miscoverage(&log, 2).unwrap();
        assert_eq!(miss, [Some(1.0), Some(0.5), Some(0.0)]);
        assert_eq!(moving_miscoverage(&[rec(1, &[0], None)], 5).unwrap(), [None]);
    }

    #[test]
    fn empty_log_and_zero_window_are_errors() {
        assert!(moving_miscoverage(&[], 10).is_err());
        assert!(quality_sets(&[], 10).is_err());
        assert!(moving_miscoverage(&log_from(&[true]), 0).is_err());
    }

    #[test]
    fn quality_set_examples() {
        let log = vec![
            rec(1, &[0, 1, 2, 3, 4], Some(true)),
            rec(2, &[1, 2, 4], Some(true)),
            rec(3, &[0, 1, 2, 3], Some(true)),
        ];
        let q = quality_sets(&log, 3).unwrap();
        assert_eq!(q[2].cardinality, 3);
        assert_eq!(q[2].origin, 1);
        assert_eq!(q[2].set, [1, 2, 4]);

        let flat: Vec<StepRecord> = (1..=30).map(|t| rec(t, &[t % 3], Some(true))).collect();
        let q = quality_sets(&flat, 20).unwrap();
        assert!(q.iter().all(|s| s.cardinality == 1));
        assert_eq!(q[25].origin, 6, "earliest tie in window 6..=25");

        let q = quality_sets(&log, 50).unwrap();
        assert_eq!(q.last().unwrap().cardinality, 3);
    }

    fn losses() -> LossMatrix {
        LossMatrix::from_rows_unlabeled(&[[1.0, 5.0, 3.0], [2.0, 0.5, 4.0], [7.0, 7.0, 7.0]]).unwrap()
    }

    #[test]
    fn singleton_and_full_ranges() {
        let lm = losses();
        let single = vec![rec(1, &[2], Some(true)), rec(2, &[1], Some(true))];
        let q = quality_sets(&single, 1).unwrap();
        let r = loss_ranges(&single, &lm, 1, &q).unwrap();
        assert_eq!((r[0].min, r[0].max), (3.0, 3.0));
        assert_eq!((r[1].min, r[1].max), (0.5, 0.5));

        let full = vec![rec(1, &[0, 1, 2], Some(true)), rec(2, &[0, 1, 2], None)];
        let q = quality_sets(&full, 1).unwrap();
        let r = loss_ranges(&full, &lm, 1, &q).unwrap();
        assert_eq!((r[0].min, r[0].max), (1.0, 5.0));
        assert_eq!((r[1].min, r[1].max), (0.5, 4.0));
        assert_eq!(r[0].quality_mean, 3.0);
    }

    #[test]
    fn constant_series_averages_to_constant() {
        let avg = moving_average(&[0.1; 50], 7);
        assert!(avg.iter().all(|v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let lm = losses();
        let log = vec![rec(4, &[0], Some(true))];
        let q = quality_sets(&log, 1).unwrap();
        assert!(loss_ranges(&log, &lm, 1, &q).is_err());
        let log = vec![rec(1, &[5], Some(true))];
        let q = quality_sets(&log, 1).unwrap();
        assert!(loss_ranges(&log, &lm, 1, &q).is_err());
    }

    #[test]
    fn report_file_roundtrip_and_overwrite_guard() {
        let lm = losses();
        let log = vec![
            rec(1, &[0, 2], Some(false)),
            rec(2, &[1], Some(true)),
            rec(3, &[0, 1], None),
        ];
        let rows = build_report(&log, Some(&lm), 100, 20).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report(&rows, &path, false).unwrap();
        let back = read_report(std::fs::File::open(&path).unwrap()).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.quality_set, b.quality_set);
            for (x, y) in [
                (a.miscoverage, b.miscoverage),
                (a.loss_min, b.loss_min),
                (a.loss_max, b.loss_max),
                (a.quality_mean_loss, b.quality_mean_loss),
                (Some(a.mean_cardinality), Some(b.mean_cardinality)),
            ] {
                match (x, y) {
                    (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-12),
                    (x, y) => assert_eq!(x, y),
                }
            }
        }
        assert!(matches!(
            write_report(&rows, &path, false),
            Err(Error::WouldOverwrite { .. })
        ));
        write_report(&rows, &path, true).unwrap();

        let empty = dir.path().join("empty.csv");
        write_report(&[], &empty, false).unwrap();
        assert_eq!(
            std::fs::read_to_string(&empty).unwrap(),
            format!("{}\n", REPORT_HEADER.join(","))
        );
    }

    proptest! {
        #[test]
        fn windowed_series_are_bounded(
            covered in prop::collection::vec(any::<bool>(), 1..300),
            cards in prop::collection::vec(1usize..6, 300),
            window in 1usize..60,
            qwindow in 1usize..30,
        ) {
            let log: Vec<StepRecord> = covered
                .iter()
                .enumerate()
                .map(|(k, &c)| rec(k + 1, &(0..cards[k]).collect::<Vec<_>>(), Some(c)))
                .collect();
            let miss: Vec<f64> = moving_miscoverage(&log, window).unwrap().into_iter().map(Option::unwrap).collect();
            prop_assert!(miss.iter().all(|m| (0.0..=1.0).contains(m)));
            for k in window..miss.len() {
                prop_assert!((miss[k] - miss[k - 1]).abs() <= 1.0 / window as f64 + 1e-12);
            }
            let q = quality_sets(&log, qwindow).unwrap();
            for (k, qs) in q.iter().enumerate() {
                prop_assert!(trailing(k, qwindow).contains(&qs.origin));
                for j in trailing(k, qwindow) {
                    prop_assert!(qs.cardinality <= log[j].cardinality());
                }
            }
        }
    }
}
