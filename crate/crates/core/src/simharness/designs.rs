//! Synthetic loss matrices with known comparative structure.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::loss_stream::LossMatrix;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    /// Every entry iid `U(0, 2)`: no model is ever systematically better.
    A,
    /// Columns 1 and 2 alternate 25-step stretches of `U(0.5, 1.5)` and
    /// `U(1, 2)`; the rest are `U(0, 2)`.
    B,
    /// Columns 1 and 2 drift in opposite directions around a turning point
    /// at `T / 2`; the rest are `U(0, 2)`.
    C,
}

impl Design {
    pub fn min_models(self) -> usize {
        match self {
            Design::A => 1,
            Design::B | Design::C => 2,
        }
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Design::A),
            "b" => Ok(Design::B),
            "c" => Ok(Design::C),
            other => Err(Error::InvalidArgument(format!(
                "unknown design {other:?} (expected a, b or c)"
            ))),
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::A => "a",
            Design::B => "b",
            Design::C => "c",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignSpec {
    pub design: Design,
    pub t_len: usize,
    pub m: usize,
    pub seed: u64,
}

/// Left endpoint of column 1's width-1 uniform in design (c).
pub fn rising_offset(t: usize, t_len: usize) -> f64 {
    let (t, big_t) = (t as f64, t_len as f64);
    if 2.0 * t <= big_t {
        2.0 * t / big_t
    } else {
        2.0 * (big_t - t) / big_t
    }
}

/// Left endpoint of column 2's width-1 uniform in design (c).
pub fn falling_offset(t: usize, t_len: usize) -> f64 {
    let (t, big_t) = (t as f64, t_len as f64);
    if 2.0 * t <= big_t {
        (big_t - 2.0 * t) / big_t
    } else {
        (2.0 * t - big_t) / big_t
    }
}

/// Support `[lo, hi)` of entry `(t, column)`, with `t` 1-based and `column` 0-based.
pub fn support(design: Design, column: usize, t: usize, t_len: usize) -> (f64, f64) {
    match (design, column) {
        (Design::B, 0 | 1) => {
            if (t - 1) % 50 < 25 {
                (0.5, 1.5)
            } else {
                (1.0, 2.0)
            }
        }
        (Design::C, 0) => {
            let mu = rising_offset(t, t_len);
            (mu, mu + 1.0)
        }
        (Design::C, 1) => {
            let mu = falling_offset(t, t_len);
            (mu, mu + 1.0)
        }
        _ => (0.0, 2.0),
    }
}

/// Generates the loss matrix. Column `j` draws from substream `j` of the seed.
pub fn gen_design(spec: &DesignSpec) -> Result<LossMatrix> {
    if spec.t_len == 0 {
        return Err(Error::InvalidArgument("T must be at least 1".into()));
    }
    if spec.m < spec.design.min_models() {
        return Err(Error::InvalidArgument(format!(
            "design {} needs at least {} models, got {}",
            spec.design,
            spec.design.min_models(),
            spec.m
        )));
    }
    let columns: Vec<Vec<f64>> = (0..spec.m)
        .map(|j| {
            let mut rng = substream(spec.seed, j as u64);
            (1..=spec.t_len)
                .map(|t| {
                    let (lo, hi) = support(spec.design, j, t, spec.t_len);
                    lo + (hi - lo) * rng.random::<f64>()
                })
                .collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..spec.t_len)
        .map(|k| columns.iter().map(|c| c[k]).collect())
        .collect();
    LossMatrix::from_rows_unlabeled(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(design: Design, t_len: usize, m: usize) -> DesignSpec {
        DesignSpec { design, t_len, m, seed: 17 }
    }

    fn column_mean(lm: &LossMatrix, j: usize, ts: std::ops::RangeInclusive<usize>) -> f64 {
        let n = ts.clone().count() as f64;
        ts.map(|t| lm.row(t).unwrap()[j]).sum::<f64>() / n
    }

    #[test]
    fn design_c_offsets() {
        assert_eq!(rising_offset(1000, 2000), 1.0);
        assert_eq!(falling_offset(1000, 2000), 0.0);
        assert_eq!(rising_offset(0, 2000), 0.0);
        assert_eq!(rising_offset(2000, 2000), 0.0);
        assert_eq!(falling_offset(0, 2000), 1.0);
        assert_eq!(falling_offset(2000, 2000), 1.0);
    }

    #[test]
    fn design_a_range_and_means() {
        let lm = gen_design(&spec(Design::A, 2000, 4)).unwrap();
        for t in 1..=2000 {
            assert!(lm.row(t).unwrap().iter().all(|v| (0.0..=2.0).contains(v)));
        }
        for j in 0..4 {
            let mean = column_mean(&lm, j, 1..=2000);
            assert!((mean - 1.0).abs() < 0.1, "column {j} mean {mean}");
        }
    }

    #[test]
    fn design_b_blocks() {
        let lm = gen_design(&spec(Design::B, 200, 3)).unwrap();
        for j in 0..2 {
            for t in 1..=200 {
                let v = lm.row(t).unwrap()[j];
                let (lo, hi) = if (t - 1) % 50 < 25 { (0.5, 1.5) } else { (1.0, 2.0) };
                assert!(v >= lo && v <= hi, "t={t} col={j} v={v}");
            }
        }
        for t in 1..=25 {
            assert!((0.5..=1.5).contains(&lm.row(t).unwrap()[0]));
        }
        for t in 26..=50 {
            assert!((1.0..=2.0).contains(&lm.row(t).unwrap()[0]));
        }
    }

    #[test]
    fn design_c_trajectory_is_monotone_in_bins() {
        let t_len = 2000;
        let lm = gen_design(&spec(Design::C, t_len, 3)).unwrap();
        let bins: Vec<(f64, f64)> = (0..20)
            .map(|b| {
                let ts = b * 100 + 1..=(b + 1) * 100;
                (column_mean(&lm, 0, ts.clone()), column_mean(&lm, 1, ts))
            })
            .collect();
        // Bin means move by 0.1 per bin in expectation.
        let noise = 3.0 / 1200f64.sqrt();
        for b in 0..9 {
            assert!(bins[b + 1].0 > bins[b].0 - noise);
            assert!(bins[b + 1].1 < bins[b].1 + noise);
        }
        for b in 10..19 {
            assert!(bins[b + 1].0 < bins[b].0 + noise);
            assert!(bins[b + 1].1 > bins[b].1 - noise);
        }
        assert!((bins[0].0 - 0.55).abs() < 0.1);
        assert!((bins[9].0 - 1.45).abs() < 0.1);
        assert!((bins[9].1 - 0.55).abs() < 0.1);
        for t in 1..=t_len {
            let row = lm.row(t).unwrap();
            let (lo, hi) = support(Design::C, 0, t, t_len);
            assert!(row[0] >= lo && row[0] <= hi);
            let (lo, hi) = support(Design::C, 1, t, t_len);
            assert!(row[1] >= lo && row[1] <= hi);
        }
    }

    #[test]
    fn columns_are_independent_substreams() {
        let small = gen_design(&spec(Design::A, 50, 3)).unwrap();
        let large = gen_design(&spec(Design::A, 50, 6)).unwrap();
        for t in 1..=50 {
            assert_eq!(small.row(t).unwrap(), &large.row(t).unwrap()[..3]);
        }
        let other = gen_design(&DesignSpec { seed: 18, ..spec(Design::A, 50, 3) }).unwrap();
        assert_ne!(small, other);
        assert_eq!(small, gen_design(&spec(Design::A, 50, 3)).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(gen_design(&spec(Design::C, 10, 1)).is_err());
        assert!(gen_design(&spec(Design::B, 10, 1)).is_err());
        assert!(gen_design(&spec(Design::A, 0, 3)).is_err());
        assert!(gen_design(&spec(Design::A, 10, 1)).is_ok());
        assert!("d".parse::<Design>().is_err());
        assert_eq!("C".parse::<Design>().unwrap(), Design::C);
    }
}
