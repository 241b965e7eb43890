//! Model confidence sets by bootstrap equivalence testing and sequential
//! elimination.
//!
//! A single elimination pass assigns every model an MCS p-value. Thresholding
//! those p-values at `beta` gives the set `C(1 - beta)` for every `beta` at
//! once, so the whole nested family is represented by one vector.
//!
//! The test statistic is the max-deviation-from-set-average t-statistic. The
//! null distribution comes from a moving-block bootstrap whose index
//! sequences are drawn once per call and reused in every elimination round.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::loss_stream::{argmin, LossMatrix, LossView};
use crate::rng::{derive_seed, substream};

/// Lower bound applied to bootstrap variance estimates.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Moving-block bootstrap resampling plan: `replicates` index sequences of
/// length `time_len`, stored 0-based and row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapPlan {
    time_len: usize,
    block_len: usize,
    replicates: usize,
    seed: u64,
    indices: Vec<u32>,
}

impl BootstrapPlan {
    pub fn time_len(&self) -> usize {
        self.time_len
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Replicate `r` as 0-based row offsets.
    pub fn sequence(&self, r: usize) -> &[u32] {
        &self.indices[r * self.time_len..(r + 1) * self.time_len]
    }

    /// Replicate `r` as 1-based time indices.
    pub fn time_indices(&self, r: usize) -> Vec<usize> {
        self.sequence(r).iter().map(|&k| k as usize + 1).collect()
    }

    fn sequences(&self) -> std::slice::ChunksExact<'_, u32> {
        self.indices.chunks_exact(self.time_len)
    }
}

/// Draws a moving-block bootstrap plan. Replicate `r` uses substream `r` of
/// `seed`, so every sequence is independent of the others and of the losses.
pub fn block_bootstrap_indices(
    time_len: usize,
    block_len: usize,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapPlan> {
    if time_len < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 periods, got {time_len}"
        )));
    }
    if block_len == 0 || block_len > time_len {
        return Err(Error::InvalidArgument(format!(
            "block length {block_len} must lie in 1..={time_len}"
        )));
    }
    if replicates == 0 {
        return Err(Error::InvalidArgument(
            "bootstrap replicate count must be positive".into(),
        ));
    }
    if time_len > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "series of length {time_len} is too long to resample"
        )));
    }
    let last_start = time_len - block_len;
    let mut indices = vec![0u32; replicates * time_len];
    indices
        .par_chunks_mut(time_len)
        .enumerate()
        .for_each(|(r, seq)| {
            let mut rng = substream(seed, r as u64);
            let mut filled = 0;
            while filled < time_len {
                let start = rng.random_range(0..=last_start);
                let take = block_len.min(time_len - filled);
                for (k, slot) in seq[filled..filled + take].iter_mut().enumerate() {
                    *slot = (start + k) as u32;
                }
                filled += take;
            }
        });
    Ok(BootstrapPlan {
        time_len,
        block_len,
        replicates,
        seed,
        indices,
    })
}

/// Default block length `max(2, round(t^(1/3)))`, capped at `t`.
pub fn default_block_len(time_len: usize) -> usize {
    let rate = (time_len as f64).cbrt().round() as usize;
    rate.max(2).min(time_len.max(1))
}

/// Nested family of model confidence sets at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSetFamily {
    pvalues: Vec<f64>,
    time_len: usize,
}

impl ModelSetFamily {
    /// Wraps externally supplied p-values, checking the family invariants.
    pub fn from_pvalues(pvalues: Vec<f64>, time_len: usize) -> Result<Self> {
        if pvalues.is_empty() {
            return Err(Error::InvalidArgument("no models".into()));
        }
        if pvalues.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(format!(
                "p-values must lie in [0, 1]: {pvalues:?}"
            )));
        }
        if !pvalues.contains(&1.0) {
            return Err(Error::InvalidArgument(
                "at least one model must have p-value 1".into(),
            ));
        }
        Ok(Self { pvalues, time_len })
    }

    pub fn pvalues(&self) -> &[f64] {
        &self.pvalues
    }

    pub fn models(&self) -> usize {
        self.pvalues.len()
    }

    pub fn time_len(&self) -> usize {
        self.time_len
    }

    /// `C(1 - beta)`: models whose p-value is at least `beta`, ascending.
    pub fn model_set(&self, beta: f64) -> Result<Vec<usize>> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidArgument(format!(
                "beta {beta} must lie in [0, 1]"
            )));
        }
        Ok(self.members(beta))
    }

    pub(crate) fn members(&self, beta: f64) -> Vec<usize> {
        self.pvalues
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= beta)
            .map(|(i, _)| i)
            .collect()
    }

    /// `|C(1 - beta)|`.
    pub fn cardinality(&self, beta: f64) -> usize {
        self.pvalues.iter().filter(|&&p| p >= beta).count()
    }

    /// Largest grid value `beta` whose set still contains `model`.
    pub fn beta_realized(&self, model: usize, grid: &[f64]) -> Result<f64> {
        let p = *self.pvalues.get(model).ok_or(Error::OutOfRange {
            what: "model index",
            index: model,
            min: 0,
            max: self.pvalues.len().saturating_sub(1),
        })?;
        if !grid.contains(&0.0) {
            return Err(Error::InvalidArgument("grid must contain 0".into()));
        }
        Ok(grid
            .iter()
            .copied()
            .filter(|&b| b <= p)
            .fold(0.0, f64::max))
    }
}

/// Runs sequential elimination on `losses` with the given bootstrap plan.
pub fn mcs_pvalues(losses: LossView<'_>, plan: &BootstrapPlan) -> Result<ModelSetFamily> {
    let t = losses.len();
    let m = losses.models();
    if plan.time_len() != t {
        return Err(Error::InvalidArgument(format!(
            "bootstrap plan covers {} periods but the losses have {t}",
            plan.time_len()
        )));
    }
    if t < 2 {
        return Err(Error::InvalidArgument(format!(
            "MCS needs at least 2 periods, got {t}"
        )));
    }
    if m == 1 {
        return Ok(ModelSetFamily {
            pvalues: vec![1.0],
            time_len: t,
        });
    }

    let scale = 1.0 / t as f64;
    let mut means = vec![0.0; m];
    for row in losses.rows() {
        for (acc, v) in means.iter_mut().zip(row) {
            *acc += v;
        }
    }
    means.iter_mut().for_each(|v| *v *= scale);

    let b_count = plan.replicates();
    let mut boot_means = vec![0.0; b_count * m];
    boot_means
        .par_chunks_mut(m)
        .zip(plan.sequences().collect::<Vec<_>>())
        .for_each(|(acc, seq)| {
            for &k in seq {
                for (a, v) in acc.iter_mut().zip(losses.row_at(k as usize)) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|v| *v *= scale);
        });

    let pvalues = eliminate(&means, &boot_means, m);
    Ok(ModelSetFamily {
        pvalues,
        time_len: t,
    })
}

/// Elimination rounds over precomputed sample and bootstrap column means.
fn eliminate(means: &[f64], boot_means: &[f64], m: usize) -> Vec<f64> {
    let b_count = boot_means.len() / m;
    let mut pvalues = vec![1.0; m];
    let mut alive: Vec<usize> = (0..m).collect();
    let mut running = 0.0f64;
    let mut scratch = Vec::with_capacity(m);
    let mut dev = vec![0.0; b_count * m];

    while alive.len() > 1 {
        let k = alive.len();
        let avg = order_free_mean(alive.iter().map(|&j| means[j]), &mut scratch);
        let dbar: Vec<f64> = alive.iter().map(|&i| means[i] - avg).collect();

        // Recentered bootstrap deviations, one row of k per replicate.
        for (b, row) in boot_means.chunks_exact(m).enumerate() {
            let boot_avg = order_free_mean(alive.iter().map(|&j| row[j]), &mut scratch);
            for (pos, &i) in alive.iter().enumerate() {
                dev[b * m + pos] = (row[i] - boot_avg) - dbar[pos];
            }
        }

        let sd: Vec<f64> = (0..k)
            .map(|pos| {
                let ss: f64 = (0..b_count).map(|b| dev[b * m + pos].powi(2)).sum();
                (ss / b_count as f64).max(VARIANCE_FLOOR).sqrt()
            })
            .collect();

        let mut worst = 0;
        let mut t_obs = f64::NEG_INFINITY;
        for pos in 0..k {
            let stat = dbar[pos] / sd[pos];
            if stat > t_obs {
                t_obs = stat;
                worst = pos;
            }
        }

        let exceed = (0..b_count)
            .filter(|&b| {
                let t_star = (0..k)
                    .map(|pos| dev[b * m + pos] / sd[pos])
                    .fold(f64::NEG_INFINITY, f64::max);
                t_star > t_obs
            })
            .count();
        let step_p = exceed as f64 / b_count as f64;
        running = running.max(step_p);
        pvalues[alive[worst]] = running;
        alive.remove(worst);
    }
    pvalues
}

/// Mean whose rounding does not depend on the order of the inputs.
fn order_free_mean(values: impl Iterator<Item = f64>, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(values);
    scratch.sort_by(f64::total_cmp);
    scratch.iter().sum::<f64>() / scratch.len() as f64
}

/// Bootstrap settings shared by every time step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McsSettings {
    pub replicates: usize,
    pub block_len: Option<usize>,
    pub seed: u64,
}

/// Family built on rows `1..=t` of `losses`, with a bootstrap plan seeded by
/// `(settings.seed, t)`.
///
/// With a single period there is nothing to resample: the row argmin gets
/// p-value 1 and every other model 0, which is what elimination yields when
/// each replicate is the observed series.
pub fn family_at(losses: &LossMatrix, t: usize, settings: &McsSettings) -> Result<ModelSetFamily> {
    let view = losses.prefix(t)?;
    if t == 0 {
        return Err(Error::InvalidArgument("MCS needs at least one period".into()));
    }
    if t == 1 {
        let mut pvalues = vec![0.0; losses.models()];
        pvalues[argmin(view.row_at(0))] = 1.0;
        return Ok(ModelSetFamily { pvalues, time_len: 1 });
    }
    let block_len = settings
        .block_len
        .map_or_else(|| default_block_len(t), |b| b.clamp(1, t));
    let plan = block_bootstrap_indices(
        t,
        block_len,
        settings.replicates,
        derive_seed(settings.seed, t as u64),
    )?;
    mcs_pvalues(view, &plan)
}
