//! Penalty-weight feedback and grid search for the nominal miscoverage rate.
//!
//! `lambda` integrates the miss/cover sequence. It is not clipped: a negative
//! `lambda` turns the miss penalty into a reward, which is what pulls coverage
//! back down toward the target after a run of covered steps.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// `lambda_prev + gamma * (1{missed} - alpha_bar)`.
pub fn lambda_update(lambda_prev: f64, missed: bool, gamma: f64, alpha_bar: f64) -> f64 {
    lambda_prev + gamma * (f64::from(u8::from(missed)) - alpha_bar)
}

/// Average cost of cutting the family at `alpha` over the beta history:
/// `|C(1 - alpha)| + lambda * (1 - alpha_bar) * #{beta < alpha} / tau`.
///
/// `cardinality[k]` is the set size at `grid[k]`; `tau` is `history.len()`.
pub fn alpha_cost(
    grid: &[f64],
    cardinality: &[usize],
    history: &[f64],
    lambda: f64,
    alpha_bar: f64,
    alpha: f64,
) -> Result<f64> {
    check_inputs(grid, cardinality, history)?;
    let k = grid
        .iter()
        .position(|&g| g == alpha)
        .ok_or_else(|| Error::InvalidArgument(format!("alpha {alpha} is not a grid value")))?;
    Ok(cost_at(cardinality[k], history, lambda, alpha_bar, alpha))
}

fn cost_at(card: usize, history: &[f64], lambda: f64, alpha_bar: f64, alpha: f64) -> f64 {
    let misses = history.iter().filter(|&&b| alpha > b).count();
    card as f64 + lambda * (1.0 - alpha_bar) * misses as f64 / history.len() as f64
}

/// Grid value with the lowest [`alpha_cost`]; the largest alpha wins ties.
pub fn alpha_optimize(
    grid: &[f64],
    cardinality: &[usize],
    history: &[f64],
    lambda: f64,
    alpha_bar: f64,
) -> Result<f64> {
    check_inputs(grid, cardinality, history)?;
    let mut best = (f64::INFINITY, grid[0]);
    for (&alpha, &card) in grid.iter().zip(cardinality) {
        let cost = cost_at(card, history, lambda, alpha_bar, alpha);
        if cost <= best.0 {
            best = (cost, alpha);
        }
    }
    Ok(best.1)
}

fn check_inputs(grid: &[f64], cardinality: &[usize], history: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if cardinality.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "{} cardinalities for {} grid points",
            cardinality.len(),
            grid.len()
        )));
    }
    if history.is_empty() {
        return Err(Error::InvalidArgument("empty beta history".into()));
    }
    Ok(())
}

/// `alpha_star` while `lambda < lambda_max`, otherwise 0.
pub fn gate_alpha(alpha_star: f64, lambda: f64, lambda_max: f64) -> f64 {
    if lambda < lambda_max {
        alpha_star
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorState {
    pub lambda: f64,
    /// Gated rate used for the most recent emitted set.
    pub alpha: f64,
    betas: VecDeque<f64>,
}

impl CalibratorState {
    /// State with a full buffer of `tau = betas.len()` realized betas, oldest first.
    pub fn new(lambda: f64, alpha: f64, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidArgument("beta buffer must be nonempty".into()));
        }
        Ok(Self {
            lambda,
            alpha,
            betas: betas.into(),
        })
    }

    pub fn tau(&self) -> usize {
        self.betas.len()
    }

    /// Buffer contents, oldest first.
    pub fn betas(&self) -> Vec<f64> {
        self.betas.iter().copied().collect()
    }

    /// Evicts the oldest beta and appends `beta`.
    pub fn push_beta(&mut self, beta: f64) {
        self.betas.pop_front();
        self.betas.push_back(beta);
    }

    pub(crate) fn history(&mut self) -> &[f64] {
        self.betas.make_contiguous()
    }
}
