//! Run configuration and its flat `key = value` file format.

use std::path::Path;

use crate::error::{Error, Result};

/// Every tunable of an MPS run. The step size `gamma` is always derived as
/// `c * lambda_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsConfig {
    /// Target long-run miscoverage rate.
    pub alpha_bar: f64,
    pub lambda_max: f64,
    /// Relative step size, `gamma = c * lambda_max`.
    pub c: f64,
    /// Number of realized betas approximating the difficulty distribution.
    pub tau: usize,
    /// Bootstrap replicates per MCS call.
    pub replicates: usize,
    /// Ascending candidate rates, starting at 0.
    pub grid: Vec<f64>,
    /// Length of the offline training prefix.
    pub train_n: usize,
    pub block_len: Option<usize>,
    pub seed: u64,
}

impl Default for MpsConfig {
    fn default() -> Self {
        Self {
            alpha_bar: 0.2,
            lambda_max: 2000.0,
            c: 0.2,
            tau: 100,
            replicates: 100,
            grid: grid_from_step(0.05).expect("0.05 divides 1"),
            train_n: 500,
            block_len: None,
            seed: 0,
        }
    }
}

impl MpsConfig {
    pub fn gamma(&self) -> f64 {
        self.c * self.lambda_max
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha_bar > 0.0 && self.alpha_bar < 1.0) {
            return bad(format!("alpha_bar = {} must lie in (0, 1)", self.alpha_bar));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return bad(format!("lambda_max = {} must be positive", self.lambda_max));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return bad(format!("c = {} must lie in (0, 1)", self.c));
        }
        if self.tau == 0 {
            return bad("tau must be at least 1".into());
        }
        if self.replicates == 0 {
            return bad("the bootstrap replicate count B must be at least 1".into());
        }
        if self.train_n < 2 {
            return bad(format!("train_n = {} must be at least 2", self.train_n));
        }
        if self.train_n < self.tau {
            return bad(format!(
                "train_n = {} must be at least tau = {} (lower tau or lengthen the training prefix)",
                self.train_n, self.tau
            ));
        }
        if self.block_len == Some(0) {
            return bad("block_len must be positive".into());
        }
        validate_grid(&self.grid).map_err(Error::InvalidConfig)
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", k + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", k + 1)))?;
        }
        Ok(())
    }

    pub fn apply_kv_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.apply_kv(&std::fs::read_to_string(path)?)
    }

    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("{key}: cannot parse {value:?}"))
        }
        match key {
            "alpha_bar" => self.alpha_bar = num(key, value)?,
            "lambda_max" => self.lambda_max = num(key, value)?,
            "c" => self.c = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "B" | "replicates" => self.replicates = num(key, value)?,
            "grid_step" => self.grid = grid_from_step(num(key, value)?)?,
            "train_n" => self.train_n = num(key, value)?,
            "block_len" => {
                self.block_len = match value {
                    "" | "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "seed" => self.seed = num(key, value)?,
            "gamma" => return Err("gamma is derived as c * lambda_max; set c instead".into()),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }
}

/// Grid `{k / K : k = 0..K-1}` with `K = 1 / step`. `step` must divide 1.
pub fn grid_from_step(step: f64) -> std::result::Result<Vec<f64>, String> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(format!("grid step {step} must lie in (0, 1]"));
    }
    let count = (1.0 / step).round();
    if ((count * step) - 1.0).abs() > 1e-9 || count > 1e6 {
        return Err(format!("grid step {step} must divide 1 evenly"));
    }
    let count = count as usize;
    Ok((0..count).map(|k| k as f64 / count as f64).collect())
}

pub fn validate_grid(grid: &[f64]) -> std::result::Result<(), String> {
    if grid.first() != Some(&0.0) {
        return Err("grid must start at 0".into());
    }
    if grid.iter().any(|g| !(0.0..1.0).contains(g)) {
        return Err("grid values must lie in [0, 1)".into());
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err("grid must be strictly ascending".into());
    }
    Ok(())
}
