//! Regime-switching ARMA data, least-squares AR/MA fitting, and the
//! one-step forecast-error loss matrix built from them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::loss_stream::LossMatrix;
use crate::rng::substream;

/// Rows before the first refit; their losses come from in-sample
/// predictions of the fit on these rows.
pub const WARM_UP: usize = 50;

/// Candidate orders: AR(1..=5) and MA(1..=5).
pub const MAX_ORDER: usize = 5;

/// `Y_t = ar Y_{t-1} + e_t + ma 1{t <= switch_point} e_{t-1}`, zero start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmaSpec {
    pub t_len: usize,
    pub switch_point: usize,
    pub ar_coef: f64,
    pub ma_coef: f64,
    pub seed: u64,
}

impl Default for ArmaSpec {
    fn default() -> Self {
        Self {
            t_len: 2000,
            switch_point: 1000,
            ar_coef: 0.3,
            ma_coef: 0.3,
            seed: 0,
        }
    }
}

impl ArmaSpec {
    fn validate(&self) -> Result<()> {
        if self.switch_point < 1 || self.switch_point > self.t_len {
            return Err(Error::InvalidArgument(format!(
                "switch point {} must lie in 1..={}",
                self.switch_point, self.t_len
            )));
        }
        Ok(())
    }
}

/// The innovations `e_1..e_T` driving [`gen_arma_series`].
pub fn innovations(spec: &ArmaSpec) -> Vec<f64> {
    let mut rng = substream(spec.seed, 0);
    (0..spec.t_len)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

/// `Y_1..Y_T` (element `k` is `Y_{k+1}`).
pub fn gen_arma_series(spec: &ArmaSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let eps = innovations(spec);
    let mut y = Vec::with_capacity(spec.t_len);
    let (mut y_prev, mut e_prev) = (0.0, 0.0);
    for (k, &e) in eps.iter().enumerate() {
        let t = k + 1;
        let ma = if t <= spec.switch_point { spec.ma_coef } else { 0.0 };
        let value = spec.ar_coef * y_prev + e + ma * e_prev;
        y.push(value);
        y_prev = value;
        e_prev = e;
    }
    Ok(y)
}

/// Running `X'X` and `X'y` for a least-squares fit.
#[derive(Debug, Clone)]
struct NormalEquations {
    k: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
}

impl NormalEquations {
    fn new(k: usize) -> Self {
        Self {
            k,
            xtx: vec![0.0; k * k],
            xty: vec![0.0; k],
        }
    }

    fn add(&mut self, x: &[f64], y: f64) {
        for i in 0..self.k {
            self.xty[i] += x[i] * y;
            for j in 0..self.k {
                self.xtx[i * self.k + j] += x[i] * x[j];
            }
        }
    }

    /// Solves the system, rejecting (near-)collinear designs.
    fn solve(&self) -> Result<Vec<f64>> {
        let k = self.k;
        let a = DMatrix::from_row_slice(k, k, &self.xtx);
        let diag: Vec<f64> = (0..k).map(|i| a[(i, i)]).collect();
        if let Some(i) = diag.iter().position(|&d| d.is_nan() || d <= 0.0) {
            return Err(Error::Singular(format!("regressor {i} is identically zero")));
        }
        let scale = DVector::from_iterator(k, diag.iter().map(|d| 1.0 / d.sqrt()));
        let scaled = DMatrix::from_fn(k, k, |i, j| a[(i, j)] * scale[i] * scale[j]);
        let min_eig = SymmetricEigen::new(scaled.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig.is_nan() || min_eig <= 1e-10 {
            return Err(Error::Singular(format!(
                "regressors are collinear (smallest scaled eigenvalue {min_eig:e})"
            )));
        }
        let rhs = DVector::from_iterator(k, (0..k).map(|i| self.xty[i] * scale[i]));
        let sol = scaled
            .cholesky()
            .ok_or_else(|| Error::Singular("normal matrix is not positive definite".into()))?
            .solve(&rhs);
        Ok((0..k).map(|i| sol[i] * scale[i]).collect())
    }
}

/// AR(p) regression of `Y_t` on `(1, Y_{t-1}, ..., Y_{t-p})`, grown one
/// observation at a time.
#[derive(Debug, Clone)]
struct ArAccumulator {
    p: usize,
    upto: usize,
    ne: NormalEquations,
    x: Vec<f64>,
}

impl ArAccumulator {
    fn new(p: usize) -> Self {
        Self {
            p,
            upto: p,
            ne: NormalEquations::new(p + 1),
            x: vec![0.0; p + 1],
        }
    }

    /// Adds rows `t = upto+1..=new_upto` (1-based).
    fn extend_to(&mut self, y: &[f64], new_upto: usize) {
        while self.upto < new_upto {
            let t = self.upto + 1;
            lag_vector(&mut self.x, y, t, self.p);
            self.ne.add(&self.x, y[t - 1]);
            self.upto = t;
        }
    }
}

/// Fills `x` with `(1, Y_{t-1}, ..., Y_{t-p})`, zero before the sample.
fn lag_vector(x: &mut [f64], y: &[f64], t: usize, p: usize) {
    x[0] = 1.0;
    for k in 1..=p {
        x[k] = if t > k { y[t - k - 1] } else { 0.0 };
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub intercept: f64,
    /// `phi_1..phi_p`.
    pub coefs: Vec<f64>,
    /// Forecast of `Y_{upto+1}`.
    pub forecast: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaFit {
    pub intercept: f64,
    /// `theta_1..theta_q`.
    pub coefs: Vec<f64>,
    pub forecast: f64,
}

/// Hannan-Rissanen ARMA(p, q) estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaFit {
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub forecast: f64,
}

fn check_window(series: &[f64], upto: usize, min_exclusive: usize, what: &str) -> Result<()> {
    if upto > series.len() {
        return Err(Error::OutOfRange {
            what: "fit window end",
            index: upto,
            min: min_exclusive + 1,
            max: series.len(),
        });
    }
    if upto <= min_exclusive {
        return Err(Error::InvalidArgument(format!(
            "{what} needs more than {min_exclusive} observations, got {upto}"
        )));
    }
    Ok(())
}

fn ar_from_coefs(beta: Vec<f64>, y: &[f64], upto: usize) -> ArFit {
    let p = beta.len() - 1;
    let mut x = vec![0.0; p + 1];
    lag_vector(&mut x, y, upto + 1, p);
    ArFit {
        intercept: beta[0],
        forecast: dot(&beta, &x),
        coefs: beta[1..].to_vec(),
    }
}

/// OLS AR(p) fit on `Y_1..Y_upto` and the forecast of `Y_{upto+1}`.
pub fn fit_ar(series: &[f64], p: usize, upto: usize) -> Result<ArFit> {
    if p == 0 {
        return Err(Error::InvalidArgument("AR order must be positive".into()));
    }
    check_window(series, upto, p + 10, "AR fit")?;
    let mut acc = ArAccumulator::new(p);
    acc.extend_to(series, upto);
    Ok(ar_from_coefs(acc.ne.solve()?, series, upto))
}

/// Order of the long autoregression used in the first Hannan-Rissanen stage.
pub fn long_ar_order(q: usize) -> usize {
    10.max(2 * q)
}

/// Residuals of a fitted AR on `1..=upto`; zero where lags are unavailable.
fn ar_residuals(series: &[f64], beta: &[f64], upto: usize) -> Vec<f64> {
    let h = beta.len() - 1;
    let mut x = vec![0.0; h + 1];
    (1..=upto)
        .map(|t| {
            if t <= h {
                0.0
            } else {
                lag_vector(&mut x, series, t, h);
                series[t - 1] - dot(beta, &x)
            }
        })
        .collect()
}

/// Second-stage regressors `(1, Y_{t-1..t-p}, e_{t-1..t-q})` at time `t`.
fn arma_regressors(x: &mut [f64], y: &[f64], resid: &[f64], t: usize, p: usize, q: usize) {
    x[0] = 1.0;
    for k in 1..=p {
        x[k] = if t > k { y[t - k - 1] } else { 0.0 };
    }
    for k in 1..=q {
        x[p + k] = if t > k { resid[t - k - 1] } else { 0.0 };
    }
}

fn second_stage(
    series: &[f64],
    resid: &[f64],
    p: usize,
    q: usize,
    first: usize,
    upto: usize,
) -> Result<Vec<f64>> {
    let mut ne = NormalEquations::new(1 + p + q);
    let mut x = vec![0.0; 1 + p + q];
    for t in first..=upto {
        arma_regressors(&mut x, series, resid, t, p, q);
        ne.add(&x, series[t - 1]);
    }
    ne.solve()
}

fn arma_from_coefs(beta: &[f64], series: &[f64], resid: &[f64], p: usize, q: usize, upto: usize) -> ArmaFit {
    let mut x = vec![0.0; 1 + p + q];
    arma_regressors(&mut x, series, resid, upto + 1, p, q);
    ArmaFit {
        intercept: beta[0],
        ar: beta[1..=p].to_vec(),
        ma: beta[p + 1..].to_vec(),
        forecast: dot(beta, &x),
    }
}

/// Hannan-Rissanen ARMA(p, q): a long AR of order `max(10, 2q)` supplies
/// residuals, then `Y_t` is regressed by OLS on an intercept, `p` lags of
/// `Y` and `q` lags of the residuals.
pub fn hannan_rissanen(series: &[f64], p: usize, q: usize, upto: usize) -> Result<ArmaFit> {
    if q == 0 {
        return Err(Error::InvalidArgument("MA order must be positive".into()));
    }
    let h = long_ar_order(q);
    check_window(series, upto, 4 * q + 20 + p, "Hannan-Rissanen fit")?;
    check_window(series, upto, h + p.max(q) + 1 + p + q, "Hannan-Rissanen fit")?;
    let mut long = ArAccumulator::new(h);
    long.extend_to(series, upto);
    let resid = ar_residuals(series, &long.ne.solve()?, upto);
    let beta = second_stage(series, &resid, p, q, h + p.max(q) + 1, upto)?;
    Ok(arma_from_coefs(&beta, series, &resid, p, q, upto))
}

/// MA(q) fit on `Y_1..Y_upto` by Hannan-Rissanen and the forecast of `Y_{upto+1}`.
pub fn fit_ma(series: &[f64], q: usize, upto: usize) -> Result<MaFit> {
    let fit = hannan_rissanen(series, 0, q, upto)?;
    Ok(MaFit {
        intercept: fit.intercept,
        coefs: fit.ma,
        forecast: fit.forecast,
    })
}

/// Candidate labels in column order.
pub fn candidate_labels() -> Vec<String> {
    (1..=MAX_ORDER)
        .map(|p| format!("AR{p}"))
        .chain((1..=MAX_ORDER).map(|q| format!("MA{q}")))
        .collect()
}

/// Squared one-step forecast errors of AR(1..=5) and MA(1..=5), refitted on
/// the expanding window `1..t-1` for every `t > WARM_UP`.
pub fn arma_experiment_losses(spec: &ArmaSpec) -> Result<LossMatrix> {
    let y = gen_arma_series(spec)?;
    forecast_losses(&y)
}

/// The loss matrix of [`arma_experiment_losses`] for a given series.
pub fn forecast_losses(y: &[f64]) -> Result<LossMatrix> {
    let t_len = y.len();
    if t_len <= WARM_UP {
        return Err(Error::InvalidArgument(format!(
            "series of length {t_len} is shorter than the {WARM_UP}-step warm-up"
        )));
    }
    let h = long_ar_order(MAX_ORDER);
    let mut ar: Vec<ArAccumulator> = (1..=MAX_ORDER).map(ArAccumulator::new).collect();
    let mut long = ArAccumulator::new(h);
    let mut rows = vec![vec![0.0; 2 * MAX_ORDER]; t_len];

    for t in WARM_UP + 1..=t_len {
        let upto = t - 1;
        let target = y[t - 1];
        for (col, acc) in ar.iter_mut().enumerate() {
            acc.extend_to(y, upto);
            let beta = acc.ne.solve()?;
            if t == WARM_UP + 1 {
                let mut x = vec![0.0; beta.len()];
                for s in 1..=WARM_UP {
                    lag_vector(&mut x, y, s, acc.p);
                    rows[s - 1][col] = (y[s - 1] - dot(&beta, &x)).powi(2);
                }
            }
            rows[t - 1][col] = (target - ar_from_coefs(beta, y, upto).forecast).powi(2);
        }

        long.extend_to(y, upto);
        let resid = ar_residuals(y, &long.ne.solve()?, upto);
        for q in 1..=MAX_ORDER {
            let col = MAX_ORDER + q - 1;
            let beta = second_stage(y, &resid, 0, q, h + q + 1, upto)?;
            if t == WARM_UP + 1 {
                let mut x = vec![0.0; q + 1];
                for s in 1..=WARM_UP {
                    arma_regressors(&mut x, y, &resid, s, 0, q);
                    rows[s - 1][col] = (y[s - 1] - dot(&beta, &x)).powi(2);
                }
            }
            let forecast = arma_from_coefs(&beta, y, &resid, 0, q, upto).forecast;
            rows[t - 1][col] = (target - forecast).powi(2);
        }
    }
    LossMatrix::from_rows(candidate_labels(), &rows)
}
