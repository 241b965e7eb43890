//! The online model prediction set loop.
//!
//! [`Engine::offline_init`] fills the beta buffer from a training prefix;
//! [`Engine::online_step`] then, for each new row, scores the previous set,
//! rebuilds the model confidence family on the full history, updates the
//! penalty weight and emits the calibrated set for the next period.

use std::io::{Read, Write};

use crate::calibrator::{alpha_optimize, gate_alpha, lambda_update, CalibratorState};
use crate::config::MpsConfig;
use crate::error::{Error, Result};
use crate::loss_stream::LossMatrix;
use crate::mcs::{family_at, McsSettings, ModelSetFamily};

/// Output of one online step at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// Gated nominal miscoverage rate used to cut the family.
    pub alpha: f64,
    pub lambda: f64,
    /// Realized beta of the previous step, scored against the previous family.
    pub beta_prev: f64,
    /// Emitted set, ascending 0-based model indices.
    pub emitted_set: Vec<usize>,
    /// Best model of period `t + 1`, once observed.
    pub best_next: Option<usize>,
    /// Whether `best_next` fell inside `emitted_set`.
    pub covered: Option<bool>,
    /// MCS p-values of the family at `t`. Empty when read back from CSV.
    pub pvalues: Vec<f64>,
}

impl StepRecord {
    pub fn cardinality(&self) -> usize {
        self.emitted_set.len()
    }

    pub fn missed(&self) -> Option<bool> {
        self.covered.map(|c| !c)
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: MpsConfig,
    settings: McsSettings,
    losses: LossMatrix,
    calibrator: CalibratorState,
    family: ModelSetFamily,
    lambda_init: f64,
    initial_covered: Option<bool>,
    log: Vec<StepRecord>,
}

impl Engine {
    pub fn offline_init(train: LossMatrix, config: MpsConfig) -> Result<Self> {
        config.validate()?;
        let n = train.len();
        if n < config.train_n {
            return Err(Error::InvalidConfig(format!(
                "training data has {n} rows but train_n = {}",
                config.train_n
            )));
        }
        let train = if n > config.train_n {
            train.truncated(config.train_n)?
        } else {
            train
        };
        let n = config.train_n;
        let tau = config.tau;
        let settings = McsSettings {
            replicates: config.replicates,
            block_len: config.block_len,
            seed: config.seed,
        };

        // Realized betas for t - 1 in {n - tau + 1, ..., n - 1}.
        let mut betas = Vec::with_capacity(tau);
        for t in (n + 2 - tau)..=n {
            let best = train.best_model(t)?;
            let family = family_at(&train, t - 1, &settings)?;
            betas.push(family.beta_realized(best, &config.grid)?);
        }
        // One slot short of tau: duplicate the earliest value. The first
        // online step evicts it before the buffer is ever read.
        let pad = betas.first().copied().unwrap_or(0.0);
        betas.insert(0, pad);

        let lambda_init = config.lambda_max / 2.0;
        let calibrator = CalibratorState::new(lambda_init, config.alpha_bar, betas)?;
        let family = family_at(&train, n, &settings)?;
        Ok(Self {
            config,
            settings,
            losses: train,
            calibrator,
            family,
            lambda_init,
            initial_covered: None,
            log: Vec::new(),
        })
    }

    /// Observes one new row of losses and emits the calibrated set for the
    /// next period. The state is untouched if `row` is rejected.
    pub fn online_step(&mut self, row: &[f64]) -> Result<StepRecord> {
        self.losses.push_row(row)?;
        let t = self.losses.len();
        let cfg = &self.config;

        let best = self.losses.best_model(t)?;
        let beta_prev = self.family.beta_realized(best, &cfg.grid)?;
        let missed = self.calibrator.alpha > beta_prev;
        match self.log.last_mut() {
            Some(prev) => {
                prev.best_next = Some(best);
                prev.covered = Some(!missed);
            }
            None => self.initial_covered = Some(!missed),
        }

        self.family = family_at(&self.losses, t, &self.settings)?;
        let lambda = lambda_update(self.calibrator.lambda, missed, cfg.gamma(), cfg.alpha_bar);
        self.calibrator.lambda = lambda;
        self.calibrator.push_beta(beta_prev);

        let cardinality: Vec<usize> = cfg.grid.iter().map(|&a| self.family.cardinality(a)).collect();
        let alpha_star = alpha_optimize(
            &cfg.grid,
            &cardinality,
            self.calibrator.history(),
            lambda,
            cfg.alpha_bar,
        )?;
        let alpha = gate_alpha(alpha_star, lambda, cfg.lambda_max);
        self.calibrator.alpha = alpha;

        let record = StepRecord {
            t,
            alpha,
            lambda,
            beta_prev,
            emitted_set: self.family.members(alpha),
            best_next: None,
            covered: None,
            pvalues: self.family.pvalues().to_vec(),
        };
        if t.is_multiple_of(100) {
            log::info!(
                "t={t} alpha={alpha} lambda={lambda} |C|={}",
                record.cardinality()
            );
        }
        self.log.push(record.clone());
        Ok(record)
    }

    /// Offline initialization on rows `1..=train_n` followed by one online
    /// step per remaining row.
    pub fn run(losses: &LossMatrix, config: MpsConfig) -> Result<Vec<StepRecord>> {
        Ok(Self::run_engine(losses, config)?.log)
    }

    /// Like [`Engine::run`] but returns the final engine state.
    pub fn run_engine(losses: &LossMatrix, config: MpsConfig) -> Result<Self> {
        if losses.len() <= config.train_n {
            return Err(Error::InvalidConfig(format!(
                "need more than train_n = {} rows, found {}",
                config.train_n,
                losses.len()
            )));
        }
        let n = config.train_n;
        let mut engine = Self::offline_init(losses.truncated(n)?, config)?;
        for t in n + 1..=losses.len() {
            engine.online_step(losses.row(t)?)?;
        }
        Ok(engine)
    }

    pub fn log(&self) -> &[StepRecord] {
        &self.log
    }

    pub fn into_log(self) -> Vec<StepRecord> {
        self.log
    }

    pub fn config(&self) -> &MpsConfig {
        &self.config
    }

    pub fn losses(&self) -> &LossMatrix {
        &self.losses
    }

    pub fn calibrator(&self) -> &CalibratorState {
        &self.calibrator
    }

    pub fn family(&self) -> &ModelSetFamily {
        &self.family
    }

    pub fn lambda(&self) -> f64 {
        self.calibrator.lambda
    }

    /// Penalty weight set at initialization, `lambda_max / 2`.
    pub fn lambda_init(&self) -> f64 {
        self.lambda_init
    }

    /// Coverage of the initial set cut at `alpha_bar`, once the first online
    /// row has been seen. It feeds the first lambda update but has no record.
    pub fn initial_covered(&self) -> Option<bool> {
        self.initial_covered
    }
}

const STEP_LOG_HEADER: [&str; 8] = [
    "t",
    "alpha",
    "lambda",
    "beta_prev",
    "cardinality",
    "set",
    "best_next",
    "covered",
];

/// Writes the step log CSV. Model indices are written 1-based.
pub fn write_step_log<W: Write>(records: &[StepRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(STEP_LOG_HEADER)?;
    for r in records {
        let set = r
            .emitted_set
            .iter()
            .map(|i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(";");
        wtr.write_record([
            r.t.to_string(),
            r.alpha.to_string(),
            r.lambda.to_string(),
            r.beta_prev.to_string(),
            r.cardinality().to_string(),
            set,
            r.best_next.map_or("NA".into(), |b| (b + 1).to_string()),
            match r.covered {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => "NA".into(),
            },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_step_log<R: Read>(reader: R) -> Result<Vec<StepRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(STEP_LOG_HEADER) {
        return Err(Error::Header {
            line: 1,
            reason: format!("expected step log columns {}", STEP_LOG_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| rec.get(k).unwrap_or("");
        let bad = |k: usize| Error::NonNumeric {
            line,
            column: k + 1,
            field: field(k).to_owned(),
        };
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| bad(k));
        let index = |s: &str, k: usize| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => Err(bad(k)),
            }
        };
        let emitted_set = field(5)
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| index(s, 5))
            .collect::<Result<Vec<_>>>()?;
        let cardinality: usize = field(4).parse().map_err(|_| bad(4))?;
        if cardinality != emitted_set.len() {
            return Err(Error::InvalidArgument(format!(
                "line {line}: cardinality {cardinality} does not match set {:?}",
                field(5)
            )));
        }
        out.push(StepRecord {
            t: field(0).parse().map_err(|_| bad(0))?,
            alpha: num(1)?,
            lambda: num(2)?,
            beta_prev: num(3)?,
            emitted_set,
            best_next: match field(6) {
                "NA" => None,
                s => Some(index(s, 6)?),
            },
            covered: match field(7) {
                "1" => Some(true),
                "0" => Some(false),
                "NA" => None,
                _ => return Err(bad(7)),
            },
            pvalues: Vec::new(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(tau: usize, train_n: usize) -> MpsConfig {
        MpsConfig {
            tau,
            train_n,
            replicates: 20,
            seed: 3,
            ..MpsConfig::default()
        }
    }

    fn wavy(t_len: usize, m: usize) -> LossMatrix {
        let rows: Vec<Vec<f64>> = (0..t_len)
            .map(|t| {
                (0..m)
                    .map(|i| (((t * 31 + i * 17) % 23) as f64 / 11.0) + 0.01 * i as f64)
                    .collect()
            })
            .collect();
        LossMatrix::from_rows_unlabeled(&rows).unwrap()
    }

    #[test]
    fn single_model_buffer_is_grid_max() {
        let lm = LossMatrix::from_rows_unlabeled(&(0..30).map(|t| [t as f64]).collect::<Vec<_>>())
            .unwrap();
        let engine = Engine::offline_init(lm, small_config(10, 30)).unwrap();
        assert_eq!(engine.calibrator().betas(), vec![0.95; 10]);
        assert_eq!(engine.lambda(), 1000.0);
        assert_eq!(engine.calibrator().alpha, 0.2);
    }

    #[test]
    fn dominant_constant_column_betas() {
        let lm = LossMatrix::from_rows_unlabeled(&vec![[1.0, 2.0, 3.0]; 12]).unwrap();
        let engine = Engine::offline_init(lm, small_config(5, 12)).unwrap();
        assert_eq!(engine.calibrator().betas(), vec![0.95; 5]);
    }

    #[test]
    fn minimal_training_pads_with_first_beta() {
        let lm = LossMatrix::from_rows_unlabeled(&[[2.0, 1.0], [3.0, 0.5]]).unwrap();
        let engine = Engine::offline_init(lm, small_config(2, 2)).unwrap();
        let betas = engine.calibrator().betas();
        assert_eq!(betas.len(), 2);
        assert_eq!(betas[0], betas[1]);
        // Row 1 makes model 2 the sole survivor, and it is best at t = 2.
        assert_eq!(betas[0], 0.95);
    }

    #[test]
    fn init_rejects_short_training() {
        let lm = wavy(5, 3);
        assert!(Engine::offline_init(lm.clone(), small_config(6, 5)).is_err());
        assert!(Engine::offline_init(lm, small_config(3, 8)).is_err());
    }

    #[test]
    fn single_model_stream() {
        let rows: Vec<[f64; 1]> = (0..40).map(|t| [(t % 7) as f64]).collect();
        let lm = LossMatrix::from_rows_unlabeled(&rows).unwrap();
        let engine = Engine::run_engine(&lm, small_config(5, 20)).unwrap();
        let log = engine.log();
        assert_eq!(log.len(), 20);
        let gamma_ab = 400.0 * 0.2;
        let mut lambda = 1000.0 - gamma_ab;
        for r in log {
            assert_eq!(r.emitted_set, [0]);
            assert!((r.lambda - lambda).abs() < 1e-9);
            lambda -= gamma_ab;
        }
        assert!(log[..19].iter().all(|r| r.covered == Some(true)));
        assert_eq!(log[19].covered, None);
    }

    #[test]
    fn gate_forces_full_set_and_coverage() {
        let lm = wavy(80, 4);
        let cfg = MpsConfig {
            lambda_max: 10.0,
            c: 0.5,
            ..small_config(10, 30)
        };
        let log = Engine::run(&lm, cfg).unwrap();
        let mut gated = 0;
        for r in &log {
            if r.lambda >= 10.0 {
                gated += 1;
                assert_eq!(r.alpha, 0.0);
                assert_eq!(r.emitted_set, [0, 1, 2, 3]);
                assert_ne!(r.covered, Some(false));
            }
        }
        assert!(gated > 0);
    }

    #[test]
    fn run_with_one_extra_row() {
        let lm = wavy(31, 3);
        let log = Engine::run(&lm, small_config(10, 30)).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].t, 31);
        assert_eq!(log[0].covered, None);
        assert!(Engine::run(&wavy(30, 3), small_config(10, 30)).is_err());
    }

    #[test]
    fn run_matches_manual_loop() {
        let lm = wavy(60, 3);
        let cfg = small_config(10, 30);
        let via_run = Engine::run(&lm, cfg.clone()).unwrap();
        let mut engine = Engine::offline_init(lm.truncated(30).unwrap(), cfg).unwrap();
        for t in 31..=60 {
            engine.online_step(lm.row(t).unwrap()).unwrap();
        }
        assert_eq!(engine.log(), &via_run[..]);
    }

    #[test]
    fn rejected_row_leaves_state_unchanged() {
        let lm = wavy(30, 3);
        let mut engine = Engine::offline_init(lm, small_config(10, 30)).unwrap();
        assert!(engine.online_step(&[1.0, 2.0]).is_err());
        assert!(engine.online_step(&[1.0, f64::NAN, 2.0]).is_err());
        assert_eq!(engine.losses().len(), 30);
        assert!(engine.log().is_empty());
    }

    #[test]
    fn step_log_roundtrip() {
        let log = Engine::run(&wavy(50, 4), small_config(10, 30)).unwrap();
        let mut buf = Vec::new();
        write_step_log(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,alpha,lambda,beta_prev,cardinality,set,best_next,covered\n"));
        assert!(text.trim_end().ends_with(",NA,NA"));
        let back = read_step_log(&buf[..]).unwrap();
        assert_eq!(back.len(), log.len());
        for (a, b) in back.iter().zip(&log) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.alpha, b.alpha);
            assert_eq!(a.lambda, b.lambda);
            assert_eq!(a.beta_prev, b.beta_prev);
            assert_eq!(a.emitted_set, b.emitted_set);
            assert_eq!(a.best_next, b.best_next);
            assert_eq!(a.covered, b.covered);
        }
    }
}
