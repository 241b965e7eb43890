//! `mps` command-line interface.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data or validation
//! errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{grid_from_step, MpsConfig};
use crate::engine::{write_step_log, Engine};
use crate::error::{Error, Result};
use crate::loss_stream::LossMatrix;
use crate::mcs::{family_at, McsSettings};
use crate::metrics::{build_report, write_report};
use crate::simharness::{arma, gen_design, ArmaSpec, Design, DesignSpec};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mps", version, about = "Online model prediction sets over loss streams")]
pub struct Cli {
    /// Seed for every random draw (simulation and bootstrap).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Flat key = value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for the bootstrap (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a designed loss matrix (a, b or c).
    Simulate(SimulateArgs),
    /// Generate the ARMA regime-switch series and its forecast-error losses.
    SimulateArma(SimulateArmaArgs),
    /// Run the online engine on a loss CSV and write the step log.
    Run(RunArgs),
    /// One-shot offline model confidence set on a loss CSV.
    Mcs(McsArgs),
    /// Windowed coverage, cardinality and loss summaries of a step log.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub design: Design,
    #[arg(long = "T", default_value_t = 2000)]
    pub t_len: usize,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArmaArgs {
    #[arg(long = "T", default_value_t = 2000)]
    pub t_len: usize,
    #[arg(long, default_value_t = 1000)]
    pub switch_point: usize,
    #[arg(long, default_value_t = 0.3)]
    pub ar: f64,
    #[arg(long, default_value_t = 0.3)]
    pub ma: f64,
    /// Loss matrix output (AR1..AR5, MA1..MA5).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional single-column CSV of the simulated series.
    #[arg(long)]
    pub series_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub losses: PathBuf,
    #[arg(long)]
    pub alpha_bar: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long = "B")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub train_n: Option<usize>,
    #[arg(long)]
    pub block_len: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct McsArgs {
    #[arg(long)]
    pub losses: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
    #[arg(long = "B")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub block_len: Option<usize>,
    /// Use rows 1..=upto only (default: all rows).
    #[arg(long)]
    pub upto: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub steps: PathBuf,
    /// Loss CSV the step log was produced from; required for loss ranges.
    #[arg(long)]
    pub losses: Option<PathBuf>,
    /// Omit the loss-range columns (written as NA).
    #[arg(long)]
    pub no_loss_ranges: bool,
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long, default_value_t = 20)]
    pub quality_window: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing report.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.verbose {
        let _ = env_logger::Builder::new()
            .filter_level(log::LevelFilter::Info)
            .try_init();
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> std::result::Result<(), Failure> {
    let config = base_config(cli)?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, config.seed),
        Command::SimulateArma(a) => simulate_arma(a, config.seed),
        Command::Run(a) => run(a, config),
        Command::Mcs(a) => mcs(a, config),
        Command::Report(a) => report(a),
    }
}

/// Defaults, then the config file, then the global `--seed`.
fn base_config(cli: &Cli) -> Result<MpsConfig> {
    let mut config = MpsConfig::default();
    if let Some(path) = &cli.config {
        config.apply_kv_file(path)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn simulate(a: &SimulateArgs, seed: u64) -> std::result::Result<(), Failure> {
    if a.m < a.design.min_models() {
        return Err(Failure::Usage(format!(
            "--design {} needs --m of at least {}",
            a.design,
            a.design.min_models()
        )));
    }
    let lm = gen_design(&DesignSpec {
        design: a.design,
        t_len: a.t_len,
        m: a.m,
        seed,
    })?;
    lm.save_csv(&a.out)?;
    Ok(())
}

fn simulate_arma(a: &SimulateArmaArgs, seed: u64) -> std::result::Result<(), Failure> {
    let spec = ArmaSpec {
        t_len: a.t_len,
        switch_point: a.switch_point,
        ar_coef: a.ar,
        ma_coef: a.ma,
        seed,
    };
    let series = arma::gen_arma_series(&spec)?;
    if let Some(path) = &a.series_out {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "y")?;
        for v in &series {
            writeln!(out, "{v}")?;
        }
        out.flush()?;
    }
    arma::forecast_losses(&series)?.save_csv(&a.out)?;
    Ok(())
}

fn run(a: &RunArgs, mut config: MpsConfig) -> std::result::Result<(), Failure> {
    if let Some(v) = a.alpha_bar {
        config.alpha_bar = v;
    }
    if let Some(v) = a.lambda_max {
        config.lambda_max = v;
    }
    if let Some(v) = a.c {
        config.c = v;
    }
    if let Some(v) = a.tau {
        config.tau = v;
    }
    if let Some(v) = a.replicates {
        config.replicates = v;
    }
    if let Some(step) = a.grid_step {
        config.grid = grid_from_step(step).map_err(Failure::Usage)?;
    }
    if let Some(v) = a.train_n {
        config.train_n = v;
    }
    if a.block_len.is_some() {
        config.block_len = a.block_len;
    }
    config.validate()?;
    let losses = LossMatrix::ingest_csv(&a.losses)?;
    let log = Engine::run(&losses, config)?;
    write_csv_file(&a.out, |w| write_step_log(&log, w))?;
    Ok(())
}

fn mcs(a: &McsArgs, config: MpsConfig) -> std::result::Result<(), Failure> {
    if !(0.0..=1.0).contains(&a.beta) {
        return Err(Failure::Usage(format!("--beta {} must lie in [0, 1]", a.beta)));
    }
    let losses = LossMatrix::ingest_csv(&a.losses)?;
    let t = a.upto.unwrap_or(losses.len());
    let settings = McsSettings {
        replicates: a.replicates.unwrap_or(config.replicates),
        block_len: a.block_len.or(config.block_len),
        seed: config.seed,
    };
    if settings.replicates == 0 {
        return Err(Failure::Usage("--B must be at least 1".into()));
    }
    let family = family_at(&losses, t, &settings)?;
    let set = family.model_set(a.beta)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut emit = || -> std::io::Result<()> {
        writeln!(out, "model,label,pvalue,in_set")?;
        for (i, (label, p)) in losses.labels().iter().zip(family.pvalues()).enumerate() {
            writeln!(out, "{},{},{},{}", i + 1, label, p, u8::from(set.contains(&i)))?;
        }
        out.flush()
    };
    emit()?;
    Ok(())
}

fn report(a: &ReportArgs) -> std::result::Result<(), Failure> {
    if a.window == 0 || a.quality_window == 0 {
        return Err(Failure::Usage("windows must be at least 1".into()));
    }
    let losses = match (&a.losses, a.no_loss_ranges) {
        (_, true) => None,
        (Some(path), false) => Some(LossMatrix::ingest_csv(path)?),
        (None, false) => {
            return Err(Failure::Usage(
                "loss ranges need --losses (or pass --no-loss-ranges)".into(),
            ))
        }
    };
    let records = crate::engine::read_step_log(std::fs::File::open(&a.steps)?)?;
    let rows = build_report(&records, losses.as_ref(), a.window, a.quality_window)?;
    write_report(&rows, &a.out, a.force)?;
    Ok(())
}

fn write_csv_file(
    path: &Path,
    body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    body(&mut out)?;
    out.flush()?;
    Ok(())
}
