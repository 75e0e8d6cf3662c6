//! Command-line front end: `solve`, `price-curve`, `compare`, `dump-rule`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
//! 3 tolerance exceeded in `compare`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deep_imex::config::RunConfig;
use deep_imex::market::Coefficients;
use deep_imex::quadrature::build_rule;
use deep_imex::run::{fmt17, parse_grid, solve_to_dir, Comparison, CurveRow, LoadedRun, Oracle};
use deep_imex::Error;

#[derive(Parser)]
#[command(name = "deep-imex", version, about = "Deep IMEX solver for Merton basket call options")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a solution and write the run directory.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `training.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Suppress per-step progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Prices along the diagonal `x_i = m` at the checkpoint nearest to `--t`.
    PriceCurve {
        /// Run directory written by `solve`.
        run: PathBuf,
        /// Time to maturity; defaults to the solved horizon.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value = "0:3:31")]
        grid: String,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for uniformity; price curves use no randomness.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compares a run against a reference pricer.
    Compare {
        run: PathBuf,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value = "0.5:1.5:11")]
        grid: String,
        /// merton-series, black-scholes, qmc or model.
        #[arg(long, default_value = "merton-series")]
        oracle: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the QMC seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Writes the Gauss–Hermite jump rule of a configuration as CSV.
    DumpRule {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for uniformity; rules are deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
    Tolerance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Tolerance(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve { config, out, seed, quiet } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.training.seed = s;
            }
            let manifest = solve_to_dir(&cfg, &out, !quiet)?;
            println!(
                "wrote {} checkpoints to {} (seed {}, {:.1}s)",
                manifest.checkpoints.len(),
                out.display(),
                manifest.seed,
                manifest.report.wall_seconds
            );
            Ok(())
        }
        Command::PriceCurve { run, t, grid, out, seed: _ } => {
            let loaded = open_run(&run)?;
            let grid = parse_grid(&grid)?;
            let t = t.unwrap_or(loaded.manifest.config.scheme.maturity);
            let rows = loaded.price_curve(t, &grid)?;
            write_csv(out.as_deref(), |w| write_curve(w, &rows))
        }
        Command::Compare { run, t, grid, oracle, out, seed } => {
            let loaded = open_run(&run)?;
            let grid = parse_grid(&grid)?;
            let oracle = Oracle::parse(&oracle)?;
            let t = t.unwrap_or(loaded.manifest.config.scheme.maturity);
            let mut qmc = loaded.manifest.config.oracle.qmc();
            if let Some(s) = seed {
                qmc.seed = s;
            }
            let cmp = loaded.compare(t, &grid, oracle, &qmc)?;
            write_csv(out.as_deref(), |w| write_comparison(w, &cmp))?;
            let summary = summary(&cmp, qmc.seed);
            if out.is_some() {
                print!("{summary}");
            } else {
                eprint!("{summary}");
            }
            if cmp.within_tolerance() {
                Ok(())
            } else {
                Err(Failure::Tolerance(format!(
                    "max abs error {:.3e} exceeds the configured tolerance {:.3e}",
                    cmp.max_abs_err, cmp.tolerance
                )))
            }
        }
        Command::DumpRule { config, out, seed: _ } => {
            let cfg = load_config(&config)?;
            let model = cfg.model()?;
            let rule = build_rule(model.jump_law(), &cfg.quadrature.rule())?;
            match out {
                Some(path) => rule.write_csv(std::fs::File::create(path)?)?,
                None => rule.write_csv(std::io::stdout().lock())?,
            }
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(RunConfig::from_toml(&text)?)
}

fn open_run(dir: &Path) -> Result<LoadedRun, Failure> {
    if !dir.join(deep_imex::run::MANIFEST_FILE).is_file() {
        return Err(Failure::Usage(format!("{} is not a run directory (no manifest)", dir.display())));
    }
    Ok(LoadedRun::open(dir)?)
}

fn write_csv<F>(out: Option<&Path>, body: F) -> Result<(), Failure>
where
    F: FnOnce(&mut csv::Writer<Box<dyn Write>>) -> Result<(), csv::Error>,
{
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_curve<W: Write>(w: &mut csv::Writer<W>, rows: &[CurveRow]) -> Result<(), csv::Error> {
    w.write_record(["moneyness", "price", "intrinsic", "time_value", "resolved_t"])?;
    for r in rows {
        w.write_record([r.moneyness, r.price, r.intrinsic, r.time_value, r.resolved_t].map(fmt17))?;
    }
    Ok(())
}

fn write_comparison<W: Write>(w: &mut csv::Writer<W>, cmp: &Comparison) -> Result<(), csv::Error> {
    w.write_record(["moneyness", "model", "oracle", "abs_err"])?;
    for r in &cmp.rows {
        w.write_record([r.moneyness, r.model, r.oracle, r.abs_err].map(fmt17))?;
    }
    Ok(())
}

fn summary(cmp: &Comparison, seed: u64) -> String {
    format!(
        "# summary\noracle = {}\nresolved_t = {}\npoints = {}\nmax_abs_err = {}\nmean_abs_err = {}\noracle_error = {}\ntolerance = {}\nseed = {seed}\nwithin_tolerance = {}\n",
        cmp.oracle.name(),
        fmt17(cmp.resolved_t),
        cmp.rows.len(),
        fmt17(cmp.max_abs_err),
        fmt17(cmp.mean_abs_err),
        fmt17(cmp.oracle_error),
        fmt17(cmp.tolerance),
        cmp.within_tolerance()
    )
}
