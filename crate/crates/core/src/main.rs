use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nvmpr::config::{self, ConfigFile, Mode, OutputFormat, RunConfig};
use nvmpr::output::{self, Table};
use nvmpr::{run, sweep, Error, Result};

#[derive(Parser)]
#[command(name = "nvmpr", version, about = "NV-centre multiphoton resonance modelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// NV and P1 transition frequencies against field strength.
    Transitions(Common),
    /// Hyperbolas, peak grid and cross-relaxation estimates near the LAC.
    Atlas(Common),
    /// Steady-state P_z over a field/frequency grid.
    Sweep(Common),
    /// Time-domain integration against the closed-form steady state.
    OdeCheck(Common),
    /// Spin-cavity coupling from a field map.
    Coupling(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; falls back to `output.path`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

enum Failure {
    Config(Error),
    Run(Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Run(Error::Config(_)) => 2,
            Failure::Run(Error::NotConverged { .. } | Error::EigenNoConvergence { .. } | Error::Integration { .. }) => {
                3
            }
            Failure::Run(_) => 1,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Run(e) => e,
        }
    }
}

fn load(mode: Mode, path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => config::load_config(p)?,
        None => config::from_file(ConfigFile::defaults(mode), Path::new("."))?,
    };
    if cfg.mode() != mode {
        return Err(Error::Config(format!(
            "config has mode = {}, but the `{mode}` command was run",
            cfg.mode()
        )));
    }
    Ok(cfg)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io(Path::new("<stdout>"), e)),
    }
}

fn emit_table(table: &Table, format: OutputFormat, out: Option<&Path>) -> Result<()> {
    match (format, out) {
        (_, Some(p)) => table.write(p, format),
        (OutputFormat::Csv, None) => emit(&table.to_csv(), None),
        (OutputFormat::Json, None) => emit(&table.to_json()?, None),
    }
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => output::write_json(value, p),
        None => {
            let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
            s.push('\n');
            emit(&s, None)
        }
    }
}

fn execute(cfg: &RunConfig, format: OutputFormat, out: Option<&Path>) -> Result<()> {
    match cfg.mode() {
        Mode::Transitions => emit_table(&run::transitions(cfg)?, format, out),
        Mode::Atlas => {
            let report = run::atlas(cfg)?;
            match format {
                OutputFormat::Json => emit_json(&report, out),
                OutputFormat::Csv => emit_table(&report.peak_table(), format, out),
            }
        }
        Mode::Sweep => {
            let mut grid = sweep::run_sweep(cfg)?;
            if cfg.file.sweep.derivative {
                grid = sweep::derivative_map(&grid)?;
            }
            match (out, format) {
                (Some(p), _) => output::write_grid(&grid, p, format),
                (None, OutputFormat::Json) => emit(&output::grid_to_json(&grid)?, None),
                (None, OutputFormat::Csv) => emit(&output::grid_to_csv(&grid)?, None),
            }
        }
        Mode::OdeCheck => {
            let report = run::ode_check(cfg)?;
            match format {
                OutputFormat::Json => emit_json(&report, out)?,
                OutputFormat::Csv => emit_table(&report.table(), format, out)?,
            }
            if let Some(row) = report.rows.iter().find(|r| !r.converged) {
                return Err(Error::NotConverged {
                    periods: row.periods,
                    last_change: f64::NAN,
                });
            }
            if !report.passed {
                eprintln!(
                    "warning: max relative deviation {:.3e} exceeds ode_check.agreement",
                    report.max_rel_error
                );
            }
            Ok(())
        }
        Mode::Coupling => emit_json(&run::coupling(cfg)?, out),
    }
}

fn main_inner(cli: Cli) -> std::result::Result<(), Failure> {
    let (mode, common) = match cli.command {
        Command::Transitions(c) => (Mode::Transitions, c),
        Command::Atlas(c) => (Mode::Atlas, c),
        Command::Sweep(c) => (Mode::Sweep, c),
        Command::OdeCheck(c) => (Mode::OdeCheck, c),
        Command::Coupling(c) => (Mode::Coupling, c),
    };
    let cfg = load(mode, common.config.as_deref()).map_err(Failure::Config)?;
    let format = common.format.map_or(cfg.file.output.format, Into::into);
    let out = common.out.or_else(|| cfg.file.output.path.clone());

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = common.threads {
            if n == 0 {
                return Err(Failure::Config(Error::Config("--threads must be at least 1".into())));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Failure::Run(Error::invalid(e.to_string())))?
    };
    pool.install(|| execute(&cfg, format, out.as_deref()))
        .map_err(Failure::Run)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
