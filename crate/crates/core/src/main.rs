use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vre_market::error::Error;
use vre_market::experiments::{self, OutputFormat};
use vre_market::scenario::{Mechanism, ScenarioSpec, SweepAxis, SweepSpec};

/// Day-ahead clearing and equilibrium analysis for renewable suppliers.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear one scenario and print one row per mechanism and supplier.
    Clear(Common),
    /// Sweep a supplier's standard deviation or the penalty price.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        sweep_axis: Option<AxisArg>,
        /// Comma-separated ascending values.
        #[arg(long, value_delimiter = ',')]
        sweep_values: Option<Vec<f64>>,
        /// Supplier (from 1) whose std is swept.
        #[arg(long)]
        sweep_supplier: Option<usize>,
    },
    /// Check equilibrium certificates, duality and the price chain; exit 1 on failure.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated UP quantities to verify instead of the constructed profile.
        #[arg(long, value_delimiter = ',')]
        profile: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = MechanismArg::All)]
    mechanism: MechanismArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Absolute UP deviation gain tolerance, k$.
    #[arg(long)]
    tolerance_up: Option<f64>,
    /// PAB epsilon tolerance as a fraction of price cap times demand.
    #[arg(long)]
    tolerance_pab: Option<f64>,
    /// Duality price tolerance as a fraction of the price cap.
    #[arg(long)]
    tolerance_price: Option<f64>,
    /// Duality commitment tolerance, MWh.
    #[arg(long)]
    tolerance_quantity: Option<f64>,
    /// Duality relative objective tolerance.
    #[arg(long)]
    tolerance_objective: Option<f64>,
    /// Print the resolved scenario, defaults included, and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    Up,
    Pab,
    Rup,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    SupplierStd,
    PenaltyPrice,
}

impl MechanismArg {
    fn list(self) -> Vec<Mechanism> {
        match self {
            MechanismArg::Up => vec![Mechanism::Up],
            MechanismArg::Pab => vec![Mechanism::Pab],
            MechanismArg::Rup => vec![Mechanism::Rup],
            MechanismArg::All => Mechanism::ALL.to_vec(),
        }
    }
}

enum Failure {
    Usage(Error),
    Runtime(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Scenario { .. }
            | Error::InvalidConfig(_)
            | Error::InvalidModel(_)
            | Error::Unsupported(_)
            | Error::MalformedRecord { .. }
            | Error::InsufficientData { .. }
            | Error::Io(_)
            | Error::Csv(_) => Failure::Usage(e),
            other => Failure::Runtime(other),
        }
    }
}

fn load(common: &Common) -> Result<ScenarioSpec, Error> {
    let mut spec = ScenarioSpec::from_path(&common.scenario)?;
    if let Some(seed) = common.seed {
        spec.options.seed = seed;
    }
    let t = &mut spec.tolerances;
    for (slot, flag) in [
        (&mut t.up, common.tolerance_up),
        (&mut t.pab, common.tolerance_pab),
        (&mut t.price, common.tolerance_price),
        (&mut t.quantity, common.tolerance_quantity),
        (&mut t.objective, common.tolerance_objective),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    Ok(spec)
}

fn output(common: &Common) -> Result<Box<dyn Write>, Error> {
    Ok(match &common.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn format(common: &Common) -> OutputFormat {
    match common.format {
        FormatArg::Csv => OutputFormat::Csv,
        FormatArg::Json => OutputFormat::Json,
    }
}

fn print_config(spec: &ScenarioSpec) -> Result<(), Error> {
    spec.validate()?;
    print!("{}", spec.to_toml());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Clear(common) => {
            let spec = load(&common)?;
            if common.print_config {
                return Ok(print_config(&spec)?);
            }
            let mechanisms = experiments::resolve_mechanisms(
                &common.mechanism.list(),
                spec.suppliers.len(),
                common.mechanism != MechanismArg::All,
            )?;
            let rows = experiments::run_point(&spec, &mechanisms, None, spec.options.seed)?;
            experiments::write_rows(&rows, format(&common), output(&common)?)?;
        }
        Command::Sweep {
            common,
            sweep_axis,
            sweep_values,
            sweep_supplier,
        } => {
            let mut spec = load(&common)?;
            let mut sweep = spec.sweep.take().unwrap_or(SweepSpec {
                axis: SweepAxis::SupplierStd,
                supplier: 2,
                values: Vec::new(),
                mechanisms: Mechanism::ALL.to_vec(),
            });
            if let Some(axis) = sweep_axis {
                sweep.axis = match axis {
                    AxisArg::SupplierStd => SweepAxis::SupplierStd,
                    AxisArg::PenaltyPrice => SweepAxis::PenaltyPrice,
                };
            }
            if let Some(values) = sweep_values {
                sweep.values = values;
            }
            if let Some(s) = sweep_supplier {
                sweep.supplier = s;
            }
            if common.mechanism != MechanismArg::All {
                sweep.mechanisms = common.mechanism.list();
            }
            spec.sweep = Some(sweep);
            spec.validate()?;
            if common.print_config {
                return Ok(print_config(&spec)?);
            }
            let sweep = spec.sweep.as_ref().expect("set above");
            let explicit = sweep.mechanisms.len() == 1;
            let mechanisms =
                experiments::resolve_mechanisms(&sweep.mechanisms, spec.suppliers.len(), explicit)?;
            let rows = experiments::run_sweep(&spec, &mechanisms)?;
            experiments::write_rows(&rows, format(&common), output(&common)?)?;
        }
        Command::Verify { common, profile } => {
            let spec = load(&common)?;
            if common.print_config {
                return Ok(print_config(&spec)?);
            }
            let mechanisms = experiments::resolve_mechanisms(
                &common.mechanism.list(),
                spec.suppliers.len(),
                common.mechanism != MechanismArg::All,
            )?;
            let report = experiments::verify(&spec, &mechanisms, profile.as_deref())?;
            for c in &report.checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                eprintln!(
                    "{mark} {}: {} ({:.3e} vs {:.3e})",
                    c.name, c.detail, c.value, c.tolerance
                );
            }
            report.write(format(&common), output(&common)?)?;
            if !report.passed() {
                return Err(Failure::Verification);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
