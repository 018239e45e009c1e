use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpacc::harness::{load_config_with_seed, run_scenario, HarnessError, Protocol, ScenarioOutput};

#[derive(Parser)]
#[command(
    name = "dpacc-sim",
    version,
    about = "Seeded Monte-Carlo runs of DPACC protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sealed-bid auctions with random bidders.
    Auction(RunArgs),
    /// Frequent batch auctions against competing market makers.
    Fba(RunArgs),
    /// Requests for quote settled by an escalating fee.
    Rfq(RunArgs),
    /// Blind versus transparent orders on a constant-product pool.
    Amm(RunArgs),
    /// Collateral auctions on a price path.
    Liquidation(RunArgs),
    /// Mixed-protocol ledger invariants and commitment-map fuzzing.
    Invariants(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    /// TOML scenario file. Defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Format of the per-trial records.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn write_outputs(dir: &Path, out: &ScenarioOutput, format: Format) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), out.report.to_json())?;
    match format {
        Format::Json => fs::write(dir.join("trials.json"), out.report.trials_json())?,
        Format::Csv => {
            let f = fs::File::create(dir.join("trials.csv"))?;
            out.report.write_trials_csv(f)?;
        }
    }
    fs::write(dir.join("events.ndjson"), &out.events)
}

fn run(protocol: Protocol, args: &RunArgs) -> ExitCode {
    let mut cfg = match load_config_with_seed(args.config.as_deref(), args.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(p) = cfg.protocol.filter(|p| *p != protocol) {
        eprintln!(
            "error: config is for `{}` but `{}` was requested",
            p.name(),
            protocol.name()
        );
        return ExitCode::from(EXIT_CONFIG);
    }
    let out = match run_scenario(&cfg, protocol) {
        Ok(o) => o,
        Err(HarnessError::Config(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VIOLATION);
        }
    };
    if let Err(e) = write_outputs(&args.out, &out, args.format) {
        eprintln!("error: writing {}: {e}", args.out.display());
        return ExitCode::FAILURE;
    }
    let r = &out.report;
    for c in &r.checks {
        println!(
            "{} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!(
        "{} trials, {} violations, report in {}",
        r.trials,
        r.violations,
        args.out.display()
    );
    if r.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (protocol, args) = match &cli.command {
        Command::Auction(a) => (Protocol::Auction, a),
        Command::Fba(a) => (Protocol::Fba, a),
        Command::Rfq(a) => (Protocol::Rfq, a),
        Command::Amm(a) => (Protocol::Amm, a),
        Command::Liquidation(a) => (Protocol::Liquidation, a),
        Command::Invariants(a) => (Protocol::Invariants, a),
    };
    run(protocol, args)
}
