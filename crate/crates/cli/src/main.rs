//! `swiftagg` command line: simulated aggregation runs, the exhaustive privacy
//! suite, and the analytic load comparison.

mod config;
mod runner;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_timing, ConfigError, DropoutSpec, OutputFormat, RunConfig};
use runner::{
    default_privacy_suite, run_experiments, run_privacy_suite, write_records, PrivacySpec, RunError,
};
use swiftagg::simnet::comparison;
use swiftagg::DropoutTiming;

#[derive(Parser)]
#[command(
    name = "swiftagg",
    version,
    about = "Simulate dropout-resilient secure aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repeated simulations and print one record per repetition.
    Run(RunArgs),
    /// Exhaustively check view independence on tiny instances.
    Privacy(PrivacyArgs),
    /// Print the analytic communication comparison for one parameter set.
    Table1(TableArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value file; flags override its settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    model_len: Option<usize>,
    /// Prime modulus below 2^40.
    #[arg(long)]
    field: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma separated ids of users that drop out.
    #[arg(long, value_delimiter = ',', conflicts_with = "drop_rate")]
    drop: Option<Vec<usize>>,
    /// Fraction of users that drop out, capped at d.
    #[arg(long)]
    drop_rate: Option<f64>,
    /// before | after | mid
    #[arg(long, value_parser = parse_timing)]
    drop_timing: Option<DropoutTiming>,
    /// Comma separated ids of colluding users.
    #[arg(long, value_delimiter = ',')]
    adversary: Option<Vec<usize>>,
    #[arg(long)]
    server_curious: bool,
    #[arg(long)]
    reps: Option<usize>,
    /// json | csv
    #[arg(long)]
    format: Option<OutputFormat>,
    #[arg(long)]
    shuffle_groups: bool,
    /// Add wall-clock seconds per repetition to each record.
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        macro_rules! over {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$field = v; })*
            };
        }
        over!(n => n, t => t, d => d, model_len => model_len, field => field_modulus,
              seed => seed, drop_timing => drop_timing, adversary => adversary,
              reps => repetitions, format => format);
        if let Some(ids) = &self.drop {
            cfg.dropout = DropoutSpec::Ids(ids.clone());
        }
        if let Some(r) = self.drop_rate {
            cfg.dropout = DropoutSpec::Rate(r);
        }
        cfg.server_curious |= self.server_curious;
        cfg.group_shuffle |= self.shuffle_groups;
        cfg.timing |= self.timing;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PrivacyArgs {
    /// Zero every noise vector; must produce a witness.
    #[arg(long)]
    no_noise: bool,
    /// Check a single custom instance instead of the default suite.
    #[arg(long, requires_all = ["t", "d", "field"])]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    field: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    adversary: Vec<usize>,
    #[arg(long)]
    server_curious: bool,
    #[arg(long, value_delimiter = ',')]
    drop: Vec<usize>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    model_len: usize,
}

const EXIT_FAILED_CHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

fn report_config(e: &ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn cmd_run(args: &RunArgs) -> io::Result<ExitCode> {
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => return Ok(report_config(&e)),
    };
    let records = match run_experiments(&cfg) {
        Ok(r) => r,
        Err(RunError::Config(e)) => return Ok(report_config(&e)),
        Err(e @ RunError::Protocol { .. }) => {
            eprintln!("{e}");
            return Ok(ExitCode::from(EXIT_INTERNAL));
        }
    };
    let mut out = io::stdout().lock();
    write_records(&mut out, &records, cfg.format, cfg.timing)?;
    out.flush()?;
    Ok(if records.iter().all(|r| r.recovered_ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED_CHECK)
    })
}

fn cmd_privacy(args: &PrivacyArgs) -> io::Result<ExitCode> {
    let suite = match (args.n, args.t, args.d, args.field) {
        (Some(n), Some(t), Some(d), Some(p)) => vec![PrivacySpec {
            n,
            t,
            d,
            p,
            colluders: args.adversary.clone(),
            server_curious: args.server_curious,
            dropouts: args.drop.clone(),
        }],
        _ => default_privacy_suite(),
    };
    let records = match run_privacy_suite(&suite, args.no_noise) {
        Ok(r) => r,
        Err(e) => return Ok(report_config(&e)),
    };
    let mut out = io::stdout().lock();
    for r in &records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(if records.iter().all(|r| r.passed()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED_CHECK)
    })
}

fn cmd_table(args: &TableArgs) -> io::Result<ExitCode> {
    let record = comparison(args.n, args.t, args.d, args.model_len);
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &record)?;
    writeln!(out)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Privacy(a) => cmd_privacy(a),
        Command::Table1(a) => cmd_table(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("io error: {e}");
        ExitCode::from(EXIT_INTERNAL)
    })
}
