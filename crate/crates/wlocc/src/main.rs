//! Command-line front-end over the library: bound reports, plan synthesis
//! and simulation, distillation bounds, and strategy-comparison data.
//!
//! Exit codes: 0 ok, 2 malformed input, 3 domain/precondition violation,
//! 4 I/O failure. Errors print machine-readable JSON on standard error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use wlocc::bounds::{distill_bound, lower_bound};
use wlocc::measurement::zero_x0_filter;
use wlocc::protocol::{monte_carlo, plan_transform};
use wlocc::state::{PairRecord, StateRecord, WClassComponents};
use wlocc::symmetric::{crossing_point, difference_profile};

#[derive(Parser)]
#[command(name = "wlocc", version, about = "LOCC conversion analysis for N-qubit W-class states")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form conversion bounds for a pair file {"x": [...], "y": [...]}.
    Bounds {
        #[arg(long)]
        input: PathBuf,
    },
    /// Conversion protocol synthesis and simulation.
    Protocol {
        #[command(subcommand)]
        mode: ProtocolCmd,
    },
    /// Distillation bound for a single state file {"x": [...]}.
    Distill {
        #[arg(long)]
        input: PathBuf,
    },
    /// Strategy-comparison CSV over the symmetric family.
    Symmetric {
        /// Grid step for s in (0, 1].
        #[arg(long, default_value_t = 0.001)]
        grid: f64,
        /// CSV output path.
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum ProtocolCmd {
    /// Emit the synthesized plan as JSON.
    Plan {
        #[arg(long)]
        input: PathBuf,
        /// Write the plan here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the plan's success probability.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum CliError {
    Parse(String),
    Domain(wlocc::Error),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn report(&self) {
        let body = match self {
            CliError::Parse(msg) => json!({"error": "parse", "message": msg}),
            CliError::Domain(e) => json!({"error": e.code(), "message": e.to_string()}),
            CliError::Io(msg) => json!({"error": "io", "message": msg}),
        };
        eprintln!("{body}");
    }
}

impl From<wlocc::Error> for CliError {
    fn from(e: wlocc::Error) -> Self {
        CliError::Domain(e)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))
}

fn load_pair(path: &Path) -> Result<(WClassComponents, WClassComponents), CliError> {
    let rec: PairRecord = read_json(path)?;
    let x = WClassComponents::new(rec.x)?;
    let y = WClassComponents::new(rec.y)?;
    Ok((x, y))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string(value).map_err(|e| CliError::Parse(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn cmd_bounds(input: &Path) -> Result<(), CliError> {
    let (x, y) = load_pair(input)?;
    let report = lower_bound(&x, &y)?;
    print_json(&report)
}

fn cmd_plan(input: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let (x, y) = load_pair(input)?;
    let plan = plan_transform(&x, &y)?;
    let text = serde_json::to_string(&plan).map_err(|e| CliError::Parse(e.to_string()))?;
    match output {
        Some(path) => fs::write(path, text + "\n")
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_simulate(input: &Path, trials: u64, seed: u64) -> Result<(), CliError> {
    let (x, y) = load_pair(input)?;
    let plan = plan_transform(&x, &y)?;
    let mc = monte_carlo(&x, &plan, trials, seed)?;
    print_json(&json!({
        "estimate": mc.estimate,
        "stderr": mc.stderr,
        "predicted": plan.predicted_success,
    }))
}

fn cmd_distill(input: &Path) -> Result<(), CliError> {
    let rec: StateRecord = read_json(input)?;
    let x = rec.to_components()?;
    let bound = distill_bound(&x)?;
    let filter = zero_x0_filter(&x)?;
    print_json(&json!({
        "bound": bound,
        "lambda": filter.lambda,
        "acting_party": filter.acting_party,
    }))
}

fn cmd_symmetric(grid: f64, output: &Path) -> Result<(), CliError> {
    let rows = difference_profile(grid)?;
    let mut csv = String::from("s,p_max,q_max,diff\n");
    for r in &rows {
        csv.push_str(&format!("{:.8e},{:.8e},{:.8e},{:.8e}\n", r.s, r.p, r.q, r.diff));
    }
    fs::write(output, csv)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", output.display())))?;
    let max_abs = rows.iter().fold(0.0f64, |m, r| m.max(r.diff.abs()));
    print_json(&json!({
        "crossing": crossing_point(),
        "max_abs_diff": max_abs,
        "rows": rows.len(),
    }))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Bounds { input } => cmd_bounds(&input),
        Cmd::Protocol { mode } => match mode {
            ProtocolCmd::Plan { input, output } => cmd_plan(&input, output.as_deref()),
            ProtocolCmd::Simulate { input, trials, seed } => cmd_simulate(&input, trials, seed),
        },
        Cmd::Distill { input } => cmd_distill(&input),
        Cmd::Symmetric { grid, output } => cmd_symmetric(grid, &output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code())
        }
    }
}
