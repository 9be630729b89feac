use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use impulse_heat_cli::{run, CliError, Options, ScenarioConfig, Task};

#[derive(Parser)]
#[command(name = "impulse-heat", version, about = "Impulse-controlled coupled heat equations")]
struct Cli {
    /// Scenario document (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory for trajectory CSV files.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Absolute rank tolerance, replacing the relative default.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Number of sine modes kept.
    #[arg(long, global = true)]
    modes: Option<usize>,
    /// Seed for randomized checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ranks, critical window and sampled-rank checks.
    Analyze,
    /// Forward evolution with given controls.
    Simulate,
    /// Minimum-norm approximate steering to a target.
    SteerApprox,
    /// Exact null control when the control region is the whole interval.
    SteerNull,
    /// Impulse steering of the finite-dimensional system.
    SteerOde,
    /// Run a named reproduction suite (example-2.3, example-5.2).
    Reproduce { name: String },
}

fn load(path: &Option<PathBuf>) -> Result<ScenarioConfig, CliError> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?;
            Ok(ScenarioConfig::from_json(&text)?)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let (task, name) = match &cli.command {
        Command::Analyze => (Task::Analyze, None),
        Command::Simulate => (Task::Simulate, None),
        Command::SteerApprox => (Task::SteerApprox, None),
        Command::SteerNull => (Task::SteerNull, None),
        Command::SteerOde => (Task::SteerOde, None),
        Command::Reproduce { name } => (Task::Reproduce, Some(name.as_str())),
    };
    if task != Task::Reproduce && cli.config.is_none() {
        return Err(CliError::Io(format!("--config is required for {task}")));
    }
    let cfg = load(&cli.config)?;
    let opts = Options {
        modes: cli.modes,
        tol: cli.tol,
        seed: cli.seed,
    };
    let outcome = run(task, name, &cfg, &opts)?;
    let text = outcome.report.to_json();
    match &cli.out {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut out = std::io::stdout().lock();
            if let Err(e) = writeln!(out, "{text}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(CliError::Io(format!("cannot write report: {e}")));
                }
            }
        }
    }
    if let (Some(dir), Some(table)) = (&cli.csv, &outcome.trajectory) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(format!("{}_trajectory.csv", task.name()));
        table
            .write_file(&path)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    for a in &outcome.report.assertions {
        eprintln!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    Ok(outcome.report.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
