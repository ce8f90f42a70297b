use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linbias_cli::pipeline;
use linbias_cli::{CliResult, ExperimentConfig, Resolved};

#[derive(Parser)]
#[command(
    name = "linbias",
    version,
    about = "Gradient flow on linear tensor networks versus predicted limits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run gradient flow and write trajectories.
    Simulate(Io),
    /// Write predicted limit points and directions.
    Predict(Io),
    /// Simulate, predict and judge each run against its tolerance.
    Compare(Io),
    /// Tabulate the distance to the prediction across the α grid.
    Sweep(Io),
    /// List the shipped presets.
    Presets,
}

#[derive(Args)]
struct Io {
    /// Config file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

impl Io {
    fn load(&self) -> CliResult<Resolved> {
        match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path),
            (None, Some(name)) => linbias_cli::load_preset(name),
            (None, None) => unreachable!("clap requires one of them"),
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(io) => {
            let runs = pipeline::cmd_simulate(&io.load()?, &io.out)?;
            for r in &runs {
                let last = r.trajectory.last();
                println!(
                    "{}  alpha={}  loss={:e}  beta={:?}",
                    r.label, r.alpha, last.loss, last.beta
                );
            }
        }
        Command::Predict(io) => {
            let p = pipeline::cmd_predict(&io.load()?, &io.out)?;
            for r in &p.runs {
                println!(
                    "{}  alpha={}  {}  {:?}",
                    r.label, r.alpha, r.prediction.theorem, r.prediction.value
                );
            }
            if let Some(s) = &p.sensing {
                println!(
                    "sensing  eigenvalues={:?}  oracle={:?}",
                    s.eigenvalues, s.oracle_eigenvalues
                );
            }
        }
        Command::Compare(io) => {
            let report = pipeline::run_compare(&io.load()?, &io.out)?;
            for r in &report.runs {
                let verdict = match r.passed {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "INFO",
                };
                let mut line = format!(
                    "{verdict}  {}  alpha={}  loss={:e}",
                    r.label, r.alpha, r.final_loss
                );
                if let Some(d) = r.distance {
                    line += &format!("  distance={d:e}");
                }
                if let Some(c) = r.cosine {
                    line += &format!("  cosine={c:.6}");
                }
                if let Some(d) = r.param_distance {
                    line += &format!("  param_distance={d:e}");
                }
                if let Some(k) = &r.kkt_residuals {
                    let k: Vec<String> = k.iter().map(|v| format!("{v:.3e}")).collect();
                    line += &format!("  kkt=[{}]", k.join(", "));
                }
                println!("{line}");
            }
            if let Some(s) = &report.sensing {
                println!(
                    "{}  sensing  residual={:e}  oracle_distance={:e}",
                    if s.passed { "PASS" } else { "FAIL" },
                    s.measurement_residual,
                    s.oracle_distance
                );
            }
            pipeline::report_outcome(report)?;
        }
        Command::Sweep(io) => {
            let sw = pipeline::run_sweep(&io.load()?, &io.out)?;
            for s in &sw.series {
                let verdict = if s.passed { "PASS" } else { "FAIL" };
                println!(
                    "{verdict}  {}  alphas={:?}  distances={:?}",
                    s.label, s.alphas, s.distances
                );
            }
            pipeline::sweep_outcome(sw)?;
        }
        Command::Presets => {
            for name in linbias_cli::preset_names()? {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("linbias: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
