use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tumorsim::scenario::{
    convergence_study, ensure_dir, linear_compare, parse_config, run_simulation, stability_curves,
    write_convergence, write_stability, ConvergenceMode, RunStatus, ScenarioError,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRUNCATED: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "tumorsim",
    version,
    about = "Boundary integral simulation of two-phase tumor growth with chemotaxis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the interface and write diagnostics and snapshots.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the simulation next to the linear-theory ODE for one mode.
    Linear {
        #[arg(long)]
        config: PathBuf,
        /// Perturbation mode l of the initial shape.
        #[arg(long)]
        mode: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Critical apoptosis A_c(R) curves for a range of modes.
    Stability {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive range `a..b` or comma list, e.g. `2..6` or `2,4`.
        #[arg(long, default_value = "2..6", value_parser = parse_modes)]
        modes: Modes,
        #[arg(long)]
        rmax: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Temporal or spatial convergence study against the finest level.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: StudyMode,
        /// Comma-separated time steps or marker counts.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyMode {
    Temporal,
    Spatial,
}

#[derive(Clone, Debug)]
struct Modes(Vec<u32>);

fn parse_modes(s: &str) -> Result<Modes, String> {
    let modes: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
        let b: u32 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|m| m.trim().parse().map_err(|e| format!("{m}: {e}")))
            .collect::<Result<_, _>>()?
    };
    if modes.is_empty() || modes.iter().any(|&l| l < 2) {
        return Err("modes must be non-empty and >= 2".to_string());
    }
    Ok(Modes(modes))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(RunStatus::Completed) => ExitCode::SUCCESS,
        Ok(RunStatus::Truncated { t, reason }) => {
            eprintln!("run truncated at t = {t}: {reason}");
            ExitCode::from(EXIT_TRUNCATED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_INTERNAL
            })
        }
    }
}

fn run(command: Command) -> Result<RunStatus, ScenarioError> {
    match command {
        Command::Simulate { config, out } => {
            let spec = parse_config(&config)?;
            let output = run_simulation(&spec, Some(&out))?;
            report(&out, output.steps);
            Ok(output.status)
        }
        Command::Linear { config, mode, out } => {
            let spec = parse_config(&config)?;
            let cmp = linear_compare(&spec, mode, Some(&out))?;
            report(&out, cmp.run.steps);
            Ok(cmp.run.status)
        }
        Command::Stability {
            config,
            modes,
            rmax,
            samples,
            out,
        } => {
            let spec = parse_config(&config)?;
            let r_inf =
                spec.farfield_shape
                    .circle_radius()
                    .ok_or_else(|| ScenarioError::Config {
                        field: "farfield_shape".to_string(),
                        reason: "stability curves need a circular far field".to_string(),
                    })?;
            let table = stability_curves(&spec.params, r_inf, &modes.0, rmax, samples)?;
            let path = ensure_dir(&out)?.join("stability.csv");
            write_stability(&path, &table)?;
            eprintln!("wrote {}", path.display());
            Ok(RunStatus::Completed)
        }
        Command::Converge {
            config,
            mode,
            levels,
            out,
        } => {
            let spec = parse_config(&config)?;
            let mode = match mode {
                StudyMode::Temporal => ConvergenceMode::Temporal,
                StudyMode::Spatial => ConvergenceMode::Spatial,
            };
            let table = convergence_study(&spec, mode, &levels)?;
            let path = ensure_dir(&out)?.join("convergence.csv");
            write_convergence(&path, &table)?;
            for r in &table.rows {
                eprintln!(
                    "level {:e}: error {:?} ratio {:?} order {:?}",
                    r.level, r.error, r.ratio, r.order
                );
            }
            let failed = table.rows.iter().find_map(|r| match &r.status {
                RunStatus::Truncated { .. } => Some(r.status.clone()),
                RunStatus::Completed => None,
            });
            Ok(failed.unwrap_or(RunStatus::Completed))
        }
    }
}

fn report(out: &Path, steps: usize) {
    eprintln!("{steps} steps, output in {}", out.display());
}
